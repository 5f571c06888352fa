#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "logtriage/classifier.hpp"
#include "logtriage/corpus.hpp"
#include "logtriage/doc_embed.hpp"
#include "logtriage/lm.hpp"
#include "logtriage/synlog.hpp"

namespace logtriage {

struct EmbedSettings {
  std::string provider = "mock";  // mock | http
  std::string endpoint;
  std::string auth_token;
  double timeout_seconds = 30;
  std::size_t dim = 64;
  std::size_t context = 512;
  std::size_t overlap = 0;  // 0 = context / 2
  PoolingMode mode = PoolingMode::kMaskAware;
  std::size_t concurrency = 1;
  EmbedHeadConfig head;

  std::size_t effective_overlap() const { return overlap ? overlap : context / 2; }
};

// Everything a CLI run can be configured with. Loaded from an INI file with
// sections [global] [ppu] [lm] [arch] [train] [synth] [embed] [sweep]; every
// key can be overridden on the command line as --section.key=value.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  PpuConfig ppu;
  std::size_t hard_cap_bytes = kDefaultHardCapBytes;
  LmConfig lm;
  ArchConfig arch;
  TrainConfig train;
  double test_fraction = 0.3;
  SynConfig synth;
  EmbedSettings embed;
  std::vector<std::size_t> sweep_grid = {1000, 5000, 10000, 50000, 80000, 200000};

  // Throws UsageError naming "section.key" for unknown keys or bad values.
  void set(const std::string& section, const std::string& key, const std::string& value);
  // "section.key" form.
  void set(const std::string& dotted_key, const std::string& value);
  void load_ini(const std::filesystem::path& path);
  void validate() const;

  // Every accepted "section.key".
  static const std::vector<std::string>& known_keys();
};

}  // namespace logtriage
