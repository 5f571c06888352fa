#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "logtriage/labels.hpp"

namespace logtriage {

struct LogRecord {
  std::string id;
  std::string raw_text;  // file bytes, expected UTF-8
  std::size_t char_count = 0;  // scalar values after lossy UTF-8 decoding
  std::optional<Label> label;
  std::string source_path;

  std::size_t byte_size() const { return raw_text.size(); }
};

LogRecord make_record(std::string id, std::string text,
                      std::optional<Label> label = std::nullopt,
                      std::string source_path = {});

// Rule-based cleaner ("pre-processing unit").
struct PpuConfig {
  std::size_t max_word_len = 40;
  std::size_t max_line_len = 400;
  bool strip_numbers = true;
  // A log is kept if it matches any pattern (ECMAScript regex search).
  // Empty keeps everything.
  std::vector<std::string> category_patterns;

  void validate() const;
};

// Drops over-long lines whole, removes over-long tokens and, optionally,
// standalone integers. Whitespace-delimited tokens; a removed token takes its
// preceding separator with it. Lines left without tokens are dropped.
// Idempotent. Output is valid UTF-8.
std::string preprocess_log(std::string_view raw_text, const PpuConfig& cfg);

bool matches_category(std::string_view text, const PpuConfig& cfg);

// Keeps the records whose text matches cfg.category_patterns.
std::vector<LogRecord> select_categories(std::vector<LogRecord> records,
                                         const PpuConfig& cfg);

inline constexpr std::size_t kDefaultHardCapBytes = 300 * 1024;

struct SizeFilterReport {
  double q1 = 0;
  double q3 = 0;
  double iqr = 0;
  double lower_bound = 0;
  double upper_bound = 0;
  std::size_t hard_cap_bytes = kDefaultHardCapBytes;
  std::vector<std::string> kept_ids;
  std::vector<std::string> dropped_ids;

  nlohmann::json to_json() const;
};

// Linear-interpolation quantile on sorted values (h = (n-1)p).
double interpolated_quantile(std::span<const double> sorted, double p);

// Tukey fences on char_count plus a byte-size cap. Ids are reported in input
// order.
SizeFilterReport tukey_filter(std::span<const LogRecord> records,
                              std::size_t hard_cap_bytes = kDefaultHardCapBytes);

std::vector<LogRecord> apply_filter(std::vector<LogRecord> records,
                                    const SizeFilterReport& report);

struct HistogramBin {
  double lo = 0;
  double hi = 0;
  std::size_t count = 0;
};

std::vector<HistogramBin> size_histogram(std::span<const LogRecord> records,
                                         std::size_t n_bins);

// Concatenates texts in id order separated by a single '\n'.
std::string build_training_corpus(std::span<const LogRecord> records);

// Dataset manifest: CSV with header "path,label".
struct ManifestRow {
  std::string path;
  Label label = Label::kPass;
};

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    std::span<const ManifestRow> rows);

struct ScanWarning {
  std::string path;
  std::string message;
};

struct ScanResult {
  std::vector<LogRecord> records;  // sorted by id
  std::vector<ScanWarning> warnings;
};

// One record per regular file under root (recursive; hidden files and the
// manifest itself are skipped). Record id = path relative to root with '/'
// separators. Manifest paths are relative to root.
ScanResult scan_corpus(const std::filesystem::path& root,
                       const std::optional<std::filesystem::path>& manifest = {});

// Reads the records listed in a manifest (and only those).
ScanResult load_manifest_records(const std::filesystem::path& root,
                                 const std::filesystem::path& manifest);

}  // namespace logtriage
