#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "logtriage/corpus.hpp"
#include "logtriage/labels.hpp"
#include "logtriage/rng.hpp"

namespace logtriage {

// TM500-style synthetic logs: "C:" confirmation and "I:" indication blocks
// with randomised parameters. Defect logs carry a three-line signature
// block made of layer-specific indication keywords.
struct SynConfig {
  std::size_t n_samples = 3262;
  std::array<double, kNumClasses> class_probs = {0.62, 0.21, 0.12, 0.05};
  std::size_t mean_blocks_per_log = 30;
  std::size_t block_len_min = 30;
  std::size_t block_len_max = 120;
  double signature_strength = 0.9;
  // Chance that a log gets one stray symptom line from some signature.
  double noise_line_prob = 0.3;
  std::uint64_t seed = 0;

  void validate() const;
};

// The three keywords that make up a class signature; empty for Pass.
std::vector<std::string_view> signature_keywords(Label label);

// The class whose full signature appears in the text, if any.
std::optional<Label> detect_signature(std::string_view text);

std::string generate_log(Label label, const SynConfig& cfg, Rng& rng);

struct SynDataset {
  std::vector<std::string> texts;
  std::vector<Label> labels;
  std::vector<bool> has_signature;
};

// Labels are allocated by largest remainder over class_probs and shuffled,
// so class frequencies match the probabilities to within 1/n. Log i is drawn
// from its own stream derived from (seed, i).
SynDataset generate_corpus(const SynConfig& cfg);

// Writes syn_000001.log ... plus manifest.csv under out_dir.
std::vector<ManifestRow> generate_dataset(const SynConfig& cfg,
                                          const std::filesystem::path& out_dir);

}  // namespace logtriage
