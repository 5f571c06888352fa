#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "logtriage/labels.hpp"

namespace logtriage {

struct ClassScores {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  std::size_t support = 0;  // true-class count
};

struct Metrics {
  // confusion[true][predicted]
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> confusion{};
  std::array<ClassScores, kNumClasses> per_class{};
  double accuracy = 0;
  double f1_macro = 0;
  double f1_micro = 0;
  std::size_t total = 0;

  nlohmann::json to_json() const;
  // Header row "true\\pred,Pass,L0_L1,L2,L3", then one row per true class.
  std::string confusion_csv() const;
};

// Precision, recall and F1 from one-vs-rest counts; zero denominators give 0.
ClassScores scores_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);

Metrics metrics_from_confusion(
    const std::array<std::array<std::size_t, kNumClasses>, kNumClasses>& confusion);

// Throws UsageError on empty input or a length mismatch.
Metrics compute_metrics(std::span<const Label> truth, std::span<const Label> predicted);

void write_metrics(const Metrics& m, const std::filesystem::path& json_path,
                   const std::filesystem::path& csv_path);

}  // namespace logtriage
