#include "logtriage/metrics.hpp"

#include <fstream>
#include <sstream>

namespace logtriage {

ClassScores scores_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  ClassScores s;
  s.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  s.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  const double denom = s.precision + s.recall;
  s.f1 = denom > 0 ? 2.0 * s.precision * s.recall / denom : 0.0;
  s.support = tp + fn;
  return s;
}

Metrics metrics_from_confusion(
    const std::array<std::array<std::size_t, kNumClasses>, kNumClasses>& confusion) {
  Metrics m;
  m.confusion = confusion;
  std::size_t trace = 0;
  std::size_t tp_all = 0;
  std::size_t fp_all = 0;
  std::size_t fn_all = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::size_t fp = 0;
    std::size_t fn = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      m.total += confusion[c][k];
      if (k != c) {
        fp += confusion[k][c];
        fn += confusion[c][k];
      }
    }
    const std::size_t tp = confusion[c][c];
    trace += tp;
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
    m.per_class[c] = scores_from_counts(tp, fp, fn);
    m.f1_macro += m.per_class[c].f1;
  }
  m.f1_macro /= static_cast<double>(kNumClasses);
  m.accuracy = m.total ? static_cast<double>(trace) / static_cast<double>(m.total) : 0.0;
  m.f1_micro = scores_from_counts(tp_all, fp_all, fn_all).f1;
  return m;
}

Metrics compute_metrics(std::span<const Label> truth, std::span<const Label> predicted) {
  if (truth.empty()) throw UsageError("cannot evaluate an empty test set");
  if (truth.size() != predicted.size()) {
    throw UsageError("label count " + std::to_string(truth.size()) +
                     " != prediction count " + std::to_string(predicted.size()));
  }
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> confusion{};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++confusion[label_index(truth[i])][label_index(predicted[i])];
  }
  return metrics_from_confusion(confusion);
}

nlohmann::json Metrics::to_json() const {
  nlohmann::json j;
  j["confusion"] = confusion;
  j["accuracy"] = accuracy;
  j["f1_macro"] = f1_macro;
  j["f1_micro"] = f1_micro;
  j["total"] = total;
  nlohmann::json pc = nlohmann::json::object();
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    pc[std::string(label_name(label_from_index(c)))] = {
        {"precision", per_class[c].precision},
        {"recall", per_class[c].recall},
        {"f1", per_class[c].f1},
        {"support", per_class[c].support}};
  }
  j["per_class"] = pc;
  return j;
}

std::string Metrics::confusion_csv() const {
  std::ostringstream out;
  out << "true\\pred";
  for (auto l : kAllLabels) out << ',' << label_name(l);
  out << '\n';
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    out << label_name(label_from_index(r));
    for (std::size_t c = 0; c < kNumClasses; ++c) out << ',' << confusion[r][c];
    out << '\n';
  }
  return out.str();
}

void write_metrics(const Metrics& m, const std::filesystem::path& json_path,
                   const std::filesystem::path& csv_path) {
  std::ofstream j(json_path);
  if (!j) throw UsageError("cannot write " + json_path.string());
  j << m.to_json().dump(2) << '\n';
  std::ofstream c(csv_path);
  if (!c) throw UsageError("cannot write " + csv_path.string());
  c << m.confusion_csv();
}

}  // namespace logtriage
