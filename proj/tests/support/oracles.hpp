#pragma once

// Brute-force reference implementations, written independently of the
// library code they check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "logtriage/doc_embed.hpp"
#include "logtriage/labels.hpp"

namespace lt_test {

struct TukeyBounds {
  double q1, q3, lower, upper;
};

inline double type7_quantile(std::vector<double> xs, double p) {
  std::sort(xs.begin(), xs.end());
  const double h = (static_cast<double>(xs.size()) - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

inline TukeyBounds tukey_oracle(const std::vector<double>& sizes) {
  const double q1 = type7_quantile(sizes, 0.25);
  const double q3 = type7_quantile(sizes, 0.75);
  return {q1, q3, q1 - 1.5 * (q3 - q1), q3 + 1.5 * (q3 - q1)};
}

struct OracleScores {
  std::array<double, logtriage::kNumClasses> precision{}, recall{}, f1{};
  double accuracy = 0, f1_macro = 0, f1_micro = 0;
};

// Per-sample counting, no confusion matrix.
inline OracleScores metrics_oracle(const std::vector<logtriage::Label>& truth,
                                   const std::vector<logtriage::Label>& pred) {
  OracleScores s;
  double tp_all = 0, fp_all = 0, fn_all = 0, correct = 0;
  for (std::size_t c = 0; c < logtriage::kNumClasses; ++c) {
    const auto cls = logtriage::label_from_index(c);
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (pred[i] == cls && truth[i] == cls) tp += 1;
      if (pred[i] == cls && truth[i] != cls) fp += 1;
      if (pred[i] != cls && truth[i] == cls) fn += 1;
    }
    s.precision[c] = tp + fp > 0 ? tp / (tp + fp) : 0;
    s.recall[c] = tp + fn > 0 ? tp / (tp + fn) : 0;
    const double pr = s.precision[c] + s.recall[c];
    s.f1[c] = pr > 0 ? 2 * s.precision[c] * s.recall[c] / pr : 0;
    s.f1_macro += s.f1[c] / logtriage::kNumClasses;
    tp_all += tp;
    fp_all += fp;
    fn_all += fn;
  }
  for (std::size_t i = 0; i < truth.size(); ++i) correct += truth[i] == pred[i];
  s.accuracy = correct / static_cast<double>(truth.size());
  const double p = tp_all / (tp_all + fp_all), r = tp_all / (tp_all + fn_all);
  s.f1_micro = p + r > 0 ? 2 * p * r / (p + r) : 0;
  return s;
}

// Chunk starts by walking windows until one reaches the end of the document.
inline std::vector<std::size_t> chunk_starts_oracle(std::size_t len, std::size_t context,
                                                    std::size_t overlap) {
  std::vector<std::size_t> starts{0};
  while (starts.back() + context < len) starts.push_back(starts.back() + context - overlap);
  return starts;
}

// Materialises every padded chunk, embeds it, and averages per the pooling mode.
inline std::vector<double> embed_oracle(const std::vector<logtriage::TokenId>& tokens,
                                        const logtriage::EmbeddingProvider& provider,
                                        std::size_t context, std::size_t overlap,
                                        logtriage::PoolingMode mode) {
  const auto starts = chunk_starts_oracle(tokens.size(), context, overlap);
  const std::size_t d = provider.dim();
  const double m = static_cast<double>(starts.size());
  if (mode == logtriage::PoolingMode::kLiteral) {
    // E_g = (1/M)(1/l_c) sum_k sum_i TE_{k,i}
    std::vector<double> total(d, 0.0);
    for (auto s : starts) {
      std::vector<logtriage::TokenId> chunk(context, logtriage::CharVocab::kPadId);
      std::vector<std::uint8_t> mask(context, 0);
      for (std::size_t i = 0; i < context && s + i < tokens.size(); ++i) {
        chunk[i] = tokens[s + i];
        mask[i] = 1;
      }
      const auto te = provider.embed_chunk(chunk, mask);
      for (std::size_t i = 0; i < context; ++i) {
        for (std::size_t j = 0; j < d; ++j) total[j] += te(i, j);
      }
    }
    for (auto& v : total) v /= m * static_cast<double>(context);
    return total;
  }
  std::vector<double> out(d, 0.0);
  for (auto s : starts) {
    std::vector<logtriage::TokenId> chunk(context, logtriage::CharVocab::kPadId);
    std::vector<std::uint8_t> mask(context, 0);
    double real = 0;
    for (std::size_t i = 0; i < context && s + i < tokens.size(); ++i) {
      chunk[i] = tokens[s + i];
      mask[i] = 1;
      real += 1;
    }
    const auto te = provider.embed_chunk(chunk, mask);
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < context; ++i) {
      if (!mask[i]) continue;
      for (std::size_t j = 0; j < d; ++j) mean[j] += te(i, j);
    }
    for (std::size_t j = 0; j < d; ++j) out[j] += mean[j] / real / m;
  }
  return out;
}

}  // namespace lt_test
