#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "logtriage/nn/tensor.hpp"

namespace lt_test {

using logtriage::nn::BasicTensor;
using TensorD = BasicTensor<double>;

inline TensorD random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double scale = 1.0) {
  TensorD t(std::move(shape));
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// ||analytic - numeric|| / max(||analytic||, ||numeric||), numeric from
// central differences of `loss` while perturbing each entry of `x` in place.
inline double fd_relative_error(std::span<double> x, std::span<const double> analytic,
                                const std::function<double()>& loss, double eps = 1e-6) {
  double diff = 0, na = 0, nn = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = loss();
    x[i] = keep - eps;
    const double down = loss();
    x[i] = keep;
    const double numeric = (up - down) / (2 * eps);
    diff += (analytic[i] - numeric) * (analytic[i] - numeric);
    na += analytic[i] * analytic[i];
    nn += numeric * numeric;
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / denom;
}

// Same, restricted to a sample of at most `limit` entries (for large tensors).
inline double fd_relative_error_sampled(std::span<double> x, std::span<const double> analytic,
                                        const std::function<double()>& loss, std::size_t limit,
                                        std::mt19937_64& rng, double eps = 1e-6) {
  std::vector<std::size_t> idx(x.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(limit, idx.size()));
  std::vector<double> sub_a;
  std::vector<double*> refs;
  for (auto i : idx) {
    sub_a.push_back(analytic[i]);
    refs.push_back(&x[i]);
  }
  double diff = 0, na = 0, nn = 0;
  for (std::size_t n = 0; n < refs.size(); ++n) {
    double& v = *refs[n];
    const double keep = v;
    v = keep + eps;
    const double up = loss();
    v = keep - eps;
    const double down = loss();
    v = keep;
    const double numeric = (up - down) / (2 * eps);
    diff += (sub_a[n] - numeric) * (sub_a[n] - numeric);
    na += sub_a[n] * sub_a[n];
    nn += numeric * numeric;
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  return std::sqrt(diff) / denom;
}

}  // namespace lt_test
