#include "logtriage/nn/layers.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace logtriage::nn {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMat<S>>;
template <typename S>
using StridedConstMap = Eigen::Map<const RowMat<S>, Eigen::Unaligned, Eigen::OuterStride<>>;
template <typename S>
using RowVec = Eigen::Matrix<S, 1, Eigen::Dynamic>;

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

template <typename S>
S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

// Copies x [T, C] into a zero buffer with `pad` rows on each side.
template <typename S>
std::vector<S> pad_rows(const S* x, std::size_t rows, std::size_t cols, std::size_t pad) {
  std::vector<S> out((rows + 2 * pad) * cols, S(0));
  std::copy(x, x + rows * cols, out.begin() + static_cast<std::ptrdiff_t>(pad * cols));
  return out;
}

}  // namespace

// ---- Convolution -----------------------------------------------------------

template <typename S>
BasicTensor<S> conv1d(const BasicTensor<S>& input, const BasicTensor<S>& kernels,
                      const BasicTensor<S>& bias) {
  require(input.rank() == 2 && kernels.rank() == 3 && bias.rank() == 1,
          "conv1d: expected input [T,C_in], kernels [K,C_in,C_out], bias [C_out]");
  const std::size_t steps = input.dim(0);
  const std::size_t c_in = input.dim(1);
  const std::size_t k = kernels.dim(0);
  const std::size_t c_out = kernels.dim(2);
  require(k % 2 == 1, "conv1d: kernel size must be odd");
  require(kernels.dim(1) == c_in, "conv1d: kernel input channels " +
                                      std::to_string(kernels.dim(1)) + " != input channels " +
                                      std::to_string(c_in));
  require(bias.dim(0) == c_out, "conv1d: bias length mismatch");

  BasicTensor<S> out({steps, c_out});
  if (steps == 0) return out;
  const std::size_t pad = (k - 1) / 2;
  const auto padded = pad_rows(input.data(), steps, c_in, pad);
  // Row t of the patch matrix is rows t..t+K-1 of the padded input, which are
  // contiguous in memory: an im2col view without copying.
  StridedConstMap<S> patches(padded.data(), static_cast<Eigen::Index>(steps),
                             static_cast<Eigen::Index>(k * c_in),
                             Eigen::OuterStride<>(static_cast<Eigen::Index>(c_in)));
  ConstMatMap<S> w(kernels.data(), static_cast<Eigen::Index>(k * c_in),
                   static_cast<Eigen::Index>(c_out));
  MatMap<S> y(out.data(), static_cast<Eigen::Index>(steps), static_cast<Eigen::Index>(c_out));
  y.noalias() = patches * w;
  Eigen::Map<const RowVec<S>> b(bias.data(), static_cast<Eigen::Index>(c_out));
  y.rowwise() += b;
  return out;
}

template <typename S>
BasicTensor<S> conv1d_backward(const BasicTensor<S>& input, const BasicTensor<S>& kernels,
                               const BasicTensor<S>& grad_output,
                               BasicTensor<S>& kernels_grad, BasicTensor<S>& bias_grad,
                               bool want_input_grad) {
  const std::size_t steps = input.dim(0);
  const std::size_t c_in = input.dim(1);
  const std::size_t k = kernels.dim(0);
  const std::size_t c_out = kernels.dim(2);
  require(grad_output.rank() == 2 && grad_output.dim(0) == steps &&
              grad_output.dim(1) == c_out,
          "conv1d_backward: grad_output shape mismatch");
  require(kernels_grad.shape() == kernels.shape() && bias_grad.size() == c_out,
          "conv1d_backward: gradient buffer shape mismatch");
  BasicTensor<S> grad_input;
  if (want_input_grad) grad_input = BasicTensor<S>({steps, c_in});
  if (steps == 0) return grad_input;

  const std::size_t pad = (k - 1) / 2;
  const auto kn = static_cast<Eigen::Index>(k);
  const auto ci = static_cast<Eigen::Index>(c_in);
  const auto co = static_cast<Eigen::Index>(c_out);
  const auto tn = static_cast<Eigen::Index>(steps);

  ConstMatMap<S> dy(grad_output.data(), tn, co);
  {
    const auto padded = pad_rows(input.data(), steps, c_in, pad);
    StridedConstMap<S> patches(padded.data(), tn, kn * ci, Eigen::OuterStride<>(ci));
    MatMap<S> dw(kernels_grad.data(), kn * ci, co);
    dw.noalias() += patches.transpose() * dy;
  }
  Eigen::Map<RowVec<S>> db(bias_grad.data(), co);
  db += dy.colwise().sum();

  if (want_input_grad) {
    // dx is a same-padded correlation of dy with the flipped, transposed kernel.
    std::vector<S> flipped(k * c_out * c_in);
    for (std::size_t kk = 0; kk < k; ++kk) {
      for (std::size_t o = 0; o < c_out; ++o) {
        for (std::size_t c = 0; c < c_in; ++c) {
          flipped[(kk * c_out + o) * c_in + c] = kernels((k - 1 - kk), c, o);
        }
      }
    }
    const auto dy_padded = pad_rows(grad_output.data(), steps, c_out, pad);
    StridedConstMap<S> patches(dy_padded.data(), tn, kn * co, Eigen::OuterStride<>(co));
    ConstMatMap<S> wf(flipped.data(), kn * co, ci);
    MatMap<S> dx(grad_input.data(), tn, ci);
    dx.noalias() = patches * wf;
  }
  return grad_input;
}

// ---- Embedding -------------------------------------------------------------

template <typename S>
BasicTensor<S> embedding_lookup(std::span<const std::int32_t> ids,
                                const BasicTensor<S>& table) {
  require(table.rank() == 2, "embedding_lookup: table must be [V, D]");
  const std::size_t vocab = table.dim(0);
  const std::size_t d = table.dim(1);
  BasicTensor<S> out({ids.size(), d});
  for (std::size_t t = 0; t < ids.size(); ++t) {
    const auto id = ids[t];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range("embedding_lookup: id " + std::to_string(id) +
                              " outside table of " + std::to_string(vocab) + " rows");
    }
    std::copy_n(table.data() + static_cast<std::size_t>(id) * d, d, out.data() + t * d);
  }
  return out;
}

template <typename S>
void embedding_backward(std::span<const std::int32_t> ids, const BasicTensor<S>& grad_output,
                        BasicTensor<S>& table_grad) {
  const std::size_t d = table_grad.dim(1);
  require(grad_output.size() == ids.size() * d, "embedding_backward: shape mismatch");
  for (std::size_t t = 0; t < ids.size(); ++t) {
    S* row = table_grad.data() + static_cast<std::size_t>(ids[t]) * d;
    const S* g = grad_output.data() + t * d;
    for (std::size_t j = 0; j < d; ++j) row[j] += g[j];
  }
}

// ---- Dense -----------------------------------------------------------------

template <typename S>
BasicTensor<S> dense(const BasicTensor<S>& input, const BasicTensor<S>& weight,
                     const BasicTensor<S>& bias) {
  require(weight.rank() == 2 && input.rank() >= 1, "dense: weight must be [D_in, D_out]");
  const std::size_t d_in = weight.dim(0);
  const std::size_t d_out = weight.dim(1);
  require(input.shape().back() == d_in,
          "dense: input last axis " + std::to_string(input.shape().back()) +
              " != weight rows " + std::to_string(d_in));
  require(bias.size() == d_out, "dense: bias length mismatch");
  const std::size_t rows = input.size() / d_in;
  auto shape = input.shape();
  shape.back() = d_out;
  BasicTensor<S> out(shape);
  ConstMatMap<S> x(input.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d_in));
  ConstMatMap<S> w(weight.data(), static_cast<Eigen::Index>(d_in), static_cast<Eigen::Index>(d_out));
  MatMap<S> y(out.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d_out));
  y.noalias() = x * w;
  y.rowwise() += Eigen::Map<const RowVec<S>>(bias.data(), static_cast<Eigen::Index>(d_out));
  return out;
}

template <typename S>
BasicTensor<S> dense_backward(const BasicTensor<S>& input, const BasicTensor<S>& weight,
                              const BasicTensor<S>& grad_output, BasicTensor<S>& weight_grad,
                              BasicTensor<S>& bias_grad) {
  const auto d_in = static_cast<Eigen::Index>(weight.dim(0));
  const auto d_out = static_cast<Eigen::Index>(weight.dim(1));
  const auto rows = static_cast<Eigen::Index>(input.size() / weight.dim(0));
  require(static_cast<Eigen::Index>(grad_output.size()) == rows * d_out,
          "dense_backward: grad_output shape mismatch");
  ConstMatMap<S> x(input.data(), rows, d_in);
  ConstMatMap<S> w(weight.data(), d_in, d_out);
  ConstMatMap<S> dy(grad_output.data(), rows, d_out);
  MatMap<S>(weight_grad.data(), d_in, d_out).noalias() += x.transpose() * dy;
  Eigen::Map<RowVec<S>>(bias_grad.data(), d_out) += dy.colwise().sum();
  BasicTensor<S> dx(input.shape());
  MatMap<S>(dx.data(), rows, d_in).noalias() = dy * w.transpose();
  return dx;
}

// ---- Activations and pooling ----------------------------------------------

template <typename S>
void relu_inplace(BasicTensor<S>& x) {
  for (auto& v : x.values()) v = v > S(0) ? v : S(0);
}

template <typename S>
void relu_backward_inplace(const BasicTensor<S>& output, BasicTensor<S>& grad) {
  require(output.size() == grad.size(), "relu_backward: shape mismatch");
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!(output[i] > S(0))) grad[i] = S(0);
  }
}

template <typename S>
MaxPoolResult<S> global_max_pool1d(const BasicTensor<S>& input) {
  require(input.rank() == 2, "global_max_pool1d: expected [T, C]");
  const std::size_t steps = input.dim(0);
  const std::size_t channels = input.dim(1);
  require(steps >= 1, "global_max_pool1d: empty sequence");
  MaxPoolResult<S> r;
  r.steps = steps;
  r.output = BasicTensor<S>({channels});
  r.argmax.assign(channels, 0);
  std::copy_n(input.data(), channels, r.output.data());
  for (std::size_t t = 1; t < steps; ++t) {
    const S* row = input.data() + t * channels;
    for (std::size_t c = 0; c < channels; ++c) {
      if (row[c] > r.output[c]) {
        r.output[c] = row[c];
        r.argmax[c] = t;
      }
    }
  }
  return r;
}

template <typename S>
BasicTensor<S> global_max_pool1d_backward(const MaxPoolResult<S>& forward,
                                          std::span<const S> grad_output) {
  const std::size_t channels = forward.argmax.size();
  require(grad_output.size() == channels, "global_max_pool1d_backward: shape mismatch");
  BasicTensor<S> dx({forward.steps, channels});
  for (std::size_t c = 0; c < channels; ++c) dx(forward.argmax[c], c) = grad_output[c];
  return dx;
}

// ---- Loss ------------------------------------------------------------------

template <typename S>
BasicTensor<S> softmax(const BasicTensor<S>& logits) {
  require(logits.rank() == 2, "softmax: expected [B, C]");
  const std::size_t rows = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  BasicTensor<S> out(logits.shape());
  for (std::size_t b = 0; b < rows; ++b) {
    const S* x = logits.data() + b * classes;
    S* p = out.data() + b * classes;
    const S mx = *std::max_element(x, x + classes);
    double sum = 0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(x[c] - mx));
    for (std::size_t c = 0; c < classes; ++c) {
      p[c] = static_cast<S>(std::exp(static_cast<double>(x[c] - mx)) / sum);
    }
  }
  return out;
}

template <typename S>
LossResult<S> softmax_cross_entropy(const BasicTensor<S>& logits,
                                    std::span<const std::int32_t> targets,
                                    std::span<const S> class_weights) {
  require(logits.rank() == 2, "softmax_cross_entropy: expected logits [B, C]");
  const std::size_t rows = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  require(targets.size() == rows, "softmax_cross_entropy: one target per row required");
  require(class_weights.empty() || class_weights.size() == classes,
          "softmax_cross_entropy: class_weights length mismatch");
  LossResult<S> r;
  r.grad = BasicTensor<S>(logits.shape());
  if (rows == 0) return r;
  const double inv_rows = 1.0 / static_cast<double>(rows);
  double total = 0;
  for (std::size_t b = 0; b < rows; ++b) {
    const auto y = targets[b];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw std::out_of_range("softmax_cross_entropy: target " + std::to_string(y) +
                              " outside [0, " + std::to_string(classes) + ")");
    }
    const double w = class_weights.empty() ? 1.0 : static_cast<double>(class_weights[y]);
    const S* x = logits.data() + b * classes;
    const double mx = static_cast<double>(*std::max_element(x, x + classes));
    double sum = 0;
    for (std::size_t c = 0; c < classes; ++c) sum += std::exp(static_cast<double>(x[c]) - mx);
    const double log_sum = std::log(sum);
    total += w * (log_sum - (static_cast<double>(x[y]) - mx));
    S* g = r.grad.data() + b * classes;
    for (std::size_t c = 0; c < classes; ++c) {
      const double p = std::exp(static_cast<double>(x[c]) - mx - log_sum);
      const double onehot = static_cast<std::size_t>(y) == c ? 1.0 : 0.0;
      g[c] = static_cast<S>(w * (p - onehot) * inv_rows);
    }
  }
  r.loss = total * inv_rows;
  return r;
}

// ---- LSTM ------------------------------------------------------------------

template <typename S>
Lstm<S>::Lstm(const std::string& name, std::size_t input_dim, std::size_t units)
    : kernel(name + ".kernel", {input_dim, 4 * units}),
      recurrent(name + ".recurrent", {units, 4 * units}),
      bias(name + ".bias", {4 * units}),
      input_dim_(input_dim),
      units_(units) {
  require(input_dim > 0 && units > 0, "Lstm: dimensions must be positive");
}

template <typename S>
void Lstm<S>::init(Rng& rng) {
  init_glorot_uniform(kernel.value, input_dim_, 4 * units_, rng);
  // Orthogonal recurrent kernel: rows of a Q factor of a Gaussian matrix.
  const auto h = static_cast<Eigen::Index>(units_);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(4 * h, h);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(4 * h, h);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(h).template triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < h; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  for (Eigen::Index i = 0; i < h; ++i) {
    for (Eigen::Index j = 0; j < 4 * h; ++j) {
      recurrent.value(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
          static_cast<S>(q(j, i));
    }
  }
  bias.value.set_zero();
  for (std::size_t j = units_; j < 2 * units_; ++j) bias.value[j] = S(1);
}

template <typename S>
BasicTensor<S> Lstm<S>::forward(const BasicTensor<S>& input, Cache* cache) const {
  require(input.rank() == 3 && input.dim(2) == input_dim_,
          "Lstm::forward: expected input [B, T, " + std::to_string(input_dim_) + "], got " +
              input.shape_string());
  const std::size_t batch = input.dim(0);
  const std::size_t steps = input.dim(1);
  const std::size_t h = units_;
  const std::size_t g4 = 4 * h;
  const auto hb = static_cast<Eigen::Index>(h);
  const auto g4i = static_cast<Eigen::Index>(g4);

  // Input projection for every (b, t) row at once.
  RowMat<S> xw(static_cast<Eigen::Index>(batch * steps), g4i);
  xw.noalias() = ConstMatMap<S>(input.data(), static_cast<Eigen::Index>(batch * steps),
                                static_cast<Eigen::Index>(input_dim_)) *
                 ConstMatMap<S>(kernel.value.data(), static_cast<Eigen::Index>(input_dim_), g4i);
  xw.rowwise() += Eigen::Map<const RowVec<S>>(bias.value.data(), g4i);
  ConstMatMap<S> u(recurrent.value.data(), hb, g4i);

  std::vector<S> gates(steps * batch * g4);
  std::vector<S> cells(steps * batch * h);
  std::vector<S> hidden(steps * batch * h);
  RowMat<S> h_prev = RowMat<S>::Zero(static_cast<Eigen::Index>(batch), hb);
  RowMat<S> c_prev = RowMat<S>::Zero(static_cast<Eigen::Index>(batch), hb);
  RowMat<S> a(static_cast<Eigen::Index>(batch), g4i);

  for (std::size_t t = 0; t < steps; ++t) {
    a.noalias() = h_prev * u;
    for (std::size_t b = 0; b < batch; ++b) {
      a.row(static_cast<Eigen::Index>(b)) += xw.row(static_cast<Eigen::Index>(b * steps + t));
    }
    S* gt = gates.data() + t * batch * g4;
    S* ct = cells.data() + t * batch * h;
    S* ht = hidden.data() + t * batch * h;
    for (std::size_t b = 0; b < batch; ++b) {
      const auto bi = static_cast<Eigen::Index>(b);
      S* gb = gt + b * g4;
      for (std::size_t j = 0; j < h; ++j) {
        const auto ji = static_cast<Eigen::Index>(j);
        const S i_gate = sigmoid(a(bi, ji));
        const S f_gate = sigmoid(a(bi, ji + hb));
        const S g_cand = std::tanh(a(bi, ji + 2 * hb));
        const S o_gate = sigmoid(a(bi, ji + 3 * hb));
        const S c = f_gate * c_prev(bi, ji) + i_gate * g_cand;
        const S hv = o_gate * std::tanh(c);
        gb[j] = i_gate;
        gb[j + h] = f_gate;
        gb[j + 2 * h] = g_cand;
        gb[j + 3 * h] = o_gate;
        ct[b * h + j] = c;
        ht[b * h + j] = hv;
        c_prev(bi, ji) = c;
        h_prev(bi, ji) = hv;
      }
    }
  }

  BasicTensor<S> out({batch, steps, h});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy_n(hidden.data() + (t * batch + b) * h, h, out.data() + (b * steps + t) * h);
    }
  }
  if (cache) {
    cache->batch = batch;
    cache->steps = steps;
    cache->input = input;
    cache->gates = std::move(gates);
    cache->cells = std::move(cells);
    cache->hidden = std::move(hidden);
  }
  return out;
}

template <typename S>
BasicTensor<S> Lstm<S>::backward(const Cache& cache, const BasicTensor<S>& grad_hidden) {
  const std::size_t batch = cache.batch;
  const std::size_t steps = cache.steps;
  const std::size_t h = units_;
  const std::size_t g4 = 4 * h;
  const auto hb = static_cast<Eigen::Index>(h);
  const auto g4i = static_cast<Eigen::Index>(g4);
  require(grad_hidden.rank() == 3 && grad_hidden.dim(0) == batch &&
              grad_hidden.dim(1) == steps && grad_hidden.dim(2) == h,
          "Lstm::backward: grad shape mismatch");

  // Pre-activation gate gradients laid out like the input rows (b * T + t).
  RowMat<S> da(static_cast<Eigen::Index>(batch * steps), g4i);
  RowMat<S> dh_next = RowMat<S>::Zero(static_cast<Eigen::Index>(batch), hb);
  std::vector<S> dc_next(batch * h, S(0));
  RowMat<S> da_t(static_cast<Eigen::Index>(batch), g4i);
  ConstMatMap<S> u(recurrent.value.data(), hb, g4i);
  MatMap<S> du(recurrent.grad.data(), hb, g4i);

  for (std::size_t tt = steps; tt-- > 0;) {
    const S* gt = cache.gates.data() + tt * batch * g4;
    const S* ct = cache.cells.data() + tt * batch * h;
    const S* c_before = tt > 0 ? cache.cells.data() + (tt - 1) * batch * h : nullptr;
    for (std::size_t b = 0; b < batch; ++b) {
      const auto bi = static_cast<Eigen::Index>(b);
      const S* gb = gt + b * g4;
      for (std::size_t j = 0; j < h; ++j) {
        const auto ji = static_cast<Eigen::Index>(j);
        const S i_gate = gb[j];
        const S f_gate = gb[j + h];
        const S g_cand = gb[j + 2 * h];
        const S o_gate = gb[j + 3 * h];
        const S c = ct[b * h + j];
        const S c_prev = c_before ? c_before[b * h + j] : S(0);
        const S tanh_c = std::tanh(c);
        const S dh = grad_hidden(b, tt, j) + dh_next(bi, ji);
        const S dc = dh * o_gate * (S(1) - tanh_c * tanh_c) + dc_next[b * h + j];
        const S d_o = dh * tanh_c;
        const S d_i = dc * g_cand;
        const S d_g = dc * i_gate;
        const S d_f = dc * c_prev;
        dc_next[b * h + j] = dc * f_gate;
        da_t(bi, ji) = d_i * i_gate * (S(1) - i_gate);
        da_t(bi, ji + hb) = d_f * f_gate * (S(1) - f_gate);
        da_t(bi, ji + 2 * hb) = d_g * (S(1) - g_cand * g_cand);
        da_t(bi, ji + 3 * hb) = d_o * o_gate * (S(1) - o_gate);
      }
      da.row(static_cast<Eigen::Index>(b * steps + tt)) = da_t.row(bi);
    }
    if (tt > 0) {
      ConstMatMap<S> h_prev(cache.hidden.data() + (tt - 1) * batch * h,
                            static_cast<Eigen::Index>(batch), hb);
      du.noalias() += h_prev.transpose() * da_t;
    }
    dh_next.noalias() = da_t * u.transpose();
  }

  const auto rows = static_cast<Eigen::Index>(batch * steps);
  const auto d = static_cast<Eigen::Index>(input_dim_);
  ConstMatMap<S> x(cache.input.data(), rows, d);
  MatMap<S>(kernel.grad.data(), d, g4i).noalias() += x.transpose() * da;
  Eigen::Map<RowVec<S>>(bias.grad.data(), g4i) += da.colwise().sum();
  BasicTensor<S> dx({batch, steps, input_dim_});
  MatMap<S>(dx.data(), rows, d).noalias() =
      da * ConstMatMap<S>(kernel.value.data(), d, g4i).transpose();
  return dx;
}

template <typename S>
BasicTensor<S> reverse_time(const BasicTensor<S>& x) {
  const std::size_t batch = x.dim(0);
  const std::size_t steps = x.dim(1);
  const std::size_t d = x.dim(2);
  BasicTensor<S> out(x.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t t = 0; t < steps; ++t) {
      std::copy_n(x.data() + (b * steps + t) * d, d,
                  out.data() + (b * steps + (steps - 1 - t)) * d);
    }
  }
  return out;
}

template <typename S>
BiLstm<S>::BiLstm(const std::string& name, std::size_t input_dim, std::size_t units)
    : fwd(name + ".forward", input_dim, units), bwd(name + ".backward", input_dim, units) {}

template <typename S>
void BiLstm<S>::init(Rng& rng) {
  fwd.init(rng);
  bwd.init(rng);
}

template <typename S>
std::vector<Param<S>*> BiLstm<S>::params() {
  auto p = fwd.params();
  auto q = bwd.params();
  p.insert(p.end(), q.begin(), q.end());
  return p;
}

template <typename S>
BasicTensor<S> BiLstm<S>::forward(const BasicTensor<S>& input, Cache* cache) const {
  const auto hf = fwd.forward(input, cache ? &cache->forward : nullptr);
  const auto hr = reverse_time(bwd.forward(reverse_time(input), cache ? &cache->backward : nullptr));
  const std::size_t batch = input.dim(0);
  const std::size_t steps = input.dim(1);
  const std::size_t h = fwd.units();
  BasicTensor<S> out({batch, steps, 2 * h});
  for (std::size_t r = 0; r < batch * steps; ++r) {
    std::copy_n(hf.data() + r * h, h, out.data() + r * 2 * h);
    std::copy_n(hr.data() + r * h, h, out.data() + r * 2 * h + h);
  }
  return out;
}

template <typename S>
BasicTensor<S> BiLstm<S>::backward(const Cache& cache, const BasicTensor<S>& grad_output) {
  const std::size_t batch = grad_output.dim(0);
  const std::size_t steps = grad_output.dim(1);
  const std::size_t h = fwd.units();
  BasicTensor<S> gf({batch, steps, h});
  BasicTensor<S> gr({batch, steps, h});
  for (std::size_t r = 0; r < batch * steps; ++r) {
    std::copy_n(grad_output.data() + r * 2 * h, h, gf.data() + r * h);
    std::copy_n(grad_output.data() + r * 2 * h + h, h, gr.data() + r * h);
  }
  auto dx = fwd.backward(cache.forward, gf);
  const auto dx_rev = reverse_time(bwd.backward(cache.backward, reverse_time(gr)));
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dx_rev[i];
  return dx;
}

template <typename S>
BasicTensor<S> lstm_forward(const BasicTensor<S>& inputs, const Lstm<S>& forward,
                            const Lstm<S>* backward, bool return_sequences) {
  require(inputs.rank() == 2, "lstm_forward: expected inputs [T, D]");
  const std::size_t steps = inputs.dim(0);
  BasicTensor<S> x = inputs;
  x.reshape({1, steps, inputs.dim(1)});
  const std::size_t h = forward.units();
  const std::size_t width = backward ? 2 * h : h;
  BasicTensor<S> seq({steps, width});
  const auto hf = forward.forward(x);
  for (std::size_t t = 0; t < steps; ++t) std::copy_n(hf.data() + t * h, h, seq.data() + t * width);
  if (backward) {
    require(backward->units() == h, "lstm_forward: direction widths differ");
    const auto hr = reverse_time(backward->forward(reverse_time(x)));
    for (std::size_t t = 0; t < steps; ++t) {
      std::copy_n(hr.data() + t * h, h, seq.data() + t * width + h);
    }
  }
  if (return_sequences) return seq;
  BasicTensor<S> last({width});
  if (steps == 0) return last;
  std::copy_n(seq.data() + (steps - 1) * width, h, last.data());
  if (backward) std::copy_n(seq.data() + h, h, last.data() + h);
  return last;
}

// ---- Initialisers ----------------------------------------------------------

template <typename S>
void init_uniform(BasicTensor<S>& t, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.values()) v = static_cast<S>(dist(rng));
}

template <typename S>
void init_glorot_uniform(BasicTensor<S>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  init_uniform(t, -limit, limit, rng);
}

// ---- Optimiser -------------------------------------------------------------

template <typename S>
void adam_step(std::span<Param<S>* const> params, AdamState<S>& state, double lr, double l2) {
  if (state.m.size() != params.size()) {
    state.m.clear();
    state.v.clear();
    for (const auto* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
    state.step = 0;
  }
  ++state.step;
  const double b1 = state.beta1;
  const double b2 = state.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Param<S>& p = *params[k];
    require(p.grad.size() == p.value.size() && state.m[k].size() == p.value.size(),
            "adam_step: shape mismatch for " + p.name);
    const double decay = p.l2 ? 2.0 * l2 : 0.0;
    S* value = p.value.data();
    const S* grad = p.grad.data();
    S* m = state.m[k].data();
    S* v = state.v[k].data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = static_cast<double>(grad[i]) + decay * static_cast<double>(value[i]);
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * g;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * g * g;
      m[i] = static_cast<S>(mi);
      v[i] = static_cast<S>(vi);
      const double update = lr * (mi / corr1) / (std::sqrt(vi / corr2) + state.epsilon);
      value[i] = static_cast<S>(static_cast<double>(value[i]) - update);
    }
  }
}

template <typename S>
void zero_grads(std::span<Param<S>* const> params) {
  for (auto* p : params) p->grad.set_zero();
}

// ---- Instantiations --------------------------------------------------------

#define LOGTRIAGE_INSTANTIATE(S)                                                          \
  template BasicTensor<S> conv1d(const BasicTensor<S>&, const BasicTensor<S>&,            \
                                 const BasicTensor<S>&);                                  \
  template BasicTensor<S> conv1d_backward(const BasicTensor<S>&, const BasicTensor<S>&,   \
                                          const BasicTensor<S>&, BasicTensor<S>&,         \
                                          BasicTensor<S>&, bool);                         \
  template BasicTensor<S> embedding_lookup(std::span<const std::int32_t>,                 \
                                           const BasicTensor<S>&);                        \
  template void embedding_backward(std::span<const std::int32_t>, const BasicTensor<S>&,  \
                                   BasicTensor<S>&);                                      \
  template BasicTensor<S> dense(const BasicTensor<S>&, const BasicTensor<S>&,             \
                                const BasicTensor<S>&);                                   \
  template BasicTensor<S> dense_backward(const BasicTensor<S>&, const BasicTensor<S>&,    \
                                         const BasicTensor<S>&, BasicTensor<S>&,          \
                                         BasicTensor<S>&);                                \
  template void relu_inplace(BasicTensor<S>&);                                            \
  template void relu_backward_inplace(const BasicTensor<S>&, BasicTensor<S>&);            \
  template MaxPoolResult<S> global_max_pool1d(const BasicTensor<S>&);                     \
  template BasicTensor<S> global_max_pool1d_backward(const MaxPoolResult<S>&,             \
                                                     std::span<const S>);                 \
  template BasicTensor<S> softmax(const BasicTensor<S>&);                                 \
  template LossResult<S> softmax_cross_entropy(const BasicTensor<S>&,                     \
                                               std::span<const std::int32_t>,             \
                                               std::span<const S>);                       \
  template class Lstm<S>;                                                                 \
  template class BiLstm<S>;                                                               \
  template BasicTensor<S> reverse_time(const BasicTensor<S>&);                            \
  template BasicTensor<S> lstm_forward(const BasicTensor<S>&, const Lstm<S>&,             \
                                       const Lstm<S>*, bool);                             \
  template void init_uniform(BasicTensor<S>&, double, double, Rng&);                      \
  template void init_glorot_uniform(BasicTensor<S>&, std::size_t, std::size_t, Rng&);     \
  template void adam_step(std::span<Param<S>* const>, AdamState<S>&, double, double);     \
  template void zero_grads(std::span<Param<S>* const>);

LOGTRIAGE_INSTANTIATE(float)
LOGTRIAGE_INSTANTIATE(double)

#undef LOGTRIAGE_INSTANTIATE

}  // namespace logtriage::nn
