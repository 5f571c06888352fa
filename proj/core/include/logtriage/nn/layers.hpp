#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "logtriage/nn/tensor.hpp"
#include "logtriage/rng.hpp"

// Layer kernels with hand-written backward passes. Forward functions are pure;
// backward functions accumulate (+=) into parameter gradients and return the
// gradient with respect to the layer input.
//
// Explicitly instantiated for float and double.
namespace logtriage::nn {

// ---- Convolution -----------------------------------------------------------

// input [T, C_in], kernels [K, C_in, C_out], bias [C_out] -> [T, C_out].
// K must be odd; zero "same" padding of (K-1)/2 on both ends:
//   y(t, o) = bias(o) + sum_k sum_c kernels(k, c, o) * input(t + k - (K-1)/2, c)
template <typename S>
BasicTensor<S> conv1d(const BasicTensor<S>& input, const BasicTensor<S>& kernels,
                      const BasicTensor<S>& bias);

template <typename S>
BasicTensor<S> conv1d_backward(const BasicTensor<S>& input,
                               const BasicTensor<S>& kernels,
                               const BasicTensor<S>& grad_output,
                               BasicTensor<S>& kernels_grad, BasicTensor<S>& bias_grad,
                               bool want_input_grad = true);

// ---- Embedding -------------------------------------------------------------

// ids -> rows of table [V, D]; result [T, D].
template <typename S>
BasicTensor<S> embedding_lookup(std::span<const std::int32_t> ids,
                                const BasicTensor<S>& table);

// Scatter-adds grad_output rows into table_grad (duplicates accumulate).
template <typename S>
void embedding_backward(std::span<const std::int32_t> ids,
                        const BasicTensor<S>& grad_output, BasicTensor<S>& table_grad);

// ---- Dense -----------------------------------------------------------------

// Affine map over the last axis; leading axes are broadcast.
template <typename S>
BasicTensor<S> dense(const BasicTensor<S>& input, const BasicTensor<S>& weight,
                     const BasicTensor<S>& bias);

template <typename S>
BasicTensor<S> dense_backward(const BasicTensor<S>& input, const BasicTensor<S>& weight,
                              const BasicTensor<S>& grad_output,
                              BasicTensor<S>& weight_grad, BasicTensor<S>& bias_grad);

// ---- Activations and pooling ----------------------------------------------

template <typename S>
void relu_inplace(BasicTensor<S>& x);

// Masks grad by (output > 0).
template <typename S>
void relu_backward_inplace(const BasicTensor<S>& output, BasicTensor<S>& grad);

template <typename S>
struct MaxPoolResult {
  BasicTensor<S> output;            // [C]
  std::vector<std::size_t> argmax;  // first maximising timestep per channel
  std::size_t steps = 0;
};

template <typename S>
MaxPoolResult<S> global_max_pool1d(const BasicTensor<S>& input);

template <typename S>
BasicTensor<S> global_max_pool1d_backward(const MaxPoolResult<S>& forward,
                                          std::span<const S> grad_output);

// ---- Loss ------------------------------------------------------------------

template <typename S>
BasicTensor<S> softmax(const BasicTensor<S>& logits);

template <typename S>
struct LossResult {
  double loss = 0;
  BasicTensor<S> grad;  // d loss / d logits
};

// loss = (1/B) sum_b w(y_b) * -log softmax(logits_b)[y_b]. Empty
// class_weights means unit weights.
template <typename S>
LossResult<S> softmax_cross_entropy(const BasicTensor<S>& logits,
                                    std::span<const std::int32_t> targets,
                                    std::span<const S> class_weights = {});

// ---- LSTM ------------------------------------------------------------------

// Single-direction LSTM over a batch. Gate order in the packed matrices is
// input, forget, candidate, output. Initial states are zero.
template <typename S>
class Lstm {
 public:
  struct Cache {
    std::size_t batch = 0;
    std::size_t steps = 0;
    BasicTensor<S> input;      // [B, T, D]
    std::vector<S> gates;      // [T, B, 4H], post-activation
    std::vector<S> cells;      // [T, B, H]
    std::vector<S> hidden;     // [T, B, H]
  };

  Lstm() = default;
  Lstm(const std::string& name, std::size_t input_dim, std::size_t units);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t units() const { return units_; }

  // Glorot-uniform input kernel, orthogonal recurrent kernel, zero bias
  // except forget gate = 1.
  void init(Rng& rng);

  // input [B, T, D] -> hidden states [B, T, H].
  BasicTensor<S> forward(const BasicTensor<S>& input, Cache* cache = nullptr) const;

  // grad_hidden [B, T, H] -> grad input [B, T, D]. Backpropagation through time.
  BasicTensor<S> backward(const Cache& cache, const BasicTensor<S>& grad_hidden);

  std::vector<Param<S>*> params() { return {&kernel, &recurrent, &bias}; }

  Param<S> kernel;     // [D, 4H]
  Param<S> recurrent;  // [H, 4H]
  Param<S> bias;       // [4H]

 private:
  std::size_t input_dim_ = 0;
  std::size_t units_ = 0;
};

// Forward pass plus a pass over the reversed sequence; outputs are
// concatenated per timestep as [forward, backward] (2H channels).
template <typename S>
class BiLstm {
 public:
  struct Cache {
    typename Lstm<S>::Cache forward;
    typename Lstm<S>::Cache backward;
  };

  BiLstm() = default;
  BiLstm(const std::string& name, std::size_t input_dim, std::size_t units);

  void init(Rng& rng);
  std::size_t units() const { return fwd.units(); }

  BasicTensor<S> forward(const BasicTensor<S>& input, Cache* cache = nullptr) const;
  BasicTensor<S> backward(const Cache& cache, const BasicTensor<S>& grad_output);

  std::vector<Param<S>*> params();

  Lstm<S> fwd;
  Lstm<S> bwd;
};

// Reverses the time axis of [B, T, D].
template <typename S>
BasicTensor<S> reverse_time(const BasicTensor<S>& x);

// Single-sequence convenience: inputs [T, D] -> [T, H'] when return_sequences,
// else the final state [H'] (for the reverse direction that is the state after
// consuming timestep 0). H' = 2H when `backward` is given.
template <typename S>
BasicTensor<S> lstm_forward(const BasicTensor<S>& inputs, const Lstm<S>& forward,
                            const Lstm<S>* backward, bool return_sequences);

// ---- Initialisers ----------------------------------------------------------

template <typename S>
void init_uniform(BasicTensor<S>& t, double lo, double hi, Rng& rng);

template <typename S>
void init_glorot_uniform(BasicTensor<S>& t, std::size_t fan_in, std::size_t fan_out,
                         Rng& rng);

// ---- Optimiser -------------------------------------------------------------

template <typename S>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<BasicTensor<S>> m;
  std::vector<BasicTensor<S>> v;
};

// Classic L2: grad += 2 * l2 * value for params flagged l2, then the
// bias-corrected Adam update. Does not clear gradients.
template <typename S>
void adam_step(std::span<Param<S>* const> params, AdamState<S>& state, double lr,
               double l2);

template <typename S>
void zero_grads(std::span<Param<S>* const> params);

}  // namespace logtriage::nn
