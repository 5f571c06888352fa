#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "logtriage/checkpoint.hpp"
#include "logtriage/labels.hpp"
#include "logtriage/metrics.hpp"
#include "logtriage/nn/layers.hpp"
#include "logtriage/vocab.hpp"

namespace logtriage {

struct ConvSpec {
  std::size_t filters = 0;
  std::size_t kernel = 0;
  bool operator==(const ConvSpec&) const = default;
};

// "64x7,64x7" -> {{64,7},{64,7}}. Throws UsageError on malformed input.
std::vector<ConvSpec> parse_conv_layers(const std::string& text);
std::string format_conv_layers(const std::vector<ConvSpec>& layers);

struct ArchConfig {
  std::size_t max_len = 50000;
  std::size_t embed_dim = 64;
  std::vector<ConvSpec> conv_layers = {{64, 7}, {64, 7}, {64, 7}};
  bool residual = true;
  std::vector<std::size_t> dense_units = {1024, 512};
  std::size_t n_classes = kNumClasses;
  bool bilstm_front = false;
  std::size_t bilstm_units = 32;
  Truncation truncation = Truncation::kHead;

  void validate() const;
  nlohmann::json to_json() const;
  static ArchConfig from_json(const nlohmann::json& j);
};

// Closed-form trainable parameter count.
std::size_t classifier_param_count(const ArchConfig& arch, std::size_t vocab_size);

// weight_c = N / (C * n_c). Throws UsageError when a class has no samples.
std::vector<double> class_weights(std::span<const std::size_t> counts);

// Stratified split of sample indices: per class, round(n_c * fraction) go to
// `second`. Both lists come back sorted.
struct SplitIndices {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};
SplitIndices stratified_split(std::span<const Label> labels, double fraction,
                              std::uint64_t seed, std::string_view stream = "split");

// Embedding -> [BiLSTM] -> residual Conv1D blocks -> global max pool ->
// ReLU dense layers -> logits. Each conv block computes
// relu(conv(x) + b) + skip(x), where skip is the identity or a 1x1
// projection when the channel count changes.
template <typename S>
class ResidualCnn {
 public:
  struct Block {
    nn::Param<S> kernel;      // [K, C_in, C_out]
    nn::Param<S> bias;        // [C_out]
    nn::Param<S> proj;        // [C_in, C_out], empty when unused
    nn::Param<S> proj_bias;   // [C_out]
    bool has_proj = false;
  };

  ResidualCnn() = default;
  // Random initialisation; init_embeddings, when given, must be [V, E].
  ResidualCnn(const ArchConfig& arch, std::size_t vocab_size, std::uint64_t seed,
              const nn::BasicTensor<S>* init_embeddings = nullptr);

  const ArchConfig& arch() const { return arch_; }
  std::size_t vocab_size() const { return vocab_size_; }

  std::vector<nn::Param<S>*> params();
  std::vector<const nn::Param<S>*> params() const;
  std::size_t param_count() const;

  // ids: unpadded, at most max_len long. The model sees them right-padded to
  // max_len; trailing padding beyond what can affect the output is skipped.
  std::vector<S> logits(std::span<const TokenId> ids) const;

  // Forward + backward for one sample; gradients are scaled by `scale` and
  // accumulated into the parameters. Returns the weighted loss and logits.
  double accumulate_gradients(std::span<const TokenId> ids, std::int32_t target,
                              double weight, double scale, std::vector<S>* logits_out = nullptr);

  // Sequence length actually computed for an input of real_len tokens.
  std::size_t effective_length(std::size_t real_len) const;
  // Disables pad trimming (used to verify that trimming is exact).
  void set_trimming(bool enabled) { trim_ = enabled; }

  Checkpoint to_checkpoint(const CharVocab& vocab) const;
  static ResidualCnn from_checkpoint(const Checkpoint& ckpt);

  nn::Param<S> embedding;  // [V, E]
  nn::BiLstm<S> bilstm;
  std::vector<Block> blocks;
  std::vector<nn::Param<S>> dense_w;  // hidden layers then the output layer
  std::vector<nn::Param<S>> dense_b;

 private:
  struct Trace;
  std::vector<S> run(std::span<const TokenId> ids, Trace* trace) const;
  void build(std::uint64_t seed, const nn::BasicTensor<S>* init_embeddings);

  ArchConfig arch_;
  std::size_t vocab_size_ = 0;
  bool trim_ = true;
};

struct Sample {
  std::vector<TokenId> ids;  // unpadded, truncated to max_len
  Label label = Label::kPass;
};

std::vector<Sample> encode_samples(std::span<const std::string> texts,
                                   std::span<const Label> labels, const CharVocab& vocab,
                                   std::size_t max_len, Truncation mode = Truncation::kHead);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double train_accuracy = 0;
  double train_f1_micro = 0;
  double val_loss = 0;
  double val_accuracy = 0;
  double val_f1_micro = 0;
  nlohmann::json to_json() const;
};

struct TrainConfig {
  double lr = 1e-4;
  std::size_t max_epochs = 200;
  std::size_t patience = 30;
  std::size_t batch_size = 32;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  double val_fraction = 0.1;
  bool use_class_weights = true;
  std::function<void(const EpochStats&)> on_epoch;

  void validate() const;
};

struct TrainResult {
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0;
  bool stopped_early = false;
};

// Minimises class-weighted cross-entropy with Adam + L2 on dense weights.
// Early-stops on validation loss and restores the best epoch's weights.
// Throws UsageError on empty splits; std::runtime_error on a NaN loss.
TrainResult train_classifier(ResidualCnn<float>& model, std::span<const Sample> train,
                             std::span<const Sample> val, const TrainConfig& cfg);

struct Prediction {
  Label label = Label::kPass;
  std::array<double, kNumClasses> probabilities{};
};

// Argmax with ties resolved to the lowest class index.
std::size_t argmax_lowest(std::span<const double> values);

Prediction predict(const ResidualCnn<float>& model, std::span<const TokenId> ids);

struct Evaluation {
  Metrics metrics;
  double loss = 0;  // weighted mean cross-entropy
  std::vector<Label> predictions;
};

// Throws UsageError on an empty set.
Evaluation evaluate(const ResidualCnn<float>& model, std::span<const Sample> samples,
                    std::span<const double> weights = {});

}  // namespace logtriage
