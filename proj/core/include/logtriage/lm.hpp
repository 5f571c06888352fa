#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "logtriage/checkpoint.hpp"
#include "logtriage/labels.hpp"
#include "logtriage/nn/layers.hpp"
#include "logtriage/vocab.hpp"

namespace logtriage {

struct LmConfig {
  std::size_t seq_len = 0;  // l_s; 0 = median message-block length of the corpus
  std::size_t shift = 1;    // l_w
  std::size_t embed_dim = 64;
  std::size_t lstm_units = 1024;
  double lr = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 200;
  std::size_t patience = 30;
  // Pairs drawn per epoch; 0 = every pair once.
  std::size_t pairs_per_epoch = 0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static LmConfig from_json(const nlohmann::json& j);
};

// Median length, in characters, of the message blocks: a block starts at a
// line whose first non-blank characters are "I:" or "C:" and runs up to the
// next such line. Even counts take the lower median. Throws UsageError when
// the corpus has no blocks.
std::size_t median_block_length(std::string_view corpus);

// Sliding (input, target) windows over a token stream without copying:
// pair j has input ids[j*l_w, j*l_w + l_s) and target shifted by l_w.
class PairStream {
 public:
  PairStream(std::span<const TokenId> ids, std::size_t seq_len, std::size_t shift);

  std::size_t size() const { return count_; }
  std::size_t seq_len() const { return seq_len_; }
  std::size_t shift() const { return shift_; }
  std::span<const TokenId> input(std::size_t j) const;
  std::span<const TokenId> target(std::size_t j) const;

 private:
  std::span<const TokenId> ids_;
  std::size_t seq_len_;
  std::size_t shift_;
  std::size_t count_;
};

// Throws UsageError when the corpus is shorter than l_s + l_w.
PairStream make_sequence_pairs(std::span<const TokenId> corpus_ids, std::size_t seq_len,
                               std::size_t shift);

// V*E + 4*((E+H)*H + H) + H*V + V
std::size_t lm_param_count(const LmConfig& cfg, std::size_t vocab_size);

// Embedding -> LSTM (full sequences) -> per-timestep dense over the vocabulary.
template <typename S>
class LanguageModel {
 public:
  LanguageModel() = default;
  LanguageModel(const LmConfig& cfg, std::size_t vocab_size, std::uint64_t seed);

  const LmConfig& config() const { return cfg_; }
  std::size_t vocab_size() const { return vocab_size_; }

  std::vector<nn::Param<S>*> params();
  std::size_t param_count();

  // inputs: B sequences of equal length T, concatenated. Returns logits
  // [B*T, V], rows ordered b*T + t.
  nn::BasicTensor<S> logits(std::span<const TokenId> inputs, std::size_t batch) const;

  // Mean per-character cross-entropy of the batch; accumulates gradients.
  double accumulate_gradients(std::span<const TokenId> inputs,
                              std::span<const TokenId> targets, std::size_t batch);
  double loss(std::span<const TokenId> inputs, std::span<const TokenId> targets,
              std::size_t batch) const;

  Checkpoint to_checkpoint(const CharVocab& vocab) const;
  static LanguageModel from_checkpoint(const Checkpoint& ckpt);

  nn::Param<S> embedding;  // [V, E]
  nn::Lstm<S> lstm;
  nn::Param<S> out_w;  // [H, V]
  nn::Param<S> out_b;  // [V]

 private:
  LmConfig cfg_;
  std::size_t vocab_size_ = 0;
};

struct LmEpoch {
  std::size_t epoch = 0;
  double loss = 0;
  nlohmann::json to_json() const { return {{"epoch", epoch}, {"loss", loss}}; }
};

struct LmTrainResult {
  std::vector<LmEpoch> history;
  double initial_loss = 0;  // mean loss of the first batch before any update
  std::size_t best_epoch = 0;
  double best_loss = 0;
  bool stopped_early = false;
};

// Adam on the mean per-character cross-entropy; early stops on training
// loss and restores the best epoch. `on_epoch` sees the model after each
// epoch (for per-epoch checkpoints). Throws std::runtime_error if the loss
// becomes NaN.
LmTrainResult lm_train(LanguageModel<float>& model, const PairStream& pairs,
                       const std::function<void(const LmEpoch&, const LanguageModel<float>&)>&
                           on_epoch = {});

// Copy of the embedding table. Throws UsageError if the checkpoint is not a
// language model or its table disagrees with its config and vocabulary.
nn::Tensor extract_char_embeddings(const Checkpoint& ckpt);

// Binary export: "LTEMB\0\0\0", u32 version, u32 V, u32 E, u64 vocab hash,
// then V*E little-endian float32 in row-major order.
struct EmbeddingFile {
  nn::Tensor table;
  std::uint64_t vocab_hash = 0;
};
void write_embedding_file(const std::filesystem::path& path, const nn::Tensor& table,
                          const CharVocab& vocab);
EmbeddingFile read_embedding_file(const std::filesystem::path& path);

}  // namespace logtriage
