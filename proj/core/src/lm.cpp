#include "logtriage/lm.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "logtriage/labels.hpp"
#include "logtriage/rng.hpp"
#include "logtriage/utf8.hpp"

namespace logtriage {

using nn::BasicTensor;
using nn::Param;

void LmConfig::validate() const {
  if (shift < 1) throw UsageError("lm.shift must be at least 1");
  if (seq_len != 0 && shift > seq_len) throw UsageError("lm.shift must not exceed lm.seq_len");
  if (embed_dim < 1 || lstm_units < 1) throw UsageError("lm dimensions must be positive");
  if (!(lr > 0)) throw UsageError("lm.lr must be positive");
  if (batch_size < 1) throw UsageError("lm.batch_size must be at least 1");
  if (max_epochs < 1) throw UsageError("lm.max_epochs must be at least 1");
}

nlohmann::json LmConfig::to_json() const {
  return {{"seq_len", seq_len},     {"shift", shift},           {"embed_dim", embed_dim},
          {"lstm_units", lstm_units}, {"lr", lr},               {"batch_size", batch_size},
          {"max_epochs", max_epochs}, {"patience", patience},   {"pairs_per_epoch", pairs_per_epoch},
          {"seed", seed}};
}

LmConfig LmConfig::from_json(const nlohmann::json& j) {
  LmConfig c;
  c.seq_len = j.at("seq_len").get<std::size_t>();
  c.shift = j.at("shift").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.lstm_units = j.at("lstm_units").get<std::size_t>();
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.patience = j.value("patience", c.patience);
  c.pairs_per_epoch = j.value("pairs_per_epoch", c.pairs_per_epoch);
  c.seed = j.value("seed", c.seed);
  return c;
}

// ---- Corpus statistics and pairs -------------------------------------------

namespace {

bool is_block_start(std::string_view line) {
  const auto first = line.find_first_not_of(" \t");
  if (first == line.npos) return false;
  line.remove_prefix(first);
  return line.starts_with("I:") || line.starts_with("C:");
}

}  // namespace

std::size_t median_block_length(std::string_view corpus) {
  std::vector<std::size_t> starts;
  std::size_t pos = 0;
  while (pos < corpus.size()) {
    auto end = corpus.find('\n', pos);
    if (end == corpus.npos) end = corpus.size();
    if (is_block_start(corpus.substr(pos, end - pos))) starts.push_back(pos);
    pos = end + 1;
  }
  if (starts.empty()) {
    throw UsageError("corpus has no I:/C: message blocks; set lm.seq_len explicitly");
  }
  std::vector<std::size_t> lengths;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const std::size_t end = i + 1 < starts.size() ? starts[i + 1] : corpus.size();
    lengths.push_back(utf8_length(corpus.substr(starts[i], end - starts[i])));
  }
  const std::size_t mid = (lengths.size() - 1) / 2;
  std::nth_element(lengths.begin(), lengths.begin() + static_cast<std::ptrdiff_t>(mid),
                   lengths.end());
  return lengths[mid];
}

PairStream::PairStream(std::span<const TokenId> ids, std::size_t seq_len, std::size_t shift)
    : ids_(ids), seq_len_(seq_len), shift_(shift) {
  if (seq_len < 1 || shift < 1) throw UsageError("sequence length and shift must be positive");
  if (ids.size() < seq_len + shift) {
    throw UsageError("corpus of " + std::to_string(ids.size()) +
                     " tokens is too short for sequence length " + std::to_string(seq_len) +
                     " and shift " + std::to_string(shift));
  }
  count_ = (ids.size() - seq_len - shift) / shift + 1;
}

std::span<const TokenId> PairStream::input(std::size_t j) const {
  return ids_.subspan(j * shift_, seq_len_);
}

std::span<const TokenId> PairStream::target(std::size_t j) const {
  return ids_.subspan(j * shift_ + shift_, seq_len_);
}

PairStream make_sequence_pairs(std::span<const TokenId> corpus_ids, std::size_t seq_len,
                               std::size_t shift) {
  return PairStream(corpus_ids, seq_len, shift);
}

std::size_t lm_param_count(const LmConfig& cfg, std::size_t vocab_size) {
  const std::size_t v = vocab_size;
  const std::size_t e = cfg.embed_dim;
  const std::size_t h = cfg.lstm_units;
  return v * e + 4 * ((e + h) * h + h) + h * v + v;
}

// ---- Model -----------------------------------------------------------------

template <typename S>
LanguageModel<S>::LanguageModel(const LmConfig& cfg, std::size_t vocab_size,
                                std::uint64_t seed)
    : embedding("embedding", {vocab_size, cfg.embed_dim}),
      lstm("lstm", cfg.embed_dim, cfg.lstm_units),
      out_w("output.weight", {cfg.lstm_units, vocab_size}),
      out_b("output.bias", {vocab_size}),
      cfg_(cfg),
      vocab_size_(vocab_size) {
  cfg_.validate();
  auto rng = make_rng(seed, "lm-init");
  nn::init_uniform(embedding.value, -0.05, 0.05, rng);
  lstm.init(rng);
  nn::init_glorot_uniform(out_w.value, cfg.lstm_units, vocab_size, rng);
}

template <typename S>
std::vector<Param<S>*> LanguageModel<S>::params() {
  std::vector<Param<S>*> p{&embedding};
  for (auto* q : lstm.params()) p.push_back(q);
  p.push_back(&out_w);
  p.push_back(&out_b);
  return p;
}

template <typename S>
std::size_t LanguageModel<S>::param_count() {
  std::size_t n = 0;
  for (const auto* p : params()) n += p->value.size();
  return n;
}

template <typename S>
BasicTensor<S> LanguageModel<S>::logits(std::span<const TokenId> inputs,
                                        std::size_t batch) const {
  const std::size_t steps = inputs.size() / batch;
  auto x = nn::embedding_lookup<S>(inputs, embedding.value);
  x.reshape({batch, steps, cfg_.embed_dim});
  auto h = lstm.forward(x);
  h.reshape({batch * steps, cfg_.lstm_units});
  return nn::dense(h, out_w.value, out_b.value);
}

template <typename S>
double LanguageModel<S>::loss(std::span<const TokenId> inputs, std::span<const TokenId> targets,
                              std::size_t batch) const {
  return nn::softmax_cross_entropy<S>(logits(inputs, batch), targets).loss;
}

template <typename S>
double LanguageModel<S>::accumulate_gradients(std::span<const TokenId> inputs,
                                              std::span<const TokenId> targets,
                                              std::size_t batch) {
  if (batch == 0 || inputs.size() % batch != 0 || inputs.size() != targets.size()) {
    throw std::invalid_argument("LanguageModel: inputs must be batch equal-length sequences");
  }
  const std::size_t steps = inputs.size() / batch;
  auto x = nn::embedding_lookup<S>(inputs, embedding.value);
  x.reshape({batch, steps, cfg_.embed_dim});
  typename nn::Lstm<S>::Cache cache;
  auto h = lstm.forward(x, &cache);
  h.reshape({batch * steps, cfg_.lstm_units});
  const auto z = nn::dense(h, out_w.value, out_b.value);
  auto res = nn::softmax_cross_entropy<S>(z, targets);
  auto dh = nn::dense_backward(h, out_w.value, res.grad, out_w.grad, out_b.grad);
  dh.reshape({batch, steps, cfg_.lstm_units});
  auto dx = lstm.backward(cache, dh);
  dx.reshape({batch * steps, cfg_.embed_dim});
  nn::embedding_backward<S>(inputs, dx, embedding.grad);
  return res.loss;
}

template <typename S>
Checkpoint LanguageModel<S>::to_checkpoint(const CharVocab& vocab) const {
  if (vocab.size() != vocab_size_) {
    throw std::invalid_argument("vocabulary size does not match the model");
  }
  Checkpoint ckpt;
  ckpt.kind = "char_lm";
  ckpt.config = cfg_.to_json();
  ckpt.vocab = vocab;
  auto* self = const_cast<LanguageModel*>(this);
  for (const auto* p : self->params()) {
    ckpt.tensors.push_back({p->name, p->value.template cast<float>()});
  }
  return ckpt;
}

template <typename S>
LanguageModel<S> LanguageModel<S>::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "char_lm") {
    throw UsageError("checkpoint holds a " + ckpt.kind + " model, not a language model");
  }
  LanguageModel model(LmConfig::from_json(ckpt.config), ckpt.vocab.size(), 0);
  for (auto* p : model.params()) {
    const nn::Tensor* t = nullptr;
    try {
      t = &ckpt.tensor(p->name);
    } catch (const std::out_of_range& e) {
      throw UsageError(e.what());
    }
    if (t->shape() != p->value.shape()) {
      throw UsageError("tensor " + p->name + " has shape " + t->shape_string() +
                       ", config expects " + p->value.shape_string());
    }
    p->value = t->template cast<S>();
  }
  return model;
}

template class LanguageModel<float>;
template class LanguageModel<double>;

// ---- Training --------------------------------------------------------------

LmTrainResult lm_train(LanguageModel<float>& model, const PairStream& pairs,
                       const std::function<void(const LmEpoch&, const LanguageModel<float>&)>&
                           on_epoch) {
  const auto& cfg = model.config();
  if (cfg.patience >= cfg.max_epochs) {
    throw UsageError("lm.patience must be below lm.max_epochs");
  }
  auto params = model.params();
  nn::AdamState<float> adam;
  LmTrainResult result;
  double best = std::numeric_limits<double>::infinity();
  std::vector<nn::Tensor> best_values;
  std::size_t wait = 0;

  std::vector<std::size_t> order;
  std::vector<TokenId> in;
  std::vector<TokenId> tg;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto rng = make_rng(cfg.seed, "lm-epoch", epoch);
    if (cfg.pairs_per_epoch == 0) {
      order.resize(pairs.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 1);
      order.resize(cfg.pairs_per_epoch);
      for (auto& o : order) o = pick(rng);
    }

    double total = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      in.clear();
      tg.clear();
      for (std::size_t k = start; k < end; ++k) {
        const auto a = pairs.input(order[k]);
        const auto b = pairs.target(order[k]);
        in.insert(in.end(), a.begin(), a.end());
        tg.insert(tg.end(), b.begin(), b.end());
      }
      nn::zero_grads<float>(params);
      const double loss = model.accumulate_gradients(in, tg, end - start);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("language model diverged: loss is " + std::to_string(loss) +
                                 " at epoch " + std::to_string(epoch) + ", batch " +
                                 std::to_string(batches) + "; lower lm.lr");
      }
      if (epoch == 1 && batches == 0) result.initial_loss = loss;
      nn::adam_step<float>(params, adam, cfg.lr, 0.0);
      total += loss * static_cast<double>(end - start);
      ++batches;
    }

    LmEpoch st{epoch, total / static_cast<double>(order.size())};
    result.history.push_back(st);
    if (on_epoch) on_epoch(st, model);
    if (st.loss < best) {
      best = st.loss;
      result.best_epoch = epoch;
      best_values.clear();
      for (const auto* p : params) best_values.push_back(p->value);
      wait = 0;
    } else if (++wait >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best_values[i];
  result.best_loss = best;
  return result;
}

// ---- Embedding export ------------------------------------------------------

nn::Tensor extract_char_embeddings(const Checkpoint& ckpt) {
  if (ckpt.kind != "char_lm") {
    throw UsageError("checkpoint holds a " + ckpt.kind + " model, not a language model");
  }
  const auto cfg = LmConfig::from_json(ckpt.config);
  nn::Tensor table;
  try {
    table = ckpt.tensor("embedding");
  } catch (const std::out_of_range& e) {
    throw UsageError(e.what());
  }
  if (table.rank() != 2 || table.dim(0) != ckpt.vocab.size() || table.dim(1) != cfg.embed_dim) {
    throw UsageError("embedding table " + table.shape_string() + " does not match vocabulary " +
                     std::to_string(ckpt.vocab.size()) + " x embed_dim " +
                     std::to_string(cfg.embed_dim));
  }
  return table;
}

namespace {
constexpr std::array<char, 8> kEmbMagic = {'L', 'T', 'E', 'M', 'B', '\0', '\0', '\0'};
constexpr std::uint32_t kEmbVersion = 1;
}  // namespace

void write_embedding_file(const std::filesystem::path& path, const nn::Tensor& table,
                          const CharVocab& vocab) {
  if (table.rank() != 2 || table.dim(0) != vocab.size()) {
    throw std::invalid_argument("embedding table does not match the vocabulary");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out.write(kEmbMagic.data(), kEmbMagic.size());
  detail::write_u32(out, kEmbVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(table.dim(0)));
  detail::write_u32(out, static_cast<std::uint32_t>(table.dim(1)));
  detail::write_u64(out, vocab.hash());
  detail::write_f32(out, table.values());
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

EmbeddingFile read_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("embedding file not found: " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kEmbMagic) throw UsageError(path.string() + " is not an embedding file");
  if (detail::read_u32(in) != kEmbVersion) throw UsageError("unsupported embedding file version");
  const std::size_t v = detail::read_u32(in);
  const std::size_t e = detail::read_u32(in);
  EmbeddingFile f;
  f.vocab_hash = detail::read_u64(in);
  f.table = nn::Tensor({v, e});
  detail::read_f32(in, f.table.values());
  return f;
}

}  // namespace logtriage
