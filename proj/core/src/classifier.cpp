#include "logtriage/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "logtriage/rng.hpp"

namespace logtriage {

using nn::BasicTensor;
using nn::Param;

// ---- Configuration ---------------------------------------------------------

std::vector<ConvSpec> parse_conv_layers(const std::string& text) {
  std::vector<ConvSpec> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto x = item.find('x');
    ConvSpec spec;
    try {
      if (x == std::string::npos) throw std::invalid_argument(item);
      std::size_t used = 0;
      spec.filters = std::stoul(item.substr(0, x), &used);
      if (used != x) throw std::invalid_argument(item);
      const auto rest = item.substr(x + 1);
      spec.kernel = std::stoul(rest, &used);
      if (used != rest.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw UsageError("bad conv layer \"" + item + "\"; expected FILTERSxKERNEL, e.g. 64x7");
    }
    out.push_back(spec);
  }
  if (out.empty()) throw UsageError("conv layer list is empty");
  return out;
}

std::string format_conv_layers(const std::vector<ConvSpec>& layers) {
  std::string s;
  for (const auto& l : layers) {
    if (!s.empty()) s += ',';
    s += std::to_string(l.filters) + "x" + std::to_string(l.kernel);
  }
  return s;
}

void ArchConfig::validate() const {
  if (max_len < 1 || max_len > 200000) {
    throw UsageError("arch.max_len must be in [1, 200000], got " + std::to_string(max_len));
  }
  if (embed_dim < 1) throw UsageError("arch.embed_dim must be positive");
  if (conv_layers.empty()) throw UsageError("at least one conv layer is required");
  for (const auto& l : conv_layers) {
    if (l.filters < 1) throw UsageError("conv layer filter count must be positive");
    if (l.kernel % 2 == 0) {
      throw UsageError("conv kernel sizes must be odd, got " + std::to_string(l.kernel));
    }
  }
  for (auto u : dense_units) {
    if (u < 1) throw UsageError("dense layer widths must be positive");
  }
  if (n_classes != kNumClasses) {
    throw UsageError("n_classes must be " + std::to_string(kNumClasses));
  }
  if (bilstm_front && bilstm_units < 1) throw UsageError("bilstm_units must be positive");
}

nlohmann::json ArchConfig::to_json() const {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : conv_layers) layers.push_back({l.filters, l.kernel});
  return {{"max_len", max_len},
          {"embed_dim", embed_dim},
          {"conv_layers", layers},
          {"residual", residual},
          {"dense_units", dense_units},
          {"n_classes", n_classes},
          {"bilstm_front", bilstm_front},
          {"bilstm_units", bilstm_units},
          {"truncation", truncation == Truncation::kHead ? "head" : "tail"}};
}

ArchConfig ArchConfig::from_json(const nlohmann::json& j) {
  ArchConfig a;
  a.max_len = j.at("max_len").get<std::size_t>();
  a.embed_dim = j.at("embed_dim").get<std::size_t>();
  a.conv_layers.clear();
  for (const auto& l : j.at("conv_layers")) {
    a.conv_layers.push_back({l.at(0).get<std::size_t>(), l.at(1).get<std::size_t>()});
  }
  a.residual = j.at("residual").get<bool>();
  a.dense_units = j.at("dense_units").get<std::vector<std::size_t>>();
  a.n_classes = j.at("n_classes").get<std::size_t>();
  a.bilstm_front = j.value("bilstm_front", false);
  a.bilstm_units = j.value("bilstm_units", std::size_t{32});
  a.truncation = j.value("truncation", std::string("head")) == "tail" ? Truncation::kTail
                                                                       : Truncation::kHead;
  a.validate();
  return a;
}

std::size_t classifier_param_count(const ArchConfig& arch, std::size_t vocab_size) {
  std::size_t n = vocab_size * arch.embed_dim;
  std::size_t channels = arch.embed_dim;
  if (arch.bilstm_front) {
    const std::size_t u = arch.bilstm_units;
    n += 2 * 4 * ((channels + u) * u + u);
    channels = 2 * u;
  }
  for (const auto& l : arch.conv_layers) {
    n += l.kernel * channels * l.filters + l.filters;
    if (arch.residual && channels != l.filters) n += channels * l.filters + l.filters;
    channels = l.filters;
  }
  for (auto u : arch.dense_units) {
    n += channels * u + u;
    channels = u;
  }
  n += channels * arch.n_classes + arch.n_classes;
  return n;
}

std::vector<double> class_weights(std::span<const std::size_t> counts) {
  const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  std::vector<double> w(counts.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      throw UsageError("class " + std::to_string(c) +
                       " has no samples; merge it with another class or resample the data");
    }
    w[c] = static_cast<double>(total) /
           (static_cast<double>(counts.size()) * static_cast<double>(counts[c]));
  }
  return w;
}

SplitIndices stratified_split(std::span<const Label> labels, double fraction,
                              std::uint64_t seed, std::string_view stream) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw UsageError("split fraction must be in [0, 1]");
  }
  SplitIndices out;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (label_index(labels[i]) == c) members.push_back(i);
    }
    auto rng = make_rng(seed, stream, c);
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t n = members.size();
    auto k = static_cast<std::size_t>(std::llround(static_cast<double>(n) * fraction));
    // Keep every class on both sides whenever it has at least two members.
    if (n >= 2 && fraction > 0.0 && fraction < 1.0) k = std::clamp<std::size_t>(k, 1, n - 1);
    out.second.insert(out.second.end(), members.begin(),
                      members.begin() + static_cast<std::ptrdiff_t>(k));
    out.first.insert(out.first.end(), members.begin() + static_cast<std::ptrdiff_t>(k),
                     members.end());
  }
  std::sort(out.first.begin(), out.first.end());
  std::sort(out.second.begin(), out.second.end());
  return out;
}

// ---- Model -----------------------------------------------------------------

template <typename S>
struct ResidualCnn<S>::Trace {
  std::vector<TokenId> ids;
  typename nn::BiLstm<S>::Cache lstm;
  std::vector<BasicTensor<S>> inputs;  // block inputs
  std::vector<BasicTensor<S>> acts;    // relu(conv(x) + b)
  nn::MaxPoolResult<S> pool;
  std::vector<BasicTensor<S>> dense_in;
  std::vector<BasicTensor<S>> dense_out;
};

template <typename S>
ResidualCnn<S>::ResidualCnn(const ArchConfig& arch, std::size_t vocab_size,
                            std::uint64_t seed, const BasicTensor<S>* init_embeddings)
    : arch_(arch), vocab_size_(vocab_size) {
  arch_.validate();
  if (vocab_size < 1) throw UsageError("vocabulary is empty");
  build(seed, init_embeddings);
}

template <typename S>
void ResidualCnn<S>::build(std::uint64_t seed, const BasicTensor<S>* init_embeddings) {
  const std::size_t e = arch_.embed_dim;
  embedding = Param<S>("embedding", {vocab_size_, e});
  if (init_embeddings) {
    if (init_embeddings->shape() != embedding.value.shape()) {
      throw UsageError("initial embeddings have shape " + init_embeddings->shape_string() +
                       ", model expects " + embedding.value.shape_string());
    }
    embedding.value = *init_embeddings;
  } else {
    auto rng = make_rng(seed, "clf-init-embedding");
    nn::init_uniform(embedding.value, -0.05, 0.05, rng);
  }

  std::size_t channels = e;
  if (arch_.bilstm_front) {
    bilstm = nn::BiLstm<S>("bilstm", e, arch_.bilstm_units);
    auto rng = make_rng(seed, "clf-init-bilstm");
    bilstm.init(rng);
    channels = 2 * arch_.bilstm_units;
  }

  blocks.clear();
  for (std::size_t i = 0; i < arch_.conv_layers.size(); ++i) {
    const auto& spec = arch_.conv_layers[i];
    const std::string name = "conv" + std::to_string(i);
    Block b;
    b.kernel = Param<S>(name + ".kernel", {spec.kernel, channels, spec.filters});
    b.bias = Param<S>(name + ".bias", {spec.filters});
    auto rng = make_rng(seed, "clf-init-conv", i);
    nn::init_glorot_uniform(b.kernel.value, spec.kernel * channels, spec.kernel * spec.filters,
                            rng);
    if (arch_.residual && channels != spec.filters) {
      b.has_proj = true;
      b.proj = Param<S>(name + ".proj", {channels, spec.filters});
      b.proj_bias = Param<S>(name + ".proj_bias", {spec.filters});
      nn::init_glorot_uniform(b.proj.value, channels, spec.filters, rng);
    }
    blocks.push_back(std::move(b));
    channels = spec.filters;
  }

  dense_w.clear();
  dense_b.clear();
  auto widths = arch_.dense_units;
  widths.push_back(arch_.n_classes);
  for (std::size_t j = 0; j < widths.size(); ++j) {
    const bool last = j + 1 == widths.size();
    const std::string name = last ? std::string("output") : "dense" + std::to_string(j);
    dense_w.emplace_back(name + ".weight", std::vector<std::size_t>{channels, widths[j]}, true);
    dense_b.emplace_back(name + ".bias", std::vector<std::size_t>{widths[j]});
    auto rng = make_rng(seed, "clf-init-dense", j);
    nn::init_glorot_uniform(dense_w.back().value, channels, widths[j], rng);
    channels = widths[j];
  }
}

template <typename S>
std::vector<Param<S>*> ResidualCnn<S>::params() {
  std::vector<Param<S>*> p{&embedding};
  if (arch_.bilstm_front) {
    for (auto* q : bilstm.params()) p.push_back(q);
  }
  for (auto& b : blocks) {
    p.push_back(&b.kernel);
    p.push_back(&b.bias);
    if (b.has_proj) {
      p.push_back(&b.proj);
      p.push_back(&b.proj_bias);
    }
  }
  for (std::size_t j = 0; j < dense_w.size(); ++j) {
    p.push_back(&dense_w[j]);
    p.push_back(&dense_b[j]);
  }
  return p;
}

template <typename S>
std::vector<const Param<S>*> ResidualCnn<S>::params() const {
  auto mutable_params = const_cast<ResidualCnn*>(this)->params();
  return {mutable_params.begin(), mutable_params.end()};
}

template <typename S>
std::size_t ResidualCnn<S>::param_count() const {
  std::size_t n = 0;
  for (const auto* p : params()) n += p->value.size();
  return n;
}

template <typename S>
std::size_t ResidualCnn<S>::effective_length(std::size_t real_len) const {
  if (!trim_ || arch_.bilstm_front) return arch_.max_len;
  // Past the data, padded positions that see neither the data nor the end of
  // the sequence all produce the same activations, so a short run of them
  // reproduces the max pool and its gradient exactly.
  std::size_t radius = 0;
  for (const auto& l : arch_.conv_layers) radius += (l.kernel - 1) / 2;
  return std::min(arch_.max_len, real_len + 6 * radius + 3);
}

template <typename S>
std::vector<S> ResidualCnn<S>::run(std::span<const TokenId> ids, Trace* trace) const {
  if (ids.size() > arch_.max_len) {
    throw std::invalid_argument("input of " + std::to_string(ids.size()) +
                                " tokens exceeds max_len " + std::to_string(arch_.max_len));
  }
  const std::size_t steps = effective_length(ids.size());
  std::vector<TokenId> padded(steps, CharVocab::kPadId);
  std::copy(ids.begin(), ids.end(), padded.begin());

  BasicTensor<S> x = nn::embedding_lookup<S>(padded, embedding.value);
  if (arch_.bilstm_front) {
    x.reshape({1, steps, arch_.embed_dim});
    x = bilstm.forward(x, trace ? &trace->lstm : nullptr);
    x.reshape({steps, 2 * arch_.bilstm_units});
  }
  for (const auto& b : blocks) {
    BasicTensor<S> a = nn::conv1d(x, b.kernel.value, b.bias.value);
    nn::relu_inplace(a);
    BasicTensor<S> y = a;
    if (arch_.residual) {
      if (b.has_proj) {
        const auto s = nn::dense(x, b.proj.value, b.proj_bias.value);
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += s[i];
      } else {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
      }
    }
    if (trace) {
      trace->inputs.push_back(std::move(x));
      trace->acts.push_back(std::move(a));
    }
    x = std::move(y);
  }
  auto pool = nn::global_max_pool1d(x);
  BasicTensor<S> h = pool.output;
  h.reshape({1, h.size()});
  for (std::size_t j = 0; j < dense_w.size(); ++j) {
    BasicTensor<S> out = nn::dense(h, dense_w[j].value, dense_b[j].value);
    const bool hidden = j + 1 < dense_w.size();
    if (hidden) nn::relu_inplace(out);
    if (trace) {
      trace->dense_in.push_back(std::move(h));
      if (hidden) trace->dense_out.push_back(out);
    }
    h = std::move(out);
  }
  if (trace) {
    trace->ids = std::move(padded);
    trace->pool = std::move(pool);
  }
  return {h.values().begin(), h.values().end()};
}

template <typename S>
std::vector<S> ResidualCnn<S>::logits(std::span<const TokenId> ids) const {
  return run(ids, nullptr);
}

template <typename S>
double ResidualCnn<S>::accumulate_gradients(std::span<const TokenId> ids, std::int32_t target,
                                            double weight, double scale,
                                            std::vector<S>* logits_out) {
  Trace trace;
  const auto z = run(ids, &trace);
  if (logits_out) *logits_out = z;
  BasicTensor<S> logits({1, z.size()}, z);
  const std::int32_t targets[1] = {target};
  auto loss = nn::softmax_cross_entropy<S>(logits, targets);
  for (auto& g : loss.grad.values()) g = static_cast<S>(g * weight * scale);

  BasicTensor<S> g = std::move(loss.grad);
  for (std::size_t j = dense_w.size(); j-- > 0;) {
    if (j + 1 < dense_w.size()) nn::relu_backward_inplace(trace.dense_out[j], g);
    g = nn::dense_backward(trace.dense_in[j], dense_w[j].value, g, dense_w[j].grad,
                           dense_b[j].grad);
  }
  BasicTensor<S> dx = nn::global_max_pool1d_backward<S>(trace.pool, g.values());
  for (std::size_t i = blocks.size(); i-- > 0;) {
    auto& b = blocks[i];
    const auto& x = trace.inputs[i];
    BasicTensor<S> da = dx;
    nn::relu_backward_inplace(trace.acts[i], da);
    BasicTensor<S> dxi = nn::conv1d_backward(x, b.kernel.value, da, b.kernel.grad, b.bias.grad);
    if (arch_.residual) {
      if (b.has_proj) {
        const auto ds = nn::dense_backward(x, b.proj.value, dx, b.proj.grad, b.proj_bias.grad);
        for (std::size_t k = 0; k < dxi.size(); ++k) dxi[k] += ds[k];
      } else {
        for (std::size_t k = 0; k < dxi.size(); ++k) dxi[k] += dx[k];
      }
    }
    dx = std::move(dxi);
  }
  if (arch_.bilstm_front) {
    const std::size_t steps = trace.ids.size();
    dx.reshape({1, steps, 2 * arch_.bilstm_units});
    dx = bilstm.backward(trace.lstm, dx);
    dx.reshape({steps, arch_.embed_dim});
  }
  nn::embedding_backward<S>(trace.ids, dx, embedding.grad);
  return loss.loss * weight;
}

template <typename S>
Checkpoint ResidualCnn<S>::to_checkpoint(const CharVocab& vocab) const {
  if (vocab.size() != vocab_size_) {
    throw std::invalid_argument("vocabulary size does not match the model");
  }
  Checkpoint ckpt;
  ckpt.kind = "residual_cnn";
  ckpt.config = arch_.to_json();
  ckpt.vocab = vocab;
  for (const auto* p : params()) ckpt.tensors.push_back({p->name, p->value.template cast<float>()});
  return ckpt;
}

template <typename S>
ResidualCnn<S> ResidualCnn<S>::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.kind != "residual_cnn") {
    throw UsageError("checkpoint holds a " + ckpt.kind + " model, not a classifier");
  }
  ResidualCnn model(ArchConfig::from_json(ckpt.config), ckpt.vocab.size(), 0);
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

template class ResidualCnn<float>;
template class ResidualCnn<double>;

// ---- Data ------------------------------------------------------------------

std::vector<Sample> encode_samples(std::span<const std::string> texts,
                                   std::span<const Label> labels, const CharVocab& vocab,
                                   std::size_t max_len, Truncation mode) {
  if (texts.size() != labels.size()) {
    throw std::invalid_argument("encode_samples: texts and labels differ in length");
  }
  std::vector<Sample> out(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    out[i].ids = encode_unpadded(texts[i], vocab, max_len, mode);
    out[i].label = labels[i];
  }
  return out;
}

// ---- Training --------------------------------------------------------------

nlohmann::json EpochStats::to_json() const {
  return {{"epoch", epoch},
          {"train_loss", train_loss},
          {"train_accuracy", train_accuracy},
          {"train_f1_micro", train_f1_micro},
          {"val_loss", val_loss},
          {"val_accuracy", val_accuracy},
          {"val_f1_micro", val_f1_micro}};
}

void TrainConfig::validate() const {
  if (!(lr > 0)) throw UsageError("train.lr must be positive");
  if (max_epochs < 1) throw UsageError("train.max_epochs must be at least 1");
  if (patience >= max_epochs) throw UsageError("train.patience must be below train.max_epochs");
  if (batch_size < 1) throw UsageError("train.batch_size must be at least 1");
  if (l2 < 0) throw UsageError("train.l2 must be non-negative");
  if (!(val_fraction > 0 && val_fraction < 1)) {
    throw UsageError("train.val_fraction must be in (0, 1)");
  }
}

std::size_t argmax_lowest(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

namespace {

std::array<double, kNumClasses> softmax_probs(std::span<const float> z) {
  std::array<double, kNumClasses> p{};
  double mx = z[0];
  for (std::size_t c = 1; c < kNumClasses; ++c) mx = std::max(mx, static_cast<double>(z[c]));
  double sum = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    p[c] = std::exp(static_cast<double>(z[c]) - mx);
    sum += p[c];
  }
  for (auto& v : p) v /= sum;
  return p;
}

}  // namespace

Prediction predict(const ResidualCnn<float>& model, std::span<const TokenId> ids) {
  const auto z = model.logits(ids);
  Prediction p;
  p.probabilities = softmax_probs(z);
  p.label = label_from_index(argmax_lowest(p.probabilities));
  return p;
}

Evaluation evaluate(const ResidualCnn<float>& model, std::span<const Sample> samples,
                    std::span<const double> weights) {
  if (samples.empty()) throw UsageError("cannot evaluate an empty sample set");
  Evaluation ev;
  std::vector<Label> truth;
  double total = 0;
  for (const auto& s : samples) {
    const auto p = predict(model, s.ids);
    const std::size_t y = label_index(s.label);
    const double w = weights.empty() ? 1.0 : weights[y];
    total += w * -std::log(std::max(p.probabilities[y], 1e-300));
    ev.predictions.push_back(p.label);
    truth.push_back(s.label);
  }
  ev.loss = total / static_cast<double>(samples.size());
  ev.metrics = compute_metrics(truth, ev.predictions);
  return ev;
}

TrainResult train_classifier(ResidualCnn<float>& model, std::span<const Sample> train,
                             std::span<const Sample> val, const TrainConfig& cfg) {
  cfg.validate();
  if (train.empty()) throw UsageError("training split is empty");
  if (val.empty()) throw UsageError("validation split is empty");

  std::vector<double> weights(kNumClasses, 1.0);
  if (cfg.use_class_weights) {
    std::array<std::size_t, kNumClasses> counts{};
    for (const auto& s : train) ++counts[label_index(s.label)];
    weights = class_weights(counts);
  }

  auto params = model.params();
  nn::AdamState<float> adam;
  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  std::vector<nn::Tensor> best_values;
  std::size_t wait = 0;

  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = make_rng(cfg.seed, "clf-epoch", epoch);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0;
    std::vector<Label> truth;
    std::vector<Label> predicted;
    std::vector<float> z;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - start);
      nn::zero_grads<float>(params);
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = train[order[k]];
        const std::size_t y = label_index(s.label);
        loss_sum += model.accumulate_gradients(s.ids, static_cast<std::int32_t>(y), weights[y],
                                               scale, &z);
        std::array<double, kNumClasses> zd{};
        std::copy_n(z.begin(), kNumClasses, zd.begin());
        truth.push_back(s.label);
        predicted.push_back(label_from_index(argmax_lowest(zd)));
      }
      if (!std::isfinite(loss_sum)) {
        throw std::runtime_error("training diverged: loss is not finite in epoch " +
                                 std::to_string(epoch) + "; lower train.lr");
      }
      nn::adam_step<float>(params, adam, cfg.lr, cfg.l2);
    }

    EpochStats st;
    st.epoch = epoch;
    st.train_loss = loss_sum / static_cast<double>(train.size());
    const auto tm = compute_metrics(truth, predicted);
    st.train_accuracy = tm.accuracy;
    st.train_f1_micro = tm.f1_micro;
    const auto ev = evaluate(model, val, weights);
    st.val_loss = ev.loss;
    st.val_accuracy = ev.metrics.accuracy;
    st.val_f1_micro = ev.metrics.f1_micro;
    if (!std::isfinite(st.val_loss)) {
      throw std::runtime_error("training diverged: validation loss is not finite in epoch " +
                               std::to_string(epoch));
    }
    result.history.push_back(st);
    if (cfg.on_epoch) cfg.on_epoch(st);

    if (st.val_loss < best) {
      best = st.val_loss;
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
  result.best_val_loss = best;
  return result;
}

}  // namespace logtriage
