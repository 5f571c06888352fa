#include "logtriage/doc_embed.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <numeric>

#include "logtriage/checkpoint.hpp"
#include "logtriage/rng.hpp"

namespace logtriage {

// ---- Chunk planning --------------------------------------------------------

nlohmann::json ChunkPlan::to_json() const {
  return {{"doc_len", doc_len}, {"context", context}, {"overlap", overlap}, {"chunks", count()}};
}

ChunkPlan plan_chunks(std::size_t doc_len, std::size_t context, std::size_t overlap) {
  if (doc_len < 1) throw UsageError("cannot plan chunks for an empty document");
  if (context < 1) throw UsageError("context length must be positive");
  if (overlap >= context) {
    throw UsageError("overlap " + std::to_string(overlap) + " must be smaller than context " +
                     std::to_string(context));
  }
  ChunkPlan plan{doc_len, context, overlap, {}};
  const std::size_t stride = context - overlap;
  const std::size_t m = doc_len <= context ? 1 : (doc_len - overlap + stride - 1) / stride;
  for (std::size_t k = 0; k < m; ++k) plan.starts.push_back(k * stride);
  return plan;
}

// ---- Mock provider ---------------------------------------------------------

MockProvider::MockProvider(std::size_t dim, std::uint64_t seed, std::size_t capacity)
    : dim_(dim), seed_(derive_seed(seed, "mock-provider")), capacity_(capacity) {
  if (dim < 1) throw UsageError("embedding dimension must be positive");
}

std::string MockProvider::id() const {
  return "mock:dim=" + std::to_string(dim_) + ":key=" + to_hex(seed_);
}

float MockProvider::value(TokenId token, std::size_t j) const {
  const std::uint64_t h =
      splitmix64(seed_ + static_cast<std::uint64_t>(static_cast<std::uint32_t>(token)) *
                             0x9E3779B97F4A7C15ULL +
                 j);
  // Multiples of 2^-16 in [-1, 1): sums of these are exact in double.
  const auto q = static_cast<std::int64_t>(h >> 47) - 65536;
  return static_cast<float>(static_cast<double>(q) / 65536.0);
}

nn::Tensor MockProvider::embed_chunk(std::span<const TokenId> tokens,
                                     std::span<const std::uint8_t> mask) const {
  if (tokens.size() != mask.size()) throw std::invalid_argument("tokens and mask differ in length");
  if (tokens.size() > capacity_) throw std::invalid_argument("chunk exceeds provider capacity");
  nn::Tensor out({tokens.size(), dim_});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t j = 0; j < dim_; ++j) out(i, j) = value(tokens[i], j);
  }
  return out;
}

nn::Tensor parse_embedding_response(const std::string& body, std::size_t rows, std::size_t dim) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("embedding response is not JSON: " + std::string(e.what()));
  }
  if (!j.is_object() || !j.contains("embeddings") || !j["embeddings"].is_array()) {
    throw std::runtime_error("embedding response lacks an \"embeddings\" array");
  }
  const auto& e = j["embeddings"];
  if (e.size() != rows) {
    throw std::runtime_error("embedding response has " + std::to_string(e.size()) +
                             " rows, expected " + std::to_string(rows));
  }
  nn::Tensor out({rows, dim});
  for (std::size_t i = 0; i < rows; ++i) {
    if (!e[i].is_array() || e[i].size() != dim) {
      throw std::runtime_error("embedding row " + std::to_string(i) + " does not have " +
                               std::to_string(dim) + " values");
    }
    for (std::size_t k = 0; k < dim; ++k) out(i, k) = e[i][k].get<float>();
  }
  return out;
}

// ---- Document pooling ------------------------------------------------------

namespace {

struct ChunkSum {
  std::vector<double> sum;
  std::size_t denominator = 0;
};

ChunkSum embed_one(std::span<const TokenId> tokens, const EmbeddingProvider& provider,
                   const ChunkPlan& plan, std::size_t k, PoolingMode mode) {
  const std::size_t start = plan.starts[k];
  const std::size_t end = std::min(plan.doc_len, start + plan.context);
  std::vector<TokenId> ids(plan.context, CharVocab::kPadId);
  std::vector<std::uint8_t> mask(plan.context, 0);
  std::copy(tokens.begin() + static_cast<std::ptrdiff_t>(start),
            tokens.begin() + static_cast<std::ptrdiff_t>(end), ids.begin());
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(end - start), 1);

  nn::Tensor te;
  try {
    te = provider.embed_chunk(ids, mask);
  } catch (const std::exception& e) {
    throw ProviderError(k, e.what());
  }
  const std::size_t d = provider.dim();
  if (te.rank() != 2 || te.dim(0) != plan.context || te.dim(1) != d) {
    throw ProviderError(k, "provider returned " + te.shape_string() + ", expected [" +
                               std::to_string(plan.context) + "x" + std::to_string(d) + "]");
  }
  ChunkSum cs;
  cs.sum.assign(d, 0.0);
  for (std::size_t i = 0; i < plan.context; ++i) {
    if (mode == PoolingMode::kMaskAware && !mask[i]) continue;
    for (std::size_t j = 0; j < d; ++j) cs.sum[j] += te(i, j);
  }
  cs.denominator = mode == PoolingMode::kMaskAware ? end - start : plan.context;
  return cs;
}

}  // namespace

DocumentEmbedding embed_document(std::span<const TokenId> tokens,
                                 const EmbeddingProvider& provider, std::size_t context,
                                 std::size_t overlap, const EmbedOptions& options) {
  if (provider.context_capacity() < context) {
    throw UsageError("provider " + provider.id() + " accepts at most " +
                     std::to_string(provider.context_capacity()) + " tokens, context is " +
                     std::to_string(context));
  }
  DocumentEmbedding doc;
  doc.plan = plan_chunks(tokens.size(), context, overlap);
  doc.provider_id = provider.id();
  const std::size_t m = doc.plan.count();

  std::vector<ChunkSum> sums(m);
  const std::size_t width = std::max<std::size_t>(1, options.max_concurrency);
  if (width == 1) {
    for (std::size_t k = 0; k < m; ++k) sums[k] = embed_one(tokens, provider, doc.plan, k, options.mode);
  } else {
    for (std::size_t base = 0; base < m; base += width) {
      std::vector<std::future<ChunkSum>> wave;
      for (std::size_t k = base; k < std::min(m, base + width); ++k) {
        wave.push_back(std::async(std::launch::async, embed_one, tokens, std::cref(provider),
                                  std::cref(doc.plan), k, options.mode));
      }
      for (std::size_t i = 0; i < wave.size(); ++i) sums[base + i] = wave[i].get();
    }
  }

  const std::size_t d = provider.dim();
  std::vector<double> acc(d, 0.0);
  const bool uniform = std::all_of(sums.begin(), sums.end(), [&](const ChunkSum& s) {
    return s.denominator == sums.front().denominator;
  });
  if (uniform) {
    // Equal denominators: pool all sums and divide once.
    for (const auto& s : sums) {
      for (std::size_t j = 0; j < d; ++j) acc[j] += s.sum[j];
    }
    const double denom = static_cast<double>(sums.front().denominator) * static_cast<double>(m);
    for (auto& v : acc) v /= denom;
  } else {
    for (const auto& s : sums) {
      for (std::size_t j = 0; j < d; ++j) acc[j] += s.sum[j] / static_cast<double>(s.denominator);
    }
    for (auto& v : acc) v /= static_cast<double>(m);
  }
  doc.values.assign(acc.begin(), acc.end());
  return doc;
}

// ---- Classifier head -------------------------------------------------------

EmbedClassifier::EmbedClassifier(std::size_t dim)
    : weight("head.weight", {dim, kNumClasses}, true), bias("head.bias", {kNumClasses}), dim_(dim) {
  if (dim < 1) throw UsageError("embedding dimension must be positive");
}

void EmbedClassifier::fit(const std::vector<std::vector<float>>& rows,
                          std::span<const Label> labels, const EmbedHeadConfig& cfg) {
  if (rows.empty() || rows.size() != labels.size()) {
    throw UsageError("need one label per embedding and at least one sample");
  }
  for (const auto& r : rows) {
    if (r.size() != dim_) {
      throw UsageError("embedding of dimension " + std::to_string(r.size()) +
                       " given to a head of dimension " + std::to_string(dim_));
    }
  }
  std::array<std::size_t, kNumClasses> counts{};
  for (auto l : labels) ++counts[label_index(l)];
  std::size_t present = 0;
  for (auto c : counts) present += c > 0;
  std::array<float, kNumClasses> w{};
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    w[c] = counts[c] ? static_cast<float>(static_cast<double>(rows.size()) /
                                          (static_cast<double>(present) * counts[c]))
                     : 1.0f;
  }

  auto rng = make_rng(cfg.seed, "embed-head-init");
  nn::init_glorot_uniform(weight.value, dim_, kNumClasses, rng);
  bias.value.set_zero();
  std::vector<nn::Param<float>*> params{&weight, &bias};
  nn::AdamState<float> adam;
  std::vector<std::size_t> order(rows.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto erng = make_rng(cfg.seed, "embed-head-epoch", epoch);
    std::shuffle(order.begin(), order.end(), erng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      nn::Tensor x({end - start, dim_});
      std::vector<std::int32_t> y;
      for (std::size_t k = start; k < end; ++k) {
        std::copy(rows[order[k]].begin(), rows[order[k]].end(), x.data() + (k - start) * dim_);
        y.push_back(static_cast<std::int32_t>(label_index(labels[order[k]])));
      }
      nn::zero_grads<float>(params);
      const auto z = nn::dense(x, weight.value, bias.value);
      const auto loss = nn::softmax_cross_entropy<float>(z, y, w);
      if (!std::isfinite(loss.loss)) throw std::runtime_error("embedding head diverged");
      nn::dense_backward(x, weight.value, loss.grad, weight.grad, bias.grad);
      nn::adam_step<float>(params, adam, cfg.lr, cfg.l2);
    }
  }
}

Prediction EmbedClassifier::classify(std::span<const float> embedding) const {
  if (embedding.size() != dim_) {
    throw UsageError("embedding of dimension " + std::to_string(embedding.size()) +
                     " given to a head of dimension " + std::to_string(dim_));
  }
  nn::Tensor x({1, dim_}, std::vector<float>(embedding.begin(), embedding.end()));
  const auto p = nn::softmax(nn::dense(x, weight.value, bias.value));
  Prediction out;
  // Normalise in double so the probabilities sum to 1 to double precision.
  double sum = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) sum += p[c];
  for (std::size_t c = 0; c < kNumClasses; ++c) out.probabilities[c] = p[c] / sum;
  out.label = label_from_index(argmax_lowest(out.probabilities));
  return out;
}

Metrics EmbedClassifier::evaluate(const std::vector<std::vector<float>>& rows,
                                  std::span<const Label> labels) const {
  std::vector<Label> predicted;
  for (const auto& r : rows) predicted.push_back(classify(r).label);
  return compute_metrics(labels, predicted);
}

nlohmann::json EmbedClassifier::to_json() const {
  return {{"dim", dim_},
          {"weight", std::vector<float>(weight.value.values().begin(), weight.value.values().end())},
          {"bias", std::vector<float>(bias.value.values().begin(), bias.value.values().end())}};
}

EmbedClassifier EmbedClassifier::from_json(const nlohmann::json& j) {
  EmbedClassifier c(j.at("dim").get<std::size_t>());
  const auto w = j.at("weight").get<std::vector<float>>();
  const auto b = j.at("bias").get<std::vector<float>>();
  if (w.size() != c.weight.value.size() || b.size() != kNumClasses) {
    throw UsageError("embedding head parameters do not match its dimension");
  }
  std::copy(w.begin(), w.end(), c.weight.value.data());
  std::copy(b.begin(), b.end(), c.bias.value.data());
  return c;
}

// ---- Store -----------------------------------------------------------------

namespace {
constexpr std::array<char, 8> kStoreMagic = {'L', 'T', 'D', 'O', 'C', 'E', 'M', 'B'};
constexpr std::uint32_t kStoreVersion = 1;

void write_string(std::ostream& out, const std::string& s) {
  detail::write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
  std::string s(detail::read_u32(in), '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(s.size()))) {
    throw UsageError("truncated embedding store");
  }
  return s;
}
}  // namespace

void write_doc_store(const std::filesystem::path& path, const DocEmbeddingStore& store) {
  if (store.ids.size() != store.rows.size()) {
    throw std::invalid_argument("store ids and rows differ in length");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out.write(kStoreMagic.data(), kStoreMagic.size());
  detail::write_u32(out, kStoreVersion);
  detail::write_u32(out, static_cast<std::uint32_t>(store.dim));
  write_string(out, store.provider_id);
  detail::write_u64(out, store.rows.size());
  for (std::size_t i = 0; i < store.rows.size(); ++i) {
    if (store.rows[i].size() != store.dim) {
      throw std::invalid_argument("store row " + store.ids[i] + " has the wrong dimension");
    }
    write_string(out, store.ids[i]);
    detail::write_f32(out, store.rows[i]);
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

DocEmbeddingStore read_doc_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("embedding store not found: " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kStoreMagic) throw UsageError(path.string() + " is not an embedding store");
  if (detail::read_u32(in) != kStoreVersion) throw UsageError("unsupported embedding store version");
  DocEmbeddingStore store;
  store.dim = detail::read_u32(in);
  store.provider_id = read_string(in);
  const auto n = detail::read_u64(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    store.ids.push_back(read_string(in));
    std::vector<float> row(store.dim);
    detail::read_f32(in, row);
    store.rows.push_back(std::move(row));
  }
  return store;
}

}  // namespace logtriage
