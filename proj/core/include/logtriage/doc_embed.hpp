#pragma once

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "logtriage/classifier.hpp"
#include "logtriage/labels.hpp"
#include "logtriage/metrics.hpp"
#include "logtriage/nn/layers.hpp"
#include "logtriage/vocab.hpp"

namespace logtriage {

// Overlapping windows of `context` tokens advancing by context - overlap.
struct ChunkPlan {
  std::size_t doc_len = 0;
  std::size_t context = 0;
  std::size_t overlap = 0;
  std::vector<std::size_t> starts;

  std::size_t count() const { return starts.size(); }
  nlohmann::json to_json() const;
};

// One chunk when L <= l_c, else ceil((L - w) / (l_c - w)) chunks; the last one
// may run past L and is padded. Throws UsageError unless L >= 1 and
// 0 <= w < l_c.
ChunkPlan plan_chunks(std::size_t doc_len, std::size_t context, std::size_t overlap);

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::size_t context_capacity() const = 0;
  // tokens and mask have equal length; returns [len, dim].
  virtual nn::Tensor embed_chunk(std::span<const TokenId> tokens,
                                 std::span<const std::uint8_t> mask) const = 0;
};

// Deterministic stand-in: each token id maps to a fixed pseudo-random vector
// in [-1, 1]^dim, independent of position.
class MockProvider final : public EmbeddingProvider {
 public:
  MockProvider(std::size_t dim, std::uint64_t seed, std::size_t capacity = 1u << 20);

  std::string id() const override;
  std::size_t dim() const override { return dim_; }
  std::size_t context_capacity() const override { return capacity_; }
  nn::Tensor embed_chunk(std::span<const TokenId> tokens,
                         std::span<const std::uint8_t> mask) const override;

  float value(TokenId token, std::size_t j) const;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
  std::size_t capacity_;
};

struct HttpProviderConfig {
  std::string endpoint;  // http://host[:port]/path
  std::string auth_token;
  double timeout_seconds = 30;
  std::size_t dim = 0;
  std::size_t context_capacity = 4096;
  std::size_t max_attempts = 3;
  double backoff_seconds = 0.2;  // doubled after every failed attempt
  std::size_t max_in_flight = 4;
  // Empty = $LOGTRIAGE_CACHE_DIR, or no caching when that is unset too.
  std::filesystem::path cache_dir;
};

// Client for an external embedding service. Wire format:
//   POST {"tokens":[int...],"mask":[0|1...]} -> {"embeddings":[[float...]...]}
// Responses are cached on disk, one file per request hash holding the
// response body verbatim.
class HttpProvider final : public EmbeddingProvider {
 public:
  explicit HttpProvider(HttpProviderConfig cfg);
  ~HttpProvider() override;

  std::string id() const override;
  std::size_t dim() const override { return cfg_.dim; }
  std::size_t context_capacity() const override { return cfg_.context_capacity; }
  nn::Tensor embed_chunk(std::span<const TokenId> tokens,
                         std::span<const std::uint8_t> mask) const override;

  std::size_t network_calls() const { return calls_->load(); }
  const std::filesystem::path& cache_dir() const { return cfg_.cache_dir; }

 private:
  struct Gate;
  HttpProviderConfig cfg_;
  std::unique_ptr<std::atomic<std::size_t>> calls_;
  std::unique_ptr<Gate> gate_;
};

// Parses {"embeddings": [[...]]}; throws std::runtime_error unless it is
// rows x dim.
nn::Tensor parse_embedding_response(const std::string& body, std::size_t rows, std::size_t dim);

class ProviderError : public std::runtime_error {
 public:
  ProviderError(std::size_t chunk, const std::string& what)
      : std::runtime_error("chunk " + std::to_string(chunk) + ": " + what), chunk_(chunk) {}
  std::size_t chunk() const { return chunk_; }

 private:
  std::size_t chunk_;
};

enum class PoolingMode {
  kMaskAware,  // chunk mean over real tokens only
  kLiteral,    // sum over all l_c rows, pads included, divided by l_c
};

struct DocumentEmbedding {
  std::vector<float> values;
  std::string provider_id;
  ChunkPlan plan;
};

struct EmbedOptions {
  PoolingMode mode = PoolingMode::kMaskAware;
  std::size_t max_concurrency = 1;
};

// Mean over chunks of the per-chunk mean token embedding. Chunks may be
// embedded concurrently; the reduction always runs in chunk order.
// Provider failures surface as ProviderError carrying the chunk index.
DocumentEmbedding embed_document(std::span<const TokenId> tokens,
                                 const EmbeddingProvider& provider, std::size_t context,
                                 std::size_t overlap, const EmbedOptions& options = {});

struct EmbedHeadConfig {
  double lr = 1e-2;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

// Multinomial logistic regression over document embeddings, trained with
// class weights N / (C * n_c) over the classes present.
class EmbedClassifier {
 public:
  EmbedClassifier() = default;
  explicit EmbedClassifier(std::size_t dim);

  std::size_t dim() const { return dim_; }
  // rows: one embedding per sample. Throws UsageError on a dimension mismatch.
  void fit(const std::vector<std::vector<float>>& rows, std::span<const Label> labels,
           const EmbedHeadConfig& cfg);
  Prediction classify(std::span<const float> embedding) const;
  Metrics evaluate(const std::vector<std::vector<float>>& rows,
                   std::span<const Label> labels) const;

  nlohmann::json to_json() const;
  static EmbedClassifier from_json(const nlohmann::json& j);

  nn::Param<float> weight;  // [dim, 4]
  nn::Param<float> bias;    // [4]

 private:
  std::size_t dim_ = 0;
};

// Store: "LTDOCEMB", u32 version, u32 dim, u32 provider-id length + bytes,
// u64 rows, then per row u32 id length + id bytes + dim float32 (LE).
struct DocEmbeddingStore {
  std::size_t dim = 0;
  std::string provider_id;
  std::vector<std::string> ids;
  std::vector<std::vector<float>> rows;
};

void write_doc_store(const std::filesystem::path& path, const DocEmbeddingStore& store);
DocEmbeddingStore read_doc_store(const std::filesystem::path& path);

}  // namespace logtriage
