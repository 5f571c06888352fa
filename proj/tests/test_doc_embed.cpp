#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include "httplib.h"
#include "logtriage/doc_embed.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace logtriage;

namespace {

// Returns fixed rows per token, optionally scaled.
class TableProvider final : public EmbeddingProvider {
 public:
  TableProvider(std::vector<std::vector<float>> rows, float scale = 1.0f)
      : rows_(std::move(rows)), scale_(scale) {}
  std::string id() const override { return "table"; }
  std::size_t dim() const override { return rows_.front().size(); }
  std::size_t context_capacity() const override { return 1 << 20; }
  nn::Tensor embed_chunk(std::span<const TokenId> tokens, std::span<const std::uint8_t>) const override {
    nn::Tensor out({tokens.size(), dim()});
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      for (std::size_t j = 0; j < dim(); ++j) out(i, j) = rows_.at(static_cast<std::size_t>(tokens[i]))[j] * scale_;
    }
    return out;
  }

 private:
  std::vector<std::vector<float>> rows_;
  float scale_;
};

class FailingProvider final : public EmbeddingProvider {
 public:
  std::string id() const override { return "failing"; }
  std::size_t dim() const override { return 2; }
  std::size_t context_capacity() const override { return 64; }
  nn::Tensor embed_chunk(std::span<const TokenId> tokens, std::span<const std::uint8_t>) const override {
    if (tokens[0] == 9) throw std::runtime_error("boom");
    return nn::Tensor({tokens.size(), 2});
  }
};

std::vector<TokenId> random_tokens(std::size_t n, std::mt19937_64& rng, std::size_t vocab = 20) {
  std::vector<TokenId> t(n);
  for (auto& v : t) v = static_cast<TokenId>(2 + rng() % (vocab - 2));
  return t;
}

// Local embedding service backed by a MockProvider table.
class StubServer {
 public:
  explicit StubServer(std::size_t dim, int failures_before_success = 0, bool wrong_shape = false)
      : table_(dim, 77), failures_(failures_before_success) {
    server_.Post("/embed", [this, wrong_shape](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      last_auth_ = req.get_header_value("Authorization");
      if (failures_.load() > 0) {
        --failures_;
        res.status = 500;
        return;
      }
      const auto body = nlohmann::json::parse(req.body);
      const auto tokens = body["tokens"].get<std::vector<TokenId>>();
      const auto mask = body["mask"].get<std::vector<std::uint8_t>>();
      const auto te = table_.embed_chunk(tokens, mask);
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t i = 0; i < te.dim(0) - (wrong_shape ? 1 : 0); ++i) {
        std::vector<float> r(te.data() + i * te.dim(1), te.data() + (i + 1) * te.dim(1));
        rows.push_back(r);
      }
      res.set_content(nlohmann::json{{"embeddings", rows}}.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/embed"; }
  int requests() const { return requests_.load(); }
  const MockProvider& table() const { return table_; }
  std::string last_auth() const { return last_auth_; }

 private:
  MockProvider table_;
  std::atomic<int> failures_;
  std::atomic<int> requests_{0};
  std::string last_auth_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

HttpProviderConfig http_config(const StubServer& s, std::size_t dim) {
  HttpProviderConfig c;
  c.endpoint = s.url();
  c.dim = dim;
  c.timeout_seconds = 5;
  c.backoff_seconds = 0.01;
  return c;
}

}  // namespace

TEST(PlanChunks, Examples) {
  auto p = plan_chunks(2048, 512, 256);
  EXPECT_EQ(p.count(), 7u);
  EXPECT_EQ(p.starts.front(), 0u);
  EXPECT_EQ(p.starts.back(), 1536u);
  for (std::size_t k = 1; k < p.count(); ++k) EXPECT_EQ(p.starts[k] - p.starts[k - 1], 256u);
  for (std::size_t w : {0u, 5u, 100u}) EXPECT_EQ(plan_chunks(128, 128, w).count(), 1u);
  p = plan_chunks(100, 32, 16);
  EXPECT_EQ(p.count(), 6u);
  EXPECT_EQ(p.starts.back(), 80u);
  EXPECT_GT(p.starts.back() + 32, 100u);
  EXPECT_EQ(plan_chunks(5, 32, 16).count(), 1u);
}

TEST(PlanChunks, Errors) {
  EXPECT_THROW(plan_chunks(10, 8, 8), UsageError);
  EXPECT_THROW(plan_chunks(10, 8, 9), UsageError);
  EXPECT_THROW(plan_chunks(0, 8, 2), UsageError);
}

TEST(PlanChunks, MatchesEnumerationAndFormula) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t lc = 1 + rng() % 64, w = rng() % lc, L = 1 + rng() % 600;
    const auto p = plan_chunks(L, lc, w);
    EXPECT_EQ(p.starts, lt_test::chunk_starts_oracle(L, lc, w));
    if (L > lc && (L - w) % (lc - w) == 0) EXPECT_EQ(p.count(), (L - w) / (lc - w));
  }
}

TEST(Mock, Properties) {
  MockProvider a(8, 1), b(8, 2);
  const std::vector<TokenId> t = {5, 5, 6};
  const std::vector<std::uint8_t> m = {1, 1, 1};
  const auto ea = a.embed_chunk(t, m);
  EXPECT_EQ(ea.shape(), (std::vector<std::size_t>{3, 8}));
  for (std::size_t j = 0; j < 8; ++j) {
    EXPECT_EQ(ea(0, j), ea(1, j));
    EXPECT_GE(ea(0, j), -1.0f);
    EXPECT_LE(ea(0, j), 1.0f);
  }
  EXPECT_NE(ea, b.embed_chunk(t, m));
  EXPECT_EQ(ea, MockProvider(8, 1).embed_chunk(t, m));
}

TEST(EmbedDocument, SingleChunkPlainMean) {
  const std::vector<std::vector<float>> rows = {{0, 0}, {0, 0}, {1, 2}, {3, 4}, {5, 6}, {7, 8}};
  TableProvider p(rows);
  const std::vector<TokenId> t = {2, 3, 4, 5};
  const auto e = embed_document(t, p, 4, 2);
  EXPECT_FLOAT_EQ(e.values[0], 4.0f);
  EXPECT_FLOAT_EQ(e.values[1], 5.0f);
  EXPECT_EQ(e.plan.count(), 1u);
}

TEST(EmbedDocument, ConstantEmbeddingsGiveThatVector) {
  const std::vector<std::vector<float>> rows(20, std::vector<float>{0.5f, -0.25f, 2.0f});
  TableProvider p(rows);
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t lc = 1 + rng() % 16;
    const auto t = random_tokens(1 + rng() % 100, rng);
    for (auto mode : {PoolingMode::kMaskAware}) {
      EmbedOptions o;
      o.mode = mode;
      const auto e = embed_document(t, p, lc, rng() % lc, o);
      EXPECT_FLOAT_EQ(e.values[0], 0.5f);
      EXPECT_FLOAT_EQ(e.values[1], -0.25f);
      EXPECT_FLOAT_EQ(e.values[2], 2.0f);
    }
  }
}

TEST(EmbedDocument, MatchesBruteForceOracle) {
  MockProvider p(6, 3);
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t lc = 1 + rng() % 40, w = rng() % lc, L = 1 + rng() % 300;
    const auto t = random_tokens(L, rng);
    for (auto mode : {PoolingMode::kMaskAware, PoolingMode::kLiteral}) {
      EmbedOptions o;
      o.mode = mode;
      const auto got = embed_document(t, p, lc, w, o);
      const auto want = lt_test::embed_oracle(t, p, lc, w, mode);
      for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(got.values[j], want[j], 1e-6);
    }
  }
}

TEST(EmbedDocument, NoPaddingModesAgreeExactly) {
  MockProvider p(5, 4);
  std::mt19937_64 rng(4);
  // L - l_c divisible by l_c - w: every chunk is full.
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t lc = 2 + rng() % 30, w = rng() % lc, k = rng() % 8;
    const auto t = random_tokens(lc + k * (lc - w), rng);
    EmbedOptions lit;
    lit.mode = PoolingMode::kLiteral;
    const auto a = embed_document(t, p, lc, w);
    const auto b = embed_document(t, p, lc, w, lit);
    const auto o = lt_test::embed_oracle(t, p, lc, w, PoolingMode::kLiteral);
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_EQ(a.values[j], b.values[j]);
      EXPECT_EQ(b.values[j], static_cast<float>(o[j]));
    }
  }
}

TEST(EmbedDocument, ShortDocumentIgnoresOverlap) {
  MockProvider p(4, 5);
  std::mt19937_64 rng(5);
  const auto t = random_tokens(7, rng);
  const auto a = embed_document(t, p, 16, 0);
  const auto b = embed_document(t, p, 16, 15);
  EXPECT_EQ(a.values, b.values);
}

TEST(EmbedDocument, LinearInEmbeddingScale) {
  std::mt19937_64 rng(6);
  std::vector<std::vector<float>> rows(20, std::vector<float>(3));
  for (auto& r : rows) {
    for (auto& v : r) v = static_cast<float>(rng() % 1000) / 64.0f;
  }
  TableProvider base(rows), scaled(rows, 4.0f);
  const auto t = random_tokens(77, rng);
  const auto a = embed_document(t, base, 10, 5);
  const auto b = embed_document(t, scaled, 10, 5);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(b.values[j], 4.0f * a.values[j], 1e-4);
}

TEST(EmbedDocument, ConcurrencyDoesNotChangeResult) {
  MockProvider p(8, 6);
  std::mt19937_64 rng(7);
  const auto t = random_tokens(500, rng);
  EmbedOptions par;
  par.max_concurrency = 4;
  EXPECT_EQ(embed_document(t, p, 32, 16).values, embed_document(t, p, 32, 16, par).values);
}

TEST(EmbedDocument, ProviderErrorsCarryChunkIndex) {
  FailingProvider p;
  std::vector<TokenId> t(20, 2);
  t[8] = 9;  // chunk 2 starts at 8 with l_c=8, w=4
  try {
    embed_document(t, p, 8, 4);
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.chunk(), 2u);
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
  EXPECT_THROW(embed_document(t, p, 128, 4), UsageError);
}

TEST(Http, ParseResponse) {
  const auto t = parse_embedding_response(R"({"embeddings":[[1,2],[3,4]]})", 2, 2);
  EXPECT_EQ(t(1, 0), 3.0f);
  EXPECT_THROW(parse_embedding_response(R"({"embeddings":[[1,2]]})", 2, 2), std::runtime_error);
  EXPECT_THROW(parse_embedding_response(R"({"embeddings":[[1],[2]]})", 2, 2), std::runtime_error);
  EXPECT_THROW(parse_embedding_response("not json", 2, 2), std::runtime_error);
}

TEST(Http, MatchesMockPipeline) {
  StubServer server(6);
  auto cfg = http_config(server, 6);
  cfg.auth_token = "secret";
  HttpProvider http(cfg);
  std::mt19937_64 rng(8);
  const auto t = random_tokens(90, rng);
  for (auto mode : {PoolingMode::kMaskAware, PoolingMode::kLiteral}) {
    EmbedOptions o;
    o.mode = mode;
    o.max_concurrency = 3;
    EXPECT_EQ(embed_document(t, http, 32, 16, o).values, embed_document(t, server.table(), 32, 16, o).values);
  }
  EXPECT_EQ(server.last_auth(), "Bearer secret");
  EXPECT_EQ(static_cast<std::size_t>(server.requests()), http.network_calls());
}

TEST(Http, RetriesAfterServerError) {
  StubServer server(4, 1);
  HttpProvider http(http_config(server, 4));
  const std::vector<TokenId> t = {2, 3, 4};
  const auto e = embed_document(t, http, 4, 2);
  EXPECT_EQ(server.requests(), 2);
  EXPECT_EQ(e.values, embed_document(t, server.table(), 4, 2).values);
}

TEST(Http, GivesUpAfterThreeAttempts) {
  StubServer server(4, 100);
  HttpProvider http(http_config(server, 4));
  const std::vector<TokenId> t = {2, 3, 4};
  try {
    embed_document(t, http, 4, 2);
    FAIL();
  } catch (const ProviderError& e) {
    EXPECT_EQ(e.chunk(), 0u);
    EXPECT_NE(std::string(e.what()).find("after 3 attempt"), std::string::npos) << e.what();
  }
  EXPECT_EQ(server.requests(), 3);
}

TEST(Http, ShapeMismatchIsAnError) {
  StubServer server(4, 0, true);
  HttpProvider http(http_config(server, 4));
  const std::vector<TokenId> t = {2, 3, 4};
  EXPECT_THROW(embed_document(t, http, 4, 2), ProviderError);
}

TEST(Http, CacheHitMakesNoNetworkCalls) {
  TempDir dir("http_cache");
  StubServer server(4);
  auto cfg = http_config(server, 4);
  cfg.cache_dir = dir.path();
  std::mt19937_64 rng(9);
  const auto t = random_tokens(40, rng);
  HttpProvider first(cfg);
  const auto a = embed_document(t, first, 8, 4);
  EXPECT_GT(first.network_calls(), 0u);
  const int served = server.requests();
  HttpProvider second(cfg);
  const auto b = embed_document(t, second, 8, 4);
  EXPECT_EQ(second.network_calls(), 0u);
  EXPECT_EQ(server.requests(), served);
  EXPECT_EQ(a.values, b.values);
}

TEST(Http, CacheDirFromEnvironment) {
  TempDir dir("http_env");
  ::setenv("LOGTRIAGE_CACHE_DIR", dir.path().c_str(), 1);
  StubServer server(4);
  HttpProvider http(http_config(server, 4));
  ::unsetenv("LOGTRIAGE_CACHE_DIR");
  EXPECT_EQ(http.cache_dir(), dir.path());
}

TEST(Http, RejectsNonHttpEndpoint) {
  HttpProviderConfig c;
  c.endpoint = "ftp://x";
  c.dim = 4;
  EXPECT_THROW(HttpProvider{c}, UsageError);
}

TEST(Head, SeparableBlobsFitPerfectly) {
  std::mt19937_64 rng(10);
  std::normal_distribution<float> noise(0.0f, 0.1f);
  std::vector<std::vector<float>> rows;
  std::vector<Label> labels;
  for (int i = 0; i < 80; ++i) {
    const bool pos = i % 2;
    rows.push_back({(pos ? 2.0f : -2.0f) + noise(rng), noise(rng), 1.0f + noise(rng)});
    labels.push_back(pos ? Label::kL2 : Label::kPass);
  }
  EmbedClassifier head(3);
  EmbedHeadConfig cfg;
  cfg.epochs = 60;
  head.fit(rows, labels, cfg);
  EXPECT_EQ(head.evaluate(rows, labels).accuracy, 1.0);
  const auto p = head.classify(rows[0]);
  double s = 0;
  for (double v : p.probabilities) s += v;
  EXPECT_NEAR(s, 1.0, 1e-6);
  const auto back = EmbedClassifier::from_json(head.to_json());
  EXPECT_EQ(back.classify(rows[3]).probabilities, head.classify(rows[3]).probabilities);
  EXPECT_THROW(head.fit({{1.0f, 2.0f}}, std::vector<Label>{Label::kPass}, cfg), UsageError);
}

TEST(Store, RoundTrip) {
  TempDir dir("doc_store");
  DocEmbeddingStore s;
  s.dim = 3;
  s.provider_id = "mock";
  s.ids = {"a.log", "b/c.log"};
  s.rows = {{1, 2, 3}, {4.5f, -1, 0}};
  write_doc_store(dir.path() / "s.bin", s);
  const auto b = read_doc_store(dir.path() / "s.bin");
  EXPECT_EQ(b.dim, 3u);
  EXPECT_EQ(b.provider_id, "mock");
  EXPECT_EQ(b.ids, s.ids);
  EXPECT_EQ(b.rows, s.rows);
}
