#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "logtriage/doc_embed.hpp"
#include "logtriage/rng.hpp"

namespace logtriage {

// Bounds the number of concurrent requests.
struct HttpProvider::Gate {
  std::mutex mu;
  std::condition_variable cv;
  std::size_t in_flight = 0;
  std::size_t limit = 1;

  void enter() {
    std::unique_lock lock(mu);
    cv.wait(lock, [&] { return in_flight < limit; });
    ++in_flight;
  }
  void leave() {
    {
      std::lock_guard lock(mu);
      --in_flight;
    }
    cv.notify_one();
  }
};

namespace {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;
};

Endpoint split_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos || url.compare(0, scheme, "http") != 0) {
    throw UsageError("endpoint must be an http:// URL, got \"" + url + "\"");
  }
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

std::optional<std::string> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

HttpProvider::HttpProvider(HttpProviderConfig cfg)
    : cfg_(std::move(cfg)),
      calls_(std::make_unique<std::atomic<std::size_t>>(0)),
      gate_(std::make_unique<Gate>()) {
  split_endpoint(cfg_.endpoint);
  if (cfg_.dim < 1) throw UsageError("http provider needs a positive embedding dimension");
  if (cfg_.max_attempts < 1) throw UsageError("http provider needs at least one attempt");
  gate_->limit = std::max<std::size_t>(1, cfg_.max_in_flight);
  if (cfg_.cache_dir.empty()) {
    if (const char* env = std::getenv("LOGTRIAGE_CACHE_DIR"); env && *env) cfg_.cache_dir = env;
  }
}

HttpProvider::~HttpProvider() = default;

std::string HttpProvider::id() const {
  return "http:" + cfg_.endpoint + ":dim=" + std::to_string(cfg_.dim);
}

nn::Tensor HttpProvider::embed_chunk(std::span<const TokenId> tokens,
                                     std::span<const std::uint8_t> mask) const {
  if (tokens.size() != mask.size()) throw std::invalid_argument("tokens and mask differ in length");
  const nlohmann::json request = {{"tokens", std::vector<TokenId>(tokens.begin(), tokens.end())},
                                  {"mask", std::vector<int>(mask.begin(), mask.end())}};
  const std::string body = request.dump();

  std::filesystem::path cache_file;
  if (!cfg_.cache_dir.empty()) {
    cache_file = cfg_.cache_dir / (to_hex(fnv1a64(cfg_.endpoint + "\n" + body)) + ".json");
    if (auto cached = read_file(cache_file)) {
      try {
        return parse_embedding_response(*cached, tokens.size(), cfg_.dim);
      } catch (const std::runtime_error&) {
        // Unusable cache entry; fetch again and overwrite it.
      }
    }
  }

  const auto ep = split_endpoint(cfg_.endpoint);
  httplib::Client client(ep.base);
  const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
  const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!cfg_.auth_token.empty()) headers.emplace("Authorization", "Bearer " + cfg_.auth_token);

  std::string last_error;
  double backoff = cfg_.backoff_seconds;
  std::size_t made = 0;
  for (std::size_t attempt = 1; attempt <= cfg_.max_attempts; ++attempt) {
    gate_->enter();
    auto res = client.Post(ep.path, headers, body, "application/json");
    gate_->leave();
    ++*calls_;
    ++made;
    bool retryable = true;
    if (!res) {
      last_error = "request error: " + httplib::to_string(res.error());
    } else if (res->status == 200) {
      auto table = parse_embedding_response(res->body, tokens.size(), cfg_.dim);
      if (!cache_file.empty()) {
        std::filesystem::create_directories(cfg_.cache_dir);
        const auto tmp = cache_file.string() + "." +
                         std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id())) +
                         ".tmp";
        {
          std::ofstream out(tmp, std::ios::binary);
          out << res->body;
        }
        std::filesystem::rename(tmp, cache_file);
      }
      return table;
    } else {
      last_error = "HTTP status " + std::to_string(res->status);
      retryable = res->status >= 500 || res->status == 429 || res->status == 408;
    }
    if (!retryable) break;
    if (attempt < cfg_.max_attempts) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2;
    }
  }
  throw std::runtime_error("embedding request to " + cfg_.endpoint + " failed after " +
                           std::to_string(made) + " attempt(s): " + last_error);
}

}  // namespace logtriage
