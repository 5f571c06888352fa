#include "logtriage/vocab.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "logtriage/labels.hpp"
#include "logtriage/rng.hpp"
#include "logtriage/utf8.hpp"

namespace logtriage {

namespace {
constexpr std::string_view kPadToken = "<pad>";
constexpr std::string_view kUnkToken = "<unk>";
}  // namespace

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

CharVocab CharVocab::build(std::string_view utf8_corpus) {
  if (utf8_corpus.empty()) throw UsageError("cannot build vocabulary from empty corpus");
  const std::u32string text = decode_utf8(utf8_corpus);
  std::set<char32_t> distinct(text.begin(), text.end());
  return from_chars(std::vector<char32_t>(distinct.begin(), distinct.end()));
}

CharVocab CharVocab::from_chars(std::vector<char32_t> chars) {
  CharVocab v;
  v.chars_ = std::move(chars);
  for (std::size_t i = 0; i < v.chars_.size(); ++i) {
    const auto [it, inserted] =
        v.index_.emplace(v.chars_[i], static_cast<TokenId>(i + kReserved));
    if (!inserted) throw UsageError("duplicate character in vocabulary");
  }
  return v;
}

TokenId CharVocab::id_of(char32_t c) const {
  const auto it = index_.find(c);
  return it == index_.end() ? kUnkId : it->second;
}

char32_t CharVocab::char_of(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= size()) {
    throw std::out_of_range("token id " + std::to_string(id) +
                            " outside vocabulary of size " + std::to_string(size()));
  }
  if (id == kPadId) return U'\0';
  if (id == kUnkId) return kReplacementChar;
  return chars_[static_cast<std::size_t>(id) - kReserved];
}

std::uint64_t CharVocab::hash() const {
  std::uint64_t h = fnv1a64("logtriage-vocab-v1");
  for (char32_t c : chars_) {
    const char bytes[4] = {static_cast<char>(c & 0xFF), static_cast<char>((c >> 8) & 0xFF),
                           static_cast<char>((c >> 16) & 0xFF),
                           static_cast<char>((c >> 24) & 0xFF)};
    h = fnv1a64(std::string_view(bytes, 4), h);
  }
  return h;
}

std::string CharVocab::hash_hex() const { return to_hex(hash()); }

nlohmann::json CharVocab::to_json() const {
  auto arr = nlohmann::json::array({kPadToken, kUnkToken});
  for (char32_t c : chars_) {
    std::string s;
    append_utf8(s, c);
    arr.push_back(s);
  }
  return arr;
}

CharVocab CharVocab::from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() < kReserved || j[0] != kPadToken || j[1] != kUnkToken) {
    throw UsageError("vocabulary JSON must be an array starting with \"<pad>\", \"<unk>\"");
  }
  std::vector<char32_t> chars;
  for (std::size_t i = kReserved; i < j.size(); ++i) {
    const auto s = j[i].get<std::string>();
    const auto cps = decode_utf8(s);
    if (cps.size() != 1) {
      throw UsageError("vocabulary entry " + std::to_string(i) +
                       " is not a single character");
    }
    chars.push_back(cps[0]);
  }
  return from_chars(std::move(chars));
}

void CharVocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write vocabulary " + path.string());
  out << to_json().dump() << '\n';
}

CharVocab CharVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read vocabulary " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("malformed vocabulary " + path.string() + ": " + e.what());
  }
}

std::vector<TokenId> encode_unpadded(std::string_view utf8_text,
                                     const CharVocab& vocab, std::size_t max_len,
                                     Truncation mode) {
  const std::u32string text = decode_utf8(utf8_text);
  const std::size_t n = std::min(text.size(), max_len);
  const std::size_t offset = mode == Truncation::kHead ? 0 : text.size() - n;
  std::vector<TokenId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = vocab.id_of(text[offset + i]);
  return ids;
}

std::vector<TokenId> encode(std::string_view utf8_text, const CharVocab& vocab,
                            std::size_t max_len, Truncation mode) {
  if (max_len < 1) throw UsageError("encode: max_len must be >= 1");
  auto ids = encode_unpadded(utf8_text, vocab, max_len, mode);
  ids.resize(max_len, CharVocab::kPadId);
  return ids;
}

std::string decode(std::span<const TokenId> ids, const CharVocab& vocab) {
  std::string out;
  for (TokenId id : ids) {
    const char32_t c = vocab.char_of(id);
    if (id == CharVocab::kPadId) continue;
    append_utf8(out, c);
  }
  return out;
}

}  // namespace logtriage
