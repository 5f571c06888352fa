#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "logtriage/labels.hpp"

namespace logtriage {

using TokenId = std::int32_t;

// Character-level vocabulary. Ids 0 and 1 are reserved for padding and
// unknown characters; the corpus characters follow in ascending code-point
// order, so size() == distinct characters + 2.
class CharVocab {
 public:
  static constexpr TokenId kPadId = 0;
  static constexpr TokenId kUnkId = 1;
  static constexpr std::size_t kReserved = 2;

  CharVocab() = default;

  // Throws UsageError on an empty corpus.
  static CharVocab build(std::string_view utf8_corpus);
  static CharVocab from_chars(std::vector<char32_t> chars);

  std::size_t size() const { return chars_.size() + kReserved; }
  std::size_t corpus_chars() const { return chars_.size(); }

  TokenId id_of(char32_t c) const;
  // Throws std::out_of_range for ids outside [0, size()).
  char32_t char_of(TokenId id) const;
  const std::vector<char32_t>& chars() const { return chars_; }

  // Fingerprint of the id assignment; stable across runs and platforms.
  std::uint64_t hash() const;
  std::string hash_hex() const;

  // JSON array in id order: "<pad>", "<unk>", then one string per character.
  nlohmann::json to_json() const;
  static CharVocab from_json(const nlohmann::json& j);

  void save(const std::filesystem::path& path) const;
  static CharVocab load(const std::filesystem::path& path);

  bool operator==(const CharVocab& other) const { return chars_ == other.chars_; }

 private:
  std::vector<char32_t> chars_;
  std::unordered_map<char32_t, TokenId> index_;
};

enum class Truncation { kHead, kTail };

// Maps text to ids without padding; over-long input keeps the first (kHead)
// or last (kTail) max_len characters.
std::vector<TokenId> encode_unpadded(std::string_view utf8_text,
                                     const CharVocab& vocab, std::size_t max_len,
                                     Truncation mode = Truncation::kHead);

// Fixed-length encoding: truncated per `mode`, right-padded with kPadId.
std::vector<TokenId> encode(std::string_view utf8_text, const CharVocab& vocab,
                            std::size_t max_len,
                            Truncation mode = Truncation::kHead);

// Drops pad ids; unknown ids decode to U+FFFD.
std::string decode(std::span<const TokenId> ids, const CharVocab& vocab);

std::string to_hex(std::uint64_t value);

}  // namespace logtriage
