#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace logtriage {

inline constexpr char32_t kReplacementChar = U'�';

// Decodes UTF-8, replacing every invalid byte with U+FFFD.
std::u32string decode_utf8(std::string_view bytes);

std::string encode_utf8(std::u32string_view text);
void append_utf8(std::string& out, char32_t cp);

// Number of scalar values decode_utf8 would produce.
std::size_t utf8_length(std::string_view bytes);

}  // namespace logtriage
