#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace logtriage {

// Bad user input: unreadable files, malformed manifests, invalid config keys.
// The CLI reports these with exit code 2; everything else maps to 1.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Defect classes, ordered by class index. Pass = no defect, the rest are the
// protocol-stack layer the defect was triaged to.
enum class Label : std::uint8_t { kPass = 0, kL0L1 = 1, kL2 = 2, kL3 = 3 };

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::array<Label, kNumClasses> kAllLabels = {
    Label::kPass, Label::kL0L1, Label::kL2, Label::kL3};

constexpr std::size_t label_index(Label label) {
  return static_cast<std::size_t>(label);
}

Label label_from_index(std::size_t index);
std::string_view label_name(Label label);
std::optional<Label> parse_label(std::string_view text);

}  // namespace logtriage
