#include "logtriage/labels.hpp"

namespace logtriage {

namespace {
constexpr std::array<std::string_view, kNumClasses> kNames = {"Pass", "L0_L1",
                                                              "L2", "L3"};
}  // namespace

Label label_from_index(std::size_t index) {
  if (index >= kNumClasses) {
    throw std::out_of_range("class index " + std::to_string(index) +
                            " out of range");
  }
  return static_cast<Label>(index);
}

std::string_view label_name(Label label) { return kNames[label_index(label)]; }

std::optional<Label> parse_label(std::string_view text) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (text == kNames[i]) return static_cast<Label>(i);
  }
  return std::nullopt;
}

}  // namespace logtriage
