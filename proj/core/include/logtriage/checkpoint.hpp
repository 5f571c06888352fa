#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "logtriage/nn/tensor.hpp"
#include "logtriage/vocab.hpp"

namespace logtriage {

struct NamedTensor {
  std::string name;
  nn::Tensor tensor;
};

// On disk: "LTRGCKPT", u32 version, u64 header length, JSON header, then the
// tensors as little-endian float32 blobs at the offsets listed in the header.
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::string kind;  // "residual_cnn" or "char_lm"
  nlohmann::json config;
  CharVocab vocab;
  nlohmann::json metrics = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  // Throws std::out_of_range naming the missing tensor.
  const nn::Tensor& tensor(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

// Throws UsageError for missing files and malformed containers.
Checkpoint load_checkpoint(const std::filesystem::path& path);

namespace detail {
void write_u32(std::ostream& out, std::uint32_t v);
void write_u64(std::ostream& out, std::uint64_t v);
void write_f32(std::ostream& out, std::span<const float> values);
std::uint32_t read_u32(std::istream& in);
std::uint64_t read_u64(std::istream& in);
void read_f32(std::istream& in, std::span<float> values);
}  // namespace detail

}  // namespace logtriage
