#include "logtriage/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

#include "logtriage/labels.hpp"

namespace logtriage {

namespace {
constexpr std::array<char, 8> kMagic = {'L', 'T', 'R', 'G', 'C', 'K', 'P', 'T'};
}

namespace detail {

template <typename T>
void write_le(std::ostream& out, T v) {
  std::array<char, sizeof(T)> buf;
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(buf.data(), buf.size());
}

template <typename T>
T read_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> buf;
  if (!in.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
    throw UsageError("unexpected end of file");
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

void write_u32(std::ostream& out, std::uint32_t v) { write_le(out, v); }
void write_u64(std::ostream& out, std::uint64_t v) { write_le(out, v); }
std::uint32_t read_u32(std::istream& in) { return read_le<std::uint32_t>(in); }
std::uint64_t read_u64(std::istream& in) { return read_le<std::uint64_t>(in); }

void write_f32(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(float)));
  } else {
    for (float f : values) write_u32(out, std::bit_cast<std::uint32_t>(f));
  }
}

void read_f32(std::istream& in, std::span<float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!in.read(reinterpret_cast<char*>(values.data()),
                 static_cast<std::streamsize>(values.size() * sizeof(float)))) {
      throw UsageError("unexpected end of file in tensor data");
    }
  } else {
    for (float& f : values) f = std::bit_cast<float>(read_u32(in));
  }
}

}  // namespace detail

const nn::Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw std::out_of_range("checkpoint has no tensor named " + name);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["kind"] = ckpt.kind;
  header["config"] = ckpt.config;
  header["vocab"] = ckpt.vocab.to_json();
  header["vocab_hash"] = ckpt.vocab.hash_hex();
  header["metrics"] = ckpt.metrics;
  nlohmann::json list = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    list.push_back({{"name", t.name},
                    {"shape", t.tensor.shape()},
                    {"offset", offset},
                    {"count", t.tensor.size()}});
    offset += t.tensor.size() * sizeof(float);
  }
  header["tensors"] = list;
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write checkpoint " + path.string());
  out.write(kMagic.data(), kMagic.size());
  detail::write_u32(out, Checkpoint::kVersion);
  detail::write_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& t : ckpt.tensors) detail::write_f32(out, t.tensor.values());
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("checkpoint not found: " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw UsageError(path.string() + " is not a checkpoint file");
  const auto version = detail::read_u32(in);
  if (version != Checkpoint::kVersion) {
    throw UsageError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = detail::read_u64(in);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw UsageError("truncated checkpoint header in " + path.string());
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("corrupt checkpoint header: " + std::string(e.what()));
  }
  Checkpoint ckpt;
  ckpt.kind = header.at("kind").get<std::string>();
  ckpt.config = header.at("config");
  ckpt.vocab = CharVocab::from_json(header.at("vocab"));
  ckpt.metrics = header.value("metrics", nlohmann::json::object());
  if (header.contains("vocab_hash") && header["vocab_hash"] != ckpt.vocab.hash_hex()) {
    throw UsageError("checkpoint vocab hash mismatch in " + path.string());
  }
  const auto data_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    NamedTensor t;
    t.name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    t.tensor = nn::Tensor(shape);
    if (t.tensor.size() != entry.at("count").get<std::size_t>()) {
      throw UsageError("tensor " + t.name + " count does not match its shape");
    }
    in.seekg(data_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    detail::read_f32(in, t.tensor.values());
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

}  // namespace logtriage
