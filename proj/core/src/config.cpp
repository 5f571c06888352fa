#include "logtriage/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace logtriage {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& v) {
  std::size_t used = 0;
  const long long n = std::stoll(v, &used);
  if (used != v.size() || n < 0) throw std::invalid_argument(v);
  return static_cast<std::size_t>(n);
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument(v);
  return d;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument(v);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::size_t> to_size_list(const std::string& v) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(v)) out.push_back(to_size(s));
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"global.seed", [](RunConfig& c, const std::string& v) { c.seed = std::stoull(v); }},
      {"global.out", [](RunConfig& c, const std::string& v) { c.out_dir = v; }},

      {"ppu.max_word_len", [](RunConfig& c, const std::string& v) { c.ppu.max_word_len = to_size(v); }},
      {"ppu.max_line_len", [](RunConfig& c, const std::string& v) { c.ppu.max_line_len = to_size(v); }},
      {"ppu.strip_numbers", [](RunConfig& c, const std::string& v) { c.ppu.strip_numbers = to_bool(v); }},
      // Repeated keys append; a log is kept if any pattern matches.
      {"ppu.category_pattern",
       [](RunConfig& c, const std::string& v) { c.ppu.category_patterns.push_back(v); }},
      {"ppu.hard_cap_bytes", [](RunConfig& c, const std::string& v) { c.hard_cap_bytes = to_size(v); }},

      {"lm.seq_len", [](RunConfig& c, const std::string& v) { c.lm.seq_len = to_size(v); }},
      {"lm.shift", [](RunConfig& c, const std::string& v) { c.lm.shift = to_size(v); }},
      {"lm.embed_dim", [](RunConfig& c, const std::string& v) { c.lm.embed_dim = to_size(v); }},
      {"lm.lstm_units", [](RunConfig& c, const std::string& v) { c.lm.lstm_units = to_size(v); }},
      {"lm.lr", [](RunConfig& c, const std::string& v) { c.lm.lr = to_double(v); }},
      {"lm.batch_size", [](RunConfig& c, const std::string& v) { c.lm.batch_size = to_size(v); }},
      {"lm.max_epochs", [](RunConfig& c, const std::string& v) { c.lm.max_epochs = to_size(v); }},
      {"lm.patience", [](RunConfig& c, const std::string& v) { c.lm.patience = to_size(v); }},
      {"lm.pairs_per_epoch",
       [](RunConfig& c, const std::string& v) { c.lm.pairs_per_epoch = to_size(v); }},

      {"arch.max_len", [](RunConfig& c, const std::string& v) { c.arch.max_len = to_size(v); }},
      {"arch.embed_dim", [](RunConfig& c, const std::string& v) { c.arch.embed_dim = to_size(v); }},
      {"arch.conv_layers",
       [](RunConfig& c, const std::string& v) { c.arch.conv_layers = parse_conv_layers(v); }},
      {"arch.residual", [](RunConfig& c, const std::string& v) { c.arch.residual = to_bool(v); }},
      {"arch.dense_units",
       [](RunConfig& c, const std::string& v) { c.arch.dense_units = to_size_list(v); }},
      {"arch.bilstm", [](RunConfig& c, const std::string& v) { c.arch.bilstm_front = to_bool(v); }},
      {"arch.bilstm_units",
       [](RunConfig& c, const std::string& v) { c.arch.bilstm_units = to_size(v); }},
      {"arch.truncation",
       [](RunConfig& c, const std::string& v) {
         if (v == "head") {
           c.arch.truncation = Truncation::kHead;
         } else if (v == "tail") {
           c.arch.truncation = Truncation::kTail;
         } else {
           throw std::invalid_argument(v);
         }
       }},

      {"train.lr", [](RunConfig& c, const std::string& v) { c.train.lr = to_double(v); }},
      {"train.max_epochs", [](RunConfig& c, const std::string& v) { c.train.max_epochs = to_size(v); }},
      {"train.patience", [](RunConfig& c, const std::string& v) { c.train.patience = to_size(v); }},
      {"train.batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = to_size(v); }},
      {"train.l2", [](RunConfig& c, const std::string& v) { c.train.l2 = to_double(v); }},
      {"train.val_fraction",
       [](RunConfig& c, const std::string& v) { c.train.val_fraction = to_double(v); }},
      {"train.test_fraction", [](RunConfig& c, const std::string& v) { c.test_fraction = to_double(v); }},
      {"train.class_weights",
       [](RunConfig& c, const std::string& v) { c.train.use_class_weights = to_bool(v); }},

      {"synth.n_samples", [](RunConfig& c, const std::string& v) { c.synth.n_samples = to_size(v); }},
      {"synth.class_probs",
       [](RunConfig& c, const std::string& v) {
         const auto parts = split_list(v);
         if (parts.size() != kNumClasses) throw std::invalid_argument(v);
         for (std::size_t i = 0; i < kNumClasses; ++i) c.synth.class_probs[i] = to_double(parts[i]);
       }},
      {"synth.mean_blocks",
       [](RunConfig& c, const std::string& v) { c.synth.mean_blocks_per_log = to_size(v); }},
      {"synth.block_len_min", [](RunConfig& c, const std::string& v) { c.synth.block_len_min = to_size(v); }},
      {"synth.block_len_max", [](RunConfig& c, const std::string& v) { c.synth.block_len_max = to_size(v); }},
      {"synth.signature_strength",
       [](RunConfig& c, const std::string& v) { c.synth.signature_strength = to_double(v); }},
      {"synth.noise_line_prob",
       [](RunConfig& c, const std::string& v) { c.synth.noise_line_prob = to_double(v); }},

      {"embed.provider",
       [](RunConfig& c, const std::string& v) {
         if (v != "mock" && v != "http") throw std::invalid_argument(v);
         c.embed.provider = v;
       }},
      {"embed.endpoint", [](RunConfig& c, const std::string& v) { c.embed.endpoint = v; }},
      {"embed.auth_token", [](RunConfig& c, const std::string& v) { c.embed.auth_token = v; }},
      {"embed.timeout", [](RunConfig& c, const std::string& v) { c.embed.timeout_seconds = to_double(v); }},
      {"embed.dim", [](RunConfig& c, const std::string& v) { c.embed.dim = to_size(v); }},
      {"embed.context", [](RunConfig& c, const std::string& v) { c.embed.context = to_size(v); }},
      {"embed.overlap", [](RunConfig& c, const std::string& v) { c.embed.overlap = to_size(v); }},
      {"embed.mode",
       [](RunConfig& c, const std::string& v) {
         if (v == "mask") {
           c.embed.mode = PoolingMode::kMaskAware;
         } else if (v == "literal") {
           c.embed.mode = PoolingMode::kLiteral;
         } else {
           throw std::invalid_argument(v);
         }
       }},
      {"embed.concurrency", [](RunConfig& c, const std::string& v) { c.embed.concurrency = to_size(v); }},
      {"embed.head_lr", [](RunConfig& c, const std::string& v) { c.embed.head.lr = to_double(v); }},
      {"embed.head_epochs", [](RunConfig& c, const std::string& v) { c.embed.head.epochs = to_size(v); }},

      {"sweep.grid", [](RunConfig& c, const std::string& v) { c.sweep_grid = to_size_list(v); }},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& RunConfig::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : setters()) k.push_back(name);
    return k;
  }();
  return keys;
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  set(section + "." + key, value);
}

void RunConfig::set(const std::string& dotted_key, const std::string& value) {
  const auto it = setters().find(dotted_key);
  if (it == setters().end()) throw UsageError("unknown config key \"" + dotted_key + "\"");
  try {
    it->second(*this, trim(value));
  } catch (const UsageError&) {
    throw;
  } catch (const std::logic_error&) {
    throw UsageError("invalid value \"" + value + "\" for config key \"" + dotted_key + "\"");
  }
}

void RunConfig::load_ini(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path.string());
  std::string line;
  std::string section = "global";
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw UsageError(path.string() + ":" + std::to_string(lineno) + ": malformed section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    set(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::validate() const {
  ppu.validate();
  arch.validate();
  train.validate();
  lm.validate();
  synth.validate();
  if (!(test_fraction > 0 && test_fraction < 1)) {
    throw UsageError("train.test_fraction must be in (0, 1)");
  }
  if (embed.context < 1) throw UsageError("embed.context must be positive");
  if (embed.effective_overlap() >= embed.context) {
    throw UsageError("embed.overlap must be smaller than embed.context");
  }
  if (embed.dim < 1) throw UsageError("embed.dim must be positive");
  for (auto g : sweep_grid) {
    if (g < 1) throw UsageError("sweep.grid lengths must be positive");
  }
}

}  // namespace logtriage
