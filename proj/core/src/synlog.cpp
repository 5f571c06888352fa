#include "logtriage/synlog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

namespace logtriage {

namespace {

constexpr std::array<std::string_view, 13> kCommands = {
    "RRC_CONNECTION_SETUP", "CELL_CONFIG",  "UE_ATTACH",     "BEARER_SETUP",
    "HANDOVER_PREP",        "MEAS_CONFIG",  "PAGING_CONFIG", "SCHED_CONFIG",
    "RF_CALIBRATE",         "SIB_UPDATE",   "UE_DETACH",     "TRAFFIC_START",
    "TRAFFIC_STOP"};

constexpr std::array<std::string_view, 12> kEvents = {
    "MAC_UL_GRANT",    "MAC_DL_ASSIGN",     "RLC_STATUS_PDU", "PDCP_SN_REPORT",
    "RRC_MEAS_REPORT", "PHY_CQI_REPORT",    "RACH_ATTEMPT",   "UE_CONTEXT_UPDATE",
    "TIMER_EXPIRY",    "THROUGHPUT_REPORT", "HARQ_ACK",       "SRS_CONFIG"};

constexpr std::array<std::string_view, 6> kStatus = {"SUCCESS", "OK",      "DONE",
                                                     "ACCEPTED", "PENDING", "COMPLETE"};

constexpr std::array<std::string_view, 10> kKeys = {"cell", "ue",  "rnti", "mcs",  "harq",
                                                    "prb",  "snr", "bwp",  "beam", "layer"};

constexpr std::array<std::string_view, 8> kDetailWords = {
    "config applied", "state stable", "counters updated", "buffer drained",
    "grant scheduled", "report queued", "timer restarted", "context stored"};

// Pairwise overlaps are at most one keyword, so a signature plus one stray
// symptom line can never complete a second signature.
constexpr std::array<std::array<std::string_view, 3>, 3> kSignatures = {{
    {"PHY_SYNC_LOST", "HARQ_NACK_BURST", "RRC_REESTABLISH_REQ"},
    {"HARQ_NACK_BURST", "RLC_MAX_RETX", "PDCP_INTEGRITY_FAIL"},
    {"RRC_REESTABLISH_REQ", "NAS_REJECT", "PDCP_INTEGRITY_FAIL"},
}};

constexpr std::array<std::string_view, 5> kSymptoms = {
    "PHY_SYNC_LOST", "HARQ_NACK_BURST", "RRC_REESTABLISH_REQ", "RLC_MAX_RETX",
    "PDCP_INTEGRITY_FAIL"};

constexpr std::array<std::string_view, 4> kSymptomTails = {
    "reported by serving cell", "raised on active bearer", "observed during traffic",
    "flagged by layer monitor"};

template <typename Range>
std::string_view pick(const Range& r, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, r.size() - 1);
  return r[d(rng)];
}

std::size_t uniform(std::size_t lo, std::size_t hi, Rng& rng) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

bool chance(double p, Rng& rng) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; }

std::string hex(std::size_t digits, Rng& rng) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (std::size_t i = 0; i < digits; ++i) s += kHex[uniform(0, 15, rng)];
  return s;
}

std::string param(Rng& rng) {
  const auto key = pick(kKeys, rng);
  if (key == "rnti") return std::string(key) + "=0x" + hex(4, rng);
  if (key == "snr") return "snr=" + std::to_string(uniform(0, 30, rng)) + "dB";
  return std::string(key) + "=" + std::to_string(uniform(0, 63, rng));
}

std::string detail_line(Rng& rng) {
  switch (uniform(0, 5, rng)) {
    case 0:
      return "    ts " + std::to_string(uniform(100000, 9999999, rng));
    case 1:
      return "    " + std::string(pick(kKeys, rng)) + " " + std::to_string(uniform(0, 4095, rng));
    case 2:
      // Over-long word, removed by the preprocessor.
      return "    payload 0x" + hex(uniform(48, 96, rng), rng);
    case 3:
      return "    " + param(rng) + " " + param(rng);
    default:
      return "    " + std::string(pick(kDetailWords, rng));
  }
}

std::string header_line(Rng& rng) {
  std::string line;
  if (chance(0.5, rng)) {
    line = "C: " + std::string(pick(kCommands, rng)) + "_CNF status=" +
           std::string(pick(kStatus, rng));
  } else {
    line = "I: " + std::string(pick(kEvents, rng)) + "_IND";
  }
  for (std::size_t i = uniform(0, 2, rng); i > 0; --i) line += " " + param(rng);
  return line;
}

std::string block(const SynConfig& cfg, Rng& rng) {
  const std::size_t target = uniform(cfg.block_len_min, cfg.block_len_max, rng);
  std::string text = header_line(rng) + "\n";
  while (text.size() < target) text += detail_line(rng) + "\n";
  if (chance(0.01, rng)) {
    // Register dump on one line, longer than the preprocessor's line limit.
    std::string dump = "    dump";
    while (dump.size() < 450) dump += " " + hex(8, rng);
    text += dump + "\n";
  }
  return text;
}

std::string symptom_line(std::string_view keyword, Rng& rng) {
  return "I: " + std::string(keyword) + " " + std::string(pick(kSymptomTails, rng)) + "\n";
}

}  // namespace

void SynConfig::validate() const {
  double sum = 0;
  for (double p : class_probs) {
    if (p < 0) throw UsageError("synth class probabilities must be non-negative");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw UsageError("synth class probabilities must sum to 1, got " + std::to_string(sum));
  }
  if (n_samples < 1) throw UsageError("synth.n_samples must be positive");
  if (mean_blocks_per_log < 1) throw UsageError("synth.mean_blocks must be positive");
  if (block_len_min < 1 || block_len_max < block_len_min) {
    throw UsageError("synth block length range is invalid");
  }
  if (!(signature_strength > 0 && signature_strength <= 1)) {
    throw UsageError("synth.signature_strength must be in (0, 1]");
  }
  if (!(noise_line_prob >= 0 && noise_line_prob <= 1)) {
    throw UsageError("synth.noise_line_prob must be in [0, 1]");
  }
}

std::vector<std::string_view> signature_keywords(Label label) {
  if (label == Label::kPass) return {};
  const auto& s = kSignatures[label_index(label) - 1];
  return {s.begin(), s.end()};
}

std::optional<Label> detect_signature(std::string_view text) {
  for (std::size_t c = 0; c < kSignatures.size(); ++c) {
    const bool all = std::all_of(kSignatures[c].begin(), kSignatures[c].end(),
                                 [&](std::string_view k) { return text.find(k) != text.npos; });
    if (all) return label_from_index(c + 1);
  }
  return std::nullopt;
}

namespace {

std::string generate(Label label, const SynConfig& cfg, Rng& rng, bool* signed_out) {
  const std::size_t m = cfg.mean_blocks_per_log;
  const std::size_t n_blocks = uniform((m + 1) / 2, m + m / 2, rng);
  std::vector<std::string> blocks;
  blocks.reserve(n_blocks + 2);
  for (std::size_t i = 0; i < n_blocks; ++i) blocks.push_back(block(cfg, rng));

  bool has_signature = false;
  if (label != Label::kPass && chance(cfg.signature_strength, rng)) {
    std::string sig;
    for (auto k : kSignatures[label_index(label) - 1]) sig += symptom_line(k, rng);
    blocks.insert(blocks.begin() + static_cast<std::ptrdiff_t>(uniform(0, blocks.size(), rng)),
                  sig);
    has_signature = true;
  }
  if (chance(cfg.noise_line_prob, rng)) {
    const auto k = pick(kSymptoms, rng);
    blocks.insert(blocks.begin() + static_cast<std::ptrdiff_t>(uniform(0, blocks.size(), rng)),
                  symptom_line(k, rng));
  }
  if (signed_out) *signed_out = has_signature;
  std::string text;
  for (const auto& b : blocks) text += b;
  return text;
}

std::vector<Label> allocate_labels(const SynConfig& cfg) {
  const auto n = static_cast<double>(cfg.n_samples);
  std::array<std::size_t, kNumClasses> counts{};
  std::array<double, kNumClasses> remainder{};
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const double exact = n * cfg.class_probs[c];
    counts[c] = static_cast<std::size_t>(std::floor(exact));
    remainder[c] = exact - std::floor(exact);
    assigned += counts[c];
  }
  std::array<std::size_t, kNumClasses> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < cfg.n_samples; ++i, ++assigned) ++counts[order[i]];

  std::vector<Label> labels;
  for (std::size_t c = 0; c < kNumClasses; ++c) labels.insert(labels.end(), counts[c], label_from_index(c));
  auto rng = make_rng(cfg.seed, "synlog-labels");
  std::shuffle(labels.begin(), labels.end(), rng);
  return labels;
}

}  // namespace

std::string generate_log(Label label, const SynConfig& cfg, Rng& rng) {
  return generate(label, cfg, rng, nullptr);
}

SynDataset generate_corpus(const SynConfig& cfg) {
  cfg.validate();
  SynDataset ds;
  ds.labels = allocate_labels(cfg);
  ds.texts.resize(cfg.n_samples);
  ds.has_signature.resize(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) {
    auto rng = make_rng(cfg.seed, "synlog", i);
    bool sig = false;
    ds.texts[i] = generate(ds.labels[i], cfg, rng, &sig);
    ds.has_signature[i] = sig;
  }
  return ds;
}

std::vector<ManifestRow> generate_dataset(const SynConfig& cfg,
                                          const std::filesystem::path& out_dir) {
  const auto ds = generate_corpus(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw UsageError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<ManifestRow> rows;
  for (std::size_t i = 0; i < ds.texts.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "syn_%06zu.log", i + 1);
    std::ofstream out(out_dir / name, std::ios::binary);
    out << ds.texts[i];
    if (!out) throw std::runtime_error("failed to write " + (out_dir / name).string());
    rows.push_back({name, ds.labels[i]});
  }
  write_manifest(out_dir / "manifest.csv", rows);
  return rows;
}

}  // namespace logtriage
