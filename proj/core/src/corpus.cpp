#include "logtriage/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <regex>
#include <sstream>

#include "logtriage/utf8.hpp"

namespace logtriage {

namespace fs = std::filesystem;

LogRecord make_record(std::string id, std::string text,
                      std::optional<Label> label, std::string source_path) {
  LogRecord r;
  r.id = std::move(id);
  r.char_count = utf8_length(text);
  r.raw_text = std::move(text);
  r.label = label;
  r.source_path = std::move(source_path);
  return r;
}

void PpuConfig::validate() const {
  if (max_word_len < 1) throw UsageError("ppu.max-word-len must be >= 1");
  if (max_line_len < max_word_len) {
    throw UsageError("ppu.max-line-len must be >= ppu.max-word-len");
  }
  for (const auto& p : category_patterns) {
    try {
      std::regex re(p);
    } catch (const std::regex_error& e) {
      throw UsageError("invalid category pattern '" + p + "': " + e.what());
    }
  }
}

namespace {

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\r' || c == U'\v' || c == U'\f';
}

bool is_standalone_number(std::u32string_view tok) {
  std::size_t i = 0;
  if (!tok.empty() && (tok[0] == U'+' || tok[0] == U'-')) i = 1;
  if (i == tok.size()) return false;
  for (; i < tok.size(); ++i) {
    if (tok[i] < U'0' || tok[i] > U'9') return false;
  }
  return true;
}

// Returns false when the line had tokens and all of them were removed.
bool clean_line(std::u32string_view line, const PpuConfig& cfg,
                std::u32string& out) {
  struct Piece {
    std::u32string_view sep;  // whitespace preceding the token
    std::u32string_view token;
  };
  std::vector<Piece> pieces;
  std::size_t pos = 0;
  while (pos < line.size()) {
    const std::size_t sep_start = pos;
    while (pos < line.size() && is_space(line[pos])) ++pos;
    const std::size_t tok_start = pos;
    while (pos < line.size() && !is_space(line[pos])) ++pos;
    if (tok_start == pos) {
      // trailing whitespace
      pieces.push_back({line.substr(sep_start, pos - sep_start), {}});
      break;
    }
    pieces.push_back({line.substr(sep_start, tok_start - sep_start),
                      line.substr(tok_start, pos - tok_start)});
  }

  std::size_t n_tokens = 0;
  std::size_t n_kept = 0;
  std::u32string buf;
  bool first_removed_pending = false;  // leading separator owed to next token
  std::u32string_view leading;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    const Piece& p = pieces[i];
    if (p.token.empty()) {
      buf.append(p.sep);
      continue;
    }
    ++n_tokens;
    const bool drop = p.token.size() > cfg.max_word_len ||
                      (cfg.strip_numbers && is_standalone_number(p.token));
    if (drop) {
      if (n_kept == 0 && !first_removed_pending) {
        // Keep the indentation; the separator after this token goes instead.
        leading = p.sep;
        first_removed_pending = true;
      }
      continue;
    }
    if (n_kept == 0) {
      buf.append(first_removed_pending ? leading : p.sep);
    } else {
      buf.append(p.sep);
    }
    buf.append(p.token);
    ++n_kept;
  }
  if (n_tokens > 0 && n_kept == 0) return false;
  out.append(buf);
  return true;
}

}  // namespace

std::string preprocess_log(std::string_view raw_text, const PpuConfig& cfg) {
  const std::u32string text = decode_utf8(raw_text);
  std::u32string out;
  out.reserve(text.size());
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find(U'\n', start);
    const bool has_nl = nl != std::u32string::npos;
    const std::size_t end = has_nl ? nl : text.size();
    if (!has_nl && start == text.size()) break;
    const std::u32string_view line(text.data() + start, end - start);
    if (line.size() <= cfg.max_line_len) {
      std::u32string cleaned;
      if (clean_line(line, cfg, cleaned)) {
        out.append(cleaned);
        if (has_nl) out.push_back(U'\n');
      }
    }
    if (!has_nl) break;
    start = nl + 1;
  }
  return encode_utf8(out);
}

bool matches_category(std::string_view text, const PpuConfig& cfg) {
  if (cfg.category_patterns.empty()) return true;
  for (const auto& p : cfg.category_patterns) {
    const std::regex re(p);
    if (std::regex_search(text.begin(), text.end(), re)) return true;
  }
  return false;
}

std::vector<LogRecord> select_categories(std::vector<LogRecord> records,
                                         const PpuConfig& cfg) {
  if (cfg.category_patterns.empty()) return records;
  std::vector<std::regex> res;
  for (const auto& p : cfg.category_patterns) res.emplace_back(p);
  std::vector<LogRecord> kept;
  for (auto& r : records) {
    const bool hit = std::any_of(res.begin(), res.end(), [&](const auto& re) {
      return std::regex_search(r.raw_text, re);
    });
    if (hit) kept.push_back(std::move(r));
  }
  return kept;
}

nlohmann::json SizeFilterReport::to_json() const {
  return {{"q1", q1},
          {"q3", q3},
          {"iqr", iqr},
          {"lower_bound", lower_bound},
          {"upper_bound", upper_bound},
          {"hard_cap_bytes", hard_cap_bytes},
          {"kept_ids", kept_ids},
          {"dropped_ids", dropped_ids}};
}

double interpolated_quantile(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty set");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

SizeFilterReport tukey_filter(std::span<const LogRecord> records,
                              std::size_t hard_cap_bytes) {
  if (records.empty()) throw UsageError("tukey_filter: no records");
  std::vector<double> sizes;
  sizes.reserve(records.size());
  for (const auto& r : records) sizes.push_back(static_cast<double>(r.char_count));
  std::sort(sizes.begin(), sizes.end());

  SizeFilterReport rep;
  rep.q1 = interpolated_quantile(sizes, 0.25);
  rep.q3 = interpolated_quantile(sizes, 0.75);
  rep.iqr = rep.q3 - rep.q1;
  rep.lower_bound = rep.q1 - 1.5 * rep.iqr;
  rep.upper_bound = rep.q3 + 1.5 * rep.iqr;
  rep.hard_cap_bytes = hard_cap_bytes;
  for (const auto& r : records) {
    const auto n = static_cast<double>(r.char_count);
    const bool keep = n >= rep.lower_bound && n <= rep.upper_bound &&
                      r.byte_size() <= hard_cap_bytes;
    (keep ? rep.kept_ids : rep.dropped_ids).push_back(r.id);
  }
  return rep;
}

std::vector<LogRecord> apply_filter(std::vector<LogRecord> records,
                                    const SizeFilterReport& report) {
  std::vector<std::string> kept = report.kept_ids;
  std::sort(kept.begin(), kept.end());
  std::erase_if(records, [&](const LogRecord& r) {
    return !std::binary_search(kept.begin(), kept.end(), r.id);
  });
  return records;
}

std::vector<HistogramBin> size_histogram(std::span<const LogRecord> records,
                                         std::size_t n_bins) {
  if (n_bins < 1) throw UsageError("size_histogram: n_bins must be >= 1");
  if (records.empty()) throw UsageError("size_histogram: no records");
  auto [mn, mx] = std::minmax_element(
      records.begin(), records.end(),
      [](const auto& a, const auto& b) { return a.char_count < b.char_count; });
  const auto lo = static_cast<double>(mn->char_count);
  const auto hi = static_cast<double>(mx->char_count);
  const double width = (hi - lo) / static_cast<double>(n_bins);

  std::vector<HistogramBin> bins(n_bins);
  for (std::size_t i = 0; i < n_bins; ++i) {
    bins[i].lo = lo + width * static_cast<double>(i);
    bins[i].hi = i + 1 == n_bins ? hi : lo + width * static_cast<double>(i + 1);
  }
  for (const auto& r : records) {
    std::size_t b = 0;
    if (width > 0) {
      b = static_cast<std::size_t>(
          (static_cast<double>(r.char_count) - lo) / width);
      b = std::min(b, n_bins - 1);
    }
    ++bins[b].count;
  }
  return bins;
}

std::string build_training_corpus(std::span<const LogRecord> records) {
  std::vector<const LogRecord*> order;
  order.reserve(records.size());
  std::size_t total = 0;
  for (const auto& r : records) {
    order.push_back(&r);
    total += r.raw_text.size() + 1;
  }
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->id < b->id; });
  std::string out;
  out.reserve(total);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0) out.push_back('\n');
    out.append(order[i]->raw_text);
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

bool read_file(const fs::path& p, std::string& out) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return false;
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) return false;
  out = std::move(ss).str();
  return true;
}

std::string relative_id(const fs::path& root, const fs::path& file) {
  return fs::relative(file, root).generic_string();
}

}  // namespace

std::vector<ManifestRow> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read manifest " + path.string());
  std::vector<ManifestRow> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "path,label") {
        throw UsageError("manifest " + path.string() +
                         ": expected header 'path,label', got '" + line + "'");
      }
      header_seen = true;
      continue;
    }
    const auto fields = split_csv_line(line);
    if (fields.size() != 2 || fields[0].empty()) {
      throw UsageError("manifest " + path.string() + " row " +
                       std::to_string(line_no) + " is malformed: '" + line + "'");
    }
    const auto label = parse_label(fields[1]);
    if (!label) {
      throw UsageError("manifest " + path.string() + " row " +
                       std::to_string(line_no) + ": invalid label '" +
                       fields[1] + "' (expected Pass, L0_L1, L2 or L3)");
    }
    rows.push_back({fields[0], *label});
  }
  if (!header_seen) throw UsageError("manifest " + path.string() + " is empty");
  return rows;
}

void write_manifest(const fs::path& path, std::span<const ManifestRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << "path,label\n";
  for (const auto& r : rows) {
    out << csv_field(r.path) << ',' << label_name(r.label) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing manifest " + path.string());
}

ScanResult scan_corpus(const fs::path& root,
                       const std::optional<fs::path>& manifest) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) {
    throw UsageError("not a readable directory: " + root.string());
  }
  std::map<std::string, Label> labels;
  std::optional<fs::path> manifest_abs;
  if (manifest) {
    for (const auto& row : read_manifest(*manifest)) {
      labels[fs::path(row.path).generic_string()] = row.label;
    }
    manifest_abs = fs::weakly_canonical(*manifest);
  }

  ScanResult result;
  std::vector<fs::path> files;
  for (auto it = fs::recursive_directory_iterator(
           root, fs::directory_options::skip_permission_denied, ec);
       it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) {
      result.warnings.push_back({it->path().string(), ec.message()});
      ec.clear();
      continue;
    }
    const auto& p = it->path();
    if (p.filename().string().starts_with('.')) {
      if (it->is_directory()) it.disable_recursion_pending();
      continue;
    }
    if (!it->is_regular_file()) continue;
    if (manifest_abs && fs::weakly_canonical(p) == *manifest_abs) continue;
    files.push_back(p);
  }

  for (const auto& p : files) {
    std::string text;
    if (!read_file(p, text)) {
      result.warnings.push_back({p.string(), "unreadable file skipped"});
      continue;
    }
    auto id = relative_id(root, p);
    std::optional<Label> label;
    if (auto it = labels.find(id); it != labels.end()) label = it->second;
    result.records.push_back(make_record(id, std::move(text), label, p.string()));
  }
  std::sort(result.records.begin(), result.records.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return result;
}

ScanResult load_manifest_records(const fs::path& root, const fs::path& manifest) {
  ScanResult result;
  for (const auto& row : read_manifest(manifest)) {
    const fs::path p = root / row.path;
    std::string text;
    if (!read_file(p, text)) {
      result.warnings.push_back({p.string(), "unreadable file skipped"});
      continue;
    }
    result.records.push_back(make_record(fs::path(row.path).generic_string(),
                                         std::move(text), row.label, p.string()));
  }
  std::sort(result.records.begin(), result.records.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  return result;
}

}  // namespace logtriage
