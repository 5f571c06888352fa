// logtriage: command-line front end for the log triage pipeline.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "logtriage/classifier.hpp"
#include "logtriage/config.hpp"
#include "logtriage/corpus.hpp"
#include "logtriage/doc_embed.hpp"
#include "logtriage/lm.hpp"
#include "logtriage/synlog.hpp"
#include "logtriage/utf8.hpp"

namespace fs = std::filesystem;
using namespace logtriage;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<std::size_t> max_len;
  std::string conv_layers;
  bool bilstm = false;
  std::string provider;
  std::string endpoint;
};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig build_config(const Globals& g, const std::vector<std::string>& extras) {
  RunConfig cfg;
  if (!g.config_path.empty()) cfg.load_ini(g.config_path);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out_dir = g.out;
  if (g.max_len) cfg.arch.max_len = *g.max_len;
  if (!g.conv_layers.empty()) cfg.arch.conv_layers = parse_conv_layers(g.conv_layers);
  if (g.bilstm) cfg.arch.bilstm_front = true;
  if (!g.provider.empty()) cfg.set("embed.provider", g.provider);
  if (!g.endpoint.empty()) cfg.embed.endpoint = g.endpoint;
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const auto& arg = extras[i];
    if (!arg.starts_with("--")) throw UsageError("unexpected argument \"" + arg + "\"");
    const auto eq = arg.find('=');
    if (eq != std::string::npos) {
      cfg.set(arg.substr(2, eq - 2), arg.substr(eq + 1));
    } else if (i + 1 < extras.size() && !extras[i + 1].starts_with("--")) {
      cfg.set(arg.substr(2), extras[i + 1]);
      ++i;
    } else {
      throw UsageError("config override " + arg + " needs a value (--section.key=value)");
    }
  }
  cfg.train.seed = derive_seed(cfg.seed, "train");
  cfg.lm.seed = derive_seed(cfg.seed, "lm");
  cfg.synth.seed = cfg.seed;
  cfg.embed.head.seed = derive_seed(cfg.seed, "embed-head");
  cfg.validate();
  return cfg;
}

fs::path default_manifest(const fs::path& data, const std::string& manifest) {
  if (!manifest.empty()) return manifest;
  return data / "manifest.csv";
}

void report_warnings(const ScanResult& scan) {
  for (const auto& w : scan.warnings) std::cerr << "warning: " << w.path << ": " << w.message << "\n";
}

// Labeled, PPU-cleaned records listed in the manifest.
std::vector<LogRecord> load_labeled(const fs::path& data, const std::string& manifest,
                                    const RunConfig& cfg) {
  const auto mpath = default_manifest(data, manifest);
  if (!fs::exists(mpath)) throw UsageError("manifest not found: " + mpath.string());
  auto scan = load_manifest_records(data, mpath);
  report_warnings(scan);
  auto records = select_categories(std::move(scan.records), cfg.ppu);
  if (records.empty()) throw UsageError("no logs found");
  for (auto& r : records) {
    r = make_record(r.id, preprocess_log(r.raw_text, cfg.ppu), r.label, r.source_path);
  }
  return records;
}

std::vector<Label> labels_of(const std::vector<LogRecord>& records) {
  std::vector<Label> out;
  for (const auto& r : records) out.push_back(*r.label);
  return out;
}

struct DataSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

DataSplit split_records(const std::vector<LogRecord>& records, const RunConfig& cfg) {
  const auto labels = labels_of(records);
  const auto outer = stratified_split(labels, cfg.test_fraction, cfg.seed, "test-split");
  std::vector<Label> inner_labels;
  for (auto i : outer.first) inner_labels.push_back(labels[i]);
  const auto inner = stratified_split(inner_labels, cfg.train.val_fraction, cfg.seed, "val-split");
  DataSplit s;
  s.test = outer.second;
  for (auto i : inner.first) s.train.push_back(outer.first[i]);
  for (auto i : inner.second) s.val.push_back(outer.first[i]);
  return s;
}

std::vector<Sample> samples_for(const std::vector<LogRecord>& records,
                                const std::vector<std::size_t>& idx, const CharVocab& vocab,
                                const ArchConfig& arch) {
  std::vector<std::string> texts;
  std::vector<Label> labels;
  for (auto i : idx) {
    texts.push_back(records[i].raw_text);
    labels.push_back(*records[i].label);
  }
  return encode_samples(texts, labels, vocab, arch.max_len, arch.truncation);
}

CharVocab vocab_from(const std::vector<LogRecord>& records, const std::vector<std::size_t>& idx) {
  std::vector<LogRecord> subset;
  for (auto i : idx) subset.push_back(records[i]);
  return CharVocab::build(build_training_corpus(subset));
}

void print_epoch(const EpochStats& s) {
  std::fprintf(stderr,
               "epoch %3zu  loss %.4f  acc %.4f  f1_micro %.4f  val_loss %.4f  val_acc %.4f  "
               "val_f1_micro %.4f\n",
               s.epoch, s.train_loss, s.train_accuracy, s.train_f1_micro, s.val_loss,
               s.val_accuracy, s.val_f1_micro);
}

std::string history_csv(const std::vector<EpochStats>& h) {
  std::ostringstream out;
  out << "epoch,train_loss,train_accuracy,train_f1_micro,val_loss,val_accuracy,val_f1_micro\n";
  for (const auto& s : h) {
    out << s.epoch << ',' << s.train_loss << ',' << s.train_accuracy << ',' << s.train_f1_micro
        << ',' << s.val_loss << ',' << s.val_accuracy << ',' << s.val_f1_micro << '\n';
  }
  return out.str();
}

// ---- Subcommands -----------------------------------------------------------

int cmd_synth(const RunConfig& cfg) {
  const auto rows = generate_dataset(cfg.synth, cfg.out_dir);
  std::array<std::size_t, kNumClasses> counts{};
  for (const auto& r : rows) ++counts[label_index(r.label)];
  std::cout << "wrote " << rows.size() << " logs and manifest.csv to " << cfg.out_dir.string() << "\n";
  for (auto l : kAllLabels) std::cout << "  " << label_name(l) << ": " << counts[label_index(l)] << "\n";
  return 0;
}

int cmd_preprocess(const RunConfig& cfg, const std::string& in_dir, const std::string& manifest) {
  std::optional<fs::path> mpath;
  if (!manifest.empty()) {
    mpath = manifest;
  } else if (fs::exists(fs::path(in_dir) / "manifest.csv")) {
    mpath = fs::path(in_dir) / "manifest.csv";
  }
  auto scan = scan_corpus(in_dir, mpath);
  report_warnings(scan);
  auto records = select_categories(std::move(scan.records), cfg.ppu);
  if (records.empty()) throw UsageError("no logs found in " + in_dir);

  const auto before = size_histogram(records, 20);
  std::vector<LogRecord> cleaned;
  for (const auto& r : records) {
    cleaned.push_back(make_record(r.id, preprocess_log(r.raw_text, cfg.ppu), r.label, r.source_path));
  }
  const auto report = tukey_filter(cleaned, cfg.hard_cap_bytes);
  const auto kept = apply_filter(std::move(cleaned), report);
  if (kept.empty()) throw UsageError("every log was removed by the size filter");
  const auto tc = build_training_corpus(kept);
  const auto vocab = CharVocab::build(tc);

  auto hist_json = [](const std::vector<HistogramBin>& bins) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& b : bins) j.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}});
    return j;
  };
  nlohmann::json rep = report.to_json();
  rep["histogram_before"] = hist_json(before);
  rep["histogram_after"] = hist_json(size_histogram(kept, 20));
  nlohmann::json warnings = nlohmann::json::array();
  for (const auto& w : scan.warnings) warnings.push_back({{"path", w.path}, {"message", w.message}});
  rep["warnings"] = warnings;

  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "tc.txt", tc);
  write_text(cfg.out_dir / "filter_report.json", rep.dump(2) + "\n");
  vocab.save(cfg.out_dir / "vocab.json");
  std::ostringstream kept_csv;
  kept_csv << "id\n";
  for (const auto& r : kept) kept_csv << r.id << "\n";
  write_text(cfg.out_dir / "kept.txt", kept_csv.str());

  std::cout << "logs: " << records.size() << " scanned, " << kept.size() << " kept, "
            << report.dropped_ids.size() << " dropped (Tukey bounds [" << report.lower_bound << ", "
            << report.upper_bound << "] chars)\n";
  std::cout << "training corpus: " << utf8_length(tc) << " chars, vocabulary " << vocab.size()
            << " ids (" << vocab.corpus_chars() << " characters + pad + unk)\n";
  return 0;
}

int cmd_lm_train(RunConfig cfg, const std::string& corpus_path, const std::string& vocab_path) {
  const fs::path cpath = corpus_path.empty() ? cfg.out_dir / "tc.txt" : fs::path(corpus_path);
  const auto corpus = read_text(cpath);
  const auto vocab = vocab_path.empty() ? CharVocab::build(corpus) : CharVocab::load(vocab_path);
  if (cfg.lm.seq_len == 0) cfg.lm.seq_len = median_block_length(corpus);
  cfg.lm.validate();
  const auto ids = encode_unpadded(corpus, vocab, utf8_length(corpus) + 1);
  const auto pairs = make_sequence_pairs(ids, cfg.lm.seq_len, cfg.lm.shift);

  LanguageModel<float> model(cfg.lm, vocab.size(), cfg.lm.seed);
  std::cerr << "language model: V=" << vocab.size() << " E=" << cfg.lm.embed_dim
            << " H=" << cfg.lm.lstm_units << " params=" << model.param_count()
            << " l_s=" << cfg.lm.seq_len << " pairs=" << pairs.size() << "\n";
  fs::create_directories(cfg.out_dir);
  const auto result = lm_train(model, pairs, [&](const LmEpoch& e, const LanguageModel<float>& m) {
    std::fprintf(stderr, "epoch %3zu  loss %.5f\n", e.epoch, e.loss);
    save_checkpoint(cfg.out_dir / "lm_last.ckpt", m.to_checkpoint(vocab));
  });
  auto ckpt = model.to_checkpoint(vocab);
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& e : result.history) hist.push_back(e.to_json());
  ckpt.metrics = {{"best_epoch", result.best_epoch}, {"best_loss", result.best_loss},
                  {"initial_loss", result.initial_loss}};
  save_checkpoint(cfg.out_dir / "lm.ckpt", ckpt);
  write_text(cfg.out_dir / "lm_history.json",
             nlohmann::json{{"history", hist}, {"best_epoch", result.best_epoch}}.dump(2) + "\n");
  std::cout << "best epoch " << result.best_epoch << " loss " << result.best_loss << " -> "
            << (cfg.out_dir / "lm.ckpt").string() << "\n";
  return 0;
}

int cmd_lm_export(const RunConfig& cfg, const std::string& ckpt_path) {
  const auto ckpt = load_checkpoint(ckpt_path);
  const auto table = extract_char_embeddings(ckpt);
  const auto out = cfg.out_dir / "char_embeddings.bin";
  write_embedding_file(out, table, ckpt.vocab);
  ckpt.vocab.save(cfg.out_dir / "vocab.json");
  std::cout << "embeddings shape (" << table.dim(0) << "," << table.dim(1) << ") vocab "
            << ckpt.vocab.hash_hex() << " -> " << out.string() << "\n";
  return 0;
}

int cmd_clf_train(const RunConfig& cfg, const std::string& data, const std::string& manifest,
                  const std::string& vocab_path, const std::string& emb_path) {
  const auto records = load_labeled(data, manifest, cfg);
  const auto split = split_records(records, cfg);
  const auto vocab = vocab_path.empty() ? vocab_from(records, split.train) : CharVocab::load(vocab_path);

  std::optional<nn::Tensor> init;
  if (!emb_path.empty()) {
    auto f = read_embedding_file(emb_path);
    if (f.vocab_hash != vocab.hash()) {
      throw UsageError("embedding file was exported for vocabulary " + to_hex(f.vocab_hash) +
                       " but the classifier uses " + vocab.hash_hex() + "; pass the matching --vocab");
    }
    init = std::move(f.table);
  }
  const auto train = samples_for(records, split.train, vocab, cfg.arch);
  const auto val = samples_for(records, split.val, vocab, cfg.arch);
  const auto test = samples_for(records, split.test, vocab, cfg.arch);

  ResidualCnn<float> model(cfg.arch, vocab.size(), derive_seed(cfg.seed, "clf-model"),
                           init ? &*init : nullptr);
  std::cerr << "classifier: " << model.param_count() << " params, " << train.size() << " train / "
            << val.size() << " val / " << test.size() << " test\n";
  TrainConfig tc = cfg.train;
  tc.on_epoch = print_epoch;
  const auto result = train_classifier(model, train, val, tc);
  const auto ev = evaluate(model, test);

  fs::create_directories(cfg.out_dir);
  auto ckpt = model.to_checkpoint(vocab);
  ckpt.metrics = ev.metrics.to_json();
  ckpt.metrics["best_epoch"] = result.best_epoch;
  save_checkpoint(cfg.out_dir / "model.ckpt", ckpt);
  vocab.save(cfg.out_dir / "vocab.json");
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& s : result.history) hist.push_back(s.to_json());
  write_text(cfg.out_dir / "history.json",
             nlohmann::json{{"history", hist}, {"best_epoch", result.best_epoch},
                            {"stopped_early", result.stopped_early}}
                     .dump(2) + "\n");
  write_text(cfg.out_dir / "history.csv", history_csv(result.history));
  write_metrics(ev.metrics, cfg.out_dir / "metrics.json", cfg.out_dir / "confusion.csv");
  std::vector<ManifestRow> test_rows;
  for (auto i : split.test) test_rows.push_back({records[i].id, *records[i].label});
  write_manifest(cfg.out_dir / "test_manifest.csv", test_rows);

  std::printf("test accuracy %.4f  macro-F1 %.4f  micro-F1 %.4f  (best epoch %zu)\n",
              ev.metrics.accuracy, ev.metrics.f1_macro, ev.metrics.f1_micro, result.best_epoch);
  return 0;
}

int cmd_clf_eval(const RunConfig& cfg, const std::string& ckpt_path, const std::string& data,
                 const std::string& manifest) {
  const auto ckpt = load_checkpoint(ckpt_path);
  const auto model = ResidualCnn<float>::from_checkpoint(ckpt);
  const auto records = load_labeled(data, manifest, cfg);
  std::vector<std::size_t> all(records.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const auto samples = samples_for(records, all, ckpt.vocab, model.arch());
  const auto ev = evaluate(model, samples);
  fs::create_directories(cfg.out_dir);
  write_metrics(ev.metrics, cfg.out_dir / "eval_metrics.json", cfg.out_dir / "eval_confusion.csv");
  std::cout << ev.metrics.to_json().dump(2) << "\n";
  return 0;
}

int cmd_clf_predict(const RunConfig& cfg, const std::string& ckpt_path,
                    const std::vector<std::string>& files) {
  const auto ckpt = load_checkpoint(ckpt_path);
  const auto model = ResidualCnn<float>::from_checkpoint(ckpt);
  for (const auto& f : files) {
    const auto clean = preprocess_log(read_text(f), cfg.ppu);
    const auto ids = encode_unpadded(clean, ckpt.vocab, model.arch().max_len, model.arch().truncation);
    const auto p = predict(model, ids);
    nlohmann::json probs = nlohmann::json::object();
    for (auto l : kAllLabels) probs[std::string(label_name(l))] = p.probabilities[label_index(l)];
    std::cout << nlohmann::json{{"path", f}, {"class", label_name(p.label)}, {"probabilities", probs}}.dump()
              << "\n";
  }
  return 0;
}

std::unique_ptr<EmbeddingProvider> make_provider(const RunConfig& cfg) {
  if (cfg.embed.provider == "http") {
    if (cfg.embed.endpoint.empty()) throw UsageError("--provider http needs --endpoint URL");
    HttpProviderConfig h;
    h.endpoint = cfg.embed.endpoint;
    h.auth_token = cfg.embed.auth_token;
    h.timeout_seconds = cfg.embed.timeout_seconds;
    h.dim = cfg.embed.dim;
    h.context_capacity = cfg.embed.context;
    h.max_in_flight = cfg.embed.concurrency;
    return std::make_unique<HttpProvider>(h);
  }
  return std::make_unique<MockProvider>(cfg.embed.dim, derive_seed(cfg.seed, "mock-provider"));
}

int cmd_embed(const RunConfig& cfg, const std::string& data, const std::string& manifest,
              const std::string& vocab_path, bool train_head) {
  std::vector<LogRecord> records;
  if (train_head) {
    records = load_labeled(data, manifest, cfg);
  } else {
    auto scan = manifest.empty() ? scan_corpus(data) : load_manifest_records(data, manifest);
    report_warnings(scan);
    records = select_categories(std::move(scan.records), cfg.ppu);
    if (records.empty()) throw UsageError("no logs found");
    for (auto& r : records) r = make_record(r.id, preprocess_log(r.raw_text, cfg.ppu), r.label, r.source_path);
  }
  const auto vocab = vocab_path.empty() ? CharVocab::build(build_training_corpus(records))
                                        : CharVocab::load(vocab_path);
  const auto provider = make_provider(cfg);
  EmbedOptions opts;
  opts.mode = cfg.embed.mode;
  opts.max_concurrency = cfg.embed.concurrency;

  DocEmbeddingStore store;
  store.dim = provider->dim();
  store.provider_id = provider->id();
  for (const auto& r : records) {
    auto ids = encode_unpadded(r.raw_text, vocab, std::max<std::size_t>(1, r.char_count));
    if (ids.empty()) ids.push_back(CharVocab::kPadId);
    const auto doc = embed_document(ids, *provider, cfg.embed.context, cfg.embed.effective_overlap(), opts);
    store.ids.push_back(r.id);
    store.rows.push_back(doc.values);
  }
  fs::create_directories(cfg.out_dir);
  write_doc_store(cfg.out_dir / "doc_embeddings.bin", store);
  std::cout << "embedded " << store.rows.size() << " documents with " << store.provider_id << " (dim "
            << store.dim << ", context " << cfg.embed.context << ", overlap "
            << cfg.embed.effective_overlap() << ")\n";

  if (train_head) {
    const auto labels = labels_of(records);
    const auto split = stratified_split(labels, cfg.test_fraction, cfg.seed, "test-split");
    std::vector<std::vector<float>> xtr, xte;
    std::vector<Label> ytr, yte;
    for (auto i : split.first) { xtr.push_back(store.rows[i]); ytr.push_back(labels[i]); }
    for (auto i : split.second) { xte.push_back(store.rows[i]); yte.push_back(labels[i]); }
    EmbedClassifier head(store.dim);
    head.fit(xtr, ytr, cfg.embed.head);
    const auto m = head.evaluate(xte, yte);
    write_metrics(m, cfg.out_dir / "embed_metrics.json", cfg.out_dir / "embed_confusion.csv");
    write_text(cfg.out_dir / "embed_head.json", head.to_json().dump() + "\n");
    std::printf("head test accuracy %.4f  macro-F1 %.4f\n", m.accuracy, m.f1_macro);
  }
  return 0;
}

int cmd_sweep(const RunConfig& cfg, const std::string& data, const std::string& manifest) {
  const auto records = load_labeled(data, manifest, cfg);
  const auto split = split_records(records, cfg);
  const auto vocab = vocab_from(records, split.train);
  std::ostringstream csv;
  csv << "max_len,accuracy,f1_macro,f1_micro,best_epoch\n";
  for (auto len : cfg.sweep_grid) {
    ArchConfig arch = cfg.arch;
    arch.max_len = len;
    arch.validate();
    const auto train = samples_for(records, split.train, vocab, arch);
    const auto val = samples_for(records, split.val, vocab, arch);
    const auto test = samples_for(records, split.test, vocab, arch);
    ResidualCnn<float> model(arch, vocab.size(), derive_seed(cfg.seed, "clf-model"));
    std::cerr << "max_len " << len << "\n";
    TrainConfig tc = cfg.train;
    tc.on_epoch = print_epoch;
    const auto result = train_classifier(model, train, val, tc);
    const auto ev = evaluate(model, test);
    csv << len << ',' << ev.metrics.accuracy << ',' << ev.metrics.f1_macro << ','
        << ev.metrics.f1_micro << ',' << result.best_epoch << '\n';
    std::printf("max_len %zu  accuracy %.4f  macro-F1 %.4f\n", len, ev.metrics.accuracy,
                ev.metrics.f1_macro);
  }
  fs::create_directories(cfg.out_dir);
  write_text(cfg.out_dir / "sweep.csv", csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"logtriage: defect triage for telecom test logs"};
  app.require_subcommand(1);
  app.fallthrough();
  app.allow_extras();

  Globals g;
  app.add_option("--config", g.config_path, "INI config file");
  app.add_option("--seed", g.seed, "Global random seed");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--max-len", g.max_len, "Classifier sequence length (characters)");
  app.add_option("--arch.conv-layers", g.conv_layers, "Conv stack, e.g. 64x7,64x7,64x7");
  app.add_flag("--bilstm", g.bilstm, "Insert a bidirectional LSTM after the embedding");
  app.add_option("--provider", g.provider, "Embedding provider: mock or http");
  app.add_option("--endpoint", g.endpoint, "Embedding service URL");
  app.footer("Any config key can be overridden with --section.key=value, e.g. --train.lr=1e-3.");

  std::string in_dir, data, manifest, vocab, ckpt, corpus, emb;
  std::vector<std::string> files;
  bool train_head = false;

  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic log dataset");
  auto* pre = app.add_subcommand("preprocess", "Clean logs, filter size outliers, build the corpus");
  pre->add_option("--in", in_dir, "Directory of raw logs")->required();
  pre->add_option("--manifest", manifest, "Optional manifest CSV (path,label)");
  auto* lmt = app.add_subcommand("lm-train", "Train the character language model");
  lmt->add_option("--corpus", corpus, "Training corpus (default OUT/tc.txt)");
  lmt->add_option("--vocab", vocab, "Vocabulary JSON (default: built from the corpus)");
  auto* lme = app.add_subcommand("lm-export-emb", "Export the learned character embeddings");
  lme->add_option("--checkpoint", ckpt, "Language model checkpoint")->required();
  auto* ct = app.add_subcommand("clf-train", "Train and test the residual CNN classifier");
  ct->add_option("--data", data, "Dataset directory")->required();
  ct->add_option("--manifest", manifest, "Manifest (default DATA/manifest.csv)");
  ct->add_option("--vocab", vocab, "Vocabulary JSON (default: built from the training split)");
  ct->add_option("--embeddings", emb, "Character embeddings from lm-export-emb");
  auto* ce = app.add_subcommand("clf-eval", "Evaluate a classifier checkpoint on labeled logs");
  ce->add_option("--checkpoint", ckpt, "Classifier checkpoint")->required();
  ce->add_option("--data", data, "Dataset directory")->required();
  ce->add_option("--manifest", manifest, "Manifest (default DATA/manifest.csv)");
  auto* cp = app.add_subcommand("clf-predict", "Classify log files, one JSON line each");
  cp->add_option("--checkpoint", ckpt, "Classifier checkpoint")->required();
  cp->add_option("files", files, "Log files")->required();
  auto* em = app.add_subcommand("embed", "Sliding-window document embeddings");
  em->add_option("--data", data, "Dataset directory")->required();
  em->add_option("--manifest", manifest, "Manifest CSV");
  em->add_option("--vocab", vocab, "Vocabulary JSON (default: built from the data)");
  em->add_flag("--train-head", train_head, "Train and test a softmax head on the embeddings");
  auto* sw = app.add_subcommand("sweep-context", "Accuracy versus classifier context length");
  sw->add_option("--data", data, "Dataset directory")->required();
  sw->add_option("--manifest", manifest, "Manifest (default DATA/manifest.csv)");
  for (auto* sub : app.get_subcommands({})) sub->allow_extras();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    std::vector<std::string> extras = app.remaining();
    for (auto* sub : app.get_subcommands()) {
      const auto r = sub->remaining();
      extras.insert(extras.end(), r.begin(), r.end());
    }
    const RunConfig cfg = build_config(g, extras);
    if (*synth) return cmd_synth(cfg);
    if (*pre) return cmd_preprocess(cfg, in_dir, manifest);
    if (*lmt) return cmd_lm_train(cfg, corpus, vocab);
    if (*lme) return cmd_lm_export(cfg, ckpt);
    if (*ct) return cmd_clf_train(cfg, data, manifest, vocab, emb);
    if (*ce) return cmd_clf_eval(cfg, ckpt, data, manifest);
    if (*cp) return cmd_clf_predict(cfg, ckpt, files);
    if (*em) return cmd_embed(cfg, data, manifest, vocab, train_head);
    if (*sw) return cmd_sweep(cfg, data, manifest);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
