#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "logtriage/synlog.hpp"
#include "support/temp_dir.hpp"

using namespace logtriage;

namespace {

SynConfig quick(std::size_t n = 200) {
  SynConfig c;
  c.n_samples = n;
  c.mean_blocks_per_log = 6;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Synlog, PassHasNoSignature) {
  auto cfg = quick();
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto text = generate_log(Label::kPass, cfg, rng);
    EXPECT_FALSE(detect_signature(text).has_value());
  }
  EXPECT_TRUE(signature_keywords(Label::kPass).empty());
}

TEST(Synlog, FullStrengthAlwaysCarriesSignature) {
  auto cfg = quick();
  cfg.signature_strength = 1.0;
  Rng rng(2);
  for (auto l : {Label::kL0L1, Label::kL2, Label::kL3}) {
    for (int i = 0; i < 50; ++i) {
      const auto text = generate_log(l, cfg, rng);
      EXPECT_EQ(detect_signature(text), l);
      for (auto kw : signature_keywords(l)) EXPECT_NE(text.find(kw), std::string::npos);
    }
  }
}

TEST(Synlog, BlockStructure) {
  auto cfg = quick();
  Rng rng(3);
  const auto text = generate_log(Label::kL2, cfg, rng);
  std::istringstream in(text);
  std::string line;
  ASSERT_TRUE(std::getline(in, line));
  EXPECT_TRUE(line.starts_with("C:") || line.starts_with("I:")) << line;
}

TEST(Synlog, DeterministicPerSeed) {
  auto cfg = quick();
  Rng a(9), b(9), c(10);
  const auto ta = generate_log(Label::kL3, cfg, a);
  EXPECT_EQ(ta, generate_log(Label::kL3, cfg, b));
  EXPECT_NE(ta, generate_log(Label::kL3, cfg, c));
}

TEST(Synlog, SignaturesSurvivePreprocessing) {
  auto cfg = quick(300);
  cfg.signature_strength = 1.0;
  const auto ds = generate_corpus(cfg);
  const PpuConfig ppu;
  for (std::size_t i = 0; i < ds.texts.size(); ++i) {
    const auto cleaned = preprocess_log(ds.texts[i], ppu);
    EXPECT_EQ(detect_signature(cleaned), detect_signature(ds.texts[i]));
    if (ds.labels[i] != Label::kPass) EXPECT_EQ(detect_signature(cleaned), ds.labels[i]);
  }
}

TEST(Synlog, PreprocessingRemovesSomething) {
  // Generated logs carry numbers, long hex payloads and dump lines for the cleaner to drop.
  const auto ds = generate_corpus(quick(50));
  std::size_t before = 0, after = 0;
  for (const auto& t : ds.texts) {
    before += t.size();
    after += preprocess_log(t, PpuConfig{}).size();
  }
  EXPECT_LT(after, before);
}

TEST(Synlog, InjectionRateMatchesStrength) {
  SynConfig cfg;
  cfg.n_samples = 10000;
  cfg.class_probs = {0.0, 0.4, 0.35, 0.25};
  cfg.mean_blocks_per_log = 3;
  cfg.signature_strength = 0.7;
  const auto ds = generate_corpus(cfg);
  std::size_t with = 0;
  for (std::size_t i = 0; i < ds.texts.size(); ++i) {
    const bool found = detect_signature(ds.texts[i]) == ds.labels[i];
    EXPECT_EQ(found, static_cast<bool>(ds.has_signature[i]));
    with += found;
  }
  EXPECT_NEAR(double(with) / double(ds.texts.size()), 0.7, 0.02);
}

TEST(Synlog, ClassFrequenciesFollowProbabilities) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto cfg = quick(1000);
    cfg.seed = seed;
    cfg.mean_blocks_per_log = 1;
    const auto ds = generate_corpus(cfg);
    std::array<double, kNumClasses> f{};
    for (auto l : ds.labels) f[label_index(l)] += 1.0 / ds.labels.size();
    for (std::size_t c = 0; c < kNumClasses; ++c) EXPECT_NEAR(f[c], cfg.class_probs[c], 0.02);
  }
}

TEST(Synlog, ConfigValidation) {
  SynConfig c;
  c.class_probs = {0.5, 0.5, 0.5, 0};
  EXPECT_THROW(c.validate(), UsageError);
  c = SynConfig{};
  c.signature_strength = 0;
  EXPECT_THROW(c.validate(), UsageError);
  c = SynConfig{};
  c.block_len_min = 200;
  EXPECT_THROW(c.validate(), UsageError);
  EXPECT_NO_THROW(SynConfig{}.validate());
  // Default skew: Pass dominant, L3 under a tenth of Pass.
  EXPECT_LT(SynConfig{}.class_probs[3], SynConfig{}.class_probs[0] / 10);
}

TEST(Dataset, ManifestAndFiles) {
  TempDir dir("synds");
  auto cfg = quick(40);
  const auto rows = generate_dataset(cfg, dir.path());
  EXPECT_EQ(rows.size(), 40u);
  const auto manifest = read_manifest(dir.path() / "manifest.csv");
  ASSERT_EQ(manifest.size(), 40u);
  for (const auto& r : manifest) EXPECT_TRUE(std::filesystem::exists(dir.path() / r.path)) << r.path;
  const auto first = slurp(dir.path() / "manifest.csv");
  TempDir again("synds2");
  generate_dataset(cfg, again.path());
  EXPECT_EQ(slurp(again.path() / "manifest.csv"), first);
  EXPECT_EQ(slurp(again.path() / manifest[7].path), slurp(dir.path() / manifest[7].path));
}

TEST(Dataset, AllPass) {
  auto cfg = quick(30);
  cfg.class_probs = {1.0, 0, 0, 0};
  for (auto l : generate_corpus(cfg).labels) EXPECT_EQ(l, Label::kPass);
}

TEST(Dataset, DefaultScale) {
  SynConfig cfg;
  cfg.mean_blocks_per_log = 1;
  cfg.block_len_min = 10;
  cfg.block_len_max = 20;
  EXPECT_EQ(SynConfig{}.n_samples, 3262u);
  EXPECT_EQ(generate_corpus(cfg).labels.size(), 3262u);
}
