#include <gtest/gtest.h>

#include <fstream>

#include "logtriage/config.hpp"
#include "support/temp_dir.hpp"

using namespace logtriage;

TEST(Config, DefaultsValidate) { EXPECT_NO_THROW(RunConfig{}.validate()); }

TEST(Config, SetKnownKeys) {
  RunConfig c;
  c.set("train.lr", "1e-3");
  c.set("arch", "conv_layers", "256x7,256x7,256x7");
  c.set("embed.mode", "literal");
  c.set("sweep.grid", "500, 5000");
  c.set("ppu.category_pattern", "^NR");
  c.set("ppu.category_pattern", "^LTE");
  EXPECT_DOUBLE_EQ(c.train.lr, 1e-3);
  EXPECT_EQ(c.arch.conv_layers.size(), 3u);
  EXPECT_EQ(c.arch.conv_layers[0].filters, 256u);
  EXPECT_EQ(c.embed.mode, PoolingMode::kLiteral);
  EXPECT_EQ(c.sweep_grid, (std::vector<std::size_t>{500, 5000}));
  EXPECT_EQ(c.ppu.category_patterns.size(), 2u);
}

TEST(Config, UnknownKeyIsNamed) {
  RunConfig c;
  try {
    c.set("train.learning_rate", "1");
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("train.learning_rate"), std::string::npos);
  }
}

TEST(Config, InvalidValues) {
  RunConfig c;
  EXPECT_THROW(c.set("train.lr", "fast"), UsageError);
  EXPECT_THROW(c.set("arch.max_len", "-5"), UsageError);
  EXPECT_THROW(c.set("arch.residual", "maybe"), UsageError);
  EXPECT_THROW(c.set("embed.provider", "grpc"), UsageError);
  EXPECT_THROW(c.set("synth.class_probs", "0.5,0.5"), UsageError);
}

TEST(Config, ValidateCatchesCrossFieldErrors) {
  RunConfig c;
  c.embed.context = 8;
  c.embed.overlap = 8;
  EXPECT_THROW(c.validate(), UsageError);
  c = RunConfig{};
  c.test_fraction = 1.0;
  EXPECT_THROW(c.validate(), UsageError);
  c = RunConfig{};
  c.arch.max_len = 300000;
  EXPECT_THROW(c.validate(), UsageError);
}

TEST(Config, IniFile) {
  TempDir dir("ini");
  const auto path = dir.path() / "run.ini";
  std::ofstream(path) << "# comment\nseed = 17\n\n[train]\nlr = 0.001 \n; another\n[arch]\nmax_len=5000\n"
                         "[global]\nout = results\n";
  RunConfig c;
  c.load_ini(path);
  EXPECT_EQ(c.seed, 17u);
  EXPECT_DOUBLE_EQ(c.train.lr, 0.001);
  EXPECT_EQ(c.arch.max_len, 5000u);
  EXPECT_EQ(c.out_dir, "results");

  std::ofstream(path) << "[train]\nbogus = 1\n";
  try {
    RunConfig().load_ini(path);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("train.bogus"), std::string::npos);
  }
  std::ofstream(path) << "[train\n";
  EXPECT_THROW(RunConfig().load_ini(path), UsageError);
  EXPECT_THROW(RunConfig().load_ini(dir.path() / "none.ini"), UsageError);
}

TEST(Config, EveryKnownKeyHasSectionPrefix) {
  for (const auto& k : RunConfig::known_keys()) EXPECT_NE(k.find('.'), std::string::npos) << k;
  EXPECT_GE(RunConfig::known_keys().size(), 50u);
}

TEST(Config, DefaultOverlapIsHalfContext) {
  EmbedSettings e;
  e.context = 512;
  EXPECT_EQ(e.effective_overlap(), 256u);
}
