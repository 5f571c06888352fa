#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "logtriage/metrics.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace logtriage;

TEST(Metrics, PerfectTwoClass) {
  const std::vector<Label> t = {Label::kPass, Label::kPass, Label::kL2, Label::kL2};
  const auto m = compute_metrics(t, t);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.confusion[0][0], 2u);
  EXPECT_EQ(m.confusion[2][2], 2u);
  EXPECT_EQ(m.per_class[0].f1, 1.0);
  EXPECT_EQ(m.per_class[2].f1, 1.0);
  EXPECT_EQ(m.f1_micro, 1.0);
}

TEST(Metrics, HandCountedScores) {
  const auto s = scores_from_counts(3, 1, 2);
  EXPECT_DOUBLE_EQ(s.precision, 0.75);
  EXPECT_DOUBLE_EQ(s.recall, 0.6);
  EXPECT_NEAR(s.f1, 2 * 0.45 / 1.35, 1e-12);
  EXPECT_NEAR(s.f1, 0.6667, 1e-4);
  const auto z = scores_from_counts(0, 0, 0);
  EXPECT_EQ(z.f1, 0.0);
}

TEST(Metrics, AgreesWithPerSampleOracle) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 60;
    std::vector<Label> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = label_from_index(rng() % kNumClasses);
      p[i] = rng() % 3 ? t[i] : label_from_index(rng() % kNumClasses);
    }
    const auto m = compute_metrics(t, p);
    const auto o = lt_test::metrics_oracle(t, p);
    for (std::size_t c = 0; c < kNumClasses; ++c) {
      EXPECT_NEAR(m.per_class[c].precision, o.precision[c], 1e-12);
      EXPECT_NEAR(m.per_class[c].recall, o.recall[c], 1e-12);
      EXPECT_NEAR(m.per_class[c].f1, o.f1[c], 1e-12);
    }
    EXPECT_NEAR(m.accuracy, o.accuracy, 1e-12);
    EXPECT_NEAR(m.f1_macro, o.f1_macro, 1e-12);
    EXPECT_NEAR(m.f1_micro, o.f1_micro, 1e-12);
    EXPECT_NEAR(m.f1_micro, m.accuracy, 1e-12);
    std::size_t total = 0;
    for (std::size_t r = 0; r < kNumClasses; ++r) {
      std::size_t row = 0;
      for (auto v : m.confusion[r]) row += v;
      EXPECT_EQ(row, static_cast<std::size_t>(std::count(t.begin(), t.end(), label_from_index(r))));
      total += row;
    }
    EXPECT_EQ(total, n);
    EXPECT_EQ(m.total, n);
  }
}

TEST(Metrics, Errors) {
  EXPECT_THROW(compute_metrics({}, {}), UsageError);
  const std::vector<Label> a = {Label::kPass}, b = {Label::kPass, Label::kL3};
  EXPECT_THROW(compute_metrics(a, b), UsageError);
}

TEST(Metrics, ReportFiles) {
  const std::vector<Label> t = {Label::kPass, Label::kL0L1, Label::kL3};
  const std::vector<Label> p = {Label::kPass, Label::kL3, Label::kL3};
  const auto m = compute_metrics(t, p);
  const auto csv = m.confusion_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "true\\pred,Pass,L0_L1,L2,L3");
  const auto j = m.to_json();
  for (const char* k : {"confusion", "per_class", "accuracy", "f1_macro", "f1_micro"}) {
    EXPECT_TRUE(j.contains(k)) << k;
  }
  TempDir dir("metrics");
  write_metrics(m, dir.path() / "m.json", dir.path() / "c.csv");
  std::ifstream in(dir.path() / "m.json");
  EXPECT_EQ(nlohmann::json::parse(in)["accuracy"].get<double>(), m.accuracy);
}
