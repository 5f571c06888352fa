#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "logtriage/nn/layers.hpp"
#include "support/layer_checks.hpp"

using namespace logtriage;
using namespace logtriage::nn;
using lt_test::TensorD;

namespace {

constexpr double kTol64 = 1e-4;
constexpr int kTrials = 25;

}  // namespace

TEST(Conv1d, HandExample) {
  TensorD x({3, 1}, std::vector<double>{1, 2, 3});
  TensorD w({3, 1, 1}, std::vector<double>{1, 1, 1});
  TensorD b({1});
  const auto y = conv1d(x, w, b);
  EXPECT_EQ(y.values()[0], 3);
  EXPECT_EQ(y.values()[1], 6);
  EXPECT_EQ(y.values()[2], 5);
}

TEST(Conv1d, CrossCorrelationIndexing) {
  // y(t) = x(t-1)*w0 + x(t)*w1 + x(t+1)*w2
  TensorD x({3, 1}, std::vector<double>{1, 2, 3});
  TensorD w({3, 1, 1}, std::vector<double>{1, 10, 100});
  const auto y = conv1d(x, w, TensorD({1}));
  EXPECT_EQ(y.values()[0], 210);
  EXPECT_EQ(y.values()[1], 321);
  EXPECT_EQ(y.values()[2], 32);
}

TEST(Conv1d, DeltaKernelIsIdentity) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t t = 1 + rng() % 10, c = 1 + rng() % 5, k = 2 * (rng() % 3) + 1;
    const auto x = lt_test::random_tensor({t, c}, rng);
    TensorD w({k, c, c});
    for (std::size_t i = 0; i < c; ++i) w(k / 2, i, i) = 1;
    EXPECT_EQ(conv1d(x, w, TensorD({c})), x);
  }
}

TEST(Conv1d, ZeroKernelZeroOutput) {
  std::mt19937_64 rng(2);
  const auto x = lt_test::random_tensor({6, 3}, rng);
  const auto y = conv1d(x, TensorD({5, 3, 4}), TensorD({4}));
  for (double v : y.values()) EXPECT_EQ(v, 0);
}

TEST(Conv1d, ShapeErrors) {
  EXPECT_THROW(conv1d(TensorD({4, 2}), TensorD({3, 3, 1}), TensorD({1})), std::invalid_argument);
  EXPECT_THROW(conv1d(TensorD({4, 2}), TensorD({2, 2, 1}), TensorD({1})), std::invalid_argument);
  EXPECT_THROW(conv1d(TensorD({4, 2}), TensorD({3, 2, 1}), TensorD({2})), std::invalid_argument);
}

TEST(Embedding, LookupAndScatter) {
  TensorD table({3, 2}, std::vector<double>{1, 2, 3, 4, 5, 6});
  const std::vector<std::int32_t> ids = {0, 0};
  const auto out = embedding_lookup<double>(ids, table);
  EXPECT_EQ(out, TensorD({2, 2}, std::vector<double>{1, 2, 1, 2}));
  TensorD grad({3, 2});
  embedding_backward<double>(ids, TensorD({2, 2}, 1.0), grad);
  EXPECT_EQ(grad(0, 0), 2);
  EXPECT_EQ(grad(0, 1), 2);
  EXPECT_EQ(grad(1, 0), 0);
  EXPECT_EQ(embedding_lookup<double>(std::vector<std::int32_t>{}, table).size(), 0u);
  EXPECT_THROW(embedding_lookup<double>(std::vector<std::int32_t>{3}, table), std::out_of_range);
}

TEST(Dense, IdentityAndScalar) {
  std::mt19937_64 rng(3);
  const auto x = lt_test::random_tensor({4, 3}, rng);
  TensorD eye({3, 3});
  for (int i = 0; i < 3; ++i) eye(i, i) = 1;
  EXPECT_EQ(dense(x, eye, TensorD({3})), x);
  const auto y = dense(TensorD({1, 1}, std::vector<double>{2}), TensorD({1, 1}, std::vector<double>{3}),
                       TensorD({1}, std::vector<double>{0.5}));
  EXPECT_EQ(y[0], 6.5);
  EXPECT_THROW(dense(x, TensorD({2, 3}), TensorD({3})), std::invalid_argument);
}

TEST(MaxPool, Examples) {
  TensorD x({2, 2}, std::vector<double>{1, 5, 3, 2});
  auto r = global_max_pool1d(x);
  EXPECT_EQ(r.output, TensorD({2}, std::vector<double>{3, 5}));
  TensorD c({3, 1}, std::vector<double>{4, 4, 4});
  r = global_max_pool1d(c);
  EXPECT_EQ(r.output[0], 4);
  const std::vector<double> g = {1};
  const auto dx = global_max_pool1d_backward(r, std::span<const double>(g));
  EXPECT_EQ(dx, TensorD({3, 1}, std::vector<double>{1, 0, 0}));
  TensorD one({1, 3}, std::vector<double>{7, 8, 9});
  EXPECT_EQ(global_max_pool1d(one).output, TensorD({3}, std::vector<double>{7, 8, 9}));
  EXPECT_THROW(global_max_pool1d(TensorD(std::vector<std::size_t>{0, 2})), std::invalid_argument);
}

TEST(SoftmaxCe, UniformLogits) {
  const std::vector<std::int32_t> t = {2};
  const auto r = softmax_cross_entropy<double>(TensorD({1, 4}), t);
  EXPECT_NEAR(r.loss, std::log(4.0), 1e-12);
  EXPECT_NEAR(r.loss, 1.3863, 1e-4);
}

TEST(SoftmaxCe, WeightScalesSampleLoss) {
  std::mt19937_64 rng(4);
  const auto logits = lt_test::random_tensor({1, 4}, rng);
  const std::vector<std::int32_t> t = {1};
  const std::vector<double> unit = {1, 1, 1, 1}, doubled = {1, 2, 1, 1};
  EXPECT_NEAR(softmax_cross_entropy<double>(logits, t, doubled).loss,
              2 * softmax_cross_entropy<double>(logits, t, unit).loss, 1e-12);
}

TEST(SoftmaxCe, InvalidTarget) {
  const std::vector<std::int32_t> t = {4};
  EXPECT_THROW(softmax_cross_entropy<double>(TensorD({1, 4}), t), std::out_of_range);
}

TEST(SoftmaxCe, ShiftInvarianceAndNormalisation) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    auto logits = lt_test::random_tensor({3, 5}, rng, 10.0);
    const auto p = softmax(logits);
    for (std::size_t b = 0; b < 3; ++b) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) s += p(b, c);
      EXPECT_NEAR(s, 1.0, 1e-6);
    }
    const std::vector<std::int32_t> t = {0, 3, 4};
    const double before = softmax_cross_entropy<double>(logits, t).loss;
    for (auto& v : logits.values()) v += 123.0;
    EXPECT_NEAR(softmax_cross_entropy<double>(logits, t).loss, before, 1e-6);
  }
  // Large logits stay finite.
  TensorD big({1, 2}, std::vector<double>{1000, -1000});
  EXPECT_TRUE(std::isfinite(softmax_cross_entropy<double>(big, std::vector<std::int32_t>{1}).loss));
}

TEST(Lstm, ZeroWeightsGiveZeroOutput) {
  Lstm<double> lstm("l", 3, 4);
  std::mt19937_64 rng(6);
  const auto x = lt_test::random_tensor({2, 5, 3}, rng);
  const auto h = lstm.forward(x);
  for (double v : h.values()) EXPECT_EQ(v, 0);
}

TEST(Lstm, SingleStepMatchesCellEquations) {
  Lstm<double> lstm("l", 2, 3);
  Rng init(9);
  lstm.init(init);
  std::mt19937_64 rng(7);
  for (auto& v : lstm.bias.value.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  const auto x = lt_test::random_tensor({1, 1, 2}, rng);
  const auto h = lstm.forward(x);
  const std::size_t H = 3;
  auto sig = [](double z) { return 1 / (1 + std::exp(-z)); };
  for (std::size_t u = 0; u < H; ++u) {
    double z[4];
    for (int g = 0; g < 4; ++g) {
      z[g] = lstm.bias.value[g * H + u];
      for (std::size_t d = 0; d < 2; ++d) z[g] += x[d] * lstm.kernel.value(d, g * H + u);
    }
    const double c = sig(z[0]) * std::tanh(z[2]);
    EXPECT_NEAR(h[u], sig(z[3]) * std::tanh(c), 1e-12);
  }
}

TEST(Lstm, Init) {
  Lstm<double> lstm("l", 4, 5);
  Rng init(1);
  lstm.init(init);
  for (std::size_t u = 0; u < 5; ++u) {
    EXPECT_EQ(lstm.bias.value[u], 0);
    EXPECT_EQ(lstm.bias.value[5 + u], 1);
  }
  // Rows of the [H, 4H] recurrent kernel are orthonormal.
  for (std::size_t a = 0; a < 5; ++a) {
    for (std::size_t b = 0; b < 5; ++b) {
      double s = 0;
      for (std::size_t j = 0; j < 20; ++j) s += lstm.recurrent.value(a, j) * lstm.recurrent.value(b, j);
      EXPECT_NEAR(s, a == b ? 1.0 : 0.0, 1e-9);
    }
  }
}

TEST(Lstm, SequenceHelper) {
  Lstm<double> f("f", 2, 3), b("b", 2, 3);
  Rng init(4);
  f.init(init);
  b.init(init);
  std::mt19937_64 rng(8);
  const auto x = lt_test::random_tensor({4, 2}, rng);
  const auto seq = lstm_forward(x, f, &b, true);
  ASSERT_EQ(seq.shape(), (std::vector<std::size_t>{4, 6}));
  const auto last = lstm_forward(x, f, &b, false);
  ASSERT_EQ(last.shape(), (std::vector<std::size_t>{6}));
  for (std::size_t u = 0; u < 3; ++u) {
    EXPECT_EQ(last[u], seq(3, u));
    EXPECT_EQ(last[3 + u], seq(0, 3 + u));
  }
  EXPECT_THROW(lstm_forward(TensorD({4, 3}), f, &b, true), std::invalid_argument);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Param<double> p("p", {1});
  p.value[0] = 0.5;
  p.grad[0] = -3.0;
  std::vector<Param<double>*> ps = {&p};
  AdamState<double> st;
  adam_step<double>(ps, st, 1e-3, 0.0);
  EXPECT_NEAR(p.value[0] - 0.5, 1e-3, 1e-9);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, ZeroGradNoChange) {
  Param<double> p("p", {3}, true);
  p.value.fill(0.25);
  std::vector<Param<double>*> ps = {&p};
  AdamState<double> st;
  adam_step<double>(ps, st, 1e-3, 0.0);
  for (double v : p.value.values()) EXPECT_EQ(v, 0.25);
}

TEST(Adam, L2AddsTwiceLambdaTimesParam) {
  // With zero loss gradient, the L2 term alone must act like grad = 2*l2*p.
  Param<double> a("a", {1}, true), b("b", {1}, false);
  a.value[0] = b.value[0] = 2.0;
  b.grad[0] = 2 * 0.1 * 2.0;
  std::vector<Param<double>*> pa = {&a}, pb = {&b};
  AdamState<double> sa, sb;
  for (int i = 0; i < 3; ++i) {
    adam_step<double>(pa, sa, 1e-2, 0.1);
    adam_step<double>(pb, sb, 1e-2, 0.0);
    a.grad.set_zero();
    b.grad[0] = 2 * 0.1 * b.value[0];
  }
  EXPECT_NEAR(a.value[0], b.value[0], 1e-12);
  EXPECT_LT(a.value[0], 2.0);
  // Unflagged params ignore l2.
  Param<double> c("c", {1}, false);
  c.value[0] = 2.0;
  std::vector<Param<double>*> pc = {&c};
  AdamState<double> sc;
  adam_step<double>(pc, sc, 1e-2, 0.1);
  EXPECT_EQ(c.value[0], 2.0);
}

TEST(Determinism, ForwardIsBitIdentical) {
  std::mt19937_64 rng(10);
  const auto x = lt_test::random_tensor({50, 8}, rng);
  const auto w = lt_test::random_tensor({7, 8, 16}, rng);
  const auto b = lt_test::random_tensor({16}, rng);
  EXPECT_EQ(conv1d(x, w, b), conv1d(x, w, b));
}

// Finite-difference checks in double precision.
#define GRADCHECK_TEST(Name, fn)                              \
  TEST(GradCheck, Name) {                                     \
    std::mt19937_64 rng(std::hash<std::string>{}(#Name));     \
    for (int i = 0; i < kTrials; ++i) {                       \
      EXPECT_LT(lt_test::fn(rng), kTol64) << "trial " << i;   \
    }                                                         \
  }

GRADCHECK_TEST(Conv1d, check_conv1d)
GRADCHECK_TEST(Embedding, check_embedding)
GRADCHECK_TEST(Dense, check_dense)
GRADCHECK_TEST(Relu, check_relu)
GRADCHECK_TEST(MaxPool, check_max_pool)
GRADCHECK_TEST(SoftmaxCrossEntropy, check_softmax_ce)
GRADCHECK_TEST(Lstm, check_lstm)
GRADCHECK_TEST(BiLstm, check_bilstm)

TEST(GradCheck, Conv1dFloat) {
  // 32-bit mode: looser tolerance.
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    auto x = lt_test::random_tensor({6, 3}, rng).cast<float>();
    auto w = lt_test::random_tensor({3, 3, 2}, rng).cast<float>();
    const BasicTensor<float> b({2});
    const auto r = lt_test::random_tensor({6, 2}, rng).cast<float>();
    auto loss = [&] {
      const auto y = conv1d(x, w, b);
      double s = 0;
      for (std::size_t i = 0; i < y.size(); ++i) s += double(y[i]) * r[i];
      return s;
    };
    BasicTensor<float> wg(w.shape()), bg({2});
    const auto dx = conv1d_backward(x, w, r, wg, bg);
    double diff = 0, norm = 0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const float keep = w[i];
      w[i] = keep + 1e-2f;
      const double up = loss();
      w[i] = keep - 1e-2f;
      const double down = loss();
      w[i] = keep;
      const double num = (up - down) / (double(keep + 1e-2f) - double(keep - 1e-2f));
      diff += (num - wg[i]) * (num - wg[i]);
      norm += num * num;
    }
    EXPECT_LT(std::sqrt(diff / norm), 1e-2);
    EXPECT_EQ(dx.shape(), x.shape());
  }
}
