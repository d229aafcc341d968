#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "fd.hpp"
#include "onion/nn.hpp"
#include "onion/tensor.hpp"
#include "oracles.hpp"

using namespace onion;

TEST(Tensor, ShapeAndRows) {
  Tensor t({2, 3, 1, 1}, std::vector<float>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.batch(), 2u);
  EXPECT_EQ(t.row_size(), 3u);
  EXPECT_EQ(t.row(1)[0], 4.0f);
  EXPECT_EQ(t.rows(1, 1).values(), (std::vector<float>{4, 5, 6}));
  const std::vector<std::size_t> idx{1, 0};
  EXPECT_EQ(t.gather_rows(idx).values(), (std::vector<float>{4, 5, 6, 1, 2, 3}));
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>{1, 2, 3}), ShapeError);
}

TEST(Tensor, ConcatSplitChannels) {
  std::mt19937_64 rng(3);
  const Tensor a = oracle::random_tensor({2, 2, 3, 3}, rng);
  const Tensor b = oracle::random_tensor({2, 3, 3, 3}, rng);
  const Tensor c = concat_channels(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 5, 3, 3}));
  const auto [x, y] = split_channels(c, 2);
  EXPECT_EQ(x, a);
  EXPECT_EQ(y, b);
  EXPECT_EQ(concat_channels(Tensor(), b), b);
}

TEST(Conv, OnesSumToNine) {
  const Tensor x({1, 1, 3, 3}, 1.0f), f({1, 1, 3, 3}, 1.0f);
  const std::vector<float> bias{0.0f};
  const Tensor y = conv_forward(x, f, bias, {0, 1});
  ASSERT_EQ(y.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(y[0], 9.0f);
}

TEST(Conv, IdentityFilter) {
  const Tensor x({1, 1, 1, 1}, std::vector<float>{-2.5f}), f({1, 1, 1, 1}, 1.0f);
  const std::vector<float> bias{0.0f};
  EXPECT_EQ(conv_forward(x, f, bias, {0, 1})[0], -2.5f);
}

TEST(Conv, MatchesLoopNestBitForBit) {
  std::mt19937_64 rng(11);
  const Tensor x = oracle::random_tensor({2, 3, 8, 8}, rng);
  const Tensor f = oracle::random_tensor({4, 3, 3, 3}, rng);
  const Tensor b = oracle::random_tensor({4}, rng);
  const Tensor y = conv_forward(x, f, b.data(), {1, 1});
  EXPECT_EQ(y.shape(), (Shape{2, 4, 8, 8}));
  EXPECT_EQ(y, oracle::conv_float(x, f, b.data(), 1, 1));
}

TEST(Conv, StridedPaddedMatchesLoopNest) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t h = 5 + trial % 4, k = 1 + trial % 3, pad = trial % 2, stride = 1 + trial % 3;
    const Tensor x = oracle::random_tensor({3, 2, h, h + 1}, rng);
    const Tensor f = oracle::random_tensor({3, 2, k, k}, rng);
    const Tensor b = oracle::random_tensor({3}, rng);
    EXPECT_EQ(conv_forward(x, f, b.data(), {pad, stride}), oracle::conv_float(x, f, b.data(), pad, stride));
  }
}

TEST(Conv, ThreadedEqualsSingleThreaded) {
  std::mt19937_64 rng(13);
  const Tensor x = oracle::random_tensor({7, 3, 9, 9}, rng);
  const Tensor f = oracle::random_tensor({5, 3, 3, 3}, rng);
  const Tensor b = oracle::random_tensor({5}, rng);
  const Tensor one = conv_forward(x, f, b.data(), {1, 1});
  set_num_threads(3);
  const Tensor many = conv_forward(x, f, b.data(), {1, 1});
  set_num_threads(1);
  EXPECT_EQ(one, many);
}

TEST(Conv, ShapeMismatchRejected) {
  const Tensor x({1, 2, 4, 4}), f({1, 3, 3, 3});
  const std::vector<float> bias{0.0f};
  EXPECT_THROW(conv_forward(x, f, bias, {0, 1}), ShapeError);
  const Tensor f2({1, 2, 5, 5});
  EXPECT_THROW(conv_forward(x, f2, bias, {0, 1}), ShapeError);
}

TEST(Conv, ZeroGradOutGivesZeroGrads) {
  std::mt19937_64 rng(14);
  const Tensor x = oracle::random_tensor({2, 2, 5, 5}, rng);
  const Tensor f = oracle::random_tensor({3, 2, 3, 3}, rng);
  const auto g = conv_backward(Tensor({2, 3, 3, 3}), x, f, {0, 1});
  for (float v : g.input.data()) EXPECT_EQ(v, 0.0f);
  for (float v : g.filters.data()) EXPECT_EQ(v, 0.0f);
  for (float v : g.bias) EXPECT_EQ(v, 0.0f);
}

TEST(Conv, SingleElementFilterGradIsInput) {
  const Tensor x({1, 1, 1, 1}, std::vector<float>{0.75f}), f({1, 1, 1, 1}, std::vector<float>{2.0f});
  const auto g = conv_backward(Tensor({1, 1, 1, 1}, 1.0f), x, f, {0, 1});
  EXPECT_FLOAT_EQ(g.filters[0], 0.75f);
  EXPECT_FLOAT_EQ(g.input[0], 2.0f);
  EXPECT_FLOAT_EQ(g.bias[0], 1.0f);
}

TEST(Conv, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 5; ++trial) {
    const auto r = fd::check_conv(rng, trial);
    EXPECT_LE(r.worst, 1e-3) << "trial " << trial;
  }
}

TEST(Relu, Examples) {
  const Tensor x({3}, std::vector<float>{-1, 0, 2});
  EXPECT_EQ(relu(x).values(), (std::vector<float>{0, 0, 2}));
  std::mt19937_64 rng(2);
  const Tensor y = oracle::random_tensor({2, 3, 4, 4}, rng);
  EXPECT_EQ(relu(relu(y)), relu(y));
}

TEST(MaxPool, TwoByTwo) {
  const Tensor x({1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  const auto r = maxpool(x, {2, 2});
  ASSERT_EQ(r.output.shape(), (Shape{1, 1, 1, 1}));
  EXPECT_EQ(r.output[0], 4.0f);
  const Tensor g = maxpool_backward(Tensor({1, 1, 1, 1}, 1.0f), r.argmax, x.shape());
  EXPECT_EQ(g.values(), (std::vector<float>{0, 0, 0, 1}));
}

TEST(MaxPool, MatchesLoopNest) {
  std::mt19937_64 rng(16);
  const Tensor x = oracle::random_tensor({1, 2, 6, 6}, rng);
  const auto r = maxpool(x, {2, 2});
  const auto o = oracle::maxpool(oracle::DTensor(x), 2, 2);
  EXPECT_EQ(r.output, oracle::to_float(o.out));
  ASSERT_EQ(r.argmax.size(), o.argmax.size());
  for (std::size_t i = 0; i < o.argmax.size(); ++i) EXPECT_EQ(r.argmax[i], o.argmax[i]);

  const Tensor go = oracle::random_tensor(r.output.shape(), rng);
  const Tensor gi = maxpool_backward(go, r.argmax, x.shape());
  std::vector<float> expect(x.size(), 0.0f);
  for (std::size_t i = 0; i < o.argmax.size(); ++i) expect[o.argmax[i]] += go[i];
  EXPECT_EQ(gi.values(), expect);
}

TEST(MaxPool, ConstantAndOversized) {
  const Tensor c({1, 1, 4, 4}, 2.5f);
  const auto r = maxpool(c, {2, 2});
  for (float v : r.output.data()) EXPECT_EQ(v, 2.5f);
  EXPECT_THROW(maxpool(Tensor({1, 1, 2, 2}), {3, 1}), ShapeError);
}

TEST(Flatten, RoundTrip) {
  std::mt19937_64 rng(4);
  const Tensor x = oracle::random_tensor({2, 3, 2, 2}, rng);
  const Tensor f = flatten(x);
  EXPECT_EQ(f.shape(), (Shape{2, 12, 1, 1}));
  EXPECT_EQ(unflatten(f, x.shape()), x);
}

TEST(Loss, CrossEntropyUniform) {
  const Tensor s({1, 2}, std::vector<float>{0, 0});
  const std::vector<int> y{0};
  EXPECT_NEAR(cross_entropy(s, y).loss, std::log(2.0), 1e-12);
}

TEST(Loss, CrossEntropyProperties) {
  std::mt19937_64 rng(5);
  const Tensor s = oracle::random_tensor({6, 4, 1, 1}, rng, -3.0f, 3.0f);
  const std::vector<int> y{0, 1, 2, 3, 1, 2};
  EXPECT_GE(cross_entropy(s, y).loss, 0.0);
  const Tensor p = softmax(s);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto r = p.row(i);
    EXPECT_NEAR(std::accumulate(r.begin(), r.end(), 0.0), 1.0, 1e-6);
  }
  const std::vector<int> bad{0, 1, 2, 4, 1, 2};
  EXPECT_THROW(cross_entropy(s, bad), std::out_of_range);
}

TEST(Loss, HingeBeyondMargin) {
  const Tensor s({1, 1}, std::vector<float>{5.0f});
  const std::vector<int> y{1};
  const auto r = binary_hinge(s, y);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.grad[0], 0.0f);
  const std::vector<int> bad{0};
  EXPECT_THROW(binary_hinge(s, bad), std::out_of_range);
}

TEST(Loss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    EXPECT_LE(fd::check_cross_entropy(rng).worst, 1e-4);
    EXPECT_LE(fd::check_hinge(rng).worst, 1e-4);
  }
}

TEST(Sgd, PlainStep) {
  std::vector<float> p{1.0f, 2.0f}, g{0.5f, -1.0f}, v{0.0f, 0.0f};
  sgd_step(p, g, v, {1.0f, 0.0f, 0.0f});
  EXPECT_FLOAT_EQ(p[0], 0.5f);
  EXPECT_FLOAT_EQ(p[1], 3.0f);
}

TEST(Sgd, ZeroGradLeavesParams) {
  std::vector<float> p{1.0f, -2.0f}, g{0.0f, 0.0f}, v{0.0f, 0.0f};
  sgd_step(p, g, v, {0.1f, 0.9f, 0.0f});
  EXPECT_EQ(p, (std::vector<float>{1.0f, -2.0f}));
}

TEST(Sgd, TwoMomentumSteps) {
  std::vector<float> p{0.0f}, g{1.0f}, v{0.0f};
  sgd_step(p, g, v, {1.0f, 0.9f, 0.0f});
  sgd_step(p, g, v, {1.0f, 0.9f, 0.0f});
  EXPECT_FLOAT_EQ(p[0], -(1.0f + 1.9f));
}

TEST(Sgd, WeightDecayEntersVelocity) {
  std::vector<float> p{2.0f}, g{0.0f}, v{0.0f};
  sgd_step(p, g, v, {0.5f, 0.0f, 0.1f});
  EXPECT_FLOAT_EQ(v[0], 0.2f);
  EXPECT_FLOAT_EQ(p[0], 1.9f);
}
