// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include <gtest/gtest.h>

#include "grad_cases.hpp"
#include "hflab/nn/ops.hpp"
#include "test_util.hpp"

using namespace hflab;
using namespace hflab::nn;
using hflab::testing::code_of;

namespace {

std::vector<double> vals(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST(Linear, Examples) {
  const Tensor id({2, 2}, {1, 0, 0, 1});
  EXPECT_EQ(vals(linear(Tensor({1, 2}, {1, 2}), id, Tensor({2}, {0, 0}))), (std::vector<double>{1, 2}));
  EXPECT_EQ(vals(linear(Tensor({1, 2}, {1, 1}), Tensor({2, 1}, {1, 1}), Tensor({1}, {1}))),
            (std::vector<double>{3}));
  EXPECT_EQ(code_of([&] { matmul(Tensor({2, 3}), id); }), ErrorCode::ShapeMismatch);
}

TEST(Activations, Examples) {
  auto s = softmax(Tensor({1, 2}, {0, 0}));
  EXPECT_DOUBLE_EQ(s.at(0), 0.5);
  EXPECT_DOUBLE_EQ(s.at(1), 0.5);
  s = softmax(Tensor({1, 2}, {std::log(2.0), 0}));
  EXPECT_NEAR(s.at(0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(s.at(1), 1.0 / 3.0, 1e-15);
  // Large inputs do not overflow.
  s = softmax(Tensor({1, 2}, {1000, 1000}));
  EXPECT_DOUBLE_EQ(s.at(0), 0.5);

  const auto p = prelu(Tensor({2}, {-2, 3}), Tensor({1}, {0.25}));
  EXPECT_DOUBLE_EQ(p.at(0), -0.5);
  EXPECT_DOUBLE_EQ(p.at(1), 3.0);
  EXPECT_DOUBLE_EQ(sigmoid(Tensor({1}, {0.0})).item(), 0.5);
  EXPECT_DOUBLE_EQ(nn::tanh(Tensor({1}, {0.0})).item(), 0.0);
}

TEST(LayerNorm, Examples) {
  const Tensor g({3}, 1.0), b({3}, 0.0);
  const auto y = layer_norm(Tensor({1, 3}, {1, 2, 3}), g, b);
  EXPECT_NEAR(y.at(0), -1.224744, 1e-6);
  EXPECT_NEAR(y.at(1), 0.0, 1e-15);
  EXPECT_NEAR(y.at(2), 1.224744, 1e-6);
  EXPECT_EQ(vals(layer_norm(Tensor({1, 3}, {4, 4, 4}), g, b)), (std::vector<double>{0, 0, 0}));
}

TEST(Spiking, Examples) {
  const Tensor thr({1}, {0.5});
  const auto y = spiking(Tensor({3}, {0.4, 0.6, 0.5}), thr, 0.1);
  EXPECT_EQ(vals(y), (std::vector<double>{0.0, 0.6, 0.5}));
  const Tensor x({4}, {-3, -0.1, 0.2, 7});
  EXPECT_EQ(vals(spiking(x, Tensor({1}, {-1e300}), 0.1)), vals(x));
}

TEST(Spiking, SurrogateGivesThresholdGradient) {
  Tensor x({3}, {0.4, 0.5, 0.6}, true);
  Tensor thr({1}, {0.5}, true);
  sum(spiking(x, thr, 0.1)).backward();
  EXPECT_LT(thr.grad()[0], 0.0);
  for (double g : x.grad()) EXPECT_TRUE(std::isfinite(g));
}

TEST(PositionalEncoding, Examples) {
  const auto pe = sinusoidal_pe(6, 8);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(pe.at(i), i % 2 == 0 ? 0.0 : 1.0);
  EXPECT_NEAR(pe.at(8), 0.841471, 1e-6);
  for (double v : pe.values()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(code_of([] { sinusoidal_pe(4, 5); }), ErrorCode::OddDimension);
}

TEST(Autodiff, GradAccumulatesAcrossUses) {
  Tensor x({2}, {1.5, -2.0}, true);
  sum(mul(x, x)).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -4.0);
  {
    NoGradGuard guard;
    auto y = mul(x, x);
    EXPECT_FALSE(y.requires_grad());
  }
}

TEST(GradCheck, LinearSumIsExact) {
  std::mt19937_64 rng(0);
  auto x = hflab::testing::detail::rand_tensor({3, 4}, rng);
  auto w = hflab::testing::detail::rand_tensor({4, 2}, rng);
  auto b = hflab::testing::detail::rand_tensor({2}, rng);
  const auto r = grad_check([&] { return sum(linear(x, w, b)); }, {x, w, b});
  EXPECT_LT(r.max_rel_error, 1e-7);
}

TEST(GradCheck, TwoLayerPreluMse) {
  std::mt19937_64 rng(0);
  using hflab::testing::detail::rand_tensor;
  auto x = rand_tensor({8, 4}, rng, -1, 1, false);
  auto t = rand_tensor({8, 1}, rng, -1, 1, false);
  auto w1 = rand_tensor({4, 6}, rng), b1 = rand_tensor({6}, rng);
  auto w2 = rand_tensor({6, 1}, rng), b2 = rand_tensor({1}, rng);
  Tensor a({1}, {0.25}, true);
  const auto r = grad_check([&] { return mse_loss(linear(prelu(linear(x, w1, b1), a), w2, b2), t); },
                            {w1, b1, a, w2, b2});
  EXPECT_LT(r.max_rel_error, 1e-4);
}

class GradientCase : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientCase, MatchesFiniteDifferences) {
  const auto cases = hflab::testing::gradient_cases();
  const auto& c = cases.at(GetParam());
  const auto r = grad_check(c.f, c.inputs);
  EXPECT_LT(r.max_rel_error, 1e-4) << c.name << " worst at input " << r.tensor_index << "[" << r.element
                                   << "] analytic " << r.analytic << " numeric " << r.numeric;
  EXPECT_GT(r.coordinates, 0u);
}

INSTANTIATE_TEST_SUITE_P(AllLayers, GradientCase,
                         ::testing::Range<std::size_t>(0, hflab::testing::gradient_cases().size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                           return hflab::testing::gradient_cases().at(info.param).name;
                         });
