// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "hflab/features.hpp"
#include "test_util.hpp"

using namespace hflab;
using hflab::testing::code_of;

namespace {

std::vector<double> load_series(const std::string& name) {
  std::ifstream in(std::string(HFLAB_TEST_DATA) + "/" + name);
  std::vector<double> out;
  for (double v; in >> v;) out.push_back(v);
  return out;
}

}  // namespace

TEST(Adf, NoiselessAr1) {
  std::vector<double> y{1.0};
  for (int i = 1; i < 40; ++i) y.push_back(0.5 * y.back());
  const double t = features::adf_statistic(y, 0);
  EXPECT_LT(t, -100.0);
}

// Reference values: statsmodels adfuller(series, maxlag=lag, regression="c",
// autolag=None) on tests/data/adf_random_walk.txt.
TEST(Adf, RandomWalkMatchesReference) {
  const auto rw = load_series("adf_random_walk.txt");
  ASSERT_EQ(rw.size(), 500u);
  const std::pair<std::size_t, double> refs[] = {
      {0, -0.34915751299750913}, {1, -0.3934752987217445}, {3, -0.43706942546552024}};
  for (const auto& [lag, ref] : refs) {
    const double t = features::adf_statistic(rw, lag);
    EXPECT_NEAR(t, ref, 1.0);
    EXPECT_NEAR(t, ref, 1e-9) << "lag " << lag;
  }
}

TEST(Adf, WhiteNoiseIsStationary) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> x(1000);
  for (auto& v : x) v = z(rng);
  EXPECT_LT(features::adf_statistic(x, 1), -10.0);
}

TEST(Adf, Errors) {
  EXPECT_EQ(code_of([] { features::adf_statistic(std::vector<double>{1, 2, 3}, 1); }), ErrorCode::StreamTooShort);
  EXPECT_EQ(code_of([] { features::adf_statistic(std::vector<double>(50, 3.0), 0); }),
            ErrorCode::SingularRegression);
}
