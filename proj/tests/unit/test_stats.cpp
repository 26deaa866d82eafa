#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mynd/stats.hpp"

using namespace mynd;
using namespace mynd::stats;

namespace {

// Two-sided t-test p value by Simpson integration of the t density over
// [t, inf), mapped onto [0, 1) with x = t + u / (1 - u).
double t_tail_oracle(double t, double df) {
  const double logc = std::lgamma((df + 1) / 2) - std::lgamma(df / 2) - 0.5 * std::log(df * M_PI);
  auto pdf = [&](double x) { return std::exp(logc - (df + 1) / 2 * std::log1p(x * x / df)); };
  auto g = [&](double u) {
    if (u >= 1.0) return 0.0;
    const double v = 1.0 - u;
    return pdf(t + u / v) / (v * v);
  };
  const int n = 200000;
  const double h = 1.0 / n;
  double s = g(0.0) + g(1.0);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4 : 2) * g(i * h);
  return 2.0 * s * h / 3.0;
}

} // namespace

TEST(Pearson, IdenticalAndOppositeVectors) {
  std::vector<double> a{1, 2, 3, 4, 5.5}, b{-1, -2, -3, -4, -5.5};
  EXPECT_EQ(pearson(a, a).r, 1.0);
  EXPECT_EQ(pearson(a, b).r, -1.0);
  EXPECT_EQ(pearson(a, a).p, 0.0);
}

TEST(Pearson, PublishedFixture) {
  const double p = pearson_p_value(0.13, 226);
  EXPECT_GE(p, 0.045);
  EXPECT_LE(p, 0.06);
  const double t = 0.13 * std::sqrt(224.0 / (1 - 0.13 * 0.13));
  EXPECT_NEAR(p, t_tail_oracle(t, 224.0), 1e-7);
}

TEST(Pearson, PValueMatchesIntegratedDensity) {
  for (auto [r, n] : {std::pair{0.5, 10}, {-0.25, 60}, {0.05, 400}, {0.9, 5}}) {
    const double t = std::abs(r) * std::sqrt((n - 2) / (1 - r * r));
    EXPECT_NEAR(pearson_p_value(r, n), t_tail_oracle(t, n - 2), 1e-7) << r << " " << n;
  }
}

TEST(Pearson, RecoversPlantedCorrelation) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> a(5000), b(5000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = g(rng);
    b[i] = 0.6 * a[i] + 0.8 * g(rng);
  }
  EXPECT_NEAR(pearson(a, b).r, 0.6, 0.03);
}

TEST(Pearson, Errors) {
  std::vector<double> a{1, 2, 3}, c{2, 2, 2}, shorter{1, 2};
  EXPECT_THROW(pearson(a, c), ZeroVariance);
  EXPECT_THROW(pearson(shorter, shorter), ContractError);
  EXPECT_THROW(pearson(a, shorter), ContractError);
}

TEST(Summary, MeanAndMedian) {
  std::vector<double> odd{3, 1, 2}, even{4, 1, 3, 2};
  EXPECT_DOUBLE_EQ(mean(odd), 2.0);
  EXPECT_DOUBLE_EQ(median(odd), 2.0);
  EXPECT_DOUBLE_EQ(median(even), 2.5);
  EXPECT_TRUE(std::isnan(mean(std::vector<double>{})));
}
