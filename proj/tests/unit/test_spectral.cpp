#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "mynd/spectral.hpp"

using namespace mynd;

namespace {

std::vector<double> sinusoid(double amp, double freq, double seconds, double fs = 256.0, double phase = 0.3) {
  std::vector<double> x(static_cast<std::size_t>(seconds * fs));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = amp * std::sin(2 * M_PI * freq * i / fs + phase);
  return x;
}

// Direct O(n²) one-sided Hann periodogram, density scaled.
std::vector<double> naive_periodogram(const std::vector<double>& x, double fs) {
  const std::size_t n = x.size();
  std::vector<double> w(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 * (1.0 - std::cos(2 * M_PI * i / n));
    ss += w[i] * w[i];
  }
  std::vector<double> p(n / 2 + 1);
  for (std::size_t k = 0; k < p.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * w[i] * std::polar(1.0, -2 * M_PI * double(k * i) / double(n));
    const double one_sided = (k == 0 || k == n / 2) ? 1.0 : 2.0;
    p[k] = one_sided * std::norm(acc) / (fs * ss);
  }
  return p;
}

SpectralEstimate constant_psd(double level, double resolution = 0.5, std::size_t bins = 257) {
  SpectralEstimate e;
  e.resolution = resolution;
  for (std::size_t k = 0; k < bins; ++k) {
    e.frequencies.push_back(k * resolution);
    e.power.push_back(level);
  }
  return e;
}

} // namespace

TEST(Periodogram, MatchesDirectDft) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 4.0);
  std::vector<double> x(200);
  for (double& v : x) v = g(rng);
  const auto fast = psd_periodogram(x, 100.0);
  const auto slow = naive_periodogram(x, 100.0);
  ASSERT_EQ(fast.size(), slow.size());
  for (std::size_t k = 0; k < slow.size(); ++k) EXPECT_NEAR(fast.power[k], slow[k], 1e-9 * (1.0 + slow[k]));
  EXPECT_DOUBLE_EQ(fast.resolution, 0.5);
}

TEST(Welch, SinusoidBandPowerIsHalfSquaredAmplitude) {
  const auto psd = psd_welch(sinusoid(20.0, 10.0, 30.0), 256.0);
  EXPECT_DOUBLE_EQ(psd.resolution, 0.5);
  EXPECT_NEAR(band_power(psd, 8.0, 13.0), 200.0, 0.05 * 200.0);
}

TEST(Welch, AllZeroSignalHasZeroPsd) {
  const auto psd = psd_welch(std::vector<double>(30 * 256, 0.0), 256.0);
  for (double p : psd.power) EXPECT_EQ(p, 0.0);
}

TEST(Welch, WhiteNoiseIntegratesToVariance) {
  std::mt19937_64 rng(17);
  const double sigma = 3.0;
  std::normal_distribution<double> g(0.0, sigma);
  std::vector<double> x(60 * 256);
  for (double& v : x) v = g(rng);
  const auto psd = psd_welch(x, 256.0);
  double total = 0.0;
  for (double p : psd.power) total += p * psd.resolution;
  EXPECT_NEAR(total, sigma * sigma, 0.1 * sigma * sigma);
}

TEST(Welch, PowerIsNonNegativeAndGridIsRegular) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> x(10 * 256);
  for (double& v : x) v = g(rng);
  const auto psd = psd_welch(x, 256.0);
  for (std::size_t k = 0; k < psd.size(); ++k) {
    EXPECT_GE(psd.power[k], 0.0);
    EXPECT_DOUBLE_EQ(psd.frequencies[k], k * 0.5);
  }
}

TEST(Welch, ShorterThanOneSegmentIsRejected) {
  EXPECT_THROW(psd_welch(std::vector<double>(511, 1.0), 256.0), InsufficientData);
  EXPECT_NO_THROW(psd_welch(std::vector<double>(512, 1.0), 256.0));
}

TEST(LogBandPower, ConstantDensity) {
  EXPECT_DOUBLE_EQ(log_band_power(constant_psd(1.0), 8.0, 13.0), 0.0);
  EXPECT_DOUBLE_EQ(log_band_power(constant_psd(100.0), 8.0, 13.0), 2.0);
}

TEST(LogBandPower, ArithmeticMeanThenLog) {
  SpectralEstimate e = constant_psd(1.0, 1.0, 20);
  e.power[9] = 100.0; // band [9, 10] holds {100, 1}
  EXPECT_NEAR(log_band_power(e, 9.0, 10.0), std::log10(50.5), 1e-15);
  EXPECT_NEAR(log_band_power(e, 9.0, 10.0), 1.703, 5e-4);
}

TEST(LogBandPower, BandEdgesAreInclusive) {
  const auto e = constant_psd(1.0, 0.5);
  const auto r = band_bins(e, 8.0, 13.0);
  EXPECT_EQ(r.first, 16u);
  EXPECT_EQ(r.last, 27u);
}

TEST(LogBandPower, EmptyBandIsAnError) {
  const auto e = constant_psd(1.0, 1.0, 10);
  EXPECT_THROW(log_band_power(e, 3.2, 3.8), ContractError);
  EXPECT_THROW(log_band_power(e, 20.0, 30.0), ContractError);
  EXPECT_THROW(band_power(e, 5.0, 4.0), ContractError);
}

TEST(Welch, ScalingShiftsLogPowerByTwiceLogFactor) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 5.0);
  std::vector<double> x(30 * 256);
  for (double& v : x) v = g(rng);
  const double c = 3.7;
  std::vector<double> y(x);
  for (double& v : y) v *= c;
  const auto px = psd_welch(x, 256.0), py = psd_welch(y, 256.0);
  for (auto [lo, hi] : {std::pair{3.0, 7.0}, {8.0, 13.0}, {17.0, 30.0}})
    EXPECT_NEAR(log_band_power(py, lo, hi) - log_band_power(px, lo, hi), 2 * std::log10(c), 1e-9);
}
