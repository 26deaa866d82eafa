#pragma once

// Hann-windowed periodograms and Welch averaging on top of FFTW.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <vector>

#include <fftw3.h>

#include "mynd/common.hpp"

namespace mynd {

namespace detail {

// FFTW planning is not thread-safe; execution of an existing plan is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwPlanDeleter {
  void operator()(fftw_plan_s* p) const {
    if (p) fftw_destroy_plan(p);
  }
};
using FftwPlan = std::unique_ptr<fftw_plan_s, FftwPlanDeleter>;

} // namespace detail

/// Real-to-complex / complex-to-real transform of one fixed length.
class RealFft {
public:
  explicit RealFft(std::size_t n) : n_(n), real_(n), spectrum_(n / 2 + 1) {
    if (n == 0) throw ContractError("RealFft: zero length");
    std::lock_guard lock(detail::fftw_planner_mutex());
    auto* cplx = reinterpret_cast<fftw_complex*>(spectrum_.data());
    forward_.reset(fftw_plan_dft_r2c_1d(static_cast<int>(n), real_.data(), cplx, FFTW_ESTIMATE));
    inverse_.reset(fftw_plan_dft_c2r_1d(static_cast<int>(n), cplx, real_.data(), FFTW_ESTIMATE));
  }

  std::size_t size() const { return n_; }

  /// Unnormalized forward DFT; returns the n/2+1 non-negative frequency bins.
  const std::vector<std::complex<double>>& forward(std::span<const double> x) {
    if (x.size() != n_) throw ContractError("RealFft::forward: length mismatch");
    std::copy(x.begin(), x.end(), real_.begin());
    fftw_execute(forward_.get());
    return spectrum_;
  }

  /// Inverse of forward() including the 1/n factor.
  const std::vector<double>& inverse(std::span<const std::complex<double>> bins) {
    if (bins.size() != spectrum_.size()) throw ContractError("RealFft::inverse: length mismatch");
    std::copy(bins.begin(), bins.end(), spectrum_.begin());
    fftw_execute(inverse_.get());
    const double scale = 1.0 / static_cast<double>(n_);
    for (double& v : real_) v *= scale;
    return real_;
  }

private:
  std::size_t n_;
  std::vector<double> real_;
  std::vector<std::complex<double>> spectrum_;
  detail::FftwPlan forward_;
  detail::FftwPlan inverse_;
};

/// Periodic Hann window (the DFT-even form used for spectral estimation).
inline std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

/// One-sided power spectral density on a regular frequency grid.
struct SpectralEstimate {
  std::vector<double> frequencies; // Hz
  std::vector<double> power;       // µV²/Hz
  double resolution = 0.0;         // Hz between bins

  std::size_t size() const { return power.size(); }
};

/// Computes one-sided PSDs of fixed-length segments with a Hann taper.
///
/// Density scaling: a bin-centred sinusoid of amplitude A integrates (sum of
/// power times resolution) to A²/2 over its main lobe.
class HannPeriodogram {
public:
  HannPeriodogram(std::size_t segment_length, double sample_rate)
      : fft_(segment_length), window_(hann_window(segment_length)), buffer_(segment_length),
        sample_rate_(sample_rate) {
    double sum_sq = 0.0;
    for (double w : window_) sum_sq += w * w;
    scale_ = 1.0 / (sample_rate_ * sum_sq);
  }

  std::size_t segment_length() const { return fft_.size(); }
  double sample_rate() const { return sample_rate_; }
  double resolution() const { return sample_rate_ / static_cast<double>(fft_.size()); }
  std::size_t bins() const { return fft_.size() / 2 + 1; }

  /// Adds the PSD of `segment` into `acc` (which must hold bins() values).
  void accumulate(std::span<const double> segment, std::span<double> acc) {
    const std::size_t n = fft_.size();
    for (std::size_t i = 0; i < n; ++i) buffer_[i] = segment[i] * window_[i];
    const auto& spec = fft_.forward(buffer_);
    const std::size_t nb = bins();
    for (std::size_t k = 0; k < nb; ++k) {
      double p = std::norm(spec[k]) * scale_;
      const bool edge = (k == 0) || (n % 2 == 0 && k == nb - 1);
      acc[k] += edge ? p : 2.0 * p;
    }
  }

  SpectralEstimate empty_estimate() const {
    SpectralEstimate est;
    est.resolution = resolution();
    est.frequencies.resize(bins());
    est.power.assign(bins(), 0.0);
    for (std::size_t k = 0; k < bins(); ++k) est.frequencies[k] = static_cast<double>(k) * est.resolution;
    return est;
  }

private:
  RealFft fft_;
  std::vector<double> window_;
  std::vector<double> buffer_;
  double sample_rate_;
  double scale_ = 0.0;
};

/// Single Hann-windowed periodogram over the whole signal.
inline SpectralEstimate psd_periodogram(std::span<const double> signal, double sample_rate) {
  if (signal.empty()) throw InsufficientData("psd_periodogram: empty signal");
  HannPeriodogram pg(signal.size(), sample_rate);
  SpectralEstimate est = pg.empty_estimate();
  pg.accumulate(signal, est.power);
  return est;
}

inline constexpr double kWelchSegmentSeconds = 2.0;

/// Welch PSD: 2 s Hann segments, 50% overlap, averaged.
inline SpectralEstimate psd_welch(std::span<const double> signal, double sample_rate) {
  const auto seg = static_cast<std::size_t>(std::lround(kWelchSegmentSeconds * sample_rate));
  if (seg == 0 || signal.size() < seg)
    throw InsufficientData("psd_welch: signal shorter than one 2 s segment");
  const std::size_t hop = seg / 2;
  HannPeriodogram pg(seg, sample_rate);
  SpectralEstimate est = pg.empty_estimate();
  std::size_t count = 0;
  for (std::size_t start = 0; start + seg <= signal.size(); start += hop) {
    pg.accumulate(signal.subspan(start, seg), est.power);
    ++count;
  }
  for (double& p : est.power) p /= static_cast<double>(count);
  return est;
}

/// Indices of the bins whose frequency lies in [lo, hi] (inclusive, with a
/// small tolerance for grid rounding).
struct BinRange {
  std::size_t first = 0;
  std::size_t last = 0; // one past the end
  bool empty() const { return first >= last; }
  std::size_t size() const { return empty() ? 0 : last - first; }
};

inline BinRange band_bins(const SpectralEstimate& psd, double lo_hz, double hi_hz) {
  BinRange r;
  if (psd.power.empty() || hi_hz < lo_hz) return r;
  const double tol = 1e-9 * std::max(1.0, psd.resolution);
  const double lo_idx = std::ceil(lo_hz / psd.resolution - tol);
  const double hi_idx = std::floor(hi_hz / psd.resolution + tol);
  const double max_idx = static_cast<double>(psd.power.size() - 1);
  if (hi_idx < 0.0 || lo_idx > max_idx) return r;
  r.first = static_cast<std::size_t>(std::max(0.0, lo_idx));
  r.last = static_cast<std::size_t>(std::min(max_idx, hi_idx)) + 1;
  return r;
}

/// Integrated power (µV²) over [lo, hi].
inline double band_power(const SpectralEstimate& psd, double lo_hz, double hi_hz) {
  const BinRange r = band_bins(psd, lo_hz, hi_hz);
  if (r.empty()) throw ContractError("band_power: band contains no bins");
  double s = 0.0;
  for (std::size_t k = r.first; k < r.last; ++k) s += psd.power[k];
  return s * psd.resolution;
}

/// log10 of the mean PSD over the bins in [lo, hi].
inline double log_band_power(const SpectralEstimate& psd, double lo_hz, double hi_hz) {
  const BinRange r = band_bins(psd, lo_hz, hi_hz);
  if (r.empty()) throw ContractError("log_band_power: band contains no bins");
  double s = 0.0;
  for (std::size_t k = r.first; k < r.last; ++k) s += psd.power[k];
  return std::log10(s / static_cast<double>(r.size()));
}

} // namespace mynd
