#pragma once

// Streaming signal-quality estimation used to guide headset fitting, and the
// mains-noise (environmental) quality check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "mynd/common.hpp"
#include "mynd/spectral.hpp"

namespace mynd::streamkit {

inline constexpr std::size_t kWindowSamples = 128; // 500 ms at 256 Hz
inline constexpr std::size_t kQualityHistory = 4;
inline constexpr double kVarianceThreshold = 150.0; // µV²
inline constexpr double kVarianceFloor = 1e-6;      // µV²
inline constexpr double kInitialQuality = 0.5;

/// Maps a window variance onto a quality fraction: 1 at or below the
/// threshold, threshold/variance above it.
inline double variance_to_quality(double variance, double threshold = kVarianceThreshold) {
  const double q = threshold / std::max(variance, kVarianceFloor);
  return std::clamp(q, 0.0, 1.0);
}

/// Unbiased (n-1) variance; 0 for fewer than two samples.
inline double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(xs.size() - 1);
}

/// Result of closing one 500 ms window on a channel.
struct WindowEvaluation {
  double quality = 0.0;          // q of this window
  double avg_quality = 0.0;      // mean over the history after pushing q
  double filtered_variance = 0.0;
  double raw_variance = 0.0;     // diagnostic: same window, unfiltered
};

/// Per-channel state of the adaptive filter and its quality history.
///
/// Each incoming sample is blended with the previous filtered value using
/// the current average quality as weight; a poor recent fit therefore damps
/// the influence of new samples instead of freezing the estimate at 0.
class ChannelQualityState {
public:
  explicit ChannelQualityState(double variance_threshold = kVarianceThreshold)
      : threshold_(variance_threshold) {
    window_.reserve(kWindowSamples);
    raw_window_.reserve(kWindowSamples);
  }

  /// Filters and buffers one raw sample. Non-finite samples are rejected:
  /// the state is left untouched and the rejection counter increases.
  bool ingest(double raw) {
    if (!std::isfinite(raw)) {
      ++rejected_;
      last_rejected_ = true;
      return false;
    }
    last_rejected_ = false;
    if (!has_prev_) {
      prev_filtered_ = raw;
      has_prev_ = true;
    }
    const double w = avg_quality_;
    prev_filtered_ = w * raw + (1.0 - w) * prev_filtered_;
    if (window_.size() == kWindowSamples) {
      window_.clear();
      raw_window_.clear();
    }
    window_.push_back(prev_filtered_);
    raw_window_.push_back(raw);
    return true;
  }

  /// Closes the window once it holds 128 filtered samples.
  std::optional<WindowEvaluation> evaluate() {
    if (window_.size() < kWindowSamples) return std::nullopt;
    WindowEvaluation ev;
    ev.filtered_variance = sample_variance(window_);
    ev.raw_variance = sample_variance(raw_window_);
    ev.quality = variance_to_quality(ev.filtered_variance, threshold_);
    if (history_len_ < kQualityHistory) ++history_len_;
    history_[history_head_] = ev.quality;
    history_head_ = (history_head_ + 1) % kQualityHistory;
    double s = 0.0;
    for (std::size_t i = 0; i < history_len_; ++i) s += history_[i];
    avg_quality_ = s / static_cast<double>(history_len_);
    ev.avg_quality = avg_quality_;
    window_.clear();
    raw_window_.clear();
    return ev;
  }

  double avg_quality() const { return avg_quality_; }
  double prev_filtered() const { return prev_filtered_; }
  std::size_t buffered() const { return window_.size(); }
  std::span<const double> window() const { return window_; }
  std::uint64_t rejected_samples() const { return rejected_; }
  bool last_sample_rejected() const { return last_rejected_; }

  /// Test hook: pins the filter state, e.g. to evaluate a single blend step.
  void set_state(double prev_filtered, double avg_quality) {
    prev_filtered_ = prev_filtered;
    has_prev_ = true;
    avg_quality_ = std::clamp(avg_quality, 0.0, 1.0);
  }

  /// Test hook: replaces the quality history with a single value.
  void pin_quality(double q) {
    history_.fill(0.0);
    history_[0] = std::clamp(q, 0.0, 1.0);
    history_len_ = 1;
    history_head_ = 1 % kQualityHistory;
    avg_quality_ = history_[0];
  }

private:
  double threshold_;
  double prev_filtered_ = 0.0;
  bool has_prev_ = false;
  double avg_quality_ = kInitialQuality;
  std::vector<double> window_;
  std::vector<double> raw_window_;
  std::array<double, kQualityHistory> history_{};
  std::size_t history_len_ = 0;
  std::size_t history_head_ = 0;
  std::uint64_t rejected_ = 0;
  bool last_rejected_ = false;
};

struct QualityReport {
  std::array<double, kChannelCount> per_channel{};     // averaged quality, drives the UI
  std::array<double, kChannelCount> window_quality{};  // q of the window just closed
  std::array<double, kChannelCount> raw_variance{};    // diagnostic
  std::uint64_t timestamp = 0;                         // sample index of the window end

  double mean() const {
    return std::accumulate(per_channel.begin(), per_channel.end(), 0.0) / static_cast<double>(kChannelCount);
  }
};

/// Runs one ChannelQualityState per channel over a frame stream.
class QualityEstimator {
public:
  explicit QualityEstimator(double variance_threshold = kVarianceThreshold) {
    for (auto& c : channels_) c = ChannelQualityState(variance_threshold);
  }

  /// Returns a report every 128 accepted frames. Frames must arrive in
  /// strictly increasing sample order.
  std::optional<QualityReport> push(const EegFrame& frame) {
    if (started_ && frame.sample_index <= last_index_)
      throw ContractError("QualityEstimator: sample_index must be strictly increasing");
    for (double v : frame.channels)
      if (!std::isfinite(v)) {
        ++rejected_frames_;
        return std::nullopt;
      }
    started_ = true;
    last_index_ = frame.sample_index;
    for (std::size_t c = 0; c < kChannelCount; ++c) channels_[c].ingest(frame.channels[c]);
    if (channels_[0].buffered() < kWindowSamples) return std::nullopt;
    QualityReport rep;
    rep.timestamp = frame.sample_index;
    for (std::size_t c = 0; c < kChannelCount; ++c) {
      const auto ev = channels_[c].evaluate();
      rep.per_channel[c] = ev->avg_quality;
      rep.window_quality[c] = ev->quality;
      rep.raw_variance[c] = ev->raw_variance;
    }
    return rep;
  }

  const ChannelQualityState& channel(std::size_t c) const { return channels_.at(c); }
  std::uint64_t rejected_frames() const { return rejected_frames_; }

private:
  std::array<ChannelQualityState, kChannelCount> channels_;
  std::uint64_t last_index_ = 0;
  bool started_ = false;
  std::uint64_t rejected_frames_ = 0;
};

struct FittingGateConfig {
  double variance_threshold = kVarianceThreshold;
  double initial_target = 1.0;
  double relaxed_target = 0.75;
  double relax_after_s = 180.0;
};

struct GateDecision {
  double target = 1.0;
  bool met = false;
};

/// Target drops from the initial to the relaxed level once `elapsed_s`
/// reaches relax_after_s. There is no upper bound on fitting time.
inline GateDecision fitting_gate(double elapsed_s, const QualityReport& report,
                                 const FittingGateConfig& cfg = {}) {
  if (!(elapsed_s >= 0.0)) throw ContractError("fitting_gate: elapsed must be >= 0");
  GateDecision d;
  d.target = elapsed_s < cfg.relax_after_s ? cfg.initial_target : cfg.relaxed_target;
  d.met = std::all_of(report.per_channel.begin(), report.per_channel.end(),
                      [&](double q) { return q >= d.target; });
  return d;
}

struct NoiseReport {
  std::array<double, kChannelCount> per_channel{};
  std::array<double, kChannelCount> log_power{}; // log10 µV²/Hz around the line frequency
};

struct NoiseCheckConfig {
  double line_frequency = 50.0;
  double half_band_hz = 1.0;
  double full_quality_log_power = -1.0; // at or below: 100%
  double zero_quality_log_power = 3.0;  // at or above: 0%
};

/// Linear ramp on the log-power scale between the two anchors.
inline double environmental_quality(double log_power, const NoiseCheckConfig& cfg = {}) {
  if (log_power <= cfg.full_quality_log_power) return 1.0;
  const double q = (cfg.zero_quality_log_power - log_power) /
                   (cfg.zero_quality_log_power - cfg.full_quality_log_power);
  return std::clamp(q, 0.0, 1.0);
}

/// Environmental quality from one second of raw data per channel.
inline NoiseReport em_noise_quality(std::span<const std::vector<double>> window,
                                    double sample_rate = kSampleRate, const NoiseCheckConfig& cfg = {}) {
  if (window.size() != kChannelCount) throw ContractError("em_noise_quality: expected 4 channels");
  const auto needed = static_cast<std::size_t>(std::lround(sample_rate));
  NoiseReport rep;
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    if (window[c].size() < needed) throw InsufficientData("em_noise_quality: need one second of samples");
    const std::span<const double> last(window[c].data() + window[c].size() - needed, needed);
    const SpectralEstimate psd = psd_periodogram(last, sample_rate);
    const double p = log_band_power(psd, cfg.line_frequency - cfg.half_band_hz,
                                    cfg.line_frequency + cfg.half_band_hz);
    rep.log_power[c] = p;
    rep.per_channel[c] = environmental_quality(p, cfg);
  }
  return rep;
}

} // namespace mynd::streamkit
