#pragma once

// Band-power features per trial, normalization groups and R² maps.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "mynd/common.hpp"
#include "mynd/spectral.hpp"

namespace mynd::features {

using mynd::SpectralEstimate;

struct Band {
  double lo_hz;
  double hi_hz;
};

inline constexpr Band kTheta{3.0, 7.0};
inline constexpr Band kAlpha{8.0, 13.0};
inline constexpr Band kBeta{17.0, 30.0};
inline constexpr Band kDominantSearch{5.0, 15.0};

inline constexpr std::size_t kFeaturesPerChannel = 4;
inline constexpr std::size_t kFeatureCount = kChannelCount * kFeaturesPerChannel;
inline constexpr std::array<std::string_view, kFeaturesPerChannel> kFeatureKinds{"theta", "alpha", "beta",
                                                                                 "domfreq"};

/// Column-major feature index: channel c, kind k -> c*4 + k.
inline constexpr std::size_t feature_index(std::size_t channel, std::size_t kind) {
  return channel * kFeaturesPerChannel + kind;
}

inline std::string feature_name(std::size_t i) {
  return std::string(kChannelLabels[i / kFeaturesPerChannel]) + "_" +
         std::string(kFeatureKinds[i % kFeaturesPerChannel]);
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One trial segment: channels x samples.
struct TrialWindow {
  RowMatrix data; // µV, row per channel
  double sample_rate = kSampleRate;
  int label = 0;  // +1 / -1
  std::string subject;
  std::string strategy;
  std::string task;
  int day = 0;
  int trial = 0;

  std::span<const double> channel(std::size_t c) const {
    return {data.row(static_cast<Eigen::Index>(c)).data(), static_cast<std::size_t>(data.cols())};
  }
  double duration_s() const { return static_cast<double>(data.cols()) / sample_rate; }
};

struct FeatureVector {
  std::array<double, kFeatureCount> values{};
  bool normalized = false;
  std::string subject;
  std::string strategy;
  int day = 0;
  int trial = 0;
  int label = 0;
};

/// Frequency of the strongest bin in [5, 15] Hz; the lowest such bin wins ties.
inline double dominant_frequency(const SpectralEstimate& psd, Band search = kDominantSearch) {
  const BinRange r = band_bins(psd, search.lo_hz, search.hi_hz);
  if (r.empty()) throw ContractError("dominant_frequency: spectrum does not cover the search band");
  std::size_t best = r.first;
  for (std::size_t k = r.first + 1; k < r.last; ++k)
    if (psd.power[k] > psd.power[best]) best = k;
  return psd.frequencies[best];
}

/// theta/alpha/beta log-band-power and dominant frequency of one channel.
inline std::array<double, kFeaturesPerChannel> channel_features(std::span<const double> signal,
                                                                double sample_rate) {
  const SpectralEstimate psd = psd_welch(signal, sample_rate);
  return {log_band_power(psd, kTheta.lo_hz, kTheta.hi_hz), log_band_power(psd, kAlpha.lo_hz, kAlpha.hi_hz),
          log_band_power(psd, kBeta.lo_hz, kBeta.hi_hz), dominant_frequency(psd)};
}

/// The 16 raw (unnormalized) features of one trial.
inline FeatureVector extract_trial_features(const TrialWindow& trial) {
  if (static_cast<std::size_t>(trial.data.rows()) != kChannelCount)
    throw ContractError("extract_trial_features: expected 4 channels");
  if (!trial.data.allFinite()) throw ContractError("extract_trial_features: non-finite samples");
  FeatureVector fv;
  fv.subject = trial.subject;
  fv.strategy = trial.strategy;
  fv.day = trial.day;
  fv.trial = trial.trial;
  fv.label = trial.label;
  for (std::size_t c = 0; c < kChannelCount; ++c) {
    const auto f = channel_features(trial.channel(c), trial.sample_rate);
    for (std::size_t k = 0; k < kFeaturesPerChannel; ++k) fv.values[feature_index(c, k)] = f[k];
  }
  return fv;
}

enum class Grouping {
  LabSession, // one group per subject
  HomeDay,    // one group per (subject, day)
};

/// z-scores each feature within its group. Uses the population standard
/// deviation; a constant dimension maps to 0.
inline std::vector<FeatureVector> normalize_features(std::vector<FeatureVector> vectors, Grouping grouping) {
  using Key = std::tuple<std::string, int>;
  std::map<Key, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    const auto& v = vectors[i];
    groups[{v.subject, grouping == Grouping::HomeDay ? v.day : 0}].push_back(i);
  }
  for (const auto& [key, idx] : groups) {
    if (idx.size() < 2)
      throw ContractError("normalize_features: group '" + std::get<0>(key) + "' has fewer than 2 vectors");
    const auto n = static_cast<double>(idx.size());
    for (std::size_t f = 0; f < kFeatureCount; ++f) {
      double mean = 0.0;
      for (auto i : idx) mean += vectors[i].values[f];
      mean /= n;
      double ss = 0.0;
      for (auto i : idx) ss += (vectors[i].values[f] - mean) * (vectors[i].values[f] - mean);
      const double sd = std::sqrt(ss / n);
      const bool degenerate = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
      for (auto i : idx) vectors[i].values[f] = degenerate ? 0.0 : (vectors[i].values[f] - mean) / sd;
    }
  }
  for (auto& v : vectors) v.normalized = true;
  return vectors;
}

/// Squared Pearson correlation of each feature column with the ±1 labels.
/// Returns a value per column; a constant column yields 0.
inline std::vector<double> r2_map(const Eigen::MatrixXd& features, std::span<const int> labels) {
  const auto n = features.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw ContractError("r2_map: row/label mismatch");
  const bool has_pos = std::any_of(labels.begin(), labels.end(), [](int y) { return y > 0; });
  const bool has_neg = std::any_of(labels.begin(), labels.end(), [](int y) { return y < 0; });
  if (!has_pos || !has_neg) throw ContractError("r2_map: both labels must be present");
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = labels[static_cast<std::size_t>(i)];
  y.array() -= y.mean();
  std::vector<double> out(static_cast<std::size_t>(features.cols()), 0.0);
  for (Eigen::Index f = 0; f < features.cols(); ++f) {
    Eigen::VectorXd x = features.col(f);
    x.array() -= x.mean();
    const double sxx = x.squaredNorm();
    const double syy = y.squaredNorm();
    if (sxx <= 0.0 || syy <= 0.0) continue;
    const double r = x.dot(y) / std::sqrt(sxx * syy);
    out[static_cast<std::size_t>(f)] = std::clamp(r * r, 0.0, 1.0);
  }
  return out;
}

inline std::vector<double> r2_map(std::span<const FeatureVector> vectors) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(vectors.size()), static_cast<Eigen::Index>(kFeatureCount));
  std::vector<int> labels;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    for (std::size_t f = 0; f < kFeatureCount; ++f)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = vectors[i].values[f];
    labels.push_back(vectors[i].label);
  }
  return r2_map(m, labels);
}

/// Averages per-subject R² maps into a group map.
inline std::vector<double> group_r2_map(std::span<const std::vector<double>> per_subject) {
  if (per_subject.empty()) throw ContractError("group_r2_map: no subjects");
  std::vector<double> avg(per_subject.front().size(), 0.0);
  for (const auto& m : per_subject) {
    if (m.size() != avg.size()) throw ContractError("group_r2_map: size mismatch");
    for (std::size_t i = 0; i < m.size(); ++i) avg[i] += m[i];
  }
  for (double& v : avg) v /= static_cast<double>(per_subject.size());
  return avg;
}

inline void write_feature_table_header(std::ostream& os) {
  os << "subject,day,strategy,trial,label";
  for (std::size_t f = 0; f < kFeatureCount; ++f) os << ',' << feature_name(f);
  os << '\n';
}

inline void write_feature_row(std::ostream& os, const FeatureVector& v) {
  os << v.subject << ',' << v.day << ',' << v.strategy << ',' << v.trial << ',' << v.label;
  const auto old_prec = os.precision(17);
  for (double x : v.values) os << ',' << x;
  os.precision(old_prec);
  os << '\n';
}

} // namespace mynd::features
