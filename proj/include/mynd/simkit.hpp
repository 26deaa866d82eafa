#pragma once

// Synthetic EEG standing in for the headset. Every generator is a pure
// function of (profile, seed). Signals are in µV.
//
// Profile file (JSON, all values synthetic):
//
//   {"name": "...", "baseline_sigma": 8, "alpha_amp": 10, "alpha_freq": 10,
//    "task_modulation": {"memory": [1.4,1.4,1.4,1.4], "subtraction": [0.6,...]},
//    "amplitude_jitter": 0.1, "line_noise_amp": 0.3, "line_freq": 50,
//    "artifact_rate": 0.5, "fit_initial_sigma": 45, "fit_tau_s": 12,
//    "checkup_fraction": 0.2, "battery": 0.85, "seed": 1}

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mynd/common.hpp"
#include "mynd/datastore/container.hpp"
#include "mynd/decoder.hpp"
#include "mynd/features.hpp"
#include "mynd/spectral.hpp"

namespace mynd::simkit {

using features::RowMatrix;
using features::TrialWindow;

struct SubjectProfile {
  std::string name = "synthetic";
  double baseline_sigma = 8.0; // pink background
  double alpha_amp = 10.0;
  double alpha_freq = 10.0;
  std::map<std::string, ChannelValues> task_modulation; // alpha multiplier per task and channel
  double amplitude_jitter = 0.0;  // trial-to-trial sd of the log alpha multiplier
  double line_noise_amp = 0.3;
  double line_freq = 50.0;
  double artifact_rate = 0.0;     // bursts per minute
  // Fitting model: background sd decays from fit_initial_sigma towards
  // baseline_sigma with time constant fit_tau_s while the wearer adjusts the
  // headset. Check-ups start at checkup_fraction of the initial excess.
  double fit_initial_sigma = 45.0;
  double fit_tau_s = 12.0;
  double checkup_fraction = 0.2;
  double battery = 0.85;
  std::uint64_t seed = 1;

  bool has_task(const std::string& task) const { return task_modulation.count(task) > 0; }
};

/// Throws ContractError on out-of-range parameters.
inline void validate(const SubjectProfile& p) {
  auto nonneg = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ContractError(std::string("profile: ") + name + " must be >= 0");
  };
  nonneg(p.baseline_sigma, "baseline_sigma");
  nonneg(p.alpha_amp, "alpha_amp");
  nonneg(p.line_noise_amp, "line_noise_amp");
  nonneg(p.artifact_rate, "artifact_rate");
  nonneg(p.amplitude_jitter, "amplitude_jitter");
  nonneg(p.fit_initial_sigma, "fit_initial_sigma");
  if (!(p.alpha_freq >= 7.0 && p.alpha_freq <= 14.0)) throw ContractError("profile: alpha_freq must lie in [7, 14] Hz");
  if (!(p.fit_tau_s > 0.0)) throw ContractError("profile: fit_tau_s must be > 0");
  if (!(p.battery >= 0.0 && p.battery <= 1.0)) throw ContractError("profile: battery must lie in [0, 1]");
  for (const auto& [task, m] : p.task_modulation)
    for (double v : m) nonneg(v, "task_modulation");
}

inline ChannelValues uniform_gain(double g) { return {g, g, g, g}; }

/// Profile with alpha modulation for every task of the bundled study.
/// `depth` is the relative alpha increase (decrease) for the active
/// (subtraction) task; 0 makes the tasks indistinguishable.
inline SubjectProfile default_profile(double depth = 0.5) {
  SubjectProfile p;
  p.task_modulation = {{"memory", uniform_gain(1.0 + depth)},
                       {"music", uniform_gain(1.0 + depth)},
                       {"subtraction", uniform_gain(1.0 - depth)},
                       {"eyes_closed", uniform_gain(1.0 + depth)},
                       {"eyes_open", uniform_gain(1.0 - depth)}};
  return p;
}

inline nlohmann::json to_json(const SubjectProfile& p) {
  nlohmann::json mod = nlohmann::json::object();
  for (const auto& [task, m] : p.task_modulation) mod[task] = std::vector<double>(m.begin(), m.end());
  return {{"name", p.name},
          {"baseline_sigma", p.baseline_sigma},
          {"alpha_amp", p.alpha_amp},
          {"alpha_freq", p.alpha_freq},
          {"task_modulation", mod},
          {"amplitude_jitter", p.amplitude_jitter},
          {"line_noise_amp", p.line_noise_amp},
          {"line_freq", p.line_freq},
          {"artifact_rate", p.artifact_rate},
          {"fit_initial_sigma", p.fit_initial_sigma},
          {"fit_tau_s", p.fit_tau_s},
          {"checkup_fraction", p.checkup_fraction},
          {"battery", p.battery},
          {"seed", p.seed}};
}

inline SubjectProfile profile_from_json(const nlohmann::json& j) {
  SubjectProfile p;
  try {
    p.name = j.value("name", p.name);
    p.baseline_sigma = j.value("baseline_sigma", p.baseline_sigma);
    p.alpha_amp = j.value("alpha_amp", p.alpha_amp);
    p.alpha_freq = j.value("alpha_freq", p.alpha_freq);
    p.amplitude_jitter = j.value("amplitude_jitter", p.amplitude_jitter);
    p.line_noise_amp = j.value("line_noise_amp", p.line_noise_amp);
    p.line_freq = j.value("line_freq", p.line_freq);
    p.artifact_rate = j.value("artifact_rate", p.artifact_rate);
    p.fit_initial_sigma = j.value("fit_initial_sigma", p.fit_initial_sigma);
    p.fit_tau_s = j.value("fit_tau_s", p.fit_tau_s);
    p.checkup_fraction = j.value("checkup_fraction", p.checkup_fraction);
    p.battery = j.value("battery", p.battery);
    p.seed = j.value("seed", p.seed);
    if (j.contains("task_modulation")) {
      for (auto it = j["task_modulation"].begin(); it != j["task_modulation"].end(); ++it) {
        ChannelValues m{};
        if (it.value().is_number()) {
          m = uniform_gain(it.value().get<double>());
        } else {
          const auto v = it.value().get<std::vector<double>>();
          if (v.size() != kChannelCount) throw ContractError("profile: task_modulation needs 4 values per task");
          std::copy(v.begin(), v.end(), m.begin());
        }
        p.task_modulation[it.key()] = m;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("profile: ") + e.what());
  }
  validate(p);
  return p;
}

inline SubjectProfile load_profile(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open profile " + path);
  const auto j = nlohmann::json::parse(is, nullptr, false);
  if (j.is_discarded()) throw ContractError("profile " + path + " is not valid JSON");
  return profile_from_json(j);
}

// ---------------------------------------------------------------------------
// Signal generation

/// Gaussian noise with a 1/f power spectrum, scaled to unit sample sd.
inline std::vector<double> pink_noise(std::size_t n, std::mt19937_64& rng) {
  std::vector<double> x(n, 0.0);
  if (n < 2) return x;
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& v : x) v = gauss(rng);
  RealFft fft(n);
  std::vector<std::complex<double>> spec = fft.forward(x);
  spec[0] = 0.0;
  for (std::size_t k = 1; k < spec.size(); ++k) spec[k] /= std::sqrt(static_cast<double>(k));
  x = fft.inverse(spec);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double& v : x) {
    v -= mean;
    ss += v * v;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd > 0.0)
    for (double& v : x) v /= sd;
  return x;
}

inline constexpr double kArtifactSeconds = 0.5;
inline constexpr double kArtifactGain = 10.0; // burst peak relative to baseline_sigma

struct SegmentSpec {
  double duration_s = 30.0;
  std::string task;                          // empty: unmodulated alpha
  std::function<double(double)> sigma_at;    // background sd over segment time; default baseline
};

struct Segment {
  RowMatrix data;
  std::vector<std::size_t> artifact_onsets; // sample indices
};

/// Pink background + alpha sinusoid (task-modulated) + line noise + artifact
/// bursts, independently per channel except for the bursts, which hit all
/// channels at once.
inline Segment gen_segment(const SubjectProfile& p, const SegmentSpec& spec, double sample_rate, std::uint64_t seed) {
  validate(p);
  if (!spec.task.empty() && !p.has_task(spec.task)) throw ContractError("unknown task '" + spec.task + "'");
  if (!(spec.duration_s >= 0.0)) throw ContractError("segment duration must be >= 0");
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * sample_rate));
  Segment seg;
  seg.data = RowMatrix::Zero(static_cast<Eigen::Index>(kChannelCount), static_cast<Eigen::Index>(n));
  if (n == 0) return seg;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const ChannelValues gain = spec.task.empty() ? uniform_gain(1.0) : p.task_modulation.at(spec.task);
  const double jitter = std::exp(p.amplitude_jitter * gauss(rng)); // shared by all channels of the segment

  std::vector<double> sigma(n, p.baseline_sigma);
  if (spec.sigma_at)
    for (std::size_t i = 0; i < n; ++i) sigma[i] = spec.sigma_at(static_cast<double>(i) / sample_rate);

  for (std::size_t c = 0; c < kChannelCount; ++c) {
    const auto bg = pink_noise(n, rng);
    const double a = p.alpha_amp * gain[c] * jitter;
    const double pa = phase(rng);
    const double pl = phase(rng);
    auto row = seg.data.row(static_cast<Eigen::Index>(c));
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      row[static_cast<Eigen::Index>(i)] = sigma[i] * bg[i] +
                                          a * std::sin(2.0 * std::numbers::pi * p.alpha_freq * t + pa) +
                                          p.line_noise_amp * std::sin(2.0 * std::numbers::pi * p.line_freq * t + pl);
    }
  }

  if (p.artifact_rate > 0.0) {
    std::poisson_distribution<int> count(p.artifact_rate * spec.duration_s / 60.0);
    std::uniform_real_distribution<double> onset(0.0, spec.duration_s);
    const int k = count(rng);
    const auto len = static_cast<std::size_t>(std::llround(kArtifactSeconds * sample_rate));
    for (int b = 0; b < k; ++b) {
      const auto start = static_cast<std::size_t>(onset(rng) * sample_rate);
      const double sign = rng() & 1u ? 1.0 : -1.0;
      seg.artifact_onsets.push_back(start);
      for (std::size_t i = 0; i < len && start + i < n; ++i) {
        // raised cosine, zero at both ends
        const double w = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len)));
        const double v = sign * kArtifactGain * p.baseline_sigma * w;
        for (Eigen::Index c = 0; c < seg.data.rows(); ++c) seg.data(c, static_cast<Eigen::Index>(start + i)) += v;
      }
    }
    std::sort(seg.artifact_onsets.begin(), seg.artifact_onsets.end());
  }
  return seg;
}

inline TrialWindow gen_trial(const SubjectProfile& p, const std::string& task, double duration_s,
                             double sample_rate, std::uint64_t seed) {
  if (!p.has_task(task)) throw ContractError("gen_trial: unknown task '" + task + "'");
  if (!(duration_s > 0.0)) throw ContractError("gen_trial: duration must be > 0");
  TrialWindow w;
  w.data = gen_segment(p, {duration_s, task, {}}, sample_rate, seed).data;
  w.sample_rate = sample_rate;
  w.task = task;
  return w;
}

/// Background sd during a fitting attempt `t` seconds in.
inline double fitting_sigma(const SubjectProfile& p, double t, bool checkup) {
  const double excess = std::max(0.0, p.fit_initial_sigma - p.baseline_sigma) * (checkup ? p.checkup_fraction : 1.0);
  return p.baseline_sigma + excess * std::exp(-t / p.fit_tau_s);
}

// ---------------------------------------------------------------------------
// Lab corpora

/// Between-subject spread around a base profile.
struct ProfileDistribution {
  SubjectProfile base = default_profile();
  double sigma_spread = 0.15;      // relative sd of baseline_sigma
  double alpha_spread = 0.2;       // relative sd of alpha_amp
  double freq_spread = 0.7;        // sd of alpha_freq in Hz
  double modulation_spread = 0.1;  // sd added to each task/channel multiplier
};

inline SubjectProfile draw_profile(const ProfileDistribution& d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  SubjectProfile p = d.base;
  p.seed = seed;
  p.baseline_sigma = std::max(0.5, d.base.baseline_sigma * (1.0 + d.sigma_spread * g(rng)));
  p.alpha_amp = std::max(0.0, d.base.alpha_amp * (1.0 + d.alpha_spread * g(rng)));
  p.alpha_freq = std::clamp(d.base.alpha_freq + d.freq_spread * g(rng), 7.5, 13.5);
  for (auto& [task, m] : p.task_modulation)
    for (double& v : m) v = std::max(0.0, v + d.modulation_spread * g(rng));
  return p;
}

struct LabCorpusOptions {
  std::string strategy = "positive_memories";
  std::string positive_task = "memory";
  std::string negative_task = "subtraction";
  double trial_seconds = 30.0;
  double sample_rate = kSampleRate;
};

/// Raw (unnormalized) features of one subject, labels balanced and shuffled.
inline std::vector<features::FeatureVector> gen_subject_features(const SubjectProfile& p, std::size_t trials,
                                                                 const std::string& subject, std::uint64_t seed,
                                                                 const LabCorpusOptions& opt = {}) {
  std::vector<int> labels(trials);
  for (std::size_t i = 0; i < trials; ++i) labels[i] = i < trials / 2 ? 1 : -1;
  std::mt19937_64 rng(derive_seed(seed, "order"));
  std::shuffle(labels.begin(), labels.end(), rng);
  std::vector<features::FeatureVector> out;
  out.reserve(trials);
  for (std::size_t i = 0; i < trials; ++i) {
    const std::string& task = labels[i] > 0 ? opt.positive_task : opt.negative_task;
    TrialWindow w = gen_trial(p, task, opt.trial_seconds, opt.sample_rate, derive_seed(seed, i));
    w.label = labels[i];
    w.subject = subject;
    w.strategy = opt.strategy;
    w.trial = static_cast<int>(i);
    out.push_back(features::extract_trial_features(w));
  }
  return out;
}

/// `n_subjects` tasks of `trials_per_subject` trials, z-scored per subject.
inline std::vector<decoder::TaskDataset> gen_lab_corpus(std::size_t n_subjects, std::size_t trials_per_subject,
                                                        const ProfileDistribution& dist, std::uint64_t seed,
                                                        const LabCorpusOptions& opt = {}) {
  if (n_subjects < 2) throw ContractError("gen_lab_corpus: need at least two subjects");
  if (trials_per_subject < 2) throw ContractError("gen_lab_corpus: need at least two trials per subject");
  std::vector<decoder::TaskDataset> out;
  for (std::size_t s = 0; s < n_subjects; ++s) {
    const std::uint64_t sseed = derive_seed(seed, s);
    const SubjectProfile p = draw_profile(dist, sseed);
    const std::string subject = "lab" + std::to_string(s + 1);
    auto fv = features::normalize_features(gen_subject_features(p, trials_per_subject, subject, sseed, opt),
                                           features::Grouping::LabSession);
    out.push_back(decoder::make_task(fv));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Streams

enum class Pacing { Realtime, Accelerated };

/// Replays a dataset frame by frame. Realtime pacing sleeps until each frame
/// is due; accelerated pacing returns frames immediately.
class StreamHandle {
public:
  StreamHandle(const datastore::RecordingDataset& ds, Pacing pacing) : ds_(&ds), pacing_(pacing) {
    datastore::validate(ds);
    if (ds.channels() != kChannelCount) throw ContractError("replay_stream: expected 4 channels");
  }

  std::optional<EegFrame> next() {
    if (pos_ >= ds_->frames()) return std::nullopt;
    if (pacing_ == Pacing::Realtime) {
      if (pos_ == 0) start_ = std::chrono::steady_clock::now();
      const auto due = start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                    std::chrono::duration<double>(static_cast<double>(pos_) / ds_->sample_rate));
      std::this_thread::sleep_until(due);
    }
    EegFrame f;
    f.sample_index = pos_;
    f.sample_rate = ds_->sample_rate;
    for (std::size_t c = 0; c < kChannelCount; ++c) f.channels[c] = ds_->at(pos_, c);
    ++pos_;
    return f;
  }

  std::size_t position() const { return pos_; }
  std::size_t size() const { return ds_->frames(); }
  Pacing pacing() const { return pacing_; }
  const std::vector<datastore::Marker>& markers() const { return ds_->markers; }

private:
  const datastore::RecordingDataset* ds_;
  Pacing pacing_;
  std::size_t pos_ = 0;
  std::chrono::steady_clock::time_point start_{};
};

inline StreamHandle replay_stream(const datastore::RecordingDataset& ds, Pacing pacing = Pacing::Accelerated) {
  return StreamHandle(ds, pacing);
}

/// Collects frames and markers into a RecordingDataset.
class Recorder {
public:
  Recorder(std::string subject_id, std::string scenario_id, int day, double sample_rate = kSampleRate) {
    ds_.subject_id = std::move(subject_id);
    ds_.scenario_id = std::move(scenario_id);
    ds_.day = day;
    ds_.sample_rate = sample_rate;
  }

  void push(const EegFrame& f) {
    for (double v : f.channels) ds_.samples.push_back(static_cast<float>(v));
  }
  void push(const RowMatrix& data) {
    for (Eigen::Index i = 0; i < data.cols(); ++i)
      for (Eigen::Index c = 0; c < data.rows(); ++c) ds_.samples.push_back(static_cast<float>(data(c, i)));
  }
  void mark(std::int32_t code, std::string label) {
    ds_.markers.push_back({static_cast<std::uint64_t>(ds_.frames()), code, std::move(label)});
  }
  std::size_t frames() const { return ds_.frames(); }
  datastore::RecordingMetadata& metadata() { return ds_.metadata; }

  datastore::RecordingDataset finish() {
    datastore::validate(ds_);
    return std::move(ds_);
  }

private:
  datastore::RecordingDataset ds_;
};

} // namespace mynd::simkit
