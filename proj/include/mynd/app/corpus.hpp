#pragma once

// Reading trials back out of recording containers, synthetic lab corpora on
// disk, and prior learning from such a corpus.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "mynd/app/manifest.hpp"
#include "mynd/datastore/container.hpp"
#include "mynd/decoder.hpp"
#include "mynd/features.hpp"
#include "mynd/simkit.hpp"

namespace mynd::app {

class MissingLabels : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline Bytes read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + p.string());
  return Bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& p, std::span<const std::uint8_t> data) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!os) throw std::runtime_error("cannot write " + p.string());
}

/// Cuts the marked trials out of a dataset. Trial labels come from the
/// "task_labels" map in the metadata; the strategy from "strategy".
inline std::vector<features::TrialWindow> dataset_trials(const datastore::RecordingDataset& ds) {
  const auto& extra = ds.metadata.extra;
  if (!extra.contains("task_labels") || !extra["task_labels"].is_object())
    throw MissingLabels("recording " + ds.scenario_id + " has no task labels");
  const std::string strategy = extra.value("strategy", std::string{});
  const auto trials = datastore::marked_trials(ds);
  if (trials.empty()) throw MissingLabels("recording " + ds.scenario_id + " has no trial markers");
  std::vector<features::TrialWindow> out;
  int index = extra.value("block", 0) * 1000;
  for (const auto& t : trials) {
    if (!extra["task_labels"].contains(t.label))
      throw MissingLabels("recording " + ds.scenario_id + ": no label for task '" + t.label + "'");
    features::TrialWindow w;
    const auto n = static_cast<Eigen::Index>(t.end - t.begin);
    w.data.resize(static_cast<Eigen::Index>(ds.channels()), n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (std::size_t c = 0; c < ds.channels(); ++c)
        w.data(static_cast<Eigen::Index>(c), i) = ds.at(t.begin + static_cast<std::size_t>(i), c);
    w.sample_rate = ds.sample_rate;
    w.label = extra["task_labels"][t.label].get<int>();
    w.task = t.label;
    w.subject = ds.subject_id;
    w.strategy = strategy;
    w.day = ds.day;
    w.trial = index++;
    out.push_back(std::move(w));
  }
  return out;
}

/// Mean over channels of the quality-trace samples inside [begin, end).
inline double mean_trace_quality(const datastore::RecordingDataset& ds, std::uint64_t begin, std::uint64_t end) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& q : ds.metadata.quality_trace) {
    if (q.sample_index < begin || q.sample_index >= end) continue;
    for (double v : q.quality) sum += v;
    n += q.quality.size();
  }
  return n == 0 ? decoder::kMissing : sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// gen-corpus

struct CorpusConfig {
  std::size_t subjects = 11;
  std::size_t trials = 40;
  std::uint64_t seed = 1;
  simkit::ProfileDistribution distribution;
  std::filesystem::path profile_path;
  simkit::LabCorpusOptions options;
  std::filesystem::path out;
};

/// Writes one container per lab subject (lab01.mynd, ...) holding all its
/// trials back to back.
inline std::vector<std::filesystem::path> generate_corpus(const CorpusConfig& cfg, std::ostream& log) {
  if (cfg.subjects < 2) throw ContractError("gen-corpus: need at least two subjects");
  if (cfg.trials < 2) throw ContractError("gen-corpus: need at least two trials per subject");
  std::filesystem::create_directories(cfg.out);
  std::vector<std::filesystem::path> files;
  for (std::size_t s = 0; s < cfg.subjects; ++s) {
    const std::uint64_t sseed = derive_seed(cfg.seed, s);
    const auto profile = simkit::draw_profile(cfg.distribution, sseed);
    char name[32];
    std::snprintf(name, sizeof name, "lab%02zu", s + 1);
    simkit::Recorder rec(name, "lab-" + cfg.options.strategy, 1, cfg.options.sample_rate);
    std::vector<int> labels(cfg.trials);
    for (std::size_t i = 0; i < cfg.trials; ++i) labels[i] = i < cfg.trials / 2 ? 1 : -1;
    std::mt19937_64 rng(derive_seed(sseed, "order"));
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < cfg.trials; ++i) {
      const std::string& task = labels[i] > 0 ? cfg.options.positive_task : cfg.options.negative_task;
      const auto w = simkit::gen_trial(profile, task, cfg.options.trial_seconds, cfg.options.sample_rate,
                                       derive_seed(sseed, i));
      rec.mark(datastore::marker_code::kTrialStart, task);
      rec.push(w.data);
      rec.mark(datastore::marker_code::kTrialEnd, task);
    }
    rec.metadata().sensor_locations.assign(kChannelLabels.begin(), kChannelLabels.end());
    rec.metadata().extra = {
        {"strategy", cfg.options.strategy},
        {"task_labels", {{cfg.options.positive_task, 1}, {cfg.options.negative_task, -1}}},
        {"seed", cfg.seed},
        {"synthetic_profile", simkit::to_json(profile)}};
    const auto path = cfg.out / (std::string(name) + ".mynd");
    write_file(path, datastore::write_dataset(rec.finish()));
    files.push_back(path);
    log << "wrote " << path.filename().string() << " (" << cfg.trials << " trials)\n";
  }
  Manifest m("gen-corpus", cfg.seed);
  m.parameter("subjects", cfg.subjects);
  m.parameter("trials", cfg.trials);
  m.parameter("strategy", cfg.options.strategy);
  m.parameter("base_profile", simkit::to_json(cfg.distribution.base));
  if (!cfg.profile_path.empty()) m.input("profile", cfg.profile_path);
  for (const auto& f : files) m.output(f.filename().string());
  m.write(cfg.out);
  return files;
}

/// One z-scored task per container file in `dir` (sorted by file name).
inline std::vector<decoder::TaskDataset> load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("corpus directory " + dir.string() + " not found");
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".mynd") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<decoder::TaskDataset> tasks;
  for (const auto& f : files) {
    const auto ds = datastore::read_dataset(read_file(f));
    std::vector<features::FeatureVector> fv;
    for (const auto& w : dataset_trials(ds)) fv.push_back(features::extract_trial_features(w));
    fv = features::normalize_features(std::move(fv), features::Grouping::LabSession);
    tasks.push_back(decoder::make_task(fv));
  }
  return tasks;
}

// ---------------------------------------------------------------------------
// learn-prior

struct LearnPriorConfig {
  std::filesystem::path corpus;
  std::filesystem::path out; // prior file
  decoder::LearnPriorOptions options;
  std::vector<double> lambda_grid = decoder::kDefaultLambdaGrid;
};

inline decoder::PriorFit learn_prior_from_corpus(const LearnPriorConfig& cfg, std::ostream& log) {
  const auto tasks = load_corpus(cfg.corpus);
  if (tasks.size() < 2)
    throw ContractError("learn-prior: corpus holds " + std::to_string(tasks.size()) + " task(s); at least 2 required");
  const auto fit = decoder::learn_prior(tasks, cfg.options);
  log << "tasks: " << tasks.size() << "\niterations: " << fit.iterations << "\nresidual: " << fit.residual
      << "\nconverged: " << (fit.converged ? "yes" : "no") << '\n';
  for (const auto& d : fit.diagnostics) log << "diagnostic: " << d << '\n';
  decoder::PriorFile pf;
  pf.prior = fit.prior;
  pf.lambda_grid = cfg.lambda_grid;
  pf.learn_lambda = cfg.options.lambda;
  pf.feature_names = decoder::default_feature_names();
  pf.iterations = static_cast<std::uint32_t>(fit.iterations);
  pf.residual = fit.residual;
  decoder::save_prior(cfg.out.string(), pf);
  Manifest m("learn-prior", 0);
  m.parameter("lambda", cfg.options.lambda);
  m.parameter("max_iterations", cfg.options.max_iterations);
  m.parameter("zero_mean", cfg.options.zero_mean);
  m.parameter("iterations", fit.iterations);
  m.parameter("residual", fit.residual);
  m.input_tree("corpus", cfg.corpus, ".mynd");
  m.output(cfg.out.filename().string());
  m.write_to(cfg.out.string() + ".manifest.json");
  return fit;
}

} // namespace mynd::app
