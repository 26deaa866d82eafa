#pragma once

// Offline decoding of at-home recordings: decrypt, cut trials, extract and
// z-score features per subject-day, leave-one-trial-out accuracy per
// (subject, day, strategy), then the mediator analysis.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "mynd/app/corpus.hpp"
#include "mynd/app/manifest.hpp"
#include "mynd/datastore/container.hpp"
#include "mynd/datastore/envelope.hpp"
#include "mynd/datastore/questionnaire_file.hpp"
#include "mynd/decoder.hpp"
#include "mynd/features.hpp"
#include "mynd/stats.hpp"

namespace mynd::app {

class NoRecordings : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DecodeConfig {
  std::filesystem::path recordings;
  std::optional<datastore::SecretKey> private_key;
  std::map<std::string, decoder::GaussianPrior> priors; // by strategy; "*" applies to all
  std::map<std::string, std::filesystem::path> prior_paths;
  std::vector<double> lambda_grid = decoder::kDefaultLambdaGrid;
  std::vector<std::string> strategies{"positive_memories", "music_imagery"};
  std::filesystem::path out; // empty: no files written
};

struct DecodeOutput {
  std::vector<decoder::DecodingRow> rows;
  std::optional<decoder::MediatorReport> mediators;
  std::string mediator_error;
  std::size_t recordings = 0;
  std::size_t questionnaires = 0;
  std::size_t skipped = 0;
  std::map<std::string, std::vector<double>> r2_by_strategy; // mean R² map per strategy

  double mean_accuracy() const {
    if (rows.empty()) return 0.0;
    double s = 0.0;
    for (const auto& r : rows) s += r.accuracy;
    return s / static_cast<double>(rows.size());
  }
  /// Pooled accuracy: correct trials over all trials.
  double pooled_accuracy() const {
    double correct = 0.0, total = 0.0;
    for (const auto& r : rows) {
      correct += r.accuracy * static_cast<double>(r.trials);
      total += static_cast<double>(r.trials);
    }
    return total == 0.0 ? 0.0 : correct / total;
  }
};

struct LoadedInputs {
  std::vector<datastore::RecordingDataset> datasets;
  std::vector<datastore::QuestionnaireResult> questionnaires;
  std::size_t skipped = 0;
};

/// Reads every recording and questionnaire below `dir`: envelopes (*.env),
/// plain containers (*.mynd) and questionnaire results (*.json).
inline LoadedInputs load_inputs(const std::filesystem::path& dir, const std::optional<datastore::SecretKey>& key) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw NoRecordings("no recordings: " + dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  LoadedInputs in;
  auto take = [&](const Bytes& payload) {
    if (payload.size() >= 4 && std::equal(datastore::kContainerMagic.begin(), datastore::kContainerMagic.end(),
                                          payload.begin()))
      in.datasets.push_back(datastore::read_dataset(payload));
    else if (datastore::looks_like_questionnaire(payload))
      in.questionnaires.push_back(datastore::read_questionnaire_result(to_string(payload)));
    else
      ++in.skipped;
  };
  for (const auto& f : files) {
    const auto ext = f.extension().string();
    if (ext == ".env") {
      if (!key) throw ContractError("encrypted recordings found; a private key is required");
      take(datastore::decrypt_envelope(read_file(f), *key));
    } else if (ext == ".mynd") {
      take(read_file(f));
    } else if (ext == ".json") {
      const Bytes b = read_file(f);
      try {
        in.questionnaires.push_back(datastore::read_questionnaire_result(to_string(b)));
      } catch (const std::invalid_argument&) {
        ++in.skipped; // manifests and other documents
      }
    }
  }
  return in;
}

inline DecodeOutput decode_recordings(const DecodeConfig& cfg, std::ostream& log) {
  auto in = load_inputs(cfg.recordings, cfg.private_key);
  if (in.datasets.empty()) throw NoRecordings("no recordings found in " + cfg.recordings.string());
  DecodeOutput out;
  out.recordings = in.datasets.size();
  out.questionnaires = in.questionnaires.size();
  out.skipped = in.skipped;

  // Deterministic order independent of file names.
  std::sort(in.datasets.begin(), in.datasets.end(), [](const auto& a, const auto& b) {
    return std::make_tuple(a.subject_id, a.day, a.scenario_id, a.metadata.extra.value("block", 0)) <
           std::make_tuple(b.subject_id, b.day, b.scenario_id, b.metadata.extra.value("block", 0));
  });

  const std::set<std::string> wanted(cfg.strategies.begin(), cfg.strategies.end());
  std::vector<features::FeatureVector> vectors;
  std::vector<double> trial_quality;
  for (const auto& ds : in.datasets) {
    const std::string strategy = ds.metadata.extra.value("strategy", std::string{});
    if (!wanted.count(strategy)) continue;
    const auto marks = datastore::marked_trials(ds);
    const auto trials = dataset_trials(ds);
    for (std::size_t i = 0; i < trials.size(); ++i) {
      vectors.push_back(features::extract_trial_features(trials[i]));
      trial_quality.push_back(mean_trace_quality(ds, marks[i].begin, marks[i].end));
    }
  }
  if (vectors.empty()) throw NoRecordings("no trials of the decoded strategies in " + cfg.recordings.string());
  vectors = features::normalize_features(std::move(vectors), features::Grouping::HomeDay);

  using Key = std::tuple<std::string, int, std::string>;
  std::map<Key, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < vectors.size(); ++i)
    groups[{vectors[i].subject, vectors[i].day, vectors[i].strategy}].push_back(i);

  auto motivation = [&](const std::string& subject, int day) {
    for (const auto& q : in.questionnaires)
      if (q.subject_id == subject && q.day == day)
        if (auto v = q.int_value("motivation")) return static_cast<double>(*v);
    return decoder::kMissing;
  };
  auto meditation = [&](const std::string& subject) {
    for (const auto& q : in.questionnaires)
      if (q.subject_id == subject)
        if (auto v = q.int_value("meditation")) return static_cast<double>(*v);
    return decoder::kMissing;
  };
  auto prior_for = [&](const std::string& strategy) {
    if (auto it = cfg.priors.find(strategy); it != cfg.priors.end()) return it->second;
    if (auto it = cfg.priors.find("*"); it != cfg.priors.end()) return it->second;
    return decoder::GaussianPrior::uninformative();
  };

  std::map<std::string, std::vector<std::vector<double>>> r2_maps;
  for (const auto& [key, idx] : groups) {
    const auto& [subject, day, strategy] = key;
    std::vector<features::FeatureVector> fv;
    double qsum = 0.0;
    std::size_t qn = 0;
    for (auto i : idx) {
      fv.push_back(vectors[i]);
      if (!std::isnan(trial_quality[i])) {
        qsum += trial_quality[i];
        ++qn;
      }
    }
    const auto task = decoder::make_task(fv);
    if (!task.has_both_labels())
      throw MissingLabels("subject " + subject + " day " + std::to_string(day) + " " + strategy +
                          ": both task labels are needed");
    const auto loo = decoder::loo_evaluate(task, prior_for(strategy), cfg.lambda_grid);
    decoder::DecodingRow row;
    row.subject = subject;
    row.day = day;
    row.strategy = strategy;
    row.trials = loo.trials;
    row.accuracy = loo.accuracy;
    row.mean_quality = qn ? qsum / static_cast<double>(qn) : decoder::kMissing;
    row.motivation = motivation(subject, day);
    row.meditation = meditation(subject);
    out.rows.push_back(row);
    r2_maps[strategy].push_back(features::r2_map(fv));
    log << subject << " day " << day << " " << strategy << ": " << loo.correct << "/" << loo.trials << " correct\n";
  }
  for (const auto& [s, maps] : r2_maps) out.r2_by_strategy[s] = features::group_r2_map(maps);

  try {
    out.mediators = decoder::mediator_report(out.rows);
  } catch (const std::exception& e) {
    out.mediator_error = e.what();
  }

  if (!cfg.out.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out);
    Manifest m("decode", 0);
    m.parameter("strategies", cfg.strategies);
    m.parameter("lambda_grid", cfg.lambda_grid);
    m.input_tree("recordings", cfg.recordings);
    for (const auto& [s, p] : cfg.prior_paths) m.input("prior:" + s, p);
    {
      std::ofstream os(cfg.out / "results.csv", std::ios::trunc);
      decoder::write_results_table(os, out.rows);
      m.output("results.csv");
    }
    if (out.mediators) {
      std::ofstream os(cfg.out / "mediators.csv", std::ios::trunc);
      decoder::write_mediator_table(os, *out.mediators);
      m.output("mediators.csv");
    }
    {
      // Plot series: accuracy by day per strategy.
      std::map<std::pair<std::string, int>, std::vector<double>> by_day;
      for (const auto& r : out.rows) by_day[{r.strategy, r.day}].push_back(r.accuracy);
      std::ofstream os(cfg.out / "accuracy_by_day.csv", std::ios::trunc);
      os << "strategy,day,n,mean,median\n";
      for (const auto& [k, v] : by_day)
        os << k.first << ',' << k.second << ',' << v.size() << ',' << stats::mean(v) << ',' << stats::median(v)
           << '\n';
      m.output("accuracy_by_day.csv");
    }
    {
      std::ofstream os(cfg.out / "accuracy_vs_quality.csv", std::ios::trunc);
      os << "subject,day,strategy,mean_quality,accuracy\n";
      for (const auto& r : out.rows)
        os << r.subject << ',' << r.day << ',' << r.strategy << ',' << r.mean_quality << ',' << r.accuracy << '\n';
      m.output("accuracy_vs_quality.csv");
    }
    {
      std::ofstream os(cfg.out / "r2_map.csv", std::ios::trunc);
      os << "strategy,channel,feature,r2\n";
      for (const auto& [s, map] : out.r2_by_strategy)
        for (std::size_t f = 0; f < map.size(); ++f)
          os << s << ',' << kChannelLabels[f / features::kFeaturesPerChannel] << ','
             << features::kFeatureKinds[f % features::kFeaturesPerChannel] << ',' << map[f] << '\n';
      m.output("r2_map.csv");
    }
    {
      std::ofstream os(cfg.out / "features.tsv", std::ios::trunc);
      features::write_feature_table_header(os);
      for (const auto& v : vectors) features::write_feature_row(os, v);
      m.output("features.tsv");
    }
    m.write(cfg.out);
  }
  return out;
}

} // namespace mynd::app
