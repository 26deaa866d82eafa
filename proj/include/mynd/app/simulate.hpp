#pragma once

// Drives the session engine with a synthetic subject: noise check, fitting,
// blocks of trials, check-ups, questionnaires, encryption and upload. The
// simulated clock is derived from the seed, so a run is reproducible down to
// the dataset bytes (envelopes differ because their keys and nonces are fresh).

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mynd/app/manifest.hpp"
#include "mynd/datastore/container.hpp"
#include "mynd/datastore/envelope.hpp"
#include "mynd/datastore/questionnaire_file.hpp"
#include "mynd/datastore/upload_queue.hpp"
#include "mynd/session/engine.hpp"
#include "mynd/simkit.hpp"
#include "mynd/streamkit.hpp"

namespace mynd::app {

struct SimulateConfig {
  session::StudyDefinition study = session::default_study();
  std::filesystem::path study_path;   // recorded in the manifest when set
  std::vector<int> days{1};           // consecutive, ascending
  std::uint64_t seed = 1;
  std::string subject;                // pseudonymous token
  simkit::SubjectProfile profile = simkit::default_profile();
  std::filesystem::path profile_path; // recorded in the manifest when set
  std::optional<double> battery;      // overrides profile.battery
  std::string transport = "dir";      // dir | http
  std::string server_url;
  std::filesystem::path transport_dir; // defaults to <out>/server
  std::filesystem::path out;
  double line_freq = 50.0;
  std::string locale = "en";
  datastore::PublicKey public_key{};
  double sample_rate = kSampleRate;
  double max_fitting_s = 1800.0;
};

struct BlockSummary {
  int day = 0;
  std::string scenario;
  std::size_t block = 0;
  std::size_t blocks = 0;
  bool checkup = false;
  double fitting_s = 0.0;
  double mean_quality = 0.0;
  std::size_t trials = 0;
  std::string entry_id;
};

struct SimulationReport {
  std::vector<BlockSummary> blocks;
  std::vector<std::string> questionnaires; // entry ids
  std::vector<double> noise_quality;       // per recording session
  std::size_t envelopes = 0;
  std::size_t uploaded = 0;
  std::vector<std::string> upload_errors;
  int last_day = 0;
  bool study_complete = false;
};

class SimulationError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Fixed epoch of the simulated study plus a seed-dependent start offset.
inline SimTime simulated_start(std::uint64_t seed) {
  // 2024-03-04T08:00:00Z
  const SimTime base{std::chrono::milliseconds{1709539200000LL}};
  return base + std::chrono::seconds(static_cast<long long>(derive_seed(seed, "clock") % 7200));
}

class SessionSimulator {
public:
  SessionSimulator(SimulateConfig cfg, std::ostream& log) : cfg_(std::move(cfg)), log_(log) {
    if (cfg_.subject.empty()) throw ContractError("simulate: a subject token is required");
    if (cfg_.days.empty()) throw ContractError("simulate: no days requested");
    for (std::size_t i = 0; i < cfg_.days.size(); ++i) {
      if (cfg_.days[i] < 1 || cfg_.days[i] > cfg_.study.days)
        throw ContractError("simulate: day " + std::to_string(cfg_.days[i]) + " outside the study");
      if (i > 0 && cfg_.days[i] != cfg_.days[i - 1] + 1) throw ContractError("simulate: days must be consecutive");
    }
    if (cfg_.battery) cfg_.profile.battery = *cfg_.battery;
    simkit::validate(cfg_.profile);
    if (cfg_.transport_dir.empty()) cfg_.transport_dir = cfg_.out / "server";
    if (cfg_.transport == "http") {
      if (cfg_.server_url.empty()) throw ContractError("simulate: --server is required for the http transport");
      transport_ = std::make_unique<datastore::HttpTransport>(cfg_.server_url);
    } else if (cfg_.transport == "dir") {
      std::filesystem::create_directories(cfg_.transport_dir);
      transport_ = std::make_unique<datastore::DirectoryTransport>(cfg_.transport_dir);
    } else {
      throw ContractError("simulate: unknown transport '" + cfg_.transport + "'");
    }
    queue_ = std::make_unique<datastore::UploadQueue>(cfg_.out / "queue");
    subject_seed_ = derive_seed(cfg_.seed, cfg_.subject);
    now_ = simulated_start(cfg_.seed) + std::chrono::hours(24) * (cfg_.days.front() - 1);
  }

  SimulationReport run() {
    session::SessionEngine engine(cfg_.study, subject_seed_, cfg_.locale, cfg_.days.front());
    engine_ = &engine;
    for (const auto& a : inbox_.fetch(*transport_, cfg_.locale)) log_ << "message: " << a.text << '\n';
    for (std::size_t i = 0; i < cfg_.days.size(); ++i) {
      const int day = cfg_.days[i];
      log_ << "day " << day << ": " << engine.state().scenarios.size() << " scenarios\n";
      while (auto cur = engine.state().current_scenario()) {
        const auto& sc = engine.state().scenarios[*cur];
        if (sc.kind == session::ScenarioKind::Questionnaire)
          run_questionnaire(*cur);
        else
          run_recording(*cur);
      }
      report_.last_day = day;
      if (engine.state().state != session::State::LockedOut)
        throw SimulationError("day " + std::to_string(day) + " finished outside LockedOut");
      if (i + 1 < cfg_.days.size() || day == cfg_.study.days) {
        now_ = engine.state().timer->started_at + session::kDayTimeout;
        auto r = expect({session::EventKind::TimerExpired, now_}, session::State::Home);
        for (const auto& e : r.effects)
          if (e.kind == session::EffectKind::Notify) log_ << "notification: " << e.detail << '\n';
      }
    }
    report_.study_complete = engine.state().study_complete;
    engine_ = nullptr;
    write_outputs();
    return report_;
  }

  const SimulateConfig& config() const { return cfg_; }

private:
  session::TransitionResult expect(const session::Event& e, std::optional<session::State> target = std::nullopt) {
    auto r = engine_->dispatch(e);
    if (r.outcome != session::Outcome::Accepted)
      throw SimulationError(std::string(session::to_string(e.kind)) + " not accepted: " + r.message);
    if (target && r.state.state != *target)
      throw SimulationError(std::string(session::to_string(e.kind)) + " led to " + session::to_string(r.state.state) +
                            ", expected " + session::to_string(*target));
    return r;
  }

  std::uint64_t seed_for(const std::string& tag) const { return derive_seed(subject_seed_, tag); }

  void upload() {
    const auto rep = queue_->flush(*transport_);
    report_.uploaded += rep.sent();
    if (!rep.ok()) {
      report_.upload_errors.push_back(*rep.error);
      log_ << "upload: " << *rep.error << " (kept in queue)\n";
    }
    expect({session::EventKind::UploadDone, now_});
  }

  std::string enqueue(const Bytes& plain) {
    const Bytes env = datastore::encrypt_envelope(plain, cfg_.public_key);
    ++report_.envelopes;
    return queue_->enqueue(env, cfg_.subject, format_time(now_));
  }

  void run_questionnaire(std::size_t index) {
    expect({session::EventKind::StartSession, now_}, session::State::ScenarioInfo);
    expect({session::EventKind::StepDone, now_}, session::State::Questionnaire);
    const auto& sc = engine_->state().scenarios[index];
    const int day = engine_->state().day;
    std::mt19937_64 rng(seed_for("d" + std::to_string(day) + "/" + sc.id));
    datastore::QuestionnaireResult res;
    res.questionnaire_id = sc.source;
    res.subject_id = cfg_.subject;
    res.day = day;
    res.locale = cfg_.locale;
    res.started_at = format_time(now_);
    res.responses = session::run_questionnaire(
        sc.items,
        [&](const session::QuestionnaireItem& item) -> session::Answer {
          switch (item.kind) {
          case session::ItemKind::Likert: return 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(item.scale));
          case session::ItemKind::Choice: return static_cast<int>(rng() % item.options.size());
          case session::ItemKind::Text: return std::string("n/a");
          case session::ItemKind::Date: return std::string("2000-01-01");
          }
          return 0;
        },
        [&] {
          now_ += std::chrono::seconds(session::kSecondsPerQuestionnaireItem);
          return format_time(now_);
        });
    res.completed_at = format_time(now_);
    const std::string text = datastore::write_questionnaire_result(res);
    report_.questionnaires.push_back(enqueue(to_bytes(text)));
    log_ << "day " << day << " " << sc.id << ": " << res.responses.size() << " answers\n";
    expect({session::EventKind::StepDone, now_}, session::State::Uploading);
    upload();
  }

  // One recording session: streams frames through the quality estimator from
  // the noise check to the end of the last block.
  struct Stream {
    streamkit::QualityEstimator estimator;
    std::uint64_t next_index = 0;
  };

  /// Feeds a segment to the estimator. `on_report` returns true to stop early;
  /// the return value is the number of frames consumed.
  template <class F>
  std::size_t feed(Stream& st, const features::RowMatrix& data, F&& on_report) {
    for (Eigen::Index i = 0; i < data.cols(); ++i) {
      EegFrame f;
      f.sample_index = st.next_index++;
      f.sample_rate = cfg_.sample_rate;
      for (std::size_t c = 0; c < kChannelCount; ++c) f.channels[c] = data(static_cast<Eigen::Index>(c), i);
      if (auto rep = st.estimator.push(f))
        if (on_report(*rep)) return static_cast<std::size_t>(i) + 1;
    }
    return static_cast<std::size_t>(data.cols());
  }

  double run_fitting(Stream& st, bool checkup, const std::string& tag) {
    const double chunk_s = 10.0;
    std::size_t consumed = 0;
    bool met = false;
    for (int k = 0; !met; ++k) {
      const double offset = static_cast<double>(consumed) / cfg_.sample_rate;
      if (offset >= cfg_.max_fitting_s) throw SimulationError("fitting did not converge within the time limit");
      simkit::SegmentSpec spec{chunk_s, {}, [&, offset](double t) {
                                 return simkit::fitting_sigma(cfg_.profile, offset + t, checkup);
                               }};
      const auto seg = simkit::gen_segment(cfg_.profile, spec, cfg_.sample_rate,
                                           seed_for(tag + "/fit" + std::to_string(k)));
      const std::uint64_t first = st.next_index;
      consumed += feed(st, seg.data, [&](const streamkit::QualityReport& rep) {
        const double elapsed = static_cast<double>(consumed + (rep.timestamp - first + 1)) / cfg_.sample_rate;
        met = streamkit::fitting_gate(elapsed, rep).met;
        return met;
      });
    }
    const double fitting_s = static_cast<double>(consumed) / cfg_.sample_rate;
    now_ += std::chrono::milliseconds(static_cast<long long>(std::llround(fitting_s * 1000.0)));
    return fitting_s;
  }

  void run_recording(std::size_t index) {
    const int day = engine_->state().day;
    const std::string sc_id = engine_->state().scenarios[index].id;
    const std::string strategy = engine_->state().scenarios[index].source;
    const auto* spec = cfg_.study.strategy(strategy);
    if (!spec) throw SimulationError("scenario " + sc_id + " refers to an unknown strategy");

    expect({session::EventKind::StartSession, now_}, session::State::ScenarioInfo);
    expect({session::EventKind::StepDone, now_}, session::State::Preparation);
    now_ += std::chrono::seconds(30);
    expect({session::EventKind::DeviceFound, now_});
    auto battery = engine_->dispatch(session::Event::battery_read(cfg_.profile.battery, now_));
    if (battery.outcome != session::Outcome::Accepted) {
      log_ << "day " << day << " " << sc_id << ": " << battery.message << '\n';
      expect({session::EventKind::EndSession, now_}, session::State::Home);
      throw SimulationError("recording refused: " + battery.message);
    }
    expect({session::EventKind::StepDone, now_}, session::State::NoiseCheck);

    Stream st;
    const std::string tag = "d" + std::to_string(day) + "/" + sc_id + "/s" + std::to_string(sessions_++);
    {
      const auto seg = simkit::gen_segment(cfg_.profile, {1.0, {}, {}}, cfg_.sample_rate, seed_for(tag + "/noise"));
      std::vector<std::vector<double>> chans(kChannelCount);
      for (std::size_t c = 0; c < kChannelCount; ++c) {
        const auto row = seg.data.row(static_cast<Eigen::Index>(c));
        chans[c].assign(row.data(), row.data() + row.size());
      }
      streamkit::NoiseCheckConfig ncfg;
      ncfg.line_frequency = cfg_.line_freq;
      const auto nr = streamkit::em_noise_quality(chans, cfg_.sample_rate, ncfg);
      const double q = std::accumulate(nr.per_channel.begin(), nr.per_channel.end(), 0.0) / kChannelCount;
      report_.noise_quality.push_back(q);
      feed(st, seg.data, [](const auto&) { return false; });
      now_ += std::chrono::seconds(1);
    }
    expect({session::EventKind::NoiseCheckDone, now_}, session::State::Fitting);
    double fitting_s = run_fitting(st, false, tag);
    bool checkup = false;
    expect({session::EventKind::QualityMet, now_}, session::State::RecordingTrial);

    while (true) {
      const auto& s = engine_->state();
      const std::size_t b = s.block;
      const auto& block = s.scenarios[index].blocks[b];
      const std::size_t n_blocks = s.scenarios[index].blocks.size();
      simkit::Recorder rec(cfg_.subject, sc_id, day, cfg_.sample_rate);
      rec.metadata().started_at = format_time(now_);
      rec.metadata().locale = cfg_.locale;
      rec.metadata().fitting_time_s = fitting_s;
      rec.metadata().sensor_locations.assign(kChannelLabels.begin(), kChannelLabels.end());
      rec.mark(datastore::marker_code::kBlockStart, "block" + std::to_string(b));
      const std::uint64_t block_first_index = st.next_index;
      std::vector<double> qualities;
      session::TransitionResult last;
      for (std::size_t t = 0; t < block.trials.size(); ++t) {
        const auto& trial = block.trials[t];
        rec.mark(datastore::marker_code::kTrialStart, trial.task);
        const auto seg = simkit::gen_segment(cfg_.profile, {static_cast<double>(trial.duration_s), trial.task, {}},
                                             cfg_.sample_rate,
                                             seed_for(tag + "/b" + std::to_string(b) + "/t" + std::to_string(t)));
        feed(st, seg.data, [&](const streamkit::QualityReport& rep) {
          datastore::QualitySample qs;
          qs.sample_index = rep.timestamp - block_first_index;
          qs.quality = rep.per_channel;
          rec.metadata().quality_trace.push_back(qs);
          qualities.push_back(rep.mean());
          return false;
        });
        rec.push(seg.data);
        rec.mark(datastore::marker_code::kTrialEnd, trial.task);
        now_ += std::chrono::seconds(trial.duration_s);
        last = expect({session::EventKind::TrialElapsed, now_});
      }
      const bool persisted = std::any_of(last.effects.begin(), last.effects.end(),
                                         [](auto& e) { return e.kind == session::EffectKind::PersistBlock; });
      if (!persisted) throw SimulationError("block " + std::to_string(b) + " of " + sc_id + " was not persisted");
      rec.mark(datastore::marker_code::kBlockEnd, "block" + std::to_string(b));
      rec.metadata().ended_at = format_time(now_);
      nlohmann::json labels = nlohmann::json::object();
      for (const auto& task : spec->tasks) labels[task.id] = task.label;
      rec.metadata().extra = {{"strategy", strategy},
                              {"block", b},
                              {"blocks", n_blocks},
                              {"task_labels", labels},
                              {"seed", cfg_.seed},
                              {"synthetic_profile", cfg_.profile.name}};
      const auto ds = rec.finish();
      BlockSummary sum;
      sum.day = day;
      sum.scenario = sc_id;
      sum.block = b;
      sum.blocks = n_blocks;
      sum.checkup = checkup;
      sum.fitting_s = fitting_s;
      sum.trials = block.trials.size();
      sum.mean_quality = qualities.empty() ? 0.0 : std::accumulate(qualities.begin(), qualities.end(), 0.0) /
                                                       static_cast<double>(qualities.size());
      sum.entry_id = enqueue(datastore::write_dataset(ds));
      log_ << "day " << day << " " << sc_id << " block " << b + 1 << "/" << n_blocks << ": "
           << (checkup ? "check-up " : "fitting ") << std::fixed << std::setprecision(1) << fitting_s << " s, quality "
           << std::setprecision(3) << sum.mean_quality << ", " << sum.trials << " trials\n";
      log_.unsetf(std::ios::floatfield);
      report_.blocks.push_back(sum);

      if (engine_->state().state == session::State::Uploading) {
        upload();
        return;
      }
      if (engine_->state().state != session::State::BlockReview)
        throw SimulationError("unexpected state after block: " + std::string(session::to_string(engine_->state().state)));
      now_ += std::chrono::seconds(10);
      expect({session::EventKind::ContinueBlock, now_}, session::State::CheckupFitting);
      fitting_s = run_fitting(st, true, tag + "/b" + std::to_string(b + 1));
      checkup = true;
      expect({session::EventKind::QualityMet, now_}, session::State::RecordingTrial);
    }
  }

  void write_outputs() {
    std::filesystem::create_directories(cfg_.out);
    {
      std::ofstream os(cfg_.out / "blocks.tsv", std::ios::trunc);
      os << "day\tscenario\tblock\tblocks\tcheckup\tfitting_s\tmean_quality\ttrials\tentry\n";
      for (const auto& b : report_.blocks)
        os << b.day << '\t' << b.scenario << '\t' << b.block << '\t' << b.blocks << '\t' << (b.checkup ? 1 : 0)
           << '\t' << b.fitting_s << '\t' << b.mean_quality << '\t' << b.trials << '\t' << b.entry_id << '\n';
    }
    Manifest m("simulate", cfg_.seed);
    m.parameter("subject", cfg_.subject);
    m.parameter("days", cfg_.days);
    m.parameter("transport", cfg_.transport);
    m.parameter("line_freq", cfg_.line_freq);
    m.parameter("locale", cfg_.locale);
    m.parameter("profile", simkit::to_json(cfg_.profile));
    m.parameter("public_key_id", datastore::to_hex(datastore::key_id(cfg_.public_key)));
    if (!cfg_.study_path.empty()) m.input("study", cfg_.study_path);
    if (!cfg_.profile_path.empty()) m.input("profile", cfg_.profile_path);
    m.output("blocks.tsv");
    m.output("queue/");
    m.write(cfg_.out);
  }

  SimulateConfig cfg_;
  std::ostream& log_;
  std::unique_ptr<datastore::Transport> transport_;
  std::unique_ptr<datastore::UploadQueue> queue_;
  datastore::MessageInbox inbox_;
  session::SessionEngine* engine_ = nullptr;
  std::uint64_t subject_seed_ = 0;
  SimTime now_{};
  std::size_t sessions_ = 0;
  SimulationReport report_;
};

inline SimulationReport simulate_session(const SimulateConfig& cfg, std::ostream& log) {
  return SessionSimulator(cfg, log).run();
}

} // namespace mynd::app
