#pragma once

// Session state machine. next_event() is a pure function of (study, state,
// event); the host delivers device, timer, and user inputs as serialized
// events and carries out the returned effects (start a trial recording,
// persist or discard a block, disconnect the headset, show a notification).

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mynd/session/study.hpp"

namespace mynd::session {

using Clock = std::chrono::system_clock;
using TimePoint = std::chrono::time_point<Clock, std::chrono::milliseconds>;
using namespace std::chrono_literals;

inline constexpr std::chrono::hours kDayTimeout{12};
inline constexpr double kMinimumBattery = 0.10; // recording needs strictly more than this

enum class State {
  Home,
  ScenarioInfo,
  Preparation,
  NoiseCheck,
  Fitting,
  RecordingTrial,
  BlockReview,
  CheckupFitting,
  Questionnaire,
  Uploading,
  LockedOut,
  Aborted,
};

inline constexpr State kAllStates[] = {State::Home,          State::ScenarioInfo, State::Preparation,
                                       State::NoiseCheck,    State::Fitting,      State::RecordingTrial,
                                       State::BlockReview,   State::CheckupFitting, State::Questionnaire,
                                       State::Uploading,     State::LockedOut,    State::Aborted};

inline const char* to_string(State s) {
  switch (s) {
  case State::Home: return "Home";
  case State::ScenarioInfo: return "ScenarioInfo";
  case State::Preparation: return "Preparation";
  case State::NoiseCheck: return "NoiseCheck";
  case State::Fitting: return "Fitting";
  case State::RecordingTrial: return "RecordingTrial";
  case State::BlockReview: return "BlockReview";
  case State::CheckupFitting: return "CheckupFitting";
  case State::Questionnaire: return "Questionnaire";
  case State::Uploading: return "Uploading";
  case State::LockedOut: return "LockedOut";
  case State::Aborted: return "Aborted";
  }
  return "?";
}

enum class EventKind {
  StartSession,
  StepDone,
  DeviceFound,
  BatteryRead,
  NoiseCheckDone,
  QualityMet,
  TrialElapsed,
  ContinueBlock,
  EndSession,
  AppBackgrounded,
  DeviceDisconnected,
  TimerExpired,
  UploadDone,
};

inline constexpr EventKind kAllEvents[] = {
    EventKind::StartSession,   EventKind::StepDone,       EventKind::DeviceFound,     EventKind::BatteryRead,
    EventKind::NoiseCheckDone, EventKind::QualityMet,     EventKind::TrialElapsed,    EventKind::ContinueBlock,
    EventKind::EndSession,     EventKind::AppBackgrounded, EventKind::DeviceDisconnected, EventKind::TimerExpired,
    EventKind::UploadDone};

inline const char* to_string(EventKind e) {
  switch (e) {
  case EventKind::StartSession: return "start_session";
  case EventKind::StepDone: return "step_done";
  case EventKind::DeviceFound: return "device_found";
  case EventKind::BatteryRead: return "battery_read";
  case EventKind::NoiseCheckDone: return "noise_check_done";
  case EventKind::QualityMet: return "quality_met";
  case EventKind::TrialElapsed: return "trial_elapsed";
  case EventKind::ContinueBlock: return "continue_block";
  case EventKind::EndSession: return "end_session";
  case EventKind::AppBackgrounded: return "app_backgrounded";
  case EventKind::DeviceDisconnected: return "device_disconnected";
  case EventKind::TimerExpired: return "timer_expired";
  case EventKind::UploadDone: return "upload_done";
  }
  return "?";
}

struct Event {
  EventKind kind;
  TimePoint at{};
  double battery = 1.0; // battery_read only

  static Event battery_read(double level, TimePoint at) { return {EventKind::BatteryRead, at, level}; }
};

struct DeviceStatus {
  bool connected = false;
  std::optional<double> battery; // fraction in [0,1], unknown until read

  bool ready() const { return connected && battery && *battery > kMinimumBattery; }
  bool operator==(const DeviceStatus&) const = default;
};

struct DayTimer {
  TimePoint started_at{};
  std::chrono::milliseconds duration = kDayTimeout;

  bool expired(TimePoint now) const { return now - started_at >= duration; }
  bool operator==(const DayTimer&) const = default;
};

enum class TimerStatus { NotStarted, Locked, Expired };

inline TimerStatus day_timer_tick(const std::optional<DayTimer>& timer, TimePoint now) {
  if (!timer) return TimerStatus::NotStarted;
  return timer->expired(now) ? TimerStatus::Expired : TimerStatus::Locked;
}

struct SessionState {
  State state = State::Home;
  int day = 1;
  std::vector<Scenario> scenarios; // today's schedule
  std::size_t scenario = 0;        // active scenario index
  std::size_t block = 0;           // active block within the scenario
  std::size_t trial = 0;           // active trial within the block
  DeviceStatus device;
  std::optional<TimePoint> fitting_started_at;
  std::optional<DayTimer> timer;
  bool expiry_pending = false;     // timer expired while busy; roll over on return Home
  int blocks_persisted = 0;        // in the current session
  bool study_complete = false;

  /// Index of the first incomplete scenario, if any.
  std::optional<std::size_t> current_scenario() const {
    if (study_complete) return std::nullopt;
    for (std::size_t i = 0; i < scenarios.size(); ++i)
      if (!scenarios[i].completed()) return i;
    return std::nullopt;
  }
  bool day_complete() const { return !current_scenario().has_value(); }

  bool operator==(const SessionState&) const = default;
};

enum class EffectKind {
  StartDayTimer,
  StartNoiseCheck,
  StartFitting,
  StartTrial,
  PersistBlock,
  DiscardBlock,
  StoreQuestionnaire,
  BeginUpload,
  RequestDisconnect,
  LoadNextDay,
  StudyComplete,
  ShowError,
  Notify,
};

struct Effect {
  EffectKind kind;
  std::string detail;

  bool operator==(const Effect&) const = default;
};

enum class Outcome {
  Accepted, // transition taken (possibly a self-transition)
  Blocked,  // defined input whose gating condition is not met; state unchanged
  Rejected, // undefined (state, input) pair; state unchanged
};

struct TransitionResult {
  SessionState state;
  Outcome outcome = Outcome::Accepted;
  std::string message;
  std::vector<Effect> effects;

  bool accepted() const { return outcome == Outcome::Accepted; }
};

struct EngineContext {
  const StudyDefinition* study = nullptr;
  std::uint64_t subject_seed = 0;
  std::string locale = "en";
};

/// A state at the start of `day` with that day's schedule loaded.
inline SessionState initial_state(const EngineContext& ctx, int day = 1) {
  SessionState s;
  s.day = day;
  s.scenarios = plan_schedule(*ctx.study, day, ctx.subject_seed, ctx.locale);
  return s;
}

namespace detail {

inline TransitionResult reject(const SessionState& s, const Event& e, std::string why = {}) {
  TransitionResult r{s, Outcome::Rejected, {}, {}};
  r.message = std::string("invalid transition: ") + to_string(e.kind) + " in " + to_string(s.state);
  if (!why.empty()) r.message += " (" + why + ")";
  return r;
}

inline TransitionResult block(const SessionState& s, std::string why) {
  TransitionResult r{s, Outcome::Blocked, std::move(why), {}};
  r.effects.push_back({EffectKind::ShowError, r.message});
  return r;
}

inline void advance_day(const EngineContext& ctx, TransitionResult& r) {
  SessionState& s = r.state;
  s.timer.reset();
  s.expiry_pending = false;
  s.device = {};
  s.fitting_started_at.reset();
  s.scenario = s.block = s.trial = 0;
  s.blocks_persisted = 0;
  if (s.day >= ctx.study->days) {
    s.study_complete = true;
    s.scenarios.clear();
    r.effects.push_back({EffectKind::StudyComplete, {}});
    return;
  }
  ++s.day;
  s.scenarios = plan_schedule(*ctx.study, s.day, ctx.subject_seed, ctx.locale);
  r.effects.push_back({EffectKind::LoadNextDay, std::to_string(s.day)});
  r.effects.push_back({EffectKind::Notify, "Day " + std::to_string(s.day) + " sessions are available."});
}

/// Returns to Home, or LockedOut when the day is done and its timer runs.
inline void leave_session(const EngineContext& ctx, TransitionResult& r) {
  SessionState& s = r.state;
  s.device = {};
  s.fitting_started_at.reset();
  s.blocks_persisted = 0;
  if (s.expiry_pending) {
    s.state = State::Home;
    advance_day(ctx, r);
  } else if (s.day_complete() && s.timer) {
    s.state = State::LockedOut;
  } else {
    s.state = State::Home;
  }
}

inline void start_trial(TransitionResult& r) {
  const SessionState& s = r.state;
  r.effects.push_back({EffectKind::StartTrial, s.scenarios[s.scenario].id + "/b" + std::to_string(s.block) + "/t" +
                                                   std::to_string(s.trial)});
}

inline void abort_session(TransitionResult& r, const std::string& reason, bool block_in_progress) {
  SessionState& s = r.state;
  if (block_in_progress)
    r.effects.push_back({EffectKind::DiscardBlock, s.scenarios[s.scenario].id + "/b" + std::to_string(s.block)});
  if (s.device.connected) r.effects.push_back({EffectKind::RequestDisconnect, {}});
  r.effects.push_back({EffectKind::ShowError, reason});
  s.device = {};
  s.trial = 0;
  s.state = State::Aborted;
  r.message = reason;
}

inline bool timer_due(const SessionState& s, TimePoint now) {
  return day_timer_tick(s.timer, now) == TimerStatus::Expired;
}

} // namespace detail

inline TransitionResult next_event(const EngineContext& ctx, const SessionState& s, const Event& e) {
  using detail::block;
  using detail::reject;
  TransitionResult r{s, Outcome::Accepted, {}, {}};
  SessionState& n = r.state;

  // Inputs with the same meaning in many states.
  const bool device_state = s.state == State::NoiseCheck || s.state == State::Fitting ||
                            s.state == State::RecordingTrial || s.state == State::BlockReview ||
                            s.state == State::CheckupFitting;
  if (e.kind == EventKind::TimerExpired) {
    if (!detail::timer_due(s, e.at)) return reject(s, e, s.timer ? "day timer still running" : "day timer not started");
    if (s.state == State::Home || s.state == State::LockedOut) {
      n.state = State::Home;
      detail::advance_day(ctx, r);
    } else {
      n.expiry_pending = true;
    }
    return r;
  }
  if (e.kind == EventKind::AppBackgrounded && s.state != State::Preparation && !device_state) return r;

  switch (s.state) {
  case State::Home:
    if (e.kind == EventKind::StartSession) {
      auto cur = s.current_scenario();
      if (!cur) return reject(s, e, "no active scenario");
      n.scenario = *cur;
      n.block = s.scenarios[*cur].completed_blocks;
      n.trial = 0;
      n.blocks_persisted = 0;
      n.state = State::ScenarioInfo;
      return r;
    }
    break;

  case State::ScenarioInfo:
    if (e.kind == EventKind::StepDone) {
      if (s.scenarios[s.scenario].kind == ScenarioKind::Questionnaire) {
        n.state = State::Questionnaire;
      } else {
        n.state = State::Preparation;
        n.device = {};
      }
      return r;
    }
    if (e.kind == EventKind::EndSession) {
      detail::leave_session(ctx, r);
      return r;
    }
    break;

  case State::Questionnaire:
    if (e.kind == EventKind::StepDone) {
      n.scenarios[s.scenario].questionnaire_done = true;
      r.effects.push_back({EffectKind::StoreQuestionnaire, s.scenarios[s.scenario].id});
      r.effects.push_back({EffectKind::BeginUpload, {}});
      n.state = State::Uploading;
      return r;
    }
    if (e.kind == EventKind::EndSession) {
      detail::leave_session(ctx, r);
      return r;
    }
    break;

  case State::Preparation:
    switch (e.kind) {
    case EventKind::DeviceFound:
      n.device.connected = true;
      return r;
    case EventKind::BatteryRead:
      if (!s.device.connected) return reject(s, e, "no headset connected");
      if (e.battery < 0.0 || e.battery > 1.0) return reject(s, e, "battery level outside [0,1]");
      n.device.battery = e.battery;
      if (e.battery <= kMinimumBattery) return block(s, "Headset battery too low: charge it above 10% before recording.");
      return r;
    case EventKind::StepDone:
      if (!s.device.connected) return block(s, "Connect the headset to continue.");
      if (!s.device.ready()) return block(s, "Headset battery too low or not yet read.");
      n.state = State::NoiseCheck;
      r.effects.push_back({EffectKind::StartNoiseCheck, {}});
      return r;
    case EventKind::DeviceDisconnected:
      if (!s.device.connected) return reject(s, e, "no headset connected");
      n.device = {};
      r.effects.push_back({EffectKind::ShowError, "Headset disconnected."});
      return r;
    case EventKind::AppBackgrounded:
      detail::abort_session(r, "Session aborted: the app was moved to the background.", false);
      return r;
    case EventKind::EndSession:
      if (s.device.connected) r.effects.push_back({EffectKind::RequestDisconnect, {}});
      detail::leave_session(ctx, r);
      return r;
    default:
      break;
    }
    break;

  case State::NoiseCheck:
  case State::Fitting:
  case State::RecordingTrial:
  case State::BlockReview:
  case State::CheckupFitting: {
    const bool in_block = s.state == State::RecordingTrial;
    if (e.kind == EventKind::AppBackgrounded) {
      detail::abort_session(r, "Session aborted: the app was moved to the background.", in_block);
      return r;
    }
    if (e.kind == EventKind::DeviceDisconnected) {
      detail::abort_session(r, "Session aborted: the headset disconnected.", in_block);
      return r;
    }
    if (e.kind == EventKind::BatteryRead) {
      if (e.battery < 0.0 || e.battery > 1.0) return reject(s, e, "battery level outside [0,1]");
      n.device.battery = e.battery;
      if (e.battery <= kMinimumBattery) detail::abort_session(r, "Session aborted: headset battery too low.", in_block);
      return r;
    }
    if (s.state == State::NoiseCheck && e.kind == EventKind::NoiseCheckDone) {
      n.state = State::Fitting;
      n.fitting_started_at = e.at;
      r.effects.push_back({EffectKind::StartFitting, "initial"});
      return r;
    }
    if ((s.state == State::Fitting || s.state == State::CheckupFitting) && e.kind == EventKind::QualityMet) {
      n.state = State::RecordingTrial;
      n.fitting_started_at.reset();
      n.trial = 0;
      if (!s.timer) {
        n.timer = DayTimer{e.at, kDayTimeout};
        r.effects.push_back({EffectKind::StartDayTimer, {}});
      }
      detail::start_trial(r);
      return r;
    }
    if ((s.state == State::Fitting || s.state == State::CheckupFitting) && e.kind == EventKind::StepDone)
      return block(s, "Adjust the headset until the signal quality target is reached.");
    if (s.state == State::RecordingTrial && e.kind == EventKind::TrialElapsed) {
      const Scenario& sc = s.scenarios[s.scenario];
      if (s.trial + 1 < sc.blocks[s.block].trials.size()) {
        ++n.trial;
        detail::start_trial(r);
        return r;
      }
      r.effects.push_back({EffectKind::PersistBlock, sc.id + "/b" + std::to_string(s.block)});
      Scenario& nsc = n.scenarios[s.scenario];
      nsc.completed_blocks = s.block + 1;
      ++n.blocks_persisted;
      n.trial = 0;
      if (nsc.completed()) {
        n.state = State::Uploading;
        r.effects.push_back({EffectKind::BeginUpload, {}});
      } else {
        n.block = s.block + 1;
        n.state = State::BlockReview;
      }
      return r;
    }
    if (s.state == State::BlockReview && e.kind == EventKind::ContinueBlock) {
      n.state = State::CheckupFitting;
      n.fitting_started_at = e.at;
      r.effects.push_back({EffectKind::StartFitting, "checkup"});
      return r;
    }
    if (e.kind == EventKind::EndSession) {
      if (s.state == State::RecordingTrial) break; // a running block ends only by completing or aborting
      r.effects.push_back({EffectKind::RequestDisconnect, {}});
      n.device = {};
      if (s.blocks_persisted > 0) {
        n.state = State::Uploading;
        r.effects.push_back({EffectKind::BeginUpload, {}});
      } else {
        detail::leave_session(ctx, r);
      }
      return r;
    }
    break;
  }

  case State::Uploading:
    if (e.kind == EventKind::UploadDone) {
      detail::leave_session(ctx, r);
      return r;
    }
    break;

  case State::LockedOut:
    break;

  case State::Aborted:
    if (e.kind == EventKind::DeviceDisconnected) return r;
    if (e.kind == EventKind::StepDone) {
      if (s.blocks_persisted > 0) {
        n.state = State::Uploading;
        r.effects.push_back({EffectKind::BeginUpload, {}});
      } else {
        detail::leave_session(ctx, r);
      }
      return r;
    }
    break;
  }
  return reject(s, e);
}

/// Convenience wrapper that keeps the current state and applies accepted
/// transitions.
class SessionEngine {
public:
  SessionEngine(const StudyDefinition& study, std::uint64_t subject_seed, std::string locale = "en", int day = 1)
      : ctx_{&study, subject_seed, std::move(locale)}, state_(initial_state(ctx_, day)) {}

  TransitionResult dispatch(const Event& e) {
    auto r = next_event(ctx_, state_, e);
    if (r.outcome == Outcome::Accepted) state_ = r.state;
    return r;
  }

  const SessionState& state() const { return state_; }
  const EngineContext& context() const { return ctx_; }

private:
  EngineContext ctx_;
  SessionState state_;
};

} // namespace mynd::session
