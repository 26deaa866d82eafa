#pragma once

// Study definition and daily schedule.
//
// Study file (JSON):
//
//   {"days": 7,
//    "locales": ["en", ...],
//    "questionnaires": [{"id": "daily", "days": [1,...],
//                        "files": {"en": "questionnaires/daily.en.json"}}],
//    "strategies": [{"id": "positive_memories",
//                    "title": {"en": "..."}, "description": {"en": "..."},
//                    "trial_seconds": 30, "trials_per_task_per_block": 3,
//                    "tasks": [{"id": "memory", "label": 1, "eyes": "closed",
//                               "instruction": {"en": "..."}}, ...],
//                    "trials_by_day": {"1": 18, "2": 36, ...}}]}
//
// A day runs its questionnaires first, then the strategies in file order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "mynd/common.hpp"
#include "mynd/session/questionnaire.hpp"

namespace mynd::session {

using LocalizedText = std::map<std::string, std::string>;

inline std::string localized(const LocalizedText& t, const std::string& locale) {
  if (auto it = t.find(locale); it != t.end()) return it->second;
  if (auto it = t.find("en"); it != t.end()) return it->second;
  return t.empty() ? std::string{} : t.begin()->second;
}

struct TaskSpec {
  std::string id;
  int label = 1;
  bool eyes_closed = true;
  LocalizedText instruction;
};

struct StrategySpec {
  std::string id;
  LocalizedText title;
  LocalizedText description;
  std::vector<TaskSpec> tasks; // exactly two
  int trial_seconds = 30;
  int trials_per_task_per_block = 3;
  std::map<int, int> trials_by_day;

  int trials_on(int day) const {
    auto it = trials_by_day.find(day);
    return it == trials_by_day.end() ? 0 : it->second;
  }
  int total_trials() const {
    int n = 0;
    for (const auto& [d, k] : trials_by_day) n += k;
    return n;
  }
  const TaskSpec* task(const std::string& id) const {
    for (const auto& t : tasks)
      if (t.id == id) return &t;
    return nullptr;
  }
};

struct QuestionnaireSchedule {
  std::vector<int> days;
  std::map<std::string, QuestionnaireDefinition> by_locale;

  const QuestionnaireDefinition& definition(const std::string& locale) const {
    if (auto it = by_locale.find(locale); it != by_locale.end()) return it->second;
    if (auto it = by_locale.find("en"); it != by_locale.end()) return it->second;
    return by_locale.begin()->second;
  }
};

struct StudyDefinition {
  int days = 7;
  std::vector<std::string> locales{"en"};
  std::vector<std::pair<std::string, QuestionnaireSchedule>> questionnaires;
  std::vector<StrategySpec> strategies;

  const StrategySpec* strategy(const std::string& id) const {
    for (const auto& s : strategies)
      if (s.id == id) return &s;
    return nullptr;
  }
};

class StudyError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Throws StudyError when a day's trial count cannot be split into whole
/// blocks, or when a strategy does not have exactly two distinct tasks.
inline void validate(const StudyDefinition& s) {
  if (s.days < 1) throw StudyError("study needs at least one day");
  for (const auto& st : s.strategies) {
    if (st.tasks.size() != 2 || st.tasks[0].id == st.tasks[1].id)
      throw StudyError("strategy '" + st.id + "' needs two distinct tasks");
    if (st.trial_seconds <= 0 || st.trials_per_task_per_block <= 0)
      throw StudyError("strategy '" + st.id + "' has non-positive trial settings");
    const int per_block = 2 * st.trials_per_task_per_block;
    for (const auto& [day, n] : st.trials_by_day) {
      if (day < 1 || day > s.days) throw StudyError("strategy '" + st.id + "' schedules day " + std::to_string(day));
      if (n < 0 || n % per_block != 0)
        throw StudyError("strategy '" + st.id + "' day " + std::to_string(day) + ": " + std::to_string(n) +
                         " trials do not fill whole blocks of " + std::to_string(per_block));
    }
  }
  for (const auto& [id, q] : s.questionnaires) {
    if (q.by_locale.empty()) throw StudyError("questionnaire '" + id + "' has no definition");
    for (const auto& [loc, def] : q.by_locale)
      if (def.items.empty()) throw StudyError("questionnaire '" + id + "' (" + loc + ") has no items");
  }
}

/// The seven-day at-home study.
inline StudyDefinition default_study() {
  StudyDefinition s;
  s.days = 7;
  QuestionnaireSchedule boarding{{1}, {{"en", boarding_questionnaire()}}};
  QuestionnaireSchedule daily{{1, 2, 3, 4, 5, 6, 7}, {{"en", daily_questionnaire()}}};
  s.questionnaires = {{"boarding", boarding}, {"daily", daily}};

  StrategySpec rest;
  rest.id = "resting";
  rest.title = {{"en", "Resting state"}};
  rest.description = {{"en", "Open or close your eyes as instructed and let your mind wander."}};
  rest.tasks = {{"eyes_open", -1, false, {{"en", "Keep your eyes open and let your mind wander."}}},
                {"eyes_closed", 1, true, {{"en", "Close your eyes and let your mind wander."}}}};
  rest.trial_seconds = 60;
  rest.trials_per_task_per_block = 1;
  for (int d = 1; d <= 7; ++d) rest.trials_by_day[d] = 6;

  StrategySpec pm;
  pm.id = "positive_memories";
  pm.title = {{"en", "Positive memories"}};
  pm.description = {{"en", "Alternate between recalling a happy memory and counting down in steps of seven."}};
  pm.tasks = {{"memory", 1, true, {{"en", "Recall a positive memory in as much detail as you can."}}},
              {"subtraction", -1, true, {{"en", "Subtract seven repeatedly, starting from a random number."}}}};
  pm.trial_seconds = 30;
  pm.trials_per_task_per_block = 3;
  pm.trials_by_day = {{1, 18}, {2, 36}, {4, 18}, {5, 18}, {6, 36}};

  StrategySpec mi;
  mi.id = "music_imagery";
  mi.title = {{"en", "Music imagery"}};
  mi.description = {{"en", "Alternate between imagining a piece of music and counting down in steps of seven."}};
  mi.tasks = {{"music", 1, true, {{"en", "Imagine listening to a piece of music you like."}}},
              {"subtraction", -1, true, {{"en", "Subtract seven repeatedly, starting from a random number."}}}};
  mi.trial_seconds = 30;
  mi.trials_per_task_per_block = 3;
  mi.trials_by_day = {{3, 18}, {5, 18}, {7, 18}};

  s.strategies = {rest, pm, mi};
  return s;
}

inline LocalizedText parse_localized(const nlohmann::json& j) {
  LocalizedText t;
  if (j.is_string()) {
    t["en"] = j.get<std::string>();
  } else if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) t[it.key()] = it.value().get<std::string>();
  }
  return t;
}

/// Parses a study document. Questionnaire files are resolved relative to
/// `base_dir`.
inline StudyDefinition parse_study(const nlohmann::json& doc, const std::filesystem::path& base_dir) {
  StudyDefinition s;
  try {
    s.days = doc.value("days", 7);
    if (doc.contains("locales")) s.locales = doc["locales"].get<std::vector<std::string>>();
    for (const auto& q : doc.value("questionnaires", nlohmann::json::array())) {
      QuestionnaireSchedule sched;
      sched.days = q.at("days").get<std::vector<int>>();
      for (auto it = q.at("files").begin(); it != q.at("files").end(); ++it)
        sched.by_locale[it.key()] = load_questionnaire((base_dir / it.value().get<std::string>()).string());
      s.questionnaires.emplace_back(q.at("id").get<std::string>(), std::move(sched));
    }
    for (const auto& j : doc.at("strategies")) {
      StrategySpec st;
      st.id = j.at("id").get<std::string>();
      st.title = parse_localized(j.value("title", nlohmann::json(st.id)));
      st.description = parse_localized(j.value("description", nlohmann::json("")));
      st.trial_seconds = j.at("trial_seconds").get<int>();
      st.trials_per_task_per_block = j.at("trials_per_task_per_block").get<int>();
      for (const auto& t : j.at("tasks")) {
        TaskSpec task;
        task.id = t.at("id").get<std::string>();
        task.label = t.value("label", 1);
        task.eyes_closed = t.value("eyes", std::string("closed")) == "closed";
        task.instruction = parse_localized(t.value("instruction", nlohmann::json("")));
        st.tasks.push_back(std::move(task));
      }
      for (auto it = j.at("trials_by_day").begin(); it != j.at("trials_by_day").end(); ++it)
        st.trials_by_day[std::stoi(it.key())] = it.value().get<int>();
      s.strategies.push_back(std::move(st));
    }
  } catch (const nlohmann::json::exception& e) {
    throw StudyError(std::string("study definition: ") + e.what());
  }
  validate(s);
  return s;
}

inline StudyDefinition load_study(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw StudyError("cannot open study definition " + path.string());
  const auto doc = nlohmann::json::parse(is, nullptr, false);
  if (doc.is_discarded()) throw StudyError("study definition " + path.string() + " is not valid JSON");
  return parse_study(doc, path.parent_path());
}

// ---------------------------------------------------------------------------
// Schedule

struct Trial {
  std::string task;
  int label = 1;
  int duration_s = 30;
  bool eyes_closed = true;

  bool operator==(const Trial&) const = default;
};

struct Block {
  std::vector<Trial> trials;

  int duration_s() const {
    int t = 0;
    for (const auto& tr : trials) t += tr.duration_s;
    return t;
  }
  bool operator==(const Block&) const = default;
};

enum class ScenarioKind { Questionnaire, Recording };

struct Scenario {
  std::string id;
  ScenarioKind kind = ScenarioKind::Recording;
  std::string source; // strategy or questionnaire id
  std::string title;
  std::string description;
  std::vector<Block> blocks;              // recording scenarios
  std::vector<QuestionnaireItem> items;   // questionnaire scenarios
  std::size_t completed_blocks = 0;
  bool questionnaire_done = false;

  bool completed() const {
    return kind == ScenarioKind::Recording ? completed_blocks >= blocks.size() : questionnaire_done;
  }
  std::size_t trial_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.trials.size();
    return n;
  }
  bool operator==(const Scenario&) const = default;
};

inline constexpr int kPreparationSeconds = 90;
inline constexpr int kSecondsPerQuestionnaireItem = 15;

/// Remaining time in whole minutes, rounded up; 0 once nothing remains.
inline int estimate_duration(const Scenario& s) {
  if (s.kind == ScenarioKind::Questionnaire) {
    if (s.questionnaire_done || s.items.empty()) return 0;
    const int secs = kSecondsPerQuestionnaireItem * static_cast<int>(s.items.size());
    return (secs + 59) / 60;
  }
  int secs = 0;
  for (std::size_t b = s.completed_blocks; b < s.blocks.size(); ++b) secs += s.blocks[b].duration_s();
  if (secs == 0) return 0;
  return (secs + kPreparationSeconds + 59) / 60;
}

/// Per-block shuffling seed derived from the subject seed.
inline std::uint64_t block_seed(std::uint64_t subject_seed, int day, const std::string& strategy, std::size_t block) {
  return derive_seed(derive_seed(derive_seed(subject_seed, static_cast<std::uint64_t>(day)), strategy),
                     static_cast<std::uint64_t>(block));
}

inline std::vector<Scenario> plan_schedule(const StudyDefinition& study, int day, std::uint64_t subject_seed,
                                           const std::string& locale = "en") {
  if (day < 1 || day > study.days)
    throw ContractError("day " + std::to_string(day) + " outside 1.." + std::to_string(study.days));
  std::vector<Scenario> out;
  for (const auto& [id, q] : study.questionnaires) {
    if (std::find(q.days.begin(), q.days.end(), day) == q.days.end()) continue;
    const auto& def = q.definition(locale);
    Scenario s;
    s.id = "d" + std::to_string(day) + "-" + id;
    s.kind = ScenarioKind::Questionnaire;
    s.source = id;
    s.title = def.title;
    s.items = def.items;
    out.push_back(std::move(s));
  }
  for (const auto& st : study.strategies) {
    const int n = st.trials_on(day);
    if (n == 0) continue;
    Scenario s;
    s.id = "d" + std::to_string(day) + "-" + st.id;
    s.kind = ScenarioKind::Recording;
    s.source = st.id;
    s.title = localized(st.title, locale);
    s.description = localized(st.description, locale);
    const int per_block = 2 * st.trials_per_task_per_block;
    for (int b = 0; b < n / per_block; ++b) {
      Block block;
      for (const auto& task : st.tasks)
        for (int k = 0; k < st.trials_per_task_per_block; ++k)
          block.trials.push_back({task.id, task.label, st.trial_seconds, task.eyes_closed});
      std::mt19937_64 rng(block_seed(subject_seed, day, st.id, static_cast<std::size_t>(b)));
      std::shuffle(block.trials.begin(), block.trials.end(), rng);
      s.blocks.push_back(std::move(block));
    }
    out.push_back(std::move(s));
  }
  return out;
}

} // namespace mynd::session
