#pragma once

// Questionnaire definitions (one JSON document per questionnaire and locale):
//
//   {"id":"daily","locale":"en","title":"...",
//    "items":[{"id":"motivation","kind":"likert","text":"...","scale":5},
//             {"id":"mood","kind":"choice","text":"...","options":["a","b"]},
//             {"id":"notes","kind":"text","text":"..."},
//             {"id":"birthday","kind":"date","text":"..."}]}

#include <algorithm>
#include <fstream>
#include <functional>
#include <regex>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mynd/common.hpp"
#include "mynd/datastore/questionnaire_file.hpp"

namespace mynd::session {

enum class ItemKind { Likert, Choice, Text, Date };

inline const char* to_string(ItemKind k) {
  switch (k) {
  case ItemKind::Likert: return "likert";
  case ItemKind::Choice: return "choice";
  case ItemKind::Text: return "text";
  case ItemKind::Date: return "date";
  }
  return "?";
}

struct QuestionnaireItem {
  std::string id;
  ItemKind kind = ItemKind::Likert;
  std::string text;
  int scale = 0;                    // likert: answers 1..scale
  std::vector<std::string> options; // choice: answers are option indices

  bool operator==(const QuestionnaireItem&) const = default;
};

struct QuestionnaireDefinition {
  std::string id;
  std::string locale = "en";
  std::string title;
  std::vector<QuestionnaireItem> items;

  bool operator==(const QuestionnaireDefinition&) const = default;
};

class QuestionnaireLoadError : public std::runtime_error {
public:
  QuestionnaireLoadError(const std::string& item, const std::string& what)
      : std::runtime_error("questionnaire item '" + item + "': " + what), item_(item) {}
  const std::string& item() const { return item_; }

private:
  std::string item_;
};

inline QuestionnaireItem parse_item(const nlohmann::json& j, std::size_t index) {
  const std::string name =
      (j.is_object() && j.contains("id") && j["id"].is_string()) ? j["id"].get<std::string>() : "#" + std::to_string(index);
  if (!j.is_object()) throw QuestionnaireLoadError(name, "not an object");
  QuestionnaireItem it;
  it.id = name;
  if (!j.contains("kind") || !j["kind"].is_string()) throw QuestionnaireLoadError(name, "missing kind");
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "likert")
    it.kind = ItemKind::Likert;
  else if (kind == "choice")
    it.kind = ItemKind::Choice;
  else if (kind == "text")
    it.kind = ItemKind::Text;
  else if (kind == "date")
    it.kind = ItemKind::Date;
  else
    throw QuestionnaireLoadError(name, "unknown kind '" + kind + "'");
  if (!j.contains("text") || !j["text"].is_string()) throw QuestionnaireLoadError(name, "missing text");
  it.text = j["text"].get<std::string>();
  if (it.kind == ItemKind::Likert) {
    if (!j.contains("scale") || !j["scale"].is_number_integer() || j["scale"].get<int>() < 2)
      throw QuestionnaireLoadError(name, "likert item needs an integer scale >= 2");
    it.scale = j["scale"].get<int>();
  }
  if (it.kind == ItemKind::Choice) {
    if (!j.contains("options") || !j["options"].is_array() || j["options"].empty())
      throw QuestionnaireLoadError(name, "choice item needs a non-empty options list");
    for (const auto& o : j["options"]) {
      if (!o.is_string()) throw QuestionnaireLoadError(name, "options must be strings");
      it.options.push_back(o.get<std::string>());
    }
  }
  return it;
}

inline QuestionnaireDefinition parse_questionnaire(const nlohmann::json& doc) {
  if (!doc.is_object()) throw QuestionnaireLoadError("<document>", "not a JSON object");
  QuestionnaireDefinition q;
  q.id = doc.value("id", "");
  q.locale = doc.value("locale", "en");
  q.title = doc.value("title", q.id);
  if (!doc.contains("items") || !doc["items"].is_array()) throw QuestionnaireLoadError("<document>", "missing items");
  std::size_t i = 0;
  for (const auto& j : doc["items"]) {
    auto item = parse_item(j, i++);
    if (std::any_of(q.items.begin(), q.items.end(), [&](auto& o) { return o.id == item.id; }))
      throw QuestionnaireLoadError(item.id, "duplicate item id");
    q.items.push_back(std::move(item));
  }
  return q;
}

inline QuestionnaireDefinition load_questionnaire(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open questionnaire " + path);
  const auto doc = nlohmann::json::parse(is, nullptr, false);
  if (doc.is_discarded()) throw QuestionnaireLoadError("<document>", "invalid JSON in " + path);
  return parse_questionnaire(doc);
}

using Answer = std::variant<int, std::string>;
using AnswerSource = std::function<Answer(const QuestionnaireItem&)>;

inline void check_answer(const QuestionnaireItem& item, const Answer& a) {
  auto fail = [&](const std::string& why) { throw ContractError("answer to '" + item.id + "': " + why); };
  switch (item.kind) {
  case ItemKind::Likert:
    if (!std::holds_alternative<int>(a) || std::get<int>(a) < 1 || std::get<int>(a) > item.scale)
      fail("expected 1.." + std::to_string(item.scale));
    break;
  case ItemKind::Choice:
    if (!std::holds_alternative<int>(a) || std::get<int>(a) < 0 ||
        std::get<int>(a) >= static_cast<int>(item.options.size()))
      fail("expected an option index");
    break;
  case ItemKind::Text:
    if (!std::holds_alternative<std::string>(a)) fail("expected text");
    break;
  case ItemKind::Date: {
    static const std::regex iso(R"(\d{4}-\d{2}-\d{2})");
    if (!std::holds_alternative<std::string>(a) || !std::regex_match(std::get<std::string>(a), iso))
      fail("expected YYYY-MM-DD");
    break;
  }
  }
}

/// Asks every item in order and returns the timestamped responses.
inline std::vector<datastore::QuestionnaireResponse> run_questionnaire(
    const std::vector<QuestionnaireItem>& items, const AnswerSource& answers,
    const std::function<std::string()>& timestamp) {
  std::vector<datastore::QuestionnaireResponse> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    Answer a = answers(item);
    check_answer(item, a);
    datastore::QuestionnaireResponse r;
    r.item = item.id;
    r.kind = to_string(item.kind);
    r.value = std::move(a);
    if (item.kind == ItemKind::Likert) r.scale = item.scale;
    r.timestamp = timestamp();
    out.push_back(std::move(r));
  }
  return out;
}

/// Built-in English definitions of the daily and boarding questionnaires.
inline QuestionnaireDefinition daily_questionnaire() {
  return {"daily", "en", "Daily check-in",
          {{"motivation", ItemKind::Likert, "How motivated are you to complete today's sessions?", 5, {}}}};
}

inline QuestionnaireDefinition boarding_questionnaire() {
  return {"boarding", "en", "About you",
          {{"meditation", ItemKind::Likert, "How much experience do you have with meditation?", 3, {}}}};
}

} // namespace mynd::session
