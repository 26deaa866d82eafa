#pragma once

// Questionnaire result document (JSON):
//
//   {"format":"mynd-questionnaire","questionnaire_id":...,"subject_id":...,
//    "day":n,"locale":...,"started_at":...,"completed_at":...,
//    "responses":[{"item":...,"kind":...,"value":...,"scale":n?,"timestamp":...}]}
//
// "value" is an integer for likert and choice items, a string for text and
// date items; "scale" appears for likert items only.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "mynd/bytes.hpp"

namespace mynd::datastore {

struct QuestionnaireResponse {
  std::string item;
  std::string kind;
  std::variant<int, std::string> value;
  std::optional<int> scale;
  std::string timestamp;

  bool operator==(const QuestionnaireResponse&) const = default;
};

struct QuestionnaireResult {
  std::string questionnaire_id;
  std::string subject_id;
  int day = 1;
  std::string locale = "en";
  std::string started_at;
  std::string completed_at;
  std::vector<QuestionnaireResponse> responses;

  bool operator==(const QuestionnaireResult&) const = default;

  /// Integer answer of a likert/choice item, if present.
  std::optional<int> int_value(const std::string& item) const {
    for (const auto& r : responses)
      if (r.item == item && std::holds_alternative<int>(r.value)) return std::get<int>(r.value);
    return std::nullopt;
  }
};

inline constexpr std::string_view kQuestionnaireFormatTag = "mynd-questionnaire";

inline std::string write_questionnaire_result(const QuestionnaireResult& q) {
  nlohmann::json responses = nlohmann::json::array();
  for (const auto& r : q.responses) {
    nlohmann::json j{{"item", r.item}, {"kind", r.kind}, {"timestamp", r.timestamp}};
    std::visit([&](const auto& v) { j["value"] = v; }, r.value);
    if (r.scale) j["scale"] = *r.scale;
    responses.push_back(std::move(j));
  }
  const nlohmann::json doc{{"format", std::string(kQuestionnaireFormatTag)},
                           {"questionnaire_id", q.questionnaire_id},
                           {"subject_id", q.subject_id},
                           {"day", q.day},
                           {"locale", q.locale},
                           {"started_at", q.started_at},
                           {"completed_at", q.completed_at},
                           {"responses", std::move(responses)}};
  return doc.dump();
}

/// Throws std::invalid_argument on a malformed document.
inline QuestionnaireResult read_questionnaire_result(const std::string& text) {
  const auto doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || doc.value("format", "") != kQuestionnaireFormatTag)
    throw std::invalid_argument("not a questionnaire result document");
  try {
    QuestionnaireResult q;
    q.questionnaire_id = doc.at("questionnaire_id").get<std::string>();
    q.subject_id = doc.at("subject_id").get<std::string>();
    q.day = doc.at("day").get<int>();
    q.locale = doc.at("locale").get<std::string>();
    q.started_at = doc.at("started_at").get<std::string>();
    q.completed_at = doc.at("completed_at").get<std::string>();
    for (const auto& j : doc.at("responses")) {
      QuestionnaireResponse r;
      r.item = j.at("item").get<std::string>();
      r.kind = j.at("kind").get<std::string>();
      r.timestamp = j.at("timestamp").get<std::string>();
      const auto& v = j.at("value");
      if (v.is_number_integer())
        r.value = v.get<int>();
      else
        r.value = v.get<std::string>();
      if (j.contains("scale")) r.scale = j.at("scale").get<int>();
      q.responses.push_back(std::move(r));
    }
    return q;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("questionnaire result: ") + e.what());
  }
}

inline bool looks_like_questionnaire(std::span<const std::uint8_t> payload) {
  return !payload.empty() && payload.front() == '{';
}

} // namespace mynd::datastore
