#pragma once

#include <array>
#include <compare>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "deskrec/rational.hpp"

namespace deskrec {

using nlohmann::json;

enum class OperationType { click, select, scroll, drag, type };

inline constexpr std::array<OperationType, 5> kOperationTypes = {
    OperationType::click, OperationType::select, OperationType::scroll,
    OperationType::drag, OperationType::type};

std::string_view to_string(OperationType op);
// Case-insensitive; exactly the five names are accepted.
std::optional<OperationType> try_parse_operation(std::string_view text);
OperationType parse_operation(std::string_view text);

/// One user action as the (operation, detail, context) triple. `provenance` carries
/// pipeline-specific audit data and never takes part in evaluation.
struct Action {
  OperationType operation = OperationType::click;
  std::string detail;
  std::string context;
  json provenance;  // null when absent

  bool same_triple(const Action& other) const {
    return operation == other.operation && detail == other.detail && context == other.context;
  }
  friend bool operator==(const Action&, const Action&) = default;
};

struct ActionSequence {
  std::string video_id;
  std::vector<Action> actions;

  std::size_t size() const { return actions.size(); }
  bool empty() const { return actions.empty(); }
};

struct LabeledField {
  std::string category;
  std::string identifier;
};

// One entry of the DF prompts' "user_operations" array. Typed fields mirror the prompt
// schema; `raw` keeps the object as the model wrote it (including unknown keys) and is
// what gets forwarded to the corrector and merger.
struct DfOperationRecord {
  std::optional<std::array<int, 2>> frame_idx;
  std::string mouse_position;
  std::string element_state_pre_interaction;
  std::string element_state_after_interaction;
  std::string thoughts;
  std::string operation_category;
  LabeledField target_object;
  LabeledField application;
  std::string additional_info;
  std::string abstract;
  json raw = json::object();

  // Throws Error(MissingField) when operation_category, target_object or application
  // is absent or has the wrong JSON type.
  static DfOperationRecord from_json(const json& object);
  const json& to_json() const { return raw; }
};

Action normalize_df_operation(const DfOperationRecord& record);
// Inverse mapping used for round-trip checks: detail -> target identifier,
// context -> application category.
DfOperationRecord to_df_record(const Action& action);

struct RegionId {
  int frame = 0;
  int index = 0;

  std::string str() const;
  static RegionId parse(std::string_view text);  // Error(MalformedRegionId)
  static bool valid(std::string_view text);
  auto operator<=>(const RegionId&) const = default;
};

struct Evidence {
  std::string id;
  std::string reason;
  friend bool operator==(const Evidence&, const Evidence&) = default;
};

// One entry of the DiffF proposer output. `action` stays free text until
// normalization because the VLM corrector is expected to repair verbs like "move".
struct DiffFActionRecord {
  std::string app;
  std::string element;
  std::string action;
  std::string region;
  std::vector<Evidence> evidences;

  static DiffFActionRecord from_json(const json& object);  // Error(MissingField)
  json to_json() const;
  friend bool operator==(const DiffFActionRecord&, const DiffFActionRecord&) = default;
};

Action normalize_difff_action(const DiffFActionRecord& record);

struct GroundTruthCase {
  std::string video_id;
  std::string domain;
  ActionSequence actions;
  std::filesystem::path frame_dir;
  Rational source_fps{30};
};

// Throws Error(SchemaError) whose message starts with the JSON path of the first
// violation, e.g. "$.actions[1].operation".
GroundTruthCase parse_ground_truth(std::string_view content);
std::string serialize_ground_truth(const GroundTruthCase& gt);

enum class Method { df, difff };
std::string_view to_string(Method method);
Method parse_method(std::string_view text);

json action_triple_json(const Action& action);

// Canonical prediction file: sorted keys, two-space indent, trailing LF.
std::string serialize_prediction(const ActionSequence& sequence, Method method);

struct Prediction {
  Method method = Method::df;
  ActionSequence sequence;
};
Prediction parse_prediction(std::string_view content);

}  // namespace deskrec
