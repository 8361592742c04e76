#include "deskrec/action.hpp"

#include <charconv>
#include <limits>
#include <stdexcept>

#include "deskrec/error.hpp"
#include "text_util.hpp"

namespace deskrec {

namespace {

// Strings are taken as-is; other scalars are kept as their JSON text so that a model
// answering with a number or object in a free-text slot does not lose the content.
std::string text_field(const json& object, std::string_view key) {
  auto it = object.find(key);
  if (it == object.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

LabeledField labeled_field(const json& object, std::string_view key) {
  auto it = object.find(key);
  if (it == object.end() || !it->is_object()) {
    throw Error(Errc::MissingField, "\"" + std::string(key) + "\" must be an object");
  }
  return {text_field(*it, "category"), text_field(*it, "identifier")};
}

std::optional<std::array<int, 2>> frame_pair(const json& value) {
  if (value.is_string()) {
    try {
      return frame_pair(json::parse(value.get<std::string>()));
    } catch (const json::exception&) {
      return std::nullopt;
    }
  }
  if (value.is_array() && value.size() == 2 && value[0].is_number_integer() &&
      value[1].is_number_integer()) {
    return std::array<int, 2>{value[0].get<int>(), value[1].get<int>()};
  }
  return std::nullopt;
}

std::int64_t parse_int64(std::string_view text) {
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw std::invalid_argument("not an integer: " + std::string(text));
  }
  return value;
}

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw Error(Errc::SchemaError, path + ": " + what);
}

const json& require(const json& object, const std::string& path, std::string_view key) {
  auto it = object.find(key);
  if (it == object.end()) schema_error(path + "." + std::string(key), "missing");
  return *it;
}

std::string require_string(const json& object, const std::string& path, std::string_view key) {
  const json& value = require(object, path, key);
  if (!value.is_string()) schema_error(path + "." + std::string(key), "expected string");
  return value.get<std::string>();
}

std::vector<Action> parse_triples(const json& array, const std::string& path) {
  if (!array.is_array()) schema_error(path, "expected array");
  std::vector<Action> actions;
  actions.reserve(array.size());
  for (std::size_t i = 0; i < array.size(); ++i) {
    const std::string item_path = path + "[" + std::to_string(i) + "]";
    const json& item = array[i];
    if (!item.is_object()) schema_error(item_path, "expected object");
    Action action;
    const std::string op = require_string(item, item_path, "operation");
    auto parsed = try_parse_operation(op);
    if (!parsed) schema_error(item_path + ".operation", "unknown operation \"" + op + "\"");
    action.operation = *parsed;
    action.detail = require_string(item, item_path, "detail");
    action.context = require_string(item, item_path, "context");
    actions.push_back(std::move(action));
  }
  return actions;
}

json parse_document(std::string_view content) {
  try {
    return json::parse(content);
  } catch (const json::parse_error& e) {
    schema_error("$", std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Rational

Rational::Rational(std::int64_t n, std::int64_t d) : num(n), den(d) {
  if (den == 0) throw std::invalid_argument("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
}

std::string Rational::str() const {
  return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

Rational Rational::parse(const std::string& raw) {
  const std::string_view text = detail::trim(raw);
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    return Rational(parse_int64(text.substr(0, slash)), parse_int64(text.substr(slash + 1)));
  }
  if (auto dot = text.find('.'); dot != std::string_view::npos) {
    const std::string_view whole = text.substr(0, dot);
    const std::string_view frac = text.substr(dot + 1);
    if (frac.size() > 12) throw std::invalid_argument("too many decimals: " + raw);
    std::int64_t den = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) den *= 10;
    const bool negative = !whole.empty() && whole.front() == '-';
    const std::int64_t w = whole.empty() || whole == "-" ? 0 : parse_int64(whole);
    const std::int64_t f = frac.empty() ? 0 : parse_int64(frac);
    return Rational(negative ? w * den - f : w * den + f, den);
  }
  return Rational(parse_int64(text));
}

Rational Rational::from_json(const json& value) {
  if (value.is_number_integer()) return Rational(value.get<std::int64_t>());
  if (value.is_number_float()) return parse(value.dump());
  if (value.is_string()) return parse(value.get<std::string>());
  throw std::invalid_argument("rate must be a number or \"N/D\" string");
}

json Rational::to_json() const {
  if (den == 1) return num;
  // Exact decimals (e.g. 29.97) stay numbers; anything else keeps the N/D form.
  std::int64_t d = den;
  while (d % 2 == 0) d /= 2;
  while (d % 5 == 0) d /= 5;
  if (d == 1) return value();
  return str();
}

// ---------------------------------------------------------------------------
// OperationType

std::string_view to_string(OperationType op) {
  switch (op) {
    case OperationType::click: return "click";
    case OperationType::select: return "select";
    case OperationType::scroll: return "scroll";
    case OperationType::drag: return "drag";
    case OperationType::type: return "type";
  }
  return "click";
}

std::optional<OperationType> try_parse_operation(std::string_view text) {
  const std::string lowered = detail::to_lower(text);
  for (OperationType op : kOperationTypes) {
    if (lowered == to_string(op)) return op;
  }
  return std::nullopt;
}

OperationType parse_operation(std::string_view text) {
  if (auto op = try_parse_operation(text)) return *op;
  throw Error(Errc::UnknownOperation, "\"" + std::string(text) + "\"");
}

// ---------------------------------------------------------------------------
// DF records

DfOperationRecord DfOperationRecord::from_json(const json& object) {
  if (!object.is_object()) throw Error(Errc::MissingField, "operation record must be an object");
  DfOperationRecord rec;
  auto category = object.find("operation_category");
  if (category == object.end() || !category->is_string()) {
    throw Error(Errc::MissingField, "\"operation_category\" must be a string");
  }
  rec.operation_category = category->get<std::string>();
  rec.target_object = labeled_field(object, "target_object");
  rec.application = labeled_field(object, "application");
  if (auto it = object.find("frame_idx"); it != object.end()) {
    rec.frame_idx = frame_pair(*it);
  } else if (auto ts = object.find("timestamp"); ts != object.end()) {
    rec.frame_idx = frame_pair(*ts);
  }
  rec.mouse_position = text_field(object, "mouse_position");
  rec.element_state_pre_interaction = text_field(object, "element_state_pre_interaction");
  rec.element_state_after_interaction = text_field(object, "element_state_after_interaction");
  rec.thoughts = object.contains("thoughts") ? text_field(object, "thoughts")
                                             : text_field(object, "Thoughts");
  rec.additional_info = text_field(object, "additional_info");
  rec.abstract = text_field(object, "abstract");
  rec.raw = object;
  return rec;
}

Action normalize_df_operation(const DfOperationRecord& record) {
  Action action;
  action.operation = parse_operation(record.operation_category);
  action.detail = record.target_object.identifier.empty() ? record.target_object.category
                                                          : record.target_object.identifier;
  action.context = std::string(
      detail::trim(record.application.identifier + " " + record.application.category));
  json provenance = {{"additional_info", record.additional_info},
                     {"abstract", record.abstract}};
  provenance["frame_idx"] = record.frame_idx ? json(*record.frame_idx) : json(nullptr);
  action.provenance = std::move(provenance);
  return action;
}

DfOperationRecord to_df_record(const Action& action) {
  json raw = {
      {"operation_category", std::string(to_string(action.operation))},
      {"target_object", {{"category", ""}, {"identifier", action.detail}}},
      {"application", {{"category", action.context}, {"identifier", ""}}},
  };
  return DfOperationRecord::from_json(raw);
}

// ---------------------------------------------------------------------------
// DiffF records

std::string RegionId::str() const { return std::to_string(frame) + "_" + std::to_string(index); }

bool RegionId::valid(std::string_view text) {
  const auto sep = text.find('_');
  if (sep == std::string_view::npos || sep == 0 || sep + 1 == text.size()) return false;
  auto digits = [](std::string_view s) {
    if (s.size() > 9) return false;
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
  };
  return digits(text.substr(0, sep)) && digits(text.substr(sep + 1));
}

RegionId RegionId::parse(std::string_view text) {
  if (!valid(text)) {
    throw Error(Errc::MalformedRegionId, "\"" + std::string(text) + "\" is not <frame>_<index>");
  }
  const auto sep = text.find('_');
  return {static_cast<int>(parse_int64(text.substr(0, sep))),
          static_cast<int>(parse_int64(text.substr(sep + 1)))};
}

DiffFActionRecord DiffFActionRecord::from_json(const json& object) {
  if (!object.is_object()) throw Error(Errc::MissingField, "action record must be an object");
  for (const char* key : {"app", "element", "action", "region"}) {
    if (!object.contains(key)) throw Error(Errc::MissingField, "\"" + std::string(key) + "\"");
  }
  if (!object.at("action").is_string()) throw Error(Errc::MissingField, "\"action\" must be a string");
  DiffFActionRecord rec;
  rec.app = text_field(object, "app");
  rec.element = text_field(object, "element");
  rec.action = object.at("action").get<std::string>();
  rec.region = text_field(object, "region");
  if (auto it = object.find("evidences"); it != object.end() && it->is_array()) {
    for (const json& ev : *it) {
      if (ev.is_array() && !ev.empty()) {
        rec.evidences.push_back({ev[0].is_string() ? ev[0].get<std::string>() : ev[0].dump(),
                                 ev.size() > 1 ? (ev[1].is_string() ? ev[1].get<std::string>()
                                                                    : ev[1].dump())
                                               : std::string()});
      } else if (ev.is_object()) {
        rec.evidences.push_back({text_field(ev, "id"), text_field(ev, "reason")});
      } else if (ev.is_string()) {
        rec.evidences.push_back({ev.get<std::string>(), ""});
      }
    }
  }
  return rec;
}

json DiffFActionRecord::to_json() const {
  json evs = json::array();
  for (const auto& ev : evidences) evs.push_back(json::array({ev.id, ev.reason}));
  return {{"app", app}, {"element", element}, {"action", action}, {"region", region},
          {"evidences", std::move(evs)}};
}

Action normalize_difff_action(const DiffFActionRecord& record) {
  Action action;
  action.operation = parse_operation(record.action);
  RegionId::parse(record.region);
  action.detail = record.element;
  action.context = record.app;
  json evs = json::array();
  for (const auto& ev : record.evidences) evs.push_back(json::array({ev.id, ev.reason}));
  action.provenance = {{"region", record.region}, {"evidences", std::move(evs)}};
  return action;
}

// ---------------------------------------------------------------------------
// Files

GroundTruthCase parse_ground_truth(std::string_view content) {
  const json doc = parse_document(content);
  if (!doc.is_object()) schema_error("$", "expected object");
  GroundTruthCase gt;
  gt.video_id = require_string(doc, "$", "video_id");
  gt.domain = require_string(doc, "$", "domain");
  gt.frame_dir = require_string(doc, "$", "frame_dir");
  try {
    gt.source_fps = Rational::from_json(require(doc, "$", "source_fps"));
  } catch (const std::invalid_argument& e) {
    schema_error("$.source_fps", e.what());
  }
  if (gt.source_fps.num <= 0) schema_error("$.source_fps", "must be positive");
  gt.actions.video_id = gt.video_id;
  gt.actions.actions = parse_triples(require(doc, "$", "actions"), "$.actions");
  if (gt.actions.empty()) schema_error("$.actions", "must contain at least one action");
  return gt;
}

std::string serialize_ground_truth(const GroundTruthCase& gt) {
  json actions = json::array();
  for (const auto& a : gt.actions.actions) actions.push_back(action_triple_json(a));
  json doc = {{"video_id", gt.video_id},
              {"domain", gt.domain},
              {"source_fps", gt.source_fps.to_json()},
              {"frame_dir", gt.frame_dir.generic_string()},
              {"actions", std::move(actions)}};
  return doc.dump(2) + "\n";
}

std::string_view to_string(Method method) { return method == Method::df ? "df" : "difff"; }

Method parse_method(std::string_view text) {
  const std::string lowered = detail::to_lower(text);
  if (lowered == "df") return Method::df;
  if (lowered == "difff") return Method::difff;
  throw Error(Errc::InvalidConfig, "unknown method \"" + std::string(text) + "\"");
}

json action_triple_json(const Action& action) {
  return {{"operation", std::string(to_string(action.operation))},
          {"detail", action.detail},
          {"context", action.context}};
}

std::string serialize_prediction(const ActionSequence& sequence, Method method) {
  json actions = json::array();
  json provenance = json::array();
  for (const auto& a : sequence.actions) {
    actions.push_back(action_triple_json(a));
    provenance.push_back(a.provenance);
  }
  json doc = {{"video_id", sequence.video_id},
              {"method", std::string(to_string(method))},
              {"actions", std::move(actions)},
              {"provenance", std::move(provenance)}};
  return doc.dump(2) + "\n";
}

Prediction parse_prediction(std::string_view content) {
  const json doc = parse_document(content);
  if (!doc.is_object()) schema_error("$", "expected object");
  Prediction pred;
  pred.sequence.video_id = require_string(doc, "$", "video_id");
  try {
    pred.method = parse_method(require_string(doc, "$", "method"));
  } catch (const Error&) {
    schema_error("$.method", "expected \"df\" or \"difff\"");
  }
  pred.sequence.actions = parse_triples(require(doc, "$", "actions"), "$.actions");
  if (auto it = doc.find("provenance"); it != doc.end()) {
    if (!it->is_array() || it->size() != pred.sequence.actions.size()) {
      schema_error("$.provenance", "expected array parallel to actions");
    }
    for (std::size_t i = 0; i < it->size(); ++i) pred.sequence.actions[i].provenance = (*it)[i];
  }
  return pred;
}

}  // namespace deskrec
