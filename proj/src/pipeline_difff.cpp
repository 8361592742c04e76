#include "deskrec/pipeline_difff.hpp"

#include <algorithm>

#include "deskrec/error.hpp"
#include "deskrec/parallel.hpp"
#include "deskrec/prompts.hpp"
#include "text_util.hpp"

namespace deskrec {

namespace {

std::string text_of(const json& object, std::string_view key) {
  auto it = object.find(key);
  if (it == object.end() || it->is_null()) return {};
  return it->is_string() ? it->get<std::string>() : it->dump();
}

std::optional<std::string> optional_text(const json& object, std::string_view key) {
  auto it = object.find(key);
  if (it == object.end() || it->is_null()) return std::nullopt;
  return it->is_string() ? it->get<std::string>() : it->dump();
}

json nullable(const std::optional<std::string>& value) {
  return value ? json(*value) : json(nullptr);
}

bool recoverable(Errc code) {
  return code == Errc::ParseError || code == Errc::NoJsonFound || code == Errc::ProviderError;
}

json actions_json(const std::vector<DiffFActionRecord>& actions) {
  json out = json::array();
  for (const auto& a : actions) out.push_back(a.to_json());
  return out;
}

void require_action_list(const json& value) { parse_difff_actions(value); }

}  // namespace

json UIChangeRecord::to_json() const {
  json changes_json = json::array();
  for (const auto& c : changes) {
    changes_json.push_back({{"subject", c.subject}, {"type", c.type}, {"old", c.old_value},
                            {"new", c.new_value}, {"message", c.message}});
  }
  return {{"id", id()},
          {"global_description", global_description},
          {"description", description},
          {"changed", changed},
          {"old_cursor_shape", nullable(old_cursor_shape)},
          {"new_cursor_shape", nullable(new_cursor_shape)},
          {"changes", std::move(changes_json)}};
}

UIChangeRecord UIChangeRecord::from_json(const json& value, int frame, int index,
                                         std::string* note) {
  if (!value.is_object()) throw Error(Errc::SchemaError, "descriptor reply must be an object");
  auto changed = value.find("changed");
  if (changed == value.end() || !changed->is_boolean()) {
    throw Error(Errc::SchemaError, "\"changed\" must be a boolean");
  }
  UIChangeRecord rec;
  rec.frame = frame;
  rec.index = index;
  rec.changed = changed->get<bool>();
  rec.global_description = text_of(value, "global_description");
  rec.description = text_of(value, "description");
  rec.old_cursor_shape = optional_text(value, "old_cursor_shape");
  rec.new_cursor_shape = optional_text(value, "new_cursor_shape");
  if (auto it = value.find("changes"); it != value.end() && !it->is_null()) {
    if (!it->is_array()) throw Error(Errc::SchemaError, "\"changes\" must be an array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      const json& c = (*it)[i];
      const std::string where = "changes[" + std::to_string(i) + "]";
      if (!c.is_object()) throw Error(Errc::SchemaError, where + " must be an object");
      UIChange change{text_of(c, "subject"), text_of(c, "type"), text_of(c, "old"),
                      text_of(c, "new"), text_of(c, "message")};
      if (std::find(kChangeTypes.begin(), kChangeTypes.end(), change.type) == kChangeTypes.end()) {
        throw Error(Errc::SchemaError, where + ".type \"" + change.type + "\" is not a change type");
      }
      rec.changes.push_back(std::move(change));
    }
  }
  if (!rec.changed && !rec.changes.empty()) {
    if (note) {
      *note = "changed=false with " + std::to_string(rec.changes.size()) + " changes; cleared";
    }
    rec.changes.clear();
  }
  return rec;
}

RecordIndex index_records(const std::vector<UIChangeRecord>& records) {
  RecordIndex out;
  for (const auto& r : records) out.emplace(r.id(), r);
  return out;
}

std::string_view to_string(CorrectorMode mode) {
  switch (mode) {
    case CorrectorMode::follow_up: return "follow-up";
    case CorrectorMode::per_task: return "per-task";
    case CorrectorMode::fresh: return "fresh";
  }
  return "follow-up";
}

CorrectorMode parse_corrector_mode(std::string_view text) {
  for (CorrectorMode m : {CorrectorMode::follow_up, CorrectorMode::per_task, CorrectorMode::fresh}) {
    if (text == to_string(m)) return m;
  }
  throw Error(Errc::InvalidConfig, "unknown corrector mode \"" + std::string(text) + "\"");
}

std::vector<DiffFActionRecord> parse_difff_actions(const json& value,
                                                   std::vector<std::string>* dropped) {
  const json* list = nullptr;
  if (value.is_array()) {
    list = &value;
  } else if (value.is_object()) {
    if (auto it = value.find("actions"); it != value.end() && it->is_array()) {
      list = &*it;
    } else {
      for (const auto& [key, member] : value.items()) {
        if (member.is_array()) {
          list = &member;
          break;
        }
      }
    }
  }
  if (!list) throw Error(Errc::SchemaError, "expected a JSON array of actions");
  std::vector<DiffFActionRecord> out;
  for (std::size_t i = 0; i < list->size(); ++i) {
    try {
      out.push_back(DiffFActionRecord::from_json((*list)[i]));
    } catch (const Error& e) {
      if (dropped) dropped->push_back("action " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

std::vector<DiffFActionRecord> filter_evidence(std::vector<DiffFActionRecord> actions,
                                               const RecordIndex& records,
                                               std::vector<std::string>* notes) {
  std::vector<DiffFActionRecord> out;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    auto& a = actions[i];
    std::vector<Evidence> kept;
    for (auto& ev : a.evidences) {
      if (records.count(ev.id)) {
        kept.push_back(std::move(ev));
      } else if (notes) {
        notes->push_back("action " + std::to_string(i) + ": unknown evidence \"" + ev.id + "\"");
      }
    }
    if (kept.empty()) {
      if (notes) notes->push_back("action " + std::to_string(i) + ": no evidence left, dropped");
      continue;
    }
    a.evidences = std::move(kept);
    out.push_back(std::move(a));
  }
  return out;
}

std::vector<DiffFActionRecord> rule_correct(const std::vector<DiffFActionRecord>& actions,
                                            const RecordIndex& records,
                                            std::vector<std::string>* removed) {
  auto supported = [&](const DiffFActionRecord& a, auto&& pred) {
    return std::any_of(a.evidences.begin(), a.evidences.end(), [&](const Evidence& ev) {
      auto it = records.find(ev.id);
      return it != records.end() && pred(it->second);
    });
  };
  auto ui_moved = [](const UIChangeRecord& r) {
    return std::any_of(r.changes.begin(), r.changes.end(), [](const UIChange& c) {
      return c.type == "move" && detail::to_lower(c.subject).find("cursor") == std::string::npos;
    });
  };
  auto cursor_seen = [](const UIChangeRecord& r) { return r.new_cursor_shape.has_value(); };

  std::vector<DiffFActionRecord> out;
  for (std::size_t i = 0; i < actions.size(); ++i) {
    const auto& a = actions[i];
    const auto op = try_parse_operation(detail::trim(a.action));
    if (op == OperationType::scroll && !supported(a, ui_moved)) {
      if (removed) removed->push_back("action " + std::to_string(i) + ": scroll without UI movement");
      continue;
    }
    if (op == OperationType::click && !supported(a, cursor_seen)) {
      if (removed) removed->push_back("action " + std::to_string(i) + ": click without cursor");
      continue;
    }
    out.push_back(a);
  }
  return out;
}

DiffFPipeline::DiffFPipeline(Gateway& gateway, DiffFOptions options)
    : gateway_(gateway), options_(std::move(options)) {
  options_.localizer.validate();
}

UIChangeRecord DiffFPipeline::describe(const Frame& prev, const Frame& curr,
                                       const ChangeRegion& region, RunReport& report) {
  const Image& screen = curr.pixels;
  ChatRequest request = gateway_.new_request("difff_descriptor:" + region.id());
  request.messages.push_back(
      {"user",
       {ContentPart::text_part(std::string(prompt(PromptName::difff_descriptor).text)),
        ContentPart::image_part(encode_png(annotate_screenshot(screen, region))),
        ContentPart::image_part(encode_png(render_region_comparison(prev.pixels, screen, region))),
        ContentPart::text_part(json{{"screen_resolution", {screen.height, screen.width}},
                                    {"bbox", region.bbox.to_json()}}
                                   .dump())}});
  JsonReply reply = ask_json(gateway_, std::move(request), [&](const json& v) {
    UIChangeRecord::from_json(v, region.frame, region.index);
  });
  std::string note;
  UIChangeRecord rec = UIChangeRecord::from_json(reply.value, region.frame, region.index, &note);
  if (!note.empty()) report.flag("difff_descriptor", region.id(), note);
  report.unit("difff_descriptor", region.id(), "ok", reply.attempts);
  return rec;
}

DiffFPipeline::Proposal DiffFPipeline::propose(const std::vector<UIChangeRecord>& records,
                                               const FrameSequence* frames, RunReport& report) {
  json input = json::array();
  for (const auto& r : records) input.push_back(r.to_json());
  ChatRequest request = gateway_.new_request("difff_proposer");
  ChatMessage message{"user",
                      {ContentPart::text_part(std::string(prompt(PromptName::difff_proposer).text)),
                       ContentPart::text_part(input.dump(2))}};
  if (frames) {
    for (const auto& f : frames->frames) message.parts.push_back(ContentPart::image_part(encode_png(f.pixels)));
  }
  request.messages.push_back(std::move(message));

  JsonReply reply;
  try {
    reply = ask_json(gateway_, std::move(request), require_action_list);
  } catch (const Error& e) {
    if (!recoverable(e.code())) throw;
    report.unit("difff_proposer", "all", "failed", 2, e.what());
    throw Error(Errc::RunFailed, std::string("proposer: ") + e.what());
  }
  std::vector<std::string> notes;
  auto actions = parse_difff_actions(reply.value, &notes);
  actions = filter_evidence(std::move(actions), index_records(records), &notes);
  for (const auto& n : notes) report.flag("difff_proposer", "all", n);
  report.unit("difff_proposer", "all", "ok", reply.attempts);
  return {std::move(actions), std::move(reply.conversation)};
}

std::vector<DiffFActionRecord> DiffFPipeline::vlm_correct(const Proposal& proposal,
                                                          const RecordIndex& records,
                                                          RunReport& report) {
  const std::string_view text = prompt(PromptName::difff_corrector).text;
  const std::string mode(to_string(options_.corrector_mode));
  try {
    JsonReply reply;
    if (options_.corrector_mode == CorrectorMode::per_task) {
      const CorrectorTasks split = split_corrector_tasks(text);
      ChatRequest request = gateway_.new_request("");
      request.messages = proposal.conversation;
      for (std::size_t k = 0; k < split.tasks.size(); ++k) {
        request.tag = "difff_corrector:task" + std::to_string(k + 1);
        request.messages.push_back(
            ChatMessage::user_text(k == 0 ? split.head + split.tasks[0] : split.tasks[k]));
        if (k + 1 == split.tasks.size()) {
          reply = ask_json(gateway_, request, require_action_list);
        } else {
          request.messages.push_back(ChatMessage::assistant_text(gateway_.cached_complete(request)));
        }
      }
    } else {
      ChatRequest request = gateway_.new_request("difff_corrector");
      if (options_.corrector_mode == CorrectorMode::follow_up) {
        request.messages = proposal.conversation;
        request.messages.push_back(ChatMessage::user_text(std::string(text)));
      } else {
        request.messages.push_back(
            {"user",
             {ContentPart::text_part(std::string(text)),
              ContentPart::text_part(json{{"actions", actions_json(proposal.actions)}}.dump(2))}});
      }
      reply = ask_json(gateway_, std::move(request), require_action_list);
    }
    std::vector<std::string> notes;
    auto corrected = parse_difff_actions(reply.value, &notes);
    corrected = filter_evidence(std::move(corrected), records, &notes);
    for (const auto& n : notes) report.flag("difff_corrector", mode, n);
    report.unit("difff_corrector", mode, "ok", reply.attempts);
    return corrected;
  } catch (const Error& e) {
    if (!recoverable(e.code())) throw;
    report.unit("difff_corrector", mode, "fallback", 2, e.what());
    report.flag("difff_corrector", mode, "corrector failed; proposed actions kept");
    return proposal.actions;
  }
}

DiffFResult DiffFPipeline::run(const FrameSequence& frames, const std::string& video_id,
                               RunReport& report) {
  report.video_id = video_id;
  report.method = "difff";
  if (frames.size() < 2) throw Error(Errc::InvalidConfig, "DiffF needs at least two frames");
  const int parallelism = gateway_.config().parallelism;

  std::vector<std::vector<ChangeRegion>> per_pair(frames.size() - 1);
  parallel_for(per_pair.size(), parallelism, [&](std::size_t i) {
    const int t = static_cast<int>(i) + 1;
    per_pair[i] = localize(frames[i].pixels, frames[i + 1].pixels, options_.localizer, t);
  });
  DiffFResult result;
  result.actions.video_id = video_id;
  for (auto& regions : per_pair) {
    result.regions.insert(result.regions.end(), regions.begin(), regions.end());
  }

  const std::size_t n_regions = result.regions.size();
  std::vector<std::optional<UIChangeRecord>> described(n_regions);
  std::vector<RunReport> partial(n_regions);
  parallel_for(n_regions, parallelism, [&](std::size_t i) {
    const ChangeRegion& region = result.regions[i];
    const auto t = static_cast<std::size_t>(region.frame);
    try {
      described[i] = describe(frames[t - 1], frames[t], region, partial[i]);
    } catch (const Error& e) {
      if (!recoverable(e.code())) throw;
      partial[i].unit("difff_descriptor", region.id(), "failed", 2, e.what());
      partial[i].flag("difff_descriptor", region.id(), "region dropped");
    }
  });
  for (std::size_t i = 0; i < n_regions; ++i) {
    report.units.insert(report.units.end(), partial[i].units.begin(), partial[i].units.end());
    report.flags.insert(report.flags.end(), partial[i].flags.begin(), partial[i].flags.end());
    if (described[i]) result.records.push_back(std::move(*described[i]));
  }

  if (result.records.empty()) {
    report.unit("difff_proposer", "all", "skipped", 0, "no UI changes");
    report.capture(gateway_);
    return result;
  }

  const RecordIndex index = index_records(result.records);
  Proposal proposal;
  try {
    proposal = propose(result.records, options_.ablations.frames_to_proposer ? &frames : nullptr,
                       report);
  } catch (const Error& e) {
    if (e.code() == Errc::RunFailed) {
      report.status = "failed";
      report.error = e.what();
      report.capture(gateway_);
    }
    throw;
  }
  result.proposed = proposal.actions;

  if (options_.ablations.no_corrector) {
    result.corrected = result.proposed;
  } else {
    std::vector<std::string> removed;
    result.corrected = rule_correct(vlm_correct(proposal, index, report), index, &removed);
    for (const auto& r : removed) report.flag("rule_corrector", "all", r);
  }

  for (std::size_t i = 0; i < result.corrected.size(); ++i) {
    try {
      result.actions.actions.push_back(normalize_difff_action(result.corrected[i]));
    } catch (const Error& e) {
      report.flag("normalize", std::to_string(i), std::string("dropped: ") + e.what());
    }
  }
  report.capture(gateway_);
  return result;
}

}  // namespace deskrec
