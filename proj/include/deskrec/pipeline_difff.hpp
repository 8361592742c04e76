#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "deskrec/action.hpp"
#include "deskrec/gateway.hpp"
#include "deskrec/ingest.hpp"
#include "deskrec/localizer.hpp"
#include "deskrec/run_report.hpp"

namespace deskrec {

inline constexpr std::array<std::string_view, 6> kChangeTypes = {
    "appear", "disappear", "move", "rotate", "text_content_change", "style_change"};

struct UIChange {
  std::string subject;
  std::string type;
  std::string old_value;
  std::string new_value;
  std::string message;
  friend bool operator==(const UIChange&, const UIChange&) = default;
};

struct UIChangeRecord {
  std::string global_description;
  std::string description;
  bool changed = false;
  std::optional<std::string> old_cursor_shape;
  std::optional<std::string> new_cursor_shape;
  std::vector<UIChange> changes;
  int frame = 0;
  int index = 0;

  std::string id() const { return std::to_string(frame) + "_" + std::to_string(index); }
  json to_json() const;

  // Validates the descriptor reply: "changed" must be a bool and every change type one of
  // kChangeTypes (Error(SchemaError) otherwise). changed=false with a non-empty change
  // list is accepted with the list cleared; `note` then says so.
  static UIChangeRecord from_json(const json& value, int frame, int index,
                                  std::string* note = nullptr);
  friend bool operator==(const UIChangeRecord&, const UIChangeRecord&) = default;
};

using RecordIndex = std::map<std::string, UIChangeRecord>;
RecordIndex index_records(const std::vector<UIChangeRecord>& records);

enum class CorrectorMode {
  follow_up,  // one extra turn in the proposer conversation
  per_task,   // one turn per TASK block
  fresh,      // new conversation with the proposed actions pasted in
};
std::string_view to_string(CorrectorMode mode);
CorrectorMode parse_corrector_mode(std::string_view text);

struct DiffFAblations {
  bool no_corrector = false;        // skips both the VLM and the rule-based pass
  bool frames_to_proposer = false;  // attach every sampled frame to the proposer call
};

struct DiffFOptions {
  LocalizerParams localizer;
  DiffFAblations ablations;
  CorrectorMode corrector_mode = CorrectorMode::follow_up;
};

struct DiffFResult {
  ActionSequence actions;
  std::vector<ChangeRegion> regions;
  std::vector<UIChangeRecord> records;
  std::vector<DiffFActionRecord> proposed;
  std::vector<DiffFActionRecord> corrected;  // after VLM and rule passes
};

// Drops evidence ids missing from `records`, then actions left without evidence.
std::vector<DiffFActionRecord> filter_evidence(std::vector<DiffFActionRecord> actions,
                                               const RecordIndex& records,
                                               std::vector<std::string>* notes = nullptr);

// Removes scrolls with no evidence record showing a non-cursor "move", and clicks with
// no evidence record carrying a new cursor shape. Unresolvable ids count as no support.
std::vector<DiffFActionRecord> rule_correct(const std::vector<DiffFActionRecord>& actions,
                                            const RecordIndex& records,
                                            std::vector<std::string>* removed = nullptr);

// Accepts a JSON array of actions or an object holding one.
std::vector<DiffFActionRecord> parse_difff_actions(const json& value,
                                                   std::vector<std::string>* dropped = nullptr);

class DiffFPipeline {
 public:
  DiffFPipeline(Gateway& gateway, DiffFOptions options);

  // Throws Error(ParseError/NoJsonFound) when the reply is unusable after the re-prompt.
  UIChangeRecord describe(const Frame& prev, const Frame& curr, const ChangeRegion& region,
                          RunReport& report);

  struct Proposal {
    std::vector<DiffFActionRecord> actions;
    std::vector<ChatMessage> conversation;
  };
  // Error(RunFailed) when the reply is unusable.
  Proposal propose(const std::vector<UIChangeRecord>& records, const FrameSequence* frames,
                   RunReport& report);
  std::vector<DiffFActionRecord> vlm_correct(const Proposal& proposal, const RecordIndex& records,
                                             RunReport& report);

  DiffFResult run(const FrameSequence& frames, const std::string& video_id, RunReport& report);

  const DiffFOptions& options() const { return options_; }

 private:
  Gateway& gateway_;
  DiffFOptions options_;
};

}  // namespace deskrec
