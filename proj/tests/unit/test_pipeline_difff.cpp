#include <gtest/gtest.h>

#include <random>

#include "deskrec/error.hpp"
#include "deskrec/pipeline_difff.hpp"
#include "deskrec/prompts.hpp"
#include "test_support.hpp"

using namespace deskrec;
using testing_support::fixture_frames;
using testing_support::fixtures;
using testing_support::load_json;
using testing_support::prefix_provider;

namespace {

UIChangeRecord record(int frame, std::vector<UIChange> changes,
                      std::optional<std::string> new_cursor = std::nullopt) {
  UIChangeRecord r;
  r.frame = frame;
  r.changed = !changes.empty();
  r.changes = std::move(changes);
  r.new_cursor_shape = std::move(new_cursor);
  return r;
}

UIChange change(std::string subject, std::string type) {
  return {std::move(subject), std::move(type), "", "", ""};
}

DiffFActionRecord action(std::string verb, std::vector<std::string> evidence,
                         std::string element = "thing", std::string app = "App") {
  DiffFActionRecord a{std::move(app), std::move(element), std::move(verb), evidence.empty() ? "1_0" : evidence[0], {}};
  for (auto& id : evidence) a.evidences.push_back({std::move(id), "because"});
  return a;
}

std::string descriptor_reply(const std::string& type = "appear", bool changed = true,
                             const char* cursor = "null") {
  return "```json\n{\"global_description\": \"a window\", \"description\": \"a box\", \"changed\": " +
         std::string(changed ? "true" : "false") + ", \"old_cursor_shape\": null, \"new_cursor_shape\": " +
         cursor + ", \"changes\": [{\"subject\": \"icon\", \"type\": \"" + type +
         "\", \"old\": \"\", \"new\": \"x\", \"message\": \"m\"}]}\n```";
}

std::string actions_reply(const json& actions) { return "Here:\n```json\n" + actions.dump(2) + "\n```"; }

// Frames where frame t (t >= 1) adds one 8x8 block at a new spot.
FrameSequence changing_sequence(int n, int h = 240, int w = 320) {
  std::vector<Image> images;
  Image img(h, w, 3, 0.9f);
  images.push_back(img);
  for (int t = 1; t < n; ++t) {
    for (int r = 20; r < 28; ++r)
      for (int c = 20 + 40 * (t - 1); c < 28 + 40 * (t - 1); ++c) img.at(r, c, 0) = 0.0f;
    images.push_back(img);
  }
  return make_sequence(std::move(images));
}

GatewayConfig config() {
  GatewayConfig c;
  c.backoff = std::chrono::milliseconds(1);
  return c;
}

Errc code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no deskrec::Error thrown";
  return Errc::Io;
}

}  // namespace

TEST(ChangeRecord, ParseAndValidate) {
  const auto rec = UIChangeRecord::from_json(json::parse(R"({
    "global_description": "File explorer", "description": "folder list", "changed": true,
    "old_cursor_shape": "normal", "new_cursor_shape": null,
    "changes": [{"subject": "folder", "type": "style_change", "old": "plain",
                 "new": "highlighted", "message": "The folder 'remain' is selected"}]})"),
                                             2, 0);
  EXPECT_EQ(rec.id(), "2_0");
  ASSERT_EQ(rec.changes.size(), 1u);
  EXPECT_EQ(rec.changes[0].type, "style_change");
  EXPECT_EQ(rec.changes[0].subject, "folder");
  EXPECT_FALSE(rec.new_cursor_shape.has_value());
  EXPECT_EQ(rec.to_json()["id"], "2_0");
  EXPECT_EQ(UIChangeRecord::from_json(rec.to_json(), 2, 0), rec);
}

TEST(ChangeRecord, UnchangedKeepsRecordWithoutChanges) {
  std::string note;
  const auto rec = UIChangeRecord::from_json(
      json::parse(R"({"changed": false, "changes": [{"subject": "a", "type": "move"}]})"), 1, 0, &note);
  EXPECT_FALSE(rec.changed);
  EXPECT_TRUE(rec.changes.empty());
  EXPECT_FALSE(note.empty());
}

TEST(ChangeRecord, InvalidShapes) {
  EXPECT_EQ(code_of([] { UIChangeRecord::from_json(json::parse(R"({"changed": "yes"})"), 1, 0); }),
            Errc::SchemaError);
  EXPECT_EQ(code_of([] {
              UIChangeRecord::from_json(
                  json::parse(R"({"changed": true, "changes": [{"subject": "a", "type": "wiggle"}]})"), 1, 0);
            }),
            Errc::SchemaError);
  EXPECT_EQ(code_of([] { UIChangeRecord::from_json(json::array(), 1, 0); }), Errc::SchemaError);
}

TEST(CorrectorModeNames, RoundTrip) {
  for (CorrectorMode m : {CorrectorMode::follow_up, CorrectorMode::per_task, CorrectorMode::fresh}) {
    EXPECT_EQ(parse_corrector_mode(to_string(m)), m);
  }
  EXPECT_THROW(parse_corrector_mode("both"), Error);
}

TEST(ParseActions, Shapes) {
  const json a = json::parse(R"({"app": "A", "element": "e", "action": "click", "region": "1_0",
                                  "evidences": [["1_0", "r"]]})");
  EXPECT_EQ(parse_difff_actions(json::array({a})).size(), 1u);
  EXPECT_EQ(parse_difff_actions(json{{"actions", json::array({a})}}).size(), 1u);
  EXPECT_EQ(parse_difff_actions(json{{"result", {a, a}}}).size(), 2u);
  std::vector<std::string> dropped;
  EXPECT_EQ(parse_difff_actions(json::array({a, {{"app", "x"}}}), &dropped).size(), 1u);
  EXPECT_EQ(dropped.size(), 1u);
  EXPECT_EQ(code_of([] { parse_difff_actions(json{{"n", 1}}); }), Errc::SchemaError);
}

TEST(FilterEvidence, DanglingIdsDropped) {
  const RecordIndex idx = index_records({record(1, {change("a", "appear")}), record(2, {})});
  std::vector<std::string> notes;
  const auto out = filter_evidence({action("click", {"1_0", "9_9"}), action("type", {"9_9"})}, idx, &notes);
  ASSERT_EQ(out.size(), 1u);
  ASSERT_EQ(out[0].evidences.size(), 1u);
  EXPECT_EQ(out[0].evidences[0].id, "1_0");
  EXPECT_EQ(notes.size(), 3u);
}

TEST(RuleCorrect, Examples) {
  const RecordIndex idx = index_records({
      record(1, {change("button", "style_change")}),
      record(2, {change("document text", "move")}),
      record(3, {change("mouse cursor", "move")}),
      record(4, {change("button", "style_change")}, "normal"),
  });
  std::vector<std::string> removed;
  const auto out = rule_correct({action("scroll", {"1_0"}),            // style only: removed
                                 action("scroll", {"1_0", "2_0"}),     // real movement: kept
                                 action("scroll", {"3_0"}),            // only the cursor moved: removed
                                 action("click", {"4_0"}),             // cursor shape present: kept
                                 action("click", {"1_0", "2_0"}),      // no cursor: removed
                                 action("click", {"8_8"}),             // unresolvable: removed
                                 action("type", {"1_0"}),              // untouched
                                 action(" Scroll ", {"1_0"})},         // parsed leniently: removed
                                idx, &removed);
  ASSERT_EQ(out.size(), 3u);
  EXPECT_EQ(out[0].action, "scroll");
  EXPECT_EQ(out[1].action, "click");
  EXPECT_EQ(out[2].action, "type");
  EXPECT_EQ(removed.size(), 5u);
}

TEST(RuleCorrect, IdempotentOrderPreservingNeverAdds) {
  std::mt19937 rng(77);
  const std::vector<std::string> verbs = {"click", "scroll", "type", "drag", "select", "move"};
  const std::vector<std::string> types(kChangeTypes.begin(), kChangeTypes.end());
  for (int iter = 0; iter < 300; ++iter) {
    std::vector<UIChangeRecord> recs;
    const int nrec = std::uniform_int_distribution<int>(1, 6)(rng);
    for (int i = 0; i < nrec; ++i) {
      std::vector<UIChange> cs;
      for (int k = std::uniform_int_distribution<int>(0, 2)(rng); k > 0; --k) {
        cs.push_back(change(rng() % 2 ? "cursor" : "panel", types[rng() % types.size()]));
      }
      recs.push_back(record(i + 1, cs, rng() % 3 == 0 ? std::optional<std::string>("hand") : std::nullopt));
    }
    const RecordIndex idx = index_records(recs);
    std::vector<DiffFActionRecord> acts;
    for (int a = std::uniform_int_distribution<int>(0, 8)(rng); a > 0; --a) {
      std::vector<std::string> ev;
      for (int k = std::uniform_int_distribution<int>(1, 3)(rng); k > 0; --k) {
        ev.push_back(std::to_string(std::uniform_int_distribution<int>(1, nrec + 1)(rng)) + "_0");
      }
      acts.push_back(action(verbs[rng() % verbs.size()], ev, "e" + std::to_string(a)));
    }
    const auto once = rule_correct(acts, idx);
    EXPECT_EQ(rule_correct(once, idx), once);
    EXPECT_LE(once.size(), acts.size());
    // Survivors appear in the input in the same relative order.
    std::size_t j = 0;
    for (const auto& s : once) {
      while (j < acts.size() && !(acts[j] == s)) ++j;
      ASSERT_LT(j, acts.size());
      ++j;
    }
  }
}

TEST(Describe, RequestCarriesTwoImagesAndGeometry) {
  const auto frames = changing_sequence(2);
  const auto regions = localize(frames[0].pixels, frames[1].pixels, {}, 1);
  ASSERT_EQ(regions.size(), 1u);
  std::string geometry;
  auto p = std::make_shared<ScriptedProvider>([&](const ChatRequest& r) {
    geometry = r.messages[0].parts[3].text;
    return descriptor_reply();
  });
  Gateway gw(config(), p);
  DiffFPipeline pipe(gw, {});
  RunReport report;
  const auto rec = pipe.describe(frames[0], frames[1], regions[0], report);
  EXPECT_EQ(rec.id(), "1_0");
  EXPECT_EQ(gw.request_log()[0].images, 2u);
  EXPECT_EQ(gw.request_log()[0].tag, "difff_descriptor:1_0");
  const json g = json::parse(geometry);
  EXPECT_EQ(g["screen_resolution"], json({240, 320}));
  EXPECT_EQ(g["bbox"], regions[0].bbox.to_json());
}

TEST(Run, BadDescriptorDropsRegionAndFlags) {
  auto p = prefix_provider({{"difff_descriptor:1_0", descriptor_reply()},
                            {"difff_descriptor:2_0", descriptor_reply("wiggle")},
                            {"difff_proposer", actions_reply(json::array())},
                            {"difff_corrector", actions_reply(json::array())}});
  Gateway gw(config(), p);
  DiffFPipeline pipe(gw, {});
  RunReport report;
  const auto r = pipe.run(changing_sequence(3), "v", report);
  EXPECT_EQ(r.regions.size(), 2u);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].id(), "1_0");
  bool flagged = false;
  for (const auto& f : report.flags) flagged = flagged || (f.stage == "difff_descriptor" && f.subject == "2_0");
  EXPECT_TRUE(flagged);
}

TEST(Run, UnchangedRecordForwardedToProposer) {
  std::string proposer_input;
  auto p = std::make_shared<ScriptedProvider>([&](const ChatRequest& r) -> std::string {
    if (r.tag.starts_with("difff_descriptor")) return descriptor_reply("move", false);
    if (r.tag.starts_with("difff_proposer")) proposer_input = r.messages[0].parts[1].text;
    return actions_reply(json::array());
  });
  Gateway gw(config(), p);
  DiffFPipeline pipe(gw, {});
  RunReport report;
  const auto r = pipe.run(changing_sequence(2), "v", report);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_FALSE(r.records[0].changed);
  const json input = json::parse(proposer_input);
  ASSERT_EQ(input.size(), 1u);
  EXPECT_EQ(input[0]["changed"], false);
  EXPECT_TRUE(input[0]["changes"].empty());
}

TEST(Run, ProposerDropsUnknownEvidence) {
  const json proposed = json::parse(R"([{"app": "A", "element": "icon", "action": "drag", "region": "1_0",
                                          "evidences": [["1_0", "moved"], ["9_9", "ghost"]]}])");
  auto p = prefix_provider({{"difff_descriptor", descriptor_reply()},
                            {"difff_proposer", actions_reply(proposed)},
                            {"difff_corrector", actions_reply(proposed)}});
  Gateway gw(config(), p);
  DiffFPipeline pipe(gw, {});
  RunReport report;
  const auto r = pipe.run(changing_sequence(2), "v", report);
  ASSERT_EQ(r.proposed.size(), 1u);
  EXPECT_EQ(r.proposed[0].evidences.size(), 1u);
  ASSERT_EQ(r.actions.size(), 1u);
  EXPECT_EQ(r.actions.actions[0].operation, OperationType::drag);
}

TEST(Run, ProposerFailureFailsRun) {
  auto p = prefix_provider({{"difff_descriptor", descriptor_reply()}, {"difff_proposer", "nope"}});
  Gateway gw(config(), p);
  DiffFPipeline pipe(gw, {});
  RunReport report;
  EXPECT_EQ(code_of([&] { pipe.run(changing_sequence(2), "v", report); }), Errc::RunFailed);
  EXPECT_EQ(report.status, "failed");
}

TEST(Corrector, MergesPrefixTypeActions) {
  const json proposed = json::parse(R"([
      {"app": "Notepad", "element": "'he'", "action": "type", "region": "1_0", "evidences": [["1_0", "a"]]},
      {"app": "Notepad", "element": "'hello'", "action": "type", "region": "1_0", "evidences": [["2_0", "b"]]}])");
  const json merged = json::parse(R"([{"app": "Notepad", "element": "'hello'", "action": "type", "region": "1_0",
                                        "evidences": [["1_0", "a"], ["2_0", "b"]]}])");
  const std::string corrector_text =
      "<TASK 1>: fine.\n" + proposed.dump() + "\n<TASK 8>: the first element is a prefix of the second.\n```json\n" +
      merged.dump(2) + "\n```";
  auto p = prefix_provider({{"difff_descriptor", descriptor_reply("text_content_change")},
                            {"difff_proposer", actions_reply(proposed)},
                            {"difff_corrector", corrector_text}});
  Gateway gw(config(), p);
  DiffFPipeline pipe(gw, {});
  RunReport report;
  const auto r = pipe.run(changing_sequence(3), "v", report);
  EXPECT_EQ(r.proposed.size(), 2u);
  ASSERT_EQ(r.actions.size(), 1u);
  EXPECT_EQ(r.actions.actions[0].detail, "'hello'");
  EXPECT_EQ(r.actions.actions[0].operation, OperationType::type);
}

TEST(Corrector, MoveVerbReclassified) {
  const json proposed = json::parse(R"([{"app": "Reader", "element": "page", "action": "move", "region": "1_0",
                                          "evidences": [["1_0", "content shifted"]]}])");
  json fixed = proposed;
  fixed[0]["action"] = "scroll";
  auto p = prefix_provider({{"difff_descriptor", descriptor_reply("move")},
                            {"difff_proposer", actions_reply(proposed)},
                            {"difff_corrector", actions_reply(fixed)}});
  Gateway gw(config(), p);
  DiffFPipeline pipe(gw, {});
  RunReport report;
  const auto r = pipe.run(changing_sequence(2), "v", report);
  ASSERT_EQ(r.actions.size(), 1u);
  EXPECT_EQ(r.actions.actions[0].operation, OperationType::scroll);
}

TEST(Corrector, FollowUpContinuesProposerConversation) {
  std::vector<ChatRequest> seen;
  std::mutex mutex;
  auto p = std::make_shared<ScriptedProvider>([&](const ChatRequest& r) -> std::string {
    std::lock_guard lock(mutex);
    seen.push_back(r);
    if (r.tag.starts_with("difff_descriptor")) return descriptor_reply();
    return actions_reply(json::array());
  });
  Gateway gw(config(), p);
  DiffFPipeline pipe(gw, {});
  RunReport report;
  pipe.run(changing_sequence(2), "v", report);
  ASSERT_EQ(seen.size(), 3u);
  const ChatRequest& corrector = seen.back();
  EXPECT_EQ(corrector.tag, "difff_corrector");
  ASSERT_EQ(corrector.messages.size(), 3u);
  EXPECT_EQ(corrector.messages[1].role, "assistant");
  EXPECT_EQ(corrector.messages[2].parts[0].text, prompt(PromptName::difff_corrector).text);
}

TEST(Corrector, PerTaskModeUsesEightTurns) {
  auto p = prefix_provider({{"difff_descriptor", descriptor_reply()},
                            {"difff_proposer", actions_reply(json::array())},
                            {"difff_corrector", actions_reply(json::array())}});
  Gateway gw(config(), p);
  DiffFOptions opts;
  opts.corrector_mode = CorrectorMode::per_task;
  DiffFPipeline pipe(gw, opts);
  RunReport report;
  pipe.run(changing_sequence(2), "v", report);
  const auto tags = p->seen_tags();
  ASSERT_EQ(tags.size(), 10u);
  EXPECT_EQ(tags[2], "difff_corrector:task1");
  EXPECT_EQ(tags[9], "difff_corrector:task8");
}

TEST(Corrector, FailureKeepsProposal) {
  const json proposed = json::parse(R"([{"app": "A", "element": "e", "action": "type", "region": "1_0",
                                          "evidences": [["1_0", "x"]]}])");
  auto p = prefix_provider({{"difff_descriptor", descriptor_reply()},
                            {"difff_proposer", actions_reply(proposed)},
                            {"difff_corrector", "no json at all"}});
  Gateway gw(config(), p);
  DiffFPipeline pipe(gw, {});
  RunReport report;
  const auto r = pipe.run(changing_sequence(2), "v", report);
  EXPECT_EQ(r.corrected, r.proposed);
  EXPECT_EQ(report.flags.back().stage, "difff_corrector");
}

TEST(Ablations, NoCorrectorIsIdentity) {
  // A click without cursor evidence would be removed by the rule pass.
  const json proposed = json::parse(R"([{"app": "A", "element": "e", "action": "click", "region": "1_0",
                                          "evidences": [["1_0", "x"]]}])");
  auto p = prefix_provider({{"difff_descriptor", descriptor_reply()},
                            {"difff_proposer", actions_reply(proposed)}});
  Gateway gw(config(), p);
  DiffFOptions opts;
  opts.ablations.no_corrector = true;
  DiffFPipeline pipe(gw, opts);
  RunReport report;
  const auto r = pipe.run(changing_sequence(2), "v", report);
  EXPECT_EQ(r.corrected, r.proposed);
  EXPECT_EQ(r.actions.size(), 1u);
  for (const auto& t : p->seen_tags()) EXPECT_FALSE(t.starts_with("difff_corrector"));
}

TEST(Ablations, FramesToProposer) {
  auto p = prefix_provider({{"difff_descriptor", descriptor_reply()},
                            {"difff_proposer", actions_reply(json::array())},
                            {"difff_corrector", actions_reply(json::array())}});
  Gateway gw(config(), p);
  DiffFOptions opts;
  opts.ablations.frames_to_proposer = true;
  DiffFPipeline pipe(gw, opts);
  RunReport report;
  pipe.run(changing_sequence(4), "v", report);
  for (const auto& rec : gw.request_log()) {
    if (rec.tag == "difff_proposer") { EXPECT_EQ(rec.images, 4u); }
    if (rec.tag.starts_with("difff_descriptor")) { EXPECT_EQ(rec.images, 2u); }
  }
}

TEST(Run, StaticVideoMakesNoCalls) {
  auto p = prefix_provider({});
  Gateway gw(config(), p);
  DiffFPipeline pipe(gw, {});
  RunReport report;
  std::vector<Image> same(5, Image(60, 80, 3, 0.5f));
  const auto r = pipe.run(make_sequence(same), "v", report);
  EXPECT_TRUE(r.regions.empty());
  EXPECT_TRUE(r.actions.empty());
  EXPECT_EQ(p->calls(), 0u);
  EXPECT_EQ(report.units.back().status, "skipped");
}

TEST(Run, NeedsTwoFrames) {
  Gateway gw(config(), prefix_provider({}));
  DiffFPipeline pipe(gw, {});
  RunReport report;
  EXPECT_EQ(code_of([&] { pipe.run(changing_sequence(1), "v", report); }), Errc::InvalidConfig);
}

TEST(Run, FixtureTranscripts) {
  struct Expect {
    std::string name;
    OperationType op;
    std::string detail;
  };
  for (const Expect& e : {Expect{"click", OperationType::click, "Submit button"},
                          Expect{"scroll", OperationType::scroll, "vertical scroll bar of document"},
                          Expect{"type", OperationType::type, "'hello'"}}) {
    auto p = ScriptedProvider::from_transcript(load_json(fixtures() / "transcripts" / (e.name + "_difff.json")));
    Gateway gw(config(), p);
    DiffFPipeline pipe(gw, {});
    RunReport report;
    const auto r = pipe.run(fixture_frames(e.name), e.name, report);
    ASSERT_EQ(r.actions.size(), 1u) << e.name;
    EXPECT_EQ(r.actions.actions[0].operation, e.op) << e.name;
    EXPECT_EQ(r.actions.actions[0].detail, e.detail) << e.name;
    // One descriptor call per region plus proposer and corrector.
    EXPECT_EQ(p->calls(), r.regions.size() + 2) << e.name;
    for (const auto& a : r.corrected) {
      for (const auto& ev : a.evidences) EXPECT_TRUE(index_records(r.records).count(ev.id));
    }
  }
}
