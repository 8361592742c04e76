// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <list>
#include <random>
#include <set>
#include <sstream>

#include "deskrec/config.hpp"
#include "deskrec/embedding.hpp"
#include "deskrec/error.hpp"
#include "deskrec/evaluator.hpp"
#include "deskrec/localizer.hpp"
#include "deskrec/pipeline_df.hpp"
#include "deskrec/pipeline_difff.hpp"
#include "localizer_oracle.hpp"
#include "test_support.hpp"

using namespace deskrec;
using Clock = std::chrono::steady_clock;
namespace fs = std::filesystem;

namespace {

// Tolerances.
constexpr double kMaxSecondsPerHdPair = 1.0;
constexpr double kMaxEndToEndSeconds = 10.0;
constexpr int kOracleMasks = 500;
constexpr int kMaxMaskSide = 64;
constexpr int kWindowSamples = 1000;

struct Check {
  std::ostringstream why;
  bool ok = true;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) why << what;
    ok = ok && cond;
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

DiffMask block_mask(int h, int w, std::initializer_list<BBox> blocks) {
  DiffMask m(h, w);
  for (const BBox& b : blocks)
    for (int r = b.minr; r < b.maxr; ++r)
      for (int c = b.minc; c < b.maxc; ++c) m.set(r, c);
  return m;
}

Image block_image(int h, int w, std::initializer_list<BBox> blocks) {
  Image img(h, w, 3, 1.0f);
  for (const BBox& b : blocks)
    for (int r = b.minr; r < b.maxr; ++r)
      for (int c = b.minc; c < b.maxc; ++c)
        for (int p = 0; p < 3; ++p) img.at(r, c, p) = 0.0f;
  return img;
}

// ---------------------------------------------------------------------------

std::string criterion_1(Check& c) {
  const Image hd(1080, 1920, 3, 0.5f);
  auto t0 = Clock::now();
  const auto none = localize(hd, hd);
  const double identical_s = seconds_since(t0);
  c.expect(none.empty(), "identical 1080p frames gave regions; ");

  Image hd_changed = hd;
  for (int r = 500; r < 540; ++r)
    for (int col = 900; col < 960; ++col) hd_changed.at(r, col, 0) = 1.0f;
  t0 = Clock::now();
  const auto changed = localize(hd, hd_changed);
  const double changed_s = seconds_since(t0);
  // The blur spreads the 0.5 step one pixel past the 0.15 threshold on each side.
  c.expect(changed.size() == 1 && changed[0].bbox == BBox{399, 799, 641, 1061},
           "1080p change region wrong; ");
  c.expect(identical_s < kMaxSecondsPerHdPair && changed_s < kMaxSecondsPerHdPair, "1080p pair too slow; ");

  const Image blank(200, 200, 3, 1.0f);
  const auto block = localize(blank, block_image(200, 200, {{50, 50, 70, 70}}));
  // Full-contrast change: the blur carries it two pixels past the block edge.
  c.expect(block.size() == 1 && block[0].bbox == BBox{0, 0, 172, 172}, "20x20 block bbox wrong; ");
  const auto single = extract_regions(block_mask(200, 200, {{50, 50, 70, 70}}));
  c.expect(single.size() == 1 && single[0].bbox == BBox{0, 0, 170, 170}, "20x20 mask bbox wrong; ");

  c.expect(extract_regions(block_mask(200, 200, {{100, 100, 101, 105}})).empty(), "5-px blob kept; ");
  // A one-pixel speck peaks below the threshold after the blur.
  c.expect(localize(blank, block_image(200, 200, {{100, 100, 101, 101}})).empty(), "one-pixel speck kept; ");

  const auto two = extract_regions(block_mask(400, 400, {{50, 50, 60, 60}, {200, 200, 210, 210}}));
  c.expect(two.size() == 1 && two[0].component_bboxes.size() == 2, "overlapping expansions not merged; ");

  char buf[128];
  std::snprintf(buf, sizeof buf, "1080p identical %.3fs, changed %.3fs", identical_s, changed_s);
  return buf;
}

std::string criterion_2(Check& c) {
  std::mt19937 rng(20240601);
  std::uniform_int_distribution<int> side(1, kMaxMaskSide), expand(1, 30), area(1, 12);
  std::uniform_real_distribution<double> density(0.0, 0.35);
  int agree = 0;
  for (int i = 0; i < kOracleMasks; ++i) {
    LocalizerParams p;
    p.expand_px = expand(rng);
    p.min_area_px = area(rng);
    DiffMask m(side(rng), side(rng));
    std::bernoulli_distribution bit(density(rng));
    for (auto& b : m.bits) b = bit(rng) ? 1 : 0;
    if (extract_regions(m, p, 1) == oracle::regions(m, p.min_area_px, p.expand_px, 1)) ++agree;
  }
  c.expect(agree == kOracleMasks, "disagreement with the flood-fill oracle; ");
  return std::to_string(agree) + "/" + std::to_string(kOracleMasks) + " masks agree";
}

// Ground truth in order; the unmatched predictions are kept in a list and the first
// similar one is taken out.
std::size_t reference_algorithm(const BinaryMatrix& s) {
  std::list<std::size_t> unmatched;
  for (std::size_t i = 0; i < s.rows; ++i) unmatched.push_back(i);
  std::size_t m = 0;
  for (std::size_t j = 0; j < s.cols; ++j) {
    auto it = std::find_if(unmatched.begin(), unmatched.end(), [&](std::size_t i) { return s.at(i, j) != 0; });
    if (it != unmatched.end()) {
      unmatched.erase(it);
      ++m;
    }
  }
  return m;
}

// Maximum matching by DP over subsets of used ground-truth columns.
std::size_t max_matching(const BinaryMatrix& s) {
  const std::size_t full = std::size_t{1} << s.cols;
  std::vector<int> best(full, -1);
  best[0] = 0;
  int answer = 0;
  for (std::size_t i = 0; i < s.rows; ++i) {
    std::vector<int> next = best;
    for (std::size_t used = 0; used < full; ++used) {
      if (best[used] < 0) continue;
      for (std::size_t j = 0; j < s.cols; ++j) {
        if (!s.at(i, j) || (used >> j & 1)) continue;
        next[used | (std::size_t{1} << j)] = std::max(next[used | (std::size_t{1} << j)], best[used] + 1);
      }
    }
    best = std::move(next);
  }
  for (int v : best) answer = std::max(answer, v);
  return static_cast<std::size_t>(answer);
}

std::string criterion_3(Check& c) {
  std::size_t matrices = 0;
  for (std::size_t rows = 1; rows <= 4; ++rows) {
    for (std::size_t cols = 1; cols <= 4; ++cols) {
      const std::uint32_t count = 1u << (rows * cols);
      for (std::uint32_t bits = 0; bits < count; ++bits) {
        BinaryMatrix s(rows, cols);
        for (std::size_t k = 0; k < rows * cols; ++k) s.cells[k] = (bits >> k) & 1;
        const std::size_t greedy = greedy_match(s).m;
        const std::size_t maximum = max_matching(s);
        c.expect(greedy == reference_algorithm(s), "greedy differs from the reference; ");
        c.expect(greedy <= maximum, "greedy exceeds the maximum matching; ");
        c.expect(brute_force_match_oracle(s) == maximum, "library oracle differs from DP; ");
        ++matrices;
      }
    }
  }
  const auto counter = BinaryMatrix::from_rows({{1, 1}, {1, 0}});
  const std::size_t g = greedy_match(counter).m, o = brute_force_match_oracle(counter);
  c.expect(g == 1 && o == 2, "counterexample does not reproduce; ");
  return std::to_string(matrices) + " matrices; counterexample greedy " + std::to_string(g) + " vs oracle " +
         std::to_string(o);
}

std::string criterion_4(Check& c) {
  StubEmbedding embed;
  const ActionSequence gt{"anchor",
                          {{OperationType::click, "Submit button", "Demo App", nullptr},
                           {OperationType::select, "country dropdown", "Demo App", nullptr}}};
  const ActionSequence pred{"anchor",
                            {{OperationType::click, "Submit button", "Demo App", nullptr},
                             {OperationType::type, "'hello'", "Notepad", nullptr}}};
  const VideoMetrics v = evaluate_video(pred, gt, kDefaultMatchThreshold, embed);
  c.expect(v.m_all == 1, "m != 1; ");
  c.expect(v.all.precision == 0.5 && v.all.recall == 0.5, "P/R not exactly 0.5; ");
  const auto direct = compute_metrics(1, 2, 2);
  c.expect(direct.precision == 0.5 && direct.recall == 0.5, "compute_metrics(1,2,2) != 0.5; ");
  return "m=" + std::to_string(v.m_all) + " P=" + std::to_string(v.all.precision) +
         " R=" + std::to_string(v.all.recall);
}

std::string criterion_5(Check& c) {
  const auto t0 = Clock::now();
  testing_support::TempDir cache_dir("deskrec-accept");
  StubEmbedding embed;
  std::vector<GroundTruthCase> truth;
  std::map<std::string, ActionSequence> predictions[2];
  std::size_t live_calls = 0;
  for (const std::string name : {"click", "scroll", "type"}) {
    const BenchmarkCase bc =
        load_benchmark_case(testing_support::cases_dir() / name / "case.json", Rational(1));
    truth.push_back(bc.truth);
    for (Method method : {Method::df, Method::difff}) {
      const std::string m(to_string(method));
      const fs::path cache = cache_dir / m;
      // Recording pass: scripted transcript through the cache.
      {
        auto scripted = ScriptedProvider::from_transcript(
            testing_support::load_json(testing_support::fixtures() / "transcripts" / (name + "_" + m + ".json")));
        Gateway gw(GatewayConfig{}, scripted, ResponseCache(cache));
        RunReport report;
        if (method == Method::df) {
          DfPipeline(gw, {}).run(bc.frames, name, report);
        } else {
          DiffFPipeline(gw, {}).run(bc.frames, name, report);
        }
      }
      std::string outputs[2];
      for (int pass = 0; pass < 2; ++pass) {
        Gateway gw(GatewayConfig{}, std::make_shared<ReplayProvider>(ResponseCache(cache)), ResponseCache(cache));
        RunReport report;
        const ActionSequence actions = method == Method::df ? DfPipeline(gw, {}).run(bc.frames, name, report).actions
                                                            : DiffFPipeline(gw, {}).run(bc.frames, name, report).actions;
        outputs[pass] = serialize_prediction(actions, method);
        live_calls += report.stats.provider_calls;
        predictions[method == Method::df ? 0 : 1][name] = parse_prediction(outputs[pass]).sequence;
      }
      c.expect(!outputs[0].empty() && outputs[0] == outputs[1], name + "/" + m + " output differs between runs; ");
    }
  }
  c.expect(live_calls == 0, "replay made provider calls; ");
  std::string detail;
  for (int k = 0; k < 2; ++k) {
    const MetricsReport r = evaluate_dataset(truth, predictions[k], kDefaultMatchThreshold, embed);
    for (const auto& v : r.per_video) {
      c.expect(v.all.precision == 1.0 && v.all.recall == 1.0,
               v.video_id + (k == 0 ? "/df" : "/difff") + " not P_all=R_all=1; ");
    }
    detail += std::string(k == 0 ? "df" : "difff") + " P_all=" + std::to_string(r.overall.macro_all.precision) +
              " R_all=" + std::to_string(r.overall.macro_all.recall) + "; ";
  }
  const double elapsed = seconds_since(t0);
  c.expect(elapsed < kMaxEndToEndSeconds, "end-to-end too slow; ");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2fs, %zu provider calls on replay", elapsed, live_calls);
  return detail + buf;
}

std::string criterion_6(Check& c) {
  UIChangeRecord with_cursor;
  with_cursor.frame = 1;
  with_cursor.changed = true;
  with_cursor.new_cursor_shape = "hand";
  with_cursor.changes = {{"button", "style_change", "", "", ""}};
  UIChangeRecord style_only;
  style_only.frame = 2;
  style_only.changed = true;
  style_only.changes = {{"panel", "style_change", "", "", ""}};
  UIChangeRecord moved;
  moved.frame = 3;
  moved.changed = true;
  moved.changes = {{"document text", "move", "", "", ""}};
  const RecordIndex idx = index_records({with_cursor, style_only, moved});

  auto act = [](std::string verb, std::string element, std::string id) {
    return DiffFActionRecord{"App", std::move(element), std::move(verb), id, {{id, "r"}}};
  };
  const std::vector<DiffFActionRecord> input = {act("click", "valid click", "1_0"),
                                                act("click", "cursorless click", "2_0"),
                                                act("scroll", "unsupported scroll", "2_0"),
                                                act("scroll", "supported scroll", "3_0")};
  const auto out = rule_correct(input, idx);
  c.expect(out.size() == 2 && out[0].element == "valid click" && out[1].element == "supported scroll",
           "wrong survivors; ");
  std::string kept;
  for (const auto& a : out) kept += (kept.empty() ? "" : ", ") + a.element;
  return "kept: " + kept;
}

std::string criterion_7(Check& c) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> frames(1, 500);
  const WindowConfig cfg{10, 5};
  for (int s = 0; s < kWindowSamples; ++s) {
    const int n = frames(rng);
    const auto windows = make_windows(static_cast<std::size_t>(n), cfg);
    std::vector<int> covered(static_cast<std::size_t>(n), 0);
    for (std::size_t i = 0; i < windows.size(); ++i) {
      const Window& w = windows[i];
      c.expect(w.size() <= cfg.window_size && w.start >= 0 && w.end < n, "window out of range; ");
      for (int t = w.start; t <= w.end; ++t) ++covered[static_cast<std::size_t>(t)];
      if (i + 1 < windows.size()) {
        c.expect(windows[i + 1].start - w.start == cfg.window_size - cfg.overlap, "stride wrong; ");
        const bool last_pair = i + 2 == windows.size();
        const int shared = w.end - windows[i + 1].start + 1;
        c.expect(last_pair ? (shared >= 1 && shared <= cfg.overlap) : shared == cfg.overlap, "overlap wrong; ");
      }
    }
    c.expect(std::all_of(covered.begin(), covered.end(), [](int k) { return k >= 1; }), "uncovered frame; ");
  }
  return std::to_string(kWindowSamples) + " samples";
}

// ---------------------------------------------------------------------------
// Criterion 8: request streams with and without each toggle.

json df_op() {
  return {{"frame_idx", {2, 3}},
          {"operation_category", "click"},
          {"target_object", {{"category", "button"}, {"identifier", "Submit button"}}},
          {"application", {{"category", "Demo App"}, {"identifier", ""}}}};
}

std::shared_ptr<ScriptedProvider> generic_provider() {
  const std::string ops = "```json\n" + json{{"user_operations", {df_op()}}}.dump() + "\n```";
  const std::string descriptor =
      R"({"global_description": "app", "description": "button", "changed": true, "old_cursor_shape": "normal",
          "new_cursor_shape": "hand", "changes": [{"subject": "button", "type": "style_change", "old": "a", "new": "b", "message": "m"}]})";
  const std::string actions =
      R"([{"app": "Demo App", "element": "Submit button", "action": "click", "region": "4_0", "evidences": [["4_0", "cursor"]]}])";
  return testing_support::prefix_provider({{"df_proposer", ops},
                                           {"df_corrector", ops},
                                           {"df_merger", ops},
                                           {"difff_descriptor", descriptor},
                                           {"difff_proposer", actions},
                                           {"difff_corrector", actions}});
}

std::vector<RequestRecord> stream(const FrameSequence& frames, Method method, const std::function<void(RunConfig&)>& toggle) {
  RunConfig cfg;
  cfg.profile = "gemini-1.5-pro";
  toggle(cfg);
  Gateway gw(cfg.gateway_config(), generic_provider());
  RunReport report;
  if (method == Method::df) {
    DfPipeline(gw, cfg.df_options()).run(frames, "ablation", report);
  } else {
    DiffFPipeline(gw, cfg.difff_options()).run(frames, "ablation", report);
  }
  auto log = gw.request_log();
  std::sort(log.begin(), log.end(), [](const RequestRecord& a, const RequestRecord& b) { return a.tag < b.tag; });
  return log;
}

std::map<std::string, RequestRecord> by_tag(const std::vector<RequestRecord>& log) {
  std::map<std::string, RequestRecord> out;
  for (const auto& r : log) out.emplace(r.tag, r);
  return out;
}

bool has_stage(const std::vector<RequestRecord>& log, std::string_view stage) {
  return std::any_of(log.begin(), log.end(), [&](const RequestRecord& r) { return r.tag.starts_with(stage); });
}

std::string criterion_8(Check& c) {
  const FrameSequence df_frames =
      load_benchmark_case(testing_support::cases_dir() / "click" / "case.json", Rational(2)).frames;
  const FrameSequence diff_frames = testing_support::fixture_frames("click");
  const auto df_base = stream(df_frames, Method::df, [](RunConfig&) {});
  const auto diff_base = stream(diff_frames, Method::difff, [](RunConfig&) {});
  const auto df_base_tags = by_tag(df_base);
  const auto diff_base_tags = by_tag(diff_base);
  std::vector<std::string> verdicts;

  // --no-corrector: corrector requests vanish; proposer and descriptor requests unchanged.
  {
    const auto df = stream(df_frames, Method::df, [](RunConfig& r) { r.df.no_corrector = true; });
    const auto diff = stream(diff_frames, Method::difff, [](RunConfig& r) { r.difff.no_corrector = true; });
    bool ok = !has_stage(df, "df_corrector") && has_stage(df_base, "df_corrector") &&
              !has_stage(diff, "difff_corrector") && has_stage(diff_base, "difff_corrector");
    for (const auto& r : df) {
      if (r.tag.starts_with("df_proposer")) ok = ok && df_base_tags.at(r.tag).key == r.key;
    }
    for (const auto& r : diff) {
      if (!r.tag.starts_with("difff_corrector")) ok = ok && diff_base_tags.at(r.tag).key == r.key;
    }
    c.expect(ok, "--no-corrector touched other requests; ");
    verdicts.push_back(std::string("no-corrector ") + (ok ? "ok" : "BAD"));
  }
  // --no-sliding-window: one proposer request carrying every frame in order, no merger.
  {
    const auto df = stream(df_frames, Method::df, [](RunConfig& r) { r.df.no_sliding_window = true; });
    std::vector<std::string> proposers;
    std::vector<std::string> all_digests;
    for (const auto& r : df) {
      if (r.tag.starts_with("df_proposer")) proposers.push_back(r.tag);
    }
    std::vector<std::string> base_window_digests;
    for (const auto& [tag, r] : df_base_tags) {
      if (tag == "df_proposer:0-9") base_window_digests = r.image_digests;
    }
    const auto single = by_tag(df).at("df_proposer:0-19");
    const bool ok = proposers == std::vector<std::string>{"df_proposer:0-19"} && !has_stage(df, "df_merger") &&
                    has_stage(df_base, "df_merger") && single.images == df_frames.size() &&
                    std::equal(base_window_digests.begin(), base_window_digests.end(), single.image_digests.begin()) &&
                    single.text_digest != df_base_tags.at("df_proposer:0-9").text_digest;
    c.expect(ok, "--no-sliding-window request stream wrong; ");
    verdicts.push_back(std::string("no-sliding-window ") + (ok ? "ok" : "BAD"));
  }
  // --annotate-regions: same requests; proposer images differ exactly on frames with regions.
  {
    const auto df = stream(df_frames, Method::df, [](RunConfig& r) { r.df.annotate_regions = true; });
    bool ok = df.size() == df_base.size();
    std::set<std::size_t> changed_frames;
    for (std::size_t t = 1; t < df_frames.size(); ++t) {
      if (!localize(df_frames[t - 1].pixels, df_frames[t].pixels, {}, static_cast<int>(t)).empty()) {
        changed_frames.insert(t);
      }
    }
    for (const auto& r : df) {
      const auto& base = df_base_tags.at(r.tag);
      if (!r.tag.starts_with("df_proposer")) {
        ok = ok && base.key == r.key;
        continue;
      }
      ok = ok && base.text_digest == r.text_digest && r.images == base.images;
      const int start = std::stoi(r.tag.substr(r.tag.find(':') + 1));
      for (std::size_t k = 0; k < r.image_digests.size(); ++k) {
        const bool differs = r.image_digests[k] != base.image_digests[k];
        ok = ok && differs == (changed_frames.count(static_cast<std::size_t>(start) + k) > 0);
      }
    }
    ok = ok && !changed_frames.empty();
    c.expect(ok, "--annotate-regions changed more than the boxed frames; ");
    verdicts.push_back(std::string("annotate-regions ") + (ok ? "ok" : "BAD") + " (" +
                       std::to_string(changed_frames.size()) + " boxed frames)");
  }
  // --frames-to-proposer: descriptors unchanged; the proposer gains all n frames, same text.
  {
    const auto diff = stream(diff_frames, Method::difff, [](RunConfig& r) { r.difff.frames_to_proposer = true; });
    const auto tags = by_tag(diff);
    bool ok = diff.size() == diff_base.size();
    for (const auto& r : diff) {
      if (r.tag.starts_with("difff_descriptor")) ok = ok && diff_base_tags.at(r.tag).key == r.key;
    }
    const auto& proposer = tags.at("difff_proposer");
    const auto& base_proposer = diff_base_tags.at("difff_proposer");
    ok = ok && proposer.images == diff_frames.size() && base_proposer.images == 0 &&
         proposer.text_digest == base_proposer.text_digest;
    c.expect(ok, "--frames-to-proposer request stream wrong; ");
    verdicts.push_back(std::string("frames-to-proposer ") + (ok ? "ok" : "BAD"));
  }
  std::string out;
  for (const auto& v : verdicts) out += (out.empty() ? "" : "; ") + v;
  return out;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<std::string(Check&)>>> criteria = {
      {"localizer synthetic suite", criterion_1},
      {"localizer matches flood-fill oracle", criterion_2},
      {"greedy matching vs reference and maximum matching", criterion_3},
      {"metric anchor P=R=0.5", criterion_4},
      {"end-to-end replay determinism", criterion_5},
      {"rule corrector", criterion_6},
      {"window coverage and overlap", criterion_7},
      {"ablation toggles by request-stream diff", criterion_8},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check check;
    std::string detail;
    try {
      detail = criteria[i].second(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const std::string why = check.why.str();
    std::cout << (check.ok ? "PASS" : "FAIL") << " criterion " << (i + 1) << ": " << criteria[i].first << " ["
              << detail << (why.empty() ? "" : " | " + why) << "]\n";
    if (!check.ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
