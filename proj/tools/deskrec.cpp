// deskrec: extract user action sequences from desktop recordings, score them, and
// inspect the pieces in between.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "deskrec/config.hpp"
#include "deskrec/embedding.hpp"
#include "deskrec/error.hpp"
#include "deskrec/evaluator.hpp"
#include "deskrec/gateway.hpp"
#include "deskrec/ingest.hpp"
#include "deskrec/localizer.hpp"
#include "deskrec/pipeline_df.hpp"
#include "deskrec/pipeline_difff.hpp"
#include "deskrec/run_report.hpp"

namespace fs = std::filesystem;
using namespace deskrec;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kPipelineFailure = 2;

int exit_code(Errc code) {
  switch (code) {
    case Errc::RunFailed:
    case Errc::WindowFailed:
    case Errc::ProviderError:
    case Errc::ImageLimitExceeded:
    case Errc::CacheCorrupt:
    case Errc::NoJsonFound:
    case Errc::ParseError:
    case Errc::EmbeddingFailure:
      return kPipelineFailure;
    default:
      return kUsage;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const json& value) { write_text(path, value.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::SchemaError, path.string() + ": " + e.what());
  }
}

struct ExtractArgs {
  std::string config_file;
  std::string method;
  std::string frames;
  std::string case_file;
  std::string fps;
  int window = 0;
  int overlap = 0;
  std::string model;
  bool no_corrector = false;
  bool no_sliding_window = false;
  bool annotate_regions = false;
  bool frames_to_proposer = false;
  std::string corrector_mode;
  std::string out = "actions.json";
  std::string report;
  std::string cache;
  bool no_cache = false;
  std::string provider = "live";
  std::string transcript;
  std::string dump_dir;
  std::string video_id;
  int parallelism = 0;
};

std::shared_ptr<ChatProvider> make_provider(const ExtractArgs& a, const fs::path& cache_dir) {
  if (a.provider == "live") return LiveProvider::from_env();
  if (a.provider == "replay") return std::make_shared<ReplayProvider>(ResponseCache(cache_dir));
  if (a.provider == "scripted") {
    if (a.transcript.empty()) throw Error(Errc::InvalidConfig, "--provider scripted needs --transcript");
    return ScriptedProvider::from_transcript(read_json(a.transcript));
  }
  throw Error(Errc::InvalidConfig, "unknown provider \"" + a.provider + "\"");
}

int cmd_extract(const ExtractArgs& a, const CLI::App& sub) {
  auto given = [&](const char* name) { return sub.count(name) > 0; };
  RunConfig cfg = a.config_file.empty() ? RunConfig{} : load_config(a.config_file);
  if (given("--method")) cfg.method = parse_method(a.method);
  if (given("--fps")) apply_setting(cfg, "", "fps", a.fps);
  if (given("--window")) cfg.window.window_size = a.window;
  if (given("--overlap")) cfg.window.overlap = a.overlap;
  if (given("--model")) cfg.profile = a.model;
  if (given("--cache")) cfg.cache_dir = a.cache;
  if (given("--parallelism")) apply_setting(cfg, "", "parallelism", std::to_string(a.parallelism));
  if (a.no_corrector) cfg.df.no_corrector = cfg.difff.no_corrector = true;
  if (a.no_sliding_window) cfg.df.no_sliding_window = true;
  if (a.annotate_regions) cfg.df.annotate_regions = true;
  if (a.frames_to_proposer) cfg.difff.frames_to_proposer = true;
  if (given("--corrector-mode")) cfg.corrector_mode = parse_corrector_mode(a.corrector_mode);

  if (a.frames.empty() == a.case_file.empty()) {
    throw Error(Errc::InvalidConfig, "give exactly one of --frames or --case");
  }
  std::string video_id = a.video_id;
  FrameSequence frames;
  if (!a.frames.empty()) {
    const RawFrameList raw = load_frame_dir(a.frames);
    frames = sample_frames(raw, {cfg.fps, raw.meta.source_fps}, cfg.parallelism);
    if (video_id.empty()) video_id = fs::path(a.frames).lexically_normal().filename().string();
    if (video_id.empty()) video_id = fs::absolute(a.frames).parent_path().filename().string();
  } else {
    BenchmarkCase bc = load_benchmark_case(a.case_file, cfg.fps, cfg.parallelism);
    frames = std::move(bc.frames);
    if (video_id.empty()) video_id = bc.truth.video_id;
  }

  std::optional<ResponseCache> cache;
  if (!a.no_cache) cache.emplace(cfg.cache_dir);
  Gateway gateway(cfg.gateway_config(), make_provider(a, cfg.cache_dir), cache);

  RunReport report;
  report.config = cfg.to_json();
  report.config["provider"] = a.provider;
  const fs::path report_path = a.report.empty() ? fs::path(a.out).replace_extension(".report.json")
                                                : fs::path(a.report);
  int status = kOk;
  try {
    ActionSequence actions;
    if (cfg.method == Method::df) {
      DfPipeline pipeline(gateway, cfg.df_options());
      DfResult r = pipeline.run(frames, video_id, report);
      actions = std::move(r.actions);
      if (!a.dump_dir.empty()) {
        json windows = json::array();
        for (const auto& w : r.windows) {
          json proposed = json::array(), corrected = json::array();
          for (const auto& p : w.proposed) proposed.push_back(p.to_json());
          for (const auto& c : w.corrected) corrected.push_back(c.to_json());
          windows.push_back({{"start", w.window.start}, {"end", w.window.end}, {"failed", w.failed},
                             {"proposed", proposed}, {"corrected", corrected}});
        }
        json merged = json::array();
        for (const auto& m : r.merged) merged.push_back(m.to_json());
        write_json(fs::path(a.dump_dir) / "windows.json", windows);
        write_json(fs::path(a.dump_dir) / "merged.json", merged);
      }
    } else {
      DiffFPipeline pipeline(gateway, cfg.difff_options());
      DiffFResult r = pipeline.run(frames, video_id, report);
      actions = std::move(r.actions);
      if (!a.dump_dir.empty()) {
        const fs::path dir = a.dump_dir;
        write_json(dir / "regions.json", regions_to_json(r.regions));
        json changes = json::array(), proposed = json::array(), corrected = json::array();
        for (const auto& c : r.records) changes.push_back(c.to_json());
        for (const auto& p : r.proposed) proposed.push_back(p.to_json());
        for (const auto& c : r.corrected) corrected.push_back(c.to_json());
        write_json(dir / "changes.json", changes);
        write_json(dir / "proposed.json", proposed);
        write_json(dir / "corrected.json", corrected);
      }
    }
    write_text(a.out, serialize_prediction(actions, cfg.method));
    std::cerr << "wrote " << actions.size() << " actions to " << a.out << "\n";
  } catch (const Error& e) {
    report.status = "failed";
    if (report.error.empty()) report.error = e.what();
    report.capture(gateway);
    status = exit_code(e.code());
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
  }
  write_json(report_path, report.to_json());
  return status;
}

struct EvaluateArgs {
  std::string pred;
  std::string gt;
  double threshold = kDefaultMatchThreshold;
  std::string embed = "stub";
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a) {
  std::unique_ptr<EmbeddingBackend> backend;
  if (a.embed == "stub") {
    backend = std::make_unique<StubEmbedding>();
  } else if (a.embed == "remote") {
    backend = RemoteEmbedding::from_env();
  } else {
    throw Error(Errc::InvalidConfig, "--embed must be stub or remote");
  }
  const auto truth = load_ground_truth_dir(a.gt);
  const auto predictions = load_prediction_dir(a.pred);
  const MetricsReport report = evaluate_dataset(truth, predictions, a.threshold, *backend);
  for (const auto& id : report.missing_predictions) {
    std::cerr << "warning: no prediction for " << id << "; scored as empty\n";
  }
  if (!a.out.empty()) write_json(a.out, report.to_json());
  std::cout << report.table();
  return kOk;
}

struct DiffArgs {
  std::string prev;
  std::string curr;
  std::string out;
  std::string render_dir;
  int frame = 1;
  LocalizerParams params;
};

int cmd_diff(const DiffArgs& a) {
  a.params.validate();
  const Image prev = read_png(a.prev);
  const Image curr = read_png(a.curr);
  const auto regions = localize(prev, curr, a.params, a.frame);
  const std::string text = regions_to_json(regions).dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_text(a.out, text);
  }
  if (!a.render_dir.empty()) {
    const fs::path dir = a.render_dir;
    fs::create_directories(dir);
    for (const auto& r : regions) {
      write_png(dir / ("annotated_" + r.id() + ".png"), annotate_screenshot(curr, r));
      write_png(dir / ("comparison_" + r.id() + ".png"), render_region_comparison(prev, curr, r));
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Extract user action sequences from desktop screen recordings."};
  app.require_subcommand(1);
  app.set_version_flag("--version", "deskrec 0.1.0");

  ExtractArgs ex;
  CLI::App* extract = app.add_subcommand("extract", "Run the DF or DiffF pipeline on one recording");
  extract->add_option("--config", ex.config_file, "Config file (key = value)")->check(CLI::ExistingFile);
  extract->add_option("--method", ex.method, "df or difff")->check(CLI::IsMember({"df", "difff"}));
  extract->add_option("--frames", ex.frames, "Directory of frame_NNNNNN.png files with meta.json");
  extract->add_option("--case", ex.case_file, "Ground-truth case file whose frame_dir is used");
  extract->add_option("--fps", ex.fps, "Sampling rate (default 1)");
  extract->add_option("--window", ex.window, "DF window size (default 10)");
  extract->add_option("--overlap", ex.overlap, "DF window overlap (default 5)");
  extract->add_option("--model", ex.model, "Model profile (default gpt-4o)");
  extract->add_flag("--no-corrector", ex.no_corrector, "Skip the Action Corrector");
  extract->add_flag("--no-sliding-window", ex.no_sliding_window, "DF: one window over all frames");
  extract->add_flag("--annotate-regions", ex.annotate_regions, "DF: draw changed-region boxes on frames");
  extract->add_flag("--frames-to-proposer", ex.frames_to_proposer, "DiffF: attach all frames to the proposer");
  extract->add_option("--corrector-mode", ex.corrector_mode, "DiffF: follow-up, per-task or fresh")
      ->check(CLI::IsMember({"follow-up", "per-task", "fresh"}));
  extract->add_option("--out", ex.out, "Prediction file")->capture_default_str();
  extract->add_option("--report", ex.report,
                     "Run report (default: --out with its extension replaced by .report.json)");
  extract->add_option("--cache", ex.cache, "Response cache directory (default cache)");
  extract->add_flag("--no-cache", ex.no_cache, "Do not read or write the response cache");
  extract->add_option("--provider", ex.provider, "live, replay or scripted")
      ->check(CLI::IsMember({"live", "replay", "scripted"}))
      ->capture_default_str();
  extract->add_option("--transcript", ex.transcript, "Scripted provider transcript")->check(CLI::ExistingFile);
  extract->add_option("--dump-dir", ex.dump_dir, "Write intermediate artifacts here");
  extract->add_option("--video-id", ex.video_id, "Id written into the prediction");
  extract->add_option("--parallelism", ex.parallelism, "Concurrent VLM requests (default 4)");

  EvaluateArgs ev;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score predictions against ground truth");
  evaluate->add_option("--pred", ev.pred, "Directory of prediction files")->required();
  evaluate->add_option("--gt", ev.gt, "Corpus directory or directory of ground-truth files")->required();
  evaluate->add_option("--threshold", ev.threshold, "Cosine threshold for detail/context")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  evaluate->add_option("--embed", ev.embed, "stub or remote")
      ->check(CLI::IsMember({"stub", "remote"}))
      ->capture_default_str();
  evaluate->add_option("--out", ev.out, "Metrics report file");

  DiffArgs df;
  CLI::App* diff = app.add_subcommand("diff", "Localize changed regions between two frames");
  diff->add_option("prev", df.prev, "Previous frame (PNG)")->required()->check(CLI::ExistingFile);
  diff->add_option("curr", df.curr, "Current frame (PNG)")->required()->check(CLI::ExistingFile);
  diff->add_option("--out", df.out, "regions.json (default stdout)");
  diff->add_option("--render", df.render_dir, "Write annotated and comparison PNGs here");
  diff->add_option("--frame", df.frame, "Frame number used in region ids")->capture_default_str();
  diff->add_option("--blur-kernel", df.params.blur_kernel)->capture_default_str();
  diff->add_option("--blur-sigma", df.params.blur_sigma)->capture_default_str();
  diff->add_option("--threshold", df.params.diff_threshold)->capture_default_str();
  diff->add_option("--min-area", df.params.min_area_px)->capture_default_str();
  diff->add_option("--expand", df.params.expand_px)->capture_default_str();

  std::string cache_dir = "cache";
  int older_than = -1;
  CLI::App* cache = app.add_subcommand("cache", "Inspect or prune the response cache");
  cache->require_subcommand(1);
  CLI::App* inspect = cache->add_subcommand("inspect", "Count entries and verify digests");
  inspect->add_option("--cache", cache_dir)->capture_default_str();
  CLI::App* prune = cache->add_subcommand("prune", "Remove corrupt (and optionally old) entries");
  prune->add_option("--cache", cache_dir)->capture_default_str();
  prune->add_option("--older-than-hours", older_than, "Also remove entries older than this");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*extract) return cmd_extract(ex, *extract);
    if (*evaluate) return cmd_evaluate(ev);
    if (*diff) return cmd_diff(df);
    if (*inspect) {
      const auto s = ResponseCache(cache_dir).inspect();
      std::cout << json{{"entries", s.entries}, {"corrupt", s.corrupt}, {"bytes", s.bytes},
                        {"corrupt_keys", s.corrupt_keys}}
                       .dump(2)
                << "\n";
      return s.corrupt == 0 ? kOk : kPipelineFailure;
    }
    if (*prune) {
      std::optional<std::chrono::hours> age;
      if (older_than >= 0) age = std::chrono::hours(older_than);
      std::cout << "removed " << ResponseCache(cache_dir).prune(age) << " entries\n";
      return kOk;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
