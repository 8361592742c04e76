#include "deskrec/pipeline_df.hpp"

#include "deskrec/error.hpp"
#include "deskrec/parallel.hpp"
#include "deskrec/prompts.hpp"

namespace deskrec {

namespace {

void require_operations_array(const json& value) {
  if (value.is_array()) return;
  if (value.is_object()) {
    auto it = value.find("user_operations");
    if (it != value.end() && it->is_array()) return;
  }
  throw Error(Errc::SchemaError, "expected an object with a \"user_operations\" array");
}

json operations_json(const std::vector<DfOperationRecord>& records) {
  json ops = json::array();
  for (const auto& r : records) ops.push_back(r.to_json());
  return ops;
}

bool recoverable(Errc code) {
  return code == Errc::ParseError || code == Errc::NoJsonFound || code == Errc::ProviderError;
}

}  // namespace

void WindowConfig::validate() const {
  if (window_size <= 0 || overlap <= 0 || overlap >= window_size) {
    throw Error(Errc::InvalidConfig, "window needs 0 < overlap < size (got size " +
                                         std::to_string(window_size) + ", overlap " +
                                         std::to_string(overlap) + ")");
  }
}

std::vector<Window> make_windows(std::size_t n, const WindowConfig& cfg) {
  cfg.validate();
  if (n == 0) throw Error(Errc::InvalidConfig, "no frames to window");
  const int count = static_cast<int>(n);
  const int stride = cfg.window_size - cfg.overlap;
  std::vector<Window> out;
  for (int start = 0; start < count; start += stride) {
    Window w{start, std::min(start + cfg.window_size, count) - 1};
    if (!out.empty() && out.back().end >= w.end) continue;
    out.push_back(w);
  }
  return out;
}

std::vector<DfOperationRecord> parse_user_operations(const json& value,
                                                     std::vector<std::string>* dropped) {
  require_operations_array(value);
  const json& ops = value.is_array() ? value : value.at("user_operations");
  std::vector<DfOperationRecord> out;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    try {
      out.push_back(DfOperationRecord::from_json(ops[i]));
    } catch (const Error& e) {
      if (dropped) dropped->push_back("operation " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

DfPipeline::DfPipeline(Gateway& gateway, DfOptions options)
    : gateway_(gateway), options_(std::move(options)) {
  options_.window.validate();
  options_.localizer.validate();
}

std::vector<Image> DfPipeline::prepare_frames(const FrameSequence& frames) const {
  std::vector<Image> out(frames.size());
  parallel_for(frames.size(), gateway_.config().parallelism, [&](std::size_t t) {
    out[t] = frames[t].pixels;
    if (!options_.ablations.annotate_regions || t == 0) return;
    for (const auto& region : localize(frames[t - 1].pixels, frames[t].pixels,
                                       options_.localizer, static_cast<int>(t))) {
      draw_rect(out[t], region.bbox, kRed, 2);
    }
  });
  return out;
}

std::vector<DfOperationRecord> DfPipeline::propose_window(
    const std::vector<std::shared_ptr<const ImagePayload>>& pngs, const Window& window,
    RunReport& report) {
  ChatRequest request = gateway_.new_request("df_proposer:" + window.label());
  ChatMessage message{"user", {ContentPart::text_part(std::string(prompt(PromptName::df_proposer).text))}};
  message.parts.push_back(ContentPart::text_part(
      "<Video>: " + std::to_string(window.size()) + " frames in chronological order."));
  for (int t = window.start; t <= window.end; ++t) {
    message.parts.push_back(ContentPart{{}, pngs[static_cast<std::size_t>(t)]});
  }
  request.messages.push_back(std::move(message));

  JsonReply reply;
  try {
    reply = ask_json(gateway_, std::move(request), require_operations_array);
  } catch (const Error& e) {
    if (!recoverable(e.code())) throw;
    report.unit("df_proposer", window.label(), "failed", 2, e.what());
    throw Error(Errc::WindowFailed, "window " + window.label() + ": " + e.what());
  }
  std::vector<std::string> dropped;
  auto records = parse_user_operations(reply.value, &dropped);
  for (const auto& d : dropped) report.flag("df_proposer", window.label(), "dropped " + d);
  report.unit("df_proposer", window.label(), "ok", reply.attempts);
  return records;
}

std::vector<DfOperationRecord> DfPipeline::correct(const std::vector<DfOperationRecord>& records,
                                                   const Window& window, RunReport& report) {
  if (options_.ablations.no_corrector) return records;
  if (records.empty()) {
    report.unit("df_corrector", window.label(), "skipped", 0, "no operations");
    return records;
  }
  ChatRequest request = gateway_.new_request("df_corrector:" + window.label());
  request.messages.push_back(
      {"user",
       {ContentPart::text_part(std::string(prompt(PromptName::df_corrector).text)),
        ContentPart::text_part(json{{"user_operations", operations_json(records)}}.dump(2))}});
  try {
    JsonReply reply = ask_json(gateway_, std::move(request), require_operations_array);
    std::vector<std::string> dropped;
    auto corrected = parse_user_operations(reply.value, &dropped);
    for (const auto& d : dropped) report.flag("df_corrector", window.label(), "dropped " + d);
    report.unit("df_corrector", window.label(), "ok", reply.attempts);
    return corrected;
  } catch (const Error& e) {
    if (!recoverable(e.code())) throw;
    report.unit("df_corrector", window.label(), "fallback", 2, e.what());
    report.flag("df_corrector", window.label(), "corrector failed; proposer output kept");
    return records;
  }
}

std::vector<DfOperationRecord> DfPipeline::merge(const std::vector<DfWindowResult>& windows,
                                                 RunReport& report) {
  std::vector<DfOperationRecord> concatenated;
  json annotated = json::array();
  std::size_t live = 0;
  bool any_records = false;
  for (const auto& w : windows) {
    if (w.failed) continue;
    ++live;
    any_records = any_records || !w.corrected.empty();
    concatenated.insert(concatenated.end(), w.corrected.begin(), w.corrected.end());
    // Window ranges are given 1-based, matching how the proposer numbers frames.
    annotated.push_back({{"start_frame", w.window.start + 1},
                         {"end_frame", w.window.end + 1},
                         {"user_operations", operations_json(w.corrected)}});
  }
  if (live <= 1 || options_.ablations.no_sliding_window || !any_records) {
    return concatenated;
  }
  ChatRequest request = gateway_.new_request("df_merger");
  request.messages.push_back(
      {"user",
       {ContentPart::text_part(std::string(prompt(PromptName::df_merger).text)),
        ContentPart::text_part(annotated.dump(2))}});
  try {
    JsonReply reply = ask_json(gateway_, std::move(request), require_operations_array);
    std::vector<std::string> dropped;
    auto merged = parse_user_operations(reply.value, &dropped);
    for (const auto& d : dropped) report.flag("df_merger", "all", "dropped " + d);
    report.unit("df_merger", "all", "ok", reply.attempts);
    return merged;
  } catch (const Error& e) {
    if (!recoverable(e.code())) throw;
    report.unit("df_merger", "all", "fallback", 2, e.what());
    report.flag("df_merger", "all", "merger failed; windows concatenated in order");
    return concatenated;
  }
}

DfResult DfPipeline::run(const FrameSequence& frames, const std::string& video_id,
                         RunReport& report) {
  report.video_id = video_id;
  report.method = "df";
  if (frames.empty()) throw Error(Errc::InvalidConfig, "no frames");

  const std::vector<Window> windows =
      options_.ablations.no_sliding_window
          ? std::vector<Window>{{0, static_cast<int>(frames.size()) - 1}}
          : make_windows(frames.size(), options_.window);
  for (const auto& w : windows) {
    if (w.size() > gateway_.profile().image_limit) {
      throw Error(Errc::ImageLimitExceeded,
                  "window " + w.label() + " holds " + std::to_string(w.size()) +
                      " frames; " + gateway_.profile().name + " accepts " +
                      std::to_string(gateway_.profile().image_limit));
    }
  }

  const std::vector<Image> prepared = prepare_frames(frames);
  std::vector<std::shared_ptr<const ImagePayload>> pngs(prepared.size());
  parallel_for(prepared.size(), gateway_.config().parallelism, [&](std::size_t t) {
    pngs[t] = std::make_shared<const ImagePayload>(ImagePayload{"image/png", encode_png(prepared[t])});
  });

  // Each window gets its own report so units land in window order regardless of
  // which thread finishes first.
  DfResult result;
  result.windows.resize(windows.size());
  std::vector<RunReport> partial(windows.size());
  parallel_for(windows.size(), gateway_.config().parallelism, [&](std::size_t i) {
    DfWindowResult& out = result.windows[i];
    out.window = windows[i];
    try {
      out.proposed = propose_window(pngs, windows[i], partial[i]);
    } catch (const Error& e) {
      if (e.code() != Errc::WindowFailed) throw;
      out.failed = true;
      return;
    }
    out.corrected = correct(out.proposed, windows[i], partial[i]);
  });
  for (auto& p : partial) {
    report.units.insert(report.units.end(), p.units.begin(), p.units.end());
    report.flags.insert(report.flags.end(), p.flags.begin(), p.flags.end());
  }
  const bool all_failed = std::all_of(result.windows.begin(), result.windows.end(),
                                      [](const DfWindowResult& w) { return w.failed; });
  if (all_failed) {
    report.status = "failed";
    report.error = "all " + std::to_string(windows.size()) + " windows failed";
    report.capture(gateway_);
    throw Error(Errc::RunFailed, report.error);
  }

  result.merged = merge(result.windows, report);
  result.actions.video_id = video_id;
  for (std::size_t i = 0; i < result.merged.size(); ++i) {
    try {
      result.actions.actions.push_back(normalize_df_operation(result.merged[i]));
    } catch (const Error& e) {
      report.flag("normalize", std::to_string(i), std::string("dropped: ") + e.what());
    }
  }
  report.capture(gateway_);
  return result;
}

}  // namespace deskrec
