#pragma once

#include <string>
#include <vector>

#include "deskrec/action.hpp"
#include "deskrec/gateway.hpp"
#include "deskrec/ingest.hpp"
#include "deskrec/localizer.hpp"
#include "deskrec/run_report.hpp"

namespace deskrec {

struct WindowConfig {
  int window_size = 10;
  int overlap = 5;

  void validate() const;  // Error(InvalidConfig) unless 0 < overlap < window_size
};

// Inclusive range of sample indices.
struct Window {
  int start = 0;
  int end = 0;

  int size() const { return end - start + 1; }
  std::string label() const { return std::to_string(start) + "-" + std::to_string(end); }
  friend bool operator==(const Window&, const Window&) = default;
};

// Starts at 0, w-o, 2(w-o), ... while start < n; each window is clipped to n and
// windows contained in an earlier one are dropped.
std::vector<Window> make_windows(std::size_t n, const WindowConfig& cfg);

struct DfAblations {
  bool no_corrector = false;
  bool no_sliding_window = false;
  bool annotate_regions = false;  // red boxes around changed regions on frames t >= 1
};

struct DfOptions {
  WindowConfig window;
  DfAblations ablations;
  LocalizerParams localizer;
};

struct DfWindowResult {
  Window window;
  bool failed = false;
  std::vector<DfOperationRecord> proposed;
  std::vector<DfOperationRecord> corrected;
};

struct DfResult {
  ActionSequence actions;
  std::vector<DfWindowResult> windows;
  std::vector<DfOperationRecord> merged;
};

class DfPipeline {
 public:
  DfPipeline(Gateway& gateway, DfOptions options);

  // Frames as they are sent to the proposer (annotated under the ablation).
  std::vector<Image> prepare_frames(const FrameSequence& frames) const;

  // Error(WindowFailed) when the reply cannot be parsed after the re-prompt.
  std::vector<DfOperationRecord> propose_window(
      const std::vector<std::shared_ptr<const ImagePayload>>& pngs, const Window& window,
      RunReport& report);
  // Text-only pass; on failure the input comes back unchanged and is flagged.
  std::vector<DfOperationRecord> correct(const std::vector<DfOperationRecord>& records,
                                         const Window& window, RunReport& report);
  // Single window or no-sliding-window: concatenation without a call. On failure the
  // order-preserving concatenation is returned and flagged.
  std::vector<DfOperationRecord> merge(const std::vector<DfWindowResult>& windows,
                                       RunReport& report);

  // Error(RunFailed) when every window fails. `report` is filled either way.
  DfResult run(const FrameSequence& frames, const std::string& video_id, RunReport& report);

  const DfOptions& options() const { return options_; }

 private:
  Gateway& gateway_;
  DfOptions options_;
};

// Parses the "user_operations" array; entries that fail the record schema are dropped
// and described in `dropped`.
std::vector<DfOperationRecord> parse_user_operations(const json& value,
                                                     std::vector<std::string>* dropped = nullptr);

}  // namespace deskrec
