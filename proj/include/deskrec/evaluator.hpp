#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "deskrec/action.hpp"
#include "deskrec/embedding.hpp"

namespace deskrec {

inline constexpr double kDefaultMatchThreshold = 0.7;

// Rows are predictions, columns ground truth.
struct BinaryMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> cells;

  BinaryMatrix() = default;
  BinaryMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), cells(r * c, 0) {}
  static BinaryMatrix from_rows(const std::vector<std::vector<int>>& rows);

  std::uint8_t at(std::size_t i, std::size_t j) const { return cells[i * cols + j]; }
  void set(std::size_t i, std::size_t j, bool v) { cells[i * cols + j] = v ? 1 : 0; }
  friend bool operator==(const BinaryMatrix&, const BinaryMatrix&) = default;
};

struct SimilarityMatrices {
  BinaryMatrix s_o;
  BinaryMatrix s_d;
  BinaryMatrix s_c;
  BinaryMatrix s;  // elementwise product
};

// s_o by exact operation match; s_d and s_c by cosine >= threshold.
SimilarityMatrices similarity_matrices(const ActionSequence& pred, const ActionSequence& gt,
                                       double threshold, EmbeddingBackend& embed);

struct MatchResult {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (pred i, gt j)
  std::size_t m = 0;
  std::vector<bool> matched;  // per prediction
};

// Ground truth in order; each takes the first unmatched prediction it is similar to.
MatchResult greedy_match(const BinaryMatrix& s);

// Maximum bipartite matching size (augmenting paths). Error(SizeLimit) above 12x12.
std::size_t brute_force_match_oracle(const BinaryMatrix& s);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

// 0/0 conventions: both empty -> (1, 1); no predictions -> P=1, R=0; no ground truth -> P=0, R=1.
PrecisionRecall compute_metrics(std::size_t m, std::size_t p_len, std::size_t g_len);

enum class EvalMode { all, operation };

struct VideoMetrics {
  std::string video_id;
  std::string domain;
  std::size_t p_len = 0;
  std::size_t g_len = 0;
  std::size_t m_all = 0;
  std::size_t m_op = 0;
  PrecisionRecall all;
  PrecisionRecall op;
  bool missing_prediction = false;
};

PrecisionRecall evaluate_case(const ActionSequence& pred, const ActionSequence& gt,
                              double threshold, EvalMode mode, EmbeddingBackend& embed);
VideoMetrics evaluate_video(const ActionSequence& pred, const ActionSequence& gt,
                            double threshold, EmbeddingBackend& embed);

struct AggregateMetrics {
  std::size_t videos = 0;
  PrecisionRecall macro_all, macro_op;  // unweighted means over videos
  PrecisionRecall micro_all, micro_op;  // from summed matches and lengths
};

struct MetricsReport {
  double threshold = kDefaultMatchThreshold;
  std::string embedding;
  std::vector<VideoMetrics> per_video;
  std::map<std::string, AggregateMetrics> per_domain;
  AggregateMetrics overall;
  std::vector<std::string> missing_predictions;

  nlohmann::json to_json() const;
  // Rows: every domain then the overall line; columns Recall/Precision x Operation/All.
  std::string table() const;
};

// Error(EmptyDataset) for an empty list.
MetricsReport aggregate_dataset(std::vector<VideoMetrics> per_video);

// Scores every ground-truth case; a missing prediction counts as an empty sequence and is
// listed in the report.
MetricsReport evaluate_dataset(const std::vector<GroundTruthCase>& truth,
                               const std::map<std::string, ActionSequence>& predictions,
                               double threshold, EmbeddingBackend& embed);

// Corpus directory with index.json, or a flat directory of ground-truth files.
std::vector<GroundTruthCase> load_ground_truth_dir(const std::filesystem::path& dir);
// Prediction files (*.json) keyed by their video_id.
std::map<std::string, ActionSequence> load_prediction_dir(const std::filesystem::path& dir);

}  // namespace deskrec
