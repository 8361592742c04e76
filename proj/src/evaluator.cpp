#include "deskrec/evaluator.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <sstream>

#include "deskrec/error.hpp"
#include "deskrec/ingest.hpp"

namespace deskrec {

namespace fs = std::filesystem;

BinaryMatrix BinaryMatrix::from_rows(const std::vector<std::vector<int>>& rows) {
  BinaryMatrix out(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != out.cols) throw std::invalid_argument("ragged matrix");
    for (std::size_t j = 0; j < out.cols; ++j) out.set(i, j, rows[i][j] != 0);
  }
  return out;
}

SimilarityMatrices similarity_matrices(const ActionSequence& pred, const ActionSequence& gt,
                                       double threshold, EmbeddingBackend& embed) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw Error(Errc::InvalidConfig, "threshold must be in (0, 1]");
  }
  std::map<std::string, EmbeddingVector> memo;
  auto vec = [&](const std::string& text) -> const EmbeddingVector& {
    auto it = memo.find(text);
    if (it == memo.end()) it = memo.emplace(text, embed.embed(text)).first;
    return it->second;
  };
  const std::size_t p = pred.size(), g = gt.size();
  SimilarityMatrices out{BinaryMatrix(p, g), BinaryMatrix(p, g), BinaryMatrix(p, g),
                         BinaryMatrix(p, g)};
  for (std::size_t i = 0; i < p; ++i) {
    const Action& a = pred.actions[i];
    for (std::size_t j = 0; j < g; ++j) {
      const Action& b = gt.actions[j];
      const bool so = a.operation == b.operation;
      const bool sd = cosine(vec(a.detail), vec(b.detail)) >= threshold;
      const bool sc = cosine(vec(a.context), vec(b.context)) >= threshold;
      out.s_o.set(i, j, so);
      out.s_d.set(i, j, sd);
      out.s_c.set(i, j, sc);
      out.s.set(i, j, so && sd && sc);
    }
  }
  return out;
}

MatchResult greedy_match(const BinaryMatrix& s) {
  MatchResult r;
  r.matched.assign(s.rows, false);
  for (std::size_t j = 0; j < s.cols; ++j) {
    for (std::size_t i = 0; i < s.rows; ++i) {
      if (s.at(i, j) && !r.matched[i]) {
        r.matched[i] = true;
        r.pairs.emplace_back(i, j);
        ++r.m;
        break;
      }
    }
  }
  return r;
}

std::size_t brute_force_match_oracle(const BinaryMatrix& s) {
  constexpr std::size_t kMax = 12;
  if (s.rows > kMax || s.cols > kMax) {
    throw Error(Errc::SizeLimit, "oracle accepts at most 12x12");
  }
  std::vector<int> owner(s.cols, -1);  // gt column -> matched prediction row
  std::function<bool(std::size_t, std::vector<bool>&)> augment =
      [&](std::size_t i, std::vector<bool>& seen) {
        for (std::size_t j = 0; j < s.cols; ++j) {
          if (!s.at(i, j) || seen[j]) continue;
          seen[j] = true;
          if (owner[j] < 0 || augment(static_cast<std::size_t>(owner[j]), seen)) {
            owner[j] = static_cast<int>(i);
            return true;
          }
        }
        return false;
      };
  std::size_t m = 0;
  for (std::size_t i = 0; i < s.rows; ++i) {
    std::vector<bool> seen(s.cols, false);
    if (augment(i, seen)) ++m;
  }
  return m;
}

PrecisionRecall compute_metrics(std::size_t m, std::size_t p_len, std::size_t g_len) {
  if (p_len == 0 && g_len == 0) return {1.0, 1.0};
  if (p_len == 0) return {1.0, 0.0};
  if (g_len == 0) return {0.0, 1.0};
  return {static_cast<double>(m) / static_cast<double>(p_len),
          static_cast<double>(m) / static_cast<double>(g_len)};
}

PrecisionRecall evaluate_case(const ActionSequence& pred, const ActionSequence& gt,
                              double threshold, EvalMode mode, EmbeddingBackend& embed) {
  const auto sim = similarity_matrices(pred, gt, threshold, embed);
  const auto match = greedy_match(mode == EvalMode::all ? sim.s : sim.s_o);
  return compute_metrics(match.m, pred.size(), gt.size());
}

VideoMetrics evaluate_video(const ActionSequence& pred, const ActionSequence& gt,
                            double threshold, EmbeddingBackend& embed) {
  const auto sim = similarity_matrices(pred, gt, threshold, embed);
  VideoMetrics v;
  v.video_id = gt.video_id;
  v.p_len = pred.size();
  v.g_len = gt.size();
  v.m_all = greedy_match(sim.s).m;
  v.m_op = greedy_match(sim.s_o).m;
  v.all = compute_metrics(v.m_all, v.p_len, v.g_len);
  v.op = compute_metrics(v.m_op, v.p_len, v.g_len);
  return v;
}

namespace {

AggregateMetrics aggregate(const std::vector<const VideoMetrics*>& videos) {
  AggregateMetrics a;
  a.videos = videos.size();
  std::size_t m_all = 0, m_op = 0, p = 0, g = 0;
  for (const VideoMetrics* v : videos) {
    a.macro_all.precision += v->all.precision;
    a.macro_all.recall += v->all.recall;
    a.macro_op.precision += v->op.precision;
    a.macro_op.recall += v->op.recall;
    m_all += v->m_all;
    m_op += v->m_op;
    p += v->p_len;
    g += v->g_len;
  }
  const double n = static_cast<double>(videos.size());
  for (PrecisionRecall* pr : {&a.macro_all, &a.macro_op}) {
    pr->precision /= n;
    pr->recall /= n;
  }
  a.micro_all = compute_metrics(m_all, p, g);
  a.micro_op = compute_metrics(m_op, p, g);
  return a;
}

nlohmann::json pr_json(const PrecisionRecall& pr) {
  return {{"precision", pr.precision}, {"recall", pr.recall}};
}

nlohmann::json aggregate_json(const AggregateMetrics& a) {
  return {{"videos", a.videos},
          {"macro", {{"all", pr_json(a.macro_all)}, {"operation", pr_json(a.macro_op)}}},
          {"micro", {{"all", pr_json(a.micro_all)}, {"operation", pr_json(a.micro_op)}}}};
}

std::string fixed2(double x) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", x);
  return buf;
}

}  // namespace

MetricsReport aggregate_dataset(std::vector<VideoMetrics> per_video) {
  if (per_video.empty()) throw Error(Errc::EmptyDataset, "no cases to aggregate");
  MetricsReport report;
  report.per_video = std::move(per_video);
  std::vector<const VideoMetrics*> all;
  std::map<std::string, std::vector<const VideoMetrics*>> by_domain;
  for (const auto& v : report.per_video) {
    all.push_back(&v);
    by_domain[v.domain].push_back(&v);
    if (v.missing_prediction) report.missing_predictions.push_back(v.video_id);
  }
  report.overall = aggregate(all);
  for (const auto& [domain, videos] : by_domain) report.per_domain[domain] = aggregate(videos);
  return report;
}

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json videos = nlohmann::json::array();
  for (const auto& v : per_video) {
    videos.push_back({{"video_id", v.video_id},
                      {"domain", v.domain},
                      {"p_len", v.p_len},
                      {"g_len", v.g_len},
                      {"m_all", v.m_all},
                      {"m_op", v.m_op},
                      {"p_all", v.all.precision},
                      {"r_all", v.all.recall},
                      {"p_op", v.op.precision},
                      {"r_op", v.op.recall},
                      {"missing_prediction", v.missing_prediction}});
  }
  nlohmann::json domains = nlohmann::json::object();
  for (const auto& [d, a] : per_domain) domains[d] = aggregate_json(a);
  return {{"threshold", threshold},
          {"embedding", embedding},
          {"per_video", std::move(videos)},
          {"per_domain", std::move(domains)},
          {"overall", aggregate_json(overall)},
          {"missing_predictions", missing_predictions}};
}

std::string MetricsReport::table() const {
  std::size_t width = std::string("overall").size();
  for (const auto& [d, a] : per_domain) width = std::max(width, d.size());
  std::ostringstream out;
  auto cell = [&](const std::string& s, std::size_t w) {
    out << s << std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  const char* headers[] = {"Recall (Operation)", "Precision (Operation)", "Recall (All)",
                           "Precision (All)"};
  cell("Domain", width + 2);
  for (const char* h : headers) cell(h, std::string(h).size() + 2);
  out << "\n";
  auto row = [&](const std::string& name, const AggregateMetrics& a) {
    cell(name, width + 2);
    const double values[] = {a.macro_op.recall, a.macro_op.precision, a.macro_all.recall,
                             a.macro_all.precision};
    for (int k = 0; k < 4; ++k) cell(fixed2(values[k]), std::string(headers[k]).size() + 2);
    out << "\n";
  };
  for (const auto& [d, a] : per_domain) row(d, a);
  row("overall", overall);
  return out.str();
}

MetricsReport evaluate_dataset(const std::vector<GroundTruthCase>& truth,
                               const std::map<std::string, ActionSequence>& predictions,
                               double threshold, EmbeddingBackend& embed) {
  std::vector<VideoMetrics> per_video;
  for (const auto& gt : truth) {
    auto it = predictions.find(gt.video_id);
    ActionSequence empty{gt.video_id, {}};
    VideoMetrics v = evaluate_video(it == predictions.end() ? empty : it->second, gt.actions,
                                    threshold, embed);
    v.video_id = gt.video_id;
    v.domain = gt.domain;
    v.missing_prediction = it == predictions.end();
    per_video.push_back(std::move(v));
  }
  MetricsReport report = aggregate_dataset(std::move(per_video));
  report.threshold = threshold;
  report.embedding = std::string(embed.kind());
  return report;
}

std::vector<GroundTruthCase> load_ground_truth_dir(const fs::path& dir) {
  if (fs::exists(dir / "index.json")) return load_corpus_cases(load_corpus(dir));
  if (!fs::is_directory(dir)) throw Error(Errc::Io, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<GroundTruthCase> out;
  for (const auto& f : files) out.push_back(load_ground_truth_file(f));
  return out;
}

std::map<std::string, ActionSequence> load_prediction_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::Io, dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::map<std::string, ActionSequence> out;
  for (const auto& f : files) {
    const auto bytes = read_file_bytes(f);
    Prediction p;
    try {
      p = parse_prediction(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
    } catch (const Error& e) {
      throw Error(e.code(), f.string() + ": " + e.what());
    }
    const std::string id = p.sequence.video_id;
    if (!out.emplace(id, std::move(p.sequence)).second) {
      throw Error(Errc::SchemaError, f.string() + ": duplicate prediction for " + id);
    }
  }
  return out;
}

}  // namespace deskrec
