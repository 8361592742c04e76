#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "deskrec/action.hpp"
#include "deskrec/image.hpp"
#include "deskrec/rational.hpp"

namespace deskrec {

struct FrameMeta {
  Rational source_fps{30};
  int width = 0;
  int height = 0;
};

// A frame file on disk; pixels are decoded only when the frame is sampled.
struct RawFrame {
  int index = 0;
  std::filesystem::path path;
};

struct RawFrameList {
  std::filesystem::path dir;
  FrameMeta meta;
  std::vector<RawFrame> frames;

  std::size_t size() const { return frames.size(); }
};

struct Frame {
  int index = 0;             // sample ordinal
  int raw_index = 0;         // index of the source frame file
  double timestamp_s = 0.0;  // index / rate
  Image pixels;
  std::filesystem::path source_path;
};

struct FrameSequence {
  std::vector<Frame> frames;
  int height = 0;
  int width = 0;

  std::size_t size() const { return frames.size(); }
  bool empty() const { return frames.empty(); }
  const Frame& operator[](std::size_t i) const { return frames[i]; }
};

struct SamplingConfig {
  Rational rate_fps{1};
  Rational source_fps{30};
};

inline constexpr const char* kMetaFile = "meta.json";
std::string frame_file_name(int index);  // frame_000042.png

// Lists frame_NNNNNN.png files, validates contiguity and every frame's size against
// meta.json (headers only, no pixel decoding).
RawFrameList load_frame_dir(const std::filesystem::path& dir);

// Source indices chosen for k = 0, 1, ... while k / rate < raw_count / source_fps:
// floor(k / rate * source_fps). Exact rational arithmetic.
std::vector<int> sample_indices(std::size_t raw_count, const SamplingConfig& cfg);

FrameSequence sample_frames(const RawFrameList& raw, const SamplingConfig& cfg,
                            int parallelism = 4);

// In-memory construction, used by tests and by callers that already hold pixels.
FrameSequence make_sequence(std::vector<Image> images, Rational rate_fps = Rational(1));

struct CorpusEntry {
  std::filesystem::path case_path;  // absolute or relative to the corpus root
  std::string domain;
};

struct Corpus {
  std::filesystem::path root;
  std::string name;
  std::vector<std::string> domains;
  std::vector<CorpusEntry> entries;
};

// index.json: {"dataset": str, "domains": [str], "cases": [{"path": str, "domain": str}]}
Corpus load_corpus(const std::filesystem::path& dir);
GroundTruthCase load_ground_truth_file(const std::filesystem::path& path);
std::vector<GroundTruthCase> load_corpus_cases(const Corpus& corpus);

struct BenchmarkCase {
  GroundTruthCase truth;
  FrameSequence frames;
};

// frame_dir is resolved relative to the case file's directory.
BenchmarkCase load_benchmark_case(const std::filesystem::path& case_file, Rational rate_fps,
                                  int parallelism = 4);

}  // namespace deskrec
