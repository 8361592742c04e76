#include "deskrec/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "deskrec/error.hpp"
#include "deskrec/parallel.hpp"

namespace deskrec {

namespace fs = std::filesystem;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// frame_NNNNNN.png -> NNNNNN, or -1.
int frame_file_index(const std::string& name) {
  constexpr std::string_view prefix = "frame_";
  constexpr std::string_view suffix = ".png";
  if (name.size() != prefix.size() + 6 + suffix.size()) return -1;
  if (name.compare(0, prefix.size(), prefix) != 0) return -1;
  if (name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) return -1;
  int value = 0;
  const char* first = name.data() + prefix.size();
  auto [ptr, ec] = std::from_chars(first, first + 6, value);
  if (ec != std::errc() || ptr != first + 6) return -1;
  return value;
}

FrameMeta parse_meta(const fs::path& path) {
  if (!fs::exists(path)) throw Error(Errc::MissingMeta, path.string() + " not found");
  try {
    const json doc = json::parse(read_text(path));
    FrameMeta meta;
    meta.source_fps = Rational::from_json(doc.at("source_fps"));
    meta.width = doc.at("width").get<int>();
    meta.height = doc.at("height").get<int>();
    if (meta.source_fps.num <= 0 || meta.width <= 0 || meta.height <= 0) {
      throw std::invalid_argument("non-positive value");
    }
    return meta;
  } catch (const json::exception& e) {
    throw Error(Errc::MissingMeta, path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw Error(Errc::MissingMeta, path.string() + ": " + e.what());
  }
}

}  // namespace

std::string frame_file_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%06d.png", index);
  return buf;
}

RawFrameList load_frame_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(Errc::Io, dir.string() + " is not a directory");
  RawFrameList list;
  list.dir = dir;
  list.meta = parse_meta(dir / kMetaFile);

  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const int index = frame_file_index(entry.path().filename().string());
    if (index >= 0) list.frames.push_back({index, entry.path()});
  }
  if (list.frames.empty()) throw Error(Errc::Io, dir.string() + " contains no frame files");
  std::sort(list.frames.begin(), list.frames.end(),
            [](const RawFrame& a, const RawFrame& b) { return a.index < b.index; });
  for (std::size_t i = 0; i < list.frames.size(); ++i) {
    if (list.frames[i].index != static_cast<int>(i)) {
      throw Error(Errc::GapInIndices, dir.string() + ": expected " +
                                          frame_file_name(static_cast<int>(i)));
    }
  }
  for (const auto& frame : list.frames) {
    const PngInfo info = read_png_info(frame.path);
    if (info.width != list.meta.width || info.height != list.meta.height) {
      throw Error(Errc::DimensionMismatch,
                  frame.path.string() + " is " + std::to_string(info.width) + "x" +
                      std::to_string(info.height) + ", meta says " +
                      std::to_string(list.meta.width) + "x" + std::to_string(list.meta.height));
    }
  }
  return list;
}

std::vector<int> sample_indices(std::size_t raw_count, const SamplingConfig& cfg) {
  const Rational& rate = cfg.rate_fps;
  const Rational& src = cfg.source_fps;
  if (rate.num <= 0 || src.num <= 0) throw Error(Errc::InvalidConfig, "rates must be positive");
  if (rate > src) {
    throw Error(Errc::RateExceedsSource,
                "sampling rate " + rate.str() + " exceeds source rate " + src.str());
  }
  // t = k / rate; keep while t < raw_count / src; index = floor(t * src).
  const __int128 step_num = static_cast<__int128>(rate.den) * src.num;
  const __int128 step_den = static_cast<__int128>(rate.num) * src.den;
  const __int128 limit = static_cast<__int128>(raw_count) * step_den;
  std::vector<int> out;
  for (__int128 k = 0; k * step_num < limit; ++k) {
    out.push_back(static_cast<int>(k * step_num / step_den));
  }
  return out;
}

FrameSequence sample_frames(const RawFrameList& raw, const SamplingConfig& cfg, int parallelism) {
  if (raw.frames.empty()) throw Error(Errc::Io, "no frames to sample");
  const std::vector<int> picks = sample_indices(raw.frames.size(), cfg);
  FrameSequence seq;
  seq.height = raw.meta.height;
  seq.width = raw.meta.width;
  seq.frames.resize(picks.size());
  parallel_for(picks.size(), parallelism, [&](std::size_t k) {
    const RawFrame& source = raw.frames[static_cast<std::size_t>(picks[k])];
    Frame& frame = seq.frames[k];
    frame.index = static_cast<int>(k);
    frame.raw_index = source.index;
    frame.timestamp_s = static_cast<double>(k) * cfg.rate_fps.den / cfg.rate_fps.num;
    frame.source_path = source.path;
    frame.pixels = read_png(source.path);
    if (frame.pixels.height != seq.height || frame.pixels.width != seq.width) {
      throw Error(Errc::DimensionMismatch, source.path.string() + " changed size while loading");
    }
  });
  return seq;
}

FrameSequence make_sequence(std::vector<Image> images, Rational rate_fps) {
  FrameSequence seq;
  if (images.empty()) return seq;
  seq.height = images.front().height;
  seq.width = images.front().width;
  for (std::size_t k = 0; k < images.size(); ++k) {
    if (!images[k].same_shape(images.front())) {
      throw Error(Errc::DimensionMismatch, "frame " + std::to_string(k) + " differs in shape");
    }
    Frame frame;
    frame.index = static_cast<int>(k);
    frame.raw_index = static_cast<int>(k);
    frame.timestamp_s = static_cast<double>(k) * rate_fps.den / rate_fps.num;
    frame.pixels = std::move(images[k]);
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

Corpus load_corpus(const fs::path& dir) {
  const fs::path index_path = dir / "index.json";
  json doc;
  try {
    doc = json::parse(read_text(index_path));
  } catch (const json::parse_error& e) {
    throw Error(Errc::SchemaError, index_path.string() + ": $: " + e.what());
  }
  auto fail = [&](const std::string& path, const std::string& what) -> Error {
    return Error(Errc::SchemaError, index_path.string() + ": " + path + ": " + what);
  };
  if (!doc.is_object()) throw fail("$", "expected object");
  Corpus corpus;
  corpus.root = dir;
  if (auto it = doc.find("dataset"); it != doc.end() && it->is_string()) corpus.name = *it;
  if (auto it = doc.find("domains"); it != doc.end()) {
    if (!it->is_array()) throw fail("$.domains", "expected array");
    for (std::size_t i = 0; i < it->size(); ++i) {
      if (!(*it)[i].is_string()) throw fail("$.domains[" + std::to_string(i) + "]", "expected string");
      corpus.domains.push_back((*it)[i]);
    }
  }
  auto cases = doc.find("cases");
  if (cases == doc.end() || !cases->is_array()) throw fail("$.cases", "expected array");
  for (std::size_t i = 0; i < cases->size(); ++i) {
    const std::string path = "$.cases[" + std::to_string(i) + "]";
    const json& c = (*cases)[i];
    if (!c.is_object() || !c.contains("path") || !c["path"].is_string()) {
      throw fail(path + ".path", "expected string");
    }
    CorpusEntry entry;
    entry.case_path = c["path"].get<std::string>();
    if (auto d = c.find("domain"); d != c.end() && d->is_string()) entry.domain = *d;
    corpus.entries.push_back(std::move(entry));
  }
  return corpus;
}

GroundTruthCase load_ground_truth_file(const fs::path& path) {
  try {
    return parse_ground_truth(read_text(path));
  } catch (const Error& e) {
    if (e.code() == Errc::SchemaError) throw Error(Errc::SchemaError, path.string() + ": " + e.what());
    throw;
  }
}

std::vector<GroundTruthCase> load_corpus_cases(const Corpus& corpus) {
  std::vector<GroundTruthCase> out;
  out.reserve(corpus.entries.size());
  for (const auto& entry : corpus.entries) {
    const fs::path path = entry.case_path.is_absolute() ? entry.case_path : corpus.root / entry.case_path;
    GroundTruthCase gt = load_ground_truth_file(path);
    if (!entry.domain.empty() && entry.domain != gt.domain) {
      throw Error(Errc::SchemaError, path.string() + ": $.domain: \"" + gt.domain +
                                         "\" disagrees with index entry \"" + entry.domain + "\"");
    }
    if (!corpus.domains.empty() &&
        std::find(corpus.domains.begin(), corpus.domains.end(), gt.domain) == corpus.domains.end()) {
      throw Error(Errc::SchemaError,
                  path.string() + ": $.domain: \"" + gt.domain + "\" is not a declared domain");
    }
    out.push_back(std::move(gt));
  }
  return out;
}

BenchmarkCase load_benchmark_case(const fs::path& case_file, Rational rate_fps, int parallelism) {
  BenchmarkCase bc;
  bc.truth = load_ground_truth_file(case_file);
  fs::path frame_dir = bc.truth.frame_dir;
  if (frame_dir.is_relative()) frame_dir = case_file.parent_path() / frame_dir;
  if (!fs::is_directory(frame_dir)) {
    throw Error(Errc::Io, case_file.string() + ": frame_dir " + frame_dir.string() + " does not exist");
  }
  const RawFrameList raw = load_frame_dir(frame_dir);
  bc.frames = sample_frames(raw, SamplingConfig{rate_fps, bc.truth.source_fps}, parallelism);
  return bc;
}

}  // namespace deskrec
