#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "deskrec/error.hpp"
#include "deskrec/gateway.hpp"
#include "deskrec/image.hpp"
#include "deskrec/ingest.hpp"

namespace testing_support {

namespace fs = std::filesystem;

inline fs::path fixtures() { return fs::path(DESKREC_FIXTURE_DIR); }
inline fs::path cases_dir() { return fixtures() / "cases"; }

inline std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json load_json(const fs::path& path) { return nlohmann::json::parse(slurp(path)); }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& stem = "deskrec") {
    std::random_device rd;
    path_ = fs::temp_directory_path() / (stem + "-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

// Sampled frames of a fixture recording at 1 fps.
inline deskrec::FrameSequence fixture_frames(const std::string& name) {
  return deskrec::load_benchmark_case(cases_dir() / name / "case.json", deskrec::Rational(1)).frames;
}

// Answers by tag prefix (the part before ':'), so any window or region label works.
inline std::shared_ptr<deskrec::ScriptedProvider> prefix_provider(
    std::map<std::string, std::string> by_prefix) {
  return std::make_shared<deskrec::ScriptedProvider>(
      [by_prefix = std::move(by_prefix)](const deskrec::ChatRequest& r) {
        std::string tag = r.tag.substr(0, r.tag.find('#'));
        auto it = by_prefix.find(tag);
        if (it == by_prefix.end()) it = by_prefix.find(tag.substr(0, tag.find(':')));
        if (it == by_prefix.end()) throw deskrec::Error(deskrec::Errc::ProviderError, "no answer for " + r.tag);
        return it->second;
      });
}

}  // namespace testing_support
