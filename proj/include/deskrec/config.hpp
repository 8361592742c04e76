#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

#include "deskrec/action.hpp"
#include "deskrec/evaluator.hpp"
#include "deskrec/gateway.hpp"
#include "deskrec/localizer.hpp"
#include "deskrec/pipeline_df.hpp"
#include "deskrec/pipeline_difff.hpp"
#include "deskrec/rational.hpp"

namespace deskrec {

struct RunConfig {
  Method method = Method::df;
  std::string profile = "gpt-4o";
  std::map<std::string, ProviderProfile> profiles;  // declared in the config file
  Rational fps{1};
  WindowConfig window;
  LocalizerParams localizer;
  DfAblations df;
  DiffFAblations difff;
  CorrectorMode corrector_mode = CorrectorMode::follow_up;
  std::filesystem::path cache_dir = "cache";
  int parallelism = 4;
  int retries = 2;
  int backoff_ms = 500;
  int max_output = 4096;
  double eval_threshold = kDefaultMatchThreshold;
  std::string embed = "stub";


  // Declared profiles first, then the built-ins. Error(InvalidConfig) if unknown.
  ProviderProfile resolve_profile() const;
  GatewayConfig gateway_config() const;
  DfOptions df_options() const;
  DiffFOptions difff_options() const;
  nlohmann::json to_json() const;
};

// Sets one key; `section` is "" for top-level keys. Error(InvalidConfig) on an unknown
// key or a bad value.
void apply_setting(RunConfig& config, std::string_view section, std::string_view key,
                   std::string_view value);

// Line-based format:
//   # comment
//   key = value            top-level keys
//   [window]               size, overlap
//   [localizer]            blur_kernel, blur_sigma, diff_threshold, min_area, expand
//   [gateway]              retries, backoff_ms, max_output, parallelism
//   [ablation]             no_corrector, no_sliding_window, annotate_regions, frames_to_proposer
//   [difff]                corrector_mode
//   [eval]                 threshold, embed
//   [profile.NAME]         model_id, image_limit, request_shape
// Values may be double-quoted.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

}  // namespace deskrec
