#include "deskrec/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "deskrec/error.hpp"
#include "text_util.hpp"

namespace deskrec {

namespace {

[[noreturn]] void bad(std::string_view key, std::string_view value, std::string_view want) {
  throw Error(Errc::InvalidConfig, std::string(key) + " = \"" + std::string(value) +
                                       "\": expected " + std::string(want));
}

int to_int(std::string_view key, std::string_view v) {
  int out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) bad(key, v, "an integer");
  return out;
}

double to_double(std::string_view key, std::string_view v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(std::string(v), &used);
    if (used != v.size()) bad(key, v, "a number");
    return out;
  } catch (const std::logic_error&) {
    bad(key, v, "a number");
  }
}

bool to_bool(std::string_view key, std::string_view v) {
  const std::string s = detail::to_lower(v);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  bad(key, v, "true or false");
}

}  // namespace

ProviderProfile RunConfig::resolve_profile() const {
  if (auto it = profiles.find(profile); it != profiles.end()) return it->second;
  if (auto p = builtin_profile(profile)) return *p;
  throw Error(Errc::InvalidConfig, "unknown model profile \"" + profile + "\"");
}

GatewayConfig RunConfig::gateway_config() const {
  GatewayConfig g;
  g.profile = resolve_profile();
  g.retries = retries;
  g.backoff = std::chrono::milliseconds(backoff_ms);
  g.parallelism = parallelism;
  g.max_output = max_output;
  return g;
}

DfOptions RunConfig::df_options() const { return {window, df, localizer}; }

DiffFOptions RunConfig::difff_options() const { return {localizer, difff, corrector_mode}; }

nlohmann::json RunConfig::to_json() const {
  return {{"method", std::string(to_string(method))},
          {"profile", profile},
          {"fps", fps.to_json()},
          {"window", {{"size", window.window_size}, {"overlap", window.overlap}}},
          {"localizer",
           {{"blur_kernel", localizer.blur_kernel},
            {"blur_sigma", localizer.blur_sigma},
            {"diff_threshold", localizer.diff_threshold},
            {"min_area", localizer.min_area_px},
            {"expand", localizer.expand_px}}},
          {"ablation",
           {{"no_corrector", method == Method::df ? df.no_corrector : difff.no_corrector},
            {"no_sliding_window", df.no_sliding_window},
            {"annotate_regions", df.annotate_regions},
            {"frames_to_proposer", difff.frames_to_proposer}}},
          {"corrector_mode", std::string(to_string(corrector_mode))},
          {"parallelism", parallelism},
          {"retries", retries},
          {"max_output", max_output},
          {"temperature", 0.0},
          {"eval_threshold", eval_threshold},
          {"embed", embed}};
}

void apply_setting(RunConfig& c, std::string_view section, std::string_view key,
                   std::string_view v) {
  auto is = [&](std::string_view s, std::string_view k) { return section == s && key == k; };
  if (is("", "method")) {
    c.method = parse_method(v);
  } else if (is("", "profile") || is("", "model")) {
    c.profile = std::string(v);
  } else if (is("", "fps")) {
    try {
      c.fps = Rational::parse(std::string(v));
    } catch (const std::invalid_argument&) {
      bad(key, v, "a rate like 1, 0.5 or 30000/1001");
    }
    if (c.fps.num <= 0) bad(key, v, "a positive rate");
  } else if (is("", "cache_dir") || is("", "cache")) {
    c.cache_dir = std::string(v);
  } else if (is("", "parallelism") || is("gateway", "parallelism")) {
    c.parallelism = to_int(key, v);
    if (c.parallelism < 1) bad(key, v, "at least 1");
  } else if (is("window", "size")) {
    c.window.window_size = to_int(key, v);
  } else if (is("window", "overlap")) {
    c.window.overlap = to_int(key, v);
  } else if (is("localizer", "blur_kernel")) {
    c.localizer.blur_kernel = to_int(key, v);
  } else if (is("localizer", "blur_sigma")) {
    c.localizer.blur_sigma = to_double(key, v);
  } else if (is("localizer", "diff_threshold")) {
    c.localizer.diff_threshold = to_double(key, v);
  } else if (is("localizer", "min_area")) {
    c.localizer.min_area_px = to_int(key, v);
  } else if (is("localizer", "expand")) {
    c.localizer.expand_px = to_int(key, v);
  } else if (is("gateway", "retries")) {
    c.retries = to_int(key, v);
  } else if (is("gateway", "backoff_ms")) {
    c.backoff_ms = to_int(key, v);
  } else if (is("gateway", "max_output")) {
    c.max_output = to_int(key, v);
  } else if (is("ablation", "no_corrector")) {
    c.df.no_corrector = c.difff.no_corrector = to_bool(key, v);
  } else if (is("ablation", "no_sliding_window")) {
    c.df.no_sliding_window = to_bool(key, v);
  } else if (is("ablation", "annotate_regions")) {
    c.df.annotate_regions = to_bool(key, v);
  } else if (is("ablation", "frames_to_proposer")) {
    c.difff.frames_to_proposer = to_bool(key, v);
  } else if (is("difff", "corrector_mode")) {
    c.corrector_mode = parse_corrector_mode(v);
  } else if (is("eval", "threshold")) {
    c.eval_threshold = to_double(key, v);
    if (!(c.eval_threshold > 0.0 && c.eval_threshold <= 1.0)) bad(key, v, "a value in (0, 1]");
  } else if (is("eval", "embed")) {
    if (v != "stub" && v != "remote") bad(key, v, "stub or remote");
    c.embed = std::string(v);
  } else if (section.substr(0, 8) == "profile.") {
    const std::string name(section.substr(8));
    ProviderProfile& p = c.profiles.try_emplace(name, ProviderProfile{name, name, 10, "openai-chat"})
                             .first->second;
    if (key == "model_id") {
      p.model_id = std::string(v);
    } else if (key == "image_limit") {
      p.image_limit = to_int(key, v);
      if (p.image_limit < 1) bad(key, v, "at least 1");
    } else if (key == "request_shape") {
      if (v != "openai-chat") bad(key, v, "openai-chat");
      p.request_shape = std::string(v);
    } else {
      throw Error(Errc::InvalidConfig, "unknown profile key \"" + std::string(key) + "\"");
    }
  } else {
    const std::string where = section.empty() ? std::string(key)
                                              : "[" + std::string(section) + "] " + std::string(key);
    throw Error(Errc::InvalidConfig, "unknown setting " + where);
  }
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = detail::trim(raw);
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    const std::string at = "line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(Errc::InvalidConfig, at + "unterminated section header");
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw Error(Errc::InvalidConfig, at + "expected key = value");
    const std::string_view key = detail::trim(line.substr(0, eq));
    std::string_view value = detail::trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    try {
      apply_setting(base, section, key, value);
    } catch (const Error& e) {
      throw Error(Errc::InvalidConfig, at + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

}  // namespace deskrec
