#include "deskrec/run_report.hpp"

#include "deskrec/prompts.hpp"

namespace deskrec {

void RunReport::unit(std::string stage, std::string subject, std::string status_, int attempts,
                     std::string message) {
  units.push_back({std::move(stage), std::move(subject), std::move(status_), attempts,
                   std::move(message)});
}

void RunReport::flag(std::string stage, std::string subject, std::string message) {
  flags.push_back({std::move(stage), std::move(subject), std::move(message)});
}

void RunReport::capture(const Gateway& gateway) {
  stats = gateway.stats();
  requests = gateway.request_log();
}

json RunReport::to_json() const {
  json units_json = json::array();
  for (const auto& u : units) {
    units_json.push_back({{"stage", u.stage}, {"subject", u.subject}, {"status", u.status},
                          {"attempts", u.attempts}, {"message", u.message}});
  }
  json flags_json = json::array();
  for (const auto& f : flags) {
    flags_json.push_back({{"stage", f.stage}, {"subject", f.subject}, {"message", f.message}});
  }
  json requests_json = json::array();
  for (const auto& r : requests) {
    requests_json.push_back({{"tag", r.tag}, {"key", r.key}, {"images", r.images},
                             {"image_digests", r.image_digests}, {"text_digest", r.text_digest},
                             {"from_cache", r.from_cache}});
  }
  json prompts = json::object();
  for (PromptName n : kPromptNames) prompts[std::string(to_string(n))] = prompt(n).version;
  return {{"video_id", video_id},
          {"method", method},
          {"status", status},
          {"error", error},
          {"config", config},
          {"units", std::move(units_json)},
          {"flags", std::move(flags_json)},
          {"gateway",
           {{"requests", stats.requests},
            {"cache_hits", stats.cache_hits},
            {"provider_calls", stats.provider_calls},
            {"provider_failures", stats.provider_failures}}},
          {"request_log", std::move(requests_json)},
          {"prompt_versions", std::move(prompts)}};
}

}  // namespace deskrec
