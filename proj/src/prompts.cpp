#include "deskrec/prompts.hpp"

#include <map>

#include "deskrec/error.hpp"
#include "deskrec/gateway.hpp"

namespace deskrec {

namespace detail {
extern const std::string_view k_df_proposer;
extern const std::string_view k_df_corrector;
extern const std::string_view k_df_merger;
extern const std::string_view k_difff_descriptor;
extern const std::string_view k_difff_proposer;
extern const std::string_view k_difff_corrector;
}  // namespace detail

std::string_view to_string(PromptName name) {
  switch (name) {
    case PromptName::df_proposer: return "df_proposer";
    case PromptName::df_corrector: return "df_corrector";
    case PromptName::df_merger: return "df_merger";
    case PromptName::difff_descriptor: return "difff_descriptor";
    case PromptName::difff_proposer: return "difff_proposer";
    case PromptName::difff_corrector: return "difff_corrector";
  }
  return "?";
}

const PromptAsset& prompt(PromptName name) {
  static const std::map<PromptName, PromptAsset> assets = [] {
    std::map<PromptName, PromptAsset> out;
    auto add = [&](PromptName n, std::string_view text) {
      out.emplace(n, PromptAsset{n, text, sha256_hex(text).substr(0, 12)});
    };
    add(PromptName::df_proposer, detail::k_df_proposer);
    add(PromptName::df_corrector, detail::k_df_corrector);
    add(PromptName::df_merger, detail::k_df_merger);
    add(PromptName::difff_descriptor, detail::k_difff_descriptor);
    add(PromptName::difff_proposer, detail::k_difff_proposer);
    add(PromptName::difff_corrector, detail::k_difff_corrector);
    return out;
  }();
  return assets.at(name);
}

CorrectorTasks split_corrector_tasks(std::string_view text) {
  constexpr std::string_view kMarker = "Instructions of the tasks:";
  const std::size_t marker = text.find(kMarker);
  if (marker == std::string_view::npos) {
    throw Error(Errc::InvalidConfig, "corrector prompt has no task instructions");
  }
  std::size_t body = text.find('\n', marker);
  body = body == std::string_view::npos ? text.size() : body + 1;

  CorrectorTasks out;
  out.head = std::string(text.substr(0, body));
  std::vector<std::size_t> starts;
  for (int k = 1;; ++k) {
    const std::string label = "<TASK " + std::to_string(k) + ">:";
    const std::size_t at = text.find(label, starts.empty() ? body : starts.back() + 1);
    if (at == std::string_view::npos) break;
    starts.push_back(at);
  }
  if (starts.empty()) throw Error(Errc::InvalidConfig, "corrector prompt has no tasks");
  if (starts.front() > body) out.head += std::string(text.substr(body, starts.front() - body));
  for (std::size_t i = 0; i < starts.size(); ++i) {
    const std::size_t end = i + 1 < starts.size() ? starts[i + 1] : text.size();
    out.tasks.emplace_back(text.substr(starts[i], end - starts[i]));
  }
  return out;
}

}  // namespace deskrec
