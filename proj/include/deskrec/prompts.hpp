#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

namespace deskrec {

enum class PromptName {
  df_proposer,
  df_corrector,
  df_merger,
  difff_descriptor,
  difff_proposer,
  difff_corrector,
};

inline constexpr std::array<PromptName, 6> kPromptNames = {
    PromptName::df_proposer,      PromptName::df_corrector,   PromptName::df_merger,
    PromptName::difff_descriptor, PromptName::difff_proposer, PromptName::difff_corrector};

std::string_view to_string(PromptName name);

struct PromptAsset {
  PromptName name;
  std::string_view text;  // verbatim template, compiled in
  std::string version;    // first 12 hex digits of SHA-256(text)
};

const PromptAsset& prompt(PromptName name);

// The DiffF corrector split for per-task conversations: `head` runs up to and including
// the "Instructions of the tasks:" line, `tasks[k]` is the instruction block of TASK k+1.
struct CorrectorTasks {
  std::string head;
  std::vector<std::string> tasks;
};
CorrectorTasks split_corrector_tasks(std::string_view text);

}  // namespace deskrec
