#include "ctxdistill/prompts.hpp"

#include <sstream>

#include "ctxdistill/prompts_data.hpp"

namespace ctxdistill::gen {

std::string_view decomposition_template() { return prompts::kDecompositionPrompt; }
std::string_view seed_selection_template() { return prompts::kSeedSelectionPrompt; }
std::string_view query_generation_template() { return prompts::kQueryGenerationPrompt; }
std::string_view verification_template() { return prompts::kVerificationPrompt; }
std::string_view verification_batched_template() { return prompts::kVerificationBatchedPrompt; }

std::string fill_template(std::string_view tmpl,
                          const std::vector<std::pair<std::string_view, std::string_view>>& subs) {
  std::string out(tmpl);
  for (const auto& [name, value] : subs) {
    std::string placeholder = "{" + std::string(name) + "}";
    std::size_t pos = 0;
    while ((pos = out.find(placeholder, pos)) != std::string::npos) {
      out.replace(pos, placeholder.size(), value);
      pos += value.size();
    }
  }
  return out;
}

std::string examples_section(const std::vector<std::string>& example_queries) {
  if (example_queries.empty()) return "";
  std::ostringstream os;
  os << "Examples:";
  for (std::size_t i = 0; i < example_queries.size(); ++i) {
    os << "\nExample " << (i + 1) << ": " << example_queries[i];
  }
  return os.str();
}

std::string numbered_list(const std::vector<std::string>& items) {
  std::ostringstream os;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) os << '\n';
    os << (i + 1) << ". " << items[i];
  }
  return os.str();
}

std::string render_teacher_input(const std::string& query,
                                 const std::vector<std::string>& unit_texts) {
  std::ostringstream os;
  os << query;
  if (!unit_texts.empty()) {
    os << "\n";
    for (const auto& u : unit_texts) os << "\n" << u;
  }
  return os.str();
}

}  // namespace ctxdistill::gen
