#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ctxdistill::gen {

/// Embedded prompt templates (see prompts/ for the source files).
std::string_view decomposition_template();
std::string_view seed_selection_template();
std::string_view query_generation_template();
std::string_view verification_template();
std::string_view verification_batched_template();

/// Replaces every occurrence of each "{name}" placeholder with its value.
std::string fill_template(std::string_view tmpl,
                          const std::vector<std::pair<std::string_view, std::string_view>>& subs);

/// Renders the example-queries section shared by the seed-selection and
/// query-generation prompts. Empty input renders as an empty string.
std::string examples_section(const std::vector<std::string>& example_queries);

/// "1. <text>" numbered list used by the batched verification prompt.
std::string numbered_list(const std::vector<std::string>& items);

/// The teacher input: query first, then the context units in corpus order,
/// separated by a blank line. Used both for rollout prompts and for
/// building distillation teacher inputs.
std::string render_teacher_input(const std::string& query,
                                 const std::vector<std::string>& unit_texts);

}  // namespace ctxdistill::gen
