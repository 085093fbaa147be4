#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ctxdistill::eval {

struct ChrfParams {
  int max_order = 6;  ///< character n-gram orders 1..max_order
  double beta = 2.0;  ///< recall weight in the F-score
};

/// Per-order clipped n-gram statistics: matches, hypothesis count, reference
/// count. Whitespace is removed before counting.
struct ChrfStats {
  std::vector<std::array<std::int64_t, 3>> per_order;  // [match, hyp, ref]
};

ChrfStats chrf_stats(std::string_view hypothesis, std::string_view reference, int max_order);

/// F-scores are computed per order and averaged over orders where either
/// side has n-grams; identical texts score 100, disjoint texts 0.
double chrf_from_stats(const ChrfStats& stats, double beta);

/// Character n-gram F-score in [0, 100].
double chrf(std::string_view hypothesis, std::string_view reference, const ChrfParams& params = {});

/// Pulls the model's final dollar answer out of free-form text, as cents
/// (rounded half-up past two decimals). Prefers the first amount after the
/// last "final price" mention, otherwise the last amount in the text;
/// percentages are never treated as answers.
std::optional<std::int64_t> extract_final_answer(std::string_view text);

struct ExampleResult {
  int index = 0;
  bool graded = false;  ///< a ground-truth amount was available
  bool correct = false;
  double chrf_score = 0.0;
  std::optional<std::int64_t> predicted_cents;
  std::optional<std::int64_t> truth_cents;
};

struct EvalReport {
  int num_examples = 0;
  int num_graded = 0;
  int num_correct = 0;
  double accuracy = 0.0;     ///< correct / graded (0 when nothing was gradable)
  double mean_chrf = 0.0;    ///< macro average of per-example chrF
  double corpus_chrf = 0.0;  ///< micro average over pooled n-gram statistics
  std::vector<ExampleResult> examples;
};

/// Scores predictions against references. Accuracy compares extracted final
/// answers within $0.01 of the ground truth; when `truth_cents` is empty the
/// truth is extracted from each reference instead.
EvalReport evaluate(const std::vector<std::string>& predictions,
                    const std::vector<std::string>& references,
                    const std::vector<std::optional<std::int64_t>>& truth_cents = {},
                    const ChrfParams& params = {});

nlohmann::ordered_json report_to_json(const EvalReport& report, bool include_examples = true);

/// Writes the report as one JSON document with the standard file header.
void write_report(const std::string& path, const EvalReport& report,
                  const nlohmann::json& config);

}  // namespace ctxdistill::eval
