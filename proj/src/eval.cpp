#include "ctxdistill/eval.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "ctxdistill/errors.hpp"
#include "ctxdistill/version.hpp"

namespace ctxdistill::eval {
namespace {

std::string strip_whitespace(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(c);
  }
  return out;
}

std::map<std::string, std::int64_t> ngram_counts(const std::string& s, int n) {
  std::map<std::string, std::int64_t> counts;
  if (static_cast<int>(s.size()) < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[s.substr(i, n)];
  return counts;
}

}  // namespace

ChrfStats chrf_stats(std::string_view hypothesis, std::string_view reference, int max_order) {
  if (max_order < 1) throw ConfigError("chrf: max_order must be >= 1");
  const std::string hyp = strip_whitespace(hypothesis);
  const std::string ref = strip_whitespace(reference);
  ChrfStats stats;
  stats.per_order.resize(max_order, {0, 0, 0});
  for (int n = 1; n <= max_order; ++n) {
    const auto hyp_counts = ngram_counts(hyp, n);
    const auto ref_counts = ngram_counts(ref, n);
    std::int64_t match = 0, hyp_total = 0, ref_total = 0;
    for (const auto& [gram, count] : hyp_counts) {
      hyp_total += count;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) match += std::min(count, it->second);
    }
    for (const auto& [gram, count] : ref_counts) ref_total += count;
    stats.per_order[n - 1] = {match, hyp_total, ref_total};
  }
  return stats;
}

double chrf_from_stats(const ChrfStats& stats, double beta) {
  const double beta2 = beta * beta;
  double score_sum = 0.0;
  int effective_orders = 0;
  for (const auto& [match, hyp_total, ref_total] : stats.per_order) {
    if (hyp_total == 0 && ref_total == 0) continue;  // order longer than both texts
    ++effective_orders;
    const double precision =
        hyp_total > 0 ? static_cast<double>(match) / static_cast<double>(hyp_total) : 0.0;
    const double recall =
        ref_total > 0 ? static_cast<double>(match) / static_cast<double>(ref_total) : 0.0;
    const double denom = beta2 * precision + recall;
    if (denom > 0.0) score_sum += (1.0 + beta2) * precision * recall / denom;
  }
  if (effective_orders == 0) return 100.0;  // both texts empty, hence identical
  return 100.0 * score_sum / effective_orders;
}

double chrf(std::string_view hypothesis, std::string_view reference, const ChrfParams& params) {
  return chrf_from_stats(chrf_stats(hypothesis, reference, params.max_order), params.beta);
}

namespace {

struct AmountMatch {
  std::size_t pos = 0;
  std::int64_t cents = 0;
};

/// Parses a dollar amount starting at `i` ("$12,345.678" etc.); advances `i`
/// past it and rounds half-up beyond two decimals. Returns nothing if the
/// amount is immediately followed by '%' (a percentage, not a price).
std::optional<std::int64_t> parse_amount(std::string_view text, std::size_t& i) {
  std::int64_t dollars = 0;
  bool any_digit = false;
  while (i < text.size()) {
    const char c = text[i];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      dollars = dollars * 10 + (c - '0');
      any_digit = true;
      ++i;
    } else if (c == ',' && any_digit && i + 1 < text.size() &&
               std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
      ++i;  // thousands separator
    } else {
      break;
    }
  }
  if (!any_digit) return std::nullopt;
  std::int64_t cents = dollars * 100;
  if (i < text.size() && text[i] == '.' && i + 1 < text.size() &&
      std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
    ++i;
    int frac_digits = 0;
    std::int64_t frac = 0;
    int rounder = -1;  // first digit past two decimals
    while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
      const int d = text[i] - '0';
      if (frac_digits < 2) {
        frac = frac * 10 + d;
        ++frac_digits;
      } else if (rounder < 0) {
        rounder = d;
      }
      ++i;
    }
    if (frac_digits == 1) frac *= 10;
    cents += frac;
    if (rounder >= 5) ++cents;
  }
  if (i < text.size() && text[i] == '%') {
    ++i;
    return std::nullopt;
  }
  return cents;
}

std::vector<AmountMatch> find_amounts(std::string_view text) {
  std::vector<AmountMatch> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '$' || std::isdigit(static_cast<unsigned char>(text[i]))) {
      const std::size_t start = i;
      if (text[i] == '$') ++i;
      if (i >= text.size() || !std::isdigit(static_cast<unsigned char>(text[i]))) continue;
      const auto cents = parse_amount(text, i);
      if (cents) out.push_back({start, *cents});
    } else {
      ++i;
    }
  }
  return out;
}

}  // namespace

std::optional<std::int64_t> extract_final_answer(std::string_view text) {
  const auto amounts = find_amounts(text);
  if (amounts.empty()) return std::nullopt;

  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  const std::size_t marker = lowered.rfind("final price");
  if (marker != std::string::npos) {
    for (const auto& amount : amounts) {
      if (amount.pos > marker) return amount.cents;
    }
  }
  return amounts.back().cents;
}

EvalReport evaluate(const std::vector<std::string>& predictions,
                    const std::vector<std::string>& references,
                    const std::vector<std::optional<std::int64_t>>& truth_cents,
                    const ChrfParams& params) {
  if (predictions.size() != references.size()) {
    throw InputError("evaluate: predictions and references differ in length");
  }
  if (!truth_cents.empty() && truth_cents.size() != predictions.size()) {
    throw InputError("evaluate: truth values and predictions differ in length");
  }

  EvalReport report;
  report.num_examples = static_cast<int>(predictions.size());
  ChrfStats pooled;
  pooled.per_order.resize(params.max_order, {0, 0, 0});
  double chrf_sum = 0.0;

  for (std::size_t i = 0; i < predictions.size(); ++i) {
    ExampleResult res;
    res.index = static_cast<int>(i);
    const ChrfStats stats = chrf_stats(predictions[i], references[i], params.max_order);
    for (int n = 0; n < params.max_order; ++n) {
      for (int k = 0; k < 3; ++k) pooled.per_order[n][k] += stats.per_order[n][k];
    }
    res.chrf_score = chrf_from_stats(stats, params.beta);
    chrf_sum += res.chrf_score;

    res.truth_cents =
        truth_cents.empty() ? extract_final_answer(references[i]) : truth_cents[i];
    if (res.truth_cents) {
      res.graded = true;
      ++report.num_graded;
      res.predicted_cents = extract_final_answer(predictions[i]);
      if (res.predicted_cents) {
        const std::int64_t diff = *res.predicted_cents - *res.truth_cents;
        res.correct = diff >= -1 && diff <= 1;
      }
      if (res.correct) ++report.num_correct;
    }
    report.examples.push_back(std::move(res));
  }

  report.accuracy = report.num_graded > 0
                        ? static_cast<double>(report.num_correct) / report.num_graded
                        : 0.0;
  report.mean_chrf = report.num_examples > 0 ? chrf_sum / report.num_examples : 0.0;
  report.corpus_chrf = chrf_from_stats(pooled, params.beta);
  return report;
}

nlohmann::ordered_json report_to_json(const EvalReport& report, bool include_examples) {
  nlohmann::ordered_json j;
  j["num_examples"] = report.num_examples;
  j["num_graded"] = report.num_graded;
  j["num_correct"] = report.num_correct;
  j["accuracy"] = report.accuracy;
  j["mean_chrf"] = report.mean_chrf;
  j["corpus_chrf"] = report.corpus_chrf;
  if (include_examples) {
    nlohmann::ordered_json examples = nlohmann::ordered_json::array();
    for (const auto& res : report.examples) {
      nlohmann::ordered_json je;
      je["index"] = res.index;
      je["graded"] = res.graded;
      je["correct"] = res.correct;
      je["chrf"] = res.chrf_score;
      if (res.predicted_cents) {
        je["predicted_cents"] = *res.predicted_cents;
      } else {
        je["predicted_cents"] = nullptr;
      }
      if (res.truth_cents) {
        je["truth_cents"] = *res.truth_cents;
      } else {
        je["truth_cents"] = nullptr;
      }
      examples.push_back(std::move(je));
    }
    j["examples"] = std::move(examples);
  }
  return j;
}

void write_report(const std::string& path, const EvalReport& report,
                  const nlohmann::json& config) {
  nlohmann::ordered_json doc;
  doc["meta"] = file_header(config)["meta"];
  doc["report"] = report_to_json(report);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open report file for writing: " + path);
  out << doc.dump(2) << '\n';
}

}  // namespace ctxdistill::eval
