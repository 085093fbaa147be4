#include "ctxdistill/backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <optional>
#include <set>
#include <sstream>
#include <string_view>

#include "ctxdistill/retail.hpp"
#include "ctxdistill/rng.hpp"

namespace ctxdistill::gen {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.emplace_back(text.substr(start));
      break;
    }
    lines.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::optional<std::string_view> between(std::string_view text, std::string_view begin_marker,
                                        std::string_view end_marker) {
  const std::size_t b = text.find(begin_marker);
  if (b == std::string_view::npos) return std::nullopt;
  const std::size_t content = b + begin_marker.size();
  const std::size_t e = end_marker.empty() ? text.size() : text.find(end_marker, content);
  if (e == std::string_view::npos) return std::nullopt;
  return text.substr(content, e - content);
}

// --- decomposition ---------------------------------------------------------

std::string answer_decomposition(std::string_view prompt) {
  const auto content =
      between(prompt, "Content:\n", "\n\nOutput each atomic item");
  if (!content) return "";
  std::vector<std::string> items;
  for (const auto& raw : split_lines(*content)) {
    const std::string line = trim(raw);
    if (line.rfind("- ", 0) == 0) items.push_back(line.substr(2));
  }
  if (items.empty()) {
    // No bullet list: treat each non-empty line as one item.
    for (const auto& raw : split_lines(*content)) {
      const std::string line = trim(raw);
      if (!line.empty() && line.back() != ':') items.push_back(line);
    }
  }
  std::string reply;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) reply += "\n###\n";
    reply += items[i];
  }
  return reply;
}

// --- seed selection --------------------------------------------------------

std::vector<std::string> numbered_items(std::string_view block) {
  std::vector<std::string> items;
  for (const auto& raw : split_lines(block)) {
    const std::string line = trim(raw);
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
    if (i == 0 || i >= line.size() || line[i] != '.') continue;
    items.push_back(trim(std::string_view(line).substr(i + 1)));
  }
  return items;
}

/// Prefer groups of rules that can fire together (shared customer type or
/// shared category), falling back to a hash-driven pick. The reply continues
/// the primed "-" bullet and lists each selected guideline verbatim.
std::string answer_seed_selection(std::string_view prompt, const SamplingParams& params) {
  const auto block = between(prompt, "Guidelines:\n", "\nExamples:");
  const auto fallback_block = block ? block : between(prompt, "Guidelines:\n", "\nSelected guidelines:");
  if (!fallback_block) return "";
  const std::vector<std::string> guidelines = numbered_items(*fallback_block);
  if (guidelines.empty()) return "";

  Rng rng(fnv1a64(std::string(prompt), 0x5eed) ^ params.seed);
  const std::size_t want = std::min<std::size_t>(guidelines.size(), 3 + rng.bounded(3));
  std::vector<std::size_t> order(guidelines.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.bounded(i)]);
  }
  std::vector<std::size_t> chosen(order.begin(), order.begin() + want);
  std::sort(chosen.begin(), chosen.end());

  std::string reply;
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    reply += k == 0 ? " " : "- ";
    reply += guidelines[chosen[k]];
    reply += "\n";
  }
  return reply;
}

// --- query generation ------------------------------------------------------

/// Builds a purchase scenario consistent with the selected rules: a random
/// query is drawn from the prompt/seed hash, then nudged until every
/// selected rule's condition holds.
std::string retail_query_for_rules(const std::vector<int>& rule_ids, std::uint64_t seed) {
  using namespace retail;
  const auto& rules = canonical_rules();
  QueryGenConfig config;
  RetailQuery q = generate_query(seed, config);

  for (int id : rule_ids) {
    const DiscountRule& rule = rules[id];
    if (rule.customer) q.customer = *rule.customer;
    if (rule.promo) q.promo = *rule.promo;
    if (rule.min_membership_years > q.membership_years) {
      q.membership_years = rule.min_membership_years;
    }
  }
  Rng rng(derive_seed(seed, "retail-query-fixup"));
  for (int id : rule_ids) {
    const DiscountRule& rule = rules[id];
    if (!rule.requires_category) continue;
    std::int64_t cat_cents = 0;
    for (const auto& item : q.cart) {
      if (item.category == *rule.requires_category) {
        cat_cents += item.unit_price_cents * item.quantity;
      }
    }
    if (cat_cents >= std::max<std::int64_t>(rule.min_category_subtotal_cents, 1)) continue;
    CartItem& item = q.cart[rng.bounded(q.cart.size())];
    item.category = *rule.requires_category;
    const std::int64_t need = std::max<std::int64_t>(rule.min_category_subtotal_cents, 100);
    const std::int64_t dollars = (need + item.quantity * 100 - 1) / (item.quantity * 100);
    if (item.unit_price_cents < dollars * 100) item.unit_price_cents = dollars * 100;
  }
  std::int64_t total = 0;
  for (const auto& item : q.cart) total += item.unit_price_cents * item.quantity;
  std::int64_t need_total = 0;
  for (int id : rule_ids) need_total = std::max(need_total, rules[id].min_total_cents);
  if (total < need_total) {
    const std::int64_t deficit_dollars = (need_total - total + 99) / 100;
    q.cart.front().unit_price_cents +=
        ((deficit_dollars + q.cart.front().quantity - 1) / q.cart.front().quantity) * 100;
  }
  return render_query(q);
}

std::string answer_query_generation(std::string_view prompt, const SamplingParams& params) {
  const auto selection = between(prompt, "would apply:\n\n", "\n\nInstructions:");
  if (!selection) return "";
  std::vector<int> rule_ids;
  std::vector<std::string> free_lines;
  for (const auto& raw : split_lines(*selection)) {
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (auto id = retail::match_rule_text(line)) {
      rule_ids.push_back(*id);
    } else {
      free_lines.push_back(line);
    }
  }
  const std::uint64_t seed = fnv1a64(std::string(prompt), 0x9e37) ^ params.seed;
  if (!rule_ids.empty()) return retail_query_for_rules(rule_ids, seed);

  // Unrecognized material: a deterministic, selection-derived question.
  std::string topic = free_lines.empty() ? std::string("the guidelines") : free_lines.front();
  if (topic.size() > 60) topic = topic.substr(0, 60);
  std::ostringstream out;
  out << "In scenario " << (seed % 100000) << ", how should one proceed given that " << topic
      << "?";
  return out.str();
}

// --- verification ----------------------------------------------------------

const std::set<std::string>& stopwords() {
  static const std::set<std::string> kStop = {
      "that", "this", "with", "from", "have", "been", "will", "when", "what",
      "then", "than", "them", "they", "should", "would", "could", "about",
      "only", "also", "each", "apply", "applies", "following"};
  return kStop;
}

std::vector<std::string> content_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 4 && stopwords().count(cur) == 0) words.push_back(cur);
    cur.clear();
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      flush();
    }
  }
  flush();
  return words;
}

bool unit_applies(const std::string& query, const std::string& unit) {
  if (auto rule_id = retail::match_rule_text(unit)) {
    if (auto q = retail::parse_rendered_query(query)) {
      return retail::condition_holds(retail::canonical_rules()[*rule_id], *q);
    }
  }
  const std::string query_lower = lower(query);
  for (const auto& word : content_words(unit)) {
    if (query_lower.find(word) != std::string::npos) return true;
  }
  return false;
}

std::string answer_verification(std::string_view prompt) {
  const auto query = between(prompt, "Question:\n", "\n\nGuideline:\n");
  const auto unit = between(prompt, "\n\nGuideline:\n", "\n\nAnswer Yes or No");
  if (!query || !unit) return "No";
  return unit_applies(std::string(*query), std::string(*unit)) ? "Yes" : "No";
}

std::string answer_verification_batched(std::string_view prompt) {
  const auto query = between(prompt, "Question:\n", "\n\nGuidelines:\n");
  const auto units_block = between(prompt, "\n\nGuidelines:\n", "\n\nList the numbers");
  if (!query || !units_block) return "none";
  const std::string query_str(*query);
  std::string reply;
  int number = 0;
  for (const auto& unit : numbered_items(*units_block)) {
    ++number;
    if (unit_applies(query_str, unit)) {
      if (!reply.empty()) reply += ", ";
      reply += std::to_string(number);
    }
  }
  return reply.empty() ? "none" : reply;
}

// --- rollout ---------------------------------------------------------------

/// Distraction threshold: with more than this many inapplicable rules in the
/// prompt the mock teacher "loses" the best total discount, so its answer
/// quality degrades exactly when the context is poorly sieved.
constexpr int kDistractorTolerance = 10;

std::string answer_retail_rollout(const retail::RetailQuery& q, std::string_view prompt) {
  using namespace retail;
  std::vector<DiscountRule> present;
  int distractors = 0;
  for (const auto& raw : split_lines(prompt)) {
    const std::string line = trim(raw);
    if (auto id = match_rule_text(line)) {
      const DiscountRule& rule = canonical_rules()[*id];
      present.push_back(rule);
      if (!condition_holds(rule, q)) ++distractors;
    }
  }
  if (present.empty()) present = canonical_rules();

  if (distractors > kDistractorTolerance) {
    // Overloaded context: drop the strongest applicable total-percent rule,
    // as an attention failure would.
    const DiscountRule* best = nullptr;
    for (const auto& rule : present) {
      if (rule.kind == ActionKind::kTotalPercent && condition_holds(rule, q) &&
          (best == nullptr || rule.percent > best->percent)) {
        best = &rule;
      }
    }
    if (best != nullptr) {
      const int drop_id = best->rule_id;
      present.erase(std::remove_if(present.begin(), present.end(),
                                   [drop_id](const DiscountRule& r) {
                                     return r.rule_id == drop_id;
                                   }),
                    present.end());
    }
  }

  const PriceBreakdown breakdown = compute_price(q, present);
  std::string out = "Original subtotal: $" + format_cents(breakdown.original_subtotal_cents) + "\n";
  for (const auto& [cat, stage] : breakdown.per_category_stage1) {
    if (stage.percent == 0) continue;
    out += "Step 1: " + std::string(to_string(cat)) + " subtotal $" +
           format_cents(stage.subtotal_cents) + " gets " + std::to_string(stage.percent) +
           "% off.\n";
  }
  if (breakdown.stage2_percent > 0) {
    out += "Step 2: " + std::to_string(breakdown.stage2_percent) + "% off the running total.\n";
  }
  if (breakdown.fixed_total_cents > 0) {
    out += "Step 3: $" + format_cents(breakdown.fixed_total_cents) + " fixed discount.\n";
  }
  out += "Final Price: $" + format_cents(breakdown.final_price_cents);
  return out;
}

std::string answer_freeform(std::string_view prompt, const SamplingParams& params) {
  if (auto q = retail::parse_rendered_query(prompt)) {
    return answer_retail_rollout(*q, prompt);
  }
  const std::uint64_t h = fnv1a64(std::string(prompt), 0xf00d) ^ params.seed;
  return "Answer " + std::to_string(h % 100000) + ".";
}

/// Synthesizes a per-character top-logprobs channel over the reply: the
/// emitted character carries probability 0.9 and the remaining 0.1 is split
/// over alternatives drawn from the reply's own alphabet, so every token the
/// channel mentions also appears in the text.
void attach_char_logprobs(BackendReply& reply, int top_n) {
  std::vector<char> alphabet;
  for (char c : reply.text) {
    if (std::find(alphabet.begin(), alphabet.end(), c) == alphabet.end()) {
      alphabet.push_back(c);
    }
  }
  for (char c : reply.text) {
    TokenTopLogprobs tok;
    tok.token = std::string(1, c);
    const std::size_t self_index = static_cast<std::size_t>(
        std::find(alphabet.begin(), alphabet.end(), c) - alphabet.begin());
    const int n_alternatives =
        std::min<int>(top_n - 1, static_cast<int>(alphabet.size()) - 1);
    if (n_alternatives <= 0) {
      tok.top.emplace_back(tok.token, 0.0);  // log 1: the only possible character
    } else {
      tok.top.emplace_back(tok.token, std::log(0.9));
      const double alt_logprob = std::log(0.1 / n_alternatives);
      for (int k = 1; k <= n_alternatives; ++k) {
        const char alt = alphabet[(self_index + k) % alphabet.size()];
        tok.top.emplace_back(std::string(1, alt), alt_logprob);
      }
    }
    reply.logprobs.push_back(std::move(tok));
  }
}

}  // namespace

ScriptedBackend::Fn generic_scripted_model() {
  return [](Role /*role*/, const std::string& prompt,
            const SamplingParams& params) -> BackendReply {
    BackendReply reply;
    if (prompt.rfind("Break down the following", 0) == 0) {
      reply.text = answer_decomposition(prompt);
    } else if (prompt.rfind("Task: Select 3-5 guidelines", 0) == 0) {
      reply.text = answer_seed_selection(prompt, params);
    } else if (prompt.rfind("Generate a realistic question", 0) == 0) {
      reply.text = answer_query_generation(prompt, params);
    } else if (prompt.rfind("Question:\n", 0) == 0 &&
               prompt.find("\n\nGuideline:\n") != std::string::npos) {
      reply.text = answer_verification(prompt);
    } else if (prompt.rfind("Question:\n", 0) == 0 &&
               prompt.find("\n\nGuidelines:\n") != std::string::npos) {
      reply.text = answer_verification_batched(prompt);
    } else {
      reply.text = answer_freeform(prompt, params);
      if (params.top_logprobs > 0) attach_char_logprobs(reply, params.top_logprobs);
    }
    return reply;
  };
}

}  // namespace ctxdistill::gen
