#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ctxdistill::retail {

enum class CustomerType { kStudent, kSenior, kVeteran, kEmployee, kTeacher, kRegular };
inline constexpr int kNumCustomerTypes = 6;

enum class ProductCategory {
  kElectronics,
  kClothing,
  kBooks,
  kFood,
  kHome,
  kSports,
  kBeauty,
  kHealth
};
inline constexpr int kNumCategories = 8;

enum class PromoCode { kSave20, kWelcome10, kStudent15, kHoliday30, kNewbie5, kTeacher10, kBulk10 };
inline constexpr int kNumPromoCodes = 7;

std::string_view to_string(CustomerType c);
std::string_view to_string(ProductCategory c);
std::string_view to_string(PromoCode p);
std::optional<CustomerType> customer_from_string(std::string_view s);
/// Accepts the canonical names plus the "apparel" alias for clothing.
std::optional<ProductCategory> category_from_string(std::string_view s);
std::optional<PromoCode> promo_from_string(std::string_view s);

struct CartItem {
  std::string name;
  ProductCategory category = ProductCategory::kElectronics;
  std::int64_t unit_price_cents = 0;
  int quantity = 1;
};

struct RetailQuery {
  CustomerType customer = CustomerType::kRegular;
  int membership_years = 0;
  std::vector<CartItem> cart;  ///< 1..5 items
  std::optional<PromoCode> promo;
};

enum class ActionKind { kCategoryPercent, kTotalPercent, kFixedAmount };

/// One conditional discount. Every populated condition component must hold;
/// all thresholds are evaluated on the ORIGINAL pre-discount subtotals.
struct DiscountRule {
  int rule_id = 0;

  std::optional<CustomerType> customer;
  std::optional<PromoCode> promo;
  int min_membership_years = 0;                      ///< 0 = unconstrained
  std::optional<ProductCategory> requires_category;  ///< cart must contain an item of this
  std::int64_t min_category_subtotal_cents = 0;      ///< with requires_category
  std::int64_t min_total_cents = 0;                  ///< original cart subtotal threshold

  ActionKind kind = ActionKind::kTotalPercent;
  std::optional<ProductCategory> target_category;  ///< kCategoryPercent only
  int percent = 0;
  std::int64_t fixed_cents = 0;

  std::string text;  ///< natural-language wording
};

/// The canonical 30-rule set, in corpus order.
const std::vector<DiscountRule>& canonical_rules();

/// The rule list rendered as a natural-language corpus ("Discount Rules:"
/// header plus one "- If ..." line per rule).
std::string rules_corpus_text();
std::string_view rule_text(int rule_id);

bool condition_holds(const DiscountRule& rule, const RetailQuery& query);

/// Running totals are carried as integer cents scaled by kMoneyScale, which
/// absorbs the two percent divisions exactly; rounding happens once, at the
/// final price.
inline constexpr std::int64_t kMoneyScale = 1'000'000;

struct CategoryStage {
  int percent = 0;  ///< chosen (highest applicable) percent, 0 if none fired
  std::int64_t subtotal_cents = 0;    ///< original category subtotal
  std::int64_t post_scaled = 0;       ///< post-discount subtotal, cents * kMoneyScale
};

struct PriceBreakdown {
  std::int64_t original_subtotal_cents = 0;
  std::map<ProductCategory, CategoryStage> per_category_stage1;
  int stage2_percent = 0;  ///< 0 if no total-percent rule fired
  std::int64_t fixed_total_cents = 0;
  std::int64_t final_price_cents = 0;
};

/// Three-stage pricing: per-category highest percent on each category
/// subtotal, then highest total percent on the running total, then the sum
/// of all firing fixed discounts, floored at zero. Exact arithmetic
/// throughout; the final price is rounded half-up to cents.
PriceBreakdown compute_price(const RetailQuery& query, const std::vector<DiscountRule>& rules);

enum class ApplicabilityMode {
  kWinners,         ///< rules whose action changed the breakdown (stage winners + firing fixed)
  kConditionHolds,  ///< every rule whose condition predicate holds
};

std::set<int> applicable_rules(const RetailQuery& query, const std::vector<DiscountRule>& rules,
                               ApplicabilityMode mode = ApplicabilityMode::kWinners);

struct QueryGenConfig {
  int item_count_min = 1;
  int item_count_max = 5;
  int quantity_min = 1;
  int quantity_max = 3;
  std::int64_t price_min_cents = 500;
  std::int64_t price_max_cents = 12000;
  bool whole_dollar_prices = true;
  double promo_probability = 0.4;
  int years_min = 0;
  int years_max = 10;
};

/// Deterministic under a fixed seed, on any platform.
RetailQuery generate_query(std::uint64_t seed, const QueryGenConfig& config = {});

/// Renders the fixed evaluation-query layout (header, customer profile,
/// cart, promo line, discount-order instruction block). Byte-stable.
std::string render_query(const RetailQuery& query);

/// Inverse of render_query: recovers the structured query from rendered
/// text, tolerating extra trailing content. Returns nothing if the expected
/// sections or fields cannot be parsed.
std::optional<RetailQuery> parse_rendered_query(std::string_view text);

/// Identifies which canonical rule a piece of text states, by normalized
/// (case- and whitespace-insensitive) comparison. Leading list markers are
/// ignored.
std::optional<int> match_rule_text(std::string_view text);

/// True iff the output's final answer is within $0.01 of the truth.
/// Unparseable output grades incorrect.
bool grade(const std::string& model_output, const PriceBreakdown& truth);

std::string format_cents(std::int64_t cents);

// --- evaluation-set persistence ------------------------------------------

struct EvalRecord {
  std::uint64_t seed = 0;
  RetailQuery query;
  std::string rendered_text;
  std::int64_t final_price_cents = 0;
  std::set<int> winners;
};

EvalRecord make_eval_record(std::uint64_t seed, const QueryGenConfig& config = {});

nlohmann::ordered_json eval_record_to_json(const EvalRecord& rec);
EvalRecord eval_record_from_json(const nlohmann::json& j);

void write_eval_set(const std::string& path, const std::vector<EvalRecord>& records,
                    const nlohmann::json& config);
std::vector<EvalRecord> read_eval_set(const std::string& path);

}  // namespace ctxdistill::retail
