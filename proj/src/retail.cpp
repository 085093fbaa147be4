#include "ctxdistill/retail.hpp"

#include <algorithm>
#include <array>
#include <sstream>

#include "ctxdistill/errors.hpp"
#include "ctxdistill/eval.hpp"
#include "ctxdistill/jsonl.hpp"
#include "ctxdistill/rng.hpp"

namespace ctxdistill::retail {
namespace {

constexpr std::array<std::string_view, kNumCustomerTypes> kCustomerNames = {
    "student", "senior", "veteran", "employee", "teacher", "regular"};

constexpr std::array<std::string_view, kNumCategories> kCategoryNames = {
    "electronics", "clothing", "books", "food", "home", "sports", "beauty", "health"};

constexpr std::array<std::string_view, kNumPromoCodes> kPromoNames = {
    "SAVE20", "WELCOME10", "STUDENT15", "HOLIDAY30", "NEWBIE5", "TEACHER10", "BULK10"};

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string_view to_string(CustomerType c) { return kCustomerNames[static_cast<int>(c)]; }
std::string_view to_string(ProductCategory c) { return kCategoryNames[static_cast<int>(c)]; }
std::string_view to_string(PromoCode p) { return kPromoNames[static_cast<int>(p)]; }

std::optional<CustomerType> customer_from_string(std::string_view s) {
  const std::string needle = lower(s);
  for (int i = 0; i < kNumCustomerTypes; ++i) {
    if (needle == kCustomerNames[i]) return static_cast<CustomerType>(i);
  }
  if (needle == "senior citizen") return CustomerType::kSenior;
  return std::nullopt;
}

std::optional<ProductCategory> category_from_string(std::string_view s) {
  const std::string needle = lower(s);
  for (int i = 0; i < kNumCategories; ++i) {
    if (needle == kCategoryNames[i]) return static_cast<ProductCategory>(i);
  }
  if (needle == "apparel") return ProductCategory::kClothing;
  return std::nullopt;
}

std::optional<PromoCode> promo_from_string(std::string_view s) {
  const std::string needle = upper(s);
  for (int i = 0; i < kNumPromoCodes; ++i) {
    if (needle == kPromoNames[i]) return static_cast<PromoCode>(i);
  }
  return std::nullopt;
}

const std::vector<DiscountRule>& canonical_rules() {
  static const std::vector<DiscountRule> rules = [] {
    using C = CustomerType;
    using P = ProductCategory;
    using Promo = PromoCode;
    std::vector<DiscountRule> r;
    auto add = [&r](DiscountRule rule) {
      rule.rule_id = static_cast<int>(r.size());
      r.push_back(std::move(rule));
    };

    auto customer_total = [](C c, std::int64_t min_total, int pct, std::string text) {
      DiscountRule rule;
      rule.customer = c;
      rule.min_total_cents = min_total;
      rule.kind = ActionKind::kTotalPercent;
      rule.percent = pct;
      rule.text = std::move(text);
      return rule;
    };
    auto customer_category = [](C c, P cat, int pct, std::string text) {
      DiscountRule rule;
      rule.customer = c;
      rule.requires_category = cat;
      rule.kind = ActionKind::kCategoryPercent;
      rule.target_category = cat;
      rule.percent = pct;
      rule.text = std::move(text);
      return rule;
    };

    add(customer_total(C::kStudent, 5000, 10,
                       "If customer is a student AND total spend is at least $50, apply 10% "
                       "discount to total purchase"));
    add(customer_total(C::kSenior, 5000, 15,
                       "If customer is a senior citizen AND total spend is at least $50, apply "
                       "15% discount to total purchase"));
    add(customer_total(C::kEmployee, 5000, 20,
                       "If customer is a employee AND total spend is at least $50, apply 20% "
                       "discount to total purchase"));
    add(customer_total(C::kTeacher, 5000, 10,
                       "If customer is a teacher AND total spend is at least $50, apply 10% "
                       "discount to total purchase"));

    add(customer_category(C::kStudent, P::kElectronics, 15,
                          "If customer is a student AND cart contains electronics, apply 15% "
                          "discount on electronics items only"));
    add(customer_category(C::kStudent, P::kBooks, 15,
                          "If customer is a student AND cart contains books, apply 15% discount "
                          "on books items only"));
    add(customer_category(C::kSenior, P::kFood, 20,
                          "If customer is a senior citizen AND cart contains food, apply 20% "
                          "discount on food items only"));
    add(customer_category(C::kVeteran, P::kElectronics, 5,
                          "If customer is a veteran AND cart contains electronics, apply 5% "
                          "discount on electronics items only"));
    add(customer_category(C::kEmployee, P::kHome, 25,
                          "If customer is a employee AND cart contains home, apply 25% discount "
                          "on home items only"));
    add(customer_category(C::kTeacher, P::kBooks, 15,
                          "If customer is a teacher AND cart contains books, apply 15% discount "
                          "on books items only"));

    {
      DiscountRule rule;
      rule.promo = Promo::kSave20;
      rule.min_total_cents = 10000;
      rule.kind = ActionKind::kTotalPercent;
      rule.percent = 20;
      rule.text =
          "If promo code is 'SAVE20' AND total spend is at least $100, apply 20% discount to "
          "total purchase";
      add(rule);
    }
    {
      DiscountRule rule;
      rule.promo = Promo::kWelcome10;
      rule.kind = ActionKind::kFixedAmount;
      rule.fixed_cents = 1000;
      rule.text = "If promo code is 'WELCOME10', apply $10 fixed discount";
      add(rule);
    }
    {
      DiscountRule rule;
      rule.customer = C::kStudent;
      rule.promo = Promo::kStudent15;
      rule.kind = ActionKind::kTotalPercent;
      rule.percent = 15;
      rule.text =
          "If customer is a student AND promo code is 'STUDENT15', apply 15% discount to total "
          "purchase";
      add(rule);
    }
    {
      DiscountRule rule;
      rule.promo = Promo::kHoliday30;
      rule.min_total_cents = 15000;
      rule.kind = ActionKind::kTotalPercent;
      rule.percent = 30;
      rule.text =
          "If promo code is 'HOLIDAY30' AND total spend is at least $150, apply 30% discount to "
          "total purchase";
      add(rule);
    }
    {
      DiscountRule rule;
      rule.promo = Promo::kNewbie5;
      rule.kind = ActionKind::kFixedAmount;
      rule.fixed_cents = 500;
      rule.text = "If promo code is 'NEWBIE5', apply $5 fixed discount";
      add(rule);
    }
    {
      DiscountRule rule;
      rule.customer = C::kTeacher;
      rule.promo = Promo::kTeacher10;
      rule.kind = ActionKind::kTotalPercent;
      rule.percent = 10;
      rule.text =
          "If customer is a teacher AND promo code is 'TEACHER10', apply 10% discount to total "
          "purchase";
      add(rule);
    }
    {
      DiscountRule rule;
      rule.promo = Promo::kBulk10;
      rule.min_total_cents = 20000;
      rule.kind = ActionKind::kTotalPercent;
      rule.percent = 10;
      rule.text =
          "If promo code is 'BULK10' AND total spend is at least $200, apply 10% discount to "
          "total purchase";
      add(rule);
    }

    {
      DiscountRule rule;
      rule.min_total_cents = 15000;
      rule.kind = ActionKind::kTotalPercent;
      rule.percent = 5;
      rule.text = "If total spend is at least $150, apply 5% discount to total purchase";
      add(rule);
    }
    {
      DiscountRule rule;
      rule.min_total_cents = 20000;
      rule.kind = ActionKind::kTotalPercent;
      rule.percent = 10;
      rule.text = "If total spend is at least $200, apply 10% discount to total purchase";
      add(rule);
    }

    struct CatThreshold {
      P cat;
      std::int64_t cents;
      std::string_view dollars;
    };
    constexpr std::array<CatThreshold, 8> kThresholds = {{
        {P::kElectronics, 30000, "$300"},
        {P::kClothing, 7500, "$75"},
        {P::kBooks, 4500, "$45"},
        {P::kFood, 3000, "$30"},
        {P::kHome, 6000, "$60"},
        {P::kSports, 9000, "$90"},
        {P::kBeauty, 5200, "$52"},
        {P::kHealth, 7500, "$75"},
    }};
    for (const auto& t : kThresholds) {
      DiscountRule rule;
      rule.requires_category = t.cat;
      rule.min_category_subtotal_cents = t.cents;
      rule.kind = ActionKind::kCategoryPercent;
      rule.target_category = t.cat;
      rule.percent = 10;
      std::string cat(to_string(t.cat));
      rule.text = "If cart contains " + cat + " items AND total " + cat + " spend is " +
                  std::string(t.dollars) + " or greater, apply 10% discount on " + cat +
                  " items only";
      add(rule);
    }

    struct Loyalty {
      int years;
      int pct;
    };
    constexpr std::array<Loyalty, 3> kLoyalty = {{{1, 5}, {3, 10}, {5, 15}}};
    for (const auto& l : kLoyalty) {
      DiscountRule rule;
      rule.min_membership_years = l.years;
      rule.kind = ActionKind::kTotalPercent;
      rule.percent = l.pct;
      rule.text = "If customer has been a member for " + std::to_string(l.years) +
                  " or more years, apply " + std::to_string(l.pct) +
                  "% discount to total purchase";
      add(rule);
    }

    return r;
  }();
  return rules;
}

std::string rules_corpus_text() {
  std::string out = "Discount Rules:";
  for (const auto& rule : canonical_rules()) {
    out += "\n- ";
    out += rule.text;
  }
  out += "\n";
  return out;
}

std::string_view rule_text(int rule_id) {
  const auto& rules = canonical_rules();
  if (rule_id < 0 || rule_id >= static_cast<int>(rules.size())) {
    throw InputError("rule_text: rule_id out of range: " + std::to_string(rule_id));
  }
  return rules[rule_id].text;
}

namespace {

struct CartTotals {
  std::int64_t total_cents = 0;
  std::map<ProductCategory, std::int64_t> category_cents;
  std::map<ProductCategory, int> category_items;
};

CartTotals cart_totals(const RetailQuery& query) {
  CartTotals t;
  for (const auto& item : query.cart) {
    if (item.quantity < 1) throw InputError("cart item quantity must be >= 1");
    if (item.unit_price_cents < 0) throw InputError("cart item price must be >= 0");
    const std::int64_t line = item.unit_price_cents * item.quantity;
    t.total_cents += line;
    t.category_cents[item.category] += line;
    t.category_items[item.category] += item.quantity;
  }
  return t;
}

bool condition_holds_impl(const DiscountRule& rule, const RetailQuery& query,
                          const CartTotals& totals) {
  if (rule.customer && *rule.customer != query.customer) return false;
  if (rule.promo && (!query.promo || *rule.promo != *query.promo)) return false;
  if (query.membership_years < rule.min_membership_years) return false;
  if (rule.requires_category) {
    auto it = totals.category_items.find(*rule.requires_category);
    if (it == totals.category_items.end() || it->second < 1) return false;
    const std::int64_t cat_cents = totals.category_cents.at(*rule.requires_category);
    if (cat_cents < rule.min_category_subtotal_cents) return false;
  }
  if (totals.total_cents < rule.min_total_cents) return false;
  return true;
}

/// Stage winners: per category the highest applicable category percent, the
/// highest applicable total percent, and every firing fixed discount. Ties
/// on percent break toward the lowest rule_id.
struct StageResolution {
  std::map<ProductCategory, const DiscountRule*> category_winner;
  const DiscountRule* total_winner = nullptr;
  std::vector<const DiscountRule*> fixed_rules;
};

StageResolution resolve_stages(const RetailQuery& query, const std::vector<DiscountRule>& rules,
                               const CartTotals& totals) {
  StageResolution res;
  for (const auto& rule : rules) {
    if (!condition_holds_impl(rule, query, totals)) continue;
    switch (rule.kind) {
      case ActionKind::kCategoryPercent: {
        if (!rule.target_category) {
          throw ConfigError("category-percent rule lacks a target category (rule " +
                            std::to_string(rule.rule_id) + ")");
        }
        // A category discount only matters if the cart has that category.
        if (totals.category_items.find(*rule.target_category) == totals.category_items.end()) {
          break;
        }
        auto [it, inserted] = res.category_winner.try_emplace(*rule.target_category, &rule);
        if (!inserted && rule.percent > it->second->percent) it->second = &rule;
        break;
      }
      case ActionKind::kTotalPercent:
        if (res.total_winner == nullptr || rule.percent > res.total_winner->percent) {
          res.total_winner = &rule;
        }
        break;
      case ActionKind::kFixedAmount:
        res.fixed_rules.push_back(&rule);
        break;
    }
  }
  return res;
}

}  // namespace

bool condition_holds(const DiscountRule& rule, const RetailQuery& query) {
  return condition_holds_impl(rule, query, cart_totals(query));
}

PriceBreakdown compute_price(const RetailQuery& query, const std::vector<DiscountRule>& rules) {
  if (query.cart.empty()) throw InputError("compute_price: cart is empty");
  const CartTotals totals = cart_totals(query);
  const StageResolution stages = resolve_stages(query, rules, totals);

  PriceBreakdown out;
  out.original_subtotal_cents = totals.total_cents;

  // Stage 1: per-category percents on the original category subtotals.
  // kMoneyScale carries two factors of 100, so each percent division here and
  // in stage 2 is exact.
  std::int64_t running_scaled = 0;
  for (const auto& [cat, cents] : totals.category_cents) {
    CategoryStage stage;
    stage.subtotal_cents = cents;
    auto it = stages.category_winner.find(cat);
    stage.percent = (it != stages.category_winner.end()) ? it->second->percent : 0;
    stage.post_scaled = cents * kMoneyScale / 100 * (100 - stage.percent);
    running_scaled += stage.post_scaled;
    out.per_category_stage1.emplace(cat, stage);
  }

  // Stage 2: highest total percent on the running total.
  out.stage2_percent = stages.total_winner ? stages.total_winner->percent : 0;
  running_scaled = running_scaled / 100 * (100 - out.stage2_percent);

  // Stage 3: all firing fixed discounts, floored at zero.
  for (const DiscountRule* rule : stages.fixed_rules) out.fixed_total_cents += rule->fixed_cents;
  running_scaled -= out.fixed_total_cents * kMoneyScale;
  if (running_scaled < 0) running_scaled = 0;

  out.final_price_cents = (running_scaled + kMoneyScale / 2) / kMoneyScale;  // half-up
  return out;
}

std::set<int> applicable_rules(const RetailQuery& query, const std::vector<DiscountRule>& rules,
                               ApplicabilityMode mode) {
  const CartTotals totals = cart_totals(query);
  std::set<int> ids;
  if (mode == ApplicabilityMode::kConditionHolds) {
    for (const auto& rule : rules) {
      if (condition_holds_impl(rule, query, totals)) ids.insert(rule.rule_id);
    }
    return ids;
  }
  const StageResolution stages = resolve_stages(query, rules, totals);
  for (const auto& [cat, rule] : stages.category_winner) ids.insert(rule->rule_id);
  if (stages.total_winner) ids.insert(stages.total_winner->rule_id);
  for (const DiscountRule* rule : stages.fixed_rules) ids.insert(rule->rule_id);
  return ids;
}

namespace {

constexpr std::array<std::array<std::string_view, 4>, kNumCategories> kProductNames = {{
    {"Laptop", "Headphones", "Camera", "Smartwatch"},          // electronics
    {"Shoes", "Jacket", "Sweater", "Jeans"},                   // clothing
    {"Novel", "Textbook", "Cookbook", "Atlas"},                // books
    {"Coffee", "Chocolate", "Pasta", "Olive Oil"},             // food
    {"Coffee Maker", "Desk Lamp", "Blender", "Cushion"},       // home
    {"Yoga Mat", "Dumbbells", "Tennis Racket", "Soccer Ball"}, // sports
    {"Perfume", "Lipstick", "Face Cream", "Shampoo"},          // beauty
    {"Vitamins", "First Aid Kit", "Thermometer", "Protein Powder"},  // health
}};

void validate_gen_config(const QueryGenConfig& c) {
  if (c.item_count_min < 1 || c.item_count_max < c.item_count_min) {
    throw ConfigError("query generation: item count bounds invalid");
  }
  if (c.quantity_min < 1 || c.quantity_max < c.quantity_min) {
    throw ConfigError("query generation: quantity bounds invalid");
  }
  if (c.price_min_cents < 0 || c.price_max_cents < c.price_min_cents) {
    throw ConfigError("query generation: price bounds invalid");
  }
  if (c.whole_dollar_prices && c.price_max_cents < 100) {
    throw ConfigError("query generation: whole-dollar prices need a max of at least $1");
  }
  if (c.promo_probability < 0.0 || c.promo_probability > 1.0) {
    throw ConfigError("query generation: promo probability must be in [0, 1]");
  }
  if (c.years_min < 0 || c.years_max < c.years_min) {
    throw ConfigError("query generation: membership-year bounds invalid");
  }
}

}  // namespace

RetailQuery generate_query(std::uint64_t seed, const QueryGenConfig& config) {
  validate_gen_config(config);
  Rng rng(seed);
  RetailQuery q;
  q.customer = static_cast<CustomerType>(rng.bounded(kNumCustomerTypes));
  q.membership_years = rng.range(config.years_min, config.years_max);
  const int n_items = rng.range(config.item_count_min, config.item_count_max);
  for (int i = 0; i < n_items; ++i) {
    CartItem item;
    const int cat = static_cast<int>(rng.bounded(kNumCategories));
    item.category = static_cast<ProductCategory>(cat);
    item.name = std::string(kProductNames[cat][rng.bounded(kProductNames[cat].size())]);
    if (config.whole_dollar_prices) {
      const std::int64_t lo = (config.price_min_cents + 99) / 100;
      const std::int64_t hi = config.price_max_cents / 100;
      item.unit_price_cents =
          (lo >= hi ? hi : lo + static_cast<std::int64_t>(rng.bounded(hi - lo + 1))) * 100;
    } else {
      item.unit_price_cents =
          config.price_min_cents +
          static_cast<std::int64_t>(
              rng.bounded(config.price_max_cents - config.price_min_cents + 1));
    }
    item.quantity = rng.range(config.quantity_min, config.quantity_max);
    q.cart.push_back(std::move(item));
  }
  if (rng.bernoulli(config.promo_probability)) {
    q.promo = static_cast<PromoCode>(rng.bounded(kNumPromoCodes));
  }
  return q;
}

std::string format_cents(std::int64_t cents) {
  const bool neg = cents < 0;
  std::int64_t v = neg ? -cents : cents;
  std::string out = std::to_string(v / 100);
  const std::int64_t frac = v % 100;
  out += '.';
  out += static_cast<char>('0' + frac / 10);
  out += static_cast<char>('0' + frac % 10);
  if (neg) out.insert(out.begin(), '-');
  return out;
}

std::string render_query(const RetailQuery& query) {
  std::string out =
      "Calculate the final price for the following customer purchase after applying all "
      "applicable discount rules.\n\n";
  out += "Customer Profile:\n";
  out += "- Type: ";
  out += to_string(query.customer);
  out += "\n- Membership years: " + std::to_string(query.membership_years) + "\n\n";
  out += "Shopping Cart:\n";
  for (const auto& item : query.cart) {
    out += "- " + item.name + " (" + std::string(to_string(item.category)) + "): $" +
           format_cents(item.unit_price_cents) + " x " + std::to_string(item.quantity) + "\n";
  }
  out += "\nPromo code: ";
  out += query.promo ? std::string(to_string(*query.promo)) : "None";
  out += "\n\n";
  out +=
      "IMPORTANT: Apply discounts in this exact order to the running total:\n"
      "1. Category-specific percentage discounts (apply only the highest discount per category "
      "to each category's subtotal)\n"
      "2. Total purchase percentage discounts (apply only the highest total discount to the "
      "remaining amount after step 1)\n"
      "3. Fixed amount discounts (subtract from the remaining amount after step 2, sum all "
      "applicable fixed discounts)\n"
      "\n"
      "Note: Each discount applies to the current running total, not the original price.\n";
  return out;
}

namespace {

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::optional<std::int64_t> parse_price_cents(std::string_view s) {
  std::int64_t dollars = 0;
  std::size_t i = 0;
  bool any = false;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
    dollars = dollars * 10 + (s[i] - '0');
    any = true;
    ++i;
  }
  if (!any) return std::nullopt;
  std::int64_t cents = dollars * 100;
  if (i < s.size() && s[i] == '.') {
    ++i;
    int digits = 0;
    std::int64_t frac = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])) && digits < 2) {
      frac = frac * 10 + (s[i] - '0');
      ++digits;
      ++i;
    }
    if (digits == 0) return std::nullopt;
    if (digits == 1) frac *= 10;
    cents += frac;
  }
  if (i != s.size()) return std::nullopt;
  return cents;
}

std::optional<CartItem> parse_cart_line(std::string_view line) {
  // "- NAME (category): $PRICE x QTY"
  if (line.rfind("- ", 0) != 0) return std::nullopt;
  line.remove_prefix(2);
  const std::size_t close = line.find("): $");
  if (close == std::string_view::npos) return std::nullopt;
  const std::size_t open = line.rfind(" (", close);
  if (open == std::string_view::npos) return std::nullopt;
  CartItem item;
  item.name = std::string(line.substr(0, open));
  const auto cat = category_from_string(line.substr(open + 2, close - open - 2));
  if (!cat) return std::nullopt;
  item.category = *cat;
  std::string_view rest = line.substr(close + 4);
  const std::size_t x = rest.find(" x ");
  if (x == std::string_view::npos) return std::nullopt;
  const auto cents = parse_price_cents(rest.substr(0, x));
  if (!cents) return std::nullopt;
  item.unit_price_cents = *cents;
  std::string_view qty = rest.substr(x + 3);
  int q = 0;
  bool any = false;
  for (char c : qty) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
    q = q * 10 + (c - '0');
    any = true;
  }
  if (!any || q < 1) return std::nullopt;
  item.quantity = q;
  return item;
}

std::string normalize_rule_text(std::string_view text) {
  std::size_t begin = 0;
  while (begin < text.size() &&
         (std::isspace(static_cast<unsigned char>(text[begin])) || text[begin] == '-' ||
          text[begin] == '*')) {
    ++begin;
  }
  std::string out;
  bool pending_space = false;
  for (std::size_t i = begin; i < text.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

}  // namespace

std::optional<RetailQuery> parse_rendered_query(std::string_view text) {
  RetailQuery q;
  bool saw_customer = false, saw_years = false, saw_promo = false;
  enum class Section { kNone, kCart } section = Section::kNone;
  for (std::string_view line : split_lines(text)) {
    if (line.rfind("- Type: ", 0) == 0 && !saw_customer) {
      const auto customer = customer_from_string(line.substr(8));
      if (!customer) return std::nullopt;
      q.customer = *customer;
      saw_customer = true;
    } else if (line.rfind("- Membership years: ", 0) == 0 && !saw_years) {
      int years = 0;
      bool any = false;
      for (char c : line.substr(20)) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
        years = years * 10 + (c - '0');
        any = true;
      }
      if (!any) return std::nullopt;
      q.membership_years = years;
      saw_years = true;
    } else if (line == "Shopping Cart:") {
      section = Section::kCart;
    } else if (section == Section::kCart && line.rfind("- ", 0) == 0) {
      auto item = parse_cart_line(line);
      if (!item) return std::nullopt;
      q.cart.push_back(std::move(*item));
    } else if (line.rfind("Promo code: ", 0) == 0 && !saw_promo) {
      section = Section::kNone;
      const std::string_view code = line.substr(12);
      if (code != "None") {
        const auto promo = promo_from_string(code);
        if (!promo) return std::nullopt;
        q.promo = *promo;
      }
      saw_promo = true;
    } else if (!line.empty() && section == Section::kCart) {
      section = Section::kNone;
    }
  }
  if (!saw_customer || !saw_years || !saw_promo || q.cart.empty()) return std::nullopt;
  return q;
}

std::optional<int> match_rule_text(std::string_view text) {
  const std::string needle = normalize_rule_text(text);
  if (needle.empty()) return std::nullopt;
  for (const auto& rule : canonical_rules()) {
    if (normalize_rule_text(rule.text) == needle) return rule.rule_id;
  }
  return std::nullopt;
}

bool grade(const std::string& model_output, const PriceBreakdown& truth) {
  const auto answer = eval::extract_final_answer(model_output);
  if (!answer) return false;
  const std::int64_t diff = *answer - truth.final_price_cents;
  return diff >= -1 && diff <= 1;
}

EvalRecord make_eval_record(std::uint64_t seed, const QueryGenConfig& config) {
  EvalRecord rec;
  rec.seed = seed;
  rec.query = generate_query(seed, config);
  rec.rendered_text = render_query(rec.query);
  const PriceBreakdown breakdown = compute_price(rec.query, canonical_rules());
  rec.final_price_cents = breakdown.final_price_cents;
  rec.winners = applicable_rules(rec.query, canonical_rules(), ApplicabilityMode::kWinners);
  return rec;
}

nlohmann::ordered_json eval_record_to_json(const EvalRecord& rec) {
  nlohmann::ordered_json j;
  j["seed"] = rec.seed;
  j["customer"] = to_string(rec.query.customer);
  j["membership_years"] = rec.query.membership_years;
  nlohmann::ordered_json cart = nlohmann::ordered_json::array();
  for (const auto& item : rec.query.cart) {
    nlohmann::ordered_json ji;
    ji["name"] = item.name;
    ji["category"] = to_string(item.category);
    ji["unit_price_cents"] = item.unit_price_cents;
    ji["quantity"] = item.quantity;
    cart.push_back(std::move(ji));
  }
  j["cart"] = std::move(cart);
  if (rec.query.promo) {
    j["promo"] = to_string(*rec.query.promo);
  } else {
    j["promo"] = nullptr;
  }
  j["rendered_text"] = rec.rendered_text;
  j["final_price_cents"] = rec.final_price_cents;
  j["winners"] = rec.winners;
  return j;
}

EvalRecord eval_record_from_json(const nlohmann::json& j) {
  EvalRecord rec;
  rec.seed = j.at("seed").get<std::uint64_t>();
  const auto customer = customer_from_string(j.at("customer").get<std::string>());
  if (!customer) throw InputError("evaluation record: unknown customer type");
  rec.query.customer = *customer;
  rec.query.membership_years = j.at("membership_years").get<int>();
  for (const auto& ji : j.at("cart")) {
    CartItem item;
    item.name = ji.at("name").get<std::string>();
    const auto cat = category_from_string(ji.at("category").get<std::string>());
    if (!cat) throw InputError("evaluation record: unknown category");
    item.category = *cat;
    item.unit_price_cents = ji.at("unit_price_cents").get<std::int64_t>();
    item.quantity = ji.at("quantity").get<int>();
    rec.query.cart.push_back(std::move(item));
  }
  if (j.contains("promo") && !j.at("promo").is_null()) {
    const auto promo = promo_from_string(j.at("promo").get<std::string>());
    if (!promo) throw InputError("evaluation record: unknown promo code");
    rec.query.promo = *promo;
  }
  rec.rendered_text = j.at("rendered_text").get<std::string>();
  rec.final_price_cents = j.at("final_price_cents").get<std::int64_t>();
  for (const auto& w : j.at("winners")) rec.winners.insert(w.get<int>());
  return rec;
}

void write_eval_set(const std::string& path, const std::vector<EvalRecord>& records,
                    const nlohmann::json& config) {
  JsonlWriter writer(path, config);
  for (const auto& rec : records) writer.write(eval_record_to_json(rec));
}

std::vector<EvalRecord> read_eval_set(const std::string& path) {
  std::vector<EvalRecord> records;
  read_jsonl(path, [&records](const nlohmann::json& j) {
    records.push_back(eval_record_from_json(j));
  });
  return records;
}

}  // namespace ctxdistill::retail
