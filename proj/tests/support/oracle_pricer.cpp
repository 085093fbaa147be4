#include "support/oracle_pricer.hpp"

#include <algorithm>

namespace testsupport {

namespace {

using ctxdistill::retail::CustomerType;
using ctxdistill::retail::ProductCategory;
using ctxdistill::retail::PromoCode;
using ctxdistill::retail::RetailQuery;

/// Exact nonnegative rational with a tiny denominator (powers of 100).
/// Magnitudes stay far below 2^127: cents into the millions times 100^2.
struct Rat {
  __int128 num = 0;
  __int128 den = 1;

  void times_percent_off(int percent) {  // value *= (100 - percent) / 100
    num *= (100 - percent);
    den *= 100;
  }
  void minus_cents(std::int64_t cents) {  // value -= cents (floored at zero)
    num -= static_cast<__int128>(cents) * den;
    if (num < 0) num = 0;
  }
  std::int64_t rounded_cents() const {  // half-up
    return static_cast<std::int64_t>((2 * num + den) / (2 * den));
  }
};

bool has_category(const RetailQuery& q, ProductCategory c) {
  return std::any_of(q.cart.begin(), q.cart.end(),
                     [c](const auto& item) { return item.category == c; });
}

std::int64_t category_cents(const RetailQuery& q, ProductCategory c) {
  std::int64_t sum = 0;
  for (const auto& item : q.cart) {
    if (item.category == c) sum += item.unit_price_cents * item.quantity;
  }
  return sum;
}

bool promo_is(const RetailQuery& q, PromoCode p) { return q.promo && *q.promo == p; }

}  // namespace

std::int64_t oracle_final_price_cents(const RetailQuery& q) {
  std::int64_t total = 0;  // original pre-discount subtotal; every threshold reads this
  for (const auto& item : q.cart) total += item.unit_price_cents * item.quantity;

  // ---- Stage 1: per-category percents, highest one per category ---------
  // "If customer is a student AND cart contains electronics, 15% on electronics"
  // "If customer is a student AND cart contains books, 15% on books"
  // "If customer is a senior citizen AND cart contains food, 20% on food"
  // "If customer is a veteran AND cart contains electronics, 5% on electronics"
  // "If customer is a employee AND cart contains home, 25% on home"
  // "If customer is a teacher AND cart contains books, 15% on books"
  // "If total <category> spend is $<T> or greater, 10% on <category>" with
  // thresholds electronics 300, clothing 75, books 45, food 30, home 60,
  // sports 90, beauty 52, health 75 (dollars).
  Rat running;
  const ProductCategory cats[] = {
      ProductCategory::kElectronics, ProductCategory::kClothing, ProductCategory::kBooks,
      ProductCategory::kFood,        ProductCategory::kHome,     ProductCategory::kSports,
      ProductCategory::kBeauty,      ProductCategory::kHealth};
  for (ProductCategory cat : cats) {
    if (!has_category(q, cat)) continue;
    const std::int64_t sub = category_cents(q, cat);
    int best = 0;
    if (q.customer == CustomerType::kStudent && cat == ProductCategory::kElectronics)
      best = std::max(best, 15);
    if (q.customer == CustomerType::kStudent && cat == ProductCategory::kBooks)
      best = std::max(best, 15);
    if (q.customer == CustomerType::kSenior && cat == ProductCategory::kFood)
      best = std::max(best, 20);
    if (q.customer == CustomerType::kVeteran && cat == ProductCategory::kElectronics)
      best = std::max(best, 5);
    if (q.customer == CustomerType::kEmployee && cat == ProductCategory::kHome)
      best = std::max(best, 25);
    if (q.customer == CustomerType::kTeacher && cat == ProductCategory::kBooks)
      best = std::max(best, 15);
    if (cat == ProductCategory::kElectronics && sub >= 30000) best = std::max(best, 10);
    if (cat == ProductCategory::kClothing && sub >= 7500) best = std::max(best, 10);
    if (cat == ProductCategory::kBooks && sub >= 4500) best = std::max(best, 10);
    if (cat == ProductCategory::kFood && sub >= 3000) best = std::max(best, 10);
    if (cat == ProductCategory::kHome && sub >= 6000) best = std::max(best, 10);
    if (cat == ProductCategory::kSports && sub >= 9000) best = std::max(best, 10);
    if (cat == ProductCategory::kBeauty && sub >= 5200) best = std::max(best, 10);
    if (cat == ProductCategory::kHealth && sub >= 7500) best = std::max(best, 10);

    Rat part{sub, 1};
    if (best > 0) part.times_percent_off(best);
    running.num = running.num * part.den + part.num * running.den;
    running.den *= part.den;
  }

  // ---- Stage 2: total-purchase percents, highest one ---------------------
  // "student AND total >= $50 -> 10%", "senior citizen AND total >= $50 -> 15%",
  // "employee AND total >= $50 -> 20%", "teacher AND total >= $50 -> 10%",
  // "SAVE20 AND total >= $100 -> 20%", "student AND STUDENT15 -> 15%",
  // "HOLIDAY30 AND total >= $150 -> 30%", "teacher AND TEACHER10 -> 10%",
  // "BULK10 AND total >= $200 -> 10%", "total >= $150 -> 5%",
  // "total >= $200 -> 10%", "member 1+ years -> 5%", "3+ -> 10%", "5+ -> 15%".
  int best_total = 0;
  if (q.customer == CustomerType::kStudent && total >= 5000) best_total = std::max(best_total, 10);
  if (q.customer == CustomerType::kSenior && total >= 5000) best_total = std::max(best_total, 15);
  if (q.customer == CustomerType::kEmployee && total >= 5000) best_total = std::max(best_total, 20);
  if (q.customer == CustomerType::kTeacher && total >= 5000) best_total = std::max(best_total, 10);
  if (promo_is(q, PromoCode::kSave20) && total >= 10000) best_total = std::max(best_total, 20);
  if (q.customer == CustomerType::kStudent && promo_is(q, PromoCode::kStudent15))
    best_total = std::max(best_total, 15);
  if (promo_is(q, PromoCode::kHoliday30) && total >= 15000) best_total = std::max(best_total, 30);
  if (q.customer == CustomerType::kTeacher && promo_is(q, PromoCode::kTeacher10))
    best_total = std::max(best_total, 10);
  if (promo_is(q, PromoCode::kBulk10) && total >= 20000) best_total = std::max(best_total, 10);
  if (total >= 15000) best_total = std::max(best_total, 5);
  if (total >= 20000) best_total = std::max(best_total, 10);
  if (q.membership_years >= 1) best_total = std::max(best_total, 5);
  if (q.membership_years >= 3) best_total = std::max(best_total, 10);
  if (q.membership_years >= 5) best_total = std::max(best_total, 15);
  if (best_total > 0) running.times_percent_off(best_total);

  // ---- Stage 3: fixed discounts, all that fire, summed -------------------
  // "WELCOME10 -> $10 fixed", "NEWBIE5 -> $5 fixed".
  std::int64_t fixed = 0;
  if (promo_is(q, PromoCode::kWelcome10)) fixed += 1000;
  if (promo_is(q, PromoCode::kNewbie5)) fixed += 500;
  running.minus_cents(fixed);

  return running.rounded_cents();
}

}  // namespace testsupport
