// Acceptance gate for the toolkit. Each criterion prints exactly one
// [PASS]/[FAIL] line with its runtime; the process exits nonzero if any
// criterion fails or overruns its time budget. Run via ctest or directly.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ctxdistill/backend.hpp"
#include "ctxdistill/cache.hpp"
#include "ctxdistill/context.hpp"
#include "ctxdistill/distill.hpp"
#include "ctxdistill/eval.hpp"
#include "ctxdistill/jsonl.hpp"
#include "ctxdistill/pipeline.hpp"
#include "ctxdistill/retail.hpp"
#include "ctxdistill/rng.hpp"
#include "ctxdistill/student.hpp"
#include "ctxdistill/tokenizer.hpp"
#include "ctxdistill/train.hpp"
#include "support/chrf_oracle.hpp"
#include "support/golden.hpp"
#include "support/microtask.hpp"
#include "support/oracle_pricer.hpp"
#include "support/tempdir.hpp"

namespace {

using namespace ctxdistill;

[[noreturn]] void fail(const std::string& why) { throw std::runtime_error(why); }

std::string fmt(const char* pattern, ...) {
  char buf[512];
  va_list args;
  va_start(args, pattern);
  std::vsnprintf(buf, sizeof(buf), pattern, args);
  va_end(args);
  return buf;
}

// --- criterion 1: rule-engine agreement with the independent oracle --------

std::string check_oracle_agreement() {
  int checked = 0;
  const auto compare = [&checked](std::uint64_t seed, const retail::QueryGenConfig& config) {
    const retail::RetailQuery query = retail::generate_query(seed, config);
    const std::int64_t engine =
        retail::compute_price(query, retail::canonical_rules()).final_price_cents;
    const std::int64_t oracle = testsupport::oracle_final_price_cents(query);
    if (engine != oracle) {
      fail(fmt("price mismatch at seed %llu: engine %lld cents, oracle %lld cents",
               static_cast<unsigned long long>(seed), static_cast<long long>(engine),
               static_cast<long long>(oracle)));
    }
    ++checked;
  };

  for (std::uint64_t seed = 0; seed < 10000; ++seed) compare(seed, {});

  // A second sweep stresses cent-level prices, long carts and frequent promos.
  retail::QueryGenConfig stress;
  stress.whole_dollar_prices = false;
  stress.price_min_cents = 1;
  stress.price_max_cents = 40000;
  stress.quantity_max = 4;
  stress.promo_probability = 0.7;
  for (std::uint64_t seed = 0; seed < 2000; ++seed) compare(seed, stress);

  return fmt("%d random queries agree exactly", checked);
}

// --- criterion 2: hand-traced worked examples ------------------------------

retail::RetailQuery senior_worked_example() {
  retail::RetailQuery q;
  q.customer = retail::CustomerType::kSenior;
  q.membership_years = 4;
  q.cart = {{"Shoes", retail::ProductCategory::kClothing, 8500, 2},
            {"Jacket", retail::ProductCategory::kClothing, 6000, 1},
            {"Coffee Maker", retail::ProductCategory::kHome, 4500, 1}};
  return q;
}

std::string check_worked_examples() {
  // Senior, 4-year member, $230 cart: clothing 10% on $230-worth of
  // threshold-qualifying clothing, then the senior 15% on the running total.
  const auto senior = retail::compute_price(senior_worked_example(), retail::canonical_rules());
  // The $0.005 tolerance is half a cent, so integer cents must match exactly.
  if (senior.final_price_cents != 21420) {
    fail(fmt("senior example priced %lld cents, expected 21420",
             static_cast<long long>(senior.final_price_cents)));
  }
  if (testsupport::oracle_final_price_cents(senior_worked_example()) != 21420) {
    fail("independent oracle disagrees on the senior example");
  }

  // Student buying a $45 textbook with WELCOME10: 15% off books, then $10.
  retail::RetailQuery student;
  student.customer = retail::CustomerType::kStudent;
  student.cart = {{"Textbook", retail::ProductCategory::kBooks, 4500, 1}};
  student.promo = retail::PromoCode::kWelcome10;
  const auto books = retail::compute_price(student, retail::canonical_rules());
  if (books.final_price_cents != 2825) {
    fail(fmt("student books example priced %lld cents, expected 2825",
             static_cast<long long>(books.final_price_cents)));
  }
  if (testsupport::oracle_final_price_cents(student) != 2825) {
    fail("independent oracle disagrees on the student books example");
  }
  return "$214.20 and $28.25 both reproduce";
}

// --- criterion 3: chrF against the exhaustive n-gram oracle ----------------

std::string check_chrf_oracle() {
  if (std::abs(eval::chrf("same text!", "same text!") - 100.0) > 1e-9) {
    fail("identical strings must score 100");
  }
  if (std::abs(eval::chrf("aaa bbb", "ccc ddd")) > 1e-9) {
    fail("strings over disjoint alphabets must score 0");
  }

  Rng rng(911);
  const std::string alphabet = "aabbccddeeff gh.,";
  int compared = 0;
  for (int pair = 0; pair < 200; ++pair) {
    std::string hyp, ref;
    const int hyp_len = static_cast<int>(1 + rng.bounded(200));
    const int ref_len = static_cast<int>(1 + rng.bounded(200));
    for (int i = 0; i < hyp_len; ++i) hyp += alphabet[rng.bounded(alphabet.size())];
    for (int i = 0; i < ref_len; ++i) ref += alphabet[rng.bounded(alphabet.size())];
    const double fast = eval::chrf(hyp, ref);
    const double slow = testsupport::oracle_chrf(hyp, ref);
    if (std::abs(fast - slow) > 1e-6) {
      fail(fmt("pair %d: chrf %.9f vs oracle %.9f", pair, fast, slow));
    }
    ++compared;
  }
  return fmt("%d random pairs within 1e-6, plus the identity and disjoint edges", compared);
}

// --- criterion 4: analytic KL gradient vs central finite differences -------

std::string check_gradient() {
  Rng rng(20260823);
  int coords_checked = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    distill::StudentArch arch;
    arch.vocab_size = static_cast<int>(5 + rng.bounded(8));
    arch.embed_dim = static_cast<int>(2 + rng.bounded(3));
    arch.hidden_dim = static_cast<int>(4 + rng.bounded(5));
    arch.window = static_cast<int>(3 + rng.bounded(4));
    arch.pad_id = 0;
    const distill::StudentModel model(arch);
    const auto theta = model.init_params(rng.next_u64());

    std::vector<distill::DistillExample> batch;
    const int batch_size = static_cast<int>(1 + rng.bounded(3));
    for (int b = 0; b < batch_size; ++b) {
      distill::DistillExample ex;
      const int prompt_len = static_cast<int>(1 + rng.bounded(4));
      for (int i = 0; i < prompt_len; ++i) {
        ex.student_input.push_back(static_cast<int>(rng.bounded(arch.vocab_size)));
      }
      ex.teacher_input = ex.student_input;
      const int response_len = static_cast<int>(1 + rng.bounded(3));
      for (int p = 0; p < response_len; ++p) {
        ex.response.push_back(static_cast<int>(rng.bounded(arch.vocab_size)));
        std::vector<double> logits(arch.vocab_size);
        for (auto& v : logits) v = 2.0 * rng.next_gaussian();
        const int K = static_cast<int>(1 + rng.bounded(arch.vocab_size));
        ex.targets.push_back({p, distill::truncate_topk(logits, K)});
      }
      batch.push_back(std::move(ex));
    }
    const double tau = 0.7 + 0.2 * static_cast<double>(rng.bounded(5));

    const distill::GradResult analytic = distill::grad_kl(model, theta, batch, tau);
    const double h = 1e-4;
    for (int probe = 0; probe < 12; ++probe) {
      const std::size_t i = rng.bounded(theta.size());
      auto plus = theta, minus = theta;
      plus[i] += h;
      minus[i] -= h;
      const double fd = (distill::grad_kl(model, plus, batch, tau).loss -
                         distill::grad_kl(model, minus, batch, tau).loss) /
                        (2.0 * h);
      const double a = analytic.grad[i];
      const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), 1e-4});
      worst = std::max(worst, rel);
      if (rel >= 1e-4) {
        fail(fmt("trial %d coordinate %zu: analytic %.10g vs central difference %.10g "
                 "(relative error %.3g)",
                 trial, i, a, fd, rel));
      }
      ++coords_checked;
    }
  }
  return fmt("%d coordinates across 5 random models, worst relative error %.2g",
             coords_checked, worst);
}

// --- criterion 5: micro-task distillation quality --------------------------

bool held_out_pair(int customer, int product) {
  // Two products per customer are held out; every customer and every product
  // still appears in training, so the factorized price stays learnable.
  return product == 2 * customer || product == 2 * customer + 1;
}

std::string check_micro_distillation() {
  const auto vocab = testsupport::micro::make_vocab();
  if (vocab.size() > 64) fail(fmt("micro vocabulary has %d symbols, budget is 64", vocab.size()));
  const auto units = testsupport::micro::world_units();

  std::vector<gen::SyntheticExample> train_set, held_set;
  for (int c = 0; c < testsupport::micro::kNumCustomers; ++c) {
    for (int p = 0; p < testsupport::micro::kNumProducts; ++p) {
      (held_out_pair(c, p) ? held_set : train_set)
          .push_back(testsupport::micro::pair_example(c, p));
    }
  }

  testsupport::micro::TableTeacher teacher(vocab);
  distill::BuildExamplesOptions options;
  options.K = 100;
  Diagnostics diag(true);
  const auto train_examples =
      distill::build_examples(train_set, units, &teacher, vocab, options, diag);
  const auto held_examples =
      distill::build_examples(held_set, units, &teacher, vocab, options, diag);
  if (train_examples.size() != 24 || held_examples.size() != 8) {
    fail(fmt("expected a 24/8 split, got %zu/%zu", train_examples.size(),
             held_examples.size()));
  }

  const distill::StudentArch arch = testsupport::micro::student_arch(vocab.size());
  const distill::StudentModel model(arch);
  const auto theta0 = model.init_params(derive_seed(2026, "acceptance/micro-init"));
  const auto before = testsupport::micro::agreement(model, theta0, held_examples, 1.0);

  const distill::TrainConfig config = testsupport::micro::train_config(11);
  const distill::TrainResult run1 = distill::train(model, train_examples, config, theta0, diag);
  if (run1.diverged) fail("training diverged");
  const auto after = testsupport::micro::agreement(model, run1.theta, held_examples, 1.0);

  if (after.argmax_agreement < 0.90) {
    fail(fmt("held-out argmax agreement %.3f is below 0.90", after.argmax_agreement));
  }
  if (!(after.mean_kl <= 0.20 * before.mean_kl)) {
    fail(fmt("held-out KL fell %.4f -> %.4f, less than the required 80%%", before.mean_kl,
             after.mean_kl));
  }

  const distill::TrainResult run2 = distill::train(model, train_examples, config, theta0, diag);
  if (run1.theta != run2.theta) fail("training is not bit-deterministic under a fixed seed");

  return fmt("agreement %.3f, KL %.4f -> %.4f, deterministic", after.argmax_agreement,
             before.mean_kl, after.mean_kl);
}

// --- criterion 6: accuracy ordering across training modes ------------------

double run_mode_leg(gen::PipelineMode mode, const std::vector<double>& theta0,
                    double* leg_seconds) {
  const auto start = std::chrono::steady_clock::now();

  WhitespacePunctTokenizer tok;
  const auto corpus =
      ContextCorpus::from_text("micro", testsupport::micro::corpus_text(), tok);
  gen::ScriptedBackend backend(testsupport::micro::backend_fn());

  gen::PipelineConfig config;
  config.mode = mode;
  config.num_examples = 32;
  config.n_rollouts = 1;
  config.capture_top_logprobs = 4;
  config.seed = 77;
  if (mode == gen::PipelineMode::kSeedsOnly) {
    // Four example queries, all in the degradation-prone product range.
    config.example_queries = {
        testsupport::micro::query_text(0, 4), testsupport::micro::query_text(1, 5),
        testsupport::micro::query_text(2, 6), testsupport::micro::query_text(3, 7)};
  }

  Diagnostics diag(true);
  const gen::PipelineResult result = gen::run_pipeline(corpus, config, backend, tok, diag);

  const auto vocab = testsupport::micro::make_vocab();
  distill::BuildExamplesOptions options;
  options.K = 100;
  const auto examples =
      distill::build_examples(result.examples, result.units, nullptr, vocab, options, diag);
  if (examples.empty()) fail("pipeline produced no trainable examples");

  const distill::StudentModel model(testsupport::micro::student_arch(vocab.size()));
  const distill::TrainConfig train_config = testsupport::micro::train_config(13);
  const distill::TrainResult trained =
      distill::train(model, examples, train_config, theta0, diag);
  if (trained.diverged) fail("training diverged");
  const double accuracy = testsupport::micro::task_accuracy(model, trained.theta, vocab);

  *leg_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (*leg_seconds >= 300.0) fail(fmt("one leg took %.1fs, budget is 300s", *leg_seconds));
  return accuracy;
}

std::string check_mode_ordering() {
  const auto vocab = testsupport::micro::make_vocab();
  const distill::StudentModel model(testsupport::micro::student_arch(vocab.size()));
  const auto theta0 = model.init_params(derive_seed(7, "acceptance/mode-init"));

  double t_sieve = 0.0, t_all = 0.0, t_seeds = 0.0;
  const double sieve = run_mode_leg(gen::PipelineMode::kSieve, theta0, &t_sieve);
  const double all_context = run_mode_leg(gen::PipelineMode::kAllContext, theta0, &t_all);
  const double seeds_only = run_mode_leg(gen::PipelineMode::kSeedsOnly, theta0, &t_seeds);

  if (!(sieve > all_context && all_context > seeds_only)) {
    fail(fmt("accuracy ordering violated: sieve %.3f, all-context %.3f, seeds-only %.3f",
             sieve, all_context, seeds_only));
  }
  return fmt("sieve %.3f > all-context %.3f > seeds-only %.3f (legs %.1fs/%.1fs/%.1fs)",
             sieve, all_context, seeds_only, t_sieve, t_all, t_seeds);
}

// --- criterion 7: pipeline equivalences ------------------------------------

void check_verification_equivalence(gen::ScriptedBackend::Fn fn,
                                    const std::vector<ContextUnit>& units,
                                    const std::vector<std::string>& queries,
                                    const char* label) {
  Diagnostics diag(true);
  gen::ScriptedBackend backend(std::move(fn));
  std::uint64_t seed = 100;
  for (const auto& query : queries) {
    const auto per_unit = gen::verify(query, units, backend, gen::VerificationMode::kPerUnit,
                                      8, {}, seed, diag);
    for (int batch_size : {1, 5, 8, 64}) {
      const auto batched = gen::verify(query, units, backend, gen::VerificationMode::kBatched,
                                       batch_size, {}, seed, diag);
      if (batched != per_unit) {
        fail(fmt("%s backend: batched (batch %d) disagrees with per-unit verification",
                 label, batch_size));
      }
    }
    ++seed;
  }
}

void check_warm_cache(const std::string& cache_dir, const std::string& dataset_a,
                      const std::string& dataset_b) {
  WhitespacePunctTokenizer tok;
  const auto corpus =
      ContextCorpus::from_text("micro", testsupport::micro::corpus_text(), tok);
  gen::PipelineConfig config;
  config.num_examples = 6;
  config.capture_top_logprobs = 3;
  config.seed = 5;

  Diagnostics diag(true);
  const auto cold_inner =
      std::make_shared<gen::ScriptedBackend>(testsupport::micro::backend_fn());
  {
    gen::CachingBackend caching(cold_inner, cache_dir);
    const auto result = gen::run_pipeline(corpus, config, caching, tok, diag);
    gen::write_dataset(dataset_a, result.examples, nlohmann::json::object());
  }
  if (cold_inner->request_count() == 0) fail("cold run should reach the inner backend");

  const auto warm_inner =
      std::make_shared<gen::ScriptedBackend>(testsupport::micro::backend_fn());
  {
    gen::CachingBackend caching(warm_inner, cache_dir);
    const auto result = gen::run_pipeline(corpus, config, caching, tok, diag);
    gen::write_dataset(dataset_b, result.examples, nlohmann::json::object());
  }
  if (warm_inner->request_count() != 0) {
    fail(fmt("warm rerun issued %d backend request(s), expected zero",
             warm_inner->request_count()));
  }
  if (read_text_file(dataset_a) != read_text_file(dataset_b)) {
    fail("warm rerun produced a different dataset file");
  }
}

void check_chunking_invariants() {
  WhitespacePunctTokenizer tok;
  Rng rng(517);
  const char* words[] = {"alpha", "bravo", "charlie", "delta", "echo", "foxtrot",
                         "golf", "hotel", "india:", "juliet,", "kilo.", "lima"};
  const struct {
    std::size_t target_tokens;
    ChunkParams params;
  } cases[] = {{900, {128, 32}}, {9000, {1024, 256}}, {100000, {8192, 512}}};

  for (const auto& test_case : cases) {
    std::string text;
    std::size_t emitted = 0;
    while (emitted < test_case.target_tokens) {
      const std::string word = words[rng.bounded(12)];
      text += word;
      // Punctuation tokens count separately under the default tokenizer.
      emitted += 1 + static_cast<std::size_t>(
                        std::count_if(word.begin(), word.end(),
                                      [](char c) { return c == ':' || c == ',' || c == '.'; }));
      text += rng.bounded(20) == 0 ? '\n' : ' ';
    }
    const auto corpus = ContextCorpus::from_text("random", text, tok);
    const auto spans = tok.spans(corpus.raw_text);
    const std::size_t n = spans.size();
    const auto chunks = chunk_corpus(corpus, tok, test_case.params);
    const std::size_t stride = test_case.params.chunk_tokens - test_case.params.overlap_tokens;

    if (chunks.front().token_begin != 0) fail("first chunk must start at token 0");
    if (chunks.back().token_end != n) fail("last chunk must end at the final token");
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      const auto& chunk = chunks[i];
      if (chunk.index != i) fail("chunk indices must be dense");
      if (chunk.token_begin != i * stride) fail("chunk start must be a stride multiple");
      const std::size_t expected_end =
          std::min(n, chunk.token_begin + test_case.params.chunk_tokens);
      if (chunk.token_end != expected_end) fail("chunk end disagrees with the window size");
      // Chunk text extends to the next token's first byte (or corpus end) so
      // stitched chunks reproduce the corpus byte-exactly.
      const std::size_t byte_begin = chunk.token_begin == 0 ? 0 : spans[chunk.token_begin].begin;
      const std::size_t byte_end =
          chunk.token_end == n ? corpus.raw_text.size() : spans[chunk.token_end].begin;
      if (chunk.text != corpus.raw_text.substr(byte_begin, byte_end - byte_begin)) {
        fail("chunk text must be the exact substring backing its token range");
      }
      if (i + 1 < chunks.size()) {
        // Exact overlap, and dropping it tiles the corpus in token space.
        if (chunk.token_end - chunks[i + 1].token_begin != test_case.params.overlap_tokens) {
          fail("consecutive chunks must overlap by exactly the configured amount");
        }
        if (chunks[i + 1].token_begin + test_case.params.overlap_tokens != chunk.token_end) {
          fail("dropping the overlap prefix must reassemble the corpus");
        }
      }
    }
    // Byte-level reassembly: chunk 0 plus each later chunk minus its overlap
    // prefix must reproduce the corpus exactly.
    std::string stitched = chunks.front().text;
    for (std::size_t i = 1; i < chunks.size(); ++i) {
      const std::size_t byte_begin = spans[chunks[i].token_begin].begin;
      const std::size_t keep_from =
          spans[chunks[i].token_begin + test_case.params.overlap_tokens].begin;
      stitched += chunks[i].text.substr(keep_from - byte_begin);
    }
    if (stitched != corpus.raw_text) fail("stitched chunks must reproduce the corpus bytes");
  }
}

std::string check_pipeline_equivalences() {
  // Verification-mode equivalence for both scripted domains in the suite.
  std::vector<ContextUnit> rule_units;
  for (int i = 0; i < 30; ++i) {
    rule_units.push_back({i, std::string(retail::rule_text(i)), 0});
  }
  std::vector<std::string> retail_queries;
  for (std::uint64_t seed : {5ULL, 12ULL, 33ULL}) {
    retail_queries.push_back(retail::render_query(retail::generate_query(seed)));
  }
  check_verification_equivalence(gen::generic_scripted_model(), rule_units, retail_queries,
                                 "retail");
  check_verification_equivalence(
      testsupport::micro::backend_fn(), testsupport::micro::world_units(),
      {testsupport::micro::query_text(0, 0), testsupport::micro::query_text(2, 5),
       testsupport::micro::query_text(3, 7)},
      "microtask");

  testsupport::TempDir tmp("acceptance-cache");
  check_warm_cache(tmp.file("cache"), tmp.file("a.jsonl"), tmp.file("b.jsonl"));
  check_chunking_invariants();
  return "verification modes agree, warm rerun is request-free and byte-identical, "
         "chunk windows tile exactly";
}

// --- criterion 8: byte-exact query rendering -------------------------------

std::string check_render_golden() {
  const std::string expected = testsupport::read_golden("render_query_senior.txt");
  const std::string actual = retail::render_query(senior_worked_example());
  if (actual != expected) {
    std::size_t at = 0;
    while (at < std::min(actual.size(), expected.size()) && actual[at] == expected[at]) ++at;
    fail(fmt("rendered query diverges from the golden file at byte %zu "
             "(rendered %zu bytes, golden %zu bytes)",
             at, actual.size(), expected.size()));
  }
  return fmt("%zu bytes match the golden layout exactly", actual.size());
}

struct Criterion {
  const char* name;
  double budget_seconds;
  std::function<std::string()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"retail pricer agrees with the independent oracle", 10.0, check_oracle_agreement},
      {"hand-traced worked examples reproduce", 10.0, check_worked_examples},
      {"chrF matches the exhaustive n-gram oracle", 5.0, check_chrf_oracle},
      {"analytic KL gradient matches central finite differences", 30.0, check_gradient},
      {"micro-task distillation reaches agreement and KL targets", 300.0,
       check_micro_distillation},
      {"student accuracy orders sieve > all-context > seeds-only", 900.0,
       check_mode_ordering},
      {"verification, caching and chunking equivalences hold", 60.0,
       check_pipeline_equivalences},
      {"query rendering matches the golden layout byte for byte", 10.0, check_render_golden},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto& criterion = criteria[i];
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = criterion.run();
    } catch (const std::exception& e) {
      detail = e.what();
      ok = false;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (ok && seconds > criterion.budget_seconds) {
      ok = false;
      detail = fmt("finished in %.1fs, over the %.0fs budget", seconds,
                   criterion.budget_seconds);
    }
    std::printf("[%s] %zu. %s — %s (%.2fs)\n", ok ? "PASS" : "FAIL", i + 1, criterion.name,
                detail.c_str(), seconds);
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (failures > 0) {
    std::printf("%d of %zu acceptance criteria failed\n", failures, criteria.size());
    return 1;
  }
  std::printf("all %zu acceptance criteria passed\n", criteria.size());
  return 0;
}
