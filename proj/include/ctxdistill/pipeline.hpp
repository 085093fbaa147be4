#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "ctxdistill/backend.hpp"
#include "ctxdistill/context.hpp"
#include "ctxdistill/diagnostics.hpp"
#include "ctxdistill/tokenizer.hpp"

namespace ctxdistill::gen {

/// Seed subset of context units chosen by the base model to anchor one
/// synthetic example.
struct SeedSelection {
  std::vector<int> unit_ids;  ///< 3-5 matched units, duplicate-free
  std::string raw_reply;
  std::vector<std::string> unmatched_lines;  ///< selected lines that matched no unit
};

struct RolloutSample {
  std::string text;
  std::vector<TokenTopLogprobs> logprobs;  ///< captured top-logprobs channel, may be empty
};

struct SyntheticExample {
  int example_id = 0;
  std::string query;
  std::vector<int> seed_unit_ids;
  std::vector<int> applicable_unit_ids;  ///< sorted ascending
  std::vector<RolloutSample> rollouts;
};

/// sieve: generated queries answered with only their verified context.
/// all-context: generated queries answered with the whole corpus in context.
/// seeds-only: just the example queries, answered with the whole corpus.
enum class PipelineMode { kSieve, kAllContext, kSeedsOnly };

std::string_view to_string(PipelineMode mode);
std::optional<PipelineMode> pipeline_mode_from_string(std::string_view s);

enum class VerificationMode { kPerUnit, kBatched };

std::string_view to_string(VerificationMode mode);
std::optional<VerificationMode> verification_mode_from_string(std::string_view s);

struct PipelineConfig {
  PipelineMode mode = PipelineMode::kSieve;
  int num_examples = 8;  ///< forced to |example_queries| in seeds-only mode
  int n_rollouts = 1;
  std::vector<std::string> example_queries;
  VerificationMode verification = VerificationMode::kPerUnit;
  int verification_batch_size = 8;
  std::uint64_t seed = 0;
  int workers = 1;
  ChunkParams chunking;
  int capture_top_logprobs = 0;

  // Stage sampling defaults: diverse seeds, moderate query variety,
  // deterministic verification, free rollouts.
  SamplingParams seed_selection_sampling{1.0, 512, {}, 0, 0};
  SamplingParams query_sampling{0.7, 512, {}, 0, 0};
  SamplingParams verify_sampling{0.0, 16, {}, 0, 0};
  SamplingParams rollout_sampling{1.0, 1024, {}, 0, 0};
};

/// Asks the base model to pick 3-5 units that could apply to one scenario.
/// Reply lines are matched to units by normalized token containment (>= 0.8
/// after case folding and punctuation stripping, ties toward the lower
/// unit_id); lines that match nothing are recorded and dropped. Retries up
/// to 3 times if no line matches, then throws PipelineError.
SeedSelection select_seed(const std::vector<ContextUnit>& units, GenerationBackend& backend,
                          const std::vector<std::string>& example_queries,
                          const SamplingParams& sampling, std::uint64_t request_seed,
                          Diagnostics& diag);

/// Backtranslates the selected units into a query. Rejects empty replies and
/// verbatim echoes of an example query, retrying up to 3 times before
/// throwing PipelineError.
std::string generate_query(const SeedSelection& seed, const std::vector<ContextUnit>& units,
                           GenerationBackend& backend,
                           const std::vector<std::string>& example_queries,
                           const SamplingParams& sampling, std::uint64_t request_seed,
                           Diagnostics& diag);

/// Decides which units are necessary to answer the query. Per-unit mode asks
/// one yes/no question per unit (yes iff the reply's first alphabetic token
/// is "yes", case-insensitive). Batched mode asks per batch for a
/// comma-separated list of the applicable numbers, validated against the
/// batch; a malformed reply is retried once and then treated as all-no with
/// a diagnostic. Both modes agree under any deterministic predicate.
std::set<int> verify(const std::string& query, const std::vector<ContextUnit>& units,
                     GenerationBackend& backend, VerificationMode mode, int batch_size,
                     const SamplingParams& sampling, std::uint64_t request_seed,
                     Diagnostics& diag);

/// Samples n_rollouts teacher replies for the query. The teacher input is
/// query-then-context; sieve mode includes only the applicable units (in
/// corpus order), the other modes the whole unit list. Captures the
/// top-logprobs channel when capture_top_logprobs > 0.
std::vector<RolloutSample> rollout(const std::string& query,
                                   const std::set<int>& applicable_unit_ids,
                                   const std::vector<ContextUnit>& corpus_units,
                                   GenerationBackend& backend, int n_rollouts,
                                   PipelineMode mode, const SamplingParams& sampling,
                                   int capture_top_logprobs, std::uint64_t root_seed,
                                   int example_index);

struct PipelineResult {
  std::vector<ContextUnit> units;
  std::vector<SyntheticExample> examples;
  int skipped = 0;
};

/// Runs decompose then the full generation loop: select seeds, backtranslate
/// a query, verify applicability, sample rollouts. Seeds-only mode skips
/// generation and uses the example queries directly with full context.
/// Per-example failures skip with diagnostics; throws PipelineError if more
/// than 10% of examples skip. Deterministic for a fixed seed and scripted
/// backend, regardless of worker count.
PipelineResult run_pipeline(const ContextCorpus& corpus, const PipelineConfig& config,
                            GenerationBackend& backend, const Tokenizer& tokenizer,
                            Diagnostics& diag);

// --- dataset persistence ---------------------------------------------------

nlohmann::ordered_json example_to_json(const SyntheticExample& ex);
SyntheticExample example_from_json(const nlohmann::json& j);

void write_dataset(const std::string& path, const std::vector<SyntheticExample>& examples,
                   const nlohmann::json& config);
std::vector<SyntheticExample> read_dataset(const std::string& path);

/// Precision/recall of a predicted applicable-unit set against a reference
/// set, for the verification-quality report.
struct VerificationQuality {
  int true_positives = 0;
  int false_positives = 0;
  int false_negatives = 0;
  double precision = 0.0;  ///< 1.0 when nothing was predicted
  double recall = 0.0;     ///< 1.0 when nothing was expected
};

VerificationQuality verification_quality(const std::set<int>& predicted,
                                         const std::set<int>& reference);

}  // namespace ctxdistill::gen
