#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ctxdistill/diagnostics.hpp"
#include "ctxdistill/pipeline.hpp"
#include "ctxdistill/tokenizer.hpp"

namespace ctxdistill::distill {

/// Dense token-id vocabulary with bidirectional lookup.
class TokenVocab {
 public:
  explicit TokenVocab(std::vector<std::string> tokens);

  int size() const { return static_cast<int>(tokens_.size()); }
  std::optional<int> id_of(std::string_view token) const;
  const std::string& token(int id) const;

  /// One single-character token per distinct character of `alphabet`, in
  /// first-appearance order.
  static TokenVocab char_vocab(std::string_view alphabet);

  /// Character-level encoding; nothing if any character is out of vocabulary.
  std::optional<std::vector<int>> encode_chars(std::string_view text) const;

  /// Encoding under an external tokenizer's spans; nothing on any
  /// out-of-vocabulary token.
  std::optional<std::vector<int>> encode(std::string_view text, const Tokenizer& tok) const;

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct TopKEntry {
  int token_id = 0;
  double logit = 0.0;
};

/// Teacher target for one response position: the K largest teacher logits,
/// sorted by logit descending, ties broken by ascending token id.
struct TopKTarget {
  int position = 0;  ///< response-relative index
  std::vector<TopKEntry> entries;
};

/// One rollout prepared for distillation. The student sees the query alone;
/// the teacher saw query-then-context; both share the response tokens, and
/// targets are indexed relative to the response start so the differing
/// prompt lengths align.
struct DistillExample {
  std::vector<int> student_input;
  std::vector<int> teacher_input;
  std::vector<int> response;
  std::vector<TopKTarget> targets;  ///< one per response token
};

/// Any source of next-token logits over the full vocabulary.
class TeacherModel {
 public:
  virtual ~TeacherModel() = default;
  /// Logits over V for the token following `prefix`.
  virtual std::vector<double> next_logits(const std::vector<int>& prefix) = 0;
};

/// Teacher driven by a deterministic function; the workhorse for scripted
/// teachers in tests and micro-tasks.
class FnTeacher final : public TeacherModel {
 public:
  using Fn = std::function<std::vector<double>(const std::vector<int>&)>;
  explicit FnTeacher(Fn fn) : fn_(std::move(fn)) {}
  std::vector<double> next_logits(const std::vector<int>& prefix) override {
    return fn_(prefix);
  }

 private:
  Fn fn_;
};

/// The min(K, V) largest logits with their ids; deterministic tie-break by
/// ascending token id. Non-finite logits are an input error.
std::vector<TopKEntry> truncate_topk(const std::vector<double>& logits, int K);

/// Softmax of the retained logits divided by tau, renormalized over the
/// retained set; sums to 1 within 1e-12.
std::vector<double> soft_targets(const std::vector<TopKEntry>& entries, double tau);

/// Mean over response positions of sum_k p~(k) (log p~(k) - log p_S(k)),
/// where p~ are the renormalized truncated teacher targets and p_S is the
/// student's FULL-vocabulary softmax evaluated at the retained ids. Always
/// >= 0; zero iff the student matches the teacher on the retained set and
/// puts no mass outside it.
double kl_loss(const std::vector<TopKTarget>& targets,
               const std::vector<std::vector<double>>& student_logits, double tau);

struct BuildExamplesOptions {
  int K = 100;
  /// Use the rollout's captured top-logprobs channel as the teacher when
  /// present, instead of querying `teacher`.
  bool prefer_captured = true;
  /// nullptr tokenizes character-level against the vocab.
  const Tokenizer* tokenizer = nullptr;
};

/// Prepares each rollout of each synthetic example for training: tokenizes
/// query, teacher input (query then applicable units, corpus order) and
/// response, then computes per-position teacher targets either from
/// `teacher` or from captured logprobs. Rollouts that fail to tokenize are
/// skipped with a diagnostic.
std::vector<DistillExample> build_examples(const std::vector<gen::SyntheticExample>& dataset,
                                           const std::vector<ContextUnit>& units,
                                           TeacherModel* teacher, const TokenVocab& vocab,
                                           const BuildExamplesOptions& options,
                                           Diagnostics& diag);

}  // namespace ctxdistill::distill
