#include "ctxdistill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctxdistill/errors.hpp"
#include "ctxdistill/prompts.hpp"

namespace ctxdistill::distill {

TokenVocab::TokenVocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.empty()) throw ConfigError("vocabulary must be non-empty");
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto [it, inserted] = ids_.emplace(tokens_[i], static_cast<int>(i));
    if (!inserted) throw ConfigError("duplicate vocabulary token: " + tokens_[i]);
  }
}

std::optional<int> TokenVocab::id_of(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& TokenVocab::token(int id) const {
  if (id < 0 || id >= size()) {
    throw InputError("token id out of range: " + std::to_string(id));
  }
  return tokens_[id];
}

TokenVocab TokenVocab::char_vocab(std::string_view alphabet) {
  std::vector<std::string> tokens;
  for (char c : alphabet) {
    const std::string tok(1, c);
    if (std::find(tokens.begin(), tokens.end(), tok) == tokens.end()) tokens.push_back(tok);
  }
  return TokenVocab(std::move(tokens));
}

std::optional<std::vector<int>> TokenVocab::encode_chars(std::string_view text) const {
  std::vector<int> out;
  out.reserve(text.size());
  for (char c : text) {
    const auto id = id_of(std::string_view(&c, 1));
    if (!id) return std::nullopt;
    out.push_back(*id);
  }
  return out;
}

std::optional<std::vector<int>> TokenVocab::encode(std::string_view text,
                                                   const Tokenizer& tok) const {
  std::vector<int> out;
  for (const TokenSpan& span : tok.spans(text)) {
    const auto id = id_of(text.substr(span.begin, span.end - span.begin));
    if (!id) return std::nullopt;
    out.push_back(*id);
  }
  return out;
}

std::vector<TopKEntry> truncate_topk(const std::vector<double>& logits, int K) {
  if (logits.empty()) throw InputError("truncate_topk: empty logit vector");
  if (K < 1) throw ConfigError("truncate_topk: K must be >= 1");
  for (double v : logits) {
    if (!std::isfinite(v)) throw InputError("truncate_topk: non-finite logit");
  }
  std::vector<TopKEntry> entries(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    entries[i] = {static_cast<int>(i), logits[i]};
  }
  const std::size_t keep = std::min<std::size_t>(K, entries.size());
  const auto by_logit_desc_then_id = [](const TopKEntry& a, const TopKEntry& b) {
    if (a.logit != b.logit) return a.logit > b.logit;
    return a.token_id < b.token_id;
  };
  std::partial_sort(entries.begin(), entries.begin() + keep, entries.end(),
                    by_logit_desc_then_id);
  entries.resize(keep);
  return entries;
}

std::vector<double> soft_targets(const std::vector<TopKEntry>& entries, double tau) {
  if (entries.empty()) throw InputError("soft_targets: no entries");
  if (!(tau > 0.0)) throw ConfigError("soft_targets: temperature must be > 0");
  double max_scaled = -std::numeric_limits<double>::infinity();
  for (const auto& e : entries) max_scaled = std::max(max_scaled, e.logit / tau);
  double denom = 0.0;
  std::vector<double> probs(entries.size());
  for (std::size_t i = 0; i < entries.size(); ++i) {
    probs[i] = std::exp(entries[i].logit / tau - max_scaled);
    denom += probs[i];
  }
  for (double& p : probs) p /= denom;
  return probs;
}

namespace {

/// log of the student's full-vocabulary softmax, numerically stable.
std::vector<double> log_softmax(const std::vector<double>& logits) {
  double max_logit = -std::numeric_limits<double>::infinity();
  for (double v : logits) max_logit = std::max(max_logit, v);
  double denom = 0.0;
  for (double v : logits) denom += std::exp(v - max_logit);
  const double log_denom = max_logit + std::log(denom);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - log_denom;
  return out;
}

}  // namespace

double kl_loss(const std::vector<TopKTarget>& targets,
               const std::vector<std::vector<double>>& student_logits, double tau) {
  if (targets.size() != student_logits.size()) {
    throw InputError("kl_loss: targets and student logits differ in position count");
  }
  if (targets.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t p = 0; p < targets.size(); ++p) {
    const auto log_ps = log_softmax(student_logits[p]);
    const auto probs = soft_targets(targets[p].entries, tau);
    double pos_loss = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      const int id = targets[p].entries[k].token_id;
      if (id < 0 || id >= static_cast<int>(log_ps.size())) {
        throw InputError("kl_loss: target token id outside student vocabulary");
      }
      if (probs[k] > 0.0) pos_loss += probs[k] * (std::log(probs[k]) - log_ps[id]);
    }
    total += pos_loss;
  }
  return total / static_cast<double>(targets.size());
}

namespace {

std::optional<std::vector<int>> encode_with(const TokenVocab& vocab, const Tokenizer* tokenizer,
                                            std::string_view text) {
  return tokenizer ? vocab.encode(text, *tokenizer) : vocab.encode_chars(text);
}

/// Teacher targets from the captured top-logprobs channel. The captured
/// tokens must both match the rollout text's tokenization and stay inside
/// the vocabulary.
std::optional<std::vector<TopKTarget>> targets_from_captured(
    const gen::RolloutSample& sample, const std::vector<int>& response,
    const TokenVocab& vocab, int K) {
  if (sample.logprobs.size() != response.size()) return std::nullopt;
  std::vector<TopKTarget> targets;
  targets.reserve(response.size());
  for (std::size_t p = 0; p < sample.logprobs.size(); ++p) {
    const auto& captured = sample.logprobs[p];
    const auto generated_id = vocab.id_of(captured.token);
    if (!generated_id || *generated_id != response[p]) return std::nullopt;
    std::vector<TopKEntry> entries;
    for (const auto& [token, logprob] : captured.top) {
      const auto id = vocab.id_of(token);
      if (!id) return std::nullopt;
      entries.push_back({*id, logprob});
    }
    if (entries.empty()) return std::nullopt;
    std::sort(entries.begin(), entries.end(), [](const TopKEntry& a, const TopKEntry& b) {
      if (a.logit != b.logit) return a.logit > b.logit;
      return a.token_id < b.token_id;
    });
    if (static_cast<int>(entries.size()) > K) entries.resize(K);
    TopKTarget target;
    target.position = static_cast<int>(p);
    target.entries = std::move(entries);
    targets.push_back(std::move(target));
  }
  return targets;
}

}  // namespace

std::vector<DistillExample> build_examples(const std::vector<gen::SyntheticExample>& dataset,
                                           const std::vector<ContextUnit>& units,
                                           TeacherModel* teacher, const TokenVocab& vocab,
                                           const BuildExamplesOptions& options,
                                           Diagnostics& diag) {
  if (options.K < 1) throw ConfigError("build_examples: K must be >= 1");

  std::vector<DistillExample> out;
  for (const auto& ex : dataset) {
    std::vector<std::string> context_texts;
    for (const auto& unit : units) {
      if (std::find(ex.applicable_unit_ids.begin(), ex.applicable_unit_ids.end(),
                    unit.unit_id) != ex.applicable_unit_ids.end()) {
        context_texts.push_back(unit.text);
      }
    }
    const std::string teacher_text = gen::render_teacher_input(ex.query, context_texts);

    const auto student_input = encode_with(vocab, options.tokenizer, ex.query);
    const auto teacher_input = encode_with(vocab, options.tokenizer, teacher_text);
    if (!student_input || !teacher_input) {
      diag.warn("example " + std::to_string(ex.example_id) +
                " skipped: query or context fails to tokenize under the vocabulary");
      continue;
    }

    for (std::size_t r = 0; r < ex.rollouts.size(); ++r) {
      const auto& sample = ex.rollouts[r];
      const auto response = encode_with(vocab, options.tokenizer, sample.text);
      if (!response || response->empty()) {
        diag.warn("example " + std::to_string(ex.example_id) + " rollout " +
                  std::to_string(r) + " skipped: response fails to tokenize");
        continue;
      }

      DistillExample de;
      de.student_input = *student_input;
      de.teacher_input = *teacher_input;
      de.response = *response;

      bool from_captured = false;
      if (options.prefer_captured && !sample.logprobs.empty()) {
        if (auto targets = targets_from_captured(sample, de.response, vocab, options.K)) {
          de.targets = std::move(*targets);
          from_captured = true;
        } else {
          diag.warn("example " + std::to_string(ex.example_id) + " rollout " +
                    std::to_string(r) +
                    ": captured logprobs unusable, falling back to the teacher model");
        }
      }
      if (!from_captured) {
        if (teacher == nullptr) {
          diag.warn("example " + std::to_string(ex.example_id) + " rollout " +
                    std::to_string(r) + " skipped: no teacher available");
          continue;
        }
        std::vector<int> prefix = de.teacher_input;
        for (std::size_t p = 0; p < de.response.size(); ++p) {
          const std::vector<double> logits = teacher->next_logits(prefix);
          if (static_cast<int>(logits.size()) != vocab.size()) {
            throw InputError("teacher emitted " + std::to_string(logits.size()) +
                             " logits for a vocabulary of " + std::to_string(vocab.size()));
          }
          TopKTarget target;
          target.position = static_cast<int>(p);
          target.entries = truncate_topk(logits, options.K);
          de.targets.push_back(std::move(target));
          prefix.push_back(de.response[p]);
        }
      }
      out.push_back(std::move(de));
    }
  }
  return out;
}

}  // namespace ctxdistill::distill
