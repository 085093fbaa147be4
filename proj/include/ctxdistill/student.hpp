#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ctxdistill/distill.hpp"

namespace ctxdistill::distill {

/// Architecture of the compact student: a windowed MLP. The last `window`
/// tokens of the prefix (left-padded with pad_id) are embedded, concatenated,
/// passed through one tanh layer, and projected to vocabulary logits. Small
/// enough to train in seconds, expressive enough to memorize rule tables.
struct StudentArch {
  int vocab_size = 0;
  int embed_dim = 16;
  int hidden_dim = 64;
  int window = 48;
  int pad_id = 0;
};

class StudentModel {
 public:
  explicit StudentModel(StudentArch arch);

  const StudentArch& arch() const { return arch_; }
  std::size_t num_params() const { return total_; }

  /// Deterministic Gaussian initialization (scaled per layer, zero biases).
  std::vector<double> init_params(std::uint64_t seed) const;

  /// Logits over V for the next token after `prefix`. Pure in (theta, prefix).
  std::vector<double> next_logits(const std::vector<double>& theta,
                                  const std::vector<int>& prefix) const;

  /// Logits at every response position p, i.e. for predicting response[p]
  /// from prompt + response[0..p).
  std::vector<std::vector<double>> response_logits(const std::vector<double>& theta,
                                                   const std::vector<int>& prompt,
                                                   const std::vector<int>& response) const;

  /// Backpropagates per-position logit gradients through the model,
  /// accumulating into `grad` (same layout as theta).
  void response_backward(const std::vector<double>& theta, const std::vector<int>& prompt,
                         const std::vector<int>& response,
                         const std::vector<std::vector<double>>& dlogits,
                         std::vector<double>& grad) const;

 private:
  std::vector<int> window_tokens(const std::vector<int>& prefix) const;
  void forward_window(const std::vector<double>& theta, const std::vector<int>& window,
                      std::vector<double>& x, std::vector<double>& h,
                      std::vector<double>& logits) const;

  StudentArch arch_;
  std::size_t off_embed_ = 0, off_w1_ = 0, off_b1_ = 0, off_w2_ = 0, off_b2_ = 0, total_ = 0;
};

/// A student conditioned on full context, acting as the teacher
/// (self-distillation: same architecture on both sides).
class StudentTeacher final : public TeacherModel {
 public:
  StudentTeacher(const StudentModel& model, std::vector<double> theta)
      : model_(model), theta_(std::move(theta)) {}

  std::vector<double> next_logits(const std::vector<int>& prefix) override {
    return model_.next_logits(theta_, prefix);
  }

 private:
  const StudentModel& model_;
  std::vector<double> theta_;
};

struct Checkpoint {
  StudentArch arch;
  std::vector<std::string> vocab_tokens;
  std::vector<double> params;
};

/// Versioned JSON checkpoint; doubles round-trip bit-exactly.
void save_checkpoint(const std::string& path, const StudentArch& arch,
                     const TokenVocab& vocab, const std::vector<double>& theta);
Checkpoint load_checkpoint(const std::string& path);

/// Greedy argmax decoding (ties toward the lowest token id) until eos_id or
/// max_new_tokens. Returns only the generated tokens.
std::vector<int> greedy_decode(const StudentModel& model, const std::vector<double>& theta,
                               const std::vector<int>& prompt, int max_new_tokens, int eos_id);

}  // namespace ctxdistill::distill
