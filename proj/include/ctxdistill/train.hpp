#pragma once

#include <cstdint>
#include <vector>

#include "ctxdistill/diagnostics.hpp"
#include "ctxdistill/distill.hpp"
#include "ctxdistill/student.hpp"

namespace ctxdistill::distill {

struct TrainConfig {
  double learning_rate = 1e-5;
  int effective_batch = 64;  ///< reached via gradient accumulation
  double temperature = 1.0;
  int K = 100;  ///< recorded for provenance; targets are truncated at build time
  int warmup_steps = 50;
  int max_seq_len = 16384;  ///< examples longer than this are skipped
  int epochs = 1;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  bool shuffle = true;
  std::uint64_t seed = 0;
};

struct GradResult {
  double loss = 0.0;
  std::vector<double> grad;  ///< same layout as theta
};

/// Mean over the batch of the per-example position-mean KL, and its exact
/// analytic gradient with respect to theta. At each position the gradient in
/// logit space is p_S(j) * (sum of retained targets) - target(j) for
/// retained j, and p_S(j) * (sum of retained targets) otherwise,
/// backpropagated through the student.
GradResult grad_kl(const StudentModel& model, const std::vector<double>& theta,
                   const std::vector<const DistillExample*>& batch, double tau);

GradResult grad_kl(const StudentModel& model, const std::vector<double>& theta,
                   const std::vector<DistillExample>& batch, double tau);

struct TrainResult {
  std::vector<double> theta;
  std::vector<double> loss_history;  ///< one entry per optimizer step
  int steps = 0;
  bool diverged = false;  ///< loss went non-finite; theta is the last good state
};

/// Adam with decoupled weight decay, linear warmup over warmup_steps then a
/// constant rate, gradient accumulation to effective_batch (a partial final
/// batch still steps). Deterministic for a fixed config and seed. A
/// non-finite loss aborts before applying the step, keeping the last good
/// parameters.
TrainResult train(const StudentModel& model, const std::vector<DistillExample>& dataset,
                  const TrainConfig& config, std::vector<double> theta0, Diagnostics& diag);

}  // namespace ctxdistill::distill
