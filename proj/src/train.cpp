#include "ctxdistill/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctxdistill/errors.hpp"
#include "ctxdistill/rng.hpp"

namespace ctxdistill::distill {
namespace {

void validate(const TrainConfig& c) {
  if (!(c.learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be >= 0");
  if (c.effective_batch < 1) throw ConfigError("train: effective_batch must be >= 1");
  if (!(c.temperature > 0.0)) throw ConfigError("train: temperature must be > 0");
  if (c.K < 1) throw ConfigError("train: K must be >= 1");
  if (c.warmup_steps < 1) throw ConfigError("train: warmup_steps must be >= 1");
  if (c.max_seq_len < 1) throw ConfigError("train: max_seq_len must be >= 1");
  if (c.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (c.weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
}

/// Per-example position-mean KL and its gradient, accumulated (not averaged)
/// into `grad_out` with an overall scale factor applied in logit space.
double example_loss_and_grad(const StudentModel& model, const std::vector<double>& theta,
                             const DistillExample& ex, double tau, double scale,
                             std::vector<double>& grad_out) {
  if (ex.targets.size() != ex.response.size()) {
    throw InputError("distill example: targets and response differ in length");
  }
  const auto logits = model.response_logits(theta, ex.student_input, ex.response);
  const int V = model.arch().vocab_size;
  const double position_scale = scale / static_cast<double>(ex.response.size());

  double loss = 0.0;
  std::vector<std::vector<double>> dlogits(logits.size());
  for (std::size_t p = 0; p < logits.size(); ++p) {
    // Full-vocabulary student softmax, stable.
    double max_logit = -std::numeric_limits<double>::infinity();
    for (double v : logits[p]) max_logit = std::max(max_logit, v);
    double denom = 0.0;
    for (double v : logits[p]) denom += std::exp(v - max_logit);
    const double log_denom = max_logit + std::log(denom);

    const auto probs = soft_targets(ex.targets[p].entries, tau);
    double retained_mass = 0.0;
    for (double q : probs) retained_mass += q;

    std::vector<double>& dl = dlogits[p];
    dl.assign(V, 0.0);
    for (int j = 0; j < V; ++j) {
      dl[j] = std::exp(logits[p][j] - log_denom) * retained_mass * position_scale;
    }
    double pos_loss = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
      const int id = ex.targets[p].entries[k].token_id;
      if (id < 0 || id >= V) {
        throw InputError("distill example: target id outside student vocabulary");
      }
      if (probs[k] > 0.0) {
        pos_loss += probs[k] * (std::log(probs[k]) - (logits[p][id] - log_denom));
      }
      dl[id] -= probs[k] * position_scale;
    }
    loss += pos_loss;
  }
  model.response_backward(theta, ex.student_input, ex.response, dlogits, grad_out);
  return loss / static_cast<double>(ex.response.size());
}

}  // namespace

GradResult grad_kl(const StudentModel& model, const std::vector<double>& theta,
                   const std::vector<const DistillExample*>& batch, double tau) {
  if (batch.empty()) throw InputError("grad_kl: empty batch");
  GradResult result;
  result.grad.assign(model.num_params(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const DistillExample* ex : batch) {
    result.loss += scale * example_loss_and_grad(model, theta, *ex, tau, scale, result.grad);
  }
  return result;
}

GradResult grad_kl(const StudentModel& model, const std::vector<double>& theta,
                   const std::vector<DistillExample>& batch, double tau) {
  std::vector<const DistillExample*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& ex : batch) ptrs.push_back(&ex);
  return grad_kl(model, theta, ptrs, tau);
}

TrainResult train(const StudentModel& model, const std::vector<DistillExample>& dataset,
                  const TrainConfig& config, std::vector<double> theta0, Diagnostics& diag) {
  validate(config);
  if (theta0.size() != model.num_params()) {
    throw InputError("train: initial parameters have the wrong size");
  }

  std::vector<const DistillExample*> usable;
  for (const auto& ex : dataset) {
    if (ex.student_input.size() + ex.response.size() >
        static_cast<std::size_t>(config.max_seq_len)) {
      diag.warn("training example exceeds max_seq_len; skipped");
      continue;
    }
    usable.push_back(&ex);
  }
  if (usable.empty()) throw InputError("train: no usable examples");

  TrainResult result;
  result.theta = std::move(theta0);
  const std::size_t n_params = model.num_params();
  std::vector<double> m(n_params, 0.0), v(n_params, 0.0);
  std::vector<double> grad_accum(n_params, 0.0);
  double loss_accum = 0.0;
  int accum_count = 0;
  int adam_step = 0;

  std::vector<std::size_t> order(usable.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto apply_step = [&]() -> bool {
    const double inv = 1.0 / static_cast<double>(accum_count);
    const double loss = loss_accum * inv;
    bool finite = std::isfinite(loss);
    for (std::size_t i = 0; finite && i < n_params; ++i) {
      finite = std::isfinite(grad_accum[i]);
    }
    if (!finite) {
      diag.warn("training diverged (non-finite loss or gradient); keeping last good state");
      result.diverged = true;
      return false;
    }
    ++adam_step;
    const double warmup = std::min(
        1.0, static_cast<double>(adam_step) / static_cast<double>(config.warmup_steps));
    const double lr = config.learning_rate * warmup;
    const double bc1 = 1.0 - std::pow(config.beta1, adam_step);
    const double bc2 = 1.0 - std::pow(config.beta2, adam_step);
    for (std::size_t i = 0; i < n_params; ++i) {
      const double g = grad_accum[i] * inv;
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + config.adam_eps);
      result.theta[i] -= lr * (update + config.weight_decay * result.theta[i]);
    }
    result.loss_history.push_back(loss);
    std::fill(grad_accum.begin(), grad_accum.end(), 0.0);
    loss_accum = 0.0;
    accum_count = 0;
    return true;
  };

  for (int epoch = 0; epoch < config.epochs && !result.diverged; ++epoch) {
    if (config.shuffle) {
      Rng rng(derive_seed(config.seed, "epoch/" + std::to_string(epoch)));
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[rng.bounded(i)]);
      }
    }
    for (std::size_t idx : order) {
      loss_accum += example_loss_and_grad(model, result.theta, *usable[idx],
                                          config.temperature, 1.0, grad_accum);
      ++accum_count;
      if (accum_count == config.effective_batch) {
        if (!apply_step()) break;
      }
    }
    if (!result.diverged && accum_count > 0) {
      apply_step();  // partial final batch still steps
    }
  }
  result.steps = adam_step;
  return result;
}

}  // namespace ctxdistill::distill
