#include "ctxdistill/student.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

#include "ctxdistill/errors.hpp"
#include "ctxdistill/jsonl.hpp"
#include "ctxdistill/rng.hpp"

namespace ctxdistill::distill {

namespace {
constexpr const char* kCheckpointFormat = "ctxdistill-checkpoint-v1";
}

StudentModel::StudentModel(StudentArch arch) : arch_(arch) {
  if (arch_.vocab_size < 1) throw ConfigError("student: vocab_size must be >= 1");
  if (arch_.embed_dim < 1) throw ConfigError("student: embed_dim must be >= 1");
  if (arch_.hidden_dim < 1) throw ConfigError("student: hidden_dim must be >= 1");
  if (arch_.window < 1) throw ConfigError("student: window must be >= 1");
  if (arch_.pad_id < 0 || arch_.pad_id >= arch_.vocab_size) {
    throw ConfigError("student: pad_id outside the vocabulary");
  }
  const std::size_t V = arch_.vocab_size, D = arch_.embed_dim, H = arch_.hidden_dim,
                    W = arch_.window;
  off_embed_ = 0;
  off_w1_ = off_embed_ + V * D;
  off_b1_ = off_w1_ + H * W * D;
  off_w2_ = off_b1_ + H;
  off_b2_ = off_w2_ + V * H;
  total_ = off_b2_ + V;
}

std::vector<double> StudentModel::init_params(std::uint64_t seed) const {
  const std::size_t V = arch_.vocab_size, D = arch_.embed_dim, H = arch_.hidden_dim,
                    W = arch_.window;
  std::vector<double> theta(total_, 0.0);
  Rng rng(seed);
  const double embed_scale = 0.1;
  const double w1_scale = 1.0 / std::sqrt(static_cast<double>(W * D));
  const double w2_scale = 1.0 / std::sqrt(static_cast<double>(H));
  for (std::size_t i = 0; i < V * D; ++i) theta[off_embed_ + i] = embed_scale * rng.next_gaussian();
  for (std::size_t i = 0; i < H * W * D; ++i) theta[off_w1_ + i] = w1_scale * rng.next_gaussian();
  for (std::size_t i = 0; i < V * H; ++i) theta[off_w2_ + i] = w2_scale * rng.next_gaussian();
  // biases stay zero
  return theta;
}

std::vector<int> StudentModel::window_tokens(const std::vector<int>& prefix) const {
  const std::size_t W = arch_.window;
  std::vector<int> window(W, arch_.pad_id);
  const std::size_t take = std::min<std::size_t>(W, prefix.size());
  for (std::size_t i = 0; i < take; ++i) {
    window[W - take + i] = prefix[prefix.size() - take + i];
  }
  for (int tok : window) {
    if (tok < 0 || tok >= arch_.vocab_size) {
      throw InputError("student: token id outside the vocabulary: " + std::to_string(tok));
    }
  }
  return window;
}

void StudentModel::forward_window(const std::vector<double>& theta,
                                  const std::vector<int>& window, std::vector<double>& x,
                                  std::vector<double>& h, std::vector<double>& logits) const {
  if (theta.size() != total_) throw InputError("student: parameter vector has the wrong size");
  const std::size_t V = arch_.vocab_size, D = arch_.embed_dim, H = arch_.hidden_dim,
                    W = arch_.window;
  x.assign(W * D, 0.0);
  for (std::size_t w = 0; w < W; ++w) {
    const double* embedding = &theta[off_embed_ + static_cast<std::size_t>(window[w]) * D];
    std::copy(embedding, embedding + D, x.begin() + w * D);
  }
  h.assign(H, 0.0);
  for (std::size_t r = 0; r < H; ++r) {
    double acc = theta[off_b1_ + r];
    const double* row = &theta[off_w1_ + r * W * D];
    for (std::size_t c = 0; c < W * D; ++c) acc += row[c] * x[c];
    h[r] = std::tanh(acc);
  }
  logits.assign(V, 0.0);
  for (std::size_t v = 0; v < V; ++v) {
    double acc = theta[off_b2_ + v];
    const double* row = &theta[off_w2_ + v * H];
    for (std::size_t r = 0; r < H; ++r) acc += row[r] * h[r];
    logits[v] = acc;
  }
}

std::vector<double> StudentModel::next_logits(const std::vector<double>& theta,
                                              const std::vector<int>& prefix) const {
  std::vector<double> x, h, logits;
  forward_window(theta, window_tokens(prefix), x, h, logits);
  return logits;
}

std::vector<std::vector<double>> StudentModel::response_logits(
    const std::vector<double>& theta, const std::vector<int>& prompt,
    const std::vector<int>& response) const {
  std::vector<std::vector<double>> out;
  out.reserve(response.size());
  std::vector<int> prefix = prompt;
  std::vector<double> x, h, logits;
  for (int tok : response) {
    forward_window(theta, window_tokens(prefix), x, h, logits);
    out.push_back(logits);
    prefix.push_back(tok);
  }
  return out;
}

void StudentModel::response_backward(const std::vector<double>& theta,
                                     const std::vector<int>& prompt,
                                     const std::vector<int>& response,
                                     const std::vector<std::vector<double>>& dlogits,
                                     std::vector<double>& grad) const {
  if (dlogits.size() != response.size()) {
    throw InputError("student backward: gradient count must match response length");
  }
  if (grad.size() != total_) grad.assign(total_, 0.0);
  const std::size_t V = arch_.vocab_size, D = arch_.embed_dim, H = arch_.hidden_dim,
                    W = arch_.window;

  std::vector<int> prefix = prompt;
  std::vector<double> x, h, logits, dh(H), dpre(H), dx(W * D);
  for (std::size_t p = 0; p < response.size(); ++p) {
    const std::vector<int> window = window_tokens(prefix);
    forward_window(theta, window, x, h, logits);
    const std::vector<double>& dl = dlogits[p];
    if (dl.size() != V) throw InputError("student backward: logit gradient has wrong size");

    std::fill(dh.begin(), dh.end(), 0.0);
    for (std::size_t v = 0; v < V; ++v) {
      const double g = dl[v];
      if (g == 0.0) continue;
      grad[off_b2_ + v] += g;
      double* w2_grad_row = &grad[off_w2_ + v * H];
      const double* w2_row = &theta[off_w2_ + v * H];
      for (std::size_t r = 0; r < H; ++r) {
        w2_grad_row[r] += g * h[r];
        dh[r] += g * w2_row[r];
      }
    }
    for (std::size_t r = 0; r < H; ++r) dpre[r] = dh[r] * (1.0 - h[r] * h[r]);

    std::fill(dx.begin(), dx.end(), 0.0);
    for (std::size_t r = 0; r < H; ++r) {
      const double g = dpre[r];
      if (g == 0.0) continue;
      grad[off_b1_ + r] += g;
      double* w1_grad_row = &grad[off_w1_ + r * W * D];
      const double* w1_row = &theta[off_w1_ + r * W * D];
      for (std::size_t c = 0; c < W * D; ++c) {
        w1_grad_row[c] += g * x[c];
        dx[c] += g * w1_row[c];
      }
    }
    for (std::size_t w = 0; w < W; ++w) {
      double* embed_grad = &grad[off_embed_ + static_cast<std::size_t>(window[w]) * D];
      for (std::size_t j = 0; j < D; ++j) embed_grad[j] += dx[w * D + j];
    }
    prefix.push_back(response[p]);
  }
}

void save_checkpoint(const std::string& path, const StudentArch& arch, const TokenVocab& vocab,
                     const std::vector<double>& theta) {
  nlohmann::ordered_json j;
  j["format"] = kCheckpointFormat;
  j["arch"] = {{"vocab_size", arch.vocab_size},
               {"embed_dim", arch.embed_dim},
               {"hidden_dim", arch.hidden_dim},
               {"window", arch.window},
               {"pad_id", arch.pad_id}};
  j["vocab"] = vocab.tokens();
  j["params"] = theta;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open checkpoint for writing: " + path);
  out << j.dump() << '\n';
}

Checkpoint load_checkpoint(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(path));
  } catch (const std::exception& e) {
    throw InputError("malformed checkpoint " + path + ": " + e.what());
  }
  if (!j.contains("format") || j.at("format") != kCheckpointFormat) {
    throw InputError("unsupported checkpoint format in " + path);
  }
  Checkpoint ckpt;
  const auto& arch = j.at("arch");
  ckpt.arch.vocab_size = arch.at("vocab_size").get<int>();
  ckpt.arch.embed_dim = arch.at("embed_dim").get<int>();
  ckpt.arch.hidden_dim = arch.at("hidden_dim").get<int>();
  ckpt.arch.window = arch.at("window").get<int>();
  ckpt.arch.pad_id = arch.at("pad_id").get<int>();
  ckpt.vocab_tokens = j.at("vocab").get<std::vector<std::string>>();
  ckpt.params = j.at("params").get<std::vector<double>>();
  const StudentModel model(ckpt.arch);  // validates the descriptor
  if (ckpt.params.size() != model.num_params()) {
    throw InputError("checkpoint parameter count does not match its architecture");
  }
  return ckpt;
}

std::vector<int> greedy_decode(const StudentModel& model, const std::vector<double>& theta,
                               const std::vector<int>& prompt, int max_new_tokens, int eos_id) {
  std::vector<int> prefix = prompt;
  std::vector<int> generated;
  for (int step = 0; step < max_new_tokens; ++step) {
    const std::vector<double> logits = model.next_logits(theta, prefix);
    int best = 0;
    for (int v = 1; v < static_cast<int>(logits.size()); ++v) {
      if (logits[v] > logits[best]) best = v;  // ties keep the lowest id
    }
    generated.push_back(best);
    if (best == eos_id) break;
    prefix.push_back(best);
  }
  return generated;
}

}  // namespace ctxdistill::distill
