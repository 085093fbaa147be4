#include "ctxdistill/config.hpp"

#include <initializer_list>
#include <set>

#include "ctxdistill/errors.hpp"
#include "ctxdistill/jsonl.hpp"

namespace ctxdistill {
namespace {

std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

void require_object(const nlohmann::json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError("config: " + path + " must be an object");
}

void reject_unknown(const nlohmann::json& j, const std::string& path,
                    std::initializer_list<const char*> allowed) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* name : allowed) {
      if (key == name) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError("config: unknown key \"" + join_path(path, key) + "\"");
  }
}

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config: " + join_path(path, key) + " has the wrong type");
  }
}

void parse_sampling(const nlohmann::json& j, gen::SamplingParams& out, const std::string& path) {
  require_object(j, path);
  reject_unknown(j, path, {"temperature", "max_tokens"});
  read_field(j, "temperature", out.temperature, path);
  read_field(j, "max_tokens", out.max_tokens, path);
  if (out.temperature < 0.0) throw ConfigError("config: " + path + ".temperature must be >= 0");
  if (out.max_tokens < 1) throw ConfigError("config: " + path + ".max_tokens must be >= 1");
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& doc) {
  require_object(doc, "(root)");
  reject_unknown(doc, "", {"seed", "workers", "tokenizer", "paths", "backend", "pipeline",
                           "train", "chrf", "retail", "eval"});
  RunConfig c;
  read_field(doc, "seed", c.seed, "");
  read_field(doc, "workers", c.workers, "");
  read_field(doc, "tokenizer", c.tokenizer, "");
  if (c.workers < 1) throw ConfigError("config: workers must be >= 1");
  if (c.tokenizer != "whitespace" && c.tokenizer != "byte") {
    throw ConfigError("config: tokenizer must be \"whitespace\" or \"byte\"");
  }

  if (doc.contains("paths")) {
    const auto& j = doc.at("paths");
    require_object(j, "paths");
    reject_unknown(j, "paths",
                   {"corpus", "units", "dataset", "cache_dir", "checkpoint", "report",
                    "eval_set", "predictions"});
    read_field(j, "corpus", c.paths.corpus, "paths");
    read_field(j, "units", c.paths.units, "paths");
    read_field(j, "dataset", c.paths.dataset, "paths");
    read_field(j, "cache_dir", c.paths.cache_dir, "paths");
    read_field(j, "checkpoint", c.paths.checkpoint, "paths");
    read_field(j, "report", c.paths.report, "paths");
    read_field(j, "eval_set", c.paths.eval_set, "paths");
    read_field(j, "predictions", c.paths.predictions, "paths");
  }

  if (doc.contains("backend")) {
    const auto& j = doc.at("backend");
    require_object(j, "backend");
    reject_unknown(j, "backend",
                   {"kind", "endpoint", "model", "api_key_env", "max_retries", "timeout_ms",
                    "backoff_base_ms"});
    read_field(j, "kind", c.backend.kind, "backend");
    read_field(j, "endpoint", c.backend.http.endpoint, "backend");
    read_field(j, "model", c.backend.http.model, "backend");
    read_field(j, "api_key_env", c.backend.http.api_key_env, "backend");
    read_field(j, "max_retries", c.backend.http.max_retries, "backend");
    read_field(j, "timeout_ms", c.backend.http.timeout_ms, "backend");
    read_field(j, "backoff_base_ms", c.backend.http.backoff_base_ms, "backend");
    if (c.backend.kind != "scripted" && c.backend.kind != "http") {
      throw ConfigError("config: backend.kind must be \"scripted\" or \"http\"");
    }
    if (c.backend.kind == "http" && c.backend.http.endpoint.empty()) {
      throw ConfigError("config: backend.kind \"http\" requires backend.endpoint");
    }
  }

  if (doc.contains("pipeline")) {
    const auto& j = doc.at("pipeline");
    require_object(j, "pipeline");
    reject_unknown(j, "pipeline",
                   {"mode", "num_examples", "n_rollouts", "example_queries", "verification",
                    "chunk_tokens", "overlap_tokens", "capture_top_logprobs", "sampling"});
    std::string mode(to_string(c.pipeline.mode));
    read_field(j, "mode", mode, "pipeline");
    const auto parsed_mode = gen::pipeline_mode_from_string(mode);
    if (!parsed_mode) {
      throw ConfigError(
          "config: pipeline.mode must be \"sieve\", \"all-context\" or \"seeds-only\"");
    }
    c.pipeline.mode = *parsed_mode;
    read_field(j, "num_examples", c.pipeline.num_examples, "pipeline");
    read_field(j, "n_rollouts", c.pipeline.n_rollouts, "pipeline");
    read_field(j, "example_queries", c.pipeline.example_queries, "pipeline");
    read_field(j, "capture_top_logprobs", c.pipeline.capture_top_logprobs, "pipeline");
    std::int64_t chunk_tokens = static_cast<std::int64_t>(c.pipeline.chunking.chunk_tokens);
    std::int64_t overlap_tokens = static_cast<std::int64_t>(c.pipeline.chunking.overlap_tokens);
    read_field(j, "chunk_tokens", chunk_tokens, "pipeline");
    read_field(j, "overlap_tokens", overlap_tokens, "pipeline");
    if (chunk_tokens < 1) throw ConfigError("config: pipeline.chunk_tokens must be >= 1");
    if (overlap_tokens < 0 || overlap_tokens >= chunk_tokens) {
      throw ConfigError("config: pipeline.overlap_tokens must be in [0, chunk_tokens)");
    }
    c.pipeline.chunking.chunk_tokens = static_cast<std::size_t>(chunk_tokens);
    c.pipeline.chunking.overlap_tokens = static_cast<std::size_t>(overlap_tokens);
    if (c.pipeline.num_examples < 1) {
      throw ConfigError("config: pipeline.num_examples must be >= 1");
    }
    if (c.pipeline.n_rollouts < 1) throw ConfigError("config: pipeline.n_rollouts must be >= 1");
    if (c.pipeline.capture_top_logprobs < 0) {
      throw ConfigError("config: pipeline.capture_top_logprobs must be >= 0");
    }

    if (j.contains("verification")) {
      const auto& jv = j.at("verification");
      require_object(jv, "pipeline.verification");
      reject_unknown(jv, "pipeline.verification", {"mode", "batch_size"});
      std::string vmode(to_string(c.pipeline.verification));
      read_field(jv, "mode", vmode, "pipeline.verification");
      const auto parsed = gen::verification_mode_from_string(vmode);
      if (!parsed) {
        throw ConfigError(
            "config: pipeline.verification.mode must be \"per-unit\" or \"batched\"");
      }
      c.pipeline.verification = *parsed;
      read_field(jv, "batch_size", c.pipeline.verification_batch_size, "pipeline.verification");
      if (c.pipeline.verification_batch_size < 1) {
        throw ConfigError("config: pipeline.verification.batch_size must be >= 1");
      }
    }
    if (j.contains("sampling")) {
      const auto& js = j.at("sampling");
      require_object(js, "pipeline.sampling");
      reject_unknown(js, "pipeline.sampling", {"seed_selection", "query", "verify", "rollout"});
      if (js.contains("seed_selection")) {
        parse_sampling(js.at("seed_selection"), c.pipeline.seed_selection_sampling,
                       "pipeline.sampling.seed_selection");
      }
      if (js.contains("query")) {
        parse_sampling(js.at("query"), c.pipeline.query_sampling, "pipeline.sampling.query");
      }
      if (js.contains("verify")) {
        parse_sampling(js.at("verify"), c.pipeline.verify_sampling, "pipeline.sampling.verify");
      }
      if (js.contains("rollout")) {
        parse_sampling(js.at("rollout"), c.pipeline.rollout_sampling,
                       "pipeline.sampling.rollout");
      }
    }
  }
  c.pipeline.seed = c.seed;
  c.pipeline.workers = c.workers;

  if (doc.contains("train")) {
    const auto& j = doc.at("train");
    require_object(j, "train");
    reject_unknown(j, "train",
                   {"learning_rate", "effective_batch", "temperature", "K", "warmup_steps",
                    "max_seq_len", "epochs", "weight_decay", "shuffle", "student",
                    "decode_max_tokens"});
    read_field(j, "learning_rate", c.train.loop.learning_rate, "train");
    read_field(j, "effective_batch", c.train.loop.effective_batch, "train");
    read_field(j, "temperature", c.train.loop.temperature, "train");
    read_field(j, "K", c.train.loop.K, "train");
    read_field(j, "warmup_steps", c.train.loop.warmup_steps, "train");
    read_field(j, "max_seq_len", c.train.loop.max_seq_len, "train");
    read_field(j, "epochs", c.train.loop.epochs, "train");
    read_field(j, "weight_decay", c.train.loop.weight_decay, "train");
    read_field(j, "shuffle", c.train.loop.shuffle, "train");
    read_field(j, "decode_max_tokens", c.train.decode_max_tokens, "train");
    if (c.train.decode_max_tokens < 1) {
      throw ConfigError("config: train.decode_max_tokens must be >= 1");
    }
    if (j.contains("student")) {
      const auto& js = j.at("student");
      require_object(js, "train.student");
      reject_unknown(js, "train.student", {"embed_dim", "hidden_dim", "window"});
      read_field(js, "embed_dim", c.train.student.embed_dim, "train.student");
      read_field(js, "hidden_dim", c.train.student.hidden_dim, "train.student");
      read_field(js, "window", c.train.student.window, "train.student");
      if (c.train.student.embed_dim < 1 || c.train.student.hidden_dim < 1 ||
          c.train.student.window < 1) {
        throw ConfigError("config: train.student dimensions must be >= 1");
      }
    }
  }
  c.train.loop.seed = c.seed;

  if (doc.contains("chrf")) {
    const auto& j = doc.at("chrf");
    require_object(j, "chrf");
    reject_unknown(j, "chrf", {"max_order", "beta"});
    read_field(j, "max_order", c.chrf.max_order, "chrf");
    read_field(j, "beta", c.chrf.beta, "chrf");
    if (c.chrf.max_order < 1) throw ConfigError("config: chrf.max_order must be >= 1");
    if (!(c.chrf.beta > 0.0)) throw ConfigError("config: chrf.beta must be > 0");
  }

  if (doc.contains("retail")) {
    const auto& j = doc.at("retail");
    require_object(j, "retail");
    reject_unknown(j, "retail",
                   {"item_count_min", "item_count_max", "quantity_min", "quantity_max",
                    "price_min_cents", "price_max_cents", "whole_dollar_prices",
                    "promo_probability", "years_min", "years_max", "num_queries"});
    auto& g = c.retail_cfg.gen;
    read_field(j, "item_count_min", g.item_count_min, "retail");
    read_field(j, "item_count_max", g.item_count_max, "retail");
    read_field(j, "quantity_min", g.quantity_min, "retail");
    read_field(j, "quantity_max", g.quantity_max, "retail");
    read_field(j, "price_min_cents", g.price_min_cents, "retail");
    read_field(j, "price_max_cents", g.price_max_cents, "retail");
    read_field(j, "whole_dollar_prices", g.whole_dollar_prices, "retail");
    read_field(j, "promo_probability", g.promo_probability, "retail");
    read_field(j, "years_min", g.years_min, "retail");
    read_field(j, "years_max", g.years_max, "retail");
    read_field(j, "num_queries", c.retail_cfg.num_queries, "retail");
    if (c.retail_cfg.num_queries < 1) {
      throw ConfigError("config: retail.num_queries must be >= 1");
    }
  }

  if (doc.contains("eval")) {
    const auto& j = doc.at("eval");
    require_object(j, "eval");
    reject_unknown(j, "eval", {"task"});
    read_field(j, "task", c.eval_cfg.task, "eval");
    if (c.eval_cfg.task != "retail") {
      throw ConfigError("config: eval.task must be \"retail\"");
    }
  }

  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["seed"] = seed;
  j["workers"] = workers;
  j["tokenizer"] = tokenizer;
  j["paths"] = {{"corpus", paths.corpus},       {"units", paths.units},
                {"dataset", paths.dataset},     {"cache_dir", paths.cache_dir},
                {"checkpoint", paths.checkpoint}, {"report", paths.report},
                {"eval_set", paths.eval_set},   {"predictions", paths.predictions}};
  j["backend"] = {{"kind", backend.kind},
                  {"endpoint", backend.http.endpoint},
                  {"model", backend.http.model},
                  {"api_key_env", backend.http.api_key_env},
                  {"max_retries", backend.http.max_retries},
                  {"timeout_ms", backend.http.timeout_ms},
                  {"backoff_base_ms", backend.http.backoff_base_ms}};
  j["pipeline"] = {
      {"mode", std::string(to_string(pipeline.mode))},
      {"num_examples", pipeline.num_examples},
      {"n_rollouts", pipeline.n_rollouts},
      {"example_queries", pipeline.example_queries},
      {"verification",
       {{"mode", std::string(to_string(pipeline.verification))},
        {"batch_size", pipeline.verification_batch_size}}},
      {"chunk_tokens", pipeline.chunking.chunk_tokens},
      {"overlap_tokens", pipeline.chunking.overlap_tokens},
      {"capture_top_logprobs", pipeline.capture_top_logprobs},
      {"sampling",
       {{"seed_selection",
         {{"temperature", pipeline.seed_selection_sampling.temperature},
          {"max_tokens", pipeline.seed_selection_sampling.max_tokens}}},
        {"query",
         {{"temperature", pipeline.query_sampling.temperature},
          {"max_tokens", pipeline.query_sampling.max_tokens}}},
        {"verify",
         {{"temperature", pipeline.verify_sampling.temperature},
          {"max_tokens", pipeline.verify_sampling.max_tokens}}},
        {"rollout",
         {{"temperature", pipeline.rollout_sampling.temperature},
          {"max_tokens", pipeline.rollout_sampling.max_tokens}}}}}};
  j["train"] = {{"learning_rate", train.loop.learning_rate},
                {"effective_batch", train.loop.effective_batch},
                {"temperature", train.loop.temperature},
                {"K", train.loop.K},
                {"warmup_steps", train.loop.warmup_steps},
                {"max_seq_len", train.loop.max_seq_len},
                {"epochs", train.loop.epochs},
                {"weight_decay", train.loop.weight_decay},
                {"shuffle", train.loop.shuffle},
                {"decode_max_tokens", train.decode_max_tokens},
                {"student",
                 {{"embed_dim", train.student.embed_dim},
                  {"hidden_dim", train.student.hidden_dim},
                  {"window", train.student.window}}}};
  j["chrf"] = {{"max_order", chrf.max_order}, {"beta", chrf.beta}};
  j["retail"] = {{"item_count_min", retail_cfg.gen.item_count_min},
                 {"item_count_max", retail_cfg.gen.item_count_max},
                 {"quantity_min", retail_cfg.gen.quantity_min},
                 {"quantity_max", retail_cfg.gen.quantity_max},
                 {"price_min_cents", retail_cfg.gen.price_min_cents},
                 {"price_max_cents", retail_cfg.gen.price_max_cents},
                 {"whole_dollar_prices", retail_cfg.gen.whole_dollar_prices},
                 {"promo_probability", retail_cfg.gen.promo_probability},
                 {"years_min", retail_cfg.gen.years_min},
                 {"years_max", retail_cfg.gen.years_max},
                 {"num_queries", retail_cfg.num_queries}};
  j["eval"] = {{"task", eval_cfg.task}};
  return j;
}

}  // namespace ctxdistill
