#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ctxdistill/backend.hpp"
#include "ctxdistill/cache.hpp"
#include "ctxdistill/config.hpp"
#include "ctxdistill/context.hpp"
#include "ctxdistill/distill.hpp"
#include "ctxdistill/errors.hpp"
#include "ctxdistill/eval.hpp"
#include "ctxdistill/http_backend.hpp"
#include "ctxdistill/jsonl.hpp"
#include "ctxdistill/pipeline.hpp"
#include "ctxdistill/retail.hpp"
#include "ctxdistill/rng.hpp"
#include "ctxdistill/student.hpp"
#include "ctxdistill/tokenizer.hpp"
#include "ctxdistill/train.hpp"
#include "ctxdistill/version.hpp"

namespace {

using namespace ctxdistill;

/// Mutable view of the CLI flags that may override the config document.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> mode;
  std::optional<int> num_examples;
  std::optional<int> n_rollouts;
  std::optional<std::string> corpus;
  std::optional<std::string> units;
  std::optional<std::string> dataset;
  std::optional<std::string> cache_dir;
  std::optional<std::string> checkpoint;
  std::optional<std::string> report;
  std::optional<std::string> eval_set;
  std::optional<std::string> predictions;
  bool rules_corpus = false;
};

RunConfig apply_overrides(RunConfig config, const Overrides& o) {
  if (o.seed) {
    config.seed = *o.seed;
    config.pipeline.seed = *o.seed;
    config.train.loop.seed = *o.seed;
  }
  if (o.workers) {
    config.workers = *o.workers;
    config.pipeline.workers = *o.workers;
  }
  if (o.mode) {
    const auto mode = gen::pipeline_mode_from_string(*o.mode);
    if (!mode) throw ConfigError("unknown pipeline mode: " + *o.mode);
    config.pipeline.mode = *mode;
  }
  if (o.num_examples) config.pipeline.num_examples = *o.num_examples;
  if (o.n_rollouts) config.pipeline.n_rollouts = *o.n_rollouts;
  if (o.corpus) config.paths.corpus = *o.corpus;
  if (o.units) config.paths.units = *o.units;
  if (o.dataset) config.paths.dataset = *o.dataset;
  if (o.cache_dir) config.paths.cache_dir = *o.cache_dir;
  if (o.checkpoint) config.paths.checkpoint = *o.checkpoint;
  if (o.report) config.paths.report = *o.report;
  if (o.eval_set) config.paths.eval_set = *o.eval_set;
  if (o.predictions) config.paths.predictions = *o.predictions;
  return config;
}

struct BackendBundle {
  std::shared_ptr<gen::GenerationBackend> inner;
  std::unique_ptr<gen::CachingBackend> caching;

  gen::GenerationBackend& use() { return caching ? *caching : *inner; }
};

BackendBundle make_backend(const RunConfig& config) {
  BackendBundle bundle;
  if (config.backend.kind == "scripted") {
    bundle.inner = std::make_shared<gen::ScriptedBackend>(gen::generic_scripted_model());
  } else {
    bundle.inner = std::make_shared<gen::HttpBackend>(config.backend.http);
  }
  if (!config.paths.cache_dir.empty()) {
    bundle.caching =
        std::make_unique<gen::CachingBackend>(bundle.inner, config.paths.cache_dir);
  }
  return bundle;
}

ContextCorpus load_corpus(const RunConfig& config, bool rules_corpus,
                          const Tokenizer& tokenizer) {
  if (rules_corpus) {
    return ContextCorpus::from_text("retail-rules", retail::rules_corpus_text(), tokenizer);
  }
  if (config.paths.corpus.empty()) {
    throw ConfigError("no corpus: set paths.corpus or pass --rules-corpus");
  }
  return ContextCorpus::from_text(config.paths.corpus,
                                  read_text_file(config.paths.corpus), tokenizer);
}

/// Character-level vocabulary over everything training must tokenize:
/// queries, unit texts, rollout texts and every token the captured
/// top-logprobs channel mentions. Token 0 is the padding symbol, which also
/// terminates greedy decoding.
distill::TokenVocab build_run_vocab(const std::vector<gen::SyntheticExample>& dataset,
                                    const std::vector<ContextUnit>& units) {
  std::set<char> chars;
  auto add = [&chars](const std::string& text) {
    for (char c : text) chars.insert(c);
  };
  for (const auto& unit : units) add(unit.text);
  for (const auto& ex : dataset) {
    add(ex.query);
    for (const auto& rollout : ex.rollouts) {
      add(rollout.text);
      for (const auto& tok : rollout.logprobs) {
        add(tok.token);
        for (const auto& [t, lp] : tok.top) add(t);
      }
    }
  }
  std::vector<std::string> tokens;
  tokens.emplace_back("<pad>");
  for (char c : chars) tokens.emplace_back(1, c);
  return distill::TokenVocab(std::move(tokens));
}

int cmd_decompose(const RunConfig& config, bool rules_corpus) {
  Diagnostics diag;
  const auto tokenizer = make_tokenizer(config.tokenizer);
  const ContextCorpus corpus = load_corpus(config, rules_corpus, *tokenizer);
  BackendBundle backend = make_backend(config);

  const auto chunks = chunk_corpus(corpus, *tokenizer, config.pipeline.chunking);
  std::vector<ContextUnit> units;
  for (const auto& chunk : chunks) {
    auto chunk_units = decompose(chunk, backend.use(), static_cast<int>(units.size()), diag);
    units.insert(units.end(), chunk_units.begin(), chunk_units.end());
  }
  write_units(config.paths.units, units, config.to_json());
  std::fprintf(stderr, "[info] decomposed %zu chunk(s) into %zu unit(s) -> %s\n",
               chunks.size(), units.size(), config.paths.units.c_str());
  return 0;
}

int cmd_generate(const RunConfig& config, bool rules_corpus) {
  Diagnostics diag;
  const auto tokenizer = make_tokenizer(config.tokenizer);
  const ContextCorpus corpus = load_corpus(config, rules_corpus, *tokenizer);
  BackendBundle backend = make_backend(config);

  const gen::PipelineResult result =
      gen::run_pipeline(corpus, config.pipeline, backend.use(), *tokenizer, diag);
  write_units(config.paths.units, result.units, config.to_json());
  gen::write_dataset(config.paths.dataset, result.examples, config.to_json());
  if (backend.caching) {
    std::fprintf(stderr, "[info] cache: %d hit(s), %d miss(es)\n",
                 backend.caching->hit_count(), backend.caching->miss_count());
  }
  std::fprintf(stderr, "[info] generated %zu example(s), skipped %d -> %s\n",
               result.examples.size(), result.skipped, config.paths.dataset.c_str());
  return 0;
}

int cmd_train(const RunConfig& config) {
  Diagnostics diag;
  const auto dataset = gen::read_dataset(config.paths.dataset);
  const auto units = read_units(config.paths.units);
  if (dataset.empty()) throw InputError("dataset is empty: " + config.paths.dataset);

  const distill::TokenVocab vocab = build_run_vocab(dataset, units);
  distill::StudentArch arch = config.train.student;
  arch.vocab_size = vocab.size();
  arch.pad_id = 0;
  const distill::StudentModel model(arch);

  distill::BuildExamplesOptions options;
  options.K = config.train.loop.K;
  options.prefer_captured = true;
  auto examples = distill::build_examples(dataset, units, nullptr, vocab, options, diag);
  if (examples.empty()) {
    throw InputError(
        "no trainable examples; generate the dataset with "
        "pipeline.capture_top_logprobs > 0 so rollouts carry teacher targets");
  }

  const auto theta0 = model.init_params(derive_seed(config.seed, "student-init"));
  const distill::TrainResult result =
      distill::train(model, examples, config.train.loop, theta0, diag);
  distill::save_checkpoint(config.paths.checkpoint, arch, vocab, result.theta);

  const double first = result.loss_history.empty() ? 0.0 : result.loss_history.front();
  const double last = result.loss_history.empty() ? 0.0 : result.loss_history.back();
  std::fprintf(stderr,
               "[info] trained %zu example(s), %d step(s), loss %.6f -> %.6f%s -> %s\n",
               examples.size(), result.steps, first, last,
               result.diverged ? " (diverged; kept last good state)" : "",
               config.paths.checkpoint.c_str());
  return result.diverged ? 1 : 0;
}

std::string decode_prediction(const distill::StudentModel& model,
                              const std::vector<double>& theta,
                              const distill::TokenVocab& vocab, const std::string& query,
                              int max_new_tokens) {
  const auto prompt = vocab.encode_chars(query);
  if (!prompt) return "";  // query contains characters the student never saw
  const auto generated = distill::greedy_decode(model, theta, *prompt, max_new_tokens,
                                                model.arch().pad_id);
  std::string text;
  for (int id : generated) {
    if (id == model.arch().pad_id) break;
    text += vocab.token(id);
  }
  return text;
}

int cmd_eval(const RunConfig& config) {
  const auto records = retail::read_eval_set(config.paths.eval_set);
  if (records.empty()) throw InputError("evaluation set is empty: " + config.paths.eval_set);

  std::vector<std::string> predictions(records.size());
  if (!config.paths.predictions.empty()) {
    std::map<int, std::string> by_index;
    read_jsonl(config.paths.predictions, [&by_index](const nlohmann::json& j) {
      by_index[j.at("index").get<int>()] = j.at("text").get<std::string>();
    });
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto it = by_index.find(static_cast<int>(i));
      if (it != by_index.end()) predictions[i] = it->second;
    }
  } else {
    const distill::Checkpoint ckpt = distill::load_checkpoint(config.paths.checkpoint);
    const distill::StudentModel model(ckpt.arch);
    const distill::TokenVocab vocab(ckpt.vocab_tokens);
    for (std::size_t i = 0; i < records.size(); ++i) {
      predictions[i] = decode_prediction(model, ckpt.params, vocab, records[i].rendered_text,
                                         config.train.decode_max_tokens);
    }
  }

  std::vector<std::string> references(records.size());
  std::vector<std::optional<std::int64_t>> truths(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    references[i] = "Final Price: $" + retail::format_cents(records[i].final_price_cents);
    truths[i] = records[i].final_price_cents;
  }
  const eval::EvalReport report = eval::evaluate(predictions, references, truths, config.chrf);
  eval::write_report(config.paths.report, report, config.to_json());
  std::fprintf(stderr, "[info] evaluated %d example(s): accuracy %.4f, mean chrF %.2f -> %s\n",
               report.num_examples, report.accuracy, report.mean_chrf,
               config.paths.report.c_str());
  return 0;
}

int cmd_retail(const RunConfig& config) {
  std::vector<retail::EvalRecord> records;
  records.reserve(config.retail_cfg.num_queries);
  for (int seed = 0; seed < config.retail_cfg.num_queries; ++seed) {
    records.push_back(
        retail::make_eval_record(static_cast<std::uint64_t>(seed), config.retail_cfg.gen));
  }
  retail::write_eval_set(config.paths.eval_set, records, config.to_json());
  std::fprintf(stderr, "[info] wrote %zu evaluation record(s) -> %s\n", records.size(),
               config.paths.eval_set.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Context distillation toolkit: synthetic-pair generation, "
               "teacher-to-student distillation, and the retail pricing benchmark"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  std::string config_path;
  Overrides overrides;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration JSON document")->required();
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t v) { overrides.seed = v; }, "override the global seed");
    sub->add_option_function<int>(
        "--workers", [&](int v) { overrides.workers = v; }, "override the worker count");
    sub->add_option_function<std::string>(
        "--cache-dir", [&](std::string v) { overrides.cache_dir = std::move(v); },
        "override the request-cache directory (empty disables caching)");
  };

  CLI::App* decompose = app.add_subcommand(
      "decompose", "split the corpus into chunks and atomic context units");
  add_common(decompose);
  decompose->add_option_function<std::string>(
      "--corpus", [&](std::string v) { overrides.corpus = std::move(v); }, "corpus text file");
  decompose->add_option_function<std::string>(
      "--units", [&](std::string v) { overrides.units = std::move(v); }, "units output file");
  decompose->add_flag("--rules-corpus", overrides.rules_corpus,
                      "use the built-in retail discount rules as the corpus");

  CLI::App* generate = app.add_subcommand(
      "generate", "run the full synthetic-data pipeline and write the dataset");
  add_common(generate);
  generate->add_option_function<std::string>(
      "--corpus", [&](std::string v) { overrides.corpus = std::move(v); }, "corpus text file");
  generate->add_option_function<std::string>(
      "--units", [&](std::string v) { overrides.units = std::move(v); }, "units output file");
  generate->add_option_function<std::string>(
      "--dataset", [&](std::string v) { overrides.dataset = std::move(v); },
      "dataset output file");
  generate->add_option_function<std::string>(
      "--mode", [&](std::string v) { overrides.mode = std::move(v); },
      "sieve | all-context | seeds-only");
  generate->add_option_function<int>(
      "--num-examples", [&](int v) { overrides.num_examples = v; },
      "number of synthetic examples");
  generate->add_option_function<int>(
      "--n-rollouts", [&](int v) { overrides.n_rollouts = v; }, "rollouts per example");
  generate->add_flag("--rules-corpus", overrides.rules_corpus,
                     "use the built-in retail discount rules as the corpus");

  CLI::App* train = app.add_subcommand(
      "train", "distill dataset rollouts into the compact context-free student");
  add_common(train);
  train->add_option_function<std::string>(
      "--dataset", [&](std::string v) { overrides.dataset = std::move(v); },
      "dataset input file");
  train->add_option_function<std::string>(
      "--units", [&](std::string v) { overrides.units = std::move(v); }, "units input file");
  train->add_option_function<std::string>(
      "--checkpoint", [&](std::string v) { overrides.checkpoint = std::move(v); },
      "checkpoint output file");

  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "score a checkpoint or a predictions file against the evaluation set");
  add_common(eval_cmd);
  eval_cmd->add_option_function<std::string>(
      "--checkpoint", [&](std::string v) { overrides.checkpoint = std::move(v); },
      "student checkpoint to decode");
  eval_cmd->add_option_function<std::string>(
      "--predictions", [&](std::string v) { overrides.predictions = std::move(v); },
      "pre-computed predictions file ({index, text} records)");
  eval_cmd->add_option_function<std::string>(
      "--eval-set", [&](std::string v) { overrides.eval_set = std::move(v); },
      "evaluation set file");
  eval_cmd->add_option_function<std::string>(
      "--report", [&](std::string v) { overrides.report = std::move(v); },
      "report output file");

  CLI::App* retail_cmd = app.add_subcommand(
      "retail", "emit the deterministic retail pricing evaluation set");
  add_common(retail_cmd);
  retail_cmd->add_option_function<std::string>(
      "--eval-set", [&](std::string v) { overrides.eval_set = std::move(v); },
      "evaluation set output file");
  retail_cmd->add_option_function<int>(
      "--num-queries", [&](int v) { overrides.num_examples = v; },
      "number of evaluation queries");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig config = apply_overrides(RunConfig::load(config_path), overrides);
    if (decompose->parsed()) return cmd_decompose(config, overrides.rules_corpus);
    if (generate->parsed()) return cmd_generate(config, overrides.rules_corpus);
    if (train->parsed()) return cmd_train(config);
    if (eval_cmd->parsed()) return cmd_eval(config);
    if (retail_cmd->parsed()) {
      if (overrides.num_examples) config.retail_cfg.num_queries = *overrides.num_examples;
      return cmd_retail(config);
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "[error] %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "[error] %s\n", e.what());
    return 1;
  }
  return 0;
}
