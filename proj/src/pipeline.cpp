#include "ctxdistill/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <future>
#include <map>
#include <optional>

#include "ctxdistill/errors.hpp"
#include "ctxdistill/jsonl.hpp"
#include "ctxdistill/prompts.hpp"
#include "ctxdistill/rng.hpp"

namespace ctxdistill::gen {
namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.emplace_back(text.substr(start));
      break;
    }
    lines.emplace_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::vector<std::string> lowercase_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(cur);
    cur.clear();
  };
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

/// Fraction of the line's distinct tokens that appear in the unit.
double containment(const std::vector<std::string>& line_tokens,
                   const std::set<std::string>& unit_tokens) {
  if (line_tokens.empty()) return 0.0;
  std::set<std::string> distinct(line_tokens.begin(), line_tokens.end());
  int hit = 0;
  for (const auto& tok : distinct) {
    if (unit_tokens.count(tok)) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(distinct.size());
}

constexpr double kMatchThreshold = 0.8;
constexpr int kMaxAttempts = 3;

bool strip_bullet(std::string& line) {
  if (line.rfind("- ", 0) == 0) {
    line.erase(0, 2);
    return true;
  }
  if (line.rfind("* ", 0) == 0) {
    line.erase(0, 2);
    return true;
  }
  if (!line.empty() && line.front() == '-') {
    line.erase(0, 1);
    line = trim(line);
    return true;
  }
  if (line.rfind("\xe2\x80\xa2", 0) == 0) {  // "•"
    line.erase(0, 3);
    line = trim(line);
    return true;
  }
  return false;
}

/// The bullet list that follows "Selected guidelines:". A base completion
/// continues the primed "-", so the first line may arrive without its own
/// marker; the list ends at the first blank or unmarked line after it.
std::vector<std::string> selected_lines(const std::string& reply) {
  std::string_view scope = reply;
  const std::size_t marker = reply.rfind("Selected guidelines:");
  if (marker != std::string::npos) scope = scope.substr(marker + 20);

  std::vector<std::string> out;
  for (const auto& raw : split_lines(scope)) {
    std::string line = trim(raw);
    if (line.empty()) {
      if (out.empty()) continue;
      break;
    }
    const bool marked = strip_bullet(line);
    if (!marked && !out.empty()) break;
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

std::string_view to_string(PipelineMode mode) {
  switch (mode) {
    case PipelineMode::kSieve: return "sieve";
    case PipelineMode::kAllContext: return "all-context";
    case PipelineMode::kSeedsOnly: return "seeds-only";
  }
  return "sieve";
}

std::optional<PipelineMode> pipeline_mode_from_string(std::string_view s) {
  if (s == "sieve") return PipelineMode::kSieve;
  if (s == "all-context") return PipelineMode::kAllContext;
  if (s == "seeds-only") return PipelineMode::kSeedsOnly;
  return std::nullopt;
}

std::string_view to_string(VerificationMode mode) {
  return mode == VerificationMode::kPerUnit ? "per-unit" : "batched";
}

std::optional<VerificationMode> verification_mode_from_string(std::string_view s) {
  if (s == "per-unit") return VerificationMode::kPerUnit;
  if (s == "batched") return VerificationMode::kBatched;
  return std::nullopt;
}

SeedSelection select_seed(const std::vector<ContextUnit>& units, GenerationBackend& backend,
                          const std::vector<std::string>& example_queries,
                          const SamplingParams& sampling, std::uint64_t request_seed,
                          Diagnostics& diag) {
  if (units.empty()) throw InputError("select_seed: no units");

  std::vector<std::string> unit_texts;
  unit_texts.reserve(units.size());
  for (const auto& u : units) unit_texts.push_back(u.text);
  const std::string prompt =
      fill_template(seed_selection_template(), {{"feedback", numbered_list(unit_texts)},
                                                {"examples section",
                                                 examples_section(example_queries)}});

  std::vector<std::set<std::string>> unit_token_sets;
  unit_token_sets.reserve(units.size());
  for (const auto& u : units) {
    const auto toks = lowercase_tokens(u.text);
    unit_token_sets.emplace_back(toks.begin(), toks.end());
  }

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    SamplingParams params = sampling;
    params.seed = derive_seed(request_seed, "attempt/" + std::to_string(attempt));
    const BackendReply reply = backend.complete(Role::kBase, prompt, params);

    SeedSelection sel;
    sel.raw_reply = reply.text;
    for (const auto& line : selected_lines(reply.text)) {
      const auto line_tokens = lowercase_tokens(line);
      double best = 0.0;
      int best_id = -1;
      for (std::size_t i = 0; i < units.size(); ++i) {
        const double score = containment(line_tokens, unit_token_sets[i]);
        if (score > best || (score == best && best_id >= 0 && units[i].unit_id < best_id)) {
          best = score;
          best_id = units[i].unit_id;
        }
      }
      if (best >= kMatchThreshold && best_id >= 0) {
        if (std::find(sel.unit_ids.begin(), sel.unit_ids.end(), best_id) ==
            sel.unit_ids.end()) {
          sel.unit_ids.push_back(best_id);
        }
      } else {
        sel.unmatched_lines.push_back(line);
      }
    }
    if (!sel.unit_ids.empty()) return sel;
    diag.warn("seed selection attempt " + std::to_string(attempt + 1) +
              " matched no units; retrying");
  }
  throw PipelineError("seed selection matched no units after " + std::to_string(kMaxAttempts) +
                      " attempts");
}

std::string generate_query(const SeedSelection& seed, const std::vector<ContextUnit>& units,
                           GenerationBackend& backend,
                           const std::vector<std::string>& example_queries,
                           const SamplingParams& sampling, std::uint64_t request_seed,
                           Diagnostics& diag) {
  if (seed.unit_ids.empty()) throw InputError("generate_query: empty seed selection");
  std::map<int, const ContextUnit*> by_id;
  for (const auto& u : units) by_id[u.unit_id] = &u;
  std::string selected_text;
  for (int id : seed.unit_ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw InputError("generate_query: seed unit " + std::to_string(id) + " not in unit list");
    }
    if (!selected_text.empty()) selected_text += "\n";
    selected_text += it->second->text;
  }
  const std::string prompt = fill_template(
      query_generation_template(),
      {{"selected feedback", selected_text},
       {"examples section", examples_section(example_queries)}});

  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    SamplingParams params = sampling;
    params.seed = derive_seed(request_seed, "attempt/" + std::to_string(attempt));
    const std::string reply = trim(backend.complete(Role::kInstruct, prompt, params).text);
    if (reply.empty()) {
      diag.warn("query generation returned an empty reply; retrying");
      continue;
    }
    const bool echo = std::find(example_queries.begin(), example_queries.end(), reply) !=
                      example_queries.end();
    if (echo) {
      diag.warn("query generation echoed an example query; retrying");
      continue;
    }
    return reply;
  }
  throw PipelineError("query generation kept returning rejected replies after " +
                      std::to_string(kMaxAttempts) + " attempts");
}

namespace {

bool reply_is_yes(const std::string& reply) {
  std::string word;
  for (char c : reply) {
    if (std::isalpha(static_cast<unsigned char>(c))) {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!word.empty()) {
      break;
    }
  }
  return word == "yes";
}

/// Comma-separated integers in [1, batch_count], or "none". Returns nothing
/// on malformed replies.
std::optional<std::vector<int>> parse_batched_reply(const std::string& reply, int batch_count) {
  const std::string body = trim(reply);
  std::string lowered = body;
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lowered == "none" || lowered == "none." || body.empty()) return std::vector<int>{};

  std::vector<int> out;
  std::size_t start = 0;
  while (start <= body.size()) {
    std::size_t comma = body.find(',', start);
    if (comma == std::string::npos) comma = body.size();
    const std::string piece = trim(std::string_view(body).substr(start, comma - start));
    if (piece.empty()) return std::nullopt;
    int value = 0;
    for (char c : piece) {
      if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
      value = value * 10 + (c - '0');
    }
    if (value < 1 || value > batch_count) return std::nullopt;
    out.push_back(value);
    if (comma == body.size()) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

std::set<int> verify(const std::string& query, const std::vector<ContextUnit>& units,
                     GenerationBackend& backend, VerificationMode mode, int batch_size,
                     const SamplingParams& sampling, std::uint64_t request_seed,
                     Diagnostics& diag) {
  std::set<int> result;
  if (units.empty()) return result;

  if (mode == VerificationMode::kPerUnit) {
    for (const auto& unit : units) {
      const std::string prompt = fill_template(
          verification_template(), {{"query", query}, {"unit", unit.text}});
      SamplingParams params = sampling;
      params.seed = derive_seed(request_seed, "unit/" + std::to_string(unit.unit_id));
      const BackendReply reply = backend.complete(Role::kInstruct, prompt, params);
      if (reply_is_yes(reply.text)) result.insert(unit.unit_id);
    }
    return result;
  }

  if (batch_size < 1) throw ConfigError("verification batch size must be >= 1");
  for (std::size_t begin = 0, batch_index = 0; begin < units.size();
       begin += batch_size, ++batch_index) {
    const std::size_t end = std::min(units.size(), begin + batch_size);
    std::vector<std::string> batch_texts;
    for (std::size_t i = begin; i < end; ++i) batch_texts.push_back(units[i].text);
    const std::string prompt = fill_template(
        verification_batched_template(),
        {{"query", query}, {"units", numbered_list(batch_texts)}});

    std::optional<std::vector<int>> parsed;
    for (int attempt = 0; attempt < 2 && !parsed; ++attempt) {
      SamplingParams params = sampling;
      params.seed = derive_seed(request_seed, "batch/" + std::to_string(batch_index) +
                                                  "/attempt/" + std::to_string(attempt));
      const BackendReply reply = backend.complete(Role::kInstruct, prompt, params);
      parsed = parse_batched_reply(reply.text, static_cast<int>(end - begin));
      if (!parsed && attempt == 0) {
        diag.warn("malformed batched verification reply; retrying batch " +
                  std::to_string(batch_index));
      }
    }
    if (!parsed) {
      diag.warn("batched verification stayed malformed; treating batch " +
                std::to_string(batch_index) + " as all-no");
      continue;
    }
    for (int number : *parsed) result.insert(units[begin + number - 1].unit_id);
  }
  return result;
}

std::vector<RolloutSample> rollout(const std::string& query,
                                   const std::set<int>& applicable_unit_ids,
                                   const std::vector<ContextUnit>& corpus_units,
                                   GenerationBackend& backend, int n_rollouts,
                                   PipelineMode mode, const SamplingParams& sampling,
                                   int capture_top_logprobs, std::uint64_t root_seed,
                                   int example_index) {
  if (n_rollouts < 1) throw ConfigError("n_rollouts must be >= 1");

  std::vector<std::string> context_texts;
  if (mode == PipelineMode::kSieve) {
    for (const auto& unit : corpus_units) {  // corpus order
      if (applicable_unit_ids.count(unit.unit_id)) context_texts.push_back(unit.text);
    }
  } else {
    for (const auto& unit : corpus_units) context_texts.push_back(unit.text);
  }
  const std::string prompt = render_teacher_input(query, context_texts);

  std::vector<RolloutSample> samples;
  for (int j = 0; j < n_rollouts; ++j) {
    SamplingParams params = sampling;
    params.seed = derive_seed(root_seed, "example/" + std::to_string(example_index) +
                                             "/rollout/" + std::to_string(j));
    params.top_logprobs = capture_top_logprobs;
    BackendReply reply = backend.complete(Role::kInstruct, prompt, params);
    samples.push_back({std::move(reply.text), std::move(reply.logprobs)});
  }
  return samples;
}

namespace {

std::optional<SyntheticExample> build_example(
    int index, const std::vector<Chunk>& chunks, const std::vector<ContextUnit>& units,
    const PipelineConfig& config, GenerationBackend& backend, Diagnostics& diag) {
  try {
    SyntheticExample ex;
    ex.example_id = index;
    const std::string label = "example/" + std::to_string(index);
    std::set<int> applicable;

    if (config.mode == PipelineMode::kSeedsOnly) {
      ex.query = config.example_queries[index];
      for (const auto& unit : units) applicable.insert(unit.unit_id);
    } else {
      // Seed selection scans one chunk's units on long corpora, so the base
      // prompt stays within a model window.
      const std::vector<ContextUnit>* candidates = &units;
      std::vector<ContextUnit> chunk_units;
      if (chunks.size() > 1) {
        Rng rng(derive_seed(config.seed, label + "/chunk"));
        const std::size_t chunk_index = rng.bounded(chunks.size());
        for (const auto& unit : units) {
          if (unit.source_chunk == chunk_index) chunk_units.push_back(unit);
        }
        if (!chunk_units.empty()) candidates = &chunk_units;
      }

      const SeedSelection sel =
          select_seed(*candidates, backend, config.example_queries,
                      config.seed_selection_sampling,
                      derive_seed(config.seed, label + "/seed-select"), diag);
      ex.seed_unit_ids = sel.unit_ids;
      ex.query = generate_query(sel, units, backend, config.example_queries,
                                config.query_sampling,
                                derive_seed(config.seed, label + "/query"), diag);

      if (config.mode == PipelineMode::kSieve) {
        applicable = verify(ex.query, units, backend, config.verification,
                            config.verification_batch_size, config.verify_sampling,
                            derive_seed(config.seed, label + "/verify"), diag);
      } else {
        for (const auto& unit : units) applicable.insert(unit.unit_id);
      }
    }

    ex.rollouts = rollout(ex.query, applicable, units, backend, config.n_rollouts, config.mode,
                          config.rollout_sampling, config.capture_top_logprobs, config.seed,
                          index);
    ex.applicable_unit_ids.assign(applicable.begin(), applicable.end());
    return ex;
  } catch (const BackendError& e) {
    diag.warn("example " + std::to_string(index) + " skipped: " + e.what());
    return std::nullopt;
  } catch (const PipelineError& e) {
    diag.warn("example " + std::to_string(index) + " skipped: " + e.what());
    return std::nullopt;
  }
}

}  // namespace

PipelineResult run_pipeline(const ContextCorpus& corpus, const PipelineConfig& config,
                            GenerationBackend& backend, const Tokenizer& tokenizer,
                            Diagnostics& diag) {
  if (config.n_rollouts < 1) throw ConfigError("n_rollouts must be >= 1");
  if (config.workers < 1) throw ConfigError("worker count must be >= 1");

  int num_examples = config.num_examples;
  if (config.mode == PipelineMode::kSeedsOnly) {
    if (config.example_queries.empty()) {
      throw ConfigError("seeds-only mode requires example queries");
    }
    num_examples = static_cast<int>(config.example_queries.size());
  }
  if (num_examples < 1) throw ConfigError("number of examples must be >= 1");

  PipelineResult result;
  const std::vector<Chunk> chunks = chunk_corpus(corpus, tokenizer, config.chunking);
  for (const auto& chunk : chunks) {
    auto units = decompose(chunk, backend, static_cast<int>(result.units.size()), diag);
    result.units.insert(result.units.end(), units.begin(), units.end());
  }
  if (result.units.empty()) {
    throw PipelineError("decomposition produced no units for corpus " + corpus.corpus_id);
  }

  for (int wave_begin = 0; wave_begin < num_examples; wave_begin += config.workers) {
    const int wave_end = std::min(num_examples, wave_begin + config.workers);
    std::vector<std::future<std::optional<SyntheticExample>>> futures;
    for (int i = wave_begin + 1; i < wave_end; ++i) {
      futures.push_back(std::async(std::launch::async, build_example, i, std::cref(chunks),
                                   std::cref(result.units), std::cref(config),
                                   std::ref(backend), std::ref(diag)));
    }
    std::vector<std::optional<SyntheticExample>> wave;
    wave.push_back(build_example(wave_begin, chunks, result.units, config, backend, diag));
    for (auto& f : futures) wave.push_back(f.get());

    for (auto& maybe_example : wave) {
      if (maybe_example) {
        result.examples.push_back(std::move(*maybe_example));
      } else {
        ++result.skipped;
      }
    }
  }

  if (result.skipped * 10 > num_examples) {
    throw PipelineError("too many examples skipped: " + std::to_string(result.skipped) +
                        " of " + std::to_string(num_examples));
  }
  return result;
}

nlohmann::ordered_json example_to_json(const SyntheticExample& ex) {
  nlohmann::ordered_json j;
  j["example_id"] = ex.example_id;
  j["query"] = ex.query;
  j["seed_unit_ids"] = ex.seed_unit_ids;
  j["applicable_unit_ids"] = ex.applicable_unit_ids;
  nlohmann::ordered_json rollouts = nlohmann::ordered_json::array();
  for (const auto& sample : ex.rollouts) {
    nlohmann::ordered_json js;
    js["text"] = sample.text;
    if (!sample.logprobs.empty()) {
      nlohmann::ordered_json lp = nlohmann::ordered_json::array();
      for (const auto& tok : sample.logprobs) {
        nlohmann::ordered_json jt;
        jt["token"] = tok.token;
        nlohmann::ordered_json top = nlohmann::ordered_json::array();
        for (const auto& [t, p] : tok.top) top.push_back({t, p});
        jt["top"] = std::move(top);
        lp.push_back(std::move(jt));
      }
      js["top_logprobs"] = std::move(lp);
    }
    rollouts.push_back(std::move(js));
  }
  j["rollouts"] = std::move(rollouts);
  return j;
}

SyntheticExample example_from_json(const nlohmann::json& j) {
  SyntheticExample ex;
  ex.example_id = j.at("example_id").get<int>();
  ex.query = j.at("query").get<std::string>();
  ex.seed_unit_ids = j.at("seed_unit_ids").get<std::vector<int>>();
  ex.applicable_unit_ids = j.at("applicable_unit_ids").get<std::vector<int>>();
  for (const auto& js : j.at("rollouts")) {
    RolloutSample sample;
    sample.text = js.at("text").get<std::string>();
    if (js.contains("top_logprobs")) {
      for (const auto& jt : js.at("top_logprobs")) {
        TokenTopLogprobs tok;
        tok.token = jt.at("token").get<std::string>();
        for (const auto& pair : jt.at("top")) {
          tok.top.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<double>());
        }
        sample.logprobs.push_back(std::move(tok));
      }
    }
    ex.rollouts.push_back(std::move(sample));
  }
  return ex;
}

void write_dataset(const std::string& path, const std::vector<SyntheticExample>& examples,
                   const nlohmann::json& config) {
  JsonlWriter writer(path, config);
  for (const auto& ex : examples) writer.write(example_to_json(ex));
}

std::vector<SyntheticExample> read_dataset(const std::string& path) {
  std::vector<SyntheticExample> examples;
  read_jsonl(path, [&examples](const nlohmann::json& j) {
    examples.push_back(example_from_json(j));
  });
  return examples;
}

VerificationQuality verification_quality(const std::set<int>& predicted,
                                         const std::set<int>& reference) {
  VerificationQuality q;
  for (int id : predicted) {
    if (reference.count(id)) {
      ++q.true_positives;
    } else {
      ++q.false_positives;
    }
  }
  for (int id : reference) {
    if (!predicted.count(id)) ++q.false_negatives;
  }
  q.precision = predicted.empty() ? 1.0
                                  : static_cast<double>(q.true_positives) /
                                        static_cast<double>(predicted.size());
  q.recall = reference.empty() ? 1.0
                               : static_cast<double>(q.true_positives) /
                                     static_cast<double>(reference.size());
  return q;
}

}  // namespace ctxdistill::gen
