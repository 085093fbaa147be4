#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"

#include "ctxdistill/eval.hpp"
#include "ctxdistill/http_backend.hpp"
#include "ctxdistill/pipeline.hpp"
#include "ctxdistill/retail.hpp"
#include "ctxdistill/student.hpp"
#include "ctxdistill/train.hpp"

namespace ctxdistill {

/// One declarative document drives every subcommand, so a multi-stage
/// experiment is reproducible from a single file. Unknown keys anywhere in
/// the document are rejected with their full path.
struct RunConfig {
  std::uint64_t seed = 0;
  int workers = 1;
  std::string tokenizer = "whitespace";

  struct Paths {
    std::string corpus;
    std::string units = "units.jsonl";
    std::string dataset = "dataset.jsonl";
    std::string cache_dir = "cache";
    std::string checkpoint = "student.json";
    std::string report = "report.json";
    std::string eval_set = "retail_eval.jsonl";
    std::string predictions;
  } paths;

  struct Backend {
    std::string kind = "scripted";  ///< "scripted" or "http"
    gen::HttpBackendConfig http;
  } backend;

  gen::PipelineConfig pipeline;

  struct Train {
    distill::TrainConfig loop;
    distill::StudentArch student{0, 16, 64, 48, 0};  ///< vocab_size filled at run time
    int decode_max_tokens = 96;
  } train;

  eval::ChrfParams chrf;

  struct Retail {
    retail::QueryGenConfig gen;
    int num_queries = 256;
  } retail_cfg;

  struct Eval {
    std::string task = "retail";
  } eval_cfg;

  static RunConfig from_json(const nlohmann::json& doc);
  static RunConfig load(const std::string& path);

  /// Canonical serialization of the effective configuration; hashed into
  /// every output file header.
  nlohmann::json to_json() const;
};

}  // namespace ctxdistill
