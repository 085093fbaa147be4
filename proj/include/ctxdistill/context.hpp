#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ctxdistill/backend.hpp"
#include "ctxdistill/diagnostics.hpp"
#include "ctxdistill/tokenizer.hpp"

namespace ctxdistill {

/// A natural-language context corpus together with its token count under
/// the configured tokenizer.
struct ContextCorpus {
  std::string corpus_id;
  std::string raw_text;
  std::size_t token_count = 0;

  /// raw_text must be non-empty and tokenize to at least one token.
  static ContextCorpus from_text(std::string corpus_id, std::string text,
                                 const Tokenizer& tokenizer);
};

/// One window of the corpus in token space. `text` is the exact substring
/// backing the token range; consecutive chunk texts tile the corpus when the
/// overlap prefix of each later chunk is dropped.
struct Chunk {
  std::size_t index = 0;
  std::size_t token_begin = 0;
  std::size_t token_end = 0;  ///< half-open
  std::string text;
};

/// One atomic, independently evaluable piece of the corpus.
struct ContextUnit {
  int unit_id = 0;  ///< dense 0..n-1, assigned in corpus order
  std::string text;
  std::size_t source_chunk = 0;
};

struct ChunkParams {
  std::size_t chunk_tokens = 8192;
  std::size_t overlap_tokens = 512;
};

/// Splits the corpus into overlapping token windows. With stride =
/// chunk_tokens - overlap_tokens, chunk i covers
/// [i*stride, min(i*stride + chunk_tokens, token_count)).
std::vector<Chunk> chunk_corpus(const ContextCorpus& corpus, const Tokenizer& tokenizer,
                                const ChunkParams& params = {});

/// Parses a decomposition reply: items are separated by lines consisting
/// solely of "###" (surrounding whitespace ignored). Items are trimmed,
/// leading enumeration markers ("1.", "-", "•") stripped, empties dropped,
/// internal newlines of multi-line items preserved. Total function.
std::vector<std::string> parse_units(std::string_view raw);

/// Sends the chunk through the decomposition prompt and parses the reply.
/// Unit ids continue from next_unit_id. A reply with zero parseable items is
/// a recorded warning, not an error; a backend that keeps failing raises
/// PipelineError carrying the chunk index.
std::vector<ContextUnit> decompose(const Chunk& chunk, gen::GenerationBackend& backend,
                                   int next_unit_id, Diagnostics& diag,
                                   const gen::SamplingParams& params = {0.0, 4096, {}, 0, 0});

/// Units persist as line-delimited records {unit_id, source_chunk, text},
/// the format shared with the generation pipeline.
void write_units(const std::string& path, const std::vector<ContextUnit>& units,
                 const nlohmann::json& config);
std::vector<ContextUnit> read_units(const std::string& path);

}  // namespace ctxdistill
