#include "ctxdistill/context.hpp"

#include <algorithm>
#include <cctype>

#include "ctxdistill/errors.hpp"
#include "ctxdistill/jsonl.hpp"
#include "ctxdistill/prompts.hpp"

namespace ctxdistill {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Strips one leading "1.", "1)", "-", "*" or "•" marker from an item.
std::string strip_enum_marker(const std::string& item) {
  std::size_t i = 0;
  const std::size_t n = item.size();
  if (i < n && std::isdigit(static_cast<unsigned char>(item[i]))) {
    std::size_t j = i;
    while (j < n && std::isdigit(static_cast<unsigned char>(item[j]))) ++j;
    if (j < n && (item[j] == '.' || item[j] == ')')) {
      ++j;
      if (j < n && std::isspace(static_cast<unsigned char>(item[j]))) return trim(item.substr(j));
    }
    return item;
  }
  if (item[i] == '-' || item[i] == '*') {
    if (i + 1 < n && std::isspace(static_cast<unsigned char>(item[i + 1])))
      return trim(item.substr(i + 1));
    return item;
  }
  if (item.compare(0, 3, "\xe2\x80\xa2") == 0) {  // U+2022 bullet
    return trim(item.substr(3));
  }
  return item;
}

}  // namespace

ContextCorpus ContextCorpus::from_text(std::string corpus_id, std::string text,
                                       const Tokenizer& tokenizer) {
  if (text.empty()) throw InputError("corpus is empty: " + corpus_id);
  std::size_t count = tokenizer.count(text);
  if (count == 0) throw InputError("corpus has no tokens: " + corpus_id);
  return ContextCorpus{std::move(corpus_id), std::move(text), count};
}

std::vector<Chunk> chunk_corpus(const ContextCorpus& corpus, const Tokenizer& tokenizer,
                                const ChunkParams& params) {
  if (params.chunk_tokens == 0)
    throw ConfigError("chunk_tokens must be positive");
  if (params.overlap_tokens >= params.chunk_tokens)
    throw ConfigError("overlap_tokens must be smaller than chunk_tokens");
  if (corpus.raw_text.empty()) throw InputError("empty corpus");

  const std::vector<TokenSpan> spans = tokenizer.spans(corpus.raw_text);
  const std::size_t total = spans.size();
  if (total == 0) throw InputError("corpus has no tokens");

  const std::size_t stride = params.chunk_tokens - params.overlap_tokens;
  std::vector<Chunk> chunks;
  for (std::size_t i = 0;; ++i) {
    const std::size_t begin = i * stride;
    const std::size_t end = std::min(begin + params.chunk_tokens, total);
    // Chunk text runs from the first byte of its first token to the first
    // byte of the token after its range, so stitched chunks reproduce the
    // corpus exactly, inter-token whitespace included.
    const std::size_t char_begin = begin == 0 ? 0 : spans[begin].begin;
    const std::size_t char_end = end == total ? corpus.raw_text.size() : spans[end].begin;
    chunks.push_back(Chunk{i, begin, end,
                           corpus.raw_text.substr(char_begin, char_end - char_begin)});
    if (end >= total) break;
  }
  return chunks;
}

std::vector<std::string> parse_units(std::string_view raw) {
  std::vector<std::string> out;
  std::vector<std::string> current;

  auto flush = [&] {
    std::string item;
    for (std::size_t i = 0; i < current.size(); ++i) {
      if (i) item += '\n';
      item += current[i];
    }
    current.clear();
    item = trim(item);
    if (item.empty()) return;
    item = strip_enum_marker(item);
    if (!item.empty()) out.push_back(std::move(item));
  };

  std::size_t pos = 0;
  while (pos <= raw.size()) {
    std::size_t nl = raw.find('\n', pos);
    std::string_view line =
        nl == std::string_view::npos ? raw.substr(pos) : raw.substr(pos, nl - pos);
    if (trim(line) == "###") {
      flush();
    } else {
      current.emplace_back(line);
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  flush();
  return out;
}

std::vector<ContextUnit> decompose(const Chunk& chunk, gen::GenerationBackend& backend,
                                   int next_unit_id, Diagnostics& diag,
                                   const gen::SamplingParams& params) {
  const std::string prompt =
      gen::fill_template(gen::decomposition_template(), {{"chunk", chunk.text}});

  constexpr int kMaxAttempts = 3;
  gen::BackendReply reply;
  for (int attempt = 1;; ++attempt) {
    try {
      reply = backend.complete(gen::Role::kInstruct, prompt, params);
      break;
    } catch (const BackendError& e) {
      if (attempt >= kMaxAttempts)
        throw PipelineError("decompose failed for chunk " + std::to_string(chunk.index) +
                            ": " + e.what());
    }
  }

  std::vector<std::string> items = parse_units(reply.text);
  if (items.empty())
    diag.warn("decompose: chunk " + std::to_string(chunk.index) + " produced no units");

  std::vector<ContextUnit> units;
  units.reserve(items.size());
  for (auto& item : items) {
    units.push_back(ContextUnit{next_unit_id++, std::move(item), chunk.index});
  }
  return units;
}

void write_units(const std::string& path, const std::vector<ContextUnit>& units,
                 const nlohmann::json& config) {
  JsonlWriter writer(path, config);
  for (const auto& u : units) {
    writer.write(nlohmann::ordered_json{
        {"unit_id", u.unit_id}, {"source_chunk", u.source_chunk}, {"text", u.text}});
  }
}

std::vector<ContextUnit> read_units(const std::string& path) {
  std::vector<ContextUnit> units;
  read_jsonl(path, [&](const nlohmann::json& rec) {
    units.push_back(ContextUnit{rec.at("unit_id").get<int>(), rec.at("text").get<std::string>(),
                                rec.at("source_chunk").get<std::size_t>()});
  });
  return units;
}

}  // namespace ctxdistill
