#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"

#include "ctxdistill/backend.hpp"
#include "ctxdistill/context.hpp"
#include "ctxdistill/errors.hpp"
#include "ctxdistill/rng.hpp"
#include "support/tempdir.hpp"

using namespace ctxdistill;

namespace {

std::string random_words(std::size_t n_words, std::uint64_t seed) {
  Rng rng(seed);
  std::string out;
  for (std::size_t i = 0; i < n_words; ++i) {
    if (i) out += (rng.bounded(12) == 0) ? "\n" : " ";
    const int len = 1 + static_cast<int>(rng.bounded(9));
    for (int k = 0; k < len; ++k) out += static_cast<char>('a' + rng.bounded(26));
  }
  return out;
}

}  // namespace

TEST_CASE("whitespace tokenizer groups alphanumeric runs and splits punctuation") {
  WhitespacePunctTokenizer tok;
  const std::string text = "Hello, world! abc123 x";
  const auto spans = tok.spans(text);
  std::vector<std::string> tokens;
  for (const auto& s : spans) tokens.push_back(text.substr(s.begin, s.end - s.begin));
  CHECK(tokens == std::vector<std::string>{"Hello", ",", "world", "!", "abc123", "x"});
}

TEST_CASE("byte tokenizer emits one span per byte") {
  ByteTokenizer tok;
  CHECK(tok.count("ab c") == 4);
  const auto spans = tok.spans("ab");
  REQUIRE(spans.size() == 2);
  CHECK(spans[1].begin == 1);
  CHECK(spans[1].end == 2);
}

TEST_CASE("make_tokenizer resolves names and rejects unknowns") {
  CHECK(make_tokenizer("whitespace")->name() == "whitespace");
  CHECK(make_tokenizer("byte")->name() == "byte");
  CHECK_THROWS_AS(make_tokenizer("sentencepiece"), ConfigError);
}

TEST_CASE("corpus from empty text is rejected") {
  WhitespacePunctTokenizer tok;
  CHECK_THROWS_AS(ContextCorpus::from_text("c", "", tok), InputError);
  CHECK_THROWS_AS(ContextCorpus::from_text("c", "   \n ", tok), InputError);
}

TEST_CASE("single chunk when the corpus fits") {
  WhitespacePunctTokenizer tok;
  const auto corpus = ContextCorpus::from_text("c", "one two three", tok);
  const auto chunks = chunk_corpus(corpus, tok, {8192, 512});
  REQUIRE(chunks.size() == 1);
  CHECK(chunks[0].token_begin == 0);
  CHECK(chunks[0].token_end == 3);
  CHECK(chunks[0].text == "one two three");
}

TEST_CASE("chunking tiles randomized corpora with exact overlap") {
  WhitespacePunctTokenizer tok;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const std::size_t n_words = 2000 + seed * 1500;
    const auto corpus = ContextCorpus::from_text("c", random_words(n_words, seed), tok);
    const ChunkParams params{600, 150};
    const auto chunks = chunk_corpus(corpus, tok, params);
    const auto spans = tok.spans(corpus.raw_text);
    REQUIRE(!chunks.empty());

    const std::size_t stride = params.chunk_tokens - params.overlap_tokens;
    CHECK(chunks.front().token_begin == 0);
    CHECK(chunks.back().token_end == corpus.token_count);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      const auto& c = chunks[i];
      CHECK(c.index == i);
      CHECK(c.token_begin == i * stride);
      CHECK(c.token_end - c.token_begin <= params.chunk_tokens);
      CHECK(c.token_end > c.token_begin);
      // Chunk text runs from the first byte of its first token to the first
      // byte of the following token (or corpus end), so stitched chunks
      // reproduce the corpus byte-exactly, inter-token whitespace included.
      const std::size_t byte_begin = c.token_begin == 0 ? 0 : spans[c.token_begin].begin;
      const std::size_t byte_end = c.token_end == corpus.token_count
                                       ? corpus.raw_text.size()
                                       : spans[c.token_end].begin;
      CHECK(c.text == corpus.raw_text.substr(byte_begin, byte_end - byte_begin));
      if (i > 0) {
        // Consecutive chunks share exactly overlap_tokens token positions.
        CHECK(chunks[i - 1].token_end - c.token_begin == params.overlap_tokens);
      }
    }
    // Dropping each later chunk's overlap prefix reassembles the corpus in
    // token space: the kept ranges tile [0, token_count) without gaps.
    std::size_t covered = chunks.front().token_end;
    for (std::size_t i = 1; i < chunks.size(); ++i) {
      CHECK(chunks[i].token_begin + params.overlap_tokens == covered);
      covered = chunks[i].token_end;
    }
    CHECK(covered == corpus.token_count);
  }
}

TEST_CASE("overlap must be smaller than the chunk size") {
  WhitespacePunctTokenizer tok;
  const auto corpus = ContextCorpus::from_text("c", "a b c", tok);
  CHECK_THROWS_AS(chunk_corpus(corpus, tok, {100, 100}), ConfigError);
  CHECK_THROWS_AS(chunk_corpus(corpus, tok, {0, 0}), ConfigError);
}

TEST_CASE("parse_units splits on ### separators and strips markers") {
  const auto units = parse_units("First rule.\n###\n- Second rule\n###\n3. Third rule\n"
                                 "with a continuation line\n###\n\n###\n");
  REQUIRE(units.size() == 3);
  CHECK(units[0] == "First rule.");
  CHECK(units[1] == "Second rule");
  CHECK(units[2] == "Third rule\nwith a continuation line");
}

TEST_CASE("parse_units tolerates padded separators and empty input") {
  CHECK(parse_units("").empty());
  CHECK(parse_units("   ###   ").empty());
  const auto units = parse_units("alpha\n  ###  \nbeta");
  REQUIRE(units.size() == 2);
  CHECK(units[1] == "beta");
}

TEST_CASE("decompose assigns continuing unit ids and records the source chunk") {
  Diagnostics diag(true);
  gen::ScriptedBackend backend([](gen::Role role, const std::string&, const gen::SamplingParams&) {
    CHECK(role == gen::Role::kInstruct);
    return gen::BackendReply{"u1\n###\nu2"};
  });
  Chunk chunk{3, 0, 2, "raw"};
  const auto units = decompose(chunk, backend, 7, diag);
  REQUIRE(units.size() == 2);
  CHECK(units[0].unit_id == 7);
  CHECK(units[1].unit_id == 8);
  CHECK(units[0].source_chunk == 3);
  CHECK(units[1].text == "u2");
}

TEST_CASE("decompose records a warning when nothing parses") {
  Diagnostics diag(true);
  gen::ScriptedBackend backend(
      [](gen::Role, const std::string&, const gen::SamplingParams&) {
        return gen::BackendReply{"   "};
      });
  const auto units = decompose(Chunk{0, 0, 1, "x"}, backend, 0, diag);
  CHECK(units.empty());
  CHECK(diag.warnings() == 1);
}

TEST_CASE("units round-trip through the jsonl file format") {
  testsupport::TempDir tmp("units");
  const std::vector<ContextUnit> units = {{0, "first unit", 0}, {1, "second\nline", 2}};
  write_units(tmp.file("u.jsonl"), units, nlohmann::json{{"k", "v"}});
  const auto back = read_units(tmp.file("u.jsonl"));
  REQUIRE(back.size() == 2);
  CHECK(back[0].unit_id == 0);
  CHECK(back[1].text == "second\nline");
  CHECK(back[1].source_chunk == 2);
}
