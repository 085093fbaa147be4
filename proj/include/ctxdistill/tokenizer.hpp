#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace ctxdistill {

/// Half-open byte range of one token inside the source text.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Pluggable tokenizer. Chunk arithmetic must be reproducible without a
/// model vocabulary, so implementations are deterministic functions of the
/// input bytes and report where each token lives in the source.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::vector<TokenSpan> spans(std::string_view text) const = 0;
  virtual std::string name() const = 0;

  std::size_t count(std::string_view text) const { return spans(text).size(); }
};

/// Default tokenizer: maximal runs of alphanumeric bytes are one token each,
/// every other non-whitespace byte is a single-character token, whitespace
/// separates and is not emitted.
class WhitespacePunctTokenizer final : public Tokenizer {
 public:
  std::vector<TokenSpan> spans(std::string_view text) const override;
  std::string name() const override { return "whitespace"; }
};

/// One token per byte, including whitespace. Used for character-level runs.
class ByteTokenizer final : public Tokenizer {
 public:
  std::vector<TokenSpan> spans(std::string_view text) const override;
  std::string name() const override { return "byte"; }
};

/// Factory for the names accepted in configuration ("whitespace", "byte").
std::unique_ptr<Tokenizer> make_tokenizer(const std::string& name);

}  // namespace ctxdistill
