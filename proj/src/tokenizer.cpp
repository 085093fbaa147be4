#include "ctxdistill/tokenizer.hpp"

#include <cctype>

#include "ctxdistill/errors.hpp"

namespace ctxdistill {

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c == '_'; }
bool is_space_byte(unsigned char c) { return std::isspace(c) != 0; }

}  // namespace

std::vector<TokenSpan> WhitespacePunctTokenizer::spans(std::string_view text) const {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (is_space_byte(c)) {
      ++i;
      continue;
    }
    if (is_word_byte(c)) {
      std::size_t j = i + 1;
      while (j < n && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
      out.push_back({i, j});
      i = j;
    } else {
      out.push_back({i, i + 1});
      ++i;
    }
  }
  return out;
}

std::vector<TokenSpan> ByteTokenizer::spans(std::string_view text) const {
  std::vector<TokenSpan> out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) out.push_back({i, i + 1});
  return out;
}

std::unique_ptr<Tokenizer> make_tokenizer(const std::string& name) {
  if (name == "whitespace") return std::make_unique<WhitespacePunctTokenizer>();
  if (name == "byte") return std::make_unique<ByteTokenizer>();
  throw ConfigError("unknown tokenizer: " + name);
}

}  // namespace ctxdistill
