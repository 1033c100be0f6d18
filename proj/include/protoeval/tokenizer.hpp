#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace protoeval {

/// Token counting backend. Provider tokenizers differ, so corpus statistics
/// are comparative only; the default splits on Unicode whitespace.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::size_t count(std::string_view text) const = 0;
  virtual std::string name() const = 0;
};

/// Counts maximal runs of non-whitespace code points. Whitespace is the
/// Unicode White_Space set; invalid UTF-8 bytes count as non-whitespace.
class WhitespaceTokenizer final : public Tokenizer {
 public:
  std::size_t count(std::string_view text) const override;
  std::string name() const override { return "whitespace"; }
};

bool is_unicode_whitespace(char32_t cp) noexcept;

}  // namespace protoeval
