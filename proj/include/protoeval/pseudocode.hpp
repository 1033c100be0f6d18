#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "protoeval/actions.hpp"

namespace protoeval::pseudocode {

enum class Severity { warning, violation };

std::string_view to_string(Severity s) noexcept;

struct ParseDiagnostic {
  Severity severity = Severity::warning;
  /// 1-based line in the original text; 0 for document-level notes.
  std::size_t line = 0;
  std::string message;

  bool operator==(const ParseDiagnostic&) const = default;
};

struct Argument {
  std::optional<std::string> keyword;
  /// Raw source text of the value, trimmed. Lines of a multi-line call are
  /// joined with a single space.
  std::string value;

  bool operator==(const Argument&) const = default;
};

struct FunctionCall {
  std::string name;
  std::vector<Argument> args;
  std::size_t source_line = 0;
  bool in_loop = false;

  /// Compares name and arguments only; the location fields describe where
  /// the call was found, not what it is.
  bool operator==(const FunctionCall& other) const {
    return name == other.name && args == other.args;
  }
};

struct PseudocodeDoc {
  std::vector<std::string> declared_functions;
  std::vector<FunctionCall> calls;
  std::vector<ParseDiagnostic> diagnostics;
  std::string raw_text;

  bool operator==(const PseudocodeDoc&) const = default;
};

/// Line-oriented recognizer for model-generated Python-style pseudocode.
///
/// Recognizes `def Name(...)` headers and call statements `Name(arg, kw=v)`
/// (optionally behind an assignment) at any nesting depth. Loops are not
/// unrolled: a call inside a loop body is listed once and flagged with a
/// warning. Code-fence lines, and any prose before the first fence, are
/// dropped. Never throws; malformed calls become violation diagnostics.
PseudocodeDoc parse_pseudocode(std::string_view text);

/// One violation per call whose name the registry does not know.
std::vector<ParseDiagnostic> validate_doc(const PseudocodeDoc& doc,
                                          const actions::ActionRegistry& registry);

std::vector<std::string> extract_call_sequence(const PseudocodeDoc& doc);

/// `Name(a, kw=v)` with arguments separated by ", ".
std::string render_call(const FunctionCall& call);

/// Canonical text: one `def Name(*args, **kwargs): pass` line per declared
/// function, a blank line, then one rendered call per line. Empty for a
/// document with neither.
std::string serialize(const PseudocodeDoc& doc);

}  // namespace protoeval::pseudocode
