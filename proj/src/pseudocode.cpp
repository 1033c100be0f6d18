#include "protoeval/pseudocode.hpp"

#include <algorithm>
#include <array>

#include <fmt/format.h>

#include "text_util.hpp"

namespace protoeval::pseudocode {

namespace {

using detail::trim;

constexpr std::size_t kMaxContinuationLines = 64;

constexpr std::array<std::string_view, 35> kKeywords = {
    "False", "None",   "True",     "and",   "as",     "assert", "async",  "await",  "break",
    "class", "continue", "def",    "del",   "elif",   "else",   "except", "finally", "for",
    "from",  "global", "if",       "import", "in",    "is",     "lambda", "nonlocal", "not",
    "or",    "pass",   "raise",    "return", "try",   "while",  "with",   "yield"};

bool is_keyword(std::string_view word) noexcept {
  return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

bool is_ident_start(char c) noexcept {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || c == '_';
}
bool is_ident_char(char c) noexcept { return is_ident_start(c) || (c >= '0' && c <= '9'); }

// Length of the identifier starting at s[pos] (0 if none).
std::size_t ident_length(std::string_view s, std::size_t pos) noexcept {
  if (pos >= s.size() || !is_ident_start(s[pos])) return 0;
  std::size_t n = 1;
  while (pos + n < s.size() && is_ident_char(s[pos + n])) ++n;
  return n;
}

std::size_t skip_spaces(std::string_view s, std::size_t pos) noexcept {
  while (pos < s.size() && detail::is_space(s[pos])) ++pos;
  return pos;
}

// Walks a single logical line, tracking string literals. The visitor sees
// every character outside string literals together with its offset.
template <class Visitor>
bool scan_code(std::string_view s, Visitor&& visit) {
  char quote = 0;
  bool escaped = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (quote) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == quote) {
        quote = 0;
      }
      continue;
    }
    if (c == '"' || c == '\'') {
      quote = c;
      continue;
    }
    if (!visit(i, c)) return quote != 0;
  }
  return quote != 0;
}

struct StrippedLine {
  std::string_view code;
  bool open_string = false;
};

StrippedLine strip_comment(std::string_view line) {
  std::size_t cut = line.size();
  const bool open = scan_code(line, [&](std::size_t i, char c) {
    if (c == '#') {
      cut = i;
      return false;
    }
    return true;
  });
  // A '#' ends the scan early, so `open` is only meaningful without a comment.
  StrippedLine out{line.substr(0, cut), false};
  if (cut == line.size()) out.open_string = open;
  return out;
}

// Net '(' minus ')' depth, and whether it ever dipped below zero.
struct ParenBalance {
  long depth = 0;
  bool went_negative = false;
};

ParenBalance paren_balance(std::string_view s) {
  ParenBalance b;
  scan_code(s, [&](std::size_t, char c) {
    if (c == '(') ++b.depth;
    if (c == ')' && --b.depth < 0) b.went_negative = true;
    return true;
  });
  return b;
}

// Offsets of `sep` outside strings and outside any bracket pair.
std::vector<std::size_t> top_level_positions(std::string_view s, char sep) {
  std::vector<std::size_t> out;
  int depth = 0;
  scan_code(s, [&](std::size_t i, char c) {
    if (c == '(' || c == '[' || c == '{') {
      ++depth;
    } else if (c == ')' || c == ']' || c == '}') {
      if (depth > 0) --depth;
    } else if (c == sep && depth == 0) {
      out.push_back(i);
    }
    return true;
  });
  return out;
}

std::vector<std::string_view> split_top_level(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (auto pos : top_level_positions(s, sep)) {
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  parts.push_back(s.substr(start));
  return parts;
}

std::size_t indent_width(std::string_view line) noexcept {
  std::size_t w = 0;
  for (char c : line) {
    if (c == ' ') {
      ++w;
    } else if (c == '\t') {
      w += 4;
    } else {
      break;
    }
  }
  return w;
}

bool is_fence(std::string_view line) noexcept {
  const auto t = trim(line);
  return t.starts_with("```") || t.starts_with("~~~");
}

// `kw = value` with a single '=' (not '==').
std::optional<std::pair<std::string_view, std::string_view>> split_keyword(std::string_view arg) {
  const auto n = ident_length(arg, 0);
  if (n == 0) return std::nullopt;
  auto p = skip_spaces(arg, n);
  if (p >= arg.size() || arg[p] != '=') return std::nullopt;
  if (p + 1 < arg.size() && arg[p + 1] == '=') return std::nullopt;
  return std::make_pair(arg.substr(0, n), trim(arg.substr(p + 1)));
}

std::vector<Argument> parse_arguments(std::string_view inner) {
  std::vector<Argument> args;
  if (trim(inner).empty()) return args;
  for (auto piece : split_top_level(inner, ',')) {
    const auto arg = trim(piece);
    if (auto kw = split_keyword(arg)) {
      args.push_back({std::string(kw->first), std::string(kw->second)});
    } else {
      args.push_back({std::nullopt, std::string(arg)});
    }
  }
  return args;
}

// Removes leading `target =` assignments (targets: dotted names, optionally
// comma-separated). Returns the remaining expression.
std::string_view strip_assignment(std::string_view stmt) {
  while (true) {
    std::size_t pos = 0;
    bool saw_target = false;
    while (true) {
      pos = skip_spaces(stmt, pos);
      auto n = ident_length(stmt, pos);
      if (n == 0) break;
      pos += n;
      while (pos < stmt.size() && stmt[pos] == '.') {
        auto m = ident_length(stmt, pos + 1);
        if (m == 0) break;
        pos += 1 + m;
      }
      saw_target = true;
      pos = skip_spaces(stmt, pos);
      if (pos < stmt.size() && stmt[pos] == ',') {
        ++pos;
        continue;
      }
      break;
    }
    if (!saw_target || pos >= stmt.size() || stmt[pos] != '=') return stmt;
    if (pos + 1 < stmt.size() && stmt[pos + 1] == '=') return stmt;
    stmt = trim(stmt.substr(pos + 1));
  }
}

// True when the text begins like a direct call `name(` after any assignment.
bool looks_like_call_start(std::string_view code) {
  const auto expr = strip_assignment(trim(code));
  auto n = ident_length(expr, 0);
  if (n == 0) return false;
  std::size_t pos = n;
  while (pos < expr.size() && expr[pos] == '.') {
    auto m = ident_length(expr, pos + 1);
    if (m == 0) return false;
    pos += 1 + m;
  }
  pos = skip_spaces(expr, pos);
  return pos < expr.size() && expr[pos] == '(' && !is_keyword(expr.substr(0, n));
}

class Parser {
 public:
  explicit Parser(std::string_view text) : lines_(detail::split_lines(text)) {
    doc_.raw_text = std::string(text);
    skip_.assign(lines_.size(), false);
    mark_fences();
    index_docstring_closers();
  }

  PseudocodeDoc run() {
    std::size_t i = 0;
    while (i < lines_.size()) i = process_line(i);
    bool any_content = std::any_of(lines_.begin(), lines_.end(),
                                   [](std::string_view l) { return !trim(l).empty(); });
    if (doc_.calls.empty() && any_content) {
      warn(0, "no call statements recognized");
    }
    return std::move(doc_);
  }

 private:
  struct Block {
    std::size_t indent;
    bool loop;
  };

  void warn(std::size_t line, std::string msg) {
    doc_.diagnostics.push_back({Severity::warning, line, std::move(msg)});
  }
  void violate(std::size_t line, std::string msg) {
    doc_.diagnostics.push_back({Severity::violation, line, std::move(msg)});
  }

  void mark_fences() {
    bool seen = false;
    for (std::size_t i = 0; i < lines_.size(); ++i) {
      if (is_fence(lines_[i])) {
        if (!seen) {
          for (std::size_t k = 0; k < i; ++k) skip_[k] = true;
          seen = true;
        }
        skip_[i] = true;
      }
    }
  }

  // next_closer_[d][i]: smallest j > i whose line contains delimiter d.
  void index_docstring_closers() {
    static constexpr std::string_view delims[2] = {"\"\"\"", "'''"};
    for (int d = 0; d < 2; ++d) {
      next_closer_[d].assign(lines_.size(), lines_.size());
      std::size_t next = lines_.size();
      for (std::size_t i = lines_.size(); i-- > 0;) {
        next_closer_[d][i] = next;
        if (lines_[i].find(delims[d]) != std::string_view::npos) next = i;
      }
    }
  }

  bool inside_loop() const {
    return std::any_of(blocks_.begin(), blocks_.end(), [](const Block& b) { return b.loop; });
  }

  // Returns the index of the next line to process.
  std::size_t process_line(std::size_t i) {
    if (skip_[i]) return i + 1;
    const auto raw = lines_[i];
    const auto stripped = strip_comment(raw);
    const auto code = trim(stripped.code);
    if (code.empty()) return i + 1;

    const std::size_t indent = indent_width(raw);
    while (!blocks_.empty() && blocks_.back().indent >= indent) blocks_.pop_back();

    const std::size_t line_no = i + 1;

    if (code.starts_with("\"\"\"") || code.starts_with("'''")) {
      const int d = code.starts_with("\"\"\"") ? 0 : 1;
      if (code.substr(3).find(code.substr(0, 3)) != std::string_view::npos) return i + 1;
      const auto closer = next_closer_[d][i];
      if (closer < lines_.size()) return closer + 1;
      warn(line_no, "unterminated docstring ignored");
      return i + 1;
    }

    const auto first_len = ident_length(code, 0);
    const auto first_word = code.substr(0, first_len);

    if (first_word == "def") {
      auto p = skip_spaces(code, first_len);
      auto n = ident_length(code, p);
      if (n > 0 && !is_keyword(code.substr(p, n))) {
        doc_.declared_functions.emplace_back(code.substr(p, n));
      }
      if (auto body = inline_body(code)) {
        handle_statements(*body, line_no, inside_loop());
      } else if (code.back() == ':') {
        blocks_.push_back({indent, false});
      }
      return i + 1;
    }

    if (first_word == "for" || first_word == "while" || first_word == "if" ||
        first_word == "elif" || first_word == "else" || first_word == "with" ||
        first_word == "try" || first_word == "except" || first_word == "finally" ||
        first_word == "async") {
      const bool loop = first_word == "for" || first_word == "while" ||
                        (first_word == "async" && code.find("for") != std::string_view::npos);
      if (auto body = inline_body(code)) {
        handle_statements(*body, line_no, loop || inside_loop());
      } else if (!top_level_positions(code, ':').empty()) {
        blocks_.push_back({indent, loop});
      }
      return i + 1;
    }

    if (!looks_like_call_start(code)) return i + 1;

    // A call-looking line: gather continuation lines until parentheses balance.
    if (stripped.open_string) {
      violate(line_no, "unterminated string in call");
      return i + 1;
    }
    auto balance = paren_balance(code);
    if (balance.went_negative) {
      violate(line_no, "unbalanced parentheses");
      return i + 1;
    }
    std::string joined(code);
    std::size_t last = i;
    while (balance.depth > 0) {
      const std::size_t next = last + 1;
      if (next >= lines_.size() || skip_[next] || next - i > kMaxContinuationLines) {
        violate(line_no, "unbalanced parentheses");
        return i + 1;
      }
      const auto cont = strip_comment(lines_[next]);
      if (cont.open_string) {
        violate(line_no, "unterminated string in call");
        return i + 1;
      }
      const auto piece = trim(cont.code);
      if (!piece.empty()) {
        joined += ' ';
        joined += piece;
      }
      last = next;
      balance = paren_balance(joined);
      if (balance.went_negative) {
        violate(line_no, "unbalanced parentheses");
        return i + 1;
      }
    }
    handle_statements(joined, line_no, inside_loop());
    return last + 1;
  }

  // Text after the header's first top-level ':' when non-empty.
  static std::optional<std::string> inline_body(std::string_view code) {
    const auto colons = top_level_positions(code, ':');
    if (colons.empty()) return std::nullopt;
    const auto rest = trim(code.substr(colons.front() + 1));
    if (rest.empty()) return std::nullopt;
    return std::string(rest);
  }

  void handle_statements(std::string_view text, std::size_t line_no, bool in_loop) {
    for (auto stmt : split_top_level(text, ';')) {
      stmt = trim(stmt);
      if (!stmt.empty()) handle_statement(stmt, line_no, in_loop);
    }
  }

  void handle_statement(std::string_view stmt, std::size_t line_no, bool in_loop) {
    const auto expr = strip_assignment(stmt);
    const auto n = ident_length(expr, 0);
    if (n == 0) return;
    const auto name = expr.substr(0, n);
    if (is_keyword(name)) return;
    std::size_t pos = n;
    if (pos < expr.size() && expr[pos] == '.') {
      warn(line_no, "attribute call skipped");
      return;
    }
    pos = skip_spaces(expr, pos);
    if (pos >= expr.size() || expr[pos] != '(') return;
    const std::size_t open = pos;
    // Find the ')' matching `open`, parentheses only.
    std::size_t close = std::string_view::npos;
    long depth = 0;
    const bool open_string = scan_code(expr.substr(open), [&](std::size_t k, char c) {
      if (c == '(') ++depth;
      if (c == ')' && --depth == 0) {
        close = open + k;
        return false;
      }
      return true;
    });
    if (close == std::string_view::npos || open_string) {
      violate(line_no, "unbalanced parentheses");
      return;
    }
    if (!trim(expr.substr(close + 1)).empty()) {
      warn(line_no, fmt::format("expression around call to {} skipped", name));
      return;
    }
    FunctionCall call;
    call.name = std::string(name);
    call.args = parse_arguments(expr.substr(open + 1, close - open - 1));
    call.source_line = line_no;
    call.in_loop = in_loop;
    if (in_loop) {
      warn(line_no, fmt::format("call to {} inside a loop body counted once (not unrolled)", name));
    }
    doc_.calls.push_back(std::move(call));
  }

  std::vector<std::string_view> lines_;
  std::vector<bool> skip_;
  std::array<std::vector<std::size_t>, 2> next_closer_;
  std::vector<Block> blocks_;
  PseudocodeDoc doc_;
};

}  // namespace

std::string_view to_string(Severity s) noexcept {
  return s == Severity::warning ? "warning" : "violation";
}

PseudocodeDoc parse_pseudocode(std::string_view text) { return Parser(text).run(); }

std::vector<ParseDiagnostic> validate_doc(const PseudocodeDoc& doc,
                                          const actions::ActionRegistry& registry) {
  std::vector<ParseDiagnostic> out;
  for (const auto& call : doc.calls) {
    if (!actions::validate_name(registry, call.name).known()) {
      out.push_back({Severity::violation, call.source_line,
                     fmt::format("unknown action \"{}\"", call.name)});
    }
  }
  return out;
}

std::vector<std::string> extract_call_sequence(const PseudocodeDoc& doc) {
  std::vector<std::string> names;
  names.reserve(doc.calls.size());
  for (const auto& c : doc.calls) names.push_back(c.name);
  return names;
}

std::string render_call(const FunctionCall& call) {
  std::string out = call.name;
  out += '(';
  for (std::size_t i = 0; i < call.args.size(); ++i) {
    if (i) out += ", ";
    const auto& a = call.args[i];
    if (a.keyword) {
      out += *a.keyword;
      out += '=';
      // Keep "kw= =x" from reading back as the comparison "kw==x".
      if (!a.value.empty() && a.value.front() == '=') out += ' ';
    }
    out += a.value;
  }
  out += ')';
  return out;
}

std::string serialize(const PseudocodeDoc& doc) {
  std::string out;
  for (const auto& name : doc.declared_functions) {
    out += fmt::format("def {}(*args, **kwargs): pass\n", name);
  }
  if (!doc.declared_functions.empty() && !doc.calls.empty()) out += '\n';
  for (const auto& call : doc.calls) {
    out += render_call(call);
    out += '\n';
  }
  return out;
}

}  // namespace protoeval::pseudocode
