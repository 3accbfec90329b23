#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace merlean::leanlex {

enum class Tok {
  ident,
  keyword,
  number,
  string_lit,
  char_lit,
  symbol,
  line_comment,
  block_comment,
  doc_comment,
};

struct Token {
  Tok kind = Tok::symbol;
  std::string text;
  std::size_t offset = 0;
  int line = 1;  // 1-based
  int col = 1;   // 1-based byte column
};

struct LexIssue {
  std::string message;
  int line = 1;
  int col = 1;
};

struct LexResult {
  std::vector<Token> tokens;
  std::vector<LexIssue> issues;
};

inline const std::unordered_set<std::string_view>& keywords() {
  static const std::unordered_set<std::string_view> kw = {
      "def",        "theorem",   "lemma",     "axiom",     "instance",
      "abbrev",     "structure", "inductive", "class",     "example",
      "where",      "deriving",  "extends",   "by",        "fun",
      "match",      "with",      "do",        "let",       "have",
      "show",       "from",      "calc",      "if",        "then",
      "else",       "import",    "open",      "namespace", "end",
      "section",    "variable",  "variables", "universe",  "universes",
      "noncomputable", "private", "protected", "partial",  "unsafe",
      "mutual",     "macro",     "syntax",    "notation",  "infixl",
      "infixr",     "prefix",    "postfix",   "set_option", "attribute",
      "sorry",      "at",        "in",        "exists",    "forall",
  };
  return kw;
}

inline bool is_ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

inline bool is_ident_cont(char c) {
  return is_ident_start(c) || (c >= '0' && c <= '9') || c == '\'' ||
         c == '!' || c == '?';
}

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Lexes Lean-flavoured source well enough for a census: nested block
// comments, doc comments, strings, char literals, dotted identifiers.
// Identifiers are ASCII-only; multi-byte codepoints become one symbol
// token each, which loses unicode names but keeps positions exact.
inline LexResult lex(std::string_view src, bool keep_comments = false) {
  LexResult result;
  std::size_t i = 0;
  int line = 1, col = 1;

  auto advance = [&](std::size_t n) {
    for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
      if (src[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
  };
  auto push = [&](Tok kind, std::size_t begin, int tline, int tcol) {
    if (!keep_comments && (kind == Tok::line_comment ||
                           kind == Tok::block_comment || kind == Tok::doc_comment))
      return;
    result.tokens.push_back(
        {kind, std::string(src.substr(begin, i - begin)), begin, tline, tcol});
  };

  while (i < src.size()) {
    char c = src[i];
    int tline = line, tcol = col;
    std::size_t begin = i;

    if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      advance(1);
      continue;
    }

    // Line comment.
    if (c == '-' && i + 1 < src.size() && src[i + 1] == '-') {
      while (i < src.size() && src[i] != '\n') advance(1);
      push(Tok::line_comment, begin, tline, tcol);
      continue;
    }

    // Block or doc comment, nesting aware.
    if (c == '/' && i + 1 < src.size() && src[i + 1] == '-') {
      bool doc = i + 2 < src.size() && src[i + 2] == '-' &&
                 !(i + 3 < src.size() && src[i + 3] == '/');
      advance(2);
      int depth = 1;
      while (i < src.size() && depth > 0) {
        if (src[i] == '/' && i + 1 < src.size() && src[i + 1] == '-') {
          depth++;
          advance(2);
        } else if (src[i] == '-' && i + 1 < src.size() && src[i + 1] == '/') {
          depth--;
          advance(2);
        } else {
          advance(1);
        }
      }
      if (depth > 0)
        result.issues.push_back({"unterminated block comment", tline, tcol});
      push(doc ? Tok::doc_comment : Tok::block_comment, begin, tline, tcol);
      continue;
    }

    if (c == '"') {
      advance(1);
      bool closed = false;
      while (i < src.size()) {
        if (src[i] == '\\' && i + 1 < src.size()) {
          advance(2);
          continue;
        }
        if (src[i] == '"') {
          advance(1);
          closed = true;
          break;
        }
        if (src[i] == '\n') break;  // Lean strings do not span raw newlines
        advance(1);
      }
      if (!closed)
        result.issues.push_back({"unterminated string literal", tline, tcol});
      push(Tok::string_lit, begin, tline, tcol);
      continue;
    }

    if (c == '\'') {
      // Char literal when it closes within a short window; otherwise a
      // stray symbol (identifier-trailing primes are consumed by the
      // identifier scanner below).
      std::size_t j = i + 1;
      if (j < src.size() && src[j] == '\\') {
        j += 2;
        while (j < src.size() && src[j] != '\'' && j - i < 10) ++j;
      } else if (j < src.size() && src[j] != '\'') {
        ++j;
        while (j < src.size() && (static_cast<unsigned char>(src[j]) & 0xC0) == 0x80)
          ++j;  // finish a multi-byte codepoint
      }
      if (j < src.size() && src[j] == '\'') {
        advance(j - i + 1);
        push(Tok::char_lit, begin, tline, tcol);
        continue;
      }
      advance(1);
      push(Tok::symbol, begin, tline, tcol);
      continue;
    }

    if (is_digit(c)) {
      while (i < src.size() &&
             (is_digit(src[i]) || src[i] == '.' || src[i] == '_' ||
              (src[i] >= 'a' && src[i] <= 'f') || (src[i] >= 'A' && src[i] <= 'F') ||
              src[i] == 'x' || src[i] == 'X' || src[i] == 'o' || src[i] == 'O' ||
              src[i] == 'b'))
        advance(1);
      push(Tok::number, begin, tline, tcol);
      continue;
    }

    if (is_ident_start(c)) {
      while (i < src.size()) {
        if (is_ident_cont(src[i])) {
          advance(1);
        } else if (src[i] == '.' && i + 1 < src.size() &&
                   (is_ident_start(src[i + 1]) || is_digit(src[i + 1]))) {
          advance(2);  // dotted segment: Nat.succ, x.1
        } else {
          break;
        }
      }
      std::string_view text = src.substr(begin, i - begin);
      push(keywords().count(text) ? Tok::keyword : Tok::ident, begin, tline, tcol);
      continue;
    }

    if (static_cast<unsigned char>(c) >= 0x80) {
      advance(1);
      while (i < src.size() && (static_cast<unsigned char>(src[i]) & 0xC0) == 0x80)
        advance(1);
      push(Tok::symbol, begin, tline, tcol);
      continue;
    }

    // Multi-char ASCII operators the downstream scanners care about.
    static constexpr std::string_view two_char[] = {":=", "=>", "->", "<-"};
    bool matched = false;
    for (std::string_view op : two_char) {
      if (src.substr(i, 2) == op) {
        advance(2);
        push(Tok::symbol, begin, tline, tcol);
        matched = true;
        break;
      }
    }
    if (matched) continue;

    advance(1);
    push(Tok::symbol, begin, tline, tcol);
  }
  return result;
}

// One top-level declaration-ish command found by the structural scan.
struct DeclSpan {
  std::string keyword;           // def | theorem | lemma | axiom | ...
  std::string name;              // synthesized for anonymous instances
  bool anonymous = false;
  std::size_t first_token = 0;   // index into the token list
  std::size_t last_token = 0;    // inclusive
  int start_line = 1;
  int end_line = 1;
  std::size_t begin_offset = 0;
  std::size_t end_offset = 0;    // one past the last token
  std::optional<std::string> doc_comment;
};

struct SkippedCommand {
  int line = 1;
  std::string what;
};

struct DeclScan {
  std::vector<DeclSpan> decls;
  std::vector<SkippedCommand> skipped;
};

inline bool is_decl_keyword(std::string_view kw) {
  return kw == "def" || kw == "theorem" || kw == "lemma" || kw == "axiom" ||
         kw == "instance" || kw == "abbrev" || kw == "structure" ||
         kw == "inductive" || kw == "class";
}

inline bool is_modifier_keyword(std::string_view kw) {
  return kw == "noncomputable" || kw == "private" || kw == "protected" ||
         kw == "partial" || kw == "unsafe";
}

inline bool is_structural_keyword(std::string_view kw) {
  return kw == "import" || kw == "open" || kw == "namespace" || kw == "end" ||
         kw == "section" || kw == "variable" || kw == "variables" ||
         kw == "universe" || kw == "universes" || kw == "set_option" ||
         kw == "attribute" || kw == "mutual" || kw == "example" ||
         kw == "macro" || kw == "syntax" || kw == "notation" ||
         kw == "infixl" || kw == "infixr" || kw == "prefix" || kw == "postfix" ||
         kw == "deriving";
}

// Structural scan over a lexed file. Lean commands start in column 1; any
// indented line is a continuation. This is a lexical approximation (no
// elaboration), which is all the census and the informalizer need.
inline DeclScan scan_declarations(const LexResult& lexed,
                                  std::string_view module_stem) {
  DeclScan scan;
  const auto& toks = lexed.tokens;

  auto is_comment = [](const Token& t) {
    return t.kind == Tok::line_comment || t.kind == Tok::block_comment ||
           t.kind == Tok::doc_comment;
  };

  // Candidate command starts: column-1 non-comment tokens at bracket depth 0.
  std::vector<std::size_t> starts;
  {
    int depth = 0;
    for (std::size_t k = 0; k < toks.size(); ++k) {
      const Token& t = toks[k];
      if (!is_comment(t) && depth == 0 && t.col == 1) starts.push_back(k);
      if (t.kind == Tok::symbol) {
        if (t.text == "(" || t.text == "[" || t.text == "{") depth++;
        if (t.text == ")" || t.text == "]" || t.text == "}") depth = depth > 0 ? depth - 1 : 0;
      }
    }
  }

  std::size_t consumed_until = 0;  // token index below which starts are spent
  for (std::size_t si = 0; si < starts.size(); ++si) {
    std::size_t k = starts[si];
    if (k < consumed_until) continue;
    const Token& t = toks[k];

    // Walk the command prefix: attribute groups and modifiers, possibly
    // spanning lines.
    std::size_t p = k;
    auto skip_comments = [&]() {
      while (p < toks.size() && is_comment(toks[p])) ++p;
    };
    skip_comments();
    while (p < toks.size()) {
      if (toks[p].kind == Tok::symbol && toks[p].text == "@" &&
          p + 1 < toks.size() && toks[p + 1].text == "[") {
        int depth = 0;
        p += 1;
        while (p < toks.size()) {
          if (toks[p].kind == Tok::symbol && toks[p].text == "[") depth++;
          if (toks[p].kind == Tok::symbol && toks[p].text == "]") {
            depth--;
            if (depth == 0) { ++p; break; }
          }
          ++p;
        }
        skip_comments();
        continue;
      }
      if (toks[p].kind == Tok::keyword && is_modifier_keyword(toks[p].text)) {
        ++p;
        skip_comments();
        continue;
      }
      break;
    }

    if (p >= toks.size()) break;
    const Token& head = toks[p];

    if (head.kind == Tok::keyword && is_decl_keyword(head.text)) {
      DeclSpan d;
      d.keyword = head.text == "class" ? "structure" : head.text;
      d.first_token = k;
      d.start_line = t.line;
      d.begin_offset = t.offset;
      // Name: next identifier token (anonymous instances hit ':' first).
      std::size_t q = p + 1;
      while (q < toks.size() && is_comment(toks[q])) ++q;
      if (q < toks.size() && toks[q].kind == Tok::ident) {
        d.name = toks[q].text;
      } else {
        d.anonymous = true;
        d.name = std::string(module_stem) + "_" + d.keyword + "_" +
                 std::to_string(head.line);
      }
      // Extent: until the next unconsumed command start.
      std::size_t next_start = toks.size();
      for (std::size_t sj = si + 1; sj < starts.size(); ++sj) {
        if (starts[sj] > q) { next_start = starts[sj]; break; }
      }
      std::size_t last = next_start == 0 ? 0 : next_start - 1;
      if (last >= toks.size()) last = toks.size() - 1;
      // Trailing comments before the next command belong to the next one.
      while (last > q && is_comment(toks[last])) --last;
      d.last_token = last;
      d.end_line = toks[last].line;
      d.end_offset = toks[last].offset + toks[last].text.size();
      // Doc comment immediately preceding the command.
      if (k > 0 && toks[k - 1].kind == Tok::doc_comment) {
        std::string text = toks[k - 1].text;
        if (text.size() >= 5) {
          text = text.substr(3, text.size() - 5);  // strip /-- and -/
          while (!text.empty() && (text.front() == ' ' || text.front() == '\n'))
            text.erase(text.begin());
          while (!text.empty() && (text.back() == ' ' || text.back() == '\n'))
            text.pop_back();
        }
        d.doc_comment = text;
      }
      consumed_until = next_start;
      scan.decls.push_back(std::move(d));
      continue;
    }

    if (head.kind == Tok::keyword && is_structural_keyword(head.text)) {
      consumed_until = k + 1;
      continue;
    }

    scan.skipped.push_back({head.line, head.text});
    consumed_until = k + 1;
  }
  return scan;
}

// Signature slice of a declaration: from its first token up to (not
// including) the first `:=`, `where`, or constructor bar at depth 0.
// Axioms and bodiless declarations yield the whole declaration.
inline std::string decl_signature(std::string_view src, const LexResult& lexed,
                                  const DeclSpan& d) {
  const auto& toks = lexed.tokens;
  int depth = 0;
  std::size_t cut = d.end_offset;
  for (std::size_t k = d.first_token; k <= d.last_token && k < toks.size(); ++k) {
    const Token& t = toks[k];
    if (t.kind == Tok::symbol) {
      if (t.text == "(" || t.text == "[" || t.text == "{") depth++;
      if (t.text == ")" || t.text == "]" || t.text == "}") depth = depth > 0 ? depth - 1 : 0;
      if (depth == 0 && (t.text == ":=" || t.text == "|")) {
        cut = t.offset;
        break;
      }
    }
    if (t.kind == Tok::keyword && depth == 0 && t.text == "where" &&
        k > d.first_token) {
      cut = t.offset;
      break;
    }
  }
  std::string sig(src.substr(d.begin_offset, cut - d.begin_offset));
  while (!sig.empty() && (sig.back() == ' ' || sig.back() == '\n' || sig.back() == '\t'))
    sig.pop_back();
  return sig;
}

// True when the declaration carries a body after its signature cut.
inline bool decl_has_body(std::string_view src, const LexResult& lexed,
                          const DeclSpan& d) {
  std::string sig = decl_signature(src, lexed, d);
  std::size_t sig_end = d.begin_offset + sig.size();
  return d.end_offset > sig_end + 1;
}

}  // namespace merlean::leanlex
