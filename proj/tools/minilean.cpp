// minilean: a miniature offline stand-in for `lake build`, used by the test
// suite and the bundled fixtures. It scans the workspace's .lean files and
// reports diagnostics in the standard `<file>:<line>:<col>: <severity>:
// <message>` shape:
//   - real checks: unterminated strings/comments, unbalanced delimiters,
//     `sorry` usage (warning), imports of missing local modules;
//   - directive-driven diagnostics for fixtures: a comment of the form
//     `--!error: msg` (or warning/info) emits that diagnostic at its own
//     position; following `--!| text` lines extend the message.
// Exit code 1 when any error was reported, 0 otherwise.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "merlean/lean_lex.hpp"
#include "merlean/util.hpp"

namespace fs = std::filesystem;
using merlean::leanlex::LexResult;
using merlean::leanlex::Tok;
using merlean::leanlex::Token;

namespace {

struct Diag {
  int line;
  int col;
  int rank;  // original discovery order, for a stable sort
  std::string severity;
  std::string message;  // continuation lines already indented, '\n'-joined
};

std::vector<fs::path> collect_lean_files(const fs::path& root) {
  std::vector<fs::path> files;
  for (auto it = fs::recursive_directory_iterator(root);
       it != fs::recursive_directory_iterator(); ++it) {
    const fs::path& p = it->path();
    std::string name = p.filename().string();
    if (it->is_directory() && (!name.empty() && name[0] == '.')) {
      it.disable_recursion_pending();
      continue;
    }
    if (it->is_regular_file() && p.extension() == ".lean") files.push_back(p);
  }
  std::sort(files.begin(), files.end(), [&](const fs::path& a, const fs::path& b) {
    return fs::relative(a, root).generic_string() <
           fs::relative(b, root).generic_string();
  });
  return files;
}

// `--!error: msg` / `--!warning: msg` / `--!info: msg` / `--!| continuation`
bool parse_directive(const std::string& comment, std::string& severity,
                     std::string& text, bool& is_continuation) {
  if (comment.rfind("--!", 0) != 0) return false;
  std::string rest = comment.substr(3);
  if (!rest.empty() && rest[0] == '|') {
    is_continuation = true;
    text = merlean::trim(rest.substr(1));
    return true;
  }
  for (const char* sev : {"error", "warning", "info"}) {
    std::string prefix = std::string(sev) + ":";
    if (rest.rfind(prefix, 0) == 0) {
      is_continuation = false;
      severity = sev;
      text = merlean::trim(rest.substr(prefix.size()));
      return true;
    }
  }
  return false;
}

void check_file(const fs::path& root, const fs::path& file,
                std::vector<Diag>& diags) {
  std::string text = merlean::read_file(file);
  LexResult lexed = merlean::leanlex::lex(text, /*keep_comments=*/true);
  int rank = 0;

  for (const auto& issue : lexed.issues)
    diags.push_back({issue.line, issue.col, rank++, "error", issue.message});

  // Delimiter balance over code tokens.
  struct OpenDelim {
    char c;
    int line;
    int col;
  };
  std::vector<OpenDelim> stack;
  auto closes = [](char open, char close) {
    return (open == '(' && close == ')') || (open == '[' && close == ']') ||
           (open == '{' && close == '}');
  };

  std::ptrdiff_t directive_tail = -1;  // index into diags, -1 = none
  for (const auto& tok : lexed.tokens) {
    if (tok.kind == Tok::line_comment) {
      std::string severity, body;
      bool cont = false;
      if (parse_directive(tok.text, severity, body, cont)) {
        if (cont) {
          if (directive_tail >= 0)
            diags[static_cast<std::size_t>(directive_tail)].message += "\n  " + body;
        } else {
          diags.push_back({tok.line, tok.col, rank++, severity, body});
          directive_tail = static_cast<std::ptrdiff_t>(diags.size()) - 1;
        }
      }
      continue;
    }
    if (tok.kind == Tok::keyword && tok.text == "sorry") {
      diags.push_back({tok.line, tok.col, rank++, "warning",
                       "declaration uses 'sorry'"});
      directive_tail = -1;
      continue;
    }
    if (tok.kind == Tok::symbol && tok.text.size() == 1) {
      char c = tok.text[0];
      if (c == '(' || c == '[' || c == '{') {
        stack.push_back({c, tok.line, tok.col});
      } else if (c == ')' || c == ']' || c == '}') {
        if (stack.empty() || !closes(stack.back().c, c)) {
          diags.push_back({tok.line, tok.col, rank++, "error",
                           std::string("unexpected token '") + c + "'"});
        } else {
          stack.pop_back();
        }
      }
    }
    if (tok.kind != Tok::block_comment && tok.kind != Tok::doc_comment)
      directive_tail = -1;
  }
  for (const auto& open : stack)
    diags.push_back({open.line, open.col, rank++, "error",
                     std::string("unclosed delimiter '") + open.c + "'"});

  // Local imports must resolve to files; anything else is external.
  for (std::size_t k = 0; k + 1 < lexed.tokens.size(); ++k) {
    const Token& t = lexed.tokens[k];
    if (t.kind != Tok::keyword || t.text != "import" || t.col != 1) continue;
    const Token& mod = lexed.tokens[k + 1];
    if (mod.kind != Tok::ident) continue;
    std::string rel = mod.text;
    std::replace(rel.begin(), rel.end(), '.', '/');
    std::string head = mod.text.substr(0, mod.text.find('.'));
    bool local = fs::exists(root / head) || fs::exists(root / (head + ".lean"));
    if (!local) continue;
    if (!fs::exists(root / (rel + ".lean")) && !fs::exists(root / rel))
      diags.push_back({mod.line, mod.col, rank++, "error",
                       "unknown module '" + mod.text + "'"});
  }

  std::stable_sort(diags.begin(), diags.end(), [](const Diag& a, const Diag& b) {
    if (a.line != b.line) return a.line < b.line;
    if (a.col != b.col) return a.col < b.col;
    return a.rank < b.rank;
  });
}

}  // namespace

int main(int argc, char** argv) {
  fs::path root = fs::current_path();
  for (int i = 1; i < argc; ++i) {
    std::string arg = argv[i];
    if (arg == "--root" && i + 1 < argc) root = argv[++i];
    // the `build` verb and job flags are accepted and ignored
  }
  if (!fs::exists(root)) {
    std::fprintf(stderr, "minilean: no such directory: %s\n", root.c_str());
    return 2;
  }

  auto files = collect_lean_files(root);
  bool any_error = false;
  std::size_t index = 0;
  for (const auto& file : files) {
    ++index;
    std::string rel = fs::relative(file, root).generic_string();
    std::string module = rel.substr(0, rel.size() - 5);
    std::replace(module.begin(), module.end(), '/', '.');
    std::printf("[%zu/%zu] Building %s\n", index, files.size(), module.c_str());

    std::vector<Diag> diags;
    check_file(root, file, diags);
    for (const auto& d : diags) {
      if (d.severity == "error") any_error = true;
      std::printf("%s:%d:%d: %s: %s\n", rel.c_str(), d.line, d.col,
                  d.severity.c_str(), d.message.c_str());
    }
  }
  std::fflush(stdout);
  return any_error ? 1 : 0;
}
