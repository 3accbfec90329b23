#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "merlean/errors.hpp"
#include "merlean/gateway.hpp"
#include "merlean/lean_lex.hpp"
#include "merlean/prompts.hpp"
#include "merlean/util.hpp"
#include "merlean/workspace.hpp"

namespace merlean {

struct ParsedDeclaration {
  std::string name;
  std::string kind;         // def | theorem | lemma | axiom | instance | abbrev | structure | inductive
  std::string module_file;  // workspace-relative
  int span_start_line = 1;
  int span_end_line = 1;
  std::string signature_text;
  bool body_present = false;
  std::optional<std::string> doc_comment;
  std::set<std::string> referenced_names;
  std::string source_text;  // full declaration slice, doc comment included

  bool operator==(const ParsedDeclaration&) const = default;
};

struct ParseSkip {
  std::string module_file;
  int line = 1;
  std::string what;
};

struct LeanParseResult {
  std::vector<ParsedDeclaration> declarations;
  std::vector<ParseSkip> skipped;
};

namespace informalize_detail {

// Binder names the declaration introduces, as far as a lexical scan can
// see: identifiers before the ':' inside bracket groups, and fun/λ
// parameters before '=>'. Shadowing of library names is accepted noise.
inline std::set<std::string> binder_names(const leanlex::LexResult& lexed,
                                          const leanlex::DeclSpan& d) {
  using leanlex::Tok;
  std::set<std::string> locals;
  const auto& toks = lexed.tokens;

  for (std::size_t k = d.first_token; k <= d.last_token && k < toks.size(); ++k) {
    const auto& t = toks[k];
    if (t.kind == Tok::symbol && (t.text == "(" || t.text == "{" || t.text == "[")) {
      // Collect identifiers up to ':' or the closing bracket at this depth.
      std::vector<std::string> pending;
      int depth = 1;
      std::size_t j = k + 1;
      bool saw_colon = false;
      for (; j <= d.last_token && j < toks.size() && depth > 0; ++j) {
        const auto& u = toks[j];
        if (u.kind == Tok::symbol) {
          if (u.text == "(" || u.text == "{" || u.text == "[") depth++;
          else if (u.text == ")" || u.text == "}" || u.text == "]") depth--;
          else if (u.text == ":" && depth == 1) saw_colon = true;
        }
        if (!saw_colon && depth == 1 && u.kind == Tok::ident &&
            u.text.find('.') == std::string::npos)
          pending.push_back(u.text);
      }
      if (saw_colon)
        for (auto& n : pending) locals.insert(std::move(n));
    }
    if (t.kind == Tok::keyword && t.text == "fun") {
      for (std::size_t j = k + 1; j <= d.last_token && j < toks.size(); ++j) {
        const auto& u = toks[j];
        if (u.kind == Tok::symbol && (u.text == "=>" || u.text == ",")) break;
        if (u.kind == Tok::ident && u.text.find('.') == std::string::npos)
          locals.insert(u.text);
      }
    }
    // let x := ... / have h : ... introduce locals too.
    if (t.kind == Tok::keyword && (t.text == "let" || t.text == "have" ||
                                   t.text == "show" || t.text == "intro" )) {
      std::size_t j = k + 1;
      if (j <= d.last_token && j < toks.size() && toks[j].kind == Tok::ident &&
          toks[j].text.find('.') == std::string::npos)
        locals.insert(toks[j].text);
    }
  }
  return locals;
}

inline void add_reference(std::set<std::string>& refs, const std::string& token) {
  refs.insert(token);
  std::size_t dot = token.find('.');
  if (dot != std::string::npos) {
    refs.insert(token.substr(0, dot));          // namespace root
    refs.insert(token.substr(token.rfind('.') + 1));  // final segment
  }
}

}  // namespace informalize_detail

// Lexical scan of one Lean source file into declaration records.
inline void parse_lean_file(const std::filesystem::path& file,
                            const std::string& relpath, LeanParseResult& out) {
  std::string text = read_file(file);
  auto lexed = leanlex::lex(text, /*keep_comments=*/true);
  auto scan = leanlex::scan_declarations(lexed, std::filesystem::path(relpath).stem().string());

  for (const auto& sk : scan.skipped)
    out.skipped.push_back({relpath, sk.line, sk.what});

  for (const auto& d : scan.decls) {
    ParsedDeclaration decl;
    decl.name = d.name;
    decl.kind = d.keyword;
    decl.module_file = relpath;
    decl.span_start_line = d.start_line;
    decl.span_end_line = d.end_line;
    decl.signature_text = leanlex::decl_signature(text, lexed, d);
    decl.body_present = d.keyword == "axiom" ? false : leanlex::decl_has_body(text, lexed, d);
    decl.doc_comment = d.doc_comment;

    std::size_t src_begin = d.begin_offset;
    if (d.first_token > 0 &&
        lexed.tokens[d.first_token - 1].kind == leanlex::Tok::doc_comment)
      src_begin = lexed.tokens[d.first_token - 1].offset;
    decl.source_text = text.substr(src_begin, d.end_offset - src_begin);

    auto locals = informalize_detail::binder_names(lexed, d);
    for (std::size_t k = d.first_token; k <= d.last_token && k < lexed.tokens.size(); ++k) {
      const auto& t = lexed.tokens[k];
      if (t.kind != leanlex::Tok::ident) continue;
      if (t.text == decl.name) continue;
      if (locals.count(t.text)) continue;
      informalize_detail::add_reference(decl.referenced_names, t.text);
    }
    decl.referenced_names.erase(decl.name);
    out.declarations.push_back(std::move(decl));
  }
}

// All library declarations in deterministic order: module path, then span.
inline LeanParseResult parse_lean_files(const Workspace& ws) {
  LeanParseResult out;
  for (const auto& file : ws.library_files()) {
    std::string rel = std::filesystem::relative(file, ws.root()).generic_string();
    parse_lean_file(file, rel, out);
  }
  return out;
}

struct DeclGraph {
  std::vector<ParsedDeclaration> nodes;
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // (from, to): from references to
  std::vector<std::set<std::string>> external_refs;        // per node
  std::vector<std::string> cycle_warnings;

  std::optional<std::size_t> index_of(std::string_view name) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].name == name) return i;
    return std::nullopt;
  }
  std::vector<std::size_t> out_edges(std::size_t from) const {
    std::vector<std::size_t> out;
    for (const auto& [a, b] : edges)
      if (a == from) out.push_back(b);
    return out;
  }
};

namespace informalize_detail {

// Strongly connected components (Kosaraju), used to warn about mutual
// recursion and to group cycles in the narrative order.
inline std::vector<std::vector<std::size_t>> sccs(
    std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  std::vector<std::vector<std::size_t>> fwd(n), rev(n);
  for (const auto& [a, b] : edges) {
    fwd[a].push_back(b);
    rev[b].push_back(a);
  }
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> finish;
  finish.reserve(n);
  for (std::size_t root = 0; root < n; ++root) {
    if (seen[root]) continue;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{root, 0}};
    seen[root] = true;
    while (!stack.empty()) {
      auto& [node, edge] = stack.back();
      if (edge < fwd[node].size()) {
        std::size_t next = fwd[node][edge++];
        if (!seen[next]) {
          seen[next] = true;
          stack.emplace_back(next, 0);
        }
      } else {
        finish.push_back(node);
        stack.pop_back();
      }
    }
  }
  std::vector<std::vector<std::size_t>> components;
  std::vector<bool> assigned(n, false);
  for (auto it = finish.rbegin(); it != finish.rend(); ++it) {
    if (assigned[*it]) continue;
    std::vector<std::size_t> component;
    std::vector<std::size_t> stack{*it};
    assigned[*it] = true;
    while (!stack.empty()) {
      std::size_t node = stack.back();
      stack.pop_back();
      component.push_back(node);
      for (std::size_t next : rev[node]) {
        if (!assigned[next]) {
          assigned[next] = true;
          stack.push_back(next);
        }
      }
    }
    std::sort(component.begin(), component.end());
    components.push_back(std::move(component));
  }
  return components;
}

}  // namespace informalize_detail

// Edge (A,B) iff B's name occurs in A's referenced identifiers and B is in
// the library; external names are collected per node. Cycles are permitted
// but reported as warnings.
inline DeclGraph build_decl_graph(std::vector<ParsedDeclaration> decls) {
  DeclGraph g;
  g.nodes = std::move(decls);
  std::unordered_map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    by_name.emplace(g.nodes[i].name, i);  // first wins on duplicates

  g.external_refs.resize(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    std::set<std::size_t> targets;
    for (const auto& name : g.nodes[i].referenced_names) {
      auto it = by_name.find(name);
      if (it != by_name.end()) {
        if (it->second != i) targets.insert(it->second);
      } else {
        g.external_refs[i].insert(name);
      }
    }
    for (std::size_t t : targets) g.edges.emplace_back(i, t);
  }
  std::sort(g.edges.begin(), g.edges.end());

  for (const auto& component : informalize_detail::sccs(g.nodes.size(), g.edges)) {
    if (component.size() < 2) continue;
    std::string names;
    for (std::size_t i : component) {
      if (!names.empty()) names += ", ";
      names += g.nodes[i].name;
    }
    g.cycle_warnings.push_back("mutually referencing declarations: " + names);
  }
  return g;
}

struct NodeRendering {
  std::string nl_statement;
  std::optional<std::string> nl_proof_note;
  bool fallback_used = false;
};

// Natural-language rendering of one declaration under strict isolation:
// the request carries the declaration's Lean source and its neighbors'
// signatures, and nothing else. Replies use a STATEMENT:/PROOFNOTE: marker
// grammar; unparseable replies fall back to a generated stub after the
// re-prompt budget.
inline NodeRendering informalize_decl(const ParsedDeclaration& decl,
                                      const std::string& neighbor_signatures,
                                      Gateway& gateway, const PromptLibrary& prompts,
                                      int reprompt_budget = 3) {
  ChatRequest req;
  req.messages.push_back(
      {Role::user,
       prompts.render("informalize/decl", {{"name", decl.name},
                                           {"kind", decl.kind},
                                           {"source", decl.source_text},
                                           {"neighbors", neighbor_signatures}})});
  NodeRendering rendering;
  for (int attempt = 1; attempt <= reprompt_budget; ++attempt) {
    req.request_tag = "informalize:" + decl.name +
                      (attempt == 1 ? "" : ":reprompt:" + std::to_string(attempt - 1));
    ChatResponse resp = gateway.complete(req);
    auto lines = split_lines(resp.content);
    std::string statement, note;
    bool in_statement = false, in_note = false, found = false;
    for (const auto& raw : lines) {
      std::string line = raw;
      std::string t = trim(line);
      if (t.rfind("STATEMENT:", 0) == 0) {
        statement = trim(t.substr(10));
        in_statement = true;
        in_note = false;
        found = true;
        continue;
      }
      if (t.rfind("PROOFNOTE:", 0) == 0) {
        note = trim(t.substr(10));
        in_note = true;
        in_statement = false;
        continue;
      }
      if (in_statement) statement += (statement.empty() ? "" : "\n") + line;
      if (in_note) note += (note.empty() ? "" : "\n") + line;
    }
    if (found && !trim(statement).empty()) {
      rendering.nl_statement = trim(statement);
      if (!trim(note).empty()) rendering.nl_proof_note = trim(note);
      break;
    }
    req.messages.push_back({Role::assistant, resp.content});
    req.messages.push_back(
        {Role::user, "Reply in the exact format `STATEMENT: ...` optionally followed "
                     "by `PROOFNOTE: ...`."});
    if (attempt == reprompt_budget) {
      rendering.nl_statement = "Formal declaration `" + decl.name + "` of kind " +
                               decl.kind + "; see source.";
      rendering.fallback_used = true;
    }
  }
  // Axiom nodes are prominently marked regardless of what the model wrote.
  static constexpr std::string_view kAxiomMarker = "Unverified assumption:";
  if (decl.kind == "axiom" && rendering.nl_statement.rfind(kAxiomMarker, 0) != 0)
    rendering.nl_statement = std::string(kAxiomMarker) + " " + rendering.nl_statement;
  return rendering;
}

struct BlueprintNode {
  std::string name;
  std::string nl_statement;
  std::optional<std::string> nl_proof_note;
  bool axiom_flag = false;
  std::vector<std::string> uses;  // sorted dependency declaration names
};

namespace informalize_detail {

inline std::string tex_escape_text(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '_': out += "\\_"; break;
      case '&': out += "\\&"; break;
      case '%': out += "\\%"; break;
      case '#': out += "\\#"; break;
      case '$': out += "\\$"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string env_for_kind(const std::string& kind) {
  if (kind == "theorem") return "theorem";
  if (kind == "lemma") return "lemma";
  if (kind == "axiom") return "assumption";
  return "definition";
}

inline std::string chapter_title(const std::string& module_file) {
  std::filesystem::path p(module_file);
  return tex_escape_text(p.stem().string());
}

}  // namespace informalize_detail

inline std::vector<BlueprintNode> assemble_blueprint_nodes(
    const DeclGraph& graph, const std::vector<NodeRendering>& renderings) {
  std::vector<BlueprintNode> nodes;
  nodes.reserve(graph.nodes.size());
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    BlueprintNode n;
    n.name = graph.nodes[i].name;
    n.nl_statement = renderings[i].nl_statement;
    n.nl_proof_note = renderings[i].nl_proof_note;
    n.axiom_flag = graph.nodes[i].kind == "axiom";
    for (std::size_t t : graph.out_edges(i)) n.uses.push_back(graph.nodes[t].name);
    std::sort(n.uses.begin(), n.uses.end());
    nodes.push_back(std::move(n));
  }
  return nodes;
}

// leanblueprint-compatible LaTeX: one chapter file per statement module,
// \lean/\leanok/\uses annotations, axioms in a distinct environment plus a
// consolidated Assumptions index. Deterministic output.
inline std::vector<std::filesystem::path> emit_blueprint(
    const DeclGraph& graph, const std::vector<BlueprintNode>& nodes,
    const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  using informalize_detail::env_for_kind;
  using informalize_detail::tex_escape_text;

  fs::path dir = out_dir / "blueprint";
  fs::create_directories(dir);
  std::vector<fs::path> files;

  std::string preamble = R"(\documentclass{article}
\usepackage{amsmath,amssymb,amsthm}
\newtheorem{theorem}{Theorem}[section]
\newtheorem{lemma}[theorem]{Lemma}
\newtheorem{definition}[theorem]{Definition}
\theoremstyle{remark}
\newtheorem{assumption}[theorem]{Assumption}
\newcommand{\lean}[1]{\par\noindent\textit{Formal name:} \texttt{\detokenize{#1}}}
\newcommand{\leanok}{\par\noindent\textit{(machine-verified)}}
\newcommand{\uses}[1]{\par\noindent\textit{Uses:} \texttt{\detokenize{#1}}}
)";
  write_file_atomic(dir / "preamble.tex", preamble);
  files.push_back(dir / "preamble.tex");

  // Chapters keyed by module file, in sorted order.
  std::map<std::string, std::vector<std::size_t>> chapters;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i)
    chapters[graph.nodes[i].module_file].push_back(i);

  std::vector<std::string> chapter_files;
  for (const auto& [module_file, indices] : chapters) {
    std::string stem = fs::path(module_file).stem().string();
    std::string body = "\\section{" + informalize_detail::chapter_title(module_file) + "}\n\n";
    for (std::size_t i : indices) {
      const auto& node = nodes[i];
      std::string env = env_for_kind(graph.nodes[i].kind);
      body += "\\begin{" + env + "}[\\texttt{\\detokenize{" + node.name + "}}]\n";
      body += "\\label{decl:" + node.name + "}\n";
      body += "\\lean{" + node.name + "}\n";
      if (!node.axiom_flag) body += "\\leanok\n";
      if (!node.uses.empty()) {
        std::string uses;
        for (const auto& u : node.uses) {
          if (!uses.empty()) uses += ", ";
          uses += u;
        }
        body += "\\uses{" + uses + "}\n";
      }
      body += node.nl_statement + "\n";
      if (node.nl_proof_note)
        body += "\\par\\noindent\\emph{Proof note.} " + *node.nl_proof_note + "\n";
      body += "\\end{" + env + "}\n\n";
    }
    fs::path chapter_path = dir / (stem + ".tex");
    write_file_atomic(chapter_path, body);
    files.push_back(chapter_path);
    chapter_files.push_back(stem);
  }

  // Assumptions index: exactly the axiom nodes.
  std::string assumptions = "\\section{Assumptions}\n\n";
  bool any_axiom = false;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    if (graph.nodes[i].kind != "axiom") continue;
    any_axiom = true;
    assumptions += "\\paragraph{\\texttt{\\detokenize{" + nodes[i].name + "}}}\n" +
                   nodes[i].nl_statement + "\n\n";
  }
  if (!any_axiom)
    assumptions += "The library introduces no axioms; every declaration is fully proved.\n";
  write_file_atomic(dir / "assumptions.tex", assumptions);
  files.push_back(dir / "assumptions.tex");

  std::string master = "\\input{preamble}\n\\begin{document}\n";
  for (const auto& stem : chapter_files) master += "\\input{" + stem + "}\n";
  master += "\\input{assumptions}\n\\end{document}\n";
  write_file_atomic(dir / "blueprint.tex", master);
  files.push_back(dir / "blueprint.tex");
  return files;
}

// Standalone textbook-style narrative: an Assumptions chapter up front,
// then declarations in dependency-first order with formal names in
// footnotes. Mutually recursive declarations are grouped.
inline std::filesystem::path emit_narrative(const DeclGraph& graph,
                                            const std::vector<BlueprintNode>& nodes,
                                            const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  using informalize_detail::tex_escape_text;

  auto components = informalize_detail::sccs(graph.nodes.size(), graph.edges);
  // Order components so that dependencies precede dependents: Kahn over
  // the condensation with reversed edges, smallest member index first.
  std::vector<std::size_t> comp_of(graph.nodes.size());
  for (std::size_t c = 0; c < components.size(); ++c)
    for (std::size_t i : components[c]) comp_of[i] = c;
  std::vector<std::set<std::size_t>> needs(components.size());  // comp -> deps
  std::vector<std::vector<std::size_t>> unlocks(components.size());
  for (const auto& [a, b] : graph.edges) {
    if (comp_of[a] != comp_of[b]) needs[comp_of[a]].insert(comp_of[b]);
  }
  for (std::size_t c = 0; c < components.size(); ++c)
    for (std::size_t d : needs[c]) unlocks[d].push_back(c);
  std::vector<std::size_t> indegree(components.size());
  std::set<std::pair<std::size_t, std::size_t>> ready;  // (min node index, comp)
  for (std::size_t c = 0; c < components.size(); ++c) {
    indegree[c] = needs[c].size();
    if (indegree[c] == 0) ready.insert({components[c].front(), c});
  }
  std::vector<std::size_t> comp_order;
  while (!ready.empty()) {
    auto [key, c] = *ready.begin();
    ready.erase(ready.begin());
    comp_order.push_back(c);
    for (std::size_t up : unlocks[c])
      if (--indegree[up] == 0) ready.insert({components[up].front(), up});
  }

  std::string body = R"(\documentclass{article}
\usepackage{amsmath,amssymb,amsthm}
\newtheorem{theorem}{Theorem}[section]
\newtheorem{lemma}[theorem]{Lemma}
\newtheorem{definition}[theorem]{Definition}
\theoremstyle{remark}
\newtheorem{assumption}[theorem]{Assumption}
\begin{document}
\section{Assumptions}
)";
  bool any_axiom = false;
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    if (graph.nodes[i].kind != "axiom") continue;
    any_axiom = true;
    body += "\\begin{assumption}\n" + nodes[i].nl_statement +
            "\\footnote{Formal name: \\texttt{\\detokenize{" + nodes[i].name +
            "}}}\n\\end{assumption}\n\n";
  }
  if (!any_axiom)
    body += "This development rests on no unverified assumptions.\n";

  body += "\\section{Development}\n";
  for (std::size_t c : comp_order) {
    const auto& component = components[c];
    if (component.size() > 1)
      body += "\\paragraph{Mutually dependent group.}\n";
    for (std::size_t i : component) {
      if (graph.nodes[i].kind == "axiom") continue;  // restated up front
      const auto& node = nodes[i];
      std::string env = informalize_detail::env_for_kind(graph.nodes[i].kind);
      body += "\\begin{" + env + "}\n" + node.nl_statement +
              "\\footnote{Formal name: \\texttt{\\detokenize{" + node.name + "}}}\n";
      body += "\\end{" + env + "}\n";
      if (node.nl_proof_note)
        body += "\\begin{proof}[Proof note]\n" + *node.nl_proof_note + "\n\\end{proof}\n";
      body += "\n";
    }
  }
  body += "\\end{document}\n";

  fs::create_directories(out_dir);
  fs::path path = out_dir / "narrative.tex";
  write_file_atomic(path, body);
  return path;
}

// Machine-readable graph for downstream tooling.
inline std::filesystem::path emit_graph_json(const DeclGraph& graph,
                                             const std::filesystem::path& out_path) {
  json nodes = json::array();
  for (const auto& n : graph.nodes) {
    nodes.push_back({{"name", n.name},
                     {"kind", n.kind},
                     {"module", n.module_file},
                     {"axiom", n.kind == "axiom"}});
  }
  json edges = json::array();
  for (const auto& [a, b] : graph.edges)
    edges.push_back({graph.nodes[a].name, graph.nodes[b].name});
  json doc{{"nodes", nodes}, {"edges", edges}};
  write_file_atomic(out_path, doc.dump(2) + "\n");
  return out_path;
}

struct InformalizeResult {
  DeclGraph graph;
  std::vector<BlueprintNode> nodes;
  std::vector<std::filesystem::path> files;
  std::vector<std::string> warnings;
};

// Full autoinformalization: parse, graph, per-declaration translation,
// blueprint + narrative + graph.json emission.
inline InformalizeResult informalize_workspace(const Workspace& ws, Gateway& gateway,
                                               const PromptLibrary& prompts,
                                               const std::filesystem::path& out_dir,
                                               int reprompt_budget = 3) {
  InformalizeResult result;
  LeanParseResult parsed = parse_lean_files(ws);
  result.graph = build_decl_graph(std::move(parsed.declarations));
  for (const auto& w : result.graph.cycle_warnings) result.warnings.push_back(w);

  std::vector<NodeRendering> renderings;
  renderings.reserve(result.graph.nodes.size());
  for (std::size_t i = 0; i < result.graph.nodes.size(); ++i) {
    std::string neighbors;
    for (std::size_t t : result.graph.out_edges(i))
      neighbors += result.graph.nodes[t].signature_text + "\n";
    if (neighbors.empty()) neighbors = "(none)";
    NodeRendering r = informalize_decl(result.graph.nodes[i], neighbors, gateway,
                                       prompts, reprompt_budget);
    if (r.fallback_used)
      result.warnings.push_back("informalization fell back to generated text for " +
                                result.graph.nodes[i].name);
    renderings.push_back(std::move(r));
  }

  result.nodes = assemble_blueprint_nodes(result.graph, renderings);
  result.files = emit_blueprint(result.graph, result.nodes, out_dir);
  result.files.push_back(emit_narrative(result.graph, result.nodes, out_dir));
  result.files.push_back(emit_graph_json(result.graph, out_dir / "graph.json"));
  return result;
}

}  // namespace merlean
