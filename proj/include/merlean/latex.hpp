#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "merlean/errors.hpp"
#include "merlean/gateway.hpp"
#include "merlean/prompts.hpp"
#include "merlean/statements.hpp"
#include "merlean/util.hpp"

namespace merlean {

struct SourceDocument {
  std::string raw;  // flattened UTF-8 LaTeX (\input/\include resolved)
  std::filesystem::path path;
  std::string fingerprint;  // sha256 of raw

  static SourceDocument from_string(std::string text,
                                    std::filesystem::path origin = "<memory>") {
    SourceDocument doc;
    doc.raw = std::move(text);
    doc.path = std::move(origin);
    doc.fingerprint = sha256_hex(doc.raw);
    return doc;
  }

  static SourceDocument load(const std::filesystem::path& file);
};

struct RawCandidate {
  std::string env_name;
  std::optional<std::string> label;
  std::string body;
  std::size_t span_begin = 0;  // byte offset of \begin
  std::size_t span_end = 0;    // one past the closing \end{...}

  bool operator==(const RawCandidate&) const = default;
};

inline std::map<std::string, StatementKind> default_env_map() {
  return {
      {"theorem", StatementKind::theorem},
      {"thm", StatementKind::theorem},
      {"lemma", StatementKind::lemma},
      {"lem", StatementKind::lemma},
      {"definition", StatementKind::definition},
      {"defn", StatementKind::definition},
      {"proposition", StatementKind::proposition},
      {"prop", StatementKind::proposition},
      {"corollary", StatementKind::corollary},
      {"cor", StatementKind::corollary},
      {"remark", StatementKind::remark},
      {"rem", StatementKind::remark},
  };
}

struct ExtractionConfig {
  int passes = 3;
  std::map<std::string, StatementKind> env_map = default_env_map();
  std::size_t max_statement_chars = 20000;
  int reprompt_budget = 3;  // total backend calls per unparseable step
};

namespace latex_detail {

// Bytes the environment scanner may look at: false inside % comments and
// inside verbatim-like environments.
inline std::vector<bool> active_mask(std::string_view text) {
  static const char* kVerbatim[] = {"verbatim*", "verbatim", "Verbatim",
                                    "lstlisting", "minted"};
  std::vector<bool> active(text.size(), true);
  enum class State { normal, comment, verbatim };
  State state = State::normal;
  std::string verb_name;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    switch (state) {
      case State::normal: {
        if (c == '\\' && i + 1 < text.size()) {
          // \% and \\ never open comments; commands stay active.
          std::string_view rest = text.substr(i);
          bool entered_verbatim = false;
          if (rest.rfind("\\begin{", 0) == 0) {
            for (const char* name : kVerbatim) {
              std::string open = std::string("\\begin{") + name + "}";
              if (rest.rfind(open, 0) == 0) {
                i += open.size();
                verb_name = name;
                state = State::verbatim;
                entered_verbatim = true;
                break;
              }
            }
          }
          if (!entered_verbatim) i += 2;
          continue;
        }
        if (c == '%') {
          state = State::comment;
          active[i] = false;
          ++i;
          continue;
        }
        ++i;
        continue;
      }
      case State::comment: {
        if (c == '\n') {
          state = State::normal;
          ++i;  // the newline itself stays active
        } else {
          active[i] = false;
          ++i;
        }
        continue;
      }
      case State::verbatim: {
        std::string close = "\\end{" + verb_name + "}";
        if (text.substr(i).rfind(close, 0) == 0) {
          for (std::size_t k = 0; k < close.size(); ++k) active[i + k] = false;
          i += close.size();
          state = State::normal;
        } else {
          active[i] = false;
          ++i;
        }
        continue;
      }
    }
  }
  return active;
}

inline bool is_env_name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '*';
}

struct EnvEvent {
  bool is_begin;
  std::string name;
  std::size_t cmd_pos;    // offset of the backslash
  std::size_t after_pos;  // one past the closing }
};

inline std::vector<EnvEvent> env_events(std::string_view text,
                                        const std::vector<bool>& active) {
  std::vector<EnvEvent> events;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!active[i] || text[i] != '\\') {
      ++i;
      continue;
    }
    if (i + 1 < text.size() && text[i + 1] == '\\') {
      i += 2;  // \\ line break
      continue;
    }
    std::string_view rest = text.substr(i);
    bool is_begin = rest.rfind("\\begin{", 0) == 0;
    bool is_end = rest.rfind("\\end{", 0) == 0;
    if (!is_begin && !is_end) {
      i += 1;
      continue;
    }
    std::size_t name_start = i + (is_begin ? 7 : 5);
    std::size_t j = name_start;
    while (j < text.size() && is_env_name_char(text[j])) ++j;
    if (j >= text.size() || text[j] != '}') {
      i = name_start;
      continue;  // malformed or exotic name; not ours to judge
    }
    events.push_back({is_begin, std::string(text.substr(name_start, j - name_start)),
                      i, j + 1});
    i = j + 1;
  }
  return events;
}

}  // namespace latex_detail

// Every balanced theorem-like environment whose name is mapped, in document
// order; nested mapped environments report the outermost only; comments and
// verbatim blocks are ignored. The first \label in a body becomes the
// candidate's label and is excised from the body text.
inline std::vector<RawCandidate> scan_environments(
    const SourceDocument& doc, const std::map<std::string, StatementKind>& env_map) {
  std::string_view text = doc.raw;
  auto active = latex_detail::active_mask(text);
  auto events = latex_detail::env_events(text, active);

  struct Open {
    std::string name;
    std::size_t cmd_pos;
    std::size_t content_start;
  };
  std::vector<Open> stack;
  std::vector<RawCandidate> out;

  for (const auto& ev : events) {
    if (!env_map.count(ev.name)) continue;
    if (ev.is_begin) {
      stack.push_back({ev.name, ev.cmd_pos, ev.after_pos});
      continue;
    }
    if (stack.empty())
      throw ExtractionError("unbalanced \\end{" + ev.name + "} at byte " +
                            std::to_string(ev.cmd_pos));
    if (stack.back().name != ev.name)
      throw ExtractionError("unbalanced \\begin{" + stack.back().name +
                            "} at byte " + std::to_string(stack.back().cmd_pos) +
                            " closed by \\end{" + ev.name + "}");
    Open open = stack.back();
    stack.pop_back();
    if (!stack.empty()) continue;  // inner of a nested pair

    RawCandidate cand;
    cand.env_name = open.name;
    cand.span_begin = open.cmd_pos;
    cand.span_end = ev.after_pos;
    std::string body(text.substr(open.content_start, ev.cmd_pos - open.content_start));
    // First active \label{...} names the candidate.
    static constexpr std::string_view kLabel = "\\label{";
    std::size_t pos = 0;
    while ((pos = body.find(kLabel, pos)) != std::string::npos) {
      if (!active[open.content_start + pos]) {
        ++pos;
        continue;
      }
      std::size_t key_start = pos + kLabel.size();
      std::size_t key_end = body.find('}', key_start);
      if (key_end == std::string::npos) break;
      cand.label = body.substr(key_start, key_end - key_start);
      body.erase(pos, key_end + 1 - pos);
      break;
    }
    cand.body = std::move(body);
    out.push_back(std::move(cand));
  }
  if (!stack.empty())
    throw ExtractionError("unbalanced \\begin{" + stack.front().name +
                          "} at byte " + std::to_string(stack.front().cmd_pos));
  return out;
}

inline SourceDocument SourceDocument::load(const std::filesystem::path& file) {
  std::string main_text = read_file(file);
  auto active = latex_detail::active_mask(main_text);

  auto find_include = [](std::string_view text, const std::vector<bool>& mask,
                         std::size_t from) -> std::pair<std::size_t, std::size_t> {
    for (std::size_t i = from; i + 7 < text.size(); ++i) {
      if (!mask[i] || text[i] != '\\') continue;
      std::string_view rest = text.substr(i);
      std::size_t cmd_len = 0;
      if (rest.rfind("\\input{", 0) == 0) cmd_len = 7;
      if (rest.rfind("\\include{", 0) == 0) cmd_len = 9;
      if (cmd_len == 0) continue;
      std::size_t close = text.find('}', i + cmd_len);
      if (close == std::string_view::npos) continue;
      return {i, close + 1};
    }
    return {std::string_view::npos, 0};
  };

  std::string flattened;
  flattened.reserve(main_text.size());
  std::size_t cursor = 0;
  for (;;) {
    auto [pos, end] = find_include(main_text, active, cursor);
    if (pos == std::string_view::npos) {
      flattened.append(main_text, cursor, std::string::npos);
      break;
    }
    flattened.append(main_text, cursor, pos - cursor);
    std::size_t brace = main_text.find('{', pos);
    std::string name = main_text.substr(brace + 1, end - 1 - (brace + 1));
    std::filesystem::path child = file.parent_path() / name;
    if (!child.has_extension()) child += ".tex";
    std::string child_text = read_file(child);
    // One level deep only: anything the child pulls in is an error.
    auto child_active = latex_detail::active_mask(child_text);
    auto [nested, nested_end] = find_include(child_text, child_active, 0);
    (void)nested_end;
    if (nested != std::string_view::npos)
      throw ExtractionError("\\input nesting deeper than one level in " +
                            child.string() + " at byte " + std::to_string(nested));
    flattened += child_text;
    cursor = end;
  }

  SourceDocument doc;
  doc.raw = std::move(flattened);
  doc.path = file;
  doc.fingerprint = sha256_hex(doc.raw);
  return doc;
}

namespace latex_detail {

inline std::string candidates_json(const std::vector<RawCandidate>& candidates,
                                   std::size_t max_chars) {
  json arr = json::array();
  for (const auto& c : candidates) {
    std::string body = c.body;
    if (body.size() > max_chars) body = body.substr(0, max_chars) + "…[truncated]";
    arr.push_back({{"env", c.env_name},
                   {"label", c.label ? json(*c.label) : json(nullptr)},
                   {"body", body},
                   {"span", {c.span_begin, c.span_end}}});
  }
  return arr.dump(2);
}

// One backend exchange whose reply must parse as a statement set, with a
// bounded number of corrective re-prompts in the same conversation.
inline StatementSet parse_set_reply(Gateway& gateway, std::string prompt,
                                    const std::string& tag, int budget,
                                    const std::string& fingerprint) {
  ChatRequest req;
  req.messages.push_back({Role::user, std::move(prompt)});
  std::string last_reply, last_error;
  for (int attempt = 1; attempt <= budget; ++attempt) {
    req.request_tag =
        attempt == 1 ? tag : tag + ":reprompt:" + std::to_string(attempt - 1);
    ChatResponse resp = gateway.complete(req);
    last_reply = resp.content;
    try {
      StatementSet set = parse_statement_set(strip_code_fence(resp.content));
      set.source_fingerprint = fingerprint;
      return set;
    } catch (const Error& e) {
      last_error = e.what();
      req.messages.push_back({Role::assistant, resp.content});
      req.messages.push_back(
          {Role::user, "That reply was not a valid statement set: " + last_error +
                           "\nReply with the corrected JSON object only."});
    }
  }
  throw ExtractionError("backend reply unparseable after " +
                            std::to_string(budget) + " attempts: " + last_error,
                        last_reply);
}

}  // namespace latex_detail

inline StatementSet llm_extract(const SourceDocument& doc,
                                const std::vector<RawCandidate>& candidates,
                                Gateway& gateway, const ExtractionConfig& cfg,
                                const PromptLibrary& prompts) {
  std::string prompt = prompts.render(
      "extract/extract",
      {{"source", doc.raw},
       {"candidates", latex_detail::candidates_json(candidates, cfg.max_statement_chars)}});
  return latex_detail::parse_set_reply(gateway, std::move(prompt), "extract:initial",
                                       cfg.reprompt_budget, doc.fingerprint);
}

inline StatementSet refine_pass(const StatementSet& set, const SourceDocument& doc,
                                Gateway& gateway, const ExtractionConfig& cfg,
                                const PromptLibrary& prompts,
                                const std::string& tag = "extract:refine") {
  std::string prompt = prompts.render("extract/refine",
                                      {{"source", doc.raw},
                                       {"previous", serialize_statement_set(set)},
                                       {"report", render_report(validate(set))}});
  return latex_detail::parse_set_reply(gateway, std::move(prompt), tag,
                                       cfg.reprompt_budget, doc.fingerprint);
}

// Deterministic scan, one LLM extraction, (passes - 1) refinements, then a
// validity gate with a single repair pass. The returned set is validated
// and topologically ordered.
inline StatementSet extract(const SourceDocument& doc, Gateway& gateway,
                            const ExtractionConfig& cfg, const PromptLibrary& prompts) {
  if (cfg.passes < 1) throw Error("extraction passes must be >= 1");
  auto candidates = scan_environments(doc, cfg.env_map);
  StatementSet set = llm_extract(doc, candidates, gateway, cfg, prompts);
  for (int pass = 2; pass <= cfg.passes; ++pass)
    set = refine_pass(set, doc, gateway, cfg, prompts,
                      "extract:refine:" + std::to_string(pass));
  ValidationReport report = validate(set);
  if (!report.ok) {
    set = refine_pass(set, doc, gateway, cfg, prompts, "extract:repair");
    report = validate(set);
  }
  if (!report.ok)
    throw ExtractionError("extraction failed validation:\n" + render_report(report));
  return reorder_topologically(set);
}

}  // namespace merlean
