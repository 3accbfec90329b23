#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

#include "merlean/errors.hpp"
#include "merlean/util.hpp"

namespace merlean {

namespace prompt_text {

inline constexpr std::string_view kExtract = R"(You are extracting mathematical statements from a LaTeX paper into JSON.

Identify every definition, theorem, lemma, proposition, corollary, and remark.
Assign each an id of the form Def_N, Thm_N, Lem_N, Prop_N, Cor_N, or Rem_N,
numbered from 1 per kind in order of appearance. Record the mathematical
content in natural language, carrying inline math verbatim. List explicit
dependencies on other statements by id, and order the list so that every
dependency precedes its dependents. Include a proof sketch when the source
offers one, expanding vague phrases such as "by standard arguments" into
concrete proof steps. Add intermediate lemmas when the source uses a result
it never states.

A deterministic scan of the source found these candidate environments:
{{candidates}}

LaTeX source:
{{source}}

Reply with a single JSON object and nothing else, in this shape:
{"statements": [{"id": "...", "kind": "definition", "text": "...",
"dependencies": ["..."], "proof_sketch": null, "source_span": null}]}
)";

inline constexpr std::string_view kRefine = R"(You previously extracted mathematical statements from a LaTeX paper. Review
and refine that extraction: fix wrong kinds or dependencies, expand vague
proof sketches into concrete steps, add missing intermediate lemmas, remove
statements that are not mathematical results, and order the list so that
dependencies precede dependents.

Validation report for the current extraction:
{{report}}

Current extraction:
{{previous}}

LaTeX source:
{{source}}

Reply with the full corrected JSON object and nothing else.
)";

inline constexpr std::string_view kFormalizeInitial = R"(You are formalizing one mathematical statement into Lean 4 on top of Mathlib.

Statement {{statement_id}} ({{kind}}):
{{text}}

Proof sketch:
{{proof_sketch}}

The statement lives in its own file {{library}}/Statements/{{statement_id}}.lean.
Already-formalized dependencies (import them with
`import {{library}}.Statements.<Id>`):
{{dependencies}}

Dependency source code for reference:
{{dependency_code}}

Write the complete contents of the file. Produce one or more declarations:
introduce auxiliary definitions, helper lemmas, and instances as needed to
support the target result. Mathlib imports and identifiers are allowed. The
file must compile with zero errors and zero warnings. Do not use `sorry`.
Do not declare any `axiom`; unprovable obligations are handled in a separate
later phase. Write doc comments in your own words; do not copy the statement
text into the code. Reply with Lean code only.
)";

inline constexpr std::string_view kFormalizeFix = R"(The Lean file you wrote for statement {{statement_id}} does not build cleanly.

Current file contents:
{{previous_code}}

Compiler diagnostics:
{{diagnostics}}

Analyze the errors and produce a corrected version. Reply with the complete
corrected contents of the file, Lean code only. The file must compile with
zero errors and zero warnings, must not use `sorry`, and must not declare
any `axiom`.
)";

inline constexpr std::string_view kFaithfulness = R"(Judge whether Lean code faithfully formalizes a mathematical statement.
Compilation already succeeded; decide whether the formal content matches the
original meaning, or instead proves a trivial variation, drops hypotheses,
or fabricates definitions to satisfy the compiler.

Original statement:
{{text}}

Lean code:
{{code}}

Reply with exactly one line `VERDICT: ACCEPT` or `VERDICT: REJECT`, followed
by rationale lines explaining the judgment.
)";

inline constexpr std::string_view kAxiomConvert = R"(Formalization of statement {{statement_id}} failed to compile within the
attempt limit. Convert the blocking subgoals into explicit axioms so the
library still builds with transparent assumptions.

Statement:
{{text}}

Last attempted file contents:
{{previous_code}}

Last compiler diagnostics:
{{diagnostics}}

Rewrite the file so that it compiles with zero errors and zero warnings:
state each unproved obligation as an explicit `axiom` declaration named with
an `_ax` or `_aux` suffix, and make the main result consume those axioms.
Keep axioms as narrow as possible; do not axiomatize the whole statement
unless nothing weaker suffices. Do not use `sorry`. Reply with the complete
file contents, Lean code only.
)";

inline constexpr std::string_view kInformalize = R"(Translate one Lean 4 declaration into natural language for a mathematician
with no Lean background. Describe exactly what the formal code states; do
not speculate about intent beyond the code.

Declaration ({{kind}}) `{{name}}`:
{{source}}

Signatures of declarations it references:
{{neighbors}}

Reply in this exact format:
STATEMENT: <one-paragraph LaTeX-safe prose statement of what is declared>
PROOFNOTE: <optional short note on how the proof proceeds; omit the line if
the declaration has no proof>
)";

}  // namespace prompt_text

// Prompt templates with {{placeholder}} substitution. Built-in texts are
// compiled in; a prompts/ directory overrides them file by file.
class PromptLibrary {
 public:
  static const std::map<std::string, std::string>& builtin_texts() {
    static const std::map<std::string, std::string> texts = {
        {"extract/extract", std::string(prompt_text::kExtract)},
        {"extract/refine", std::string(prompt_text::kRefine)},
        {"formalize/initial", std::string(prompt_text::kFormalizeInitial)},
        {"formalize/fix", std::string(prompt_text::kFormalizeFix)},
        {"faithfulness/check", std::string(prompt_text::kFaithfulness)},
        {"axiom/convert", std::string(prompt_text::kAxiomConvert)},
        {"informalize/decl", std::string(prompt_text::kInformalize)},
    };
    return texts;
  }

  static PromptLibrary builtin() {
    PromptLibrary lib;
    lib.templates_ = builtin_texts();
    return lib;
  }

  // Builtin templates overridden by <dir>/<family>/<name>.txt files.
  static PromptLibrary load(const std::filesystem::path& dir) {
    PromptLibrary lib = builtin();
    if (dir.empty() || !std::filesystem::exists(dir)) return lib;
    for (auto& [key, value] : lib.templates_) {
      std::filesystem::path file = dir / (key + ".txt");
      if (std::filesystem::exists(file)) lib.templates_[key] = read_file(file);
    }
    return lib;
  }

  const std::string& text(const std::string& key) const {
    auto it = templates_.find(key);
    if (it == templates_.end()) throw Error("unknown prompt template: " + key);
    return it->second;
  }

  std::string render(const std::string& key,
                     const std::map<std::string, std::string>& vars) const {
    std::string out = text(key);
    for (const auto& [name, value] : vars) {
      std::string needle = "{{" + name + "}}";
      std::size_t pos = 0;
      while ((pos = out.find(needle, pos)) != std::string::npos) {
        out.replace(pos, needle.size(), value);
        pos += value.size();
      }
    }
    return out;
  }

 private:
  std::map<std::string, std::string> templates_;
};

}  // namespace merlean
