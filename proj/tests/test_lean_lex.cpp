#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "merlean/lean_lex.hpp"

using namespace merlean::leanlex;

namespace {

int count_keyword(const LexResult& r, const std::string& text) {
  int n = 0;
  for (const auto& t : r.tokens)
    if (t.kind == Tok::keyword && t.text == text) n++;
  return n;
}

}  // namespace

TEST_CASE("comments hide tokens; strings are opaque") {
  std::string src =
      "-- sorry in a line comment\n"
      "/- sorry in a block /- nested -/ comment -/\n"
      "def greeting : String := \"sorry not sorry\"\n"
      "theorem t : True := by sorry\n";
  auto lexed = lex(src);
  CHECK(count_keyword(lexed, "sorry") == 1);
  // The real sorry sits on line 4.
  for (const auto& t : lexed.tokens)
    if (t.kind == Tok::keyword && t.text == "sorry") CHECK(t.line == 4);
  CHECK(lexed.issues.empty());
}

TEST_CASE("doc comments are kept separately when requested") {
  std::string src = "/-- Adds one. -/\ndef addOne (n : Nat) : Nat := n + 1\n";
  auto without = lex(src, false);
  for (const auto& t : without.tokens) CHECK(t.kind != Tok::doc_comment);
  auto with = lex(src, true);
  bool found = false;
  for (const auto& t : with.tokens)
    if (t.kind == Tok::doc_comment) {
      found = true;
      CHECK(t.text == "/-- Adds one. -/");
    }
  CHECK(found);
}

TEST_CASE("dotted identifiers stay one token") {
  auto lexed = lex("example := Nat.cast_le.mpr h\n");
  bool found = false;
  for (const auto& t : lexed.tokens)
    if (t.kind == Tok::ident && t.text == "Nat.cast_le.mpr") found = true;
  CHECK(found);
}

TEST_CASE("primes and char literals disambiguate") {
  auto lexed = lex("def f' (c : Char) : Char := 'a'\n");
  bool prime_ident = false, char_lit = false;
  for (const auto& t : lexed.tokens) {
    if (t.kind == Tok::ident && t.text == "f'") prime_ident = true;
    if (t.kind == Tok::char_lit && t.text == "'a'") char_lit = true;
  }
  CHECK(prime_ident);
  CHECK(char_lit);
}

TEST_CASE("unterminated constructs are issues, not crashes") {
  CHECK(lex("def s := \"unclosed\n").issues.size() == 1);
  CHECK(lex("/- never closed\ndef x := 1\n").issues.size() == 1);
}

TEST_CASE("line and column positions are 1-based byte positions") {
  auto lexed = lex("ab cd\n  ef\n");
  REQUIRE(lexed.tokens.size() == 3);
  CHECK(lexed.tokens[0].line == 1);
  CHECK(lexed.tokens[0].col == 1);
  CHECK(lexed.tokens[1].col == 4);
  CHECK(lexed.tokens[2].line == 2);
  CHECK(lexed.tokens[2].col == 3);
}

TEST_CASE("declaration scan finds top-level commands only") {
  std::string src =
      "import Mathlib\n"
      "\n"
      "/-- The main widget. -/\n"
      "noncomputable def widget (n : Nat) : Nat :=\n"
      "  let inner := n + 1\n"
      "  inner\n"
      "\n"
      "theorem widget_pos (n : Nat) : widget n > 0 := by\n"
      "  simp [widget]\n"
      "\n"
      "axiom widget_upper_ax (n : Nat) : widget n < 100\n";
  auto lexed = lex(src, true);
  auto scan = scan_declarations(lexed, "Fixture");
  REQUIRE(scan.decls.size() == 3);
  CHECK(scan.decls[0].keyword == "def");
  CHECK(scan.decls[0].name == "widget");
  REQUIRE(scan.decls[0].doc_comment.has_value());
  CHECK(*scan.decls[0].doc_comment == "The main widget.");
  CHECK(scan.decls[0].start_line == 4);
  CHECK(scan.decls[1].keyword == "theorem");
  CHECK(scan.decls[1].name == "widget_pos");
  CHECK(scan.decls[2].keyword == "axiom");
  CHECK(scan.decls[2].name == "widget_upper_ax");
  // `let inner` must not surface as a declaration: it is indented.
  for (const auto& d : scan.decls) CHECK(d.name != "inner");
}

TEST_CASE("attributes and modifiers prefix a declaration") {
  std::string src =
      "@[simp]\n"
      "private theorem hidden_simp : 1 = 1 := rfl\n";
  auto lexed = lex(src, true);
  auto scan = scan_declarations(lexed, "Fixture");
  REQUIRE(scan.decls.size() == 1);
  CHECK(scan.decls[0].keyword == "theorem");
  CHECK(scan.decls[0].name == "hidden_simp");
  CHECK(scan.decls[0].start_line == 1);  // extent includes the attribute
}

TEST_CASE("anonymous instances get synthesized names") {
  std::string src = "instance : Inhabited Widget := ⟨default⟩\n";
  auto lexed = lex(src, true);
  auto scan = scan_declarations(lexed, "Def_1");
  REQUIRE(scan.decls.size() == 1);
  CHECK(scan.decls[0].anonymous);
  CHECK(scan.decls[0].name == "Def_1_instance_1");
}

TEST_CASE("unrecognized top-level commands become skip entries") {
  std::string src = "#eval 1 + 1\ndef fine : Nat := 2\n";
  auto lexed = lex(src, true);
  auto scan = scan_declarations(lexed, "Fixture");
  CHECK(scan.decls.size() == 1);
  CHECK(scan.skipped.size() == 1);
  CHECK(scan.skipped[0].line == 1);
}

TEST_CASE("signatures cut at := and axioms have no body") {
  std::string src =
      "theorem cut_here (n : Nat) : n = n := by\n"
      "  rfl\n"
      "\n"
      "axiom assumed (n : Nat) : n + 0 = n\n";
  auto lexed = lex(src, true);
  auto scan = scan_declarations(lexed, "Fixture");
  REQUIRE(scan.decls.size() == 2);
  CHECK(decl_signature(src, lexed, scan.decls[0]) ==
        "theorem cut_here (n : Nat) : n = n");
  CHECK(decl_has_body(src, lexed, scan.decls[0]));
  CHECK(decl_signature(src, lexed, scan.decls[1]) ==
        "axiom assumed (n : Nat) : n + 0 = n");
  CHECK_FALSE(decl_has_body(src, lexed, scan.decls[1]));
}

TEST_CASE("structure signature cuts at where") {
  std::string src =
      "structure Config where\n"
      "  size : Nat\n"
      "  name : String\n";
  auto lexed = lex(src, true);
  auto scan = scan_declarations(lexed, "Fixture");
  REQUIRE(scan.decls.size() == 1);
  CHECK(decl_signature(src, lexed, scan.decls[0]) == "structure Config");
}

TEST_CASE("declaration extents do not bleed into the next declaration") {
  std::string src =
      "def a : Nat := 1\n"
      "-- interlude comment\n"
      "def b : Nat := a + 1\n";
  auto lexed = lex(src, true);
  auto scan = scan_declarations(lexed, "Fixture");
  REQUIRE(scan.decls.size() == 2);
  CHECK(scan.decls[0].end_line == 1);
  CHECK(scan.decls[1].start_line == 3);
}
