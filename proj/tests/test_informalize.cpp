#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "merlean/informalize.hpp"

#include "support.hpp"

using namespace merlean;

namespace {

Workspace make_workspace(const std::filesystem::path& root) {
  WorkspaceConfig cfg;
  cfg.root = root;
  cfg.build_command = {testsupport::minilean_path(), "build"};
  return Workspace::init(cfg);
}

void install_fixture(Workspace& ws, const std::string& fixture,
                     const std::string& as_name) {
  std::string code = read_file(std::filesystem::path(testsupport::fixtures_dir()) /
                               "lean" / fixture);
  write_file_atomic(ws.statements_dir() / as_name, code);
}

Gateway scripted(std::vector<std::string> replies) {
  BackendConfig cfg;
  cfg.mode = BackendMode::scripted;
  cfg.scripted_replies = std::move(replies);
  return Gateway(cfg);
}

ParsedDeclaration mini_decl(const std::string& name, std::set<std::string> refs = {},
                            const std::string& kind = "def") {
  ParsedDeclaration d;
  d.name = name;
  d.kind = kind;
  d.module_file = "M.lean";
  d.signature_text = kind + " " + name;
  d.referenced_names = std::move(refs);
  d.source_text = kind + " " + name + " : Nat := 0";
  return d;
}

}  // namespace

TEST_CASE("parse_lean_files: empty workspace") {
  testsupport::TempDir dir("inf");
  Workspace ws = make_workspace(dir / "ws");
  auto parsed = parse_lean_files(ws);
  CHECK(parsed.declarations.empty());
}

TEST_CASE("parse_lean_files: fault-tolerance fixture") {
  testsupport::TempDir dir("inf");
  Workspace ws = make_workspace(dir / "ws");
  install_fixture(ws, "FaultTolerance.lean", "Thm_1.lean");
  auto parsed = parse_lean_files(ws);
  REQUIRE(parsed.declarations.size() == 1);
  const auto& thm = parsed.declarations[0];
  CHECK(thm.name == "FaultToleranceTheorem");
  CHECK(thm.kind == "theorem");
  CHECK(thm.body_present);
  CHECK(thm.referenced_names.count("spacetimeFaultDistance_le_weight") == 1);
  CHECK(thm.referenced_names.count("spacetimeFaultDistance") == 1);
  CHECK(thm.referenced_names.count("DetectorCollection") == 1);
  // Binder names are locals, not references.
  CHECK(thm.referenced_names.count("DC") == 0);
  CHECK(thm.referenced_names.count("baseOutcomes") == 0);
  REQUIRE(thm.doc_comment.has_value());
  CHECK(thm.doc_comment->find("spacetime fault-distance") != std::string::npos);
}

TEST_CASE("parse_lean_files: Kunneth fixture declaration inventory") {
  testsupport::TempDir dir("inf");
  Workspace ws = make_workspace(dir / "ws");
  install_fixture(ws, "Kunneth.lean", "Def_1.lean");
  auto parsed = parse_lean_files(ws);

  std::map<std::string, std::string> kind_of;
  for (const auto& d : parsed.declarations) kind_of[d.name] = d.kind;
  CHECK(kind_of.at("flat_F2_module") == "instance");
  CHECK(kind_of.at("HomologyTensor") == "def");
  CHECK(kind_of.at("KunnethIndex") == "def");
  CHECK(kind_of.at("KunnethDirectSum") == "def");
  CHECK(kind_of.at("TensorHomology") == "abbrev");
  CHECK(kind_of.at("kunnethMap") == "def");
  CHECK(kind_of.at("kunnethMap_injective_aux") == "axiom");
  CHECK(kind_of.at("kunnethMap_surjective_aux") == "axiom");
  CHECK(kind_of.at("kunnethEquiv") == "def");

  for (const auto& d : parsed.declarations) {
    if (d.kind == "axiom") CHECK_FALSE(d.body_present);
    if (d.name == "kunnethEquiv") CHECK(d.body_present);
  }
}

TEST_CASE("build_decl_graph: three-declaration chain has exactly two edges") {
  // Oracle: hand-built fixture, A references B references C.
  auto graph = build_decl_graph({mini_decl("A", {"B"}), mini_decl("B", {"C"}),
                                 mini_decl("C")});
  REQUIRE(graph.edges.size() == 2);
  CHECK(graph.edges[0] == std::pair<std::size_t, std::size_t>{0, 1});
  CHECK(graph.edges[1] == std::pair<std::size_t, std::size_t>{1, 2});
  CHECK(graph.cycle_warnings.empty());
}

TEST_CASE("build_decl_graph: no cross-references, edgeless") {
  auto graph = build_decl_graph({mini_decl("A"), mini_decl("B")});
  CHECK(graph.edges.empty());
}

TEST_CASE("build_decl_graph: external names recorded per node") {
  auto graph = build_decl_graph({mini_decl("A", {"B", "Nat.add", "Finset"}),
                                 mini_decl("B")});
  REQUIRE(graph.edges.size() == 1);
  CHECK(graph.external_refs[0].count("Nat.add") == 1);
  CHECK(graph.external_refs[0].count("Finset") == 1);
  CHECK(graph.external_refs[0].count("B") == 0);
}

TEST_CASE("build_decl_graph: mutual references warn") {
  auto graph = build_decl_graph({mini_decl("A", {"B"}), mini_decl("B", {"A"})});
  REQUIRE(graph.cycle_warnings.size() == 1);
  CHECK(graph.cycle_warnings[0].find("A") != std::string::npos);
  CHECK(graph.cycle_warnings[0].find("B") != std::string::npos);
}

TEST_CASE("build_decl_graph: Kunneth equivalence uses both axioms") {
  testsupport::TempDir dir("inf");
  Workspace ws = make_workspace(dir / "ws");
  install_fixture(ws, "Kunneth.lean", "Def_1.lean");
  auto parsed = parse_lean_files(ws);
  auto graph = build_decl_graph(std::move(parsed.declarations));
  auto equiv = graph.index_of("kunnethEquiv");
  auto inj = graph.index_of("kunnethMap_injective_aux");
  auto surj = graph.index_of("kunnethMap_surjective_aux");
  auto kmap = graph.index_of("kunnethMap");
  REQUIRE(equiv.has_value());
  REQUIRE(inj.has_value());
  REQUIRE(surj.has_value());
  REQUIRE(kmap.has_value());
  auto outs = graph.out_edges(*equiv);
  auto has = [&](std::size_t t) {
    return std::find(outs.begin(), outs.end(), t) != outs.end();
  };
  CHECK(has(*inj));
  CHECK(has(*surj));
  CHECK(has(*kmap));
}

TEST_CASE("edge soundness: every edge target occurs in the source text") {
  testsupport::TempDir dir("inf");
  Workspace ws = make_workspace(dir / "ws");
  install_fixture(ws, "Kunneth.lean", "Def_1.lean");
  install_fixture(ws, "FaultTolerance.lean", "Thm_1.lean");
  auto parsed = parse_lean_files(ws);
  auto graph = build_decl_graph(std::move(parsed.declarations));
  for (const auto& [from, to] : graph.edges) {
    CHECK(graph.nodes[from].source_text.find(graph.nodes[to].name) !=
          std::string::npos);
  }
}

TEST_CASE("informalize_decl: marker grammar and isolation of the request") {
  auto decl = mini_decl("widget_pos", {}, "theorem");
  Gateway gw = scripted(
      {"STATEMENT: Every widget has positive size.\nPROOFNOTE: Unfold and compute."});
  auto r = informalize_decl(decl, "(none)", gw, PromptLibrary::builtin());
  CHECK(r.nl_statement == "Every widget has positive size.");
  REQUIRE(r.nl_proof_note.has_value());
  CHECK(*r.nl_proof_note == "Unfold and compute.");
  CHECK_FALSE(r.fallback_used);
  // The request carried the declaration source and neighbor signatures only;
  // spot-check that nothing else leaked in.
  auto transcript = gw.snapshot_transcript();
  REQUIRE(transcript.size() == 1);
  const std::string& prompt = transcript[0].request.messages[0].content;
  CHECK(prompt.find(decl.source_text) != std::string::npos);
}

TEST_CASE("informalize_decl: unparseable replies fall back after the budget") {
  auto decl = mini_decl("mystery");
  Gateway gw = scripted({"??", "...", "still nothing"});
  auto r = informalize_decl(decl, "(none)", gw, PromptLibrary::builtin());
  CHECK(r.fallback_used);
  CHECK(r.nl_statement.find("mystery") != std::string::npos);
  CHECK(gw.call_count() == 3);
}

TEST_CASE("informalize_decl: axiom nodes get the unverified-assumption marker") {
  auto decl = mini_decl("gap_ax", {}, "axiom");
  Gateway gw = scripted({"STATEMENT: The spectral gap is positive."});
  auto r = informalize_decl(decl, "(none)", gw, PromptLibrary::builtin());
  CHECK(r.nl_statement.rfind("Unverified assumption:", 0) == 0);
  CHECK(r.nl_statement.find("spectral gap") != std::string::npos);
}

TEST_CASE("emit_blueprint: single node, balanced environments, annotations") {
  testsupport::TempDir dir("inf");
  DeclGraph graph = build_decl_graph({mini_decl("solo", {}, "theorem")});
  std::vector<NodeRendering> renderings{{"A lone statement.", std::nullopt, false}};
  auto nodes = assemble_blueprint_nodes(graph, renderings);
  emit_blueprint(graph, nodes, dir.path());
  std::string chapter = read_file(dir / "blueprint" / "M.tex");
  CHECK(chapter.find("\\begin{theorem}") != std::string::npos);
  CHECK(chapter.find("\\end{theorem}") != std::string::npos);
  CHECK(chapter.find("\\lean{solo}") != std::string::npos);
  CHECK(chapter.find("\\leanok") != std::string::npos);
  CHECK(chapter.find("A lone statement.") != std::string::npos);
  CHECK(chapter.find("\\uses") == std::string::npos);  // empty uses list omitted
  // Master document exists and inputs the chapter.
  std::string master = read_file(dir / "blueprint" / "blueprint.tex");
  CHECK(master.find("\\input{M}") != std::string::npos);
  CHECK(master.find("\\input{assumptions}") != std::string::npos);
}

TEST_CASE("emit_blueprint: assumptions index equals the census axiom set") {
  testsupport::TempDir dir("inf");
  Workspace ws = make_workspace(dir / "ws");
  install_fixture(ws, "Kunneth.lean", "Def_1.lean");
  auto parsed = parse_lean_files(ws);
  auto graph = build_decl_graph(std::move(parsed.declarations));
  std::vector<NodeRendering> renderings;
  for (const auto& n : graph.nodes)
    renderings.push_back({"About " + n.name + ".", std::nullopt, false});
  auto nodes = assemble_blueprint_nodes(graph, renderings);
  emit_blueprint(graph, nodes, dir.path());

  std::string assumptions = read_file(dir / "blueprint" / "assumptions.tex");
  auto census = ws.census();
  REQUIRE_FALSE(census.axioms.empty());
  for (const auto& axiom : census.axioms)
    CHECK(assumptions.find(axiom.name) != std::string::npos);
  // And nothing that is not an axiom.
  CHECK(assumptions.find("kunnethEquiv") == std::string::npos);
}

TEST_CASE("emit_blueprint: axiom nodes use the assumption environment") {
  testsupport::TempDir dir("inf");
  DeclGraph graph = build_decl_graph({mini_decl("gap_ax", {}, "axiom")});
  std::vector<NodeRendering> renderings{
      {"Unverified assumption: the gap is positive.", std::nullopt, false}};
  auto nodes = assemble_blueprint_nodes(graph, renderings);
  emit_blueprint(graph, nodes, dir.path());
  std::string chapter = read_file(dir / "blueprint" / "M.tex");
  CHECK(chapter.find("\\begin{assumption}") != std::string::npos);
  CHECK(chapter.find("\\leanok") == std::string::npos);  // axioms are not verified
}

TEST_CASE("emit_narrative: dependency-first order on a chain") {
  testsupport::TempDir dir("inf");
  // A references B references C: the narrative reads C, then B, then A.
  DeclGraph graph = build_decl_graph(
      {mini_decl("AAA", {"BBB"}, "theorem"), mini_decl("BBB", {"CCC"}, "lemma"),
       mini_decl("CCC", {}, "def")});
  std::vector<NodeRendering> renderings{
      {"Statement AAA.", std::nullopt, false},
      {"Statement BBB.", std::nullopt, false},
      {"Statement CCC.", std::nullopt, false}};
  auto nodes = assemble_blueprint_nodes(graph, renderings);
  emit_narrative(graph, nodes, dir.path());
  std::string narrative = read_file(dir / "narrative.tex");
  auto pos_c = narrative.find("Statement CCC.");
  auto pos_b = narrative.find("Statement BBB.");
  auto pos_a = narrative.find("Statement AAA.");
  REQUIRE(pos_a != std::string::npos);
  REQUIRE(pos_b != std::string::npos);
  REQUIRE(pos_c != std::string::npos);
  CHECK(pos_c < pos_b);
  CHECK(pos_b < pos_a);
}

TEST_CASE("emit_narrative: assumptions chapter iff axioms exist") {
  testsupport::TempDir dir("inf");
  SUBCASE("no axioms") {
    DeclGraph graph = build_decl_graph({mini_decl("plain")});
    std::vector<NodeRendering> renderings{{"About plain.", std::nullopt, false}};
    emit_narrative(graph, assemble_blueprint_nodes(graph, renderings), dir.path());
    std::string narrative = read_file(dir / "narrative.tex");
    CHECK(narrative.find("no unverified assumptions") != std::string::npos);
  }
  SUBCASE("with axioms") {
    DeclGraph graph = build_decl_graph({mini_decl("gap_ax", {}, "axiom")});
    std::vector<NodeRendering> renderings{
        {"Unverified assumption: positive gap.", std::nullopt, false}};
    emit_narrative(graph, assemble_blueprint_nodes(graph, renderings), dir.path());
    std::string narrative = read_file(dir / "narrative.tex");
    CHECK(narrative.find("\\begin{assumption}") != std::string::npos);
    CHECK(narrative.find("no unverified assumptions") == std::string::npos);
  }
}

TEST_CASE("graph.json: shape and determinism") {
  testsupport::TempDir dir("inf");
  DeclGraph graph = build_decl_graph(
      {mini_decl("A", {"B"}, "theorem"), mini_decl("B", {}, "axiom")});
  emit_graph_json(graph, dir / "graph.json");
  std::string once = read_file(dir / "graph.json");
  emit_graph_json(graph, dir / "graph.json");
  CHECK(read_file(dir / "graph.json") == once);

  auto doc = json::parse(once);
  REQUIRE(doc["nodes"].size() == 2);
  CHECK(doc["nodes"][0]["name"] == "A");
  CHECK(doc["nodes"][0]["axiom"] == false);
  CHECK(doc["nodes"][1]["axiom"] == true);
  REQUIRE(doc["edges"].size() == 1);
  CHECK(doc["edges"][0][0] == "A");
  CHECK(doc["edges"][0][1] == "B");
}

TEST_CASE("informalize_workspace: full pass with isolation audit") {
  testsupport::TempDir dir("inf");
  Workspace ws = make_workspace(dir / "ws");
  ws.write_module("Def_1", "def widget : Nat := 41\n");
  ws.write_module("Thm_1",
                  "theorem widget_small : widget = 41 := rfl\n");
  // Statement texts from the (hypothetical) paper. They must never appear
  // in informalization prompts.
  std::vector<std::string> original_texts = {
      "A widget is a gadget of size forty-one.",
      "Every widget is small in the technical sense."};
  Gateway gw = scripted({"STATEMENT: Defines the widget constant as 41.",
                         "STATEMENT: The widget constant equals 41.\n"
                         "PROOFNOTE: Both sides reduce to the same numeral."});
  auto result = informalize_workspace(ws, gw, PromptLibrary::builtin(), dir / "out");
  CHECK(result.graph.nodes.size() == 2);
  CHECK(result.warnings.empty());
  CHECK(std::filesystem::exists(dir / "out" / "narrative.tex"));
  CHECK(std::filesystem::exists(dir / "out" / "graph.json"));
  CHECK(std::filesystem::exists(dir / "out" / "blueprint" / "blueprint.tex"));

  // Coverage: blueprint node set equals parse set.
  CHECK(result.nodes.size() == result.graph.nodes.size());

  // Isolation: zero findings against the original statement texts.
  auto findings = audit_transcript(gw.snapshot_transcript(), original_texts);
  CHECK(findings.empty());
}

TEST_CASE("informalize_workspace: byte-determinism across runs") {
  testsupport::TempDir dir("inf");
  Workspace ws = make_workspace(dir / "ws");
  ws.write_module("Def_1", "def widget : Nat := 41\n");
  std::vector<std::string> replies = {"STATEMENT: Defines the widget constant."};
  auto run = [&](const std::filesystem::path& out) {
    Gateway gw = scripted(replies);
    informalize_workspace(ws, gw, PromptLibrary::builtin(), out);
    return testsupport::snapshot_tree(out);
  };
  auto first = run(dir / "out1");
  auto second = run(dir / "out2");
  CHECK(first == second);
}
