#pragma once

#include <algorithm>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "merlean/errors.hpp"
#include "merlean/gateway.hpp"
#include "merlean/lean_lex.hpp"
#include "merlean/manifest.hpp"
#include "merlean/prompts.hpp"
#include "merlean/statements.hpp"
#include "merlean/util.hpp"
#include "merlean/workspace.hpp"

namespace merlean {

struct LoopConfig {
  int max_attempts = 30;
  bool faithfulness_enabled = true;
  int faithfulness_max_rejections = 3;
  bool axiom_phase_enabled = true;
  int axiom_max_attempts = 10;
  int context_window_statements = 10;
  int reprompt_budget = 3;  // re-prompts for unparseable verdicts/replies
};

struct FaithfulnessVerdict {
  bool accepted = false;
  std::string rationale;  // non-empty whenever accepted is false
};

namespace engine_detail {

struct CodeCensus {
  std::vector<SorryLocation> sorries;
  std::vector<std::string> axiom_names;
};

inline CodeCensus census_code(const std::string& code, const std::string& stem) {
  CodeCensus c;
  auto lexed = leanlex::lex(code, /*keep_comments=*/true);
  for (const auto& tok : lexed.tokens)
    if (tok.kind == leanlex::Tok::keyword && tok.text == "sorry")
      c.sorries.push_back({"", tok.line, tok.col});
  for (const auto& d : leanlex::scan_declarations(lexed, stem).decls)
    if (d.keyword == "axiom") c.axiom_names.push_back(d.name);
  return c;
}

inline int count_declarations(const std::string& code, const std::string& stem) {
  auto lexed = leanlex::lex(code, /*keep_comments=*/true);
  return static_cast<int>(leanlex::scan_declarations(lexed, stem).decls.size());
}

inline std::string render_diagnostics(const std::vector<Diagnostic>& diags) {
  std::string out;
  for (const auto& d : diags) {
    out += d.file + ":" + std::to_string(d.line) + ":" + std::to_string(d.column) +
           ": " + std::string(severity_name(d.severity)) + ": " + d.message + "\n";
  }
  return out;
}

// Diagnostics the loop attributes to this statement: its own module file,
// plus whole-build failures (timeouts, tool exits) reported under ".".
inline std::vector<Diagnostic> own_diagnostics(const BuildReport& report,
                                               const std::string& module_relpath) {
  std::vector<Diagnostic> own;
  for (const auto& d : report.diagnostics)
    if (d.file == module_relpath || d.file == ".") own.push_back(d);
  return own;
}

inline int severity_count(const std::vector<Diagnostic>& diags, Severity s) {
  return static_cast<int>(std::count_if(diags.begin(), diags.end(),
                                        [&](const Diagnostic& d) { return d.severity == s; }));
}

}  // namespace engine_detail

// Post-compilation semantic gate: the backend judges whether the code
// matches the statement's meaning, via a fixed VERDICT marker grammar.
inline FaithfulnessVerdict check_faithfulness(const Statement& stmt,
                                              const std::string& code,
                                              Gateway& gateway,
                                              const PromptLibrary& prompts,
                                              int reprompt_budget = 3) {
  ChatRequest req;
  req.messages.push_back(
      {Role::user, prompts.render("faithfulness/check",
                                  {{"text", stmt.text}, {"code", code}})});
  for (int attempt = 1; attempt <= reprompt_budget; ++attempt) {
    req.request_tag = "faithfulness:" + stmt.id +
                      (attempt == 1 ? "" : ":reprompt:" + std::to_string(attempt - 1));
    ChatResponse resp = gateway.complete(req);
    auto lines = split_lines(resp.content);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      std::string t = trim(lines[i]);
      if (t.rfind("VERDICT:", 0) != 0) continue;
      std::string word = trim(t.substr(8));
      std::string rationale;
      for (std::size_t k = i + 1; k < lines.size(); ++k) {
        if (!rationale.empty()) rationale += "\n";
        rationale += lines[k];
      }
      rationale = trim(rationale);
      if (word == "ACCEPT") return {true, rationale};
      if (word == "REJECT")
        return {false, rationale.empty() ? "rejected without rationale" : rationale};
      break;  // unknown verdict word: treat as unparseable
    }
    req.messages.push_back({Role::assistant, resp.content});
    req.messages.push_back(
        {Role::user,
         "Reply with exactly one line `VERDICT: ACCEPT` or `VERDICT: REJECT`, "
         "followed by rationale lines."});
  }
  return {false, "unparseable verdict"};
}

struct LoopResult {
  bool accepted = false;
  std::vector<AttemptRecord> attempts;
  int compile_attempts_main = 0;
  int faithfulness_rejections = 0;
  std::string last_code;
  std::vector<Diagnostic> last_diagnostics;
};

// Dependency context included in formalization prompts: the first
// `context_window` dependency modules verbatim, signatures for all.
struct DependencyContext {
  std::string signatures;
  std::string code;
};

inline DependencyContext collect_dependency_context(const Statement& stmt,
                                                    const Workspace& ws,
                                                    int context_window) {
  DependencyContext ctx;
  int included = 0;
  for (const auto& dep : stmt.dependencies) {
    if (!ws.module_exists(dep)) continue;
    std::string code = ws.read_module(dep);
    auto lexed = leanlex::lex(code, /*keep_comments=*/true);
    auto scan = leanlex::scan_declarations(lexed, dep);
    ctx.signatures += "-- " + dep + "\n";
    for (const auto& d : scan.decls)
      ctx.signatures += leanlex::decl_signature(code, lexed, d) + "\n";
    if (included < context_window) {
      ctx.code += "-- module " + dep + "\n" + code + "\n";
      ++included;
    }
  }
  if (ctx.signatures.empty()) ctx.signatures = "(none)";
  if (ctx.code.empty()) ctx.code = "(none)";
  return ctx;
}

// The compile-fix loop. Each cycle generates code, writes the module,
// builds, and feeds diagnostics back. Success requires a build with zero
// errors and warnings in this statement's module, no `sorry`, no `axiom`
// (axioms belong to the axiom phase), and a faithfulness accept when the
// check is enabled. Faithfulness rejections are budgeted separately from
// max_attempts; the rejected code's rebuild is triggered by a pseudo-
// diagnostic so the fix-prompt machinery is reused unchanged.
inline LoopResult compile_fix_loop(const Statement& stmt, const DependencyContext& deps,
                                   Workspace& ws, Gateway& gateway,
                                   const PromptLibrary& prompts, const LoopConfig& cfg) {
  LoopResult result;
  enum class Trigger { initial, compile_fix, faithfulness_fix };
  Trigger trigger = Trigger::initial;
  std::string current_code;
  std::string pending_diagnostics;
  const std::string module_rel = ws.module_relpath(stmt.id);
  const bool deterministic = gateway.deterministic_timing();

  for (;;) {
    if (trigger != Trigger::faithfulness_fix &&
        result.compile_attempts_main >= cfg.max_attempts)
      break;

    std::string prompt;
    if (trigger == Trigger::initial) {
      prompt = prompts.render(
          "formalize/initial",
          {{"statement_id", stmt.id},
           {"kind", std::string(kind_name(stmt.kind))},
           {"text", stmt.text},
           {"proof_sketch", stmt.proof_sketch ? *stmt.proof_sketch : "(none)"},
           {"library", ws.config().library_name},
           {"dependencies", deps.signatures},
           {"dependency_code", deps.code}});
    } else {
      prompt = prompts.render("formalize/fix",
                              {{"statement_id", stmt.id},
                               {"previous_code", current_code},
                               {"diagnostics", pending_diagnostics}});
    }

    int attempt_no = static_cast<int>(result.attempts.size()) + 1;
    ChatRequest req;
    req.messages.push_back({Role::user, std::move(prompt)});
    req.request_tag = "formalize:" + stmt.id + ":attempt:" + std::to_string(attempt_no);

    std::int64_t t0 = steady_now_ms();
    ChatResponse resp = gateway.complete(req);
    current_code = strip_code_fence(resp.content);
    if (trigger != Trigger::faithfulness_fix) ++result.compile_attempts_main;

    ws.write_module(stmt.id, current_code);
    BuildReport build = ws.build();
    auto own = engine_detail::own_diagnostics(build, module_rel);

    auto code_census = engine_detail::census_code(current_code, stmt.id);
    // Success is judged on this statement's module so concurrent workers'
    // in-flight breakage elsewhere cannot poison the loop; the final full
    // strict build in formalize_all still gates the whole workspace.
    bool module_clean = own.empty();

    AttemptRecord rec;
    rec.attempt_index = attempt_no;
    rec.code_hash = sha256_hex(current_code);
    rec.build_success = module_clean;
    rec.error_count = engine_detail::severity_count(own, Severity::error);
    rec.warning_count = engine_detail::severity_count(own, Severity::warning);
    rec.wall_ms = deterministic ? resp.latency_ms : steady_now_ms() - t0;
    bool sorry_free = code_census.sorries.empty();
    bool axiom_free = code_census.axiom_names.empty();

    if (module_clean && sorry_free && axiom_free) {
      if (!cfg.faithfulness_enabled) {
        result.attempts.push_back(std::move(rec));
        result.accepted = true;
        result.last_diagnostics.clear();
        break;
      }
      FaithfulnessVerdict verdict =
          check_faithfulness(stmt, current_code, gateway, prompts, cfg.reprompt_budget);
      if (verdict.accepted) {
        rec.faithfulness = FaithfulnessState::accepted;
        result.attempts.push_back(std::move(rec));
        result.accepted = true;
        result.last_diagnostics.clear();
        break;
      }
      rec.faithfulness = FaithfulnessState::rejected;
      result.attempts.push_back(std::move(rec));
      ++result.faithfulness_rejections;
      Diagnostic pseudo{Severity::error, module_rel, 1, 1,
                        "faithfulness: " + verdict.rationale};
      result.last_diagnostics = {pseudo};
      if (result.faithfulness_rejections >= cfg.faithfulness_max_rejections) break;
      pending_diagnostics = engine_detail::render_diagnostics(result.last_diagnostics);
      trigger = Trigger::faithfulness_fix;
      continue;
    }

    // Failing attempt: synthesize diagnostics for defects the build tool
    // cannot see (a clean build that still contains sorry or axiom).
    std::vector<Diagnostic> diags = own;
    if (module_clean && !sorry_free) {
      for (const auto& s : code_census.sorries)
        diags.push_back({Severity::error, module_rel, s.line, s.column,
                         "code contains a 'sorry' placeholder; every proof must be complete"});
    }
    if (module_clean && !axiom_free) {
      diags.push_back({Severity::error, module_rel, 1, 1,
                       "code declares axioms; axioms are reserved for the axiom phase -- "
                       "prove the obligations instead"});
    }
    result.attempts.push_back(std::move(rec));
    result.last_diagnostics = diags;
    pending_diagnostics = engine_detail::render_diagnostics(diags);
    trigger = Trigger::compile_fix;
  }

  result.last_code = current_code;
  return result;
}

struct AxiomPhaseOutcome {
  Outcome outcome = Outcome::failed;
  std::vector<AttemptRecord> attempts;
  std::vector<std::string> introduced_axioms;
  std::optional<std::string> stub_axiom;
  int extra_builds = 0;  // stub verification build
};

// Fallback stage: restate blocking obligations as explicit axioms so the
// library still builds with transparent assumptions. Success needs a clean
// strict build, zero sorry, and at least one axiom. On failure the module
// is reduced to a single stub axiom and the statement is recorded failed.
inline AxiomPhaseOutcome axiom_phase(const Statement& stmt, std::string last_code,
                                     std::string last_diagnostics, Workspace& ws,
                                     Gateway& gateway, const PromptLibrary& prompts,
                                     const LoopConfig& cfg) {
  AxiomPhaseOutcome out;
  const std::string module_rel = ws.module_relpath(stmt.id);
  const bool deterministic = gateway.deterministic_timing();

  for (int attempt = 1; attempt <= cfg.axiom_max_attempts; ++attempt) {
    std::string prompt = prompts.render("axiom/convert",
                                        {{"statement_id", stmt.id},
                                         {"text", stmt.text},
                                         {"previous_code", last_code},
                                         {"diagnostics", last_diagnostics}});
    ChatRequest req;
    req.messages.push_back({Role::user, std::move(prompt)});
    req.request_tag = "axiom:" + stmt.id + ":attempt:" + std::to_string(attempt);

    std::int64_t t0 = steady_now_ms();
    ChatResponse resp = gateway.complete(req);
    std::string code = strip_code_fence(resp.content);
    ws.write_module(stmt.id, code);
    BuildReport build = ws.build();
    auto own = engine_detail::own_diagnostics(build, module_rel);
    auto code_census = engine_detail::census_code(code, stmt.id);

    AttemptRecord rec;
    rec.attempt_index = attempt;
    rec.code_hash = sha256_hex(code);
    rec.build_success = own.empty();
    rec.error_count = engine_detail::severity_count(own, Severity::error);
    rec.warning_count = engine_detail::severity_count(own, Severity::warning);
    rec.wall_ms = deterministic ? resp.latency_ms : steady_now_ms() - t0;
    out.attempts.push_back(std::move(rec));

    bool ok = own.empty() && code_census.sorries.empty() && !code_census.axiom_names.empty();
    if (ok) {
      out.outcome = Outcome::axiomatized;
      out.introduced_axioms = code_census.axiom_names;
      return out;
    }
    std::vector<Diagnostic> diags = own;
    if (own.empty() && code_census.axiom_names.empty())
      diags.push_back({Severity::error, module_rel, 1, 1,
                       "no axiom declarations introduced; state each unproved "
                       "obligation as an explicit axiom"});
    if (own.empty() && !code_census.sorries.empty())
      diags.push_back({Severity::error, module_rel, 1, 1,
                       "code contains a 'sorry' placeholder"});
    last_code = std::move(code);
    last_diagnostics = engine_detail::render_diagnostics(diags);
  }

  // Budget exhausted: reduce to a stub so downstream statements can proceed.
  std::string stub_name = stmt.id + "_stub_ax";
  std::string stub_code = "/-- Placeholder assumption standing in for statement " +
                          stmt.id + ", which was not formalized. -/\naxiom " +
                          stub_name + " : True\n";
  ws.write_module(stmt.id, stub_code);
  BuildReport stub_build = ws.build();
  out.extra_builds = 1;
  if (!engine_detail::own_diagnostics(stub_build, module_rel).empty())
    throw EnvironmentError("stub axiom module failed to build for " + stmt.id);
  out.outcome = Outcome::failed;
  out.stub_axiom = stub_name;
  return out;
}

// One statement end to end: compile-fix loop, faithfulness gating, axiom
// phase when needed.
inline StatementResult formalize_statement(const Statement& stmt, Workspace& ws,
                                           Gateway& gateway, const PromptLibrary& prompts,
                                           const LoopConfig& cfg) {
  std::int64_t t0 = steady_now_ms();
  const bool deterministic = gateway.deterministic_timing();

  DependencyContext deps =
      collect_dependency_context(stmt, ws, cfg.context_window_statements);
  LoopResult loop = compile_fix_loop(stmt, deps, ws, gateway, prompts, cfg);

  StatementResult result;
  result.statement_id = stmt.id;
  result.attempts = loop.attempts;
  result.compile_attempts_main = loop.compile_attempts_main;
  result.faithfulness_rejections = loop.faithfulness_rejections;
  result.final_code_path = ws.module_relpath(stmt.id);
  result.builds_total = static_cast<int>(loop.attempts.size());

  if (loop.accepted) {
    result.outcome = Outcome::proved;
  } else if (cfg.axiom_phase_enabled) {
    AxiomPhaseOutcome ax = axiom_phase(
        stmt, loop.last_code, engine_detail::render_diagnostics(loop.last_diagnostics),
        ws, gateway, prompts, cfg);
    result.outcome = ax.outcome;
    result.axiom_attempts = ax.attempts;
    result.introduced_axioms = ax.introduced_axioms;
    result.stub_axiom = ax.stub_axiom;
    result.builds_total += static_cast<int>(ax.attempts.size()) + ax.extra_builds;
  } else {
    std::string stub_name = stmt.id + "_stub_ax";
    ws.write_module(stmt.id, "/-- Placeholder assumption standing in for statement " +
                                 stmt.id + ", which was not formalized. -/\naxiom " +
                                 stub_name + " : True\n");
    ws.build();
    result.builds_total += 1;
    result.outcome = Outcome::failed;
    result.stub_axiom = stub_name;
  }

  result.introduced_declarations =
      engine_detail::count_declarations(ws.read_module(stmt.id), stmt.id);
  if (deterministic) {
    std::int64_t sum = 0;
    for (const auto& a : result.attempts) sum += a.wall_ms;
    for (const auto& a : result.axiom_attempts) sum += a.wall_ms;
    result.total_wall_ms = sum;
  } else {
    result.total_wall_ms = steady_now_ms() - t0;
  }
  return result;
}

struct RunResult {
  std::vector<StatementResult> results;  // processed order
  UnsoundnessCensus census;
  std::filesystem::path manifest_path;
};

// Dependency-ordered run over the whole set with checkpointing after every
// statement. Statements already terminal in the manifest are skipped
// (resume). Eligible statements may run on several workers; builds are
// serialized by the workspace.
inline RunResult formalize_all(const StatementSet& set, Workspace& ws, Gateway& gateway,
                               const PromptLibrary& prompts, const LoopConfig& cfg,
                               RunManifest& manifest, int workers = 1) {
  ValidationReport report = validate(set);
  if (!report.ok)
    throw Error("statement set failed validation:\n" + render_report(report));

  manifest.config_snapshot["loop"] =
      json{{"max_attempts", cfg.max_attempts},
           {"faithfulness_enabled", cfg.faithfulness_enabled},
           {"faithfulness_max_rejections", cfg.faithfulness_max_rejections},
           {"axiom_phase_enabled", cfg.axiom_phase_enabled},
           {"axiom_max_attempts", cfg.axiom_max_attempts},
           {"context_window_statements", cfg.context_window_statements}};
  manifest.config_snapshot["workers"] = workers;
  manifest.config_snapshot["source_fingerprint"] = set.source_fingerprint;

  std::unordered_map<std::string, const StatementResult*> done;
  for (const auto& r : manifest.results) done.emplace(r.statement_id, &r);

  std::mutex mu;
  std::condition_variable cv;
  enum class State { pending, running, terminal };
  std::unordered_map<std::string, State> state;
  std::unordered_map<std::string, Outcome> outcomes;
  for (const auto& s : set.statements) {
    auto it = done.find(s.id);
    if (it != done.end()) {
      state[s.id] = State::terminal;
      outcomes[s.id] = it->second->outcome;
    } else {
      state[s.id] = State::pending;
    }
  }

  std::exception_ptr first_error;
  bool aborted = false;
  std::int64_t phase_t0 = steady_now_ms();

  auto eligible = [&](const Statement& s) {
    for (const auto& dep : s.dependencies)
      if (state.at(dep) != State::terminal) return false;
    return true;
  };

  auto save = [&]() { save_manifest(ws.manifest_path(), manifest); };

  {
    std::lock_guard<std::mutex> lock(mu);
    manifest.status = "running";
    save();
  }

  auto note_failed_deps = [&](const Statement& s) {
    for (const auto& dep : s.dependencies) {
      if (outcomes.at(dep) == Outcome::failed)
        manifest.warnings.push_back("statement " + s.id +
                                    " proceeds over failed dependency " + dep +
                                    " (stub axiom)");
    }
  };

  auto worker_fn = [&]() {
    std::unique_lock<std::mutex> lock(mu);
    for (;;) {
      if (aborted) return;
      const Statement* next = nullptr;
      bool any_pending = false, any_running = false;
      for (const auto& s : set.statements) {
        State st = state.at(s.id);
        if (st == State::pending) {
          any_pending = true;
          if (!next && eligible(s)) next = &s;
        }
        if (st == State::running) any_running = true;
      }
      if (!next) {
        if (!any_pending || !any_running) return;  // done, or nothing can unblock us
        cv.wait(lock);
        continue;
      }
      state[next->id] = State::running;
      note_failed_deps(*next);
      lock.unlock();
      try {
        StatementResult result = formalize_statement(*next, ws, gateway, prompts, cfg);
        lock.lock();
        outcomes[next->id] = result.outcome;
        state[next->id] = State::terminal;
        manifest.results.push_back(std::move(result));
        save();
        cv.notify_all();
      } catch (...) {
        lock.lock();
        if (!first_error) first_error = std::current_exception();
        aborted = true;
        cv.notify_all();
        return;
      }
    }
  };

  if (workers <= 1) {
    // Inline path: deterministic order, exceptions propagate after a
    // checkpoint.
    for (const auto& s : set.statements) {
      if (state.at(s.id) == State::terminal) continue;
      note_failed_deps(s);
      try {
        StatementResult result = formalize_statement(s, ws, gateway, prompts, cfg);
        outcomes[s.id] = result.outcome;
        state[s.id] = State::terminal;
        manifest.results.push_back(std::move(result));
        save();
      } catch (...) {
        manifest.status = "aborted";
        save();
        throw;
      }
    }
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker_fn);
    for (auto& t : pool) t.join();
    if (first_error) {
      manifest.status = "aborted";
      save();
      std::rethrow_exception(first_error);
    }
  }

  BuildReport final_build = ws.build();
  UnsoundnessCensus census = ws.census();
  if (!final_build.success)
    throw Error("final strict build failed after all statements terminal");
  if (census.sorry_count() != 0)
    throw Error("engine invariant violated: census found " +
                std::to_string(census.sorry_count()) + " sorry tokens");

  // Axiom transparency: census axioms must be exactly the axioms the run
  // introduced plus failed statements' stubs. A mismatch means the
  // workspace was edited outside the engine.
  {
    std::set<std::string> accounted;
    for (const auto& r : manifest.results) {
      for (const auto& name : r.introduced_axioms) accounted.insert(name);
      if (r.stub_axiom) accounted.insert(*r.stub_axiom);
    }
    std::set<std::string> found;
    for (const auto& a : census.axioms) found.insert(a.name);
    if (found != accounted) {
      std::string msg = "census axioms differ from the run's accounting:";
      for (const auto& n : found)
        if (!accounted.count(n)) msg += " +" + n;
      for (const auto& n : accounted)
        if (!found.count(n)) msg += " -" + n;
      manifest.warnings.push_back(msg);
    }
  }

  if (gateway.deterministic_timing()) {
    std::int64_t sum = 0;
    for (const auto& r : manifest.results) sum += r.total_wall_ms;
    manifest.phase_wall_ms["formalize"] = sum;
  } else {
    manifest.phase_wall_ms["formalize"] =
        manifest.phase_wall_ms["formalize"] + (steady_now_ms() - phase_t0);
  }
  manifest.census = census;
  manifest.status = "complete";
  save_manifest(ws.manifest_path(), manifest);

  RunResult run;
  run.results = manifest.results;
  run.census = std::move(census);
  run.manifest_path = ws.manifest_path();
  return run;
}

}  // namespace merlean
