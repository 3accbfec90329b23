#pragma once

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "merlean/config.hpp"
#include "merlean/engine.hpp"
#include "merlean/errors.hpp"
#include "merlean/gateway.hpp"
#include "merlean/informalize.hpp"
#include "merlean/latex.hpp"
#include "merlean/manifest.hpp"
#include "merlean/prompts.hpp"
#include "merlean/report.hpp"
#include "merlean/statements.hpp"
#include "merlean/workspace.hpp"

namespace merlean {

namespace cli_detail {

// --backend live | scripted:<file> | record:<path> | replay:<path>
inline void apply_backend_flag(BackendConfig& backend, const std::string& flag) {
  if (flag == "live") {
    backend.mode = BackendMode::live;
    return;
  }
  auto colon = flag.find(':');
  std::string head = flag.substr(0, colon);
  std::string arg = colon == std::string::npos ? "" : flag.substr(colon + 1);
  if (head == "scripted") {
    backend.mode = BackendMode::scripted;
    if (arg.empty()) throw Error("--backend scripted requires scripted:<file>");
    json j;
    try {
      j = json::parse(read_file(arg));
    } catch (const json::parse_error& e) {
      throw Error("scripted replies file " + arg + ": " + e.what());
    }
    const json& replies = j.is_object() && j.contains("replies") ? j["replies"] : j;
    if (!replies.is_array())
      throw Error("scripted replies file must hold a JSON array of strings");
    backend.scripted_replies.clear();
    for (const auto& r : replies) backend.scripted_replies.push_back(r.get<std::string>());
    return;
  }
  if (head == "record") {
    backend.mode = BackendMode::record;
    if (arg.empty()) throw Error("--backend record requires record:<path>");
    backend.transcript_path = arg;
    return;
  }
  if (head == "replay") {
    backend.mode = BackendMode::replay;
    if (arg.empty()) throw Error("--backend replay requires replay:<path>");
    backend.transcript_path = arg;
    return;
  }
  throw Error("unknown backend '" + flag + "'");
}

inline void write_reports(const RunManifest& manifest, const UnsoundnessCensus& census,
                          int max_attempts, const std::string& label,
                          const std::filesystem::path& out_dir) {
  auto events = events_from_manifest(manifest);
  TypeStats stats = aggregate_stats(events);
  HistogramSpec hist = histogram(events, default_histogram_spec(max_attempts));
  std::vector<RunSummary> summaries = {summary_from_manifest(label, manifest, &census)};
  write_file_atomic(out_dir / "report.txt",
                    render_report(summaries, stats, hist, &census, "text"));
  write_file_atomic(out_dir / "report.json",
                    render_report(summaries, stats, hist, &census, "json"));
}

inline int exit_code_for(const RunManifest& manifest) {
  for (const auto& r : manifest.results)
    if (r.outcome == Outcome::failed) return 1;
  return 0;
}

struct PhaseClock {
  Gateway& gateway;
  bool deterministic;
  std::int64_t real_start;
  std::int64_t latency_start;
  explicit PhaseClock(Gateway& gw)
      : gateway(gw),
        deterministic(gw.deterministic_timing()),
        real_start(steady_now_ms()),
        latency_start(gw.total_latency_ms()) {}
  std::int64_t elapsed_ms() const {
    return deterministic ? gateway.total_latency_ms() - latency_start
                         : steady_now_ms() - real_start;
  }
};

}  // namespace cli_detail

// Subcommands: extract, formalize, informalize, report, run. Exit 0 on
// success, 1 when the run completed with failed statements, 2 on usage or
// environment errors.
inline int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"merlean: LaTeX -> verified Lean library -> LaTeX pipeline"};
  app.require_subcommand(1);

  std::string config_path, backend_flag, prompts_flag;
  app.add_option("--config", config_path, "run configuration JSON file");
  app.add_option("--backend", backend_flag,
                 "live | scripted:<file> | record:<path> | replay:<path>");
  app.add_option("--prompts", prompts_flag, "prompt template directory");

  auto* cmd_extract = app.add_subcommand("extract", "extract statements from LaTeX");
  std::string extract_tex, extract_out = "statements.json";
  int extract_passes = 0;
  cmd_extract->add_option("tex", extract_tex, "main .tex file")->required();
  cmd_extract->add_option("-o,--output", extract_out, "output statements.json path");
  cmd_extract->add_option("--passes", extract_passes, "extraction passes (>= 1)");

  auto* cmd_formalize = app.add_subcommand("formalize", "run the compile-fix pipeline");
  std::string formalize_statements, formalize_workspace;
  int formalize_max_attempts = 0, formalize_workers = 0;
  bool formalize_resume = false;
  cmd_formalize->add_option("statements", formalize_statements, "statements.json")
      ->required();
  cmd_formalize->add_option("--workspace", formalize_workspace, "workspace directory")
      ->required();
  cmd_formalize->add_option("--max-attempts", formalize_max_attempts,
                            "compile-fix attempt limit");
  cmd_formalize->add_option("--workers", formalize_workers, "concurrent statement workers");
  cmd_formalize->add_flag("--resume", formalize_resume,
                          "resume from the workspace manifest");

  auto* cmd_informalize =
      app.add_subcommand("informalize", "translate the library back to LaTeX");
  std::string informalize_workspace_arg, informalize_out;
  cmd_informalize->add_option("workspace", informalize_workspace_arg, "workspace directory")
      ->required();
  cmd_informalize->add_option("-o,--output", informalize_out, "output directory")
      ->required();

  auto* cmd_report = app.add_subcommand("report", "render run statistics");
  std::string report_workspace, report_format = "text", report_out;
  cmd_report->add_option("workspace", report_workspace, "workspace directory")->required();
  cmd_report->add_option("--format", report_format, "text | json")
      ->check(CLI::IsMember({"text", "json"}));
  cmd_report->add_option("-o,--output", report_out, "write to file instead of stdout");

  auto* cmd_run = app.add_subcommand("run", "extract, formalize, informalize, report");
  std::string run_tex, run_workspace, run_out;
  cmd_run->add_option("tex", run_tex, "main .tex file")->required();
  cmd_run->add_option("--workspace", run_workspace, "workspace directory")->required();
  cmd_run->add_option("-o,--output", run_out, "output directory")->required();

  std::vector<std::string> argv_like = args;
  argv_like.insert(argv_like.begin(), "merlean");
  std::vector<char*> argv;
  argv.reserve(argv_like.size());
  for (auto& a : argv_like) argv.push_back(a.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = load_run_config(config_path);
    if (!backend_flag.empty()) cli_detail::apply_backend_flag(cfg.backend, backend_flag);
    if (!prompts_flag.empty()) cfg.prompts_dir = prompts_flag;
    PromptLibrary prompts = PromptLibrary::load(cfg.prompts_dir);

    if (*cmd_extract) {
      if (extract_passes > 0) cfg.extraction.passes = extract_passes;
      std::filesystem::path out = extract_out;
      if (cfg.backend.transcript_path.empty() && cfg.backend.mode != BackendMode::replay) {
        auto dir = out.parent_path();
        cfg.backend.transcript_path = (dir.empty() ? "." : dir.string()) /
                                      std::filesystem::path("transcript.jsonl");
      }
      Gateway gateway(cfg.backend);
      SourceDocument doc = SourceDocument::load(extract_tex);
      StatementSet set = extract(doc, gateway, cfg.extraction, prompts);
      write_file_atomic(out, serialize_statement_set(set));
      return 0;
    }

    if (*cmd_formalize) {
      if (formalize_max_attempts > 0) cfg.loop.max_attempts = formalize_max_attempts;
      if (formalize_workers > 0) cfg.workers = formalize_workers;
      StatementSet set = parse_statement_set(read_file(formalize_statements));
      WorkspaceConfig wcfg = cfg.workspace;
      wcfg.root = formalize_workspace;
      Workspace ws = Workspace::init(wcfg);
      if (cfg.backend.transcript_path.empty() && cfg.backend.mode != BackendMode::replay)
        cfg.backend.transcript_path = ws.root() / ".merlean" / "transcript.jsonl";
      Gateway gateway(cfg.backend);
      RunManifest manifest;
      if (formalize_resume && std::filesystem::exists(ws.manifest_path()))
        manifest = load_manifest(ws.manifest_path());
      manifest.config_snapshot = run_config_to_json(cfg);
      formalize_all(set, ws, gateway, prompts, cfg.loop, manifest, cfg.workers);
      return cli_detail::exit_code_for(manifest);
    }

    if (*cmd_informalize) {
      Workspace ws = Workspace::open(informalize_workspace_arg);
      BuildReport build = ws.build();
      if (!build.success)
        throw Error("workspace does not build cleanly; informalization requires a "
                    "strict green build");
      if (cfg.backend.transcript_path.empty() && cfg.backend.mode != BackendMode::replay)
        cfg.backend.transcript_path = ws.root() / ".merlean" / "transcript.jsonl";
      Gateway gateway(cfg.backend);
      cli_detail::PhaseClock clock(gateway);
      InformalizeResult result = informalize_workspace(
          ws, gateway, prompts, informalize_out, cfg.loop.reprompt_budget);
      if (std::filesystem::exists(ws.manifest_path())) {
        RunManifest manifest = load_manifest(ws.manifest_path());
        manifest.phase_wall_ms["informalize"] = clock.elapsed_ms();
        for (const auto& w : result.warnings) manifest.warnings.push_back(w);
        save_manifest(ws.manifest_path(), manifest);
      }
      return 0;
    }

    if (*cmd_report) {
      Workspace ws = Workspace::open(report_workspace);
      RunManifest manifest;
      if (std::filesystem::exists(ws.manifest_path()))
        manifest = load_manifest(ws.manifest_path());
      UnsoundnessCensus census = manifest.census ? *manifest.census : ws.census();
      auto events = events_from_manifest(manifest);
      TypeStats stats = aggregate_stats(events);
      HistogramSpec hist = histogram(events, default_histogram_spec(cfg.loop.max_attempts));
      std::vector<RunSummary> summaries;
      if (!manifest.results.empty())
        summaries.push_back(summary_from_manifest(
            ws.root().filename().string(), manifest, &census));
      std::string rendered = render_report(summaries, stats, hist, &census, report_format);
      if (report_out.empty())
        std::cout << rendered;
      else
        write_file_atomic(report_out, rendered);
      return 0;
    }

    if (*cmd_run) {
      std::filesystem::path out_dir = run_out;
      std::filesystem::create_directories(out_dir);
      if (cfg.backend.transcript_path.empty() && cfg.backend.mode != BackendMode::replay)
        cfg.backend.transcript_path = out_dir / "transcript.jsonl";
      Gateway gateway(cfg.backend);

      // Extract.
      cli_detail::PhaseClock extract_clock(gateway);
      SourceDocument doc = SourceDocument::load(run_tex);
      StatementSet set = extract(doc, gateway, cfg.extraction, prompts);
      write_file_atomic(out_dir / "statements.json", serialize_statement_set(set));
      std::int64_t extract_ms = extract_clock.elapsed_ms();

      // Formalize.
      WorkspaceConfig wcfg = cfg.workspace;
      wcfg.root = run_workspace;
      Workspace ws = Workspace::init(wcfg);
      RunManifest manifest;
      if (std::filesystem::exists(ws.manifest_path()))
        manifest = load_manifest(ws.manifest_path());
      manifest.config_snapshot = run_config_to_json(cfg);
      manifest.phase_wall_ms["extract"] = extract_ms;
      RunResult run = formalize_all(set, ws, gateway, prompts, cfg.loop, manifest, cfg.workers);

      // Informalize.
      cli_detail::PhaseClock informalize_clock(gateway);
      InformalizeResult informal = informalize_workspace(
          ws, gateway, prompts, out_dir, cfg.loop.reprompt_budget);
      manifest = load_manifest(ws.manifest_path());
      manifest.phase_wall_ms["informalize"] = informalize_clock.elapsed_ms();
      for (const auto& w : informal.warnings) manifest.warnings.push_back(w);
      save_manifest(ws.manifest_path(), manifest);

      // Report.
      cli_detail::write_reports(manifest, run.census, cfg.loop.max_attempts,
                                ws.root().filename().string(), out_dir);
      return cli_detail::exit_code_for(manifest);
    }

    return 2;
  } catch (const Error& e) {
    std::cerr << "merlean: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "merlean: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace merlean
