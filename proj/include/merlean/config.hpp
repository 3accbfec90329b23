#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "merlean/engine.hpp"
#include "merlean/errors.hpp"
#include "merlean/gateway.hpp"
#include "merlean/latex.hpp"
#include "merlean/util.hpp"
#include "merlean/workspace.hpp"

namespace merlean {

struct RunConfig {
  std::filesystem::path paper_tex;
  std::filesystem::path workspace_root;
  std::filesystem::path out_dir;
  std::filesystem::path prompts_dir;
  ExtractionConfig extraction;
  LoopConfig loop;
  BackendConfig backend;
  WorkspaceConfig workspace;
  int workers = 1;
};

inline json run_config_to_json(const RunConfig& c) {
  json env_map = json::object();
  for (const auto& [env, kind] : c.extraction.env_map)
    env_map[env] = std::string(kind_name(kind));
  return json{
      {"paths",
       {{"paper_tex", c.paper_tex.string()},
        {"workspace_root", c.workspace_root.string()},
        {"out_dir", c.out_dir.string()},
        {"prompts_dir", c.prompts_dir.string()}}},
      {"extraction",
       {{"passes", c.extraction.passes},
        {"env_map", env_map},
        {"max_statement_chars", c.extraction.max_statement_chars},
        {"reprompt_budget", c.extraction.reprompt_budget}}},
      {"loop",
       {{"max_attempts", c.loop.max_attempts},
        {"faithfulness_enabled", c.loop.faithfulness_enabled},
        {"faithfulness_max_rejections", c.loop.faithfulness_max_rejections},
        {"axiom_phase_enabled", c.loop.axiom_phase_enabled},
        {"axiom_max_attempts", c.loop.axiom_max_attempts},
        {"context_window_statements", c.loop.context_window_statements},
        {"reprompt_budget", c.loop.reprompt_budget}}},
      {"backend",
       {{"mode", std::string(backend_mode_name(c.backend.mode))},
        {"endpoint", c.backend.endpoint},
        {"credential_env", c.backend.credential_env},
        {"model", c.backend.model},
        {"timeout_ms", c.backend.timeout_ms},
        {"strict_hash", c.backend.strict_hash},
        {"retry",
         {{"max_retries", c.backend.retry.max_retries},
          {"base_backoff_ms", c.backend.retry.base_backoff_ms},
          {"max_backoff_ms", c.backend.retry.max_backoff_ms}}}}},
      {"workspace",
       {{"library_name", c.workspace.library_name},
        {"toolchain", c.workspace.toolchain},
        {"mathlib_git", c.workspace.mathlib_git},
        {"mathlib_rev", c.workspace.mathlib_rev},
        {"build_command", c.workspace.build_command},
        {"build_timeout_ms", c.workspace.build_timeout_ms},
        {"build_jobs", c.workspace.build_jobs}}},
      {"workers", c.workers}};
}

// One JSON file, flat sections per module config. Absent fields keep their
// defaults.
inline RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error("config parse error in " + path.string() + ": " + e.what());
  }
  RunConfig c;
  if (j.contains("paths")) {
    const auto& p = j["paths"];
    if (p.contains("paper_tex")) c.paper_tex = p["paper_tex"].get<std::string>();
    if (p.contains("workspace_root"))
      c.workspace_root = p["workspace_root"].get<std::string>();
    if (p.contains("out_dir")) c.out_dir = p["out_dir"].get<std::string>();
    if (p.contains("prompts_dir")) c.prompts_dir = p["prompts_dir"].get<std::string>();
  }
  if (j.contains("extraction")) {
    const auto& e = j["extraction"];
    c.extraction.passes = e.value("passes", c.extraction.passes);
    c.extraction.max_statement_chars =
        e.value("max_statement_chars", c.extraction.max_statement_chars);
    c.extraction.reprompt_budget = e.value("reprompt_budget", c.extraction.reprompt_budget);
    if (e.contains("env_map")) {
      c.extraction.env_map.clear();
      for (const auto& [env, kind] : e["env_map"].items()) {
        auto k = kind_from_name(kind.get<std::string>());
        if (!k) throw Error("config: unknown statement kind '" +
                            kind.get<std::string>() + "' in env_map");
        c.extraction.env_map[env] = *k;
      }
    }
    if (c.extraction.passes < 1) throw Error("config: extraction.passes must be >= 1");
  }
  if (j.contains("loop")) {
    const auto& l = j["loop"];
    c.loop.max_attempts = l.value("max_attempts", c.loop.max_attempts);
    c.loop.faithfulness_enabled =
        l.value("faithfulness_enabled", c.loop.faithfulness_enabled);
    c.loop.faithfulness_max_rejections =
        l.value("faithfulness_max_rejections", c.loop.faithfulness_max_rejections);
    c.loop.axiom_phase_enabled = l.value("axiom_phase_enabled", c.loop.axiom_phase_enabled);
    c.loop.axiom_max_attempts = l.value("axiom_max_attempts", c.loop.axiom_max_attempts);
    c.loop.context_window_statements =
        l.value("context_window_statements", c.loop.context_window_statements);
    c.loop.reprompt_budget = l.value("reprompt_budget", c.loop.reprompt_budget);
    if (c.loop.max_attempts < 1) throw Error("config: loop.max_attempts must be >= 1");
  }
  if (j.contains("backend")) {
    const auto& b = j["backend"];
    if (b.contains("mode")) {
      std::string mode = b["mode"].get<std::string>();
      if (mode == "live") c.backend.mode = BackendMode::live;
      else if (mode == "scripted") c.backend.mode = BackendMode::scripted;
      else if (mode == "record") c.backend.mode = BackendMode::record;
      else if (mode == "replay") c.backend.mode = BackendMode::replay;
      else throw Error("config: unknown backend mode '" + mode + "'");
    }
    c.backend.endpoint = b.value("endpoint", c.backend.endpoint);
    c.backend.credential_env = b.value("credential_env", c.backend.credential_env);
    c.backend.model = b.value("model", c.backend.model);
    c.backend.timeout_ms = b.value("timeout_ms", c.backend.timeout_ms);
    c.backend.strict_hash = b.value("strict_hash", c.backend.strict_hash);
    if (b.contains("transcript"))
      c.backend.transcript_path = b["transcript"].get<std::string>();
    if (b.contains("retry")) {
      const auto& r = b["retry"];
      c.backend.retry.max_retries = r.value("max_retries", c.backend.retry.max_retries);
      c.backend.retry.base_backoff_ms =
          r.value("base_backoff_ms", c.backend.retry.base_backoff_ms);
      c.backend.retry.max_backoff_ms =
          r.value("max_backoff_ms", c.backend.retry.max_backoff_ms);
    }
  }
  if (j.contains("workspace")) {
    const auto& w = j["workspace"];
    c.workspace.library_name = w.value("library_name", c.workspace.library_name);
    c.workspace.toolchain = w.value("toolchain", c.workspace.toolchain);
    c.workspace.mathlib_git = w.value("mathlib_git", c.workspace.mathlib_git);
    c.workspace.mathlib_rev = w.value("mathlib_rev", c.workspace.mathlib_rev);
    if (w.contains("build_command"))
      c.workspace.build_command = w["build_command"].get<std::vector<std::string>>();
    c.workspace.build_timeout_ms =
        w.value("build_timeout_ms", c.workspace.build_timeout_ms);
    c.workspace.build_jobs = w.value("build_jobs", c.workspace.build_jobs);
  }
  c.workers = j.value("workers", c.workers);
  if (c.workers < 1) throw Error("config: workers must be >= 1");
  return c;
}

}  // namespace merlean
