#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "merlean/errors.hpp"
#include "merlean/lean_lex.hpp"
#include "merlean/statements.hpp"
#include "merlean/subprocess.hpp"
#include "merlean/util.hpp"

namespace merlean {

struct WorkspaceConfig {
  std::filesystem::path root;
  std::string library_name = "MerLib";
  std::string toolchain = "leanprover/lean4:v4.15.0";
  std::string mathlib_git = "https://github.com/leanprover-community/mathlib4";
  std::string mathlib_rev = "v4.15.0";
  std::vector<std::string> build_command = {"lake", "build"};
  std::int64_t build_timeout_ms = 20 * 60 * 1000;
  int build_jobs = 0;  // 0 = tool default
};

enum class Severity { error, warning, info };

inline std::string_view severity_name(Severity s) {
  switch (s) {
    case Severity::error: return "error";
    case Severity::warning: return "warning";
    case Severity::info: return "info";
  }
  return "error";
}

inline std::optional<Severity> severity_from_name(std::string_view s) {
  if (s == "error") return Severity::error;
  if (s == "warning") return Severity::warning;
  if (s == "info") return Severity::info;
  return std::nullopt;
}

struct Diagnostic {
  Severity severity = Severity::error;
  std::string file;  // relative to the workspace root
  int line = 1;      // 1-based
  int column = 1;    // 1-based
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

struct BuildReport {
  bool success = false;  // strict: zero errors AND zero warnings
  std::vector<Diagnostic> diagnostics;
  std::int64_t duration_ms = 0;
  std::string raw_output;

  int error_count() const {
    return static_cast<int>(std::count_if(
        diagnostics.begin(), diagnostics.end(),
        [](const Diagnostic& d) { return d.severity == Severity::error; }));
  }
  int warning_count() const {
    return static_cast<int>(std::count_if(
        diagnostics.begin(), diagnostics.end(),
        [](const Diagnostic& d) { return d.severity == Severity::warning; }));
  }
};

struct SorryLocation {
  std::string file;
  int line = 1;
  int column = 1;
};

struct AxiomLocation {
  std::string name;
  std::string file;
  int line = 1;
};

struct UnsoundnessCensus {
  std::vector<SorryLocation> sorries;
  std::vector<AxiomLocation> axioms;
  std::map<std::string, int> declaration_counts;
  std::size_t total_lines = 0;

  std::size_t sorry_count() const { return sorries.size(); }
  std::vector<std::string> axiom_names() const {
    std::vector<std::string> names;
    names.reserve(axioms.size());
    for (const auto& a : axioms) names.push_back(a.name);
    return names;
  }
  int total_declarations() const {
    int n = 0;
    for (const auto& [k, v] : declaration_counts) n += v;
    return n;
  }
};

// Best-effort extraction of `<file>:<line>:<col>: <severity>: <message>`
// records. Continuation lines (leading whitespace) attach to the current
// diagnostic; any other non-header line closes it and stays residue. The
// lake-style `<severity>: <file>:<line>:<col>: <message>` prefix form is
// accepted too.
inline std::vector<Diagnostic> parse_diagnostics(std::string_view raw_output) {
  std::vector<Diagnostic> out;
  bool open = false;

  auto parse_pos = [](std::string_view s, std::size_t& i, int& value) -> bool {
    std::size_t start = i;
    long v = 0;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') {
      v = v * 10 + (s[i] - '0');
      if (v > 1000000000) return false;
      ++i;
    }
    if (i == start) return false;
    value = static_cast<int>(v);
    return true;
  };

  auto try_header = [&](std::string_view line, Diagnostic& d) -> bool {
    // Optional severity prefix.
    std::string_view rest = line;
    std::optional<Severity> prefix_sev;
    for (std::string_view sev : {"error: ", "warning: ", "info: "}) {
      if (rest.rfind(sev, 0) == 0) {
        prefix_sev = severity_from_name(sev.substr(0, sev.size() - 2));
        rest = rest.substr(sev.size());
        break;
      }
    }
    // <file>:<line>:<col>:
    std::size_t colon1 = std::string_view::npos;
    std::size_t i = 0;
    // The file part must be non-empty and contain no whitespace.
    while (i < rest.size() && rest[i] != ':' && !is_space_byte(rest[i])) ++i;
    if (i == 0 || i >= rest.size() || rest[i] != ':') return false;
    colon1 = i;
    ++i;
    int line_no = 0, col_no = 0;
    if (!parse_pos(rest, i, line_no)) return false;
    if (i >= rest.size() || rest[i] != ':') return false;
    ++i;
    if (!parse_pos(rest, i, col_no)) return false;
    if (i >= rest.size() || rest[i] != ':') return false;
    ++i;
    while (i < rest.size() && rest[i] == ' ') ++i;
    std::string_view tail = rest.substr(i);
    Severity sev;
    if (prefix_sev) {
      sev = *prefix_sev;
    } else {
      // <severity>: leads the message.
      bool found = false;
      for (std::string_view name : {"error", "warning", "info"}) {
        if (tail.rfind(name, 0) == 0 && tail.size() > name.size() &&
            tail[name.size()] == ':') {
          sev = *severity_from_name(name);
          tail = tail.substr(name.size() + 1);
          while (!tail.empty() && tail.front() == ' ') tail.remove_prefix(1);
          found = true;
          break;
        }
      }
      if (!found) return false;
    }
    d.severity = sev;
    d.file = std::string(rest.substr(0, colon1));
    while (d.file.rfind("./", 0) == 0) d.file.erase(0, 2);
    d.line = std::max(line_no, 1);
    d.column = std::max(col_no, 1);  // tolerate 0-based emitters
    d.message = std::string(tail);
    return true;
  };

  for (const auto& line : split_lines(raw_output)) {
    Diagnostic d;
    if (try_header(line, d)) {
      out.push_back(std::move(d));
      open = true;
      continue;
    }
    if (open && !line.empty() && (line[0] == ' ' || line[0] == '\t')) {
      out.back().message += "\n" + line;
      continue;
    }
    open = false;  // noise or residue
  }
  return out;
}

// Owns the Lean project on disk: scaffolding, per-statement module files,
// build invocation, and the sorry/axiom/declaration census. One workspace
// admits one build at a time; module writes for distinct ids may race.
class Workspace {
 public:
  // Creates or reopens the workspace. Idempotent for a matching library
  // name; refuses a non-empty foreign directory.
  static Workspace init(const WorkspaceConfig& config) {
    namespace fs = std::filesystem;
    Workspace ws(config);
    fs::path root = config.root;
    fs::path marker = root / ".merlean" / "workspace.json";

    if (fs::exists(root) && !fs::is_empty(root)) {
      if (!fs::exists(marker))
        throw WorkspaceError("refusing to initialize non-empty directory " +
                             root.string());
      json meta = json::parse(read_file(marker));
      std::string existing = meta.value("library_name", "");
      if (existing != config.library_name)
        throw WorkspaceError("workspace at " + root.string() + " holds library '" +
                             existing + "', not '" + config.library_name + "'");
      ws.load_imports();
      return ws;
    }

    fs::create_directories(root / config.library_name / "Statements");
    fs::create_directories(root / ".merlean" / "logs");

    std::string lakefile =
        "name = \"" + config.library_name + "\"\n" +
        "defaultTargets = [\"" + config.library_name + "\"]\n\n" +
        "[[require]]\nname = \"mathlib\"\ngit = \"" + config.mathlib_git +
        "\"\nrev = \"" + config.mathlib_rev + "\"\n\n" +
        "[[lean_lib]]\nname = \"" + config.library_name + "\"\n";
    write_file_atomic(root / "lakefile.toml", lakefile);
    write_file_atomic(root / "lean-toolchain", config.toolchain + "\n");

    json meta{{"library_name", config.library_name},
              {"toolchain", config.toolchain},
              {"mathlib_git", config.mathlib_git},
              {"mathlib_rev", config.mathlib_rev},
              {"build_command", config.build_command},
              {"build_timeout_ms", config.build_timeout_ms}};
    write_file_atomic(marker, meta.dump(2) + "\n");

    ws.write_root_imports();
    return ws;
  }

  // Reopens an existing workspace using its persisted settings.
  static Workspace open(const std::filesystem::path& root) {
    std::filesystem::path marker = root / ".merlean" / "workspace.json";
    if (!std::filesystem::exists(marker))
      throw WorkspaceError("not a workspace (missing .merlean/workspace.json): " +
                           root.string());
    json meta = json::parse(read_file(marker));
    WorkspaceConfig config;
    config.root = root;
    config.library_name = meta.value("library_name", "MerLib");
    config.toolchain = meta.value("toolchain", config.toolchain);
    config.mathlib_git = meta.value("mathlib_git", config.mathlib_git);
    config.mathlib_rev = meta.value("mathlib_rev", config.mathlib_rev);
    if (meta.contains("build_command"))
      config.build_command = meta["build_command"].get<std::vector<std::string>>();
    config.build_timeout_ms = meta.value("build_timeout_ms", config.build_timeout_ms);
    Workspace ws(config);
    ws.load_imports();
    return ws;
  }

  const WorkspaceConfig& config() const { return cfg_; }
  const std::filesystem::path& root() const { return cfg_.root; }
  std::filesystem::path library_dir() const { return cfg_.root / cfg_.library_name; }
  std::filesystem::path statements_dir() const { return library_dir() / "Statements"; }
  std::filesystem::path root_module_path() const {
    return cfg_.root / (cfg_.library_name + ".lean");
  }
  std::filesystem::path manifest_path() const {
    return cfg_.root / ".merlean" / "manifest.json";
  }
  std::filesystem::path logs_dir() const { return cfg_.root / ".merlean" / "logs"; }

  std::filesystem::path module_path(const std::string& statement_id) const {
    return statements_dir() / (statement_id + ".lean");
  }
  std::string module_relpath(const std::string& statement_id) const {
    return cfg_.library_name + "/Statements/" + statement_id + ".lean";
  }
  bool module_exists(const std::string& statement_id) const {
    return std::filesystem::exists(module_path(statement_id));
  }
  std::string read_module(const std::string& statement_id) const {
    return read_file(module_path(statement_id));
  }

  // Atomic write plus exactly-once registration in the root import module.
  std::filesystem::path write_module(const std::string& statement_id,
                                     const std::string& code) {
    if (!kind_of_id(statement_id))
      throw WorkspaceError("invalid statement id: " + statement_id);
    std::filesystem::path path = module_path(statement_id);
    write_file_atomic(path, code);
    {
      std::lock_guard<std::mutex> lock(sync_->imports);
      if (imports_.insert(statement_id).second) write_root_imports_locked();
    }
    return path;
  }

  // Invokes the configured build tool, captures output, parses diagnostics.
  // Strict success: zero errors and zero warnings. A timeout becomes one
  // error diagnostic; an unstartable tool is an environment error.
  BuildReport build() {
    std::lock_guard<std::mutex> lock(sync_->build);
    std::vector<std::string> command = cfg_.build_command;
    if (cfg_.build_jobs > 0 && !command.empty() && command[0] == "lake")
      command.push_back("-j" + std::to_string(cfg_.build_jobs));

    CommandResult run = run_command(command, cfg_.root.string(), cfg_.build_timeout_ms);
    int index = sync_->build_counter.fetch_add(1) + 1;
    log_build(index, command, run);

    if (run.start_failed)
      throw EnvironmentError("build tool unstartable: " + run.start_error);

    BuildReport report;
    report.duration_ms = run.duration_ms;
    report.raw_output = run.output;
    if (run.timed_out) {
      report.diagnostics.push_back(
          {Severity::error, ".", 1, 1, "build timeout after " +
                                           std::to_string(cfg_.build_timeout_ms) + " ms"});
      report.success = false;
      return report;
    }
    report.diagnostics = parse_diagnostics(run.output);
    normalize_paths(report.diagnostics);
    bool clean = report.error_count() == 0 && report.warning_count() == 0;
    // A nonzero exit without parseable diagnostics still fails, with the
    // tail of the raw output as the diagnostic.
    if (run.exit_code != 0 && clean) {
      std::string tail = run.output.size() > 400
                             ? run.output.substr(run.output.size() - 400)
                             : run.output;
      report.diagnostics.push_back(
          {Severity::error, ".", 1, 1,
           "build tool exited " + std::to_string(run.exit_code) +
               (tail.empty() ? "" : ": " + trim(tail))});
      clean = false;
    }
    report.success = clean;
    return report;
  }

  int build_count() const { return sync_->build_counter.load(); }

  // Physical library source files, sorted for determinism.
  std::vector<std::filesystem::path> library_files() const {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    if (fs::exists(root_module_path())) files.push_back(root_module_path());
    if (fs::exists(library_dir())) {
      for (const auto& entry : fs::recursive_directory_iterator(library_dir())) {
        if (entry.is_regular_file() && entry.path().extension() == ".lean")
          files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    return files;
  }

  // Comment- and string-aware inventory of declarations, sorry tokens, and
  // axiom names across all library source files.
  UnsoundnessCensus census() const {
    UnsoundnessCensus c;
    for (const char* k : {"def", "theorem", "lemma", "axiom", "instance", "abbrev",
                          "structure", "inductive"})
      c.declaration_counts[k] = 0;

    for (const auto& file : library_files()) {
      std::string text = read_file(file);
      std::string rel =
          std::filesystem::relative(file, cfg_.root).generic_string();
      // Physical line count: newline count, plus a trailing partial line.
      std::size_t newlines = std::count(text.begin(), text.end(), '\n');
      c.total_lines += newlines + (text.empty() || text.back() == '\n' ? 0 : 1);

      auto lexed = leanlex::lex(text, /*keep_comments=*/true);
      for (const auto& tok : lexed.tokens) {
        if (tok.kind == leanlex::Tok::keyword && tok.text == "sorry")
          c.sorries.push_back({rel, tok.line, tok.col});
      }
      auto scan = leanlex::scan_declarations(lexed, file.stem().string());
      for (const auto& d : scan.decls) {
        auto it = c.declaration_counts.find(d.keyword);
        if (it != c.declaration_counts.end()) ++it->second;
        if (d.keyword == "axiom") c.axioms.push_back({d.name, rel, d.start_line});
      }
    }
    return c;
  }

 private:
  explicit Workspace(WorkspaceConfig cfg) : cfg_(std::move(cfg)) {}

  void load_imports() {
    imports_.clear();
    if (!std::filesystem::exists(root_module_path())) return;
    std::string prefix = "import " + cfg_.library_name + ".Statements.";
    for (const auto& line : split_lines(read_file(root_module_path()))) {
      std::string t = trim(line);
      if (t.rfind(prefix, 0) == 0) imports_.insert(t.substr(prefix.size()));
    }
  }

  void write_root_imports() {
    std::lock_guard<std::mutex> lock(sync_->imports);
    write_root_imports_locked();
  }

  void write_root_imports_locked() {
    std::string content =
        "-- Root module for " + cfg_.library_name +
        "; one import per formalized statement.\n";
    for (const auto& id : imports_)  // std::set: sorted, deterministic
      content += "import " + cfg_.library_name + ".Statements." + id + "\n";
    write_file_atomic(root_module_path(), content);
  }

  void normalize_paths(std::vector<Diagnostic>& diagnostics) const {
    std::string root_prefix = cfg_.root.generic_string();
    if (!root_prefix.empty() && root_prefix.back() != '/') root_prefix += '/';
    for (auto& d : diagnostics) {
      if (d.file.rfind(root_prefix, 0) == 0) d.file.erase(0, root_prefix.size());
    }
  }

  void log_build(int index, const std::vector<std::string>& command,
                 const CommandResult& run) const {
    std::string header = "# command:";
    for (const auto& a : command) header += " " + a;
    header += "\n# exit: " + std::to_string(run.exit_code) +
              " timed_out: " + (run.timed_out ? std::string("true") : "false") +
              " duration_ms: " + std::to_string(run.duration_ms) + "\n";
    char name[32];
    std::snprintf(name, sizeof(name), "build-%06d.log", index);
    try {
      write_file_atomic(logs_dir() / name, header + run.output);
    } catch (const IoError&) {
      // Logging must never take the build down.
    }
  }

  // Sync state lives behind a pointer so Workspace stays movable out of
  // its factory functions.
  struct Sync {
    std::mutex imports;
    std::mutex build;
    std::atomic<int> build_counter{0};
  };

  WorkspaceConfig cfg_;
  std::set<std::string> imports_;
  std::unique_ptr<Sync> sync_ = std::make_unique<Sync>();
};

}  // namespace merlean
