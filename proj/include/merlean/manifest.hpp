#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "merlean/errors.hpp"
#include "merlean/util.hpp"
#include "merlean/workspace.hpp"

namespace merlean {

enum class Outcome { proved, axiomatized, failed };

inline std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::proved: return "proved";
    case Outcome::axiomatized: return "axiomatized";
    case Outcome::failed: return "failed";
  }
  return "failed";
}

inline std::optional<Outcome> outcome_from_name(std::string_view s) {
  if (s == "proved") return Outcome::proved;
  if (s == "axiomatized") return Outcome::axiomatized;
  if (s == "failed") return Outcome::failed;
  return std::nullopt;
}

enum class FaithfulnessState { not_run, accepted, rejected };

inline std::string_view faithfulness_name(FaithfulnessState f) {
  switch (f) {
    case FaithfulnessState::not_run: return "not_run";
    case FaithfulnessState::accepted: return "accepted";
    case FaithfulnessState::rejected: return "rejected";
  }
  return "not_run";
}

inline std::optional<FaithfulnessState> faithfulness_from_name(std::string_view s) {
  if (s == "not_run") return FaithfulnessState::not_run;
  if (s == "accepted") return FaithfulnessState::accepted;
  if (s == "rejected") return FaithfulnessState::rejected;
  return std::nullopt;
}

struct AttemptRecord {
  int attempt_index = 1;  // 1-based within its phase
  std::string code_hash;
  bool build_success = false;
  int error_count = 0;    // diagnostics attributed to this statement's module
  int warning_count = 0;
  FaithfulnessState faithfulness = FaithfulnessState::not_run;
  std::int64_t wall_ms = 0;

  bool operator==(const AttemptRecord&) const = default;
};

struct StatementResult {
  std::string statement_id;
  Outcome outcome = Outcome::failed;
  std::vector<AttemptRecord> attempts;        // main loop, incl. faithfulness rebuilds
  std::vector<AttemptRecord> axiom_attempts;  // tracked separately
  std::string final_code_path;                // workspace-relative
  std::vector<std::string> introduced_axioms;
  std::optional<std::string> stub_axiom;      // set only when outcome = failed
  int introduced_declarations = 0;
  std::int64_t total_wall_ms = 0;
  int compile_attempts_main = 0;   // bounded by max_attempts
  int faithfulness_rejections = 0;
  int builds_total = 0;            // every build invocation, stub included

  bool operator==(const StatementResult&) const = default;
};

struct RunManifest {
  static constexpr int kSchemaVersion = 1;
  int schema_version = kSchemaVersion;
  std::string status = "running";  // running | complete | aborted
  json config_snapshot = json::object();
  std::vector<StatementResult> results;
  std::vector<std::string> warnings;
  std::map<std::string, std::int64_t> phase_wall_ms;
  std::optional<UnsoundnessCensus> census;
};

namespace manifest_json {

inline json attempt_to_json(const AttemptRecord& a) {
  return json{{"attempt_index", a.attempt_index},
              {"code_hash", a.code_hash},
              {"build_success", a.build_success},
              {"errors", a.error_count},
              {"warnings", a.warning_count},
              {"faithfulness", std::string(faithfulness_name(a.faithfulness))},
              {"wall_ms", a.wall_ms}};
}

inline json result_to_json(const StatementResult& r) {
  json attempts = json::array();
  for (const auto& a : r.attempts) attempts.push_back(attempt_to_json(a));
  json axiom_attempts = json::array();
  for (const auto& a : r.axiom_attempts) axiom_attempts.push_back(attempt_to_json(a));
  return json{{"statement_id", r.statement_id},
              {"outcome", std::string(outcome_name(r.outcome))},
              {"attempts", attempts},
              {"axiom_attempts", axiom_attempts},
              {"final_code_path", r.final_code_path},
              {"introduced_axioms", r.introduced_axioms},
              {"stub_axiom", r.stub_axiom ? json(*r.stub_axiom) : json(nullptr)},
              {"introduced_declarations", r.introduced_declarations},
              {"total_wall_ms", r.total_wall_ms},
              {"compile_attempts_main", r.compile_attempts_main},
              {"faithfulness_rejections", r.faithfulness_rejections},
              {"builds_total", r.builds_total}};
}

inline json census_to_json(const UnsoundnessCensus& c) {
  json sorries = json::array();
  for (const auto& s : c.sorries)
    sorries.push_back({{"file", s.file}, {"line", s.line}, {"column", s.column}});
  json axioms = json::array();
  for (const auto& a : c.axioms)
    axioms.push_back({{"name", a.name}, {"file", a.file}, {"line", a.line}});
  return json{{"sorries", sorries},
              {"axioms", axioms},
              {"declaration_counts", c.declaration_counts},
              {"total_lines", c.total_lines}};
}

inline UnsoundnessCensus census_from_json(const json& j, const std::string& where) {
  auto fail = [&](const std::string& field) -> Error {
    return Error("manifest field '" + where + "." + field + "' missing or invalid");
  };
  UnsoundnessCensus c;
  if (!j.is_object()) throw fail("");
  if (!j.contains("sorries") || !j["sorries"].is_array()) throw fail("sorries");
  for (const auto& s : j["sorries"])
    c.sorries.push_back({s.at("file").get<std::string>(), s.at("line").get<int>(),
                         s.at("column").get<int>()});
  if (!j.contains("axioms") || !j["axioms"].is_array()) throw fail("axioms");
  for (const auto& a : j["axioms"])
    c.axioms.push_back({a.at("name").get<std::string>(), a.at("file").get<std::string>(),
                        a.at("line").get<int>()});
  if (!j.contains("declaration_counts") || !j["declaration_counts"].is_object())
    throw fail("declaration_counts");
  for (const auto& [k, v] : j["declaration_counts"].items())
    c.declaration_counts[k] = v.get<int>();
  if (!j.contains("total_lines")) throw fail("total_lines");
  c.total_lines = j["total_lines"].get<std::size_t>();
  return c;
}

inline AttemptRecord attempt_from_json(const json& j, const std::string& where) {
  auto fail = [&](const std::string& field) -> Error {
    return Error("manifest field '" + where + "." + field + "' missing or invalid");
  };
  if (!j.is_object()) throw fail("");
  AttemptRecord a;
  if (!j.contains("attempt_index") || !j["attempt_index"].is_number_integer())
    throw fail("attempt_index");
  a.attempt_index = j["attempt_index"].get<int>();
  if (!j.contains("code_hash") || !j["code_hash"].is_string()) throw fail("code_hash");
  a.code_hash = j["code_hash"].get<std::string>();
  if (!j.contains("build_success") || !j["build_success"].is_boolean())
    throw fail("build_success");
  a.build_success = j["build_success"].get<bool>();
  a.error_count = j.value("errors", 0);
  a.warning_count = j.value("warnings", 0);
  auto f = faithfulness_from_name(j.value("faithfulness", "not_run"));
  if (!f) throw fail("faithfulness");
  a.faithfulness = *f;
  a.wall_ms = j.value("wall_ms", std::int64_t{0});
  return a;
}

inline StatementResult result_from_json(const json& j, std::size_t index) {
  std::string where = "results[" + std::to_string(index) + "]";
  auto fail = [&](const std::string& field) -> Error {
    return Error("manifest field '" + where + "." + field + "' missing or invalid");
  };
  if (!j.is_object()) throw fail("");
  StatementResult r;
  if (!j.contains("statement_id") || !j["statement_id"].is_string())
    throw fail("statement_id");
  r.statement_id = j["statement_id"].get<std::string>();
  if (!j.contains("outcome") || !j["outcome"].is_string()) throw fail("outcome");
  auto o = outcome_from_name(j["outcome"].get<std::string>());
  if (!o) throw fail("outcome");
  r.outcome = *o;
  if (!j.contains("attempts") || !j["attempts"].is_array()) throw fail("attempts");
  std::size_t ai = 0;
  for (const auto& a : j["attempts"])
    r.attempts.push_back(attempt_from_json(a, where + ".attempts[" + std::to_string(ai++) + "]"));
  ai = 0;
  for (const auto& a : j.value("axiom_attempts", json::array()))
    r.axiom_attempts.push_back(
        attempt_from_json(a, where + ".axiom_attempts[" + std::to_string(ai++) + "]"));
  r.final_code_path = j.value("final_code_path", "");
  if (j.contains("introduced_axioms")) {
    if (!j["introduced_axioms"].is_array()) throw fail("introduced_axioms");
    for (const auto& n : j["introduced_axioms"])
      r.introduced_axioms.push_back(n.get<std::string>());
  }
  if (j.contains("stub_axiom") && !j["stub_axiom"].is_null())
    r.stub_axiom = j["stub_axiom"].get<std::string>();
  r.introduced_declarations = j.value("introduced_declarations", 0);
  r.total_wall_ms = j.value("total_wall_ms", std::int64_t{0});
  r.compile_attempts_main = j.value("compile_attempts_main", 0);
  r.faithfulness_rejections = j.value("faithfulness_rejections", 0);
  r.builds_total = j.value("builds_total", 0);
  return r;
}

}  // namespace manifest_json

inline json manifest_to_json(const RunManifest& m) {
  json results = json::array();
  for (const auto& r : m.results) results.push_back(manifest_json::result_to_json(r));
  json j{{"schema_version", m.schema_version},
         {"status", m.status},
         {"config", m.config_snapshot},
         {"results", results},
         {"warnings", m.warnings},
         {"phase_wall_ms", m.phase_wall_ms},
         {"census", m.census ? manifest_json::census_to_json(*m.census) : json(nullptr)}};
  return j;
}

// Atomic write of the canonical form.
inline void save_manifest(const std::filesystem::path& path, const RunManifest& m) {
  write_file_atomic(path, manifest_to_json(m).dump(2) + "\n");
}

// Validates the schema version and field shapes; errors name the first
// invalid field.
inline RunManifest load_manifest(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(std::string("manifest parse error: ") + e.what());
  }
  if (!j.is_object()) throw Error("manifest field '<root>' missing or invalid");
  RunManifest m;
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
    throw Error("manifest field 'schema_version' missing or invalid");
  m.schema_version = j["schema_version"].get<int>();
  if (m.schema_version != RunManifest::kSchemaVersion)
    throw Error("manifest field 'schema_version' has unsupported value " +
                std::to_string(m.schema_version));
  if (!j.contains("status") || !j["status"].is_string())
    throw Error("manifest field 'status' missing or invalid");
  m.status = j["status"].get<std::string>();
  if (m.status != "running" && m.status != "complete" && m.status != "aborted")
    throw Error("manifest field 'status' has unknown value '" + m.status + "'");
  m.config_snapshot = j.value("config", json::object());
  if (!j.contains("results") || !j["results"].is_array())
    throw Error("manifest field 'results' missing or invalid");
  std::size_t i = 0;
  for (const auto& r : j["results"])
    m.results.push_back(manifest_json::result_from_json(r, i++));
  for (const auto& w : j.value("warnings", json::array()))
    m.warnings.push_back(w.get<std::string>());
  if (j.contains("phase_wall_ms") && j["phase_wall_ms"].is_object()) {
    for (const auto& [k, v] : j["phase_wall_ms"].items())
      m.phase_wall_ms[k] = v.get<std::int64_t>();
  }
  if (j.contains("census") && !j["census"].is_null())
    m.census = manifest_json::census_from_json(j["census"], "census");
  return m;
}

}  // namespace merlean
