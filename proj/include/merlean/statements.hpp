#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "merlean/errors.hpp"
#include "merlean/util.hpp"

namespace merlean {

using json = nlohmann::json;

enum class StatementKind {
  definition,
  theorem,
  lemma,
  proposition,
  corollary,
  remark,
};

inline constexpr StatementKind kAllKinds[] = {
    StatementKind::definition, StatementKind::theorem,
    StatementKind::lemma,      StatementKind::proposition,
    StatementKind::corollary,  StatementKind::remark,
};

inline std::string_view kind_name(StatementKind k) {
  switch (k) {
    case StatementKind::definition: return "definition";
    case StatementKind::theorem: return "theorem";
    case StatementKind::lemma: return "lemma";
    case StatementKind::proposition: return "proposition";
    case StatementKind::corollary: return "corollary";
    case StatementKind::remark: return "remark";
  }
  return "definition";
}

inline std::optional<StatementKind> kind_from_name(std::string_view s) {
  for (StatementKind k : kAllKinds)
    if (kind_name(k) == s) return k;
  return std::nullopt;
}

// Id tags: Def_1, Thm_2, Lem_3, Prop_4, Cor_5, Rem_6.
inline std::string_view kind_tag(StatementKind k) {
  switch (k) {
    case StatementKind::definition: return "Def";
    case StatementKind::theorem: return "Thm";
    case StatementKind::lemma: return "Lem";
    case StatementKind::proposition: return "Prop";
    case StatementKind::corollary: return "Cor";
    case StatementKind::remark: return "Rem";
  }
  return "Def";
}

// Kind implied by an id of the form <Tag>_<positive integer>, or nullopt
// when the id does not match the closed grammar.
inline std::optional<StatementKind> kind_of_id(std::string_view id) {
  std::size_t us = id.find('_');
  if (us == std::string_view::npos || us + 1 >= id.size()) return std::nullopt;
  std::string_view tag = id.substr(0, us);
  std::string_view num = id.substr(us + 1);
  if (num[0] == '0') return std::nullopt;  // positive, no leading zeros
  for (char c : num)
    if (c < '0' || c > '9') return std::nullopt;
  for (StatementKind k : kAllKinds)
    if (kind_tag(k) == tag) return k;
  return std::nullopt;
}

struct Statement {
  std::string id;
  StatementKind kind = StatementKind::definition;
  std::string text;
  std::vector<std::string> dependencies;
  std::optional<std::string> proof_sketch;
  std::optional<std::pair<std::size_t, std::size_t>> source_span;

  bool operator==(const Statement&) const = default;
};

struct StatementSet {
  std::string source_fingerprint;
  std::vector<Statement> statements;

  bool operator==(const StatementSet&) const = default;
};

enum class IssueSeverity { error, warning };

struct ValidationIssue {
  IssueSeverity severity = IssueSeverity::error;
  std::string statement_id;  // or "<set>" for set-level issues
  std::string message;

  bool operator==(const ValidationIssue&) const = default;
};

struct ValidationReport {
  bool ok = true;
  std::vector<ValidationIssue> issues;

  bool has_errors() const {
    return std::any_of(issues.begin(), issues.end(), [](const auto& i) {
      return i.severity == IssueSeverity::error;
    });
  }
};

inline std::string render_report(const ValidationReport& report) {
  if (report.issues.empty()) return "ok: no issues\n";
  std::string out;
  for (const auto& i : report.issues) {
    out += (i.severity == IssueSeverity::error ? "error" : "warning");
    out += " [" + i.statement_id + "]: " + i.message + "\n";
  }
  return out;
}

namespace detail {

inline void require_field(const json& obj, const char* field, std::size_t index) {
  if (!obj.contains(field))
    throw SchemaError("missing required field '" + std::string(field) +
                      "' in statement " + std::to_string(index));
}

inline Statement parse_statement_record(const json& obj, std::size_t index) {
  if (!obj.is_object())
    throw SchemaError("statement " + std::to_string(index) + " is not an object");
  require_field(obj, "id", index);
  require_field(obj, "kind", index);
  require_field(obj, "text", index);
  require_field(obj, "dependencies", index);

  Statement s;
  if (!obj["id"].is_string())
    throw SchemaError("field 'id' of statement " + std::to_string(index) +
                      " is not a string");
  s.id = obj["id"].get<std::string>();

  if (!obj["kind"].is_string())
    throw SchemaError("field 'kind' of statement " + std::to_string(index) +
                      " is not a string");
  auto kind = kind_from_name(obj["kind"].get<std::string>());
  if (!kind)
    throw SchemaError("unknown kind '" + obj["kind"].get<std::string>() +
                      "' in statement " + std::to_string(index));
  s.kind = *kind;

  auto id_kind = kind_of_id(s.id);
  if (!id_kind)
    throw SchemaError("bad id pattern '" + s.id + "' in statement " +
                      std::to_string(index));
  if (*id_kind != s.kind)
    throw SchemaError("kind/id mismatch for '" + s.id + "': id implies " +
                      std::string(kind_name(*id_kind)) + ", record says " +
                      std::string(kind_name(s.kind)));

  if (!obj["text"].is_string())
    throw SchemaError("field 'text' of statement " + std::to_string(index) +
                      " is not a string");
  s.text = obj["text"].get<std::string>();
  if (trim(s.text).empty())
    throw SchemaError("empty text in statement '" + s.id + "'");

  if (!obj["dependencies"].is_array())
    throw SchemaError("field 'dependencies' of statement " +
                      std::to_string(index) + " is not an array");
  std::unordered_set<std::string> seen;
  for (const auto& d : obj["dependencies"]) {
    if (!d.is_string())
      throw SchemaError("non-string dependency in statement '" + s.id + "'");
    std::string dep = d.get<std::string>();
    if (dep == s.id)
      throw SchemaError("statement '" + s.id + "' depends on itself");
    if (!seen.insert(dep).second)
      throw SchemaError("duplicate dependency '" + dep + "' in statement '" +
                        s.id + "'");
    s.dependencies.push_back(std::move(dep));
  }

  if (obj.contains("proof_sketch") && !obj["proof_sketch"].is_null()) {
    if (!obj["proof_sketch"].is_string())
      throw SchemaError("field 'proof_sketch' of statement '" + s.id +
                        "' is not a string or null");
    s.proof_sketch = obj["proof_sketch"].get<std::string>();
  }

  if (obj.contains("source_span") && !obj["source_span"].is_null()) {
    const auto& span = obj["source_span"];
    if (!span.is_array() || span.size() != 2 || !span[0].is_number_unsigned() ||
        !span[1].is_number_unsigned())
      throw SchemaError("field 'source_span' of statement '" + s.id +
                        "' is not a [start,end] pair");
    s.source_span = {span[0].get<std::size_t>(), span[1].get<std::size_t>()};
  }
  return s;
}

}  // namespace detail

// Parses the statements.json form. Per-statement invariants are enforced
// here; set-level invariants (unique ids, acyclicity, ordering) are the
// job of validate(). source_fingerprint may be absent: backend replies are
// parsed through this same operation before the extractor attaches one.
inline StatementSet parse_statement_set(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("statement set parse error: ") + e.what(),
                     e.byte);
  }
  if (!doc.is_object()) throw SchemaError("statement set root is not an object");
  if (!doc.contains("statements"))
    throw SchemaError("missing required field 'statements' in statement set");
  if (!doc["statements"].is_array())
    throw SchemaError("field 'statements' is not an array");

  StatementSet set;
  if (doc.contains("source_fingerprint") && !doc["source_fingerprint"].is_null()) {
    if (!doc["source_fingerprint"].is_string())
      throw SchemaError("field 'source_fingerprint' is not a string");
    set.source_fingerprint = doc["source_fingerprint"].get<std::string>();
  }
  std::size_t index = 0;
  for (const auto& rec : doc["statements"])
    set.statements.push_back(detail::parse_statement_record(rec, index++));
  return set;
}

inline json statement_to_json(const Statement& s) {
  json obj;
  obj["id"] = s.id;
  obj["kind"] = std::string(kind_name(s.kind));
  obj["text"] = s.text;
  obj["dependencies"] = s.dependencies;
  obj["proof_sketch"] = s.proof_sketch ? json(*s.proof_sketch) : json(nullptr);
  obj["source_span"] =
      s.source_span ? json({s.source_span->first, s.source_span->second})
                    : json(nullptr);
  return obj;
}

// Canonical bytes: sorted keys, 2-space indent, \n line ends, trailing
// newline. Deterministic, so replay tests can compare bytes directly.
inline std::string serialize_statement_set(const StatementSet& set) {
  json doc;
  doc["source_fingerprint"] = set.source_fingerprint;
  doc["statements"] = json::array();
  for (const auto& s : set.statements)
    doc["statements"].push_back(statement_to_json(s));
  return doc.dump(2) + "\n";
}

namespace detail {

// One cycle reachable within `deps`, as a closed id walk (first == last).
// Restricted to indices in `alive`.
inline std::vector<std::string> find_cycle(
    const std::vector<Statement>& statements,
    const std::unordered_map<std::string, std::size_t>& index_of,
    const std::vector<bool>& alive) {
  enum class Mark { unseen, active, done };
  std::vector<Mark> mark(statements.size(), Mark::unseen);
  std::vector<std::size_t> stack;

  for (std::size_t root = 0; root < statements.size(); ++root) {
    if (!alive[root] || mark[root] != Mark::unseen) continue;
    // Iterative DFS over dependency edges.
    std::vector<std::pair<std::size_t, std::size_t>> frames{{root, 0}};
    mark[root] = Mark::active;
    stack.push_back(root);
    while (!frames.empty()) {
      auto& [node, edge] = frames.back();
      const auto& deps = statements[node].dependencies;
      if (edge >= deps.size()) {
        mark[node] = Mark::done;
        stack.pop_back();
        frames.pop_back();
        continue;
      }
      auto it = index_of.find(deps[edge++]);
      if (it == index_of.end() || !alive[it->second]) continue;
      std::size_t next = it->second;
      if (mark[next] == Mark::active) {
        // Found a back edge; slice the cycle out of the stack.
        std::vector<std::string> cycle;
        auto pos = std::find(stack.begin(), stack.end(), next);
        for (auto i = pos; i != stack.end(); ++i)
          cycle.push_back(statements[*i].id);
        cycle.push_back(statements[next].id);
        return cycle;
      }
      if (mark[next] == Mark::unseen) {
        mark[next] = Mark::active;
        stack.push_back(next);
        frames.emplace_back(next, 0);
      }
    }
  }
  return {};
}

}  // namespace detail

// Deterministic topological order: Kahn's algorithm taking the smallest
// original index among ready statements, which yields the unique order
// that is stable with respect to the input list. Throws CycleError with a
// witnessed cycle when the dependency relation is cyclic.
inline std::vector<std::string> topological_order(const StatementSet& set) {
  const auto& stmts = set.statements;
  std::unordered_map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < stmts.size(); ++i)
    index_of.emplace(stmts[i].id, i);  // first occurrence wins

  std::vector<std::size_t> indegree(stmts.size(), 0);
  std::vector<std::vector<std::size_t>> dependents(stmts.size());
  for (std::size_t i = 0; i < stmts.size(); ++i) {
    for (const auto& dep : stmts[i].dependencies) {
      auto it = index_of.find(dep);
      if (it == index_of.end() || it->second == i) continue;  // dangling/self
      ++indegree[i];
      dependents[it->second].push_back(i);
    }
  }

  std::set<std::size_t> ready;
  for (std::size_t i = 0; i < stmts.size(); ++i)
    if (indegree[i] == 0) ready.insert(i);

  std::vector<std::string> order;
  order.reserve(stmts.size());
  std::vector<bool> remaining(stmts.size(), true);
  while (!ready.empty()) {
    std::size_t i = *ready.begin();
    ready.erase(ready.begin());
    remaining[i] = false;
    order.push_back(stmts[i].id);
    for (std::size_t d : dependents[i])
      if (--indegree[d] == 0) ready.insert(d);
  }
  if (order.size() != stmts.size()) {
    auto cycle = detail::find_cycle(stmts, index_of, remaining);
    std::string msg = "dependency cycle:";
    for (const auto& id : cycle) msg += " " + id;
    throw CycleError(msg, cycle);
  }
  return order;
}

// Set-level checks. All problems are report entries; nothing throws.
inline ValidationReport validate(const StatementSet& set) {
  ValidationReport report;
  const auto& stmts = set.statements;

  std::unordered_map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < stmts.size(); ++i) {
    auto [it, inserted] = index_of.emplace(stmts[i].id, i);
    if (!inserted)
      report.issues.push_back({IssueSeverity::error, stmts[i].id,
                               "duplicate id (also at index " +
                                   std::to_string(it->second) + ")"});
  }

  for (std::size_t i = 0; i < stmts.size(); ++i) {
    for (const auto& dep : stmts[i].dependencies) {
      auto it = index_of.find(dep);
      if (it == index_of.end()) {
        report.issues.push_back({IssueSeverity::error, stmts[i].id,
                                 "dangling dependency '" + dep + "'"});
      } else if (it->second > i) {
        report.issues.push_back(
            {IssueSeverity::error, stmts[i].id,
             "order violates dependencies: '" + dep + "' appears later"});
      }
    }
  }

  // Cycle scan over the whole set (list-order violations already flag the
  // forward edges, but a cycle is a distinct, stronger defect).
  std::vector<bool> alive(stmts.size(), true);
  for (;;) {
    auto cycle = detail::find_cycle(stmts, index_of, alive);
    if (cycle.empty()) break;
    std::string msg = "dependency cycle:";
    for (const auto& id : cycle) msg += " " + id;
    report.issues.push_back({IssueSeverity::error, "<set>", msg});
    // Remove the witnessed cycle's nodes and look again, so independent
    // cycles each get one entry.
    for (const auto& id : cycle) {
      auto it = index_of.find(id);
      if (it != index_of.end()) alive[it->second] = false;
    }
  }

  for (const auto& s : stmts) {
    bool wants_sketch =
        s.kind == StatementKind::theorem || s.kind == StatementKind::lemma;
    if (wants_sketch && (!s.proof_sketch || trim(*s.proof_sketch).empty()))
      report.issues.push_back(
          {IssueSeverity::warning, s.id, "empty proof_sketch"});
  }

  report.ok = !report.has_errors();
  return report;
}

// Rebuilds the set with statements arranged in topological order.
inline StatementSet reorder_topologically(const StatementSet& set) {
  auto order = topological_order(set);
  std::unordered_map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < set.statements.size(); ++i)
    index_of.emplace(set.statements[i].id, i);
  StatementSet out;
  out.source_fingerprint = set.source_fingerprint;
  out.statements.reserve(set.statements.size());
  for (const auto& id : order)
    out.statements.push_back(set.statements[index_of.at(id)]);
  return out;
}

}  // namespace merlean
