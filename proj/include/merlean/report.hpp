#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "merlean/errors.hpp"
#include "merlean/manifest.hpp"
#include "merlean/statements.hpp"
#include "merlean/util.hpp"
#include "merlean/workspace.hpp"

namespace merlean {

struct StatementEvent {
  std::string statement_id;
  StatementKind kind = StatementKind::definition;
  Outcome outcome = Outcome::proved;
  int compile_attempts = 1;  // every build invocation, all phases
  int attempts_main = 1;     // main-loop attempts, bounded by max_attempts
  int faithfulness_rejections = 0;
  int attempts_axiom = 0;
  std::int64_t wall_ms = 0;
  int declarations_added = 0;
  int axioms_added = 0;
};

inline std::vector<StatementEvent> events_from_manifest(const RunManifest& m) {
  std::vector<StatementEvent> events;
  events.reserve(m.results.size());
  for (const auto& r : m.results) {
    StatementEvent e;
    e.statement_id = r.statement_id;
    auto kind = kind_of_id(r.statement_id);
    e.kind = kind ? *kind : StatementKind::definition;
    e.outcome = r.outcome;
    e.compile_attempts = std::max(r.builds_total, 1);
    e.attempts_main = std::max(r.compile_attempts_main, 1);
    e.faithfulness_rejections = r.faithfulness_rejections;
    e.attempts_axiom = static_cast<int>(r.axiom_attempts.size());
    e.wall_ms = r.total_wall_ms;
    e.declarations_added = r.introduced_declarations;
    e.axioms_added = static_cast<int>(r.introduced_axioms.size()) +
                     (r.stub_axiom ? 1 : 0);
    events.push_back(std::move(e));
  }
  return events;
}

struct KindStats {
  int count = 0;
  double mean_wall_ms = 0.0;
  double mean_compiles = 0.0;
};

struct TypeStats {
  std::map<StatementKind, KindStats> per_kind;
  KindStats overall;
};

// Exact event-weighted means; rendering rounds times to 1 s and compile
// means to 0.1.
inline TypeStats aggregate_stats(const std::vector<StatementEvent>& events) {
  TypeStats stats;
  std::map<StatementKind, std::pair<long double, long double>> sums;  // wall, compiles
  long double wall_total = 0, compiles_total = 0;
  for (const auto& e : events) {
    auto& [wall, compiles] = sums[e.kind];
    wall += static_cast<long double>(e.wall_ms);
    compiles += static_cast<long double>(e.compile_attempts);
    stats.per_kind[e.kind].count += 1;
    wall_total += static_cast<long double>(e.wall_ms);
    compiles_total += static_cast<long double>(e.compile_attempts);
  }
  for (auto& [kind, ks] : stats.per_kind) {
    const auto& [wall, compiles] = sums[kind];
    ks.mean_wall_ms = static_cast<double>(wall / ks.count);
    ks.mean_compiles = static_cast<double>(compiles / ks.count);
  }
  stats.overall.count = static_cast<int>(events.size());
  if (!events.empty()) {
    stats.overall.mean_wall_ms = static_cast<double>(wall_total / events.size());
    stats.overall.mean_compiles = static_cast<double>(compiles_total / events.size());
  }
  return stats;
}

struct HistogramSpec {
  std::vector<std::pair<int, int>> bins = {{1, 5},   {6, 10},  {11, 15},
                                           {16, 20}, {21, 25}, {26, 30}};
  std::map<StatementKind, std::vector<int>> per_kind;
  std::vector<int> totals;
};

inline HistogramSpec default_histogram_spec(int max_attempts = 30) {
  HistogramSpec spec;
  spec.bins.clear();
  for (int lo = 1; lo <= max_attempts; lo += 5)
    spec.bins.push_back({lo, std::min(lo + 4, max_attempts)});
  return spec;
}

// Bins the main-loop attempt counts (the quantity bounded by max_attempts).
// An event outside every bin is an engine invariant violation.
inline HistogramSpec histogram(const std::vector<StatementEvent>& events,
                               HistogramSpec spec = {}) {
  spec.totals.assign(spec.bins.size(), 0);
  spec.per_kind.clear();
  for (const auto& e : events) {
    bool placed = false;
    for (std::size_t b = 0; b < spec.bins.size(); ++b) {
      if (e.attempts_main >= spec.bins[b].first && e.attempts_main <= spec.bins[b].second) {
        auto& row = spec.per_kind[e.kind];
        if (row.empty()) row.assign(spec.bins.size(), 0);
        row[b] += 1;
        spec.totals[b] += 1;
        placed = true;
        break;
      }
    }
    if (!placed)
      throw DataError("statement " + e.statement_id + " has " +
                      std::to_string(e.attempts_main) +
                      " attempts, outside every histogram bin");
  }
  return spec;
}

struct RunSummary {
  std::string label;
  int statements = 0;
  std::size_t lean_lines = 0;
  int declarations = 0;
  std::int64_t wall_ms = 0;
};

inline RunSummary summary_from_manifest(const std::string& label, const RunManifest& m,
                                        const UnsoundnessCensus* census = nullptr) {
  RunSummary s;
  s.label = label;
  s.statements = static_cast<int>(m.results.size());
  const UnsoundnessCensus* c = census ? census : (m.census ? &*m.census : nullptr);
  if (c) {
    s.lean_lines = c->total_lines;
    s.declarations = c->total_declarations();
  } else {
    for (const auto& r : m.results) s.declarations += r.introduced_declarations;
  }
  for (const auto& [phase, ms] : m.phase_wall_ms) s.wall_ms += ms;
  return s;
}

namespace report_detail {

inline std::string fixed1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

inline std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

inline std::string table(const std::vector<std::vector<std::string>>& rows) {
  if (rows.empty()) return "";
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (std::size_t i = 0; i < row.size(); ++i)
      widths[i] = std::max(widths[i], row[i].size());
  }
  std::string out;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) line += "  ";
      line += pad(row[i], widths[i]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

inline std::string kind_display(StatementKind k) {
  std::string name(kind_name(k));
  name[0] = static_cast<char>(name[0] - 'a' + 'A');
  return name;
}

}  // namespace report_detail

// Two tables mirroring the summary/statistics layout, plus the compile
// histogram and the census. Deterministic bytes; json is the canonical
// machine form.
inline std::string render_report(const std::vector<RunSummary>& summaries,
                                 const TypeStats& stats, const HistogramSpec& hist,
                                 const UnsoundnessCensus* census,
                                 const std::string& format) {
  using report_detail::fixed1;
  using report_detail::kind_display;
  using report_detail::table;

  if (format == "json") {
    json jsummaries = json::array();
    for (const auto& s : summaries) {
      jsummaries.push_back({{"label", s.label},
                            {"statements", s.statements},
                            {"lean_lines", s.lean_lines},
                            {"declarations", s.declarations},
                            {"wall_ms", s.wall_ms}});
    }
    json jper = json::object();
    for (const auto& [kind, ks] : stats.per_kind) {
      jper[std::string(kind_name(kind))] = {{"count", ks.count},
                                            {"mean_wall_ms", ks.mean_wall_ms},
                                            {"mean_compiles", ks.mean_compiles}};
    }
    json jbins = json::array();
    for (const auto& [lo, hi] : hist.bins) jbins.push_back({lo, hi});
    json jhist_kind = json::object();
    for (const auto& [kind, row] : hist.per_kind)
      jhist_kind[std::string(kind_name(kind))] = row;
    json doc{{"summaries", jsummaries},
             {"stats",
              {{"per_kind", jper},
               {"overall",
                {{"count", stats.overall.count},
                 {"mean_wall_ms", stats.overall.mean_wall_ms},
                 {"mean_compiles", stats.overall.mean_compiles}}}}},
             {"histogram",
              {{"bins", jbins}, {"per_kind", jhist_kind}, {"totals", hist.totals}}},
             {"census", census ? manifest_json::census_to_json(*census) : json(nullptr)}};
    return doc.dump(2) + "\n";
  }

  std::string out;
  out += "== Formalization summary ==\n";
  {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"Run", "Statements", "Lines of Lean", "Declarations", "Time"});
    int statements = 0, declarations = 0;
    std::size_t lines = 0;
    std::int64_t wall = 0;
    for (const auto& s : summaries) {
      rows.push_back({s.label, std::to_string(s.statements), std::to_string(s.lean_lines),
                      std::to_string(s.declarations), format_duration_ms(s.wall_ms)});
      statements += s.statements;
      lines += s.lean_lines;
      declarations += s.declarations;
      wall += s.wall_ms;
    }
    if (summaries.size() > 1)
      rows.push_back({"Total", std::to_string(statements), std::to_string(lines),
                      std::to_string(declarations), format_duration_ms(wall)});
    out += table(rows) + "\n";
  }

  out += "== Statistics by statement type ==\n";
  {
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"Type", "Count", "Avg. Time", "Avg. Compiles"});
    for (StatementKind kind : kAllKinds) {
      auto it = stats.per_kind.find(kind);
      if (it == stats.per_kind.end() || it->second.count == 0) continue;
      rows.push_back({kind_display(kind), std::to_string(it->second.count),
                      format_duration_ms(static_cast<std::int64_t>(it->second.mean_wall_ms)),
                      fixed1(it->second.mean_compiles)});
    }
    rows.push_back({"Total/Avg", std::to_string(stats.overall.count),
                    format_duration_ms(static_cast<std::int64_t>(stats.overall.mean_wall_ms)),
                    fixed1(stats.overall.mean_compiles)});
    out += table(rows) + "\n";
  }

  out += "== Compile attempts (main loop) ==\n";
  {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Type"};
    for (const auto& [lo, hi] : hist.bins)
      header.push_back(std::to_string(lo) + "-" + std::to_string(hi));
    rows.push_back(header);
    for (StatementKind kind : kAllKinds) {
      auto it = hist.per_kind.find(kind);
      if (it == hist.per_kind.end()) continue;
      std::vector<std::string> row{kind_display(kind)};
      for (int v : it->second) row.push_back(std::to_string(v));
      rows.push_back(row);
    }
    std::vector<std::string> row{"All"};
    for (int v : hist.totals) row.push_back(std::to_string(v));
    rows.push_back(row);
    out += table(rows) + "\n";
  }

  if (census) {
    out += "== Census ==\n";
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"lines", std::to_string(census->total_lines)});
    rows.push_back({"declarations", std::to_string(census->total_declarations())});
    for (const auto& [k, v] : census->declaration_counts)
      rows.push_back({"  " + k, std::to_string(v)});
    rows.push_back({"sorry", std::to_string(census->sorry_count())});
    std::string axioms;
    for (const auto& a : census->axioms) {
      if (!axioms.empty()) axioms += ", ";
      axioms += a.name;
    }
    rows.push_back({"axioms", std::to_string(census->axioms.size()) +
                                  (axioms.empty() ? "" : " (" + axioms + ")")});
    out += table(rows);
  }
  return out;
}

}  // namespace merlean
