#include "trv/report.h"

#include <sstream>

namespace trv {

using nlohmann::json;

void to_json(json& j, const RClassBound& b) {
  j = json{{"bound", b.bound},
           {"access_counts", b.access_counts},
           {"condition_count", b.condition_count},
           {"tensors", b.tensors},
           {"conditions", b.conditions}};
}

void from_json(const json& j, RClassBound& b) {
  j.at("bound").get_to(b.bound);
  j.at("access_counts").get_to(b.access_counts);
  j.at("condition_count").get_to(b.condition_count);
  j.at("tensors").get_to(b.tensors);
  j.at("conditions").get_to(b.conditions);
}

void to_json(json& j, const BoundReport& b) { j = json{{"rule", b.rule}, {"classes", b.classes}}; }

void from_json(const json& j, BoundReport& b) {
  j.at("rule").get_to(b.rule);
  j.at("classes").get_to(b.classes);
}

void to_json(json& j, const Counterexample& c) {
  json entries = json::array();
  for (auto& e : c.entries) entries.push_back(json{{"tensor", e.tensor}, {"index", e.index}, {"value", e.value}});
  j = json{{"ranks", c.ranks},     {"obligation", c.obligation}, {"symbols", c.symbols},
           {"entries", entries},   {"access", c.access},         {"detail", c.detail},
           {"confirmed", c.confirmed}};
  j["lhs_value"] = c.lhs_value ? json(*c.lhs_value) : json(nullptr);
  j["rhs_value"] = c.rhs_value ? json(*c.rhs_value) : json(nullptr);
}

void from_json(const json& j, Counterexample& c) {
  j.at("ranks").get_to(c.ranks);
  j.at("obligation").get_to(c.obligation);
  j.at("symbols").get_to(c.symbols);
  c.entries.clear();
  for (auto& e : j.at("entries"))
    c.entries.push_back(TensorEntry{e.at("tensor"), e.at("index").get<std::vector<std::int64_t>>(), e.at("value")});
  j.at("access").get_to(c.access);
  j.at("detail").get_to(c.detail);
  j.at("confirmed").get_to(c.confirmed);
  c.lhs_value = j.at("lhs_value").is_null() ? std::nullopt : std::optional<std::string>(j.at("lhs_value"));
  c.rhs_value = j.at("rhs_value").is_null() ? std::nullopt : std::optional<std::string>(j.at("rhs_value"));
}

void to_json(json& j, const ObligationResult& o) {
  j = json{{"name", o.name}, {"status", o.status}, {"ms", o.ms}, {"detail", o.detail}};
}

void from_json(const json& j, ObligationResult& o) {
  j.at("name").get_to(o.name);
  j.at("status").get_to(o.status);
  j.at("ms").get_to(o.ms);
  j.at("detail").get_to(o.detail);
}

void to_json(json& j, const TaskResult& t) {
  j = json{{"ranks", t.ranks},   {"name", t.name},   {"outcome", outcome_name(t.outcome)},
           {"reason", t.reason}, {"obligations", t.obligations}, {"ms", t.ms}};
  j["counterexample"] = t.counterexample ? json(*t.counterexample) : json(nullptr);
}

void from_json(const json& j, TaskResult& t) {
  j.at("ranks").get_to(t.ranks);
  j.at("name").get_to(t.name);
  t.outcome = parse_outcome(j.at("outcome").get<std::string>()).value();
  j.at("reason").get_to(t.reason);
  j.at("obligations").get_to(t.obligations);
  j.at("ms").get_to(t.ms);
  t.counterexample = j.at("counterexample").is_null() ? std::nullopt
                                                      : std::optional<Counterexample>(j.at("counterexample"));
}

void to_json(json& j, const OracleSummary& o) {
  j = json{{"ranks", o.ranks}, {"trials", o.trials}, {"mismatches", o.mismatches}, {"exhausted", o.exhausted}};
}

void from_json(const json& j, OracleSummary& o) {
  j.at("ranks").get_to(o.ranks);
  j.at("trials").get_to(o.trials);
  j.at("mismatches").get_to(o.mismatches);
  j.at("exhausted").get_to(o.exhausted);
}

void to_json(json& j, const Verdict& v) {
  j = json{{"rule", v.rule},     {"verdict", outcome_name(v.overall)}, {"reason", v.reason},
           {"bounds", v.bounds}, {"tasks", v.tasks},                   {"conclusive", v.conclusive},
           {"oracle", v.oracle}, {"ms", v.ms}};
}

void from_json(const json& j, Verdict& v) {
  j.at("rule").get_to(v.rule);
  v.overall = parse_outcome(j.at("verdict").get<std::string>()).value();
  j.at("reason").get_to(v.reason);
  j.at("bounds").get_to(v.bounds);
  j.at("tasks").get_to(v.tasks);
  j.at("conclusive").get_to(v.conclusive);
  j.at("oracle").get_to(v.oracle);
  j.at("ms").get_to(v.ms);
}

void to_json(json& j, const RuleReport& r) {
  j = json{{"file", r.file}, {"error", r.error}};
  j["verdict"] = r.verdict ? json(*r.verdict) : json(nullptr);
  j["bounds"] = r.bounds ? json(*r.bounds) : json(nullptr);
}

void from_json(const json& j, RuleReport& r) {
  j.at("file").get_to(r.file);
  j.at("error").get_to(r.error);
  r.verdict = j.at("verdict").is_null() ? std::nullopt : std::optional<Verdict>(j.at("verdict"));
  r.bounds = j.at("bounds").is_null() ? std::nullopt : std::optional<BoundReport>(j.at("bounds"));
}

void to_json(json& j, const Report& r) {
  j = json{{"command", r.command}, {"rules", r.rules}, {"exit_code", r.exit_code}};
}

void from_json(const json& j, Report& r) {
  j.at("command").get_to(r.command);
  j.at("rules").get_to(r.rules);
  j.at("exit_code").get_to(r.exit_code);
}

std::string print_report(const Report& r) { return json(r).dump(2); }

Report parse_report(const std::string& text) { return json::parse(text).get<Report>(); }

namespace {

std::string ranks_text(const RankMap& m) {
  std::string s;
  for (auto& [c, k] : m) s += (s.empty() ? "" : ",") + c + "=" + std::to_string(k);
  return s.empty() ? "-" : s;
}

void bounds_text(std::ostringstream& os, const BoundReport& b) {
  for (auto& [c, cb] : b.classes) {
    os << "  " << c << ": bound " << cb.bound << " (accesses";
    if (cb.access_counts.empty()) os << " none";
    for (auto& [t, n] : cb.access_counts) os << " " << t << ":" << n;
    os << "; conditions " << cb.condition_count << ")\n";
  }
}

}  // namespace

std::string format_text(const Report& r) {
  std::ostringstream os;
  for (auto& rr : r.rules) {
    if (!rr.error.empty()) {
      os << rr.file << ": error: " << rr.error << "\n";
      continue;
    }
    if (rr.bounds) {
      os << rr.bounds->rule << "\n";
      bounds_text(os, *rr.bounds);
    }
    if (rr.verdict) {
      const Verdict& v = *rr.verdict;
      os << v.rule << ": " << outcome_name(v.overall);
      if (!v.reason.empty()) os << " (" << v.reason << ")";
      if (!v.conclusive) os << " [non-conclusive: ranks below the inferred bound]";
      os << "  " << v.tasks.size() << " task(s), " << static_cast<long>(v.ms) << " ms\n";
      bounds_text(os, v.bounds);
      for (auto& t : v.tasks) {
        os << "  task " << ranks_text(t.ranks) << ": " << outcome_name(t.outcome);
        if (!t.reason.empty()) os << " (" << t.reason << ")";
        os << "\n";
        if (t.counterexample) {
          const Counterexample& c = *t.counterexample;
          os << "    counterexample [" << c.obligation << "] " << (c.confirmed ? "confirmed" : "suspect") << ": "
             << c.detail << "\n";
          if (!c.symbols.empty()) {
            os << "     ";
            for (auto& [n, x] : c.symbols) os << " " << n << "=" << x;
            os << "\n";
          }
          if (!c.access.empty()) {
            os << "      access";
            for (auto& [n, x] : c.access) os << " " << n << "=" << x;
            if (c.lhs_value) os << "  lhs=" << *c.lhs_value;
            if (c.rhs_value) os << "  rhs=" << *c.rhs_value;
            os << "\n";
          }
        }
      }
      for (auto& o : v.oracle)
        os << "  oracle " << ranks_text(o.ranks) << ": " << o.trials << " trials, " << o.mismatches << " mismatches\n";
    }
  }
  return os.str();
}

}  // namespace trv
