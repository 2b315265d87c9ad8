#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "trv/eval.h"
#include "trv/term.h"

namespace trv {

// Renders a term as SMT-LIB text. Throws ResidualReduction on reductions.
std::string lower(Term t);
std::string smt_symbol(const std::string& name);

// Parsed s-expression (solver output).
struct SExpr {
  std::string atom;  // empty for lists
  std::vector<SExpr> list;
  bool is_atom() const { return !atom.empty(); }
  std::string str() const;
};
std::vector<SExpr> parse_sexprs(const std::string& text);

struct FunInterp {
  std::vector<std::string> params;
  std::string sort;
  SExpr body;
};

struct SmtModel {
  std::map<std::string, FunInterp> defs;  // includes nullary constants
  Value get(const std::string& name, const std::vector<Value>& args = {}) const;
  bool has(const std::string& name) const { return defs.count(name) > 0; }
  // Adapts to the term evaluator; missing entries read as zero.
  Model to_model(const std::map<std::string, Sort>& tensor_sorts) const;
};

SmtModel parse_model(const std::string& text);

struct Query {
  std::string name;
  std::vector<Term> assumptions;
  Term goal = nullptr;
  std::vector<Term> exists;  // goal is existentially closed over these symbols
};

// Logic, declarations in sorted order, assumptions, negated goal, check-sat, get-model.
std::string build_script(const Query& q);
std::string select_logic(const std::vector<Term>& terms);

enum class SolverStatus { Unsat, Sat, Unknown, Timeout, Error };
const char* status_name(SolverStatus s);

struct SolverConfig {
  std::string solver = "z3";
  int timeout_ms = 10000;
};

struct SolverResult {
  SolverStatus status = SolverStatus::Error;
  SmtModel model;
  std::string raw;
  std::string script;
  double ms = 0;
};

// Solver binary: config.solver, unless TRV_SOLVER is set in the environment.
std::string resolve_solver(const SolverConfig& cfg);

// Runs `<solver> <script-file>`; throws SolverSpawnError when the binary cannot start.
SolverResult run_script(const std::string& script, const SolverConfig& cfg);

// Runs `script` once per process for a given solver and timeout; later calls
// with the same text return the first answer with ms = 0.
SolverResult run_cached(const std::string& script, const SolverConfig& cfg);

// Query with every free symbol renamed to `<map>.<axis>!<k>`, k counting first
// occurrences, so queries that differ only in task or named-axis numbering
// print to the same script. `original` maps the new names back.
struct CanonicalQuery {
  Query query;
  std::map<std::string, std::string> original;
};
CanonicalQuery canonical_query(TermBank& bank, const Query& q);

// Renames model entries through `names`; entries not in the map are kept.
SmtModel rename_model(const SmtModel& m, const std::map<std::string, std::string>& names);

// Proves `goal` under `assumptions`: unsat means proven.
SolverResult check(const Query& q, const SolverConfig& cfg);

}  // namespace trv
