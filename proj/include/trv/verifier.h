#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "trv/analysis.h"
#include "trv/concrete.h"
#include "trv/instantiate.h"
#include "trv/smt.h"

namespace trv {

enum class Outcome { Verified, Invalid, Unknown, Unsupported };
const char* outcome_name(Outcome o);
std::optional<Outcome> parse_outcome(const std::string& s);

struct TensorEntry {
  std::string tensor;
  std::vector<std::int64_t> index;
  std::string value;
  bool operator==(const TensorEntry&) const = default;
};

struct Counterexample {
  RankMap ranks;
  std::string obligation;               // shape, access, rhs-valid, value, axes
  std::map<std::string, std::string> symbols;  // attribute/size symbol -> value
  std::vector<TensorEntry> entries;
  std::map<std::string, std::int64_t> access;  // named axis -> position
  std::optional<std::string> lhs_value, rhs_value;
  std::string detail;
  bool confirmed = false;  // oracle replay reproduced the failure
  bool operator==(const Counterexample&) const = default;
};

struct ObligationResult {
  std::string name;
  std::string status;  // unsat, sat, unknown, timeout, solver-error, syntactic, vacuous, skipped
  double ms = 0;
  std::string detail;
  bool operator==(const ObligationResult&) const = default;
};

struct TaskResult {
  RankMap ranks;
  std::string name;
  Outcome outcome = Outcome::Unknown;
  std::string reason;
  std::vector<ObligationResult> obligations;
  std::optional<Counterexample> counterexample;
  double ms = 0;
  bool operator==(const TaskResult&) const = default;
};

struct OracleSummary {
  RankMap ranks;
  int trials = 0;
  int mismatches = 0;
  bool exhausted = false;
  bool operator==(const OracleSummary&) const = default;
};

struct Verdict {
  std::string rule;
  Outcome overall = Outcome::Unknown;
  std::string reason;
  BoundReport bounds;
  std::vector<TaskResult> tasks;
  bool conclusive = true;
  std::vector<OracleSummary> oracle;
  double ms = 0;
  bool operator==(const Verdict&) const = default;
};

struct VerifyConfig {
  SolverConfig solver;
  int jobs = 1;
  std::optional<std::string> dump_dir;
  std::map<std::string, int> rank_override;
  bool oracle_check = false;
  bool all_tasks = false;  // keep going after the first Invalid task
  std::uint64_t seed = 1;
  std::vector<std::pair<std::string, std::string>> aliases;  // tensor pairs sharing one function
};

Verdict verify(const RewriteRule& rule, const VerifyConfig& cfg);

// One task at fixed ranks.
TaskResult verify_task(const RewriteRule& rule, const RankMap& ranks, const VerifyConfig& cfg);

// Result of pairing reductions across the two sides.
struct Discharge {
  enum class Status { Proven, Failed, Unknown } status = Status::Proven;
  std::string reason;
  std::vector<ObligationResult> obligations;
};

// Proves lhs = rhs for terms that may contain reductions, under `assumptions`.
// Obligations are named `<prefix>.<...>`. Never reports a disproof.
Discharge discharge_reductions(const InstRule& inst, Term lhs, Term rhs, const std::vector<Term>& assumptions,
                               const VerifyConfig& cfg, const std::string& prefix);

// Reads a concrete counterexample out of a solver model and replays it through
// the concrete interpreter; `confirmed` is set when the replay agrees.
Counterexample extract_counterexample(const SmtModel& model, const InstRule& inst, const std::string& obligation,
                                      const AggMap& access);

}  // namespace trv
