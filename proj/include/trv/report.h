#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "trv/verifier.h"

namespace trv {

struct RuleReport {
  std::string file;
  std::optional<Verdict> verdict;
  std::optional<BoundReport> bounds;  // `bounds` command
  std::string error;                  // tool error, if any
  bool operator==(const RuleReport&) const = default;
};

struct Report {
  std::string command;
  std::vector<RuleReport> rules;
  int exit_code = 0;
  bool operator==(const Report&) const = default;
};

void to_json(nlohmann::json& j, const RClassBound& b);
void from_json(const nlohmann::json& j, RClassBound& b);
void to_json(nlohmann::json& j, const BoundReport& b);
void from_json(const nlohmann::json& j, BoundReport& b);
void to_json(nlohmann::json& j, const Counterexample& c);
void from_json(const nlohmann::json& j, Counterexample& c);
void to_json(nlohmann::json& j, const ObligationResult& o);
void from_json(const nlohmann::json& j, ObligationResult& o);
void to_json(nlohmann::json& j, const TaskResult& t);
void from_json(const nlohmann::json& j, TaskResult& t);
void to_json(nlohmann::json& j, const OracleSummary& o);
void from_json(const nlohmann::json& j, OracleSummary& o);
void to_json(nlohmann::json& j, const Verdict& v);
void from_json(const nlohmann::json& j, Verdict& v);
void to_json(nlohmann::json& j, const RuleReport& r);
void from_json(const nlohmann::json& j, RuleReport& r);
void to_json(nlohmann::json& j, const Report& r);
void from_json(const nlohmann::json& j, Report& r);

std::string print_report(const Report& r);  // JSON text
Report parse_report(const std::string& text);

// Human-readable summary.
std::string format_text(const Report& r);

}  // namespace trv
