#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "trv/ir.h"

namespace trv::testing {

// A rule whose LHS applies one operator to declared inputs.
struct OpCase {
  std::string name;
  std::string json;
};
const std::vector<OpCase>& operator_cases();

RewriteRule parse_rule_text(const std::string& text);

struct OracleStats {
  int valid = 0;     // cases where both evaluators accepted and were compared
  int rejected = 0;  // cases where both evaluators rejected
  int failures = 0;
  std::string first_failure;
};

// Random ranks <= 3, sizes <= 5, attributes in [-2, 5], values in [-4, 4].
// Compares the symbolic value and validity of the LHS against the concrete
// interpreter until `want_valid` accepted cases have been compared.
OracleStats semantics_oracle(const RewriteRule& rule, int want_valid, std::uint64_t seed);

std::string corpus_dir();
nlohmann::json expected_corpus();
RewriteRule corpus_rule(const std::string& name);

}  // namespace trv::testing
