#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "trv/ir.h"

namespace trv {

struct RClassBound {
  int bound = 1;
  std::map<std::string, int> access_counts;  // tensor -> distinct accesses
  int condition_count = 0;
  std::set<std::string> tensors;
  std::vector<std::string> conditions;  // printed canonical atoms
  bool operator==(const RClassBound&) const = default;
};

struct BoundReport {
  std::string rule;
  std::map<std::string, RClassBound> classes;
  bool operator==(const BoundReport&) const = default;
};

using RankMap = std::map<std::string, int>;

std::set<std::string> tensors_with_rclass(const RewriteRule& rule, const std::string& rclass);
int num_tensor_access(const RewriteRule& rule, const std::string& tensor, int probe_rank = 1);
int num_conds(const RewriteRule& rule, const std::string& rclass, int probe_rank = 1);
int infer_bound(const RewriteRule& rule, const std::string& rclass);

// All RClasses at once; `probe_rank` exists for the rank-independence check.
BoundReport analyze(const RewriteRule& rule, int probe_rank = 1);

// Cartesian product {1..k_1} x ... x {1..k_p}, in lexicographic order.
std::vector<RankMap> task_set(const BoundReport& report);

std::string task_name(const RankMap& ranks);

}  // namespace trv
