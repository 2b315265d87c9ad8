#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "trv/ir.h"

namespace trv {

struct InstTensor {
  std::string id;
  Sort type = Sort::Int;
  AggMap shape;
};

struct InstHint {
  Term relation = nullptr;
  std::vector<Term> index_symbols;
};

struct Instantiation {
  std::string task;
  std::map<std::string, int> ranks;
  Layout expansion;                                           // aggregated axis -> named axes
  std::map<std::string, std::string> parent;                  // named axis -> aggregated axis
  std::map<std::pair<std::string, std::string>, Term> symbols;  // (map, named axis) -> symbol
  // Positional bijection between two aggregated axes of one RClass.
  std::map<std::string, std::string> map_axes(const std::string& from, const std::string& to) const;
};

struct InstRule {
  std::shared_ptr<TermBank> bank;
  std::string name;
  InstExprPtr lhs, rhs;
  Term pre = nullptr;
  std::map<std::string, InstTensor> env;
  std::vector<InstHint> hints;
  Instantiation inst;
  std::map<std::string, std::string> axis_rclass;  // named axis -> rclass ("" for singleton axes)
  std::map<std::string, bool> singleton;           // aggregated axis -> declared singleton
};

std::string named_axis_id(const std::string& agg, int k);
std::string symbol_name(const std::string& map, const std::string& named_axis, const std::string& task);

// ranks: RClass -> rank (>= 1). `task` tags every fresh symbol.
InstRule instantiate(const RewriteRule& rule, const std::map<std::string, int>& ranks, const std::string& task,
                     std::shared_ptr<TermBank> bank = nullptr);

}  // namespace trv
