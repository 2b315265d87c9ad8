#pragma once

#include <functional>
#include <string>
#include <vector>

#include "trv/instantiate.h"

namespace trv {

using ValueFn = std::function<Term(const AggMap& access)>;

struct SymTensor {
  Layout axes;
  AggMap shape;
  Sort type = Sort::Int;
  ValueFn value;
};

struct SymResult {
  SymTensor tensor;
  std::vector<Term> validity;  // conjunction of fold atoms
  Term valid(TermBank& bank) const { return bank.and_(validity); }
};

// `tag` distinguishes fresh reduction indices generated for different sides.
SymResult sym_eval(const InstRule& rule, const InstExprPtr& e, const std::string& tag = "");

// Shape only; same structural checks as sym_eval.
AggMap shape_of(const InstRule& rule, const InstExprPtr& e);

// Access whose entries are fresh symbols `<prefix>.<named axis>.<task>`.
AggMap symbolic_access(const InstRule& rule, const Layout& axes, const std::string& prefix = "acc");

// 0 <= A < S, pointwise.
Term access_in_range(TermBank& bank, const AggMap& access, const AggMap& shape);

// Reduction-element normalization, to fixpoint:
//   v * Red+_X f -> Red+_X (v * f)
//   Red+_X f * Red+_Y g -> Red+_{X,Y} (f * g)
//   Red_X (Red_Y f) -> Red_{X,Y} f   (same operator)
Term normalize_reductions(TermBank& bank, Term t);

}  // namespace trv
