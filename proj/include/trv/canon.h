#pragma once

#include <map>
#include <vector>

#include "trv/term.h"

namespace trv {

// Syntactic normal form: integer arithmetic becomes a sorted polynomial with
// integer coefficients, integer comparisons become `p >= 0` / `p = 0` / `p != 0`,
// and commutative connectives are sorted. No solver, no case analysis.
Term canonicalize(TermBank& bank, Term t);

// Renames reduction indices positionally so alpha-equivalent reductions coincide.
Term alpha_normalize(TermBank& bank, Term t);

// Solves top-level equalities of the form `p = 0` where some symbol occurs
// linearly with a unit coefficient. Returns substitutions in application order.
std::vector<std::pair<Term, Term>> solve_equalities(TermBank& bank, const std::vector<Term>& facts);

Term apply_substitutions(TermBank& bank, Term t, const std::vector<std::pair<Term, Term>>& subs);

}  // namespace trv
