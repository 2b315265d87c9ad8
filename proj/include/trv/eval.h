#pragma once

#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trv/term.h"

namespace trv {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A concrete tensor would exceed the interpreter's element budget.
class TooLarge : public EvalError {
 public:
  using EvalError::EvalError;
};

// Concrete valuation of free symbols and tensor contents.
struct Model {
  std::map<std::string, Value> symbols;
  std::function<std::optional<Value>(const std::string&, const std::vector<std::int64_t>&)> read;
};

// Evaluates a term under a model. Reductions are enumerated over their ranges.
Value evaluate(Term t, const Model& m);

Value reduction_identity(RedOp op, Sort s);
Value reduction_step(RedOp op, const Value& acc, const Value& x);

// Scalar arithmetic shared by both interpreters (Euclidean div/mod, x/0 = 0).
Value apply_kind(Kind k, const Value& a, const Value& b);

}  // namespace trv
