#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "trv/eval.h"
#include "trv/instantiate.h"

namespace trv {

using Index = std::map<std::string, std::int64_t>;  // named axis -> position

struct ConcreteTensor {
  Layout axes;
  std::vector<std::string> order;     // named axes, row-major order
  std::vector<std::int64_t> sizes;    // aligned with order
  Sort type = Sort::Int;
  std::vector<Value> data;

  static ConcreteTensor make(const Layout& axes, const Index& sizes, Sort type, const Value& fill);

  std::int64_t size(const std::string& named) const;
  Index size_map() const;
  std::size_t count() const { return data.size(); }
  bool contains(const Index& idx) const;
  const Value& at(const Index& idx) const;
  Value& at(const Index& idx);
  std::optional<Value> get(const std::vector<std::int64_t>& idx) const;  // positional, bounds-checked
  void for_each(const std::function<void(const Index&)>& f) const;
  bool operator==(const ConcreteTensor& o) const;
  std::string str() const;
};

void for_each_index(const std::vector<std::string>& order, const std::vector<std::int64_t>& sizes,
                    const std::function<void(const Index&)>& f);

class ValidityViolation : public std::runtime_error {
 public:
  explicit ValidityViolation(const std::string& atom) : std::runtime_error("validity violated: " + atom), atom_(atom) {}
  const std::string& atom() const { return atom_; }

 private:
  std::string atom_;
};

using Env = std::map<std::string, ConcreteTensor>;

// Runs `e` on concrete tensors; `attrs` binds every size/attribute symbol.
ConcreteTensor eval_concrete(const InstRule& rule, const InstExprPtr& e, const Env& env, const Model& attrs);

// Model whose tensor reads come from `env`.
Model model_with_env(const std::map<std::string, Value>& symbols, const Env& env);

// ---- differential testing ----

struct FuzzOptions {
  std::map<std::string, int> ranks;
  int trials = 200;
  std::uint64_t seed = 1;
  std::int64_t size_cap = 4;
  std::int64_t value_cap = 4;
  int budget_factor = 50;
  std::size_t max_elements = 100'000;  // per tensor; larger samples are rejected
  bool shrink = true;
  bool stop_on_mismatch = false;
};

struct Mismatch {
  std::map<std::string, Value> symbols;
  Env inputs;
  Index access;
  std::optional<Value> lhs_value, rhs_value;
  std::string reason;  // "value", "shape", "rhs-invalid", "axes"
};

struct FuzzReport {
  std::string rule;
  std::map<std::string, int> ranks;
  int trials = 0;      // accepted samples compared
  int attempts = 0;    // samples drawn including rejections
  int mismatches = 0;
  bool exhausted = false;
  std::optional<Mismatch> first;
};

FuzzReport differential_test(const RewriteRule& rule, const FuzzOptions& opts);

// Compares both sides on one fully concrete instantiation; nullopt when equal.
// Throws ValidityViolation if the precondition or LHS validity fails.
std::optional<Mismatch> compare_sides(const InstRule& inst, const std::map<std::string, Value>& symbols,
                                      const Env& inputs);

}  // namespace trv
