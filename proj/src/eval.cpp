#include "trv/eval.h"

#include <limits>

namespace trv {

Value reduction_identity(RedOp op, Sort s) {
  switch (op) {
    case RedOp::Add: return Value::zero(s);
    case RedOp::Mul: return s == Sort::Real ? Value::of_real(Rational(1)) : Value::of_int(1);
    case RedOp::Max:
      return s == Sort::Real ? Value::of_real(Rational(std::numeric_limits<std::int64_t>::min() + 1))
                             : Value::of_int(std::numeric_limits<std::int64_t>::min());
    case RedOp::Min:
      return s == Sort::Real ? Value::of_real(Rational(std::numeric_limits<std::int64_t>::max()))
                             : Value::of_int(std::numeric_limits<std::int64_t>::max());
    case RedOp::And: return Value::of_bool(true);
    case RedOp::Or: return Value::of_bool(false);
  }
  return Value::zero(s);
}

Value reduction_step(RedOp op, const Value& acc, const Value& x) {
  switch (op) {
    case RedOp::Add: return apply_kind(Kind::Add, acc, x);
    case RedOp::Mul: return apply_kind(Kind::Mul, acc, x);
    case RedOp::Max: return apply_kind(Kind::Max, acc, x);
    case RedOp::Min: return apply_kind(Kind::Min, acc, x);
    case RedOp::And: return Value::of_bool(acc.b && x.b);
    case RedOp::Or: return Value::of_bool(acc.b || x.b);
  }
  return acc;
}

Value apply_kind(Kind k, const Value& a, const Value& b) {
  if (a.sort != b.sort) throw EvalError("sort mismatch in arithmetic");
  switch (k) {
    case Kind::Eq: return Value::of_bool(a == b);
    case Kind::Ne: return Value::of_bool(a != b);
    case Kind::Lt: return Value::of_bool(a < b);
    case Kind::Le: return Value::of_bool(!(b < a));
    case Kind::Gt: return Value::of_bool(b < a);
    case Kind::Ge: return Value::of_bool(!(a < b));
    default: break;
  }
  if (a.sort == Sort::Bool) {
    switch (k) {
      case Kind::And: return Value::of_bool(a.b && b.b);
      case Kind::Or: return Value::of_bool(a.b || b.b);
      default: throw EvalError("arithmetic on bool");
    }
  }
  if (a.sort == Sort::Int) {
    switch (k) {
      case Kind::Add: return Value::of_int(a.i + b.i);
      case Kind::Sub: return Value::of_int(a.i - b.i);
      case Kind::Mul: return Value::of_int(a.i * b.i);
      case Kind::Div: return Value::of_int(euclid_div(a.i, b.i));
      case Kind::Mod: return Value::of_int(euclid_mod(a.i, b.i));
      case Kind::Min: return Value::of_int(std::min(a.i, b.i));
      case Kind::Max: return Value::of_int(std::max(a.i, b.i));
      default: throw EvalError("bad int op");
    }
  }
  switch (k) {
    case Kind::Add: return Value::of_real(a.r + b.r);
    case Kind::Sub: return Value::of_real(a.r - b.r);
    case Kind::Mul: return Value::of_real(a.r * b.r);
    case Kind::RDiv: return Value::of_real(b.r.numerator() == 0 ? Rational(0) : a.r / b.r);
    case Kind::Min: return Value::of_real(std::min(a.r, b.r));
    case Kind::Max: return Value::of_real(std::max(a.r, b.r));
    default: throw EvalError("bad real op");
  }
}

namespace {

struct Evaluator {
  const Model& m;
  std::map<Term, Value> bound;

  Value go(Term t) {
    switch (t->kind) {
      case Kind::IntLit: return Value::of_int(t->ival);
      case Kind::RealLit: return Value::of_real(t->rval);
      case Kind::BoolLit: return Value::of_bool(t->ival != 0);
      case Kind::Sym: {
        auto b = bound.find(t);
        if (b != bound.end()) return b->second;
        auto s = m.symbols.find(t->name);
        if (s == m.symbols.end()) throw EvalError("unbound symbol " + t->name);
        return s->second;
      }
      case Kind::Neg: {
        Value v = go(t->kids[0]);
        return v.sort == Sort::Int ? Value::of_int(-v.i) : Value::of_real(-v.r);
      }
      case Kind::Not: return Value::of_bool(!go(t->kids[0]).b);
      case Kind::And:
        for (Term k : t->kids)
          if (!go(k).b) return Value::of_bool(false);
        return Value::of_bool(true);
      case Kind::Or:
        for (Term k : t->kids)
          if (go(k).b) return Value::of_bool(true);
        return Value::of_bool(false);
      case Kind::Ite: return go(t->kids[0]).b ? go(t->kids[1]) : go(t->kids[2]);
      case Kind::Read: {
        std::vector<std::int64_t> idx;
        for (Term k : t->kids) idx.push_back(go(k).i);
        if (!m.read) throw EvalError("no tensor contents for " + t->name);
        auto v = m.read(t->name, idx);
        if (!v) throw EvalError("read of " + t->name + " outside its box");
        return *v;
      }
      case Kind::Red: {
        std::size_t n = t->red_arity();
        std::vector<std::int64_t> hi(n);
        for (std::size_t k = 0; k < n; ++k) hi[k] = go(t->red_range(k)).i;
        Value acc = reduction_identity(t->red_op(), t->sort);
        for (std::size_t k = 0; k < n; ++k)
          if (hi[k] <= 0) return acc;
        std::vector<std::int64_t> cur(n, 0);
        std::map<Term, Value> saved = bound;
        while (true) {
          for (std::size_t k = 0; k < n; ++k) bound[t->red_index(k)] = Value::of_int(cur[k]);
          acc = reduction_step(t->red_op(), acc, go(t->red_body()));
          bool done = true;
          for (std::size_t k = n; k-- > 0;) {
            if (++cur[k] < hi[k]) {
              done = false;
              break;
            }
            cur[k] = 0;
          }
          if (done) {
            bound = saved;
            return acc;
          }
        }
      }
      case Kind::RDiv:
      case Kind::Add:
      case Kind::Sub:
      case Kind::Mul:
      case Kind::Div:
      case Kind::Mod:
      case Kind::Min:
      case Kind::Max:
      case Kind::Eq:
      case Kind::Ne:
      case Kind::Lt:
      case Kind::Le:
      case Kind::Gt:
      case Kind::Ge: return apply_kind(t->kind, go(t->kids[0]), go(t->kids[1]));
    }
    throw EvalError("unknown term kind");
  }
};

}  // namespace

Value evaluate(Term t, const Model& m) {
  Evaluator e{m, {}};
  return e.go(t);
}

}  // namespace trv
