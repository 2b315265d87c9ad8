#include "trv/term.h"

#include <algorithm>
#include <set>
#include <sstream>

namespace trv {

const char* sort_name(Sort s) {
  switch (s) {
    case Sort::Int: return "int";
    case Sort::Real: return "real";
    case Sort::Bool: return "bool";
  }
  return "?";
}

std::optional<Sort> parse_sort(const std::string& s) {
  if (s == "int") return Sort::Int;
  if (s == "real") return Sort::Real;
  if (s == "bool") return Sort::Bool;
  return std::nullopt;
}

const char* red_op_name(RedOp op) {
  switch (op) {
    case RedOp::Add: return "add";
    case RedOp::Mul: return "mul";
    case RedOp::Max: return "max";
    case RedOp::Min: return "min";
    case RedOp::And: return "and";
    case RedOp::Or: return "or";
  }
  return "?";
}

std::optional<RedOp> parse_red_op(const std::string& s) {
  for (RedOp op : {RedOp::Add, RedOp::Mul, RedOp::Max, RedOp::Min, RedOp::And, RedOp::Or})
    if (s == red_op_name(op)) return op;
  return std::nullopt;
}

Value Value::zero(Sort s) {
  switch (s) {
    case Sort::Int: return of_int(0);
    case Sort::Real: return of_real(Rational(0));
    case Sort::Bool: return of_bool(false);
  }
  return of_int(0);
}

bool Value::operator==(const Value& o) const {
  if (sort != o.sort) return false;
  switch (sort) {
    case Sort::Int: return i == o.i;
    case Sort::Real: return r == o.r;
    case Sort::Bool: return b == o.b;
  }
  return false;
}

bool Value::operator<(const Value& o) const {
  if (sort != o.sort) return sort < o.sort;
  switch (sort) {
    case Sort::Int: return i < o.i;
    case Sort::Real: return r < o.r;
    case Sort::Bool: return b < o.b;
  }
  return false;
}

std::string Value::str() const {
  switch (sort) {
    case Sort::Int: return std::to_string(i);
    case Sort::Real:
      if (r.denominator() == 1) return std::to_string(r.numerator());
      return std::to_string(r.numerator()) + "/" + std::to_string(r.denominator());
    case Sort::Bool: return b ? "true" : "false";
  }
  return "?";
}

std::int64_t euclid_div(std::int64_t a, std::int64_t b) {
  if (b == 0) return 0;
  std::int64_t r = euclid_mod(a, b);
  return (a - r) / b;
}

std::int64_t euclid_mod(std::int64_t a, std::int64_t b) {
  if (b == 0) return 0;
  std::int64_t m = b < 0 ? -b : b;
  std::int64_t r = a % m;
  return r < 0 ? r + m : r;
}

namespace {

std::uint64_t fnv(std::uint64_t h, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) {
    h ^= (v >> (8 * k)) & 0xff;
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv(std::uint64_t h, const std::string& s) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return fnv(h, s.size());
}

std::uint64_t structural_hash(const Node& n) {
  std::uint64_t h = 1469598103934665603ULL;
  h = fnv(h, static_cast<std::uint64_t>(n.kind));
  h = fnv(h, static_cast<std::uint64_t>(n.sort));
  h = fnv(h, static_cast<std::uint64_t>(n.ival));
  h = fnv(h, static_cast<std::uint64_t>(n.rval.numerator()));
  h = fnv(h, static_cast<std::uint64_t>(n.rval.denominator()));
  h = fnv(h, n.name);
  h = fnv(h, n.axis);
  h = fnv(h, static_cast<std::uint64_t>(n.role));
  for (Term k : n.kids) h = fnv(h, k->shash);
  return h;
}

bool is_int_lit(Term t, std::int64_t v) { return t->kind == Kind::IntLit && t->ival == v; }
bool is_zero(Term t) {
  return is_int_lit(t, 0) || (t->kind == Kind::RealLit && t->rval.numerator() == 0);
}
bool is_one(Term t) {
  return is_int_lit(t, 1) || (t->kind == Kind::RealLit && t->rval.numerator() == t->rval.denominator());
}

Value lit_value(Term t) {
  switch (t->kind) {
    case Kind::IntLit: return Value::of_int(t->ival);
    case Kind::RealLit: return Value::of_real(t->rval);
    case Kind::BoolLit: return Value::of_bool(t->ival != 0);
    default: throw TypeError("not a literal");
  }
}

}  // namespace

int term_compare(Term a, Term b) {
  if (a == b) return 0;
  if (a->shash != b->shash) return a->shash < b->shash ? -1 : 1;
  if (a->kind != b->kind) return a->kind < b->kind ? -1 : 1;
  if (a->sort != b->sort) return a->sort < b->sort ? -1 : 1;
  if (a->ival != b->ival) return a->ival < b->ival ? -1 : 1;
  if (a->rval != b->rval) return a->rval < b->rval ? -1 : 1;
  if (int c = a->name.compare(b->name)) return c < 0 ? -1 : 1;
  if (int c = a->axis.compare(b->axis)) return c < 0 ? -1 : 1;
  if (a->role != b->role) return a->role < b->role ? -1 : 1;
  if (a->kids.size() != b->kids.size()) return a->kids.size() < b->kids.size() ? -1 : 1;
  for (std::size_t k = 0; k < a->kids.size(); ++k)
    if (int c = term_compare(a->kids[k], b->kids[k])) return c;
  return 0;
}

bool TermBank::KeyEq::operator()(const Node* a, const Node* b) const {
  return a->kind == b->kind && a->sort == b->sort && a->ival == b->ival && a->rval == b->rval &&
         a->name == b->name && a->axis == b->axis && a->role == b->role && a->kids == b->kids;
}

Term TermBank::intern(Node n) {
  n.shash = structural_hash(n);
  std::lock_guard<std::mutex> lock(mu_);
  auto it = table_.find(&n);
  if (it != table_.end()) return it->second;
  nodes_.push_back(std::move(n));
  const Node* p = &nodes_.back();
  table_.emplace(p, p);
  return p;
}

Term TermBank::int_lit(std::int64_t v) {
  Node n{Kind::IntLit, Sort::Int};
  n.ival = v;
  return intern(std::move(n));
}

Term TermBank::real_lit(Rational v) {
  Node n{Kind::RealLit, Sort::Real};
  n.rval = v;
  return intern(std::move(n));
}

Term TermBank::bool_lit(bool v) {
  Node n{Kind::BoolLit, Sort::Bool};
  n.ival = v ? 1 : 0;
  return intern(std::move(n));
}

Term TermBank::lit(const Value& v) {
  switch (v.sort) {
    case Sort::Int: return int_lit(v.i);
    case Sort::Real: return real_lit(v.r);
    case Sort::Bool: return bool_lit(v.b);
  }
  return int_lit(0);
}

Term TermBank::sym(const std::string& name, Sort s, const std::string& axis, Role role) {
  Node n{Kind::Sym, s};
  n.name = name;
  n.axis = axis;
  n.role = role;
  return intern(std::move(n));
}

Term TermBank::arith(Kind k, Term a, Term b) {
  if (a->sort != b->sort) throw TypeError("arithmetic on mismatched sorts: " + to_string(a) + ", " + to_string(b));
  if (a->sort == Sort::Bool) throw TypeError("arithmetic on bool: " + to_string(a));
  if ((k == Kind::Div || k == Kind::Mod) && a->sort != Sort::Int) throw TypeError("div/mod needs int");
  if (k == Kind::RDiv && a->sort != Sort::Real) throw TypeError("rdiv needs real");
  if (a->is_lit() && b->is_lit()) {
    Value x = lit_value(a), y = lit_value(b);
    if (a->sort == Sort::Int) {
      switch (k) {
        case Kind::Add: return int_lit(x.i + y.i);
        case Kind::Sub: return int_lit(x.i - y.i);
        case Kind::Mul: return int_lit(x.i * y.i);
        case Kind::Div: return int_lit(euclid_div(x.i, y.i));
        case Kind::Mod: return int_lit(euclid_mod(x.i, y.i));
        case Kind::Min: return int_lit(std::min(x.i, y.i));
        case Kind::Max: return int_lit(std::max(x.i, y.i));
        default: break;
      }
    } else {
      switch (k) {
        case Kind::Add: return real_lit(x.r + y.r);
        case Kind::Sub: return real_lit(x.r - y.r);
        case Kind::Mul: return real_lit(x.r * y.r);
        case Kind::RDiv: return real_lit(y.r.numerator() == 0 ? Rational(0) : x.r / y.r);
        case Kind::Min: return real_lit(std::min(x.r, y.r));
        case Kind::Max: return real_lit(std::max(x.r, y.r));
        default: break;
      }
    }
  }
  switch (k) {
    case Kind::Add:
      if (is_zero(a)) return b;
      if (is_zero(b)) return a;
      break;
    case Kind::Sub:
      if (is_zero(b)) return a;
      if (a == b) return zero(a->sort);
      break;
    case Kind::Mul:
      if (is_one(a)) return b;
      if (is_one(b)) return a;
      if (is_zero(a)) return a;
      if (is_zero(b)) return b;
      break;
    case Kind::Div:
    case Kind::RDiv:
      if (is_one(b)) return a;
      break;
    case Kind::Mod:
      if (is_one(b)) return int_lit(0);
      break;
    case Kind::Min:
    case Kind::Max:
      if (a == b) return a;
      break;
    default: break;
  }
  Node n{k, a->sort};
  n.kids = {a, b};
  return intern(std::move(n));
}

Term TermBank::add(Term a, Term b) { return arith(Kind::Add, a, b); }
Term TermBank::sub(Term a, Term b) { return arith(Kind::Sub, a, b); }
Term TermBank::mul(Term a, Term b) { return arith(Kind::Mul, a, b); }
Term TermBank::div(Term a, Term b) { return arith(Kind::Div, a, b); }
Term TermBank::mod(Term a, Term b) { return arith(Kind::Mod, a, b); }
Term TermBank::rdiv(Term a, Term b) { return arith(Kind::RDiv, a, b); }
Term TermBank::min(Term a, Term b) { return arith(Kind::Min, a, b); }
Term TermBank::max(Term a, Term b) { return arith(Kind::Max, a, b); }

Term TermBank::neg(Term a) {
  if (a->sort == Sort::Bool) throw TypeError("neg on bool");
  if (a->kind == Kind::IntLit) return int_lit(-a->ival);
  if (a->kind == Kind::RealLit) return real_lit(-a->rval);
  if (a->kind == Kind::Neg) return a->kids[0];
  Node n{Kind::Neg, a->sort};
  n.kids = {a};
  return intern(std::move(n));
}

Term TermBank::cmp(Kind k, Term a, Term b) {
  if (a->sort != b->sort) throw TypeError("comparison on mismatched sorts: " + to_string(a) + ", " + to_string(b));
  if (a->sort == Sort::Bool && k != Kind::Eq && k != Kind::Ne) throw TypeError("ordering on bool");
  if (a->is_lit() && b->is_lit()) {
    Value x = lit_value(a), y = lit_value(b);
    switch (k) {
      case Kind::Eq: return bool_lit(x == y);
      case Kind::Ne: return bool_lit(x != y);
      case Kind::Lt: return bool_lit(x < y);
      case Kind::Le: return bool_lit(!(y < x));
      case Kind::Gt: return bool_lit(y < x);
      case Kind::Ge: return bool_lit(!(x < y));
      default: break;
    }
  }
  if (a == b) return bool_lit(k == Kind::Eq || k == Kind::Le || k == Kind::Ge);
  Node n{k, Sort::Bool};
  n.kids = {a, b};
  return intern(std::move(n));
}

Term TermBank::eq(Term a, Term b) { return cmp(Kind::Eq, a, b); }
Term TermBank::ne(Term a, Term b) { return cmp(Kind::Ne, a, b); }
Term TermBank::lt(Term a, Term b) { return cmp(Kind::Lt, a, b); }
Term TermBank::le(Term a, Term b) { return cmp(Kind::Le, a, b); }
Term TermBank::gt(Term a, Term b) { return cmp(Kind::Gt, a, b); }
Term TermBank::ge(Term a, Term b) { return cmp(Kind::Ge, a, b); }

Term TermBank::and_(std::vector<Term> xs) {
  std::vector<Term> out;
  std::set<Term> seen;
  std::function<bool(Term)> push = [&](Term t) {
    if (t->sort != Sort::Bool) throw TypeError("and on non-bool: " + to_string(t));
    if (t->is_true()) return true;
    if (t->is_false()) return false;
    if (t->kind == Kind::And) {
      for (Term k : t->kids)
        if (!push(k)) return false;
      return true;
    }
    if (seen.insert(t).second) out.push_back(t);
    return true;
  };
  for (Term t : xs)
    if (!push(t)) return bool_lit(false);
  if (out.empty()) return bool_lit(true);
  if (out.size() == 1) return out[0];
  Node n{Kind::And, Sort::Bool};
  n.kids = std::move(out);
  return intern(std::move(n));
}

Term TermBank::or_(std::vector<Term> xs) {
  std::vector<Term> out;
  std::set<Term> seen;
  std::function<bool(Term)> push = [&](Term t) {
    if (t->sort != Sort::Bool) throw TypeError("or on non-bool: " + to_string(t));
    if (t->is_false()) return true;
    if (t->is_true()) return false;
    if (t->kind == Kind::Or) {
      for (Term k : t->kids)
        if (!push(k)) return false;
      return true;
    }
    if (seen.insert(t).second) out.push_back(t);
    return true;
  };
  for (Term t : xs)
    if (!push(t)) return bool_lit(true);
  if (out.empty()) return bool_lit(false);
  if (out.size() == 1) return out[0];
  Node n{Kind::Or, Sort::Bool};
  n.kids = std::move(out);
  return intern(std::move(n));
}

Term TermBank::not_(Term a) {
  if (a->sort != Sort::Bool) throw TypeError("not on non-bool");
  if (a->kind == Kind::BoolLit) return bool_lit(a->ival == 0);
  if (a->kind == Kind::Not) return a->kids[0];
  Node n{Kind::Not, Sort::Bool};
  n.kids = {a};
  return intern(std::move(n));
}

Term TermBank::ite(Term c, Term t, Term e) {
  if (c->sort != Sort::Bool) throw TypeError("ite condition must be bool: " + to_string(c));
  if (t->sort != e->sort) throw TypeError("ite branches of different sorts");
  if (c->is_true()) return t;
  if (c->is_false()) return e;
  if (t == e) return t;
  Node n{Kind::Ite, t->sort};
  n.kids = {c, t, e};
  return intern(std::move(n));
}

Term TermBank::read(const std::string& tensor, Sort s, std::vector<Term> idx) {
  for (Term i : idx)
    if (i->sort != Sort::Int) throw TypeError("tensor index must be int");
  Node n{Kind::Read, s};
  n.name = tensor;
  n.kids = std::move(idx);
  return intern(std::move(n));
}

Term TermBank::red(RedOp op, std::vector<Term> indices, std::vector<Term> ranges, Term body) {
  if (indices.size() != ranges.size()) throw TypeError("reduction index/range arity mismatch");
  if (indices.empty()) return body;
  Node n{Kind::Red, body->sort};
  n.ival = static_cast<std::int64_t>(op);
  n.kids.push_back(body);
  for (Term i : indices) n.kids.push_back(i);
  for (Term r : ranges) n.kids.push_back(r);
  return intern(std::move(n));
}

Term TermBank::rebuild(Term t, const std::vector<Term>& k) {
  switch (t->kind) {
    case Kind::IntLit:
    case Kind::RealLit:
    case Kind::BoolLit:
    case Kind::Sym: return t;
    case Kind::Add: return add(k[0], k[1]);
    case Kind::Sub: return sub(k[0], k[1]);
    case Kind::Mul: return mul(k[0], k[1]);
    case Kind::Neg: return neg(k[0]);
    case Kind::Div: return div(k[0], k[1]);
    case Kind::Mod: return mod(k[0], k[1]);
    case Kind::RDiv: return rdiv(k[0], k[1]);
    case Kind::Min: return min(k[0], k[1]);
    case Kind::Max: return max(k[0], k[1]);
    case Kind::Eq: return eq(k[0], k[1]);
    case Kind::Ne: return ne(k[0], k[1]);
    case Kind::Lt: return lt(k[0], k[1]);
    case Kind::Le: return le(k[0], k[1]);
    case Kind::Gt: return gt(k[0], k[1]);
    case Kind::Ge: return ge(k[0], k[1]);
    case Kind::And: return and_(k);
    case Kind::Or: return or_(k);
    case Kind::Not: return not_(k[0]);
    case Kind::Ite: return ite(k[0], k[1], k[2]);
    case Kind::Read: return read(t->name, t->sort, k);
    case Kind::Red: {
      std::size_t n = (k.size() - 1) / 2;
      std::vector<Term> idx(k.begin() + 1, k.begin() + 1 + n);
      std::vector<Term> rng(k.begin() + 1 + n, k.end());
      return red(t->red_op(), idx, rng, k[0]);
    }
  }
  return t;
}

Term TermBank::substitute(Term t, const std::map<Term, Term>& sub) {
  std::unordered_map<Term, Term> memo;
  std::function<Term(Term)> go = [&](Term x) -> Term {
    auto s = sub.find(x);
    if (s != sub.end()) return s->second;
    if (x->kids.empty()) return x;
    auto m = memo.find(x);
    if (m != memo.end()) return m->second;
    std::vector<Term> kids;
    kids.reserve(x->kids.size());
    bool changed = false;
    for (Term k : x->kids) {
      Term nk = go(k);
      changed |= nk != k;
      kids.push_back(nk);
    }
    Term r = changed ? rebuild(x, kids) : x;
    memo.emplace(x, r);
    return r;
  };
  return go(t);
}

namespace {

const char* op_text(Kind k) {
  switch (k) {
    case Kind::Add: return "+";
    case Kind::Sub: return "-";
    case Kind::Mul: return "*";
    case Kind::Neg: return "-";
    case Kind::Div: return "div";
    case Kind::Mod: return "mod";
    case Kind::RDiv: return "/";
    case Kind::Min: return "min";
    case Kind::Max: return "max";
    case Kind::Eq: return "=";
    case Kind::Ne: return "distinct";
    case Kind::Lt: return "<";
    case Kind::Le: return "<=";
    case Kind::Gt: return ">";
    case Kind::Ge: return ">=";
    case Kind::And: return "and";
    case Kind::Or: return "or";
    case Kind::Not: return "not";
    case Kind::Ite: return "ite";
    default: return "?";
  }
}

void print(std::ostream& os, Term t) {
  switch (t->kind) {
    case Kind::IntLit: os << t->ival; return;
    case Kind::RealLit: os << Value::of_real(t->rval).str(); return;
    case Kind::BoolLit: os << (t->ival ? "true" : "false"); return;
    case Kind::Sym: os << t->name; return;
    case Kind::Read:
      os << "(" << t->name;
      for (Term k : t->kids) {
        os << " ";
        print(os, k);
      }
      os << ")";
      return;
    case Kind::Red: {
      os << "(red." << red_op_name(t->red_op()) << " (";
      for (std::size_t k = 0; k < t->red_arity(); ++k) {
        if (k) os << " ";
        os << "(";
        print(os, t->red_index(k));
        os << " ";
        print(os, t->red_range(k));
        os << ")";
      }
      os << ") ";
      print(os, t->red_body());
      os << ")";
      return;
    }
    default:
      os << "(" << op_text(t->kind);
      for (Term k : t->kids) {
        os << " ";
        print(os, k);
      }
      os << ")";
  }
}

}  // namespace

std::string to_string(Term t) {
  std::ostringstream os;
  print(os, t);
  return os.str();
}

std::vector<Term> collect(Term t, const std::function<bool(Term)>& pred) {
  std::set<Term, TermLess> found;
  std::set<Term> seen;
  std::function<void(Term)> go = [&](Term x) {
    if (!seen.insert(x).second) return;
    if (pred(x)) found.insert(x);
    for (Term k : x->kids) go(k);
  };
  go(t);
  return {found.begin(), found.end()};
}

std::vector<Term> free_symbols(Term t) {
  std::set<Term, TermLess> out;
  std::function<void(Term, const std::set<Term>&)> go = [&](Term x, const std::set<Term>& bound) {
    if (x->kind == Kind::Sym) {
      if (!bound.count(x)) out.insert(x);
      return;
    }
    if (x->kind == Kind::Red) {
      std::set<Term> b2 = bound;
      for (std::size_t k = 0; k < x->red_arity(); ++k) b2.insert(x->red_index(k));
      go(x->red_body(), b2);
      for (std::size_t k = 0; k < x->red_arity(); ++k) go(x->red_range(k), bound);
      return;
    }
    for (Term k : x->kids) go(k, bound);
  };
  go(t, {});
  return {out.begin(), out.end()};
}

bool contains_kind(Term t, Kind k) {
  std::set<Term> seen;
  std::function<bool(Term)> go = [&](Term x) {
    if (x->kind == k) return true;
    if (!seen.insert(x).second) return false;
    for (Term c : x->kids)
      if (go(c)) return true;
    return false;
  };
  return go(t);
}

std::vector<Term> conjuncts(Term t) {
  if (t->is_true()) return {};
  if (t->kind == Kind::And) {
    std::vector<Term> out;
    for (Term k : t->kids) {
      auto sub = conjuncts(k);
      out.insert(out.end(), sub.begin(), sub.end());
    }
    return out;
  }
  return {t};
}

}  // namespace trv
