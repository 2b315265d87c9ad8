#include "trv/canon.h"

#include <algorithm>
#include <numeric>
#include <set>
#include <unordered_map>

namespace trv {

namespace {

using Mono = std::vector<Term>;

struct MonoLess {
  bool operator()(const Mono& a, const Mono& b) const {
    if (a.size() != b.size()) return a.size() < b.size();
    for (std::size_t k = 0; k < a.size(); ++k)
      if (int c = term_compare(a[k], b[k])) return c < 0;
    return false;
  }
};

using Poly = std::map<Mono, std::int64_t, MonoLess>;

void add_into(Poly& p, const Mono& m, std::int64_t c) {
  if (c == 0) return;
  auto it = p.find(m);
  if (it == p.end()) {
    p.emplace(m, c);
  } else {
    it->second += c;
    if (it->second == 0) p.erase(it);
  }
}

Poly scale(const Poly& p, std::int64_t c) {
  Poly out;
  for (auto& [m, k] : p) add_into(out, m, k * c);
  return out;
}

Poly plus(const Poly& a, const Poly& b) {
  Poly out = a;
  for (auto& [m, k] : b) add_into(out, m, k);
  return out;
}

Poly times(const Poly& a, const Poly& b) {
  Poly out;
  for (auto& [ma, ka] : a)
    for (auto& [mb, kb] : b) {
      Mono m = ma;
      m.insert(m.end(), mb.begin(), mb.end());
      std::sort(m.begin(), m.end(), TermLess());
      add_into(out, m, ka * kb);
    }
  return out;
}

struct Canon {
  TermBank& bank;
  std::unordered_map<Term, Term> memo;

  Poly poly(Term t) {
    switch (t->kind) {
      case Kind::IntLit: {
        Poly p;
        add_into(p, {}, t->ival);
        return p;
      }
      case Kind::Add: return plus(poly(t->kids[0]), poly(t->kids[1]));
      case Kind::Sub: return plus(poly(t->kids[0]), scale(poly(t->kids[1]), -1));
      case Kind::Neg: return scale(poly(t->kids[0]), -1);
      case Kind::Mul: return times(poly(t->kids[0]), poly(t->kids[1]));
      default: {
        Term a = atom(t);
        Poly p;
        if (a->kind == Kind::IntLit)
          add_into(p, {}, a->ival);
        else
          add_into(p, {a}, 1);
        return p;
      }
    }
  }

  Term from_poly(const Poly& p) {
    Term sum = bank.int_lit(0);
    Term constant = bank.int_lit(0);
    for (auto& [m, c] : p) {
      if (m.empty()) {
        constant = bank.int_lit(c);
        continue;
      }
      Term prod = m[0];
      for (std::size_t k = 1; k < m.size(); ++k) prod = bank.mul(prod, m[k]);
      Term term = c == 1 ? prod : c == -1 ? bank.neg(prod) : bank.mul(bank.int_lit(c), prod);
      sum = bank.add(sum, term);
    }
    return bank.add(sum, constant);
  }

  // Non-arithmetic node with canonical children.
  Term atom(Term t) {
    std::vector<Term> kids;
    for (Term k : t->kids) kids.push_back(go(k));
    if (t->kind == Kind::Min || t->kind == Kind::Max) std::sort(kids.begin(), kids.end(), TermLess());
    if (t->kind == Kind::Red) {
      std::size_t n = t->red_arity();
      for (std::size_t k = 0; k < n; ++k) kids[1 + k] = t->red_index(k);
    }
    return bank.rebuild(t, kids);
  }

  static std::int64_t gcd_of(const Poly& p, bool with_constant) {
    std::int64_t g = 0;
    for (auto& [m, c] : p)
      if (with_constant || !m.empty()) g = std::gcd(g, c < 0 ? -c : c);
    return g;
  }

  Term compare(Kind k, Term a, Term b) {
    Poly d = plus(poly(a), scale(poly(b), -1));
    if (k == Kind::Le || k == Kind::Lt) d = scale(d, -1);
    if (k == Kind::Gt || k == Kind::Lt) add_into(d, {}, -1);
    if (k == Kind::Ge || k == Kind::Le || k == Kind::Gt || k == Kind::Lt) {
      std::int64_t g = gcd_of(d, false);
      if (g > 1) {
        Poly q;
        for (auto& [m, c] : d) add_into(q, m, m.empty() ? euclid_div(c, g) : c / g);
        d = q;
      }
      return bank.ge(from_poly(d), bank.int_lit(0));
    }
    for (auto& [m, c] : d) {
      if (m.empty()) continue;
      if (c < 0) d = scale(d, -1);
      break;
    }
    std::int64_t g = gcd_of(d, true);
    bool exact = g > 1;
    for (auto& [m, c] : d) exact = exact && c % g == 0;
    if (exact) {
      Poly q;
      for (auto& [m, c] : d) add_into(q, m, c / g);
      d = q;
    }
    Term lhs = from_poly(d);
    return k == Kind::Eq ? bank.eq(lhs, bank.int_lit(0)) : bank.ne(lhs, bank.int_lit(0));
  }

  Term go(Term t) {
    auto it = memo.find(t);
    if (it != memo.end()) return it->second;
    Term r;
    switch (t->kind) {
      case Kind::Add:
      case Kind::Sub:
      case Kind::Neg:
      case Kind::Mul:
        r = t->sort == Sort::Int ? from_poly(poly(t)) : atom(t);
        break;
      case Kind::Eq:
      case Kind::Ne:
      case Kind::Lt:
      case Kind::Le:
      case Kind::Gt:
      case Kind::Ge:
        r = t->kids[0]->sort == Sort::Int ? compare(t->kind, t->kids[0], t->kids[1]) : atom(t);
        break;
      case Kind::And:
      case Kind::Or: {
        std::vector<Term> kids;
        for (Term k : t->kids) kids.push_back(go(k));
        std::sort(kids.begin(), kids.end(), TermLess());
        r = t->kind == Kind::And ? bank.and_(kids) : bank.or_(kids);
        break;
      }
      default: r = t->kids.empty() ? t : atom(t);
    }
    memo.emplace(t, r);
    return r;
  }
};

Term alpha(TermBank& bank, Term t, int depth) {
  if (t->kids.empty()) return t;
  if (t->kind == Kind::Red) {
    std::size_t n = t->red_arity();
    std::map<Term, Term> ren;
    std::vector<Term> idx, rng;
    for (std::size_t k = 0; k < n; ++k) {
      Term old = t->red_index(k);
      Term fresh = bank.sym("%" + std::to_string(depth) + "." + std::to_string(k), Sort::Int, old->axis, Role::Index);
      ren[old] = fresh;
      idx.push_back(fresh);
      rng.push_back(alpha(bank, t->red_range(k), depth));
    }
    Term body = alpha(bank, bank.substitute(t->red_body(), ren), depth + 1);
    return bank.red(t->red_op(), idx, rng, body);
  }
  std::vector<Term> kids;
  for (Term k : t->kids) kids.push_back(alpha(bank, k, depth));
  return bank.rebuild(t, kids);
}

}  // namespace

Term canonicalize(TermBank& bank, Term t) {
  Canon c{bank, {}};
  return c.go(t);
}

Term alpha_normalize(TermBank& bank, Term t) { return alpha(bank, t, 0); }

std::vector<std::pair<Term, Term>> solve_equalities(TermBank& bank, const std::vector<Term>& facts) {
  std::vector<std::pair<Term, Term>> subs;
  for (Term f : facts) {
    Term g = canonicalize(bank, apply_substitutions(bank, f, subs));
    if (g->kind != Kind::Eq || g->kids[0]->sort != Sort::Int) continue;
    Canon c{bank, {}};
    Poly p = c.poly(g->kids[0]);
    Term pick = nullptr;
    std::int64_t coef = 0;
    for (auto& [m, k] : p) {
      if (m.size() != 1 || m[0]->kind != Kind::Sym || (k != 1 && k != -1)) continue;
      bool elsewhere = false;
      for (auto& [m2, k2] : p) {
        if (&m2 == &m) continue;
        for (Term x : m2)
          if (x == m[0] || !collect(x, [&](Term y) { return y == m[0]; }).empty()) elsewhere = true;
      }
      if (elsewhere) continue;
      pick = m[0];
      coef = k;
    }
    if (!pick) continue;
    Poly rest;
    for (auto& [m, k] : p)
      if (!(m.size() == 1 && m[0] == pick)) add_into(rest, m, -k * coef);
    Term value = c.from_poly(rest);
    for (auto& s : subs) s.second = canonicalize(bank, bank.substitute(s.second, {{pick, value}}));
    subs.emplace_back(pick, value);
  }
  return subs;
}

Term apply_substitutions(TermBank& bank, Term t, const std::vector<std::pair<Term, Term>>& subs) {
  for (auto& [from, to] : subs) t = bank.substitute(t, {{from, to}});
  return t;
}

}  // namespace trv
