#include "trv/analysis.h"

#include <algorithm>
#include <functional>

#include "trv/canon.h"
#include "trv/instantiate.h"
#include "trv/symeval.h"

namespace trv {

namespace {

std::set<std::string> used_vars(const RewriteRule& rule) {
  std::set<std::string> out;
  auto f = [&](const Expr& e) {
    if (e.op == Op::Var) out.insert(e.var);
  };
  visit(rule.lhs, f);
  visit(rule.rhs, f);
  return out;
}

struct Probe {
  InstRule inst;
  std::vector<Term> values;            // normalized value terms of both sides
  std::set<Term> facts;                // keys of atoms known to hold
  std::map<std::string, std::set<Term>> reads;  // tensor -> distinct reads
  std::map<Term, std::set<std::string>> atoms;  // key -> rclasses mentioned

  // Renames every symbol on a named axis to its position-0 counterpart, so
  // atoms that differ only in the position along an aggregated axis coincide.
  Term fold_positions(Term t) {
    TermBank& b = *inst.bank;
    std::map<Term, Term> sub;
    for (Term s : free_symbols(t)) {
      auto it = inst.inst.parent.find(s->axis);
      if (it == inst.inst.parent.end()) continue;
      std::string first = named_axis_id(it->second, 0);
      std::string name = s->name;
      if (name.rfind("%", 0) == 0) {
        // alpha-normalized reduction index: `%<depth>.<slot>`
        name = name.substr(0, name.find('.')) + "@" + first;
      } else {
        if (s->axis == first) continue;
        auto pos = name.find("." + s->axis + ".");
        if (pos == std::string::npos) continue;
        name.replace(pos + 1, s->axis.size(), first);
      }
      sub[s] = b.sym(name, s->sort, first, s->role);
    }
    return sub.empty() ? t : b.substitute(t, sub);
  }

  Term key(Term atom) {
    TermBank& b = *inst.bank;
    Term c = canonicalize(b, fold_positions(atom));
    if (c->kind == Kind::Not) c = c->kids[0];
    if (c->is_lit()) return c;
    if (c->kind == Kind::Ge) {
      Term n = canonicalize(b, b.lt(c->kids[0], c->kids[1]));
      return term_compare(n, c) < 0 ? n : c;
    }
    if (c->kind == Kind::Ne) return canonicalize(b, b.eq(c->kids[0], c->kids[1]));
    return c;
  }

  void flatten(Term g, std::vector<Term>& out) {
    if (g->kind == Kind::And || g->kind == Kind::Or || g->kind == Kind::Not) {
      for (Term k : g->kids) flatten(k, out);
      return;
    }
    out.push_back(g);
  }

  Probe(const RewriteRule& rule, int rank) {
    RankMap ranks;
    for (auto& [c, members] : rule.rclasses) ranks[c] = rank;
    inst = instantiate(rule, ranks, "probe");
    TermBank& b = *inst.bank;
    std::vector<Term> pre;
    if (inst.pre)
      for (Term c : conjuncts(inst.pre)) pre.push_back(canonicalize(b, c));
    auto subs = solve_equalities(b, pre);
    auto norm = [&](Term t) { return canonicalize(b, alpha_normalize(b, apply_substitutions(b, t, subs))); };

    SymResult l = sym_eval(inst, inst.lhs, "L");
    SymResult r = sym_eval(inst, inst.rhs, "R");
    AggMap al = symbolic_access(inst, l.tensor.axes);
    AggMap ar = symbolic_access(inst, r.tensor.axes);
    values.push_back(norm(normalize_reductions(b, l.tensor.value(al))));
    values.push_back(norm(normalize_reductions(b, r.tensor.value(ar))));

    for (Term p : pre)
      for (Term c : conjuncts(apply_substitutions(b, p, subs))) facts.insert(key(c));
    for (auto& [k, inner] : al)
      for (auto& [n, a] : inner) {
        Term s = apply_substitutions(b, l.tensor.shape.at(k).at(n), subs);
        facts.insert(key(b.ge(a, b.int_lit(0))));
        facts.insert(key(b.lt(a, s)));
      }
    for (Term v : values)
      for (Term red : collect(v, [](Term t) { return t->kind == Kind::Red; }))
        for (std::size_t k = 0; k < red->red_arity(); ++k) {
          facts.insert(key(b.ge(red->red_index(k), b.int_lit(0))));
          facts.insert(key(b.lt(red->red_index(k), red->red_range(k))));
        }

    for (Term v : values) {
      for (Term rd : collect(v, [](Term t) { return t->kind == Kind::Read; })) reads[rd->name].insert(rd);
      for (Term ite : collect(v, [](Term t) { return t->kind == Kind::Ite; })) {
        std::vector<Term> parts;
        flatten(ite->kids[0], parts);
        for (Term a : parts) {
          if (contains_kind(a, Kind::Read) || contains_kind(a, Kind::Red)) continue;
          Term k = key(a);
          if (k->is_lit() || facts.count(k)) continue;
          std::set<std::string>& cs = atoms[k];
          for (Term s : free_symbols(k)) {
            auto it = inst.axis_rclass.find(s->axis);
            if (it != inst.axis_rclass.end() && !it->second.empty()) cs.insert(it->second);
          }
        }
      }
    }
  }
};

int choose2(int n) { return n * (n - 1) / 2; }

}  // namespace

std::set<std::string> tensors_with_rclass(const RewriteRule& rule, const std::string& rclass) {
  std::set<std::string> out;
  for (auto& id : used_vars(rule)) {
    const TensorDecl& t = rule.tensors.at(id);
    for (auto& [axis, m] : t.shape)
      if (rule.rclass_of(axis) == rclass) out.insert(id);
  }
  return out;
}

int num_tensor_access(const RewriteRule& rule, const std::string& tensor, int probe_rank) {
  Probe p(rule, probe_rank);
  auto it = p.reads.find(tensor);
  return it == p.reads.end() ? 0 : static_cast<int>(it->second.size());
}

int num_conds(const RewriteRule& rule, const std::string& rclass, int probe_rank) {
  return analyze(rule, probe_rank).classes.at(rclass).condition_count;
}

int infer_bound(const RewriteRule& rule, const std::string& rclass) { return analyze(rule).classes.at(rclass).bound; }

BoundReport analyze(const RewriteRule& rule, int probe_rank) {
  Probe p(rule, probe_rank);
  BoundReport rep;
  rep.rule = rule.name;
  for (auto& [c, members] : rule.rclasses) {
    RClassBound cb;
    cb.tensors = tensors_with_rclass(rule, c);
    int total = 0;
    for (auto& t : cb.tensors) {
      auto it = p.reads.find(t);
      int n = it == p.reads.end() ? 0 : static_cast<int>(it->second.size());
      cb.access_counts[t] = n;
      total += choose2(n);
    }
    for (auto& [k, cs] : p.atoms)
      if (cs.count(c)) cb.conditions.push_back(to_string(k));
    cb.condition_count = static_cast<int>(cb.conditions.size());
    cb.bound = std::max(1, total + cb.condition_count);
    rep.classes[c] = cb;
  }
  return rep;
}

std::vector<RankMap> task_set(const BoundReport& report) {
  std::vector<RankMap> out{RankMap{}};
  for (auto& [c, cb] : report.classes) {
    std::vector<RankMap> next;
    for (auto& m : out)
      for (int k = 1; k <= cb.bound; ++k) {
        RankMap n = m;
        n[c] = k;
        next.push_back(n);
      }
    out = std::move(next);
  }
  return out;
}

std::string task_name(const RankMap& ranks) {
  std::string s = "t";
  bool first = true;
  for (auto& [c, k] : ranks) {
    s += (first ? "" : "_") + c + std::to_string(k);
    first = false;
  }
  return ranks.empty() ? "t0" : s;
}

}  // namespace trv
