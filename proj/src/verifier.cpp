#include "trv/verifier.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <thread>
#include <unordered_map>

#include "trv/canon.h"
#include "trv/symeval.h"

namespace trv {

const char* outcome_name(Outcome o) {
  switch (o) {
    case Outcome::Verified: return "Verified";
    case Outcome::Invalid: return "Invalid";
    case Outcome::Unknown: return "Unknown";
    case Outcome::Unsupported: return "Unsupported";
  }
  return "?";
}

std::optional<Outcome> parse_outcome(const std::string& s) {
  for (Outcome o : {Outcome::Verified, Outcome::Invalid, Outcome::Unknown, Outcome::Unsupported})
    if (s == outcome_name(o)) return o;
  return std::nullopt;
}

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t) { return std::chrono::duration<double, std::milli>(Clock::now() - t).count(); }

std::set<std::string> agg_keys(const Layout& l) {
  std::set<std::string> s;
  for (auto& [k, v] : l) s.insert(k);
  return s;
}

Term rename_reads(TermBank& b, Term t, const std::map<std::string, std::string>& alias,
                  std::unordered_map<Term, Term>& memo) {
  if (alias.empty() || t->kids.empty()) return t;
  auto it = memo.find(t);
  if (it != memo.end()) return it->second;
  std::vector<Term> kids;
  for (Term k : t->kids) kids.push_back(rename_reads(b, k, alias, memo));
  Term r;
  if (t->kind == Kind::Read && alias.count(t->name)) r = b.read(alias.at(t->name), t->sort, kids);
  else r = kids == t->kids ? t : b.rebuild(t, kids);
  memo.emplace(t, r);
  return r;
}

std::map<std::string, std::string> alias_map(const VerifyConfig& cfg) {
  std::map<std::string, std::string> m;
  for (auto& [a, b] : cfg.aliases) m[b] = a;
  return m;
}

struct Solver {
  const VerifyConfig& cfg;
  std::string rule, task;

  TermBank& bank;

  SolverResult run(const Query& q) {
    CanonicalQuery c = canonical_query(bank, q);
    std::string script = build_script(c.query);
    SolverResult r = run_cached(script, cfg.solver);
    r.model = rename_model(r.model, c.original);
    if (cfg.dump_dir) {
      namespace fs = std::filesystem;
      fs::path dir = fs::path(*cfg.dump_dir) / rule / task;
      fs::create_directories(dir);
      std::ofstream(dir / (q.name + ".smt2")) << script;
      std::ofstream(dir / (q.name + ".status")) << status_name(r.status) << "\n";
    }
    return r;
  }

  // Re-asks a satisfiable query with integer constants boxed to small ranges,
  // so the model can be replayed on small concrete tensors.
  SolverResult small_model(const Query& q, TermBank& b, SolverResult first) {
    std::set<Term, TermLess> ints;
    auto add = [&](Term t) {
      for (Term s : free_symbols(t))
        if (s->sort == Sort::Int) ints.insert(s);
    };
    for (Term a : q.assumptions) add(a);
    add(q.goal);
    for (Term e : q.exists) ints.erase(e);
    for (std::int64_t box : {8, 32}) {
      Query boxed = q;
      for (Term s : ints) {
        boxed.assumptions.push_back(b.ge(s, b.int_lit(-box)));
        boxed.assumptions.push_back(b.le(s, b.int_lit(box)));
      }
      SolverResult r = run_script(build_script(boxed), cfg.solver);
      if (r.status == SolverStatus::Sat) return r;
    }
    return first;
  }
};

ObligationResult record(const std::string& name, const SolverResult& r) {
  return ObligationResult{name, status_name(r.status), r.ms, ""};
}

std::set<std::string> named_axes(Term t) {
  std::set<std::string> out;
  for (Term s : free_symbols(t))
    if (!s->axis.empty()) out.insert(s->axis);
  return out;
}

// Hypothesis conjuncts transitively sharing a named axis with `goal`. Dropping
// the rest only weakens the hypotheses, so a proof of the trimmed query carries over.
std::vector<Term> relevant(const std::vector<Term>& hyps, Term goal) {
  std::vector<Term> pool;
  for (Term h : hyps)
    for (Term c : conjuncts(h)) pool.push_back(c);
  std::vector<std::set<std::string>> axes;
  for (Term c : pool) axes.push_back(named_axes(c));
  std::set<std::string> seen = named_axes(goal);
  std::vector<bool> taken(pool.size(), false);
  for (bool grew = true; grew;) {
    grew = false;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (taken[i]) continue;
      bool hit = axes[i].empty() ||
                 std::any_of(axes[i].begin(), axes[i].end(), [&](const std::string& a) { return seen.count(a) > 0; });
      if (!hit) continue;
      taken[i] = grew = true;
      seen.insert(axes[i].begin(), axes[i].end());
    }
  }
  std::vector<Term> out;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (taken[i]) out.push_back(pool[i]);
  return out;
}

// Breaks `l = r` into smaller goals whose conjunction implies it: matching
// guards are compared per group of named axes, matching operators argument-wise.
struct Congruence {
  TermBank& B;
  std::vector<std::pair<std::vector<Term>, Term>> goals;  // (path, goal)

  Term merge_guards(Term t) {
    while (t->kind == Kind::Ite && t->kids[1]->kind == Kind::Ite && t->kids[1]->kids[2] == t->kids[2])
      t = B.ite(B.and_(t->kids[0], t->kids[1]->kids[0]), t->kids[1]->kids[1], t->kids[2]);
    return t;
  }

  void iff(Term a, Term b, const std::vector<Term>& path) {
    if (a == b) return;
    std::vector<Term> ca = conjuncts(a), cb = conjuncts(b);
    std::map<std::string, std::string> parent;
    std::function<std::string(const std::string&)> find = [&](const std::string& x) {
      auto it = parent.find(x);
      if (it == parent.end() || it->second == x) return x;
      return it->second = find(it->second);
    };
    std::vector<std::set<std::string>> axes;
    for (auto* side : {&ca, &cb})
      for (Term c : *side) {
        axes.push_back(named_axes(c));
        const auto& ax = axes.back();
        for (auto& x : ax) parent.emplace(x, x);
        for (auto& x : ax) parent[find(x)] = find(*ax.begin());
      }
    // Groups keep first-seen order so the emitted goals do not depend on symbol names.
    std::vector<std::string> order;
    std::map<std::string, std::pair<std::vector<Term>, std::vector<Term>>> groups;
    std::size_t k = 0;
    auto place = [&](Term c, bool left) {
      auto& ax = axes[k++];
      std::string g = ax.empty() ? "" : find(*ax.begin());
      if (!groups.count(g)) order.push_back(g);
      (left ? groups[g].first : groups[g].second).push_back(c);
    };
    for (Term c : ca) place(c, true);
    for (Term c : cb) place(c, false);
    for (auto& g : order) {
      auto& [xs, ys] = groups[g];
      if (std::set<Term>(xs.begin(), xs.end()) == std::set<Term>(ys.begin(), ys.end())) continue;
      Term x = B.and_(xs), y = B.and_(ys);
      goals.emplace_back(path, B.and_(B.implies(x, y), B.implies(y, x)));
    }
  }

  void split(Term l, Term r, const std::vector<Term>& path) {
    if (l == r) return;
    l = merge_guards(l);
    r = merge_guards(r);
    if (l->kind == Kind::Ite && r->kind == Kind::Ite) {
      iff(l->kids[0], r->kids[0], path);
      std::vector<Term> p = path;
      p.push_back(l->kids[0]);
      split(l->kids[1], r->kids[1], p);
      p.back() = B.not_(l->kids[0]);
      split(l->kids[2], r->kids[2], p);
      return;
    }
    if (l->kind == Kind::Read && r->kind == Kind::Read && l->name == r->name) {
      for (std::size_t i = 0; i < l->kids.size(); ++i)
        if (l->kids[i] != r->kids[i]) goals.emplace_back(path, B.eq(l->kids[i], r->kids[i]));
      return;
    }
    bool same_op = l->kind == r->kind && l->kids.size() == r->kids.size() && !l->kids.empty() &&
                   l->kind != Kind::Red && l->kind != Kind::Read && contains_kind(l, Kind::Read) &&
                   contains_kind(r, Kind::Read);
    if (same_op) {
      std::vector<Term> rk = r->kids;
      bool commutes = (l->kind == Kind::Add || l->kind == Kind::Mul) && rk.size() == 2;
      if (commutes && (l->kids[0] == rk[1] || l->kids[1] == rk[0])) std::swap(rk[0], rk[1]);
      for (std::size_t i = 0; i < rk.size(); ++i) split(l->kids[i], rk[i], path);
      return;
    }
    goals.emplace_back(path, l->sort == Sort::Bool ? B.and_(B.implies(l, r), B.implies(r, l)) : B.eq(l, r));
  }
};

// Tries to prove `l = r` through the congruence split. Sub-queries are named
// `<name>.s<k>` and appended to `log` only when all of them are unsat. False
// if any of them is not unsat, or if the split does not make the problem smaller.
bool prove_split(Solver& solver, TermBank& B, const std::string& name, const std::vector<Term>& assumptions, Term l,
                 Term r, std::vector<ObligationResult>& log) {
  Congruence c{B, {}};
  c.split(l, r, {});
  if (c.goals.empty()) return true;
  if (c.goals.size() == 1 && c.goals[0].first.empty() && c.goals[0].second == B.eq(l, r)) return false;
  std::vector<ObligationResult> done;
  for (std::size_t k = 0; k < c.goals.size(); ++k) {
    auto& [path, goal] = c.goals[k];
    std::vector<Term> hyps = assumptions;
    hyps.insert(hyps.end(), path.begin(), path.end());
    Query q{name + ".s" + std::to_string(k), relevant(hyps, goal), goal, {}};
    SolverResult res = solver.run(q);
    done.push_back(ObligationResult{q.name, status_name(res.status), res.ms, "split"});
    if (res.status != SolverStatus::Unsat) return false;
  }
  log.insert(log.end(), done.begin(), done.end());
  return true;
}

std::vector<std::pair<std::vector<Term>, Term>> split_ites(TermBank& b, Term t) {
  if (t->kind == Kind::Ite && (contains_kind(t->kids[1], Kind::Red) || contains_kind(t->kids[2], Kind::Red))) {
    std::vector<std::pair<std::vector<Term>, Term>> out;
    for (auto [path, leaf] : split_ites(b, t->kids[1])) {
      path.insert(path.begin(), t->kids[0]);
      out.emplace_back(path, leaf);
    }
    for (auto [path, leaf] : split_ites(b, t->kids[2])) {
      path.insert(path.begin(), b.not_(t->kids[0]));
      out.emplace_back(path, leaf);
    }
    return out;
  }
  return {{{}, t}};
}

struct Discharger {
  const InstRule& inst;
  Solver& solver;
  TermBank& B;
  Discharge out;

  void note(const std::string& name, const std::string& status, double ms = 0, const std::string& d = "") {
    out.obligations.push_back(ObligationResult{name, status, ms, d});
  }

  void give_up(Discharge::Status s, const std::string& reason) {
    if (out.status == Discharge::Status::Proven) {
      out.status = s;
      out.reason = reason;
    }
  }

  // True when proven; records the obligation either way.
  bool prove(const std::string& name, std::vector<Term> assumptions, Term goal, std::vector<Term> exists = {}) {
    Query q{name, std::move(assumptions), goal, std::move(exists)};
    SolverResult r = solver.run(q);
    out.obligations.push_back(record(name, r));
    if (r.status == SolverStatus::Unsat) return true;
    if (r.status == SolverStatus::Sat) give_up(Discharge::Status::Failed, "obligation " + name + " is satisfiable");
    else give_up(Discharge::Status::Unknown, std::string("obligation ") + name + ": " + status_name(r.status));
    return false;
  }

  Term in_ranges(Term red) {
    std::vector<Term> cs;
    for (std::size_t k = 0; k < red->red_arity(); ++k) {
      cs.push_back(B.ge(red->red_index(k), B.int_lit(0)));
      cs.push_back(B.lt(red->red_index(k), red->red_range(k)));
    }
    return B.and_(cs);
  }

  std::vector<Term> indices(Term red) {
    std::vector<Term> v;
    for (std::size_t k = 0; k < red->red_arity(); ++k) v.push_back(red->red_index(k));
    return v;
  }

  void top(Term l, Term r, const std::vector<Term>& as, const std::string& prefix) {
    auto ls = split_ites(B, l), rs = split_ites(B, r);
    if (ls.size() == 1 && rs.size() == 1) {
      leaf(l, r, as, prefix);
      return;
    }
    for (std::size_t i = 0; i < ls.size(); ++i)
      for (std::size_t j = 0; j < rs.size(); ++j) {
        std::string name = prefix + ".p" + std::to_string(i) + "_" + std::to_string(j);
        std::vector<Term> a2 = as;
        for (Term c : ls[i].first) a2.push_back(c);
        for (Term c : rs[j].first) a2.push_back(c);
        Query feas{name + ".feasible", a2, B.bool_lit(false), {}};
        SolverResult f = solver.run(feas);
        out.obligations.push_back(record(feas.name, f));
        if (f.status == SolverStatus::Unsat) {
          note(name, "vacuous");
          continue;
        }
        leaf(ls[i].second, rs[j].second, a2, name);
      }
  }

  void leaf(Term l, Term r, const std::vector<Term>& as, const std::string& name) {
    if (alpha_normalize(B, l) == alpha_normalize(B, r)) {
      note(name, "syntactic");
      return;
    }
    bool lr = contains_kind(l, Kind::Red), rr = contains_kind(r, Kind::Red);
    if (!lr && !rr) {
      if (!prove_split(solver, B, name, as, l, r, out.obligations)) prove(name, as, B.eq(l, r));
      return;
    }
    if (l->kind == Kind::Red && r->kind == Kind::Red && l->red_op() == r->red_op() && indices(l) == indices(r)) {
      std::vector<Term> eqs;
      for (std::size_t k = 0; k < l->red_arity(); ++k) eqs.push_back(B.eq(l->red_range(k), r->red_range(k)));
      if (!prove(name + ".range", as, B.and_(eqs))) return;
      std::vector<Term> a2 = as;
      a2.push_back(in_ranges(l));
      top(l->red_body(), r->red_body(), a2, name + ".body");
      return;
    }
    auto cl = components(l), cr = components(r);
    std::set<RedOp> ops;
    for (auto* side : {&cl, &cr})
      for (auto& c : *side) ops.insert(c.op);
    if (cl.empty() || cr.empty() || ops.size() != 1) {
      unsupported(name);
      return;
    }
    bijection(cl, cr, as, name);
  }

  // One term of a disjoint-union view of a reduction: body summed over `vars`
  // where `domain` (ranges and enclosing guards) holds.
  struct Component {
    RedOp op;
    std::vector<Term> vars;
    Term domain;
    Term body;
  };

  void unsupported(const std::string& name) {
    give_up(Discharge::Status::Unknown, "unsupported reduction shape");
    note(name, "unknown", 0, "unsupported reduction shape");
  }

  // Red(f) + Red(g) and Red_X ite(c, Red_Y f, Red_Z g) both flatten into
  // components; empty when `t` is not of that form.
  std::vector<Component> components(Term t) {
    std::vector<Component> out;
    if (t->kind == Kind::Add) {
      for (Term k : t->kids) {
        auto sub = components(k);
        if (sub.empty() || sub[0].op != RedOp::Add) return {};
        out.insert(out.end(), sub.begin(), sub.end());
      }
      return out;
    }
    if (t->kind != Kind::Red) return {};
    std::vector<Term> vars = indices(t);
    Term dom = in_ranges(t);
    std::function<bool(Term, Term, std::vector<Term>)> walk = [&](Term body, Term guard, std::vector<Term> vs) {
      if (!contains_kind(body, Kind::Red)) {
        out.push_back(Component{t->red_op(), vs, guard, body});
        return true;
      }
      if (body->kind == Kind::Ite && !contains_kind(body->kids[0], Kind::Red))
        return walk(body->kids[1], B.and_(guard, body->kids[0]), vs) &&
               walk(body->kids[2], B.and_(guard, B.not_(body->kids[0])), vs);
      if (body->kind == Kind::Red && body->red_op() == t->red_op()) {
        std::vector<Term> inner = indices(body);
        vs.insert(vs.end(), inner.begin(), inner.end());
        return walk(body->red_body(), B.and_(guard, in_ranges(body)), vs);
      }
      return false;
    };
    if (!walk(t->red_body(), dom, vars)) return {};
    return out;
  }

  // Proves that the hints relate the two component families one-to-one and that
  // related elements are equal.
  void bijection(const std::vector<Component>& cl, const std::vector<Component>& cr, const std::vector<Term>& as,
                 const std::string& name) {
    auto rel = [&](const Component& a, const Component& b) -> std::optional<Term> {
      std::set<Term> va(a.vars.begin(), a.vars.end()), vb(b.vars.begin(), b.vars.end());
      std::vector<Term> rels;
      for (auto& h : inst.hints) {
        if (h.index_symbols.empty()) continue;
        bool inside = true, hits_a = false, hits_b = false;
        for (Term s : h.index_symbols) {
          hits_a = hits_a || va.count(s);
          hits_b = hits_b || vb.count(s);
          inside = inside && (va.count(s) || vb.count(s));
        }
        if (inside && hits_a && hits_b) rels.push_back(h.relation);
      }
      if (rels.empty()) return std::nullopt;
      return B.and_(rels);
    };
    std::set<Term> all, covered;
    for (auto* side : {&cl, &cr})
      for (auto& c : *side) all.insert(c.vars.begin(), c.vars.end());
    std::vector<std::vector<std::optional<Term>>> rels(cl.size(), std::vector<std::optional<Term>>(cr.size()));
    for (std::size_t i = 0; i < cl.size(); ++i)
      for (std::size_t j = 0; j < cr.size(); ++j) {
        rels[i][j] = rel(cl[i], cr[j]);
        if (!rels[i][j]) continue;
        covered.insert(cl[i].vars.begin(), cl[i].vars.end());
        covered.insert(cr[j].vars.begin(), cr[j].vars.end());
      }
    if (covered != all) {
      give_up(Discharge::Status::Unknown, "reduction without hint");
      note(name, "unknown", 0, "reduction without hint");
      return;
    }
    auto primed = [&](const std::vector<Term>& xs) {
      std::map<Term, Term> m;
      for (Term x : xs) m[x] = B.sym(x->name + "'", x->sort, x->axis, Role::Index);
      return m;
    };
    bool multi = cl.size() > 1 || cr.size() > 1;
    auto tag = [&](const std::string& base, const std::string& suffix) {
      return name + "." + base + (multi ? "." + suffix : "");
    };
    // from[i] related to to[j] by rel(i, j) (or its transpose).
    auto one_way = [&](const std::vector<Component>& from, const std::vector<Component>& to, bool lr) -> bool {
      auto r = [&](std::size_t i, std::size_t j) { return lr ? rels[i][j] : rels[j][i]; };
      std::string dir = lr ? "lr" : "rl";
      for (std::size_t i = 0; i < from.size(); ++i) {
        std::vector<Term> options, ex;
        std::set<Term> ex_set;
        for (std::size_t j = 0; j < to.size(); ++j) {
          if (!r(i, j)) continue;
          options.push_back(B.and_(to[j].domain, *r(i, j)));
          for (Term v : to[j].vars)
            if (ex_set.insert(v).second) ex.push_back(v);
        }
        std::vector<Term> a2 = as;
        a2.push_back(from[i].domain);
        std::string side = (lr ? "L" : "R") + std::to_string(i);
        if (!prove(tag("total-" + dir, side), a2, B.or_(options), ex)) return false;
        for (std::size_t j = 0; j < to.size(); ++j) {
          if (!r(i, j)) continue;
          for (std::size_t k = j; k < to.size(); ++k) {
            if (!r(i, k)) continue;
            std::map<Term, Term> p = primed(to[k].vars);
            std::vector<Term> a3 = a2;
            a3.push_back(to[j].domain);
            a3.push_back(*r(i, j));
            a3.push_back(B.substitute(to[k].domain, p));
            a3.push_back(B.substitute(*r(i, k), p));
            Term goal = B.bool_lit(false);
            if (j == k) {
              std::vector<Term> eqs;
              for (Term y : to[j].vars) eqs.push_back(B.eq(y, p.at(y)));
              goal = B.and_(eqs);
            }
            std::string pair = side + "." + (lr ? "R" : "L") + std::to_string(j) + (lr ? "R" : "L") + std::to_string(k);
            if (!prove(tag("unique-" + dir, pair), a3, goal)) return false;
          }
        }
      }
      return true;
    };
    if (!one_way(cl, cr, true) || !one_way(cr, cl, false)) return;
    for (std::size_t i = 0; i < cl.size(); ++i)
      for (std::size_t j = 0; j < cr.size(); ++j) {
        if (!rels[i][j]) continue;
        std::vector<Term> a2 = as;
        a2.push_back(cl[i].domain);
        a2.push_back(cr[j].domain);
        a2.push_back(*rels[i][j]);
        leaf(cl[i].body, cr[j].body, a2, tag("pointwise", "L" + std::to_string(i) + "R" + std::to_string(j)));
      }
  }
};

std::string show(const Value& v) { return v.str(); }

}  // namespace

Discharge discharge_reductions(const InstRule& inst, Term lhs, Term rhs, const std::vector<Term>& assumptions,
                               const VerifyConfig& cfg, const std::string& prefix) {
  Solver s{cfg, inst.name, inst.inst.task, *inst.bank};
  Discharger d{inst, s, *inst.bank, {}};
  d.top(lhs, rhs, assumptions, prefix);
  return d.out;
}

Counterexample extract_counterexample(const SmtModel& model, const InstRule& inst, const std::string& obligation,
                                      const AggMap& access) {
  Counterexample cx;
  cx.ranks = inst.inst.ranks;
  cx.obligation = obligation;
  std::map<std::string, Value> syms;
  auto value_of = [&](Term s) {
    if (!model.has(s->name)) return Value::zero(s->sort);
    return model.get(s->name);
  };
  for (auto& [key, s] : inst.inst.symbols)
    if (s->role != Role::Index) syms[s->name] = value_of(s);
  for (auto& [n, v] : syms) cx.symbols[n] = v.str();
  Index acc;
  for (auto& [k, inner] : access)
    for (auto& [n, s] : inner) acc[n] = value_of(s).i;
  cx.access = acc;

  Model attrs;
  attrs.symbols = syms;
  Env env;
  std::int64_t total = 0;
  for (auto& [name, d] : inst.env) {
    Layout l;
    Index sizes;
    for (auto& [k, inner] : d.shape) {
      l[k] = inst.inst.expansion.at(k);
      for (auto& [n, t] : inner) sizes[n] = evaluate(t, attrs).i;
    }
    std::int64_t count = 1;
    for (auto& [n, s] : sizes) {
      if (s < 0 || s > 64) {
        cx.detail = "model sizes out of replay range";
        return cx;
      }
      count *= s;
    }
    total += count;
    if (total > 100000) {
      cx.detail = "model too large to replay";
      return cx;
    }
    ConcreteTensor t = ConcreteTensor::make(l, sizes, d.type, Value::zero(d.type));
    std::string fname = d.id;
    t.for_each([&](const Index& i) {
      std::vector<Value> args;
      for (auto& n : t.order) args.push_back(Value::of_int(i.at(n)));
      Value v = model.has(fname) ? model.get(fname, args) : Value::zero(d.type);
      if (d.type == Sort::Real && v.sort == Sort::Int) v = Value::of_real(Rational(v.i));
      t.at(i) = v;
      if (cx.entries.size() < 512) {
        std::vector<std::int64_t> pos;
        for (auto& n : t.order) pos.push_back(i.at(n));
        cx.entries.push_back(TensorEntry{name, pos, v.str()});
      }
    });
    env[name] = std::move(t);
  }

  Model full = model_with_env(syms, env);
  try {
    if (inst.pre && !evaluate(inst.pre, full).b) {
      cx.detail = "precondition fails under the model";
      return cx;
    }
    ConcreteTensor l = eval_concrete(inst, inst.lhs, env, full);
    ConcreteTensor r;
    try {
      r = eval_concrete(inst, inst.rhs, env, full);
    } catch (const ValidityViolation& v) {
      cx.detail = "rhs invalid: " + v.atom();
      cx.confirmed = true;
      return cx;
    }
    if (l.size_map() != r.size_map()) {
      cx.detail = "shapes differ: lhs " + l.str().substr(0, l.str().find('{')) + " rhs " + r.str().substr(0, r.str().find('{'));
      cx.confirmed = obligation != "value" || !l.contains(acc) || !r.contains(acc);
      if (obligation == "value" && l.contains(acc) && r.contains(acc)) cx.confirmed = false;
      return cx;
    }
    if (obligation == "value" || obligation.rfind("value", 0) == 0) {
      if (!l.contains(acc)) {
        cx.detail = "witness access outside the lhs";
        return cx;
      }
      Value a = l.at(acc), b = r.at(acc);
      cx.lhs_value = show(a);
      cx.rhs_value = show(b);
      cx.confirmed = a != b;
      cx.detail = cx.confirmed ? "values differ at the witness access" : "replay agrees at the witness access";
      return cx;
    }
    cx.detail = "replay found no difference";
  } catch (const ValidityViolation& v) {
    cx.detail = "lhs invalid under the model: " + v.atom();
  } catch (const std::exception& e) {
    cx.detail = std::string("replay failed: ") + e.what();
  }
  return cx;
}

namespace {

// Counterexample from a concrete differential-testing mismatch.
Counterexample from_mismatch(const Mismatch& m, const RankMap& ranks) {
  Counterexample cx;
  cx.ranks = ranks;
  cx.obligation = "oracle";
  for (auto& [n, v] : m.symbols) cx.symbols[n] = v.str();
  for (auto& [name, t] : m.inputs)
    t.for_each([&](const Index& i) {
      if (cx.entries.size() >= 512) return;
      std::vector<std::int64_t> pos;
      for (auto& n : t.order) pos.push_back(i.at(n));
      cx.entries.push_back(TensorEntry{name, pos, t.at(i).str()});
    });
  cx.access = m.access;
  if (m.lhs_value) cx.lhs_value = m.lhs_value->str();
  if (m.rhs_value) cx.rhs_value = m.rhs_value->str();
  cx.detail = "differential testing: " + m.reason;
  cx.confirmed = true;
  return cx;
}

}  // namespace

TaskResult verify_task(const RewriteRule& rule, const RankMap& ranks, const VerifyConfig& cfg) {
  auto t0 = Clock::now();
  TaskResult tr;
  tr.ranks = ranks;
  tr.name = task_name(ranks);
  InstRule inst = instantiate(rule, ranks, tr.name);
  TermBank& B = *inst.bank;
  Solver solver{cfg, rule.name, tr.name, B};
  auto done = [&](Outcome o, const std::string& reason) {
    tr.outcome = o;
    tr.reason = reason;
    tr.ms = ms_since(t0);
    return tr;
  };

  SymResult L, R;
  try {
    L = sym_eval(inst, inst.lhs, "L");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UnsupportedOp) return done(Outcome::Unsupported, e.what());
    throw;
  }
  try {
    R = sym_eval(inst, inst.rhs, "R");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::UnsupportedOp) return done(Outcome::Unsupported, e.what());
    Counterexample cx;
    cx.ranks = ranks;
    cx.obligation = "axes";
    cx.detail = std::string("rhs is ill-formed: ") + e.what();
    cx.confirmed = true;
    tr.counterexample = cx;
    tr.obligations.push_back(ObligationResult{"axes", "structural", 0, e.what()});
    return done(Outcome::Invalid, "rhs is ill-formed");
  }

  // (a) structural axes
  if (agg_keys(L.tensor.axes) != agg_keys(R.tensor.axes) || L.tensor.type != R.tensor.type) {
    Counterexample cx;
    cx.ranks = ranks;
    cx.obligation = "axes";
    cx.detail = "lhs and rhs have different axes or element types";
    cx.confirmed = true;
    tr.counterexample = cx;
    tr.obligations.push_back(ObligationResult{"axes", "structural", 0, cx.detail});
    return done(Outcome::Invalid, cx.detail);
  }
  tr.obligations.push_back(ObligationResult{"axes", "syntactic", 0, ""});

  std::map<std::string, std::string> alias = alias_map(cfg);
  std::vector<Term> base{inst.pre, L.valid(B)};
  for (auto& [from, to] : alias) {
    const InstTensor& a = inst.env.at(from);
    const InstTensor& b = inst.env.at(to);
    if (layout_of(a.shape) != layout_of(b.shape) || a.type != b.type)
      throw Error(ErrorCode::AxesMismatch, "aliased tensors " + from + " and " + to + " differ in axes or type");
    for (auto& [k, inner] : a.shape)
      for (auto& [n, s] : inner) base.push_back(B.eq(s, b.shape.at(k).at(n)));
  }
  AggMap A = symbolic_access(inst, L.tensor.axes);
  Term in_lhs = access_in_range(B, A, L.tensor.shape);
  Term in_rhs = access_in_range(B, A, R.tensor.shape);

  bool unknown = false;
  std::string unknown_reason;
  auto mark_unknown = [&](const std::string& why) {
    if (!unknown) unknown_reason = why;
    unknown = true;
  };

  // Returns true when the task is decided (Invalid or suspect).
  auto handle = [&](const Query& q, SolverResult r) -> bool {
    tr.obligations.push_back(record(q.name, r));
    if (r.status == SolverStatus::Unsat) return false;
    if (r.status != SolverStatus::Sat) {
      mark_unknown("obligation " + q.name + ": " + status_name(r.status));
      return false;
    }
    SolverResult small = solver.small_model(q, B, r);
    Counterexample cx;
    try {
      cx = extract_counterexample(small.model, inst, q.name, A);
    } catch (const Error& e) {
      cx.ranks = ranks;
      cx.obligation = q.name;
      cx.detail = e.what();
    }
    tr.counterexample = cx;
    if (cx.confirmed) {
      tr.outcome = Outcome::Invalid;
      tr.reason = "obligation " + q.name + " has a counterexample";
    } else {
      tr.outcome = Outcome::Unknown;
      tr.reason = "counterexample failed replay: " + cx.detail;
    }
    return true;
  };
  auto finish_decided = [&]() {
    tr.ms = ms_since(t0);
    return tr;
  };

  // (b) shapes
  std::vector<Term> shape_eq;
  for (auto& [k, inner] : L.tensor.shape)
    for (auto& [n, s] : inner) shape_eq.push_back(B.eq(s, R.tensor.shape.at(k).at(n)));
  Query qs{"shape", base, B.and_(shape_eq), {}};
  if (handle(qs, solver.run(qs))) return finish_decided();

  // (c) access range
  std::vector<Term> ac = base;
  ac.push_back(in_lhs);
  Query qa{"access", ac, in_rhs, {}};
  if (handle(qa, solver.run(qa))) return finish_decided();

  // (d) rhs validity, then values
  Query qv{"rhs-valid", base, R.valid(B), {}};
  if (handle(qv, solver.run(qv))) return finish_decided();

  std::unordered_map<Term, Term> memo;
  Term vl = rename_reads(B, normalize_reductions(B, L.tensor.value(A)), alias, memo);
  Term vr = rename_reads(B, normalize_reductions(B, R.tensor.value(A)), alias, memo);
  std::vector<Term> va = base;
  va.push_back(R.valid(B));
  va.push_back(in_lhs);
  if (!contains_kind(vl, Kind::Red) && !contains_kind(vr, Kind::Red)) {
    if (!prove_split(solver, B, "value", va, vl, vr, tr.obligations)) {
      Query q{"value", va, B.eq(vl, vr), {}};
      if (handle(q, solver.run(q))) return finish_decided();
    }
  } else {
    Discharge d = discharge_reductions(inst, vl, vr, va, cfg, "value");
    for (auto& o : d.obligations) tr.obligations.push_back(o);
    if (d.status != Discharge::Status::Proven) {
      FuzzOptions fo;
      fo.ranks = ranks;
      fo.seed = cfg.seed;
      FuzzReport fr = differential_test(rule, fo);
      if (fr.first) {
        tr.counterexample = from_mismatch(*fr.first, ranks);
        return done(Outcome::Invalid, "differential testing found a mismatch after: " + d.reason);
      }
      mark_unknown(d.reason);
    }
  }
  if (unknown) return done(Outcome::Unknown, unknown_reason);
  return done(Outcome::Verified, "");
}

Verdict verify(const RewriteRule& rule, const VerifyConfig& cfg) {
  auto t0 = Clock::now();
  Verdict v;
  v.rule = rule.name;
  v.bounds = analyze(rule);
  BoundReport effective = v.bounds;
  for (auto& [c, k] : cfg.rank_override) {
    auto it = effective.classes.find(c);
    if (it == effective.classes.end()) continue;
    if (k < it->second.bound) v.conclusive = false;
    it->second.bound = std::max(1, k);
  }
  std::vector<RankMap> tasks = task_set(effective);
  v.tasks.resize(tasks.size());
  std::vector<std::string> errors(tasks.size());
  std::vector<char> ran(tasks.size(), 0);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  auto worker = [&] {
    for (std::size_t k; !stop && (k = next++) < tasks.size();) {
      try {
        v.tasks[k] = verify_task(rule, tasks[k], cfg);
        ran[k] = 1;
        if (v.tasks[k].outcome == Outcome::Invalid && !cfg.all_tasks) stop = true;
      } catch (const std::exception& e) {
        errors[k] = e.what();
      }
    }
  };
  int jobs = std::max(1, std::min<int>(cfg.jobs, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (!e.empty()) throw std::runtime_error(e);
  std::vector<TaskResult> finished;
  for (std::size_t k = 0; k < tasks.size(); ++k)
    if (ran[k]) finished.push_back(std::move(v.tasks[k]));
  v.tasks = std::move(finished);

  bool invalid = false, unknown = false, unsupported = false;
  for (auto& t : v.tasks) {
    if (t.outcome == Outcome::Invalid) {
      if (!invalid) v.reason = t.name + ": " + t.reason;
      invalid = true;
    }
    if (t.outcome == Outcome::Unknown && !unknown && !unsupported && !invalid) v.reason = t.name + ": " + t.reason;
    if (t.outcome == Outcome::Unsupported && !unsupported && !invalid) v.reason = t.name + ": " + t.reason;
    unknown = unknown || t.outcome == Outcome::Unknown;
    unsupported = unsupported || t.outcome == Outcome::Unsupported;
  }
  v.overall = invalid ? Outcome::Invalid : unsupported ? Outcome::Unsupported : unknown ? Outcome::Unknown : Outcome::Verified;

  if (cfg.oracle_check && v.overall == Outcome::Verified) {
    for (auto& ranks : tasks) {
      FuzzOptions fo;
      fo.ranks = ranks;
      fo.seed = cfg.seed;
      FuzzReport fr = differential_test(rule, fo);
      v.oracle.push_back(OracleSummary{ranks, fr.trials, fr.mismatches, fr.exhausted});
      if (fr.mismatches > 0) {
        v.overall = Outcome::Unknown;
        v.reason = "differential testing disagrees with the proof at " + task_name(ranks);
      }
    }
  }
  v.ms = ms_since(t0);
  return v;
}

}  // namespace trv
