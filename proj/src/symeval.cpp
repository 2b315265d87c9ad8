#include "trv/symeval.h"

#include <set>

namespace trv {

namespace {

std::set<std::string> keys(const Layout& l) {
  std::set<std::string> out;
  for (auto& [k, v] : l) out.insert(k);
  return out;
}

template <class M>
std::set<std::string> keys_of(const std::map<std::string, M>& m) {
  std::set<std::string> out;
  for (auto& [k, v] : m) out.insert(k);
  return out;
}

std::string join(const std::set<std::string>& s) {
  std::string out = "{";
  for (auto& x : s) out += (out.size() > 1 ? "," : "") + x;
  return out + "}";
}

void need_axes(const std::set<std::string>& have, const std::set<std::string>& want, const char* what) {
  if (have != want)
    throw Error(ErrorCode::AxesMismatch, std::string(what) + ": axes " + join(have) + " vs " + join(want));
}

AggMap pick(const AggMap& m, const std::set<std::string>& ks) {
  AggMap out;
  for (auto& [k, v] : m)
    if (ks.count(k)) out[k] = v;
  return out;
}

AggMap drop(const AggMap& m, const std::set<std::string>& ks) {
  AggMap out;
  for (auto& [k, v] : m)
    if (!ks.count(k)) out[k] = v;
  return out;
}

AggMap merge(AggMap a, const AggMap& b) {
  for (auto& [k, v] : b) a[k] = v;
  return a;
}

bool numeric(Sort s) { return s != Sort::Bool; }

struct Evaluator {
  const InstRule& rule;
  TermBank& B;
  std::string tag;
  std::vector<Term> validity;
  int fresh = 0;

  using F2 = Term (TermBank::*)(Term, Term);

  AggMap zip(F2 f, const AggMap& a, const AggMap& b) {
    return agg_map_combine([&](const std::vector<Term>& x) { return (B.*f)(x[0], x[1]); }, {a, b});
  }
  AggMap zip_const(F2 f, const AggMap& a, std::int64_t c) {
    return agg_map_combine([&](const std::vector<Term>& x) { return (B.*f)(x[0], B.int_lit(c)); }, {a});
  }
  Term fold(F2 f, const AggMap& a, const AggMap& b) {
    return agg_map_fold(B, [&](const std::vector<Term>& x) { return (B.*f)(x[0], x[1]); }, {a, b});
  }
  Term fold_const(F2 f, const AggMap& a, std::int64_t c) {
    return agg_map_fold(B, [&](const std::vector<Term>& x) { return (B.*f)(x[0], B.int_lit(c)); }, {a});
  }
  AggMap constant_map(const Layout& l, std::int64_t c) {
    AggMap out;
    for (auto& [k, v] : l)
      for (auto& n : v) out[k][n] = B.int_lit(c);
    return out;
  }

  void assume(Term t) {
    if (!t->is_true()) validity.push_back(t);
  }

  void check_attr(const AggMap& m, const Layout& axes, const char* what) {
    need_axes(keys_of(m), keys(axes), what);
    validate_agg_map(m, &axes);
  }

  Layout layout_for(const AggMap& shape) {
    Layout l;
    for (auto& [k, v] : shape) {
      auto it = rule.inst.expansion.find(k);
      if (it == rule.inst.expansion.end()) throw Error(ErrorCode::UndeclaredIdentifier, "axis " + k);
      l[k] = it->second;
    }
    validate_agg_map(shape, &l);
    return l;
  }

  // ---- operators on symbolic tensors ----

  SymTensor var(const std::string& name) {
    auto it = rule.env.find(name);
    if (it == rule.env.end()) throw Error(ErrorCode::UndeclaredIdentifier, "tensor " + name);
    const InstTensor& d = it->second;
    SymTensor t;
    t.axes = layout_for(d.shape);
    t.shape = d.shape;
    t.type = d.type;
    assume(fold_const(&TermBank::ge, d.shape, 0));
    TermBank* b = &B;
    Layout axes = t.axes;
    Sort type = d.type;
    t.value = [b, name, axes, type](const AggMap& a) {
      std::vector<Term> idx;
      for (auto& [k, v] : axes)
        for (auto& n : v) idx.push_back(a.at(k).at(n));
      return b->read(name, type, idx);
    };
    return t;
  }

  SymTensor constant(const Value& v, const AggMap& shape) {
    SymTensor t;
    t.axes = layout_for(shape);
    t.shape = shape;
    t.type = v.sort;
    assume(fold_const(&TermBank::ge, shape, 0));
    Term c = B.lit(v);
    t.value = [c](const AggMap&) { return c; };
    return t;
  }

  void need_singleton(const std::string& x, const Layout& axes) {
    auto s = rule.singleton.find(x);
    if (s == rule.singleton.end() || !s->second || axes.at(x).size() != 1)
      throw Error(ErrorCode::NonSingletonAxis, "axis '" + x + "' must be a singleton axis");
  }

  SymTensor iota(const AggMap& shape, const std::string& x) {
    SymTensor t;
    t.axes = layout_for(shape);
    if (!t.axes.count(x)) throw Error(ErrorCode::AxesMismatch, "iota axis not in shape");
    need_singleton(x, t.axes);
    t.shape = shape;
    t.type = Sort::Int;
    assume(fold_const(&TermBank::ge, shape, 0));
    std::string n = t.axes.at(x)[0];
    t.value = [x, n](const AggMap& a) { return a.at(x).at(n); };
    return t;
  }

  SymTensor expand(const SymTensor& e, const AggMap& extra) {
    Layout el = layout_for(extra);
    for (auto& [k, v] : el)
      if (e.axes.count(k)) throw Error(ErrorCode::AxesMismatch, "expand over existing axis " + k);
    assume(fold_const(&TermBank::ge, extra, 0));
    SymTensor t = e;
    t.shape = merge(e.shape, extra);
    for (auto& [k, v] : el) t.axes[k] = v;
    std::set<std::string> inner = keys(e.axes);
    ValueFn f = e.value;
    t.value = [f, inner](const AggMap& a) { return f(pick(a, inner)); };
    return t;
  }

  SymTensor binary(BinOp op, const SymTensor& l, const SymTensor& r) {
    need_axes(keys(l.axes), keys(r.axes), "binary");
    if (l.type != r.type) throw Error(ErrorCode::UnsupportedOp, "binary over different element types");
    Sort in = l.type;
    Sort out = in;
    switch (op) {
      case BinOp::Add: case BinOp::Sub: case BinOp::Mul: case BinOp::Max: case BinOp::Min: case BinOp::Div:
        if (!numeric(in)) throw Error(ErrorCode::UnsupportedOp, "arithmetic on bool tensors");
        break;
      case BinOp::Rem:
        if (in != Sort::Int) throw Error(ErrorCode::UnsupportedOp, "rem needs int tensors");
        break;
      case BinOp::And: case BinOp::Or:
        if (in != Sort::Bool) throw Error(ErrorCode::UnsupportedOp, "and/or need bool tensors");
        break;
      case BinOp::Eq: case BinOp::Ne:
        out = Sort::Bool;
        break;
      case BinOp::Lt: case BinOp::Le: case BinOp::Gt: case BinOp::Ge:
        if (!numeric(in)) throw Error(ErrorCode::UnsupportedOp, "ordering on bool tensors");
        out = Sort::Bool;
        break;
    }
    assume(fold(&TermBank::eq, l.shape, r.shape));
    SymTensor t;
    t.axes = l.axes;
    t.shape = l.shape;
    t.type = out;
    TermBank* b = &B;
    ValueFn lf = l.value, rf = r.value;
    t.value = [b, op, in, lf, rf](const AggMap& a) {
      Term x = lf(a), y = rf(a);
      switch (op) {
        case BinOp::Add: return b->add(x, y);
        case BinOp::Sub: return b->sub(x, y);
        case BinOp::Mul: return b->mul(x, y);
        case BinOp::Div: return in == Sort::Int ? b->div(x, y) : b->rdiv(x, y);
        case BinOp::Rem: return b->mod(x, y);
        case BinOp::Max: return b->max(x, y);
        case BinOp::Min: return b->min(x, y);
        case BinOp::And: return b->and_(x, y);
        case BinOp::Or: return b->or_(x, y);
        case BinOp::Eq: return b->eq(x, y);
        case BinOp::Ne: return b->ne(x, y);
        case BinOp::Lt: return b->lt(x, y);
        case BinOp::Le: return b->le(x, y);
        case BinOp::Gt: return b->gt(x, y);
        case BinOp::Ge: return b->ge(x, y);
      }
      return x;
    };
    return t;
  }

  Term literal_for(const Value& v, Sort s) {
    if (v.sort == s) return B.lit(v);
    if (v.sort == Sort::Int && s == Sort::Real) return B.real_lit(Rational(v.i));
    throw Error(ErrorCode::UnsupportedOp, "padding value of the wrong element type");
  }

  SymTensor pad_low(const SymTensor& e, const Value& v, const AggMap& low) {
    check_attr(low, e.axes, "pad_low");
    AggMap out_shape = zip(&TermBank::add, e.shape, low);
    assume(fold_const(&TermBank::ge, out_shape, 0));
    SymTensor t = e;
    t.shape = out_shape;
    TermBank* b = &B;
    Term pv = literal_for(v, e.type);
    ValueFn f = e.value;
    t.value = [b, f, low, pv](const AggMap& a) {
      Term cond = agg_map_fold(*b, [&](const std::vector<Term>& x) { return b->ge(x[0], x[1]); }, {a, low});
      AggMap inner = agg_map_combine([&](const std::vector<Term>& x) { return b->sub(x[0], x[1]); }, {a, low});
      return b->ite(cond, f(inner), pv);
    };
    return t;
  }

  SymTensor pad(const SymTensor& e, const Value& v, const AggMap& low, const AggMap& high, const AggMap& interior) {
    check_attr(low, e.axes, "pad");
    check_attr(high, e.axes, "pad");
    check_attr(interior, e.axes, "pad");
    AggMap stretched = zip(&TermBank::add, e.shape, zip(&TermBank::mul, zip_const(&TermBank::sub, e.shape, 1), interior));
    AggMap limit = zip(&TermBank::add, stretched, low);
    AggMap out_shape = zip(&TermBank::add, limit, high);
    assume(fold_const(&TermBank::ge, interior, 0));
    assume(fold_const(&TermBank::ge, out_shape, 0));
    SymTensor t = e;
    t.shape = out_shape;
    TermBank* b = &B;
    Term pv = literal_for(v, e.type);
    ValueFn f = e.value;
    t.value = [b, f, low, limit, interior, pv](const AggMap& a) {
      Term cond = agg_map_fold(
          *b,
          [&](const std::vector<Term>& x) {
            Term off = b->sub(x[0], x[1]);
            return b->and_({b->ge(x[0], x[1]), b->lt(x[0], x[2]),
                            b->eq(b->mod(off, b->add(x[3], b->int_lit(1))), b->int_lit(0))});
          },
          {a, low, limit, interior});
      AggMap inner = agg_map_combine(
          [&](const std::vector<Term>& x) { return b->div(b->sub(x[0], x[1]), b->add(x[2], b->int_lit(1))); },
          {a, low, interior});
      return b->ite(cond, f(inner), pv);
    };
    return t;
  }

  SymTensor slice(const SymTensor& e, const AggMap& start, const AggMap& end, const AggMap& stride) {
    check_attr(start, e.axes, "slice");
    check_attr(end, e.axes, "slice");
    check_attr(stride, e.axes, "slice");
    assume(fold_const(&TermBank::ge, start, 0));
    assume(fold(&TermBank::le, start, end));
    assume(fold(&TermBank::le, end, e.shape));
    assume(fold_const(&TermBank::gt, stride, 0));
    SymTensor t = e;
    t.shape = agg_map_combine([&](const std::vector<Term>& x) { return B.ceil_div(B.sub(x[0], x[1]), x[2]); },
                              {end, start, stride});
    TermBank* b = &B;
    ValueFn f = e.value;
    t.value = [b, f, start, stride](const AggMap& a) {
      return f(agg_map_combine([&](const std::vector<Term>& x) { return b->add(x[1], b->mul(x[0], x[2])); },
                               {a, start, stride}));
    };
    return t;
  }

  SymTensor dy_slice(const SymTensor& e, const AggMap& start, const AggMap& sizes) {
    check_attr(start, e.axes, "dy_slice");
    check_attr(sizes, e.axes, "dy_slice");
    assume(fold(&TermBank::le, zip(&TermBank::add, start, sizes), e.shape));
    assume(fold_const(&TermBank::gt, sizes, 0));
    assume(fold_const(&TermBank::ge, start, 0));
    SymTensor t = e;
    t.shape = sizes;
    TermBank* b = &B;
    ValueFn f = e.value;
    t.value = [b, f, start](const AggMap& a) {
      return f(agg_map_combine([&](const std::vector<Term>& x) { return b->add(x[0], x[1]); }, {a, start}));
    };
    return t;
  }

  SymTensor dyup_slice(const SymTensor& e, const SymTensor& u, const AggMap& start) {
    need_axes(keys(e.axes), keys(u.axes), "dyup_slice");
    check_attr(start, e.axes, "dyup_slice");
    if (e.type != u.type) throw Error(ErrorCode::UnsupportedOp, "dyup_slice update of a different element type");
    assume(fold(&TermBank::le, zip(&TermBank::add, start, u.shape), e.shape));
    assume(fold_const(&TermBank::gt, u.shape, 0));
    assume(fold_const(&TermBank::ge, start, 0));
    SymTensor t = e;
    TermBank* b = &B;
    ValueFn f = e.value, g = u.value;
    AggMap ushape = u.shape;
    t.value = [b, f, g, start, ushape](const AggMap& a) {
      Term cond = agg_map_fold(
          *b,
          [&](const std::vector<Term>& x) { return b->and_(b->ge(x[0], x[1]), b->lt(x[0], b->add(x[1], x[2]))); },
          {a, start, ushape});
      AggMap inner = agg_map_combine([&](const std::vector<Term>& x) { return b->sub(x[0], x[1]); }, {a, start});
      return b->ite(cond, g(inner), f(a));
    };
    return t;
  }

  AggMap fresh_indices(const Layout& l) {
    std::string base = "red" + tag + std::to_string(fresh++);
    AggMap out;
    for (auto& [k, v] : l)
      for (auto& n : v) out[k][n] = B.sym(symbol_name(base, n, rule.inst.task), Sort::Int, n, Role::Index);
    return out;
  }

  void check_red(RedOp op, Sort s) {
    bool logical = op == RedOp::And || op == RedOp::Or;
    if (logical != (s == Sort::Bool)) throw Error(ErrorCode::UnsupportedOp, "reduction operator does not fit element type");
  }

  SymTensor reduce(RedOp op, const SymTensor& e, const std::vector<std::string>& axes,
                   const std::optional<AggMap>& named) {
    std::set<std::string> red(axes.begin(), axes.end());
    for (auto& x : red)
      if (!e.axes.count(x)) throw Error(ErrorCode::AxesMismatch, "reduce over absent axis " + x);
    check_red(op, e.type);
    Layout rl;
    for (auto& x : red) rl[x] = e.axes.at(x);
    AggMap idx;
    if (named) {
      if (keys_of(*named) != red) throw Error(ErrorCode::DomainMismatch, "reduction index names must cover the reduced axes");
      idx = *named;
    } else {
      idx = fresh_indices(rl);
    }
    std::vector<Term> syms, ranges;
    for (auto& [k, v] : rl)
      for (auto& n : v) {
        syms.push_back(idx.at(k).at(n));
        ranges.push_back(e.shape.at(k).at(n));
      }
    SymTensor t;
    t.axes = e.axes;
    for (auto& x : red) t.axes.erase(x);
    t.shape = drop(e.shape, red);
    t.type = e.type;
    TermBank* b = &B;
    ValueFn f = e.value;
    t.value = [b, f, op, syms, ranges, idx](const AggMap& a) { return b->red(op, syms, ranges, f(merge(a, idx))); };
    return t;
  }

  SymTensor relabel(const SymTensor& e, const std::map<std::string, std::string>& r) {
    std::map<std::string, std::string> full;
    for (auto& [k, v] : e.axes) full[k] = k;
    for (auto& [from, to] : r) {
      if (!e.axes.count(from)) throw Error(ErrorCode::AxesMismatch, "relabel of absent axis " + from);
      full[from] = to;
    }
    std::set<std::string> images;
    for (auto& [from, to] : full)
      if (!images.insert(to).second) throw Error(ErrorCode::AxesMismatch, "relabel is not injective");
    SymTensor t;
    t.type = e.type;
    // out named axis -> (in aggregated axis, in named axis)
    std::map<std::string, std::pair<std::string, std::string>> back;
    for (auto& [from, to] : full) {
      auto bij = rule.inst.map_axes(from, to);
      for (auto& n : e.axes.at(from)) {
        const std::string& m = bij.at(n);
        t.axes[to].push_back(m);
        t.shape[to][m] = e.shape.at(from).at(n);
        back[m] = {from, n};
      }
    }
    ValueFn f = e.value;
    auto rev = full;
    t.value = [f, full, back](const AggMap& a) {
      AggMap in;
      for (auto& [to_key, inner] : a)
        for (auto& [m, term] : inner) {
          auto& [from, n] = back.at(m);
          in[from][n] = term;
        }
      return f(in);
    };
    return t;
  }

  SymTensor concat(const SymTensor& l, const SymTensor& h, const std::string& x) {
    need_axes(keys(l.axes), keys(h.axes), "concat");
    if (!l.axes.count(x)) throw Error(ErrorCode::AxesMismatch, "concat axis absent");
    need_singleton(x, l.axes);
    if (l.type != h.type) throw Error(ErrorCode::UnsupportedOp, "concat of different element types");
    assume(fold(&TermBank::eq, drop(l.shape, {x}), drop(h.shape, {x})));
    SymTensor t = l;
    t.shape[x] = zip(&TermBank::add, pick(l.shape, {x}), pick(h.shape, {x})).at(x);
    const std::string n = l.axes.at(x)[0];
    Term off = l.shape.at(x).at(n);
    TermBank* b = &B;
    ValueFn lf = l.value, hf = h.value;
    t.value = [b, lf, hf, x, n, off](const AggMap& a) {
      Term i = a.at(x).at(n);
      AggMap shifted = a;
      shifted[x][n] = b->sub(i, off);
      return b->ite(b->ge(i, off), hf(shifted), lf(a));
    };
    return t;
  }

  SymTensor dot(const SymTensor& l, const SymTensor& r, const std::vector<std::string>& contract,
                const std::vector<std::string>& batch, const std::optional<AggMap>& named) {
    std::set<std::string> common;
    for (auto& [k, v] : l.axes)
      if (r.axes.count(k)) common.insert(k);
    std::set<std::string> c(contract.begin(), contract.end()), bt(batch.begin(), batch.end());
    for (auto& x : c)
      if (bt.count(x)) throw Error(ErrorCode::AxesMismatch, "axis both contracted and batched");
    std::set<std::string> cb = c;
    cb.insert(bt.begin(), bt.end());
    need_axes(cb, common, "dot");
    if (!numeric(l.type)) throw Error(ErrorCode::UnsupportedOp, "dot on bool tensors");
    SymTensor le = expand(l, drop(r.shape, common));
    SymTensor re = expand(r, drop(l.shape, common));
    return reduce(RedOp::Add, binary(BinOp::Mul, le, re), contract, named);
  }

  SymTensor conv_base(const SymTensor& in, const SymTensor& w, const std::vector<std::string>& batch,
                      const std::vector<std::string>& feature, const std::vector<std::string>& out,
                      const AggMap& stride, const std::optional<AggMap>& named) {
    std::set<std::string> xi = keys(in.axes), xw = keys(w.axes);
    std::set<std::string> xb(batch.begin(), batch.end()), xf(feature.begin(), feature.end()),
        xo(out.begin(), out.end()), xsp;
    std::set<std::string> only_i, only_w, both;
    for (auto& k : xi) (xw.count(k) ? both : only_i).insert(k);
    for (auto& k : xw)
      if (!xi.count(k)) only_w.insert(k);
    need_axes(xb, only_i, "conv batch");
    need_axes(xo, only_w, "conv out");
    for (auto& f : xf)
      if (!both.count(f)) throw Error(ErrorCode::AxesMismatch, "conv feature axis " + f + " not shared");
    for (auto& k : both)
      if (!xf.count(k)) xsp.insert(k);
    need_axes(keys_of(stride), xsp, "conv stride");
    if (in.type != w.type || !numeric(in.type)) throw Error(ErrorCode::UnsupportedOp, "conv element types");
    AggMap si_sp = pick(in.shape, xsp), sw_sp = pick(w.shape, xsp);
    assume(fold_const(&TermBank::gt, stride, 0));
    assume(fold(&TermBank::le, sw_sp, si_sp));
    assume(fold(&TermBank::eq, pick(in.shape, xf), pick(w.shape, xf)));
    SymTensor t;
    t.type = in.type;
    for (auto& k : xb) t.axes[k] = in.axes.at(k);
    for (auto& k : xo) t.axes[k] = w.axes.at(k);
    for (auto& k : xsp) t.axes[k] = in.axes.at(k);
    t.shape = merge(pick(in.shape, xb), pick(w.shape, xo));
    t.shape = merge(t.shape, agg_map_combine(
                                 [&](const std::vector<Term>& x) {
                                   return B.add(B.div(B.sub(x[0], x[1]), x[2]), B.int_lit(1));
                                 },
                                 {si_sp, sw_sp, stride}));
    std::set<std::string> red = xf;
    red.insert(xsp.begin(), xsp.end());
    Layout rl;
    for (auto& k : red) rl[k] = in.axes.at(k);
    AggMap idx;
    if (named) {
      if (keys_of(*named) != red) throw Error(ErrorCode::DomainMismatch, "conv index names must cover feature and spatial axes");
      idx = *named;
    } else {
      idx = fresh_indices(rl);
    }
    std::vector<Term> syms, ranges;
    for (auto& [k, v] : rl)
      for (auto& n : v) {
        syms.push_back(idx.at(k).at(n));
        ranges.push_back(xf.count(k) ? in.shape.at(k).at(n) : w.shape.at(k).at(n));
      }
    TermBank* b = &B;
    ValueFn fi = in.value, fw = w.value;
    t.value = [b, fi, fw, xb, xf, xo, xsp, idx, stride, syms, ranges](const AggMap& a) {
      AggMap ai = pick(a, xb), aw = pick(a, xo);
      for (auto& k : xf) ai[k] = aw[k] = idx.at(k);
      for (auto& k : xsp) {
        aw[k] = idx.at(k);
        for (auto& [n, j] : idx.at(k)) ai[k][n] = b->add(b->mul(a.at(k).at(n), stride.at(k).at(n)), j);
      }
      return b->red(RedOp::Add, syms, ranges, b->mul(fi(ai), fw(aw)));
    };
    return t;
  }

  SymTensor conv(const SymTensor& in, const SymTensor& w, const std::vector<std::string>& batch,
                 const std::vector<std::string>& feature, const std::vector<std::string>& out,
                 const std::vector<AggMap>& m, const std::optional<AggMap>& named) {
    const AggMap &low = m.at(0), &high = m.at(1), &ldil = m.at(2), &rdil = m.at(3), &stride = m.at(4);
    std::set<std::string> sp;
    for (auto& [k, v] : in.axes)
      if (w.axes.count(k) && std::find(feature.begin(), feature.end(), k) == feature.end()) sp.insert(k);
    for (auto* a : {&low, &high, &ldil, &rdil}) need_axes(keys_of(*a), sp, "conv padding");
    auto widen = [&](const AggMap& a, const Layout& l, std::int64_t dflt, std::int64_t shift) {
      AggMap full = constant_map(l, dflt);
      for (auto& [k, v] : a) full[k] = shift ? zip_const(&TermBank::sub, pick(a, {k}), shift).at(k) : v;
      return full;
    };
    Value zero = Value::zero(in.type);
    SymTensor pi = pad(in, zero, widen(low, in.axes, 0, 0), widen(high, in.axes, 0, 0), widen(ldil, in.axes, 0, 1));
    AggMap wz = constant_map(w.axes, 0);
    SymTensor pw = pad(w, zero, wz, wz, widen(rdil, w.axes, 0, 1));
    return conv_base(pi, pw, batch, feature, out, stride, named);
  }

  SymTensor reverse(const SymTensor& e, const std::vector<std::string>& axes) {
    std::set<std::string> rs(axes.begin(), axes.end());
    for (auto& x : rs)
      if (!e.axes.count(x)) throw Error(ErrorCode::AxesMismatch, "reverse of absent axis " + x);
    SymTensor t = e;
    TermBank* b = &B;
    ValueFn f = e.value;
    AggMap shape = e.shape;
    t.value = [b, f, rs, shape](const AggMap& a) {
      AggMap in = a;
      for (auto& x : rs)
        for (auto& [n, i] : in[x]) i = b->sub(b->sub(shape.at(x).at(n), i), b->int_lit(1));
      return f(in);
    };
    return t;
  }

  SymTensor select(const SymTensor& p, const SymTensor& a, const SymTensor& c) {
    need_axes(keys(p.axes), keys(a.axes), "select");
    need_axes(keys(a.axes), keys(c.axes), "select");
    if (p.type != Sort::Bool) throw Error(ErrorCode::UnsupportedOp, "select predicate must be bool");
    if (a.type != c.type) throw Error(ErrorCode::UnsupportedOp, "select branches of different types");
    assume(fold(&TermBank::eq, p.shape, a.shape));
    assume(fold(&TermBank::eq, a.shape, c.shape));
    SymTensor t = a;
    TermBank* b = &B;
    ValueFn pf = p.value, af = a.value, cf = c.value;
    t.value = [b, pf, af, cf](const AggMap& x) { return b->ite(pf(x), af(x), cf(x)); };
    return t;
  }

  SymTensor eval(const InstExprPtr& e) {
    auto arg = [&](int k) { return eval(e->args.at(k)); };
    switch (e->op) {
      case Op::Var: return var(e->var);
      case Op::Const: return constant(e->literal, e->maps.at(0));
      case Op::Iota: return iota(e->maps.at(0), e->axis);
      case Op::Expand: return expand(arg(0), e->maps.at(0));
      case Op::Binary: return binary(e->fn, arg(0), arg(1));
      case Op::PadLow: return pad_low(arg(0), e->literal, e->maps.at(0));
      case Op::Pad: return pad(arg(0), e->literal, e->maps.at(0), e->maps.at(1), e->maps.at(2));
      case Op::Slice: return slice(arg(0), e->maps.at(0), e->maps.at(1), e->maps.at(2));
      case Op::DySlice: return dy_slice(arg(0), e->maps.at(0), e->maps.at(1));
      case Op::DyUpSlice: return dyup_slice(arg(0), arg(1), e->maps.at(0));
      case Op::Reduce: return reduce(e->red, arg(0), e->axis_sets.at(0), e->indices);
      case Op::Relabel: return relabel(arg(0), e->relabel);
      case Op::Concat: return concat(arg(0), arg(1), e->axis);
      case Op::Dot: return dot(arg(0), arg(1), e->axis_sets.at(0), e->axis_sets.at(1), e->indices);
      case Op::ConvBase:
        return conv_base(arg(0), arg(1), e->axis_sets.at(0), e->axis_sets.at(1), e->axis_sets.at(2), e->maps.at(0),
                         e->indices);
      case Op::Conv:
        return conv(arg(0), arg(1), e->axis_sets.at(0), e->axis_sets.at(1), e->axis_sets.at(2), e->maps, e->indices);
      case Op::Reverse: return reverse(arg(0), e->axis_sets.at(0));
      case Op::Select: return select(arg(0), arg(1), arg(2));
      case Op::Clamp: {
        SymTensor lo = arg(0), x = arg(1), hi = arg(2);
        return binary(BinOp::Min, binary(BinOp::Max, x, lo), hi);
      }
    }
    throw Error(ErrorCode::UnsupportedOp, op_name(e->op));
  }
};

}  // namespace

SymResult sym_eval(const InstRule& rule, const InstExprPtr& e, const std::string& tag) {
  Evaluator ev{rule, *rule.bank, tag, {}, 0};
  SymResult r;
  r.tensor = ev.eval(e);
  r.validity = std::move(ev.validity);
  return r;
}

AggMap shape_of(const InstRule& rule, const InstExprPtr& e) { return sym_eval(rule, e, "s").tensor.shape; }

AggMap symbolic_access(const InstRule& rule, const Layout& axes, const std::string& prefix) {
  AggMap out;
  for (auto& [k, v] : axes)
    for (auto& n : v) out[k][n] = rule.bank->sym(symbol_name(prefix, n, rule.inst.task), Sort::Int, n, Role::Access);
  return out;
}

Term access_in_range(TermBank& bank, const AggMap& access, const AggMap& shape) {
  return agg_map_fold(
      bank,
      [&](const std::vector<Term>& x) { return bank.and_(bank.ge(x[0], bank.int_lit(0)), bank.lt(x[0], x[1])); },
      {access, shape});
}

namespace {

bool mentions_any(Term t, const std::set<Term>& syms) {
  for (Term s : free_symbols(t))
    if (syms.count(s)) return true;
  return false;
}

std::set<Term> binders(Term red) {
  std::set<Term> out;
  for (std::size_t k = 0; k < red->red_arity(); ++k) out.insert(red->red_index(k));
  return out;
}

std::vector<Term> red_indices(Term red) {
  std::vector<Term> v;
  for (std::size_t k = 0; k < red->red_arity(); ++k) v.push_back(red->red_index(k));
  return v;
}

std::vector<Term> red_ranges(Term red) {
  std::vector<Term> v;
  for (std::size_t k = 0; k < red->red_arity(); ++k) v.push_back(red->red_range(k));
  return v;
}

bool is_sum(Term t) { return t->kind == Kind::Red && t->red_op() == RedOp::Add; }

struct Normalizer {
  TermBank& B;
  std::map<Term, Term> memo;

  // One rewrite at the root, or nullptr.
  Term step(Term t) {
    if (t->kind == Kind::Mul) {
      Term a = t->kids[0], b = t->kids[1];
      if (is_sum(a) && is_sum(b)) {
        std::set<Term> xa = binders(a), xb = binders(b);
        bool clash = mentions_any(b, xa) || mentions_any(a, xb);
        for (Term x : xa) clash = clash || xb.count(x);
        if (!clash) {
          auto idx = red_indices(a), rng = red_ranges(a);
          auto idx2 = red_indices(b), rng2 = red_ranges(b);
          idx.insert(idx.end(), idx2.begin(), idx2.end());
          rng.insert(rng.end(), rng2.begin(), rng2.end());
          return B.red(RedOp::Add, idx, rng, B.mul(a->red_body(), b->red_body()));
        }
      }
      if (is_sum(b) && !mentions_any(a, binders(b)))
        return B.red(RedOp::Add, red_indices(b), red_ranges(b), B.mul(a, b->red_body()));
      if (is_sum(a) && !mentions_any(b, binders(a)))
        return B.red(RedOp::Add, red_indices(a), red_ranges(a), B.mul(a->red_body(), b));
    }
    if (t->kind == Kind::Red) {
      Term body = t->red_body();
      if (body->kind == Kind::Red && body->red_op() == t->red_op()) {
        std::set<Term> outer = binders(t);
        bool dependent = false;
        for (Term r : red_ranges(body)) dependent = dependent || mentions_any(r, outer);
        if (!dependent) {
          auto idx = red_indices(t), rng = red_ranges(t);
          auto idx2 = red_indices(body), rng2 = red_ranges(body);
          idx.insert(idx.end(), idx2.begin(), idx2.end());
          rng.insert(rng.end(), rng2.begin(), rng2.end());
          return B.red(t->red_op(), idx, rng, body->red_body());
        }
      }
    }
    return nullptr;
  }

  Term go(Term t) {
    if (t->kids.empty()) return t;
    auto it = memo.find(t);
    if (it != memo.end()) return it->second;
    std::vector<Term> kids;
    for (Term k : t->kids) kids.push_back(go(k));
    Term r = B.rebuild(t, kids);
    while (Term s = step(r)) r = go(s);
    memo.emplace(t, r);
    return r;
  }
};

}  // namespace

Term normalize_reductions(TermBank& bank, Term t) {
  Normalizer n{bank, {}};
  return n.go(t);
}

}  // namespace trv
