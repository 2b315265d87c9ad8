#include "trv/concrete.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "trv/canon.h"
#include "trv/error.h"
#include "trv/symeval.h"

namespace trv {

namespace {
thread_local std::size_t element_limit = 5'000'000;
}

void for_each_index(const std::vector<std::string>& order, const std::vector<std::int64_t>& sizes,
                    const std::function<void(const Index&)>& f) {
  for (auto s : sizes)
    if (s <= 0) return;
  Index idx;
  for (auto& n : order) idx[n] = 0;
  while (true) {
    f(idx);
    std::size_t k = order.size();
    bool done = true;
    while (k-- > 0) {
      if (++idx[order[k]] < sizes[k]) {
        done = false;
        break;
      }
      idx[order[k]] = 0;
    }
    if (done) return;
  }
}

ConcreteTensor ConcreteTensor::make(const Layout& axes, const Index& sizes, Sort type, const Value& fill) {
  ConcreteTensor t;
  t.axes = axes;
  t.order = named_axes(axes);
  std::size_t n = 1;
  for (auto& a : t.order) {
    std::int64_t s = sizes.at(a);
    if (s < 0) throw ValidityViolation("size of " + a + " >= 0");
    t.sizes.push_back(s);
    if (s > 0 && n > element_limit / static_cast<std::size_t>(s)) n = element_limit + 1;
    else n *= static_cast<std::size_t>(s);
  }
  if (n > element_limit) throw TooLarge("tensor too large for the concrete interpreter");
  t.type = type;
  t.data.assign(n, fill);
  return t;
}

std::int64_t ConcreteTensor::size(const std::string& named) const {
  for (std::size_t k = 0; k < order.size(); ++k)
    if (order[k] == named) return sizes[k];
  throw EvalError("no axis " + named);
}

Index ConcreteTensor::size_map() const {
  Index m;
  for (std::size_t k = 0; k < order.size(); ++k) m[order[k]] = sizes[k];
  return m;
}

bool ConcreteTensor::contains(const Index& idx) const {
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto it = idx.find(order[k]);
    if (it == idx.end() || it->second < 0 || it->second >= sizes[k]) return false;
  }
  return true;
}

const Value& ConcreteTensor::at(const Index& idx) const {
  std::size_t off = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    std::int64_t i = idx.at(order[k]);
    if (i < 0 || i >= sizes[k]) throw EvalError("index out of range on " + order[k]);
    off = off * sizes[k] + i;
  }
  return data.at(off);
}

Value& ConcreteTensor::at(const Index& idx) { return const_cast<Value&>(static_cast<const ConcreteTensor&>(*this).at(idx)); }

std::optional<Value> ConcreteTensor::get(const std::vector<std::int64_t>& idx) const {
  if (idx.size() != order.size()) return std::nullopt;
  std::size_t off = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (idx[k] < 0 || idx[k] >= sizes[k]) return std::nullopt;
    off = off * sizes[k] + idx[k];
  }
  return data.at(off);
}

void ConcreteTensor::for_each(const std::function<void(const Index&)>& f) const { for_each_index(order, sizes, f); }

bool ConcreteTensor::operator==(const ConcreteTensor& o) const {
  return axes == o.axes && sizes == o.sizes && type == o.type && data == o.data;
}

std::string ConcreteTensor::str() const {
  std::ostringstream os;
  os << "[";
  for (std::size_t k = 0; k < order.size(); ++k) os << (k ? " " : "") << order[k] << "=" << sizes[k];
  os << "]{";
  for (std::size_t k = 0; k < data.size(); ++k) os << (k ? "," : "") << data[k].str();
  os << "}";
  return os.str();
}

Model model_with_env(const std::map<std::string, Value>& symbols, const Env& env) {
  Model m;
  m.symbols = symbols;
  const Env* e = &env;
  m.read = [e](const std::string& name, const std::vector<std::int64_t>& idx) -> std::optional<Value> {
    auto it = e->find(name);
    if (it == e->end()) return std::nullopt;
    return it->second.get(idx);
  };
  return m;
}

namespace {

using Ints = std::map<std::string, std::map<std::string, std::int64_t>>;  // agg -> named -> value

std::set<std::string> key_set(const Layout& l) {
  std::set<std::string> s;
  for (auto& [k, v] : l) s.insert(k);
  return s;
}

void same_keys(const Layout& a, const Layout& b, const char* what) {
  if (key_set(a) != key_set(b)) throw Error(ErrorCode::AxesMismatch, what);
}

Index flatten(const Ints& m) {
  Index out;
  for (auto& [k, inner] : m)
    for (auto& [n, v] : inner) out[n] = v;
  return out;
}

Value scalar_op(BinOp op, const Value& a, const Value& b) {
  switch (op) {
    case BinOp::Add: return apply_kind(Kind::Add, a, b);
    case BinOp::Sub: return apply_kind(Kind::Sub, a, b);
    case BinOp::Mul: return apply_kind(Kind::Mul, a, b);
    case BinOp::Div: return apply_kind(a.sort == Sort::Int ? Kind::Div : Kind::RDiv, a, b);
    case BinOp::Rem: return apply_kind(Kind::Mod, a, b);
    case BinOp::Max: return apply_kind(Kind::Max, a, b);
    case BinOp::Min: return apply_kind(Kind::Min, a, b);
    case BinOp::And: return Value::of_bool(a.b && b.b);
    case BinOp::Or: return Value::of_bool(a.b || b.b);
    case BinOp::Eq: return Value::of_bool(a == b);
    case BinOp::Ne: return Value::of_bool(a != b);
    case BinOp::Lt: return Value::of_bool(a < b);
    case BinOp::Le: return Value::of_bool(!(b < a));
    case BinOp::Gt: return Value::of_bool(b < a);
    case BinOp::Ge: return Value::of_bool(!(a < b));
  }
  return a;
}

Sort result_sort(BinOp op, Sort in) {
  switch (op) {
    case BinOp::Eq: case BinOp::Ne: case BinOp::Lt: case BinOp::Le: case BinOp::Gt: case BinOp::Ge:
      return Sort::Bool;
    default: return in;
  }
}

struct Interp {
  const InstRule& rule;
  const Env& env;
  const Model& attrs;

  Ints attr(const AggMap& m) {
    Ints out;
    for (auto& [k, inner] : m)
      for (auto& [n, t] : inner) out[k][n] = evaluate(t, attrs).i;
    return out;
  }

  static void check(bool ok, const std::string& atom) {
    if (!ok) throw ValidityViolation(atom);
  }

  Layout layout_for(const Ints& shape) {
    Layout l;
    for (auto& [k, inner] : shape) l[k] = rule.inst.expansion.at(k);
    return l;
  }

  void need_keys(const Ints& m, const Layout& l, const char* what) {
    std::set<std::string> ks;
    for (auto& [k, v] : m) ks.insert(k);
    if (ks != key_set(l)) throw Error(ErrorCode::AxesMismatch, what);
  }

  void need_singleton(const std::string& x, const Layout& l) {
    auto s = rule.singleton.find(x);
    if (s == rule.singleton.end() || !s->second || !l.count(x) || l.at(x).size() != 1)
      throw Error(ErrorCode::NonSingletonAxis, x);
  }

  ConcreteTensor var(const std::string& name) {
    const InstTensor& d = rule.env.at(name);
    Ints want = attr(d.shape);
    for (auto& [k, inner] : want)
      for (auto& [n, v] : inner) check(v >= 0, "size of " + name + " along " + n + " >= 0");
    auto it = env.find(name);
    if (it == env.end()) throw EvalError("no input for " + name);
    const ConcreteTensor& t = it->second;
    if (t.size_map() != flatten(want)) throw EvalError("input " + name + " disagrees with its declared shape");
    return t;
  }

  ConcreteTensor filled(const Ints& shape, Sort type, const Value& v, const char* what) {
    for (auto& [k, inner] : shape)
      for (auto& [n, s] : inner) check(s >= 0, std::string(what) + " size along " + n + " >= 0");
    return ConcreteTensor::make(layout_for(shape), flatten(shape), type, v);
  }

  ConcreteTensor expand(const ConcreteTensor& e, const Ints& extra) {
    for (auto& [k, v] : extra)
      if (e.axes.count(k)) throw Error(ErrorCode::AxesMismatch, "expand over existing axis");
    for (auto& [k, inner] : extra)
      for (auto& [n, s] : inner) check(s >= 0, "expand size along " + n + " >= 0");
    Layout l = e.axes;
    for (auto& [k, v] : layout_for(extra)) l[k] = v;
    Index sizes = e.size_map();
    for (auto& [n, s] : flatten(extra)) sizes[n] = s;
    ConcreteTensor out = ConcreteTensor::make(l, sizes, e.type, Value::zero(e.type));
    out.for_each([&](const Index& i) { out.at(i) = e.at(i); });
    return out;
  }

  ConcreteTensor binary(BinOp op, const ConcreteTensor& a, const ConcreteTensor& b) {
    same_keys(a.axes, b.axes, "binary over different axes");
    if (a.type != b.type) throw Error(ErrorCode::UnsupportedOp, "binary element types");
    for (auto& n : a.order) check(a.size(n) == b.size(n), "binary operand sizes equal along " + n);
    Sort rs = result_sort(op, a.type);
    ConcreteTensor out = ConcreteTensor::make(a.axes, a.size_map(), rs, Value::zero(rs));
    for (std::size_t k = 0; k < out.data.size(); ++k) out.data[k] = scalar_op(op, a.data[k], b.data[k]);
    return out;
  }

  Value pad_value(const Value& v, Sort s) {
    if (v.sort == s) return v;
    if (v.sort == Sort::Int && s == Sort::Real) return Value::of_real(Rational(v.i));
    throw Error(ErrorCode::UnsupportedOp, "padding value type");
  }

  // Places input element i at low + i * (interior + 1); everything else is `v`.
  ConcreteTensor pad(const ConcreteTensor& e, const Value& v, const Index& low, const Index& high,
                     const Index& interior) {
    Index out_sizes;
    for (auto& n : e.order) {
      std::int64_t s = e.size(n);
      check(interior.at(n) >= 0, "interior padding along " + n + " >= 0");
      std::int64_t so = s + (s - 1) * interior.at(n) + low.at(n) + high.at(n);
      check(so >= 0, "padded size along " + n + " >= 0");
      out_sizes[n] = so;
    }
    ConcreteTensor out = ConcreteTensor::make(e.axes, out_sizes, e.type, pad_value(v, e.type));
    e.for_each([&](const Index& i) {
      Index j;
      for (auto& [n, x] : i) j[n] = low.at(n) + x * (interior.at(n) + 1);
      if (out.contains(j)) out.at(j) = e.at(i);
    });
    return out;
  }

  ConcreteTensor pad_low(const ConcreteTensor& e, const Value& v, const Index& low) {
    Index out_sizes;
    for (auto& n : e.order) {
      std::int64_t so = e.size(n) + low.at(n);
      check(so >= 0, "pad_low size along " + n + " >= 0");
      out_sizes[n] = so;
    }
    ConcreteTensor out = ConcreteTensor::make(e.axes, out_sizes, e.type, pad_value(v, e.type));
    e.for_each([&](const Index& i) {
      Index j;
      for (auto& [n, x] : i) j[n] = x + low.at(n);
      if (out.contains(j)) out.at(j) = e.at(i);
    });
    return out;
  }

  ConcreteTensor slice(const ConcreteTensor& e, const Index& start, const Index& end, const Index& stride) {
    Index out_sizes;
    std::map<std::string, std::vector<std::int64_t>> picks;
    for (auto& n : e.order) {
      check(start.at(n) >= 0, "slice start along " + n + " >= 0");
      check(start.at(n) <= end.at(n), "slice start <= end along " + n);
      check(end.at(n) <= e.size(n), "slice end <= size along " + n);
      check(stride.at(n) > 0, "slice stride along " + n + " > 0");
      for (std::int64_t i = start.at(n); i < end.at(n); i += stride.at(n)) picks[n].push_back(i);
      out_sizes[n] = static_cast<std::int64_t>(picks[n].size());
    }
    ConcreteTensor out = ConcreteTensor::make(e.axes, out_sizes, e.type, Value::zero(e.type));
    out.for_each([&](const Index& i) {
      Index j;
      for (auto& [n, x] : i) j[n] = picks[n][x];
      out.at(i) = e.at(j);
    });
    return out;
  }

  ConcreteTensor dy_slice(const ConcreteTensor& e, const Index& start, const Index& sizes) {
    for (auto& n : e.order) {
      check(start.at(n) + sizes.at(n) <= e.size(n), "dy_slice start + size <= operand size along " + n);
      check(sizes.at(n) > 0, "dy_slice size along " + n + " > 0");
      check(start.at(n) >= 0, "dy_slice start along " + n + " >= 0");
    }
    ConcreteTensor out = ConcreteTensor::make(e.axes, sizes, e.type, Value::zero(e.type));
    out.for_each([&](const Index& i) {
      Index j;
      for (auto& [n, x] : i) j[n] = x + start.at(n);
      out.at(i) = e.at(j);
    });
    return out;
  }

  ConcreteTensor dyup_slice(const ConcreteTensor& e, const ConcreteTensor& u, const Index& start) {
    same_keys(e.axes, u.axes, "dyup_slice over different axes");
    for (auto& n : e.order) {
      check(start.at(n) + u.size(n) <= e.size(n), "dyup_slice start + update size <= operand size along " + n);
      check(u.size(n) > 0, "dyup_slice update size along " + n + " > 0");
      check(start.at(n) >= 0, "dyup_slice start along " + n + " >= 0");
    }
    ConcreteTensor out = e;
    u.for_each([&](const Index& i) {
      Index j;
      for (auto& [n, x] : i) j[n] = x + start.at(n);
      out.at(j) = u.at(i);
    });
    return out;
  }

  ConcreteTensor reduce(RedOp op, const ConcreteTensor& e, const std::vector<std::string>& axes) {
    std::set<std::string> red(axes.begin(), axes.end());
    for (auto& x : red)
      if (!e.axes.count(x)) throw Error(ErrorCode::AxesMismatch, "reduce over absent axis");
    Layout l;
    Index sizes;
    for (auto& [k, v] : e.axes) {
      if (red.count(k)) continue;
      l[k] = v;
      for (auto& n : v) sizes[n] = e.size(n);
    }
    ConcreteTensor out = ConcreteTensor::make(l, sizes, e.type, reduction_identity(op, e.type));
    e.for_each([&](const Index& i) {
      Index j;
      for (auto& n : out.order) j[n] = i.at(n);
      Value& cell = out.at(j);
      cell = reduction_step(op, cell, e.at(i));
    });
    return out;
  }

  ConcreteTensor relabel(const ConcreteTensor& e, const std::map<std::string, std::string>& r) {
    std::map<std::string, std::string> full;
    for (auto& [k, v] : e.axes) full[k] = k;
    for (auto& [from, to] : r) {
      if (!e.axes.count(from)) throw Error(ErrorCode::AxesMismatch, "relabel of absent axis");
      full[from] = to;
    }
    std::set<std::string> images;
    for (auto& [from, to] : full)
      if (!images.insert(to).second) throw Error(ErrorCode::AxesMismatch, "relabel is not injective");
    std::map<std::string, std::string> rename;
    Layout l;
    Index sizes;
    for (auto& [from, to] : full) {
      auto bij = rule.inst.map_axes(from, to);
      for (auto& n : e.axes.at(from)) {
        rename[n] = bij.at(n);
        l[to].push_back(bij.at(n));
        sizes[bij.at(n)] = e.size(n);
      }
    }
    ConcreteTensor out = ConcreteTensor::make(l, sizes, e.type, Value::zero(e.type));
    e.for_each([&](const Index& i) {
      Index j;
      for (auto& [n, x] : i) j[rename.at(n)] = x;
      out.at(j) = e.at(i);
    });
    return out;
  }

  ConcreteTensor concat(const ConcreteTensor& a, const ConcreteTensor& b, const std::string& x) {
    same_keys(a.axes, b.axes, "concat over different axes");
    need_singleton(x, a.axes);
    if (a.type != b.type) throw Error(ErrorCode::UnsupportedOp, "concat element types");
    const std::string n = a.axes.at(x)[0];
    for (auto& m : a.order)
      if (m != n) check(a.size(m) == b.size(m), "concat operand sizes equal along " + m);
    Index sizes = a.size_map();
    sizes[n] = a.size(n) + b.size(n);
    ConcreteTensor out = ConcreteTensor::make(a.axes, sizes, a.type, Value::zero(a.type));
    a.for_each([&](const Index& i) { out.at(i) = a.at(i); });
    b.for_each([&](const Index& i) {
      Index j = i;
      j[n] += a.size(n);
      out.at(j) = b.at(i);
    });
    return out;
  }

  ConcreteTensor dot(const ConcreteTensor& a, const ConcreteTensor& b, const std::vector<std::string>& contract,
                     const std::vector<std::string>& batch) {
    std::set<std::string> common;
    for (auto& [k, v] : a.axes)
      if (b.axes.count(k)) common.insert(k);
    std::set<std::string> cb(contract.begin(), contract.end());
    for (auto& x : batch)
      if (!cb.insert(x).second) throw Error(ErrorCode::AxesMismatch, "axis both contracted and batched");
    if (cb != common) throw Error(ErrorCode::AxesMismatch, "dot axes");
    auto extra = [&](const ConcreteTensor& t) {
      Ints m;
      for (auto& [k, v] : t.axes)
        if (!common.count(k))
          for (auto& n : v) m[k][n] = t.size(n);
      return m;
    };
    ConcreteTensor ae = expand(a, extra(b));
    ConcreteTensor be = expand(b, extra(a));
    return reduce(RedOp::Add, binary(BinOp::Mul, ae, be), contract);
  }

  // conv-base: each output element sums input times weights over the feature axes and a strided spatial window.
  ConcreteTensor conv_base(const ConcreteTensor& in, const ConcreteTensor& w, const std::vector<std::string>& batch,
                           const std::vector<std::string>& feature, const std::vector<std::string>& outs,
                           const Ints& stride) {
    std::set<std::string> xb(batch.begin(), batch.end()), xf(feature.begin(), feature.end()),
        xo(outs.begin(), outs.end()), xsp, only_i, only_w;
    for (auto& [k, v] : in.axes)
      if (!w.axes.count(k)) only_i.insert(k);
      else if (!xf.count(k)) xsp.insert(k);
    for (auto& [k, v] : w.axes)
      if (!in.axes.count(k)) only_w.insert(k);
    for (auto& f : xf)
      if (!in.axes.count(f) || !w.axes.count(f)) throw Error(ErrorCode::AxesMismatch, "conv feature axis");
    if (xb != only_i || xo != only_w) throw Error(ErrorCode::AxesMismatch, "conv batch/out axes");
    std::set<std::string> sk;
    for (auto& [k, v] : stride) sk.insert(k);
    if (sk != xsp) throw Error(ErrorCode::AxesMismatch, "conv stride axes");
    Index st = flatten(stride);
    for (auto& k : xsp)
      for (auto& n : in.axes.at(k)) {
        check(st.at(n) > 0, "conv stride along " + n + " > 0");
        check(w.size(n) <= in.size(n), "conv window fits input along " + n);
      }
    for (auto& k : xf)
      for (auto& n : in.axes.at(k)) check(in.size(n) == w.size(n), "conv feature sizes equal along " + n);
    Layout l;
    Index sizes;
    for (auto& k : xb) {
      l[k] = in.axes.at(k);
      for (auto& n : l[k]) sizes[n] = in.size(n);
    }
    for (auto& k : xo) {
      l[k] = w.axes.at(k);
      for (auto& n : l[k]) sizes[n] = w.size(n);
    }
    for (auto& k : xsp) {
      l[k] = in.axes.at(k);
      for (auto& n : l[k]) sizes[n] = euclid_div(in.size(n) - w.size(n), st.at(n)) + 1;
    }
    ConcreteTensor out = ConcreteTensor::make(l, sizes, in.type, Value::zero(in.type));
    std::vector<std::string> window;  // weight axes summed for each output element
    std::set<std::string> spatial;
    for (auto& k : xf)
      for (auto& n : w.axes.at(k)) window.push_back(n);
    for (auto& k : xsp)
      for (auto& n : w.axes.at(k)) {
        window.push_back(n);
        spatial.insert(n);
      }
    std::vector<std::int64_t> wsizes;
    for (auto& n : window) wsizes.push_back(w.size(n));
    out.for_each([&](const Index& j) {
      Index wi, ii;
      for (auto& k : xo)
        for (auto& n : w.axes.at(k)) wi[n] = j.at(n);
      for (auto& k : xb)
        for (auto& n : in.axes.at(k)) ii[n] = j.at(n);
      Value acc = reduction_identity(RedOp::Add, in.type);
      for_each_index(window, wsizes, [&](const Index& q) {
        for (auto& [n, x] : q) {
          wi[n] = x;
          ii[n] = spatial.count(n) ? j.at(n) * st.at(n) + x : x;
        }
        acc = reduction_step(RedOp::Add, acc, scalar_op(BinOp::Mul, in.at(ii), w.at(wi)));
      });
      out.at(j) = acc;
    });
    return out;
  }

  ConcreteTensor conv(const ConcreteTensor& in, const ConcreteTensor& w, const InstExpr& e) {
    const auto& feature = e.axis_sets.at(1);
    std::set<std::string> sp;
    for (auto& [k, v] : in.axes)
      if (w.axes.count(k) && std::find(feature.begin(), feature.end(), k) == feature.end()) sp.insert(k);
    Ints low = attr(e.maps.at(0)), high = attr(e.maps.at(1)), ldil = attr(e.maps.at(2)), rdil = attr(e.maps.at(3));
    for (auto* m : {&low, &high, &ldil, &rdil}) {
      std::set<std::string> ks;
      for (auto& [k, v] : *m) ks.insert(k);
      if (ks != sp) throw Error(ErrorCode::AxesMismatch, "conv padding axes");
    }
    Index lo, hi, il, zero, iw;
    for (auto& n : in.order) lo[n] = hi[n] = il[n] = 0;
    for (auto& n : w.order) zero[n] = iw[n] = 0;
    for (auto& [n, v] : flatten(low)) lo[n] = v;
    for (auto& [n, v] : flatten(high)) hi[n] = v;
    for (auto& [n, v] : flatten(ldil)) il[n] = v - 1;
    for (auto& [n, v] : flatten(rdil)) iw[n] = v - 1;
    Value z = Value::zero(in.type);
    ConcreteTensor pi = pad(in, z, lo, hi, il);
    ConcreteTensor pw = pad(w, z, zero, zero, iw);
    return conv_base(pi, pw, e.axis_sets.at(0), feature, e.axis_sets.at(2), attr(e.maps.at(4)));
  }

  ConcreteTensor reverse(const ConcreteTensor& e, const std::vector<std::string>& axes) {
    std::set<std::string> flip;
    for (auto& x : axes) {
      if (!e.axes.count(x)) throw Error(ErrorCode::AxesMismatch, "reverse of absent axis");
      for (auto& n : e.axes.at(x)) flip.insert(n);
    }
    ConcreteTensor out = e;
    e.for_each([&](const Index& i) {
      Index j = i;
      for (auto& n : flip) j[n] = e.size(n) - 1 - i.at(n);
      out.at(j) = e.at(i);
    });
    return out;
  }

  ConcreteTensor select(const ConcreteTensor& p, const ConcreteTensor& a, const ConcreteTensor& b) {
    same_keys(p.axes, a.axes, "select axes");
    same_keys(a.axes, b.axes, "select axes");
    if (p.type != Sort::Bool || a.type != b.type) throw Error(ErrorCode::UnsupportedOp, "select types");
    for (auto& n : a.order) {
      check(p.size(n) == a.size(n), "select predicate size equal along " + n);
      check(a.size(n) == b.size(n), "select branch sizes equal along " + n);
    }
    ConcreteTensor out = a;
    for (std::size_t k = 0; k < out.data.size(); ++k)
      if (!p.data[k].b) out.data[k] = b.data[k];
    return out;
  }

  static Index flat(const Ints& m) { return flatten(m); }

  ConcreteTensor eval(const InstExprPtr& e) {
    auto arg = [&](int k) { return eval(e->args.at(k)); };
    switch (e->op) {
      case Op::Var: return var(e->var);
      case Op::Const: return filled(attr(e->maps.at(0)), e->literal.sort, e->literal, "const");
      case Op::Iota: {
        Ints shape = attr(e->maps.at(0));
        ConcreteTensor t = filled(shape, Sort::Int, Value::of_int(0), "iota");
        if (!t.axes.count(e->axis)) throw Error(ErrorCode::AxesMismatch, "iota axis");
        need_singleton(e->axis, t.axes);
        std::string n = t.axes.at(e->axis)[0];
        t.for_each([&](const Index& i) { t.at(i) = Value::of_int(i.at(n)); });
        return t;
      }
      case Op::Expand: return expand(arg(0), attr(e->maps.at(0)));
      case Op::Binary: return binary(e->fn, arg(0), arg(1));
      case Op::PadLow: {
        ConcreteTensor a = arg(0);
        Ints low = attr(e->maps.at(0));
        need_keys(low, a.axes, "pad_low axes");
        return pad_low(a, e->literal, flat(low));
      }
      case Op::Pad: {
        ConcreteTensor a = arg(0);
        Ints lo = attr(e->maps.at(0)), hi = attr(e->maps.at(1)), in = attr(e->maps.at(2));
        for (auto* m : {&lo, &hi, &in}) need_keys(*m, a.axes, "pad axes");
        return pad(a, e->literal, flat(lo), flat(hi), flat(in));
      }
      case Op::Slice: {
        ConcreteTensor a = arg(0);
        Ints s = attr(e->maps.at(0)), t = attr(e->maps.at(1)), p = attr(e->maps.at(2));
        for (auto* m : {&s, &t, &p}) need_keys(*m, a.axes, "slice axes");
        return slice(a, flat(s), flat(t), flat(p));
      }
      case Op::DySlice: {
        ConcreteTensor a = arg(0);
        Ints s = attr(e->maps.at(0)), z = attr(e->maps.at(1));
        for (auto* m : {&s, &z}) need_keys(*m, a.axes, "dy_slice axes");
        return dy_slice(a, flat(s), flat(z));
      }
      case Op::DyUpSlice: {
        ConcreteTensor a = arg(0), u = arg(1);
        Ints s = attr(e->maps.at(0));
        need_keys(s, a.axes, "dyup_slice axes");
        return dyup_slice(a, u, flat(s));
      }
      case Op::Reduce: return reduce(e->red, arg(0), e->axis_sets.at(0));
      case Op::Relabel: return relabel(arg(0), e->relabel);
      case Op::Concat: return concat(arg(0), arg(1), e->axis);
      case Op::Dot: return dot(arg(0), arg(1), e->axis_sets.at(0), e->axis_sets.at(1));
      case Op::ConvBase:
        return conv_base(arg(0), arg(1), e->axis_sets.at(0), e->axis_sets.at(1), e->axis_sets.at(2),
                         attr(e->maps.at(0)));
      case Op::Conv: return conv(arg(0), arg(1), *e);
      case Op::Reverse: return reverse(arg(0), e->axis_sets.at(0));
      case Op::Select: return select(arg(0), arg(1), arg(2));
      case Op::Clamp: {
        ConcreteTensor lo = arg(0), x = arg(1), hi = arg(2);
        return binary(BinOp::Min, binary(BinOp::Max, x, lo), hi);
      }
    }
    throw Error(ErrorCode::UnsupportedOp, op_name(e->op));
  }
};

}  // namespace

ConcreteTensor eval_concrete(const InstRule& rule, const InstExprPtr& e, const Env& env, const Model& attrs) {
  Interp in{rule, env, attrs};
  return in.eval(e);
}

std::optional<Mismatch> compare_sides(const InstRule& inst, const std::map<std::string, Value>& symbols,
                                      const Env& inputs) {
  Model attrs = model_with_env(symbols, inputs);
  if (inst.pre && !evaluate(inst.pre, attrs).b) throw ValidityViolation("precondition");
  ConcreteTensor l = eval_concrete(inst, inst.lhs, inputs, attrs);
  Mismatch m;
  m.symbols = symbols;
  m.inputs = inputs;
  ConcreteTensor r;
  try {
    r = eval_concrete(inst, inst.rhs, inputs, attrs);
  } catch (const ValidityViolation& v) {
    m.reason = "rhs-invalid: " + v.atom();
    return m;
  }
  if (key_set(l.axes) != key_set(r.axes)) {
    m.reason = "axes";
    return m;
  }
  if (l.size_map() != r.size_map()) {
    m.reason = "shape";
    return m;
  }
  ConcreteTensor rr = r;
  if (l.order != r.order) {
    rr = ConcreteTensor::make(l.axes, l.size_map(), r.type, Value::zero(r.type));
    r.for_each([&](const Index& i) { rr.at(i) = r.at(i); });
  }
  std::optional<Mismatch> out;
  l.for_each([&](const Index& i) {
    if (out) return;
    const Value& a = l.at(i);
    const Value& b = rr.at(i);
    if (a != b) {
      m.reason = "value";
      m.access = i;
      m.lhs_value = a;
      m.rhs_value = b;
      out = m;
    }
  });
  return out;
}

namespace {

struct Sampler {
  const InstRule& inst;
  const FuzzOptions& opts;
  std::mt19937_64 rng;
  std::vector<Term> free;                          // symbols sampled directly
  std::vector<std::pair<Term, Term>> solved;       // symbol -> term over free symbols
  std::map<std::string, std::vector<Term>> by_axis;  // named axis -> free symbols
  std::map<std::string, std::vector<Term>> atoms;  // named axis -> single-axis constraints
  std::vector<Term> cross;                         // constraints spanning several axes

  Sampler(const InstRule& i, const FuzzOptions& o) : inst(i), opts(o), rng(o.seed) {
    TermBank& bank = *inst.bank;
    std::vector<Term> facts;
    if (inst.pre)
      for (Term c : conjuncts(inst.pre)) facts.push_back(canonicalize(bank, c));
    auto subs = solve_equalities(bank, facts);
    std::set<Term> solved_syms;
    for (auto& [s, t] : subs) solved_syms.insert(s);
    for (auto& [s, t] : subs) solved.emplace_back(s, apply_substitutions(bank, s, subs));
    std::set<Term> all;
    for (auto& [k, t] : inst.inst.symbols)
      if (t->role != Role::Index) all.insert(t);
    for (Term t : all)
      if (!solved_syms.count(t)) {
        free.push_back(t);
        by_axis[t->axis].push_back(t);
      }
    std::vector<Term> cons = facts;
    for (Term v : sym_eval(inst, inst.lhs, "L").validity)
      for (Term c : conjuncts(v)) cons.push_back(c);
    for (Term c : cons) {
      Term cs = apply_substitutions(bank, c, subs);
      if (cs->is_true()) continue;
      std::set<std::string> axes;
      for (Term s : free_symbols(cs)) axes.insert(s->axis);
      if (axes.size() == 1) atoms[*axes.begin()].push_back(cs);
      else cross.push_back(cs);
    }
    build_domains();
  }

  // Candidate values per free symbol, filtered by constraints over that symbol
  // alone and weighted geometrically toward small magnitudes. The decay
  // tightens with the number of named axes so that high-rank samples stay
  // within the element budget.
  std::map<Term, std::vector<std::int64_t>> domain;
  std::map<Term, std::discrete_distribution<std::size_t>> pick;

  void build_domains() {
    double q = std::min(0.75, 3.0 / static_cast<double>(std::max<std::size_t>(1, by_axis.size())));
    std::map<Term, std::vector<Term>> own;
    for (auto& [axis, cs] : atoms)
      for (Term c : cs) {
        auto fs = free_symbols(c);
        if (fs.size() == 1) own[*fs.begin()].push_back(c);
      }
    for (Term s : free) {
      bool size = s->role == Role::Size;
      std::int64_t lo = size ? 0 : -opts.value_cap, hi = size ? opts.size_cap : opts.value_cap;
      std::vector<std::int64_t> vals;
      for (std::int64_t v = lo; v <= hi; ++v) {
        Model m;
        m.symbols[s->name] = Value::of_int(v);
        bool ok = true;
        for (Term c : own[s]) {
          try {
            ok = evaluate(c, m).b;
          } catch (const EvalError&) {
            ok = false;
          }
          if (!ok) break;
        }
        if (ok) vals.push_back(v);
      }
      if (vals.empty())
        for (std::int64_t v = lo; v <= hi; ++v) vals.push_back(v);
      std::int64_t centre = size ? 1 : 0;
      std::int64_t best = vals.front();
      for (auto v : vals)
        if (std::abs(v - centre) < std::abs(best - centre)) best = v;
      std::vector<double> w;
      for (auto v : vals) w.push_back(std::pow(q, static_cast<double>(std::abs(v - best))));
      domain[s] = vals;
      pick[s] = std::discrete_distribution<std::size_t>(w.begin(), w.end());
    }
  }

  std::int64_t uniform(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  }

  Value draw_symbol(Term s) { return Value::of_int(domain.at(s)[pick.at(s)(rng)]); }

  static bool holds(const std::vector<Term>& cs, const Model& m) {
    for (Term c : cs)
      if (!evaluate(c, m).b) return false;
    return true;
  }

  void complete(std::map<std::string, Value>& vals) {
    Model m;
    m.symbols = vals;
    for (auto& [s, t] : solved) vals[s->name] = evaluate(t, m);
  }

  // Per-axis rejection sampling; nullopt when the budget runs out.
  std::optional<std::map<std::string, Value>> draw_symbols(int& attempts) {
    int budget = opts.budget_factor;
    for (int round = 0; round < budget; ++round) {
      Model m;
      bool ok = true;
      for (auto& [axis, syms] : by_axis) {
        bool found = false;
        for (int k = 0; k < budget; ++k) {
          ++attempts;
          for (Term s : syms) m.symbols[s->name] = draw_symbol(s);
          auto it = atoms.find(axis);
          if (it == atoms.end() || holds(it->second, m)) {
            found = true;
            break;
          }
        }
        if (!found) {
          ok = false;
          break;
        }
      }
      if (!ok) continue;
      auto it = atoms.find("");
      if (it != atoms.end() && !holds(it->second, m)) continue;
      if (!holds(cross, m)) continue;
      std::map<std::string, Value> vals = m.symbols;
      complete(vals);
      return vals;
    }
    return std::nullopt;
  }

  Value draw_value(Sort s) {
    switch (s) {
      case Sort::Bool: return Value::of_bool(uniform(0, 1) == 1);
      case Sort::Real: return Value::of_real(Rational(uniform(-opts.value_cap, opts.value_cap), uniform(1, 2)));
      case Sort::Int: break;
    }
    return Value::of_int(uniform(-opts.value_cap, opts.value_cap));
  }

  Env draw_inputs(const std::map<std::string, Value>& vals) {
    Model m;
    m.symbols = vals;
    Env env;
    for (auto& [name, d] : inst.env) {
      Layout l;
      Index sizes;
      for (auto& [k, inner] : d.shape) {
        l[k] = inst.inst.expansion.at(k);
        for (auto& [n, t] : inner) sizes[n] = evaluate(t, m).i;
      }
      ConcreteTensor t = ConcreteTensor::make(l, sizes, d.type, Value::zero(d.type));
      for (auto& v : t.data) v = draw_value(d.type);
      env[name] = std::move(t);
    }
    return env;
  }

  // Re-shapes inputs after a size change, keeping overlapping entries.
  Env refit(const Env& old, const std::map<std::string, Value>& vals) {
    Model m;
    m.symbols = vals;
    Env env;
    for (auto& [name, d] : inst.env) {
      const ConcreteTensor& o = old.at(name);
      Index sizes;
      for (auto& [k, inner] : d.shape)
        for (auto& [n, t] : inner) sizes[n] = evaluate(t, m).i;
      ConcreteTensor t = ConcreteTensor::make(o.axes, sizes, d.type, Value::zero(d.type));
      t.for_each([&](const Index& i) {
        if (o.contains(i)) t.at(i) = o.at(i);
      });
      env[name] = std::move(t);
    }
    return env;
  }

  bool valid_symbols(const std::map<std::string, Value>& vals) {
    Model m;
    m.symbols = vals;
    for (auto& [axis, cs] : atoms)
      if (!holds(cs, m)) return false;
    return holds(cross, m);
  }

  std::optional<Mismatch> retry(const std::map<std::string, Value>& vals, const Env& env) {
    try {
      return compare_sides(inst, vals, env);
    } catch (const ValidityViolation&) {
      return std::nullopt;
    } catch (const EvalError&) {
      return std::nullopt;
    }
  }

  Mismatch shrink(Mismatch m) {
    bool progress = true;
    while (progress) {
      progress = false;
      for (Term s : free) {
        std::int64_t cur = m.symbols.at(s->name).i;
        std::vector<std::int64_t> cands;
        if (cur != 0) cands.push_back(0);
        if (cur > 0) cands.push_back(cur - 1);
        if (cur < 0) cands.push_back(cur + 1);
        for (std::int64_t c : cands) {
          std::map<std::string, Value> vals;
          for (Term f : free) vals[f->name] = m.symbols.at(f->name);
          vals[s->name] = Value::of_int(c);
          complete(vals);
          if (!valid_symbols(vals)) continue;
          Env env = refit(m.inputs, vals);
          if (auto r = retry(vals, env)) {
            m = *r;
            progress = true;
            break;
          }
        }
      }
    }
    for (auto& [name, t] : Env(m.inputs)) {
      for (std::size_t k = 0; k < t.data.size(); ++k) {
        Value z = Value::zero(t.type);
        if (m.inputs.at(name).data[k] == z) continue;
        Env env = m.inputs;
        env.at(name).data[k] = z;
        if (auto r = retry(m.symbols, env)) m = *r;
      }
    }
    return m;
  }
};

}  // namespace

FuzzReport differential_test(const RewriteRule& rule, const FuzzOptions& opts) {
  InstRule inst = instantiate(rule, opts.ranks, "t0");
  struct Limit {
    std::size_t saved = element_limit;
    explicit Limit(std::size_t n) { element_limit = n; }
    ~Limit() { element_limit = saved; }
  } limit(opts.max_elements);
  FuzzReport rep;
  rep.rule = rule.name;
  rep.ranks = opts.ranks;
  Sampler smp(inst, opts);
  const int max_attempts = opts.trials * opts.budget_factor;
  while (rep.trials < opts.trials && rep.attempts < max_attempts) {
    auto vals = smp.draw_symbols(rep.attempts);
    if (!vals) break;
    Env env;
    try {
      env = smp.draw_inputs(*vals);
    } catch (const ValidityViolation&) {
      continue;
    } catch (const TooLarge&) {
      ++rep.attempts;
      continue;
    }
    std::optional<Mismatch> mm;
    try {
      mm = compare_sides(inst, *vals, env);
    } catch (const ValidityViolation&) {
      ++rep.attempts;
      continue;
    } catch (const TooLarge&) {
      ++rep.attempts;
      continue;
    }
    ++rep.trials;
    if (mm) {
      ++rep.mismatches;
      if (!rep.first) rep.first = opts.shrink ? smp.shrink(*mm) : *mm;
      if (opts.stop_on_mismatch) break;
    }
  }
  rep.exhausted = rep.trials == 0;
  return rep;
}

}  // namespace trv
