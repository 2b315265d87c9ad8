#include "trv/ir.h"

#include <sstream>

namespace trv {

MapExprPtr map_lit(std::int64_t v) {
  auto e = std::make_shared<MapExpr>();
  e->op = MapOp::Lit;
  e->lit = v;
  return e;
}

MapExprPtr map_ref(const std::string& name) {
  auto e = std::make_shared<MapExpr>();
  e->op = MapOp::Ref;
  e->ref = name;
  return e;
}

MapExprPtr map_op(MapOp op, std::vector<MapExprPtr> args) {
  auto e = std::make_shared<MapExpr>();
  e->op = op;
  e->args = std::move(args);
  return e;
}

std::set<std::string> map_refs(const MapExprPtr& e) {
  std::set<std::string> out;
  std::function<void(const MapExprPtr&)> go = [&](const MapExprPtr& x) {
    if (x->op == MapOp::Ref) out.insert(x->ref);
    for (auto& a : x->args) go(a);
  };
  go(e);
  return out;
}

namespace {
const char* map_op_name(MapOp op) {
  switch (op) {
    case MapOp::Add: return "add";
    case MapOp::Sub: return "sub";
    case MapOp::Mul: return "mul";
    case MapOp::Div: return "div";
    case MapOp::Mod: return "mod";
    case MapOp::Min: return "min";
    case MapOp::Max: return "max";
    case MapOp::CeilDiv: return "ceildiv";
    case MapOp::Neg: return "neg";
    default: return "?";
  }
}
}  // namespace

std::string to_string(const MapExprPtr& e) {
  if (e->op == MapOp::Lit) return std::to_string(e->lit);
  if (e->op == MapOp::Ref) return e->ref;
  std::string s = std::string("(") + map_op_name(e->op);
  for (auto& a : e->args) s += " " + to_string(a);
  return s + ")";
}

const char* cmp_name(CmpOp c) {
  switch (c) {
    case CmpOp::Eq: return "eq";
    case CmpOp::Ne: return "ne";
    case CmpOp::Lt: return "lt";
    case CmpOp::Le: return "le";
    case CmpOp::Gt: return "gt";
    case CmpOp::Ge: return "ge";
  }
  return "?";
}

std::optional<CmpOp> parse_cmp(const std::string& s) {
  for (CmpOp c : {CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge})
    if (s == cmp_name(c)) return c;
  return std::nullopt;
}

Formula atom(CmpOp c, MapExprPtr l, MapExprPtr r) {
  Formula f;
  f.kind = Formula::Kind::Atom;
  f.cmp = c;
  f.lhs = std::move(l);
  f.rhs = std::move(r);
  return f;
}

Formula all_of(std::vector<Formula> fs) {
  Formula f;
  f.kind = Formula::Kind::And;
  f.kids = std::move(fs);
  return f;
}

Formula any_of(std::vector<Formula> fs) {
  Formula f;
  f.kind = Formula::Kind::Or;
  f.kids = std::move(fs);
  return f;
}

std::set<std::string> formula_refs(const Formula& f) {
  std::set<std::string> out;
  if (f.kind == Formula::Kind::Atom) {
    out = map_refs(f.lhs);
    auto r = map_refs(f.rhs);
    out.insert(r.begin(), r.end());
    return out;
  }
  for (auto& k : f.kids) {
    auto r = formula_refs(k);
    out.insert(r.begin(), r.end());
  }
  return out;
}

namespace {
struct OpName {
  Op op;
  const char* name;
};
const OpName kOps[] = {
    {Op::Var, "var"},         {Op::Const, "const"},       {Op::Iota, "iota"},
    {Op::Expand, "expand"},   {Op::Binary, "binary"},     {Op::PadLow, "pad_low"},
    {Op::Pad, "pad"},         {Op::Slice, "slice"},       {Op::DySlice, "dy_slice"},
    {Op::DyUpSlice, "dyup_slice"}, {Op::Reduce, "reduce"}, {Op::Relabel, "relabel"},
    {Op::Concat, "concat"},   {Op::Dot, "dot"},           {Op::ConvBase, "conv_base"},
    {Op::Conv, "conv"},       {Op::Reverse, "reverse"},   {Op::Select, "select"},
    {Op::Clamp, "clamp"},
};
struct BinName {
  BinOp op;
  const char* name;
};
const BinName kBins[] = {
    {BinOp::Add, "add"}, {BinOp::Sub, "sub"}, {BinOp::Mul, "mul"}, {BinOp::Div, "div"},
    {BinOp::Rem, "rem"}, {BinOp::Max, "max"}, {BinOp::Min, "min"}, {BinOp::And, "and"},
    {BinOp::Or, "or"},   {BinOp::Eq, "eq"},   {BinOp::Ne, "ne"},   {BinOp::Lt, "lt"},
    {BinOp::Le, "le"},   {BinOp::Gt, "gt"},   {BinOp::Ge, "ge"},
};
}  // namespace

const char* op_name(Op op) {
  for (auto& o : kOps)
    if (o.op == op) return o.name;
  return "?";
}

std::optional<Op> parse_op(const std::string& s) {
  for (auto& o : kOps)
    if (s == o.name) return o.op;
  return std::nullopt;
}

const char* bin_op_name(BinOp op) {
  for (auto& o : kBins)
    if (o.op == op) return o.name;
  return "?";
}

std::optional<BinOp> parse_bin_op(const std::string& s) {
  for (auto& o : kBins)
    if (s == o.name) return o.op;
  return std::nullopt;
}

namespace ex {
namespace {
std::shared_ptr<Expr> node(Op op, std::vector<ExprPtr> args = {}) {
  auto e = std::make_shared<Expr>();
  e->op = op;
  e->args = std::move(args);
  return e;
}
}  // namespace

ExprPtr var(const std::string& name) {
  auto e = node(Op::Var);
  e->var = name;
  return e;
}

ExprPtr constant(Value v, AttrMap shape) {
  auto e = node(Op::Const);
  e->literal = v;
  e->type = v.sort;
  e->maps = {std::move(shape)};
  return e;
}

ExprPtr iota(AttrMap shape, const std::string& axis) {
  auto e = node(Op::Iota);
  e->type = Sort::Int;
  e->maps = {std::move(shape)};
  e->axis = axis;
  return e;
}

ExprPtr expand(ExprPtr a, AttrMap shape) {
  auto e = node(Op::Expand, {std::move(a)});
  e->maps = {std::move(shape)};
  return e;
}

ExprPtr binary(BinOp fn, ExprPtr a, ExprPtr b) {
  auto e = node(Op::Binary, {std::move(a), std::move(b)});
  e->fn = fn;
  return e;
}

ExprPtr pad_low(ExprPtr a, Value v, AttrMap low) {
  auto e = node(Op::PadLow, {std::move(a)});
  e->literal = v;
  e->maps = {std::move(low)};
  return e;
}

ExprPtr pad(ExprPtr a, Value v, AttrMap low, AttrMap high, AttrMap interior) {
  auto e = node(Op::Pad, {std::move(a)});
  e->literal = v;
  e->maps = {std::move(low), std::move(high), std::move(interior)};
  return e;
}

ExprPtr slice(ExprPtr a, AttrMap start, AttrMap end, AttrMap stride) {
  auto e = node(Op::Slice, {std::move(a)});
  e->maps = {std::move(start), std::move(end), std::move(stride)};
  return e;
}

ExprPtr dy_slice(ExprPtr a, AttrMap start, AttrMap sizes) {
  auto e = node(Op::DySlice, {std::move(a)});
  e->maps = {std::move(start), std::move(sizes)};
  return e;
}

ExprPtr dyup_slice(ExprPtr a, ExprPtr update, AttrMap start) {
  auto e = node(Op::DyUpSlice, {std::move(a), std::move(update)});
  e->maps = {std::move(start)};
  return e;
}

ExprPtr reduce(RedOp op, ExprPtr a, std::vector<std::string> axes, std::optional<AttrMap> indices) {
  auto e = node(Op::Reduce, {std::move(a)});
  e->red = op;
  e->axis_sets = {std::move(axes)};
  e->indices = std::move(indices);
  return e;
}

ExprPtr relabel(ExprPtr a, std::map<std::string, std::string> r) {
  auto e = node(Op::Relabel, {std::move(a)});
  e->relabel = std::move(r);
  return e;
}

ExprPtr concat(ExprPtr a, ExprPtr b, const std::string& axis) {
  auto e = node(Op::Concat, {std::move(a), std::move(b)});
  e->axis = axis;
  return e;
}

ExprPtr dot(ExprPtr a, ExprPtr b, std::vector<std::string> contract, std::vector<std::string> batch,
            std::optional<AttrMap> indices) {
  auto e = node(Op::Dot, {std::move(a), std::move(b)});
  e->axis_sets = {std::move(contract), std::move(batch)};
  e->indices = std::move(indices);
  return e;
}

ExprPtr conv_base(ExprPtr in, ExprPtr w, std::vector<std::string> batch, std::vector<std::string> feature,
                  std::vector<std::string> out, AttrMap stride, std::optional<AttrMap> indices) {
  auto e = node(Op::ConvBase, {std::move(in), std::move(w)});
  e->axis_sets = {std::move(batch), std::move(feature), std::move(out)};
  e->maps = {std::move(stride)};
  e->indices = std::move(indices);
  return e;
}

ExprPtr conv(ExprPtr in, ExprPtr w, std::vector<std::string> batch, std::vector<std::string> feature,
             std::vector<std::string> out, AttrMap low, AttrMap high, AttrMap lhs_dil, AttrMap rhs_dil,
             AttrMap stride, std::optional<AttrMap> indices) {
  auto e = node(Op::Conv, {std::move(in), std::move(w)});
  e->axis_sets = {std::move(batch), std::move(feature), std::move(out)};
  e->maps = {std::move(low), std::move(high), std::move(lhs_dil), std::move(rhs_dil), std::move(stride)};
  e->indices = std::move(indices);
  return e;
}

ExprPtr reverse(ExprPtr a, std::vector<std::string> axes) {
  auto e = node(Op::Reverse, {std::move(a)});
  e->axis_sets = {std::move(axes)};
  return e;
}

ExprPtr select(ExprPtr pred, ExprPtr t, ExprPtr f) {
  return node(Op::Select, {std::move(pred), std::move(t), std::move(f)});
}

ExprPtr clamp(ExprPtr lo, ExprPtr a, ExprPtr hi) {
  return node(Op::Clamp, {std::move(lo), std::move(a), std::move(hi)});
}
}  // namespace ex

void visit(const ExprPtr& e, const std::function<void(const Expr&)>& f) {
  f(*e);
  for (auto& a : e->args) visit(a, f);
}

namespace {

struct Checker {
  RewriteRule& r;

  const MapDecl& map_decl(const std::string& name, ErrorCode missing = ErrorCode::UndeclaredIdentifier) {
    auto it = r.maps.find(name);
    if (it == r.maps.end()) throw Error(missing, "map '" + name + "' is not declared");
    return it->second;
  }

  void axis_decl(const std::string& a) {
    if (!r.axes.count(a)) throw Error(ErrorCode::UndeclaredIdentifier, "axis '" + a + "' is not declared");
  }

  void attr(const AttrMap& m, const std::string& where) {
    for (auto& [axis, e] : m) {
      axis_decl(axis);
      for (auto& ref : map_refs(e)) {
        auto& d = map_decl(ref);
        if (d.index)
          throw Error(ErrorCode::DomainMismatch, where + ": reduction index '" + ref + "' used as an attribute");
        if (d.axis != axis)
          throw Error(ErrorCode::DomainMismatch,
                      where + ": map '" + ref + "' lives on axis '" + d.axis + "', used on '" + axis + "'");
      }
    }
  }

  void indices(const AttrMap& m, const std::string& where) {
    for (auto& [axis, e] : m) {
      axis_decl(axis);
      if (e->op != MapOp::Ref)
        throw Error(ErrorCode::DomainMismatch, where + ": reduction indices must be plain names");
      auto& d = map_decl(e->ref);
      if (!d.index) throw Error(ErrorCode::DomainMismatch, where + ": '" + e->ref + "' is not an index name");
      if (d.axis != axis)
        throw Error(ErrorCode::DomainMismatch, where + ": index '" + e->ref + "' lives on axis '" + d.axis + "'");
    }
  }

  void expr(const Expr& e) {
    std::string where = op_name(e.op);
    if (e.op == Op::Var && !r.tensors.count(e.var))
      throw Error(ErrorCode::UndeclaredIdentifier, "tensor '" + e.var + "' is not declared");
    for (auto& m : e.maps) attr(m, where);
    if (e.indices) indices(*e.indices, where);
    for (auto& s : e.axis_sets)
      for (auto& a : s) axis_decl(a);
    for (auto& [a, b] : e.relabel) {
      axis_decl(a);
      axis_decl(b);
    }
    if (!e.axis.empty()) axis_decl(e.axis);
  }

  // Returns the axis shared by every map an atom mentions.
  std::string formula(const Formula& f, bool hint) {
    if (f.kind != Formula::Kind::Atom) {
      for (auto& k : f.kids) formula(k, hint);
      return "";
    }
    auto refs = formula_refs(f);
    if (refs.empty()) throw Error(ErrorCode::DomainMismatch, "atom mentions no map");
    std::string axis;
    for (auto& ref : refs) {
      auto& d = map_decl(ref, hint ? ErrorCode::HintReferencesUnknownIndex : ErrorCode::UndeclaredIdentifier);
      if (d.index && !hint)
        throw Error(ErrorCode::DomainMismatch, "precondition mentions reduction index '" + ref + "'");
      if (axis.empty()) axis = d.axis;
      if (d.axis != axis)
        throw Error(ErrorCode::DomainMismatch, "atom mixes maps of axes '" + axis + "' and '" + d.axis + "'");
    }
    return axis;
  }
};

void claim(std::set<std::string>& names, const std::string& n) {
  if (n.empty()) throw Error(ErrorCode::ParseError, "empty identifier");
  if (!names.insert(n).second) throw Error(ErrorCode::DuplicateDeclaration, "'" + n + "' declared twice");
}

}  // namespace

RewriteRule build_rule(const std::string& name, const Decls& decls, ExprPtr lhs, ExprPtr rhs,
                       std::vector<Formula> pres, std::vector<Formula> hints) {
  RewriteRule r;
  r.name = name;
  std::set<std::string> names;
  std::set<std::string> rclass_names;
  for (auto& [rc, members] : decls.rclasses) {
    if (!rclass_names.insert(rc).second) throw Error(ErrorCode::DuplicateDeclaration, "rclass '" + rc + "' declared twice");
    if (members.empty()) throw Error(ErrorCode::ParseError, "rclass '" + rc + "' has no axes");
    for (auto& a : members) {
      claim(names, a);
      r.axes[a] = AxisDecl{a, rc};
    }
    r.rclasses[rc] = members;
  }
  for (auto& a : decls.singletons) {
    claim(names, a);
    r.axes[a] = AxisDecl{a, ""};
  }
  for (auto& m : decls.maps) {
    claim(names, m.id);
    if (!r.axes.count(m.axis))
      throw Error(ErrorCode::UndeclaredIdentifier, "map '" + m.id + "' on undeclared axis '" + m.axis + "'");
    r.maps[m.id] = m;
  }
  for (auto& t : decls.tensors) {
    claim(names, t.id);
    r.tensors[t.id] = t;
  }
  Checker c{r};
  for (auto& [id, t] : r.tensors) {
    c.attr(t.shape, "tensor " + id);
    for (auto& [axis, e] : t.shape)
      if (!c.r.axes.count(axis)) throw Error(ErrorCode::UndeclaredIdentifier, axis);
  }
  if (!lhs || !rhs) throw Error(ErrorCode::ParseError, "rule needs both sides");
  visit(lhs, [&](const Expr& e) { c.expr(e); });
  visit(rhs, [&](const Expr& e) { c.expr(e); });
  for (auto& p : pres) c.formula(p, false);
  std::set<std::string> used_indices;
  auto note = [&](const Expr& e) {
    if (e.indices)
      for (auto& [a, ix] : *e.indices) used_indices.insert(ix->ref);
  };
  visit(lhs, note);
  visit(rhs, note);
  for (auto& h : hints) {
    c.formula(h, true);
    bool any_index = false;
    for (auto& ref : formula_refs(h)) {
      if (!r.maps.at(ref).index) continue;
      any_index = true;
      if (!used_indices.count(ref))
        throw Error(ErrorCode::HintReferencesUnknownIndex, "hint names '" + ref + "' which no reduction binds");
    }
    if (!any_index) throw Error(ErrorCode::HintReferencesUnknownIndex, "hint mentions no reduction index");
  }
  r.lhs = std::move(lhs);
  r.rhs = std::move(rhs);
  r.pre = std::move(pres);
  r.hints = std::move(hints);
  return r;
}

void validate_agg_map(const AggMap& m, const Layout* layout) {
  std::set<std::string> seen;
  for (auto& [key, inner] : m) {
    for (auto& [axis, t] : inner)
      if (!seen.insert(axis).second)
        throw Error(ErrorCode::DomainMismatch, "named axis '" + axis + "' appears under two keys");
    if (!layout) continue;
    auto it = layout->find(key);
    if (it == layout->end()) throw Error(ErrorCode::DomainMismatch, "unknown key '" + key + "'");
    std::set<std::string> want(it->second.begin(), it->second.end());
    std::set<std::string> have;
    for (auto& [axis, t] : inner) have.insert(axis);
    if (want != have) throw Error(ErrorCode::DomainMismatch, "domain of '" + key + "' differs from its axis set");
  }
}

Layout layout_of(const AggMap& m) {
  Layout l;
  for (auto& [key, inner] : m) {
    auto& v = l[key];
    for (auto& [axis, t] : inner) v.push_back(axis);
  }
  return l;
}

std::vector<std::string> named_axes(const Layout& l) {
  std::vector<std::string> out;
  for (auto& [key, v] : l) out.insert(out.end(), v.begin(), v.end());
  return out;
}

namespace {
void same_structure(const std::vector<AggMap>& ms) {
  for (std::size_t k = 1; k < ms.size(); ++k)
    if (layout_of(ms[k]) != layout_of(ms[0])) throw Error(ErrorCode::DomainMismatch, "maps over different domains");
}
}  // namespace

AggMap agg_map_combine(const Pointwise& f, const std::vector<AggMap>& ms) {
  if (ms.empty()) return {};
  same_structure(ms);
  AggMap out;
  for (auto& [key, inner] : ms[0]) {
    auto& o = out[key];
    for (auto& [axis, t] : inner) {
      std::vector<Term> args;
      for (auto& m : ms) args.push_back(m.at(key).at(axis));
      o[axis] = f(args);
    }
  }
  return out;
}

Term agg_map_fold(TermBank& bank, const Pointwise& g, const std::vector<AggMap>& ms) {
  if (ms.empty()) return bank.bool_lit(true);
  same_structure(ms);
  std::vector<Term> parts;
  for (auto& [key, inner] : ms[0])
    for (auto& [axis, t] : inner) {
      std::vector<Term> args;
      for (auto& m : ms) args.push_back(m.at(key).at(axis));
      parts.push_back(g(args));
    }
  return bank.and_(parts);
}

AggMap restrict_to(const AggMap& m, const std::set<std::string>& named) {
  AggMap out;
  for (auto& [key, inner] : m)
    for (auto& [axis, t] : inner)
      if (named.count(axis)) out[key][axis] = t;
  return out;
}

}  // namespace trv
