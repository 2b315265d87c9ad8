#include "trv/instantiate.h"

namespace trv {

std::string named_axis_id(const std::string& agg, int k) { return agg + "." + std::to_string(k); }

std::string symbol_name(const std::string& map, const std::string& named_axis, const std::string& task) {
  return map + "." + named_axis + "." + task;
}

std::map<std::string, std::string> Instantiation::map_axes(const std::string& from, const std::string& to) const {
  const auto& a = expansion.at(from);
  const auto& b = expansion.at(to);
  if (a.size() != b.size()) throw Error(ErrorCode::RClassMismatch, from + " and " + to + " have different ranks");
  std::map<std::string, std::string> out;
  for (std::size_t k = 0; k < a.size(); ++k) out[a[k]] = b[k];
  return out;
}

namespace {

struct Inst {
  const RewriteRule& rule;
  TermBank& bank;
  Instantiation& inst;
  std::set<std::string> size_maps;

  Term sym(const std::string& map, const std::string& named) {
    auto key = std::make_pair(map, named);
    auto it = inst.symbols.find(key);
    if (it != inst.symbols.end()) return it->second;
    const MapDecl& d = rule.maps.at(map);
    Role role = d.index ? Role::Index : size_maps.count(map) ? Role::Size : Role::Attr;
    Term t = bank.sym(symbol_name(map, named, inst.task), Sort::Int, named, role);
    inst.symbols.emplace(key, t);
    return t;
  }

  Term at(const MapExprPtr& e, const std::string& named) {
    auto arg = [&](int k) { return at(e->args.at(k), named); };
    auto bin = [&](Term (TermBank::*f)(Term, Term)) {
      if (e->args.size() < 2) throw Error(ErrorCode::ParseError, "operator needs two arguments");
      Term acc = arg(0);
      for (std::size_t k = 1; k < e->args.size(); ++k) acc = (bank.*f)(acc, at(e->args[k], named));
      return acc;
    };
    switch (e->op) {
      case MapOp::Lit: return bank.int_lit(e->lit);
      case MapOp::Ref: return sym(e->ref, named);
      case MapOp::Add: return bin(&TermBank::add);
      case MapOp::Sub: return bin(&TermBank::sub);
      case MapOp::Mul: return bin(&TermBank::mul);
      case MapOp::Div: return bin(&TermBank::div);
      case MapOp::Mod: return bin(&TermBank::mod);
      case MapOp::Min: return bin(&TermBank::min);
      case MapOp::Max: return bin(&TermBank::max);
      case MapOp::CeilDiv: return bank.ceil_div(arg(0), arg(1));
      case MapOp::Neg: return bank.neg(arg(0));
    }
    throw Error(ErrorCode::ParseError, "bad map expression");
  }

  AggMap attr(const AttrMap& m) {
    AggMap out;
    for (auto& [axis, e] : m) {
      auto& inner = out[axis];
      for (auto& named : inst.expansion.at(axis)) inner[named] = at(e, named);
    }
    return out;
  }

  Term cmp(CmpOp c, Term a, Term b) {
    switch (c) {
      case CmpOp::Eq: return bank.eq(a, b);
      case CmpOp::Ne: return bank.ne(a, b);
      case CmpOp::Lt: return bank.lt(a, b);
      case CmpOp::Le: return bank.le(a, b);
      case CmpOp::Gt: return bank.gt(a, b);
      case CmpOp::Ge: return bank.ge(a, b);
    }
    return bank.bool_lit(true);
  }

  Term formula(const Formula& f) {
    if (f.kind == Formula::Kind::Atom) {
      auto refs = formula_refs(f);
      const std::string& axis = rule.maps.at(*refs.begin()).axis;
      std::vector<Term> parts;
      for (auto& named : inst.expansion.at(axis)) parts.push_back(cmp(f.cmp, at(f.lhs, named), at(f.rhs, named)));
      return bank.and_(parts);
    }
    std::vector<Term> parts;
    for (auto& k : f.kids) parts.push_back(formula(k));
    return f.kind == Formula::Kind::And ? bank.and_(parts) : bank.or_(parts);
  }

  InstExprPtr expr(const ExprPtr& e) {
    auto out = std::make_shared<InstExpr>();
    out->op = e->op;
    for (auto& a : e->args) out->args.push_back(expr(a));
    out->var = e->var;
    out->literal = e->literal;
    out->type = e->type;
    out->fn = e->fn;
    out->red = e->red;
    for (auto& m : e->maps) out->maps.push_back(attr(m));
    if (e->indices) out->indices = attr(*e->indices);
    out->axis_sets = e->axis_sets;
    out->relabel = e->relabel;
    out->axis = e->axis;
    for (auto& [a, b] : e->relabel)
      if (rule.rclass_of(a) != rule.rclass_of(b))
        throw Error(ErrorCode::RClassMismatch, "relabel " + a + " -> " + b + " crosses rank classes");
    return out;
  }
};

}  // namespace

InstRule instantiate(const RewriteRule& rule, const std::map<std::string, int>& ranks, const std::string& task,
                     std::shared_ptr<TermBank> bank) {
  InstRule out;
  out.bank = bank ? bank : std::make_shared<TermBank>();
  out.name = rule.name;
  Instantiation& inst = out.inst;
  inst.task = task;
  for (auto& [rc, members] : rule.rclasses) {
    auto it = ranks.find(rc);
    int k = it == ranks.end() ? 1 : it->second;
    if (k < 1) throw Error(ErrorCode::RankZero, "rank of '" + rc + "' must be at least 1");
    inst.ranks[rc] = k;
  }
  for (auto& [rc, k] : ranks)
    if (!rule.rclasses.count(rc)) throw Error(ErrorCode::UndeclaredIdentifier, "rclass '" + rc + "'");
  for (auto& [id, ax] : rule.axes) {
    int k = ax.rclass.empty() ? 1 : inst.ranks.at(ax.rclass);
    auto& v = inst.expansion[id];
    for (int i = 0; i < k; ++i) {
      std::string n = named_axis_id(id, i);
      v.push_back(n);
      inst.parent[n] = id;
      out.axis_rclass[n] = ax.rclass;
    }
    out.singleton[id] = ax.rclass.empty();
  }
  Inst in{rule, *out.bank, inst, {}};
  for (auto& [id, t] : rule.tensors)
    for (auto& [axis, e] : t.shape)
      for (auto& r : map_refs(e)) in.size_maps.insert(r);
  for (auto& [id, t] : rule.tensors) out.env[id] = InstTensor{id, t.type, in.attr(t.shape)};
  out.lhs = in.expr(rule.lhs);
  out.rhs = in.expr(rule.rhs);
  std::vector<Term> pres;
  for (auto& p : rule.pre) pres.push_back(in.formula(p));
  out.pre = out.bank->and_(pres);
  for (auto& h : rule.hints) {
    InstHint ih;
    ih.relation = in.formula(h);
    for (auto& ref : formula_refs(h)) {
      if (!rule.maps.at(ref).index) continue;
      for (auto& named : inst.expansion.at(rule.maps.at(ref).axis)) ih.index_symbols.push_back(in.sym(ref, named));
    }
    out.hints.push_back(ih);
  }
  return out;
}

}  // namespace trv
