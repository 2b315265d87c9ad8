#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "trv/error.h"
#include "trv/term.h"

namespace trv {

// ---- per-axis attribute expressions (rank-polymorphic) ----

enum class MapOp { Lit, Ref, Add, Sub, Mul, Div, Mod, Min, Max, CeilDiv, Neg };

struct MapExpr;
using MapExprPtr = std::shared_ptr<const MapExpr>;

struct MapExpr {
  MapOp op = MapOp::Lit;
  std::int64_t lit = 0;
  std::string ref;
  std::vector<MapExprPtr> args;
};

MapExprPtr map_lit(std::int64_t v);
MapExprPtr map_ref(const std::string& name);
MapExprPtr map_op(MapOp op, std::vector<MapExprPtr> args);
std::set<std::string> map_refs(const MapExprPtr& e);
std::string to_string(const MapExprPtr& e);

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };
const char* cmp_name(CmpOp c);
std::optional<CmpOp> parse_cmp(const std::string& s);

// Preconditions and si-relations: and/or over atoms; an atom is a comparison
// folded pointwise over the named axes of the maps it mentions.
struct Formula {
  enum class Kind { Atom, And, Or } kind = Kind::Atom;
  CmpOp cmp = CmpOp::Eq;
  MapExprPtr lhs, rhs;
  std::vector<Formula> kids;
};

Formula atom(CmpOp c, MapExprPtr l, MapExprPtr r);
Formula all_of(std::vector<Formula> fs);
Formula any_of(std::vector<Formula> fs);
std::set<std::string> formula_refs(const Formula& f);

// ---- tensor expressions ----

enum class Op {
  Var, Const, Iota, Expand, Binary, PadLow, Pad, Slice, DySlice, DyUpSlice,
  Reduce, Relabel, Concat, Dot, ConvBase, Conv, Reverse, Select, Clamp
};
const char* op_name(Op op);
std::optional<Op> parse_op(const std::string& s);

enum class BinOp { Add, Sub, Mul, Div, Rem, Max, Min, And, Or, Eq, Ne, Lt, Le, Gt, Ge };
const char* bin_op_name(BinOp op);
std::optional<BinOp> parse_bin_op(const std::string& s);

// Attribute slots in `maps`, by operator:
//   Const, Iota, Expand: shape | PadLow: low | Pad: low, high, interior
//   Slice: start, end, stride | DySlice: start, sizes | DyUpSlice: start
//   ConvBase: stride | Conv: low, high, lhs_dilation, rhs_dilation, stride
// Axis sets in `axis_sets`:
//   Reduce: axes | Dot: contract, batch | ConvBase, Conv: batch, feature, out | Reverse: axes
template <class M>
struct BasicExpr {
  Op op = Op::Var;
  std::vector<std::shared_ptr<const BasicExpr>> args;
  std::string var;
  Value literal;
  Sort type = Sort::Int;
  BinOp fn = BinOp::Add;
  RedOp red = RedOp::Add;
  std::vector<M> maps;
  std::optional<M> indices;
  std::vector<std::vector<std::string>> axis_sets;
  std::map<std::string, std::string> relabel;
  std::string axis;
};

using AttrMap = std::map<std::string, MapExprPtr>;  // aggregated axis -> expression
using Expr = BasicExpr<AttrMap>;
using ExprPtr = std::shared_ptr<const Expr>;

// Builders for hand-written rules.
namespace ex {
ExprPtr var(const std::string& name);
ExprPtr constant(Value v, AttrMap shape);
ExprPtr iota(AttrMap shape, const std::string& axis);
ExprPtr expand(ExprPtr e, AttrMap shape);
ExprPtr binary(BinOp fn, ExprPtr a, ExprPtr b);
ExprPtr pad_low(ExprPtr e, Value v, AttrMap low);
ExprPtr pad(ExprPtr e, Value v, AttrMap low, AttrMap high, AttrMap interior);
ExprPtr slice(ExprPtr e, AttrMap start, AttrMap end, AttrMap stride);
ExprPtr dy_slice(ExprPtr e, AttrMap start, AttrMap sizes);
ExprPtr dyup_slice(ExprPtr e, ExprPtr update, AttrMap start);
ExprPtr reduce(RedOp op, ExprPtr e, std::vector<std::string> axes, std::optional<AttrMap> indices = std::nullopt);
ExprPtr relabel(ExprPtr e, std::map<std::string, std::string> r);
ExprPtr concat(ExprPtr a, ExprPtr b, const std::string& axis);
ExprPtr dot(ExprPtr a, ExprPtr b, std::vector<std::string> contract, std::vector<std::string> batch,
            std::optional<AttrMap> indices = std::nullopt);
ExprPtr conv_base(ExprPtr in, ExprPtr w, std::vector<std::string> batch, std::vector<std::string> feature,
                  std::vector<std::string> out, AttrMap stride, std::optional<AttrMap> indices = std::nullopt);
ExprPtr conv(ExprPtr in, ExprPtr w, std::vector<std::string> batch, std::vector<std::string> feature,
             std::vector<std::string> out, AttrMap low, AttrMap high, AttrMap lhs_dil, AttrMap rhs_dil,
             AttrMap stride, std::optional<AttrMap> indices = std::nullopt);
ExprPtr reverse(ExprPtr e, std::vector<std::string> axes);
ExprPtr select(ExprPtr pred, ExprPtr t, ExprPtr f);
ExprPtr clamp(ExprPtr lo, ExprPtr e, ExprPtr hi);
}  // namespace ex

// ---- declarations and rules ----

struct AxisDecl {
  std::string id;
  std::string rclass;  // empty for a singleton (concrete, rank-1) axis
};

struct MapDecl {
  std::string id;
  std::string axis;
  bool index = false;  // reduction-index names
};

struct TensorDecl {
  std::string id;
  Sort type = Sort::Int;
  AttrMap shape;
};

struct Decls {
  std::vector<std::pair<std::string, std::vector<std::string>>> rclasses;
  std::vector<std::string> singletons;
  std::vector<MapDecl> maps;
  std::vector<TensorDecl> tensors;
};

struct RewriteRule {
  std::string name;
  std::map<std::string, std::vector<std::string>> rclasses;
  std::map<std::string, AxisDecl> axes;
  std::map<std::string, MapDecl> maps;
  std::map<std::string, TensorDecl> tensors;
  ExprPtr lhs, rhs;
  std::vector<Formula> pre;
  std::vector<Formula> hints;

  const std::string& rclass_of(const std::string& axis) const { return axes.at(axis).rclass; }
};

RewriteRule build_rule(const std::string& name, const Decls& decls, ExprPtr lhs, ExprPtr rhs,
                       std::vector<Formula> pres, std::vector<Formula> hints = {});

// Every sub-expression, pre-order.
void visit(const ExprPtr& e, const std::function<void(const Expr&)>& f);

// ---- instantiated maps ----

using Map = std::map<std::string, Term>;                       // named axis -> term
using AggMap = std::map<std::string, Map>;                     // aggregated axis -> map
using Layout = std::map<std::string, std::vector<std::string>>;  // aggregated axis -> named axes

// Throws DomainMismatch unless keys are disjoint and (if given) each inner
// domain equals the layout's axis set for that key.
void validate_agg_map(const AggMap& m, const Layout* layout = nullptr);
Layout layout_of(const AggMap& m);
std::vector<std::string> named_axes(const Layout& l);

using Pointwise = std::function<Term(const std::vector<Term>&)>;
AggMap agg_map_combine(const Pointwise& f, const std::vector<AggMap>& ms);
Term agg_map_fold(TermBank& bank, const Pointwise& g, const std::vector<AggMap>& ms);
AggMap restrict_to(const AggMap& m, const std::set<std::string>& named);

using InstExpr = BasicExpr<AggMap>;
using InstExprPtr = std::shared_ptr<const InstExpr>;

}  // namespace trv
