#include "trv/rulefile.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace trv {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw Error(ErrorCode::ParseError, (where.empty() ? "/" : where) + ": " + what);
}

const json& field(const json& j, const std::string& where, const std::string& key) {
  if (!j.is_object() || !j.contains(key)) fail(where, "missing field '" + key + "'");
  return j.at(key);
}

std::string str(const json& j, const std::string& where) {
  if (!j.is_string()) fail(where, "expected a string");
  return j.get<std::string>();
}

std::vector<std::string> strs(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(str(j[k], where + "/" + std::to_string(k)));
  return out;
}

const std::map<std::string, MapOp> kMapOps = {
    {"add", MapOp::Add}, {"sub", MapOp::Sub}, {"mul", MapOp::Mul}, {"div", MapOp::Div}, {"mod", MapOp::Mod},
    {"min", MapOp::Min}, {"max", MapOp::Max}, {"ceildiv", MapOp::CeilDiv}, {"neg", MapOp::Neg}};

MapExprPtr map_expr(const json& j, const std::string& where) {
  if (j.is_number_integer()) return map_lit(j.get<std::int64_t>());
  if (j.is_string()) return map_ref(j.get<std::string>());
  if (!j.is_array() || j.empty() || !j[0].is_string()) fail(where, "expected a number, a map name or [op, args...]");
  std::string op = j[0].get<std::string>();
  auto it = kMapOps.find(op);
  if (it == kMapOps.end()) fail(where + "/0", "unknown map operator '" + op + "'");
  std::vector<MapExprPtr> args;
  for (std::size_t k = 1; k < j.size(); ++k) args.push_back(map_expr(j[k], where + "/" + std::to_string(k)));
  std::size_t want = it->second == MapOp::Neg ? 1 : 2;
  if (args.size() < want || (want == 1 && args.size() != 1)) fail(where, "wrong number of arguments to '" + op + "'");
  return map_op(it->second, std::move(args));
}

AttrMap attr_map(const json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object from aggregated axis to map expression");
  AttrMap out;
  for (auto& [k, v] : j.items()) out[k] = map_expr(v, where + "/" + k);
  return out;
}

Formula formula(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j[0].is_string()) fail(where, "expected [predicate, ...]");
  std::string op = j[0].get<std::string>();
  if (op == "and" || op == "or") {
    std::vector<Formula> kids;
    for (std::size_t k = 1; k < j.size(); ++k) kids.push_back(formula(j[k], where + "/" + std::to_string(k)));
    return op == "and" ? all_of(std::move(kids)) : any_of(std::move(kids));
  }
  auto c = parse_cmp(op);
  if (!c) fail(where + "/0", "unknown predicate '" + op + "'");
  if (j.size() != 3) fail(where, "comparison takes two operands");
  return atom(*c, map_expr(j[1], where + "/1"), map_expr(j[2], where + "/2"));
}

Sort sort_of(const json& j, const std::string& where) {
  auto s = parse_sort(str(j, where));
  if (!s) fail(where, "unknown element type");
  return *s;
}

Value value(const json& j, const std::string& where, std::optional<Sort> want = std::nullopt) {
  Value v;
  if (j.is_boolean()) {
    v = Value::of_bool(j.get<bool>());
  } else if (j.is_number_integer()) {
    v = Value::of_int(j.get<std::int64_t>());
  } else if (j.is_string()) {
    std::string s = j.get<std::string>();
    auto slash = s.find('/');
    try {
      if (slash == std::string::npos) v = Value::of_real(Rational(std::stoll(s)));
      else v = Value::of_real(Rational(std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1))));
    } catch (const std::exception&) {
      fail(where, "bad rational literal '" + s + "'");
    }
  } else {
    fail(where, "expected an integer, a boolean or a rational string \"p/q\"");
  }
  if (want && *want == Sort::Real && v.sort == Sort::Int) v = Value::of_real(Rational(v.i));
  if (want && *want != v.sort) fail(where, "literal does not match the element type");
  return v;
}

std::map<std::string, std::string> str_map(const json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an object");
  std::map<std::string, std::string> out;
  for (auto& [k, v] : j.items()) out[k] = str(v, where + "/" + k);
  return out;
}

std::optional<AttrMap> indices(const json& j, const std::string& where) {
  if (!j.contains("indices")) return std::nullopt;
  return attr_map(j.at("indices"), where + "/indices");
}

ExprPtr expr(const json& j, const std::string& where) {
  if (!j.is_object()) fail(where, "expected an expression object");
  std::string opname = str(field(j, where, "op"), where + "/op");
  auto op = parse_op(opname);
  if (!op) fail(where + "/op", "unknown operator '" + opname + "'");
  auto sub = [&](const std::string& k) { return expr(field(j, where, k), where + "/" + k); };
  auto args = [&](std::size_t n) {
    const json& a = field(j, where, "args");
    if (!a.is_array() || a.size() != n) fail(where + "/args", "expected " + std::to_string(n) + " operands");
    std::vector<ExprPtr> out;
    for (std::size_t k = 0; k < n; ++k) out.push_back(expr(a[k], where + "/args/" + std::to_string(k)));
    return out;
  };
  auto am = [&](const std::string& k) { return attr_map(field(j, where, k), where + "/" + k); };
  auto ax = [&](const std::string& k) { return strs(field(j, where, k), where + "/" + k); };
  auto fn = [&]() { return str(field(j, where, "fn"), where + "/fn"); };
  switch (*op) {
    case Op::Var: return ex::var(str(field(j, where, "name"), where + "/name"));
    case Op::Const: {
      std::optional<Sort> s;
      if (j.contains("type")) s = sort_of(j.at("type"), where + "/type");
      return ex::constant(value(field(j, where, "value"), where + "/value", s), am("shape"));
    }
    case Op::Iota: return ex::iota(am("shape"), str(field(j, where, "axis"), where + "/axis"));
    case Op::Expand: return ex::expand(sub("arg"), am("shape"));
    case Op::Binary: {
      auto b = parse_bin_op(fn());
      if (!b) fail(where + "/fn", "unknown binary function");
      auto a = args(2);
      return ex::binary(*b, a[0], a[1]);
    }
    case Op::PadLow: return ex::pad_low(sub("arg"), value(field(j, where, "value"), where + "/value"), am("low"));
    case Op::Pad:
      return ex::pad(sub("arg"), value(field(j, where, "value"), where + "/value"), am("low"), am("high"),
                     am("interior"));
    case Op::Slice: return ex::slice(sub("arg"), am("start"), am("end"), am("stride"));
    case Op::DySlice: return ex::dy_slice(sub("arg"), am("start"), am("sizes"));
    case Op::DyUpSlice: {
      auto a = args(2);
      return ex::dyup_slice(a[0], a[1], am("start"));
    }
    case Op::Reduce: {
      auto r = parse_red_op(fn());
      if (!r) fail(where + "/fn", "unknown reduction function");
      return ex::reduce(*r, sub("arg"), ax("axes"), indices(j, where));
    }
    case Op::Relabel: return ex::relabel(sub("arg"), str_map(field(j, where, "map"), where + "/map"));
    case Op::Concat: {
      auto a = args(2);
      return ex::concat(a[0], a[1], str(field(j, where, "axis"), where + "/axis"));
    }
    case Op::Dot: {
      auto a = args(2);
      return ex::dot(a[0], a[1], ax("contract"), ax("batch"), indices(j, where));
    }
    case Op::ConvBase: {
      auto a = args(2);
      return ex::conv_base(a[0], a[1], ax("batch"), ax("feature"), ax("out"), am("stride"), indices(j, where));
    }
    case Op::Conv: {
      auto a = args(2);
      return ex::conv(a[0], a[1], ax("batch"), ax("feature"), ax("out"), am("low"), am("high"), am("lhs_dilation"),
                      am("rhs_dilation"), am("stride"), indices(j, where));
    }
    case Op::Reverse: return ex::reverse(sub("arg"), ax("axes"));
    case Op::Select: {
      auto a = args(3);
      return ex::select(a[0], a[1], a[2]);
    }
    case Op::Clamp: {
      auto a = args(3);
      return ex::clamp(a[0], a[1], a[2]);
    }
  }
  fail(where, "unhandled operator");
}

}  // namespace

RewriteRule parse_rule(const json& doc) {
  if (!doc.is_object()) fail("", "a rule file holds one JSON object");
  static const std::set<std::string> known = {"name", "rclasses", "singletons", "maps", "indices", "tensors",
                                              "lhs", "rhs", "pre", "hints", "note"};
  for (auto& [k, v] : doc.items())
    if (!known.count(k)) fail("/" + k, "unknown field");
  std::string name = str(field(doc, "", "name"), "/name");
  Decls d;
  if (doc.contains("rclasses")) {
    const json& rc = doc.at("rclasses");
    if (!rc.is_object()) fail("/rclasses", "expected an object from rank class to axes");
    for (auto& [k, v] : rc.items()) d.rclasses.emplace_back(k, strs(v, "/rclasses/" + k));
  }
  if (doc.contains("singletons")) d.singletons = strs(doc.at("singletons"), "/singletons");
  if (doc.contains("maps"))
    for (auto& [k, v] : str_map(doc.at("maps"), "/maps")) d.maps.push_back(MapDecl{k, v, false});
  if (doc.contains("indices"))
    for (auto& [k, v] : str_map(doc.at("indices"), "/indices")) d.maps.push_back(MapDecl{k, v, true});
  const json& ts = field(doc, "", "tensors");
  if (!ts.is_object()) fail("/tensors", "expected an object");
  for (auto& [k, v] : ts.items()) {
    std::string w = "/tensors/" + k;
    TensorDecl t;
    t.id = k;
    t.type = v.contains("type") ? sort_of(v.at("type"), w + "/type") : Sort::Int;
    t.shape = attr_map(field(v, w, "shape"), w + "/shape");
    d.tensors.push_back(t);
  }
  ExprPtr lhs = expr(field(doc, "", "lhs"), "/lhs");
  ExprPtr rhs = expr(field(doc, "", "rhs"), "/rhs");
  std::vector<Formula> pre, hints;
  if (doc.contains("pre")) {
    const json& p = doc.at("pre");
    if (!p.is_array()) fail("/pre", "expected an array of formulas");
    for (std::size_t k = 0; k < p.size(); ++k) pre.push_back(formula(p[k], "/pre/" + std::to_string(k)));
  }
  if (doc.contains("hints")) {
    const json& h = doc.at("hints");
    if (!h.is_array()) fail("/hints", "expected an array of formulas");
    for (std::size_t k = 0; k < h.size(); ++k) hints.push_back(formula(h[k], "/hints/" + std::to_string(k)));
  }
  return build_rule(name, d, lhs, rhs, std::move(pre), std::move(hints));
}

RewriteRule load_rule_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw Error(ErrorCode::ParseError, path + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
  try {
    return parse_rule(doc);
  } catch (const Error& e) {
    throw Error(e.code(), path + ": " + e.detail());
  }
}

std::vector<std::string> rule_files(const std::string& path) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::exists(path, ec)) throw Error(ErrorCode::IoError, "no such file or directory: " + path);
  if (!fs::is_directory(path, ec)) return {path};
  std::vector<std::string> out;
  for (auto& entry : fs::directory_iterator(path)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".json") continue;
    if (entry.path().filename() == "expected.json") continue;
    out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace trv
