#include "support.h"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <random>

#include "trv/concrete.h"
#include "trv/eval.h"
#include "trv/instantiate.h"
#include "trv/rulefile.h"
#include "trv/symeval.h"

#ifndef TRV_CORPUS_DIR
#define TRV_CORPUS_DIR "corpus"
#endif

namespace trv::testing {

namespace {

std::string rule_text(const std::string& name, const std::string& decls, const std::string& lhs) {
  return "{\"name\": \"" + name + "\", " + decls + ", \"lhs\": " + lhs + ", \"rhs\": " + lhs + "}";
}

const std::string kXY =
    R"("rclasses": {"c": ["x"], "d": ["y"]}, "maps": {"s": "x", "t": "y", "s2": "x", "l": "x", "h": "x", "i": "x",
       "l2": "y", "h2": "y", "i2": "y", "a": "x", "e": "x", "st": "x", "z": "x", "u": "x"})";

std::string xy_decls(const std::string& tensors) { return kXY + ", \"tensors\": " + tensors; }

std::vector<OpCase> build_cases() {
  const std::string X = R"({"op": "var", "name": "X"})";
  const std::string Y = R"({"op": "var", "name": "Y"})";
  const std::string X1 = R"({"X": {"type": "int", "shape": {"x": "s"}}})";
  const std::string X2 = R"({"X": {"type": "int", "shape": {"x": "s", "y": "t"}}})";
  const std::string XY2 =
      R"({"X": {"type": "int", "shape": {"x": "s", "y": "t"}}, "Y": {"type": "int", "shape": {"x": "s2", "y": "t"}}})";
  std::vector<OpCase> v;
  auto add = [&](const std::string& name, const std::string& decls, const std::string& lhs) {
    v.push_back({name, rule_text(name, decls, lhs)});
  };
  add("const", xy_decls("{}"), R"({"op": "const", "value": 3, "type": "int", "shape": {"x": "s", "y": "t"}})");
  add("iota",
      R"("singletons": ["x"], "rclasses": {"d": ["y"]}, "maps": {"s": "x", "t": "y"}, "tensors": {})",
      R"({"op": "iota", "axis": "x", "shape": {"x": "s", "y": "t"}})");
  add("expand", xy_decls(X1), R"({"op": "expand", "shape": {"y": "t"}, "arg": )" + X + "}");
  for (std::string fn : {"add", "sub", "mul", "div", "rem", "max", "lt", "eq"})
    add("binary-" + fn, xy_decls(XY2), R"({"op": "binary", "fn": ")" + fn + R"(", "args": [)" + X + ", " + Y + "]}");
  add("binary-real",
      xy_decls(R"({"X": {"type": "real", "shape": {"x": "s"}}, "Y": {"type": "real", "shape": {"x": "s"}}})"),
      R"({"op": "binary", "fn": "div", "args": [)" + X + ", " + Y + "]}");
  add("pad_low", xy_decls(X2), R"({"op": "pad_low", "value": 7, "low": {"x": "l", "y": "l2"}, "arg": )" + X + "}");
  add("pad", xy_decls(X2),
      R"({"op": "pad", "value": -1, "low": {"x": "l", "y": "l2"}, "high": {"x": "h", "y": "h2"},
          "interior": {"x": "i", "y": "i2"}, "arg": )" +
          X + "}");
  add("slice", xy_decls(X2),
      R"({"op": "slice", "start": {"x": "a", "y": "l2"}, "end": {"x": "e", "y": "t"}, "stride": {"x": "st", "y": 1},
          "arg": )" +
          X + "}");
  add("dy_slice", xy_decls(X2), R"({"op": "dy_slice", "start": {"x": "a", "y": 0}, "sizes": {"x": "z", "y": "t"}, "arg": )" + X + "}");
  add("dyup_slice",
      xy_decls(R"({"X": {"type": "int", "shape": {"x": "s", "y": "t"}}, "U": {"type": "int", "shape": {"x": "u", "y": "t"}}})"),
      R"({"op": "dyup_slice", "start": {"x": "a", "y": 0}, "args": [)" + X + R"(, {"op": "var", "name": "U"}]})");
  add("reduce-add", xy_decls(X2), R"({"op": "reduce", "fn": "add", "axes": ["x"], "arg": )" + X + "}");
  add("reduce-max", xy_decls(X2), R"({"op": "reduce", "fn": "max", "axes": ["x", "y"], "arg": )" + X + "}");
  add("reduce-and",
      xy_decls(R"({"X": {"type": "bool", "shape": {"x": "s", "y": "t"}}})"),
      R"({"op": "reduce", "fn": "and", "axes": ["y"], "arg": )" + X + "}");
  add("relabel",
      R"("rclasses": {"c": ["x1", "x2"]}, "maps": {"s": "x1", "t": "x2"},
         "tensors": {"X": {"type": "int", "shape": {"x1": "s", "x2": "t"}}})",
      R"({"op": "relabel", "map": {"x1": "x2", "x2": "x1"}, "arg": )" + X + "}");
  add("concat",
      R"("singletons": ["x"], "rclasses": {"c": ["y"]}, "maps": {"sa": "x", "sb": "x", "sy": "y", "sz": "y"},
         "tensors": {"A": {"type": "int", "shape": {"x": "sa", "y": "sy"}},
                     "B": {"type": "int", "shape": {"x": "sb", "y": "sz"}}})",
      R"({"op": "concat", "axis": "x", "args": [{"op": "var", "name": "A"}, {"op": "var", "name": "B"}]})");
  add("dot",
      R"("rclasses": {"c": ["x"], "d": ["y"], "e": ["k"], "f": ["b"]},
         "maps": {"sx": "x", "sy": "y", "sk": "k", "sk2": "k", "sb": "b"},
         "tensors": {"A": {"type": "int", "shape": {"b": "sb", "x": "sx", "k": "sk"}},
                     "B": {"type": "int", "shape": {"b": "sb", "k": "sk2", "y": "sy"}}})",
      R"({"op": "dot", "contract": ["k"], "batch": ["b"],
          "args": [{"op": "var", "name": "A"}, {"op": "var", "name": "B"}]})");
  auto conv_decls = [](const std::string& wf) {
    return R"("rclasses": {"cb": ["b"], "cf": ["f"], "co": ["o"], "cx": ["x"]},
         "maps": {"sb": "b", "sf": "f", "sf2": "f", "so": "o", "sx": "x", "wx": "x", "st": "x",
                  "l": "x", "h": "x", "di": "x", "dw": "x"},
         "tensors": {"T": {"type": "int", "shape": {"b": "sb", "f": "sf", "x": "sx"}},
                     "W": {"type": "int", "shape": {"f": ")" +
           wf + R"(", "o": "so", "x": "wx"}}})";
  };
  const std::string TW = R"([{"op": "var", "name": "T"}, {"op": "var", "name": "W"}])";
  add("conv_base", conv_decls("sf2"),
      R"({"op": "conv_base", "batch": ["b"], "feature": ["f"], "out": ["o"], "stride": {"x": "st"}, "args": )" + TW +
          "}");
  add("conv", conv_decls("sf"),
      R"({"op": "conv", "batch": ["b"], "feature": ["f"], "out": ["o"], "stride": {"x": "st"}, "low": {"x": "l"},
          "high": {"x": "h"}, "lhs_dilation": {"x": "di"}, "rhs_dilation": {"x": "dw"}, "args": )" +
          TW + "}");
  add("reverse", xy_decls(X2), R"({"op": "reverse", "axes": ["x"], "arg": )" + X + "}");
  add("select",
      xy_decls(R"({"P": {"type": "bool", "shape": {"x": "s"}}, "X": {"type": "int", "shape": {"x": "s"}},
                   "Y": {"type": "int", "shape": {"x": "s2"}}})"),
      R"({"op": "select", "args": [{"op": "var", "name": "P"}, )" + X + ", " + Y + "]}");
  add("clamp",
      xy_decls(R"({"L": {"type": "int", "shape": {"x": "s"}}, "X": {"type": "int", "shape": {"x": "s"}},
                   "H": {"type": "int", "shape": {"x": "s2"}}})"),
      R"({"op": "clamp", "args": [{"op": "var", "name": "L"}, )" + X + R"(, {"op": "var", "name": "H"}]})");
  return v;
}

Value random_value(std::mt19937_64& rng, Sort s) {
  auto pick = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  switch (s) {
    case Sort::Bool: return Value::of_bool(pick(0, 1) == 1);
    case Sort::Real: return Value::of_real(Rational(pick(-4, 4), pick(1, 3)));
    case Sort::Int: break;
  }
  return Value::of_int(pick(-4, 4));
}

// Empty string when both evaluators agree.
std::string compare_case(const InstRule& inst, const std::map<std::string, Value>& symbols, const Env& env,
                         bool& valid) {
  TermBank& bank = *inst.bank;
  Model m = model_with_env(symbols, env);
  SymResult sr = sym_eval(inst, inst.lhs, "L");
  valid = evaluate(sr.valid(bank), m).b;
  if (valid) {
    std::int64_t n = 1;
    for (auto& [agg, inner] : sr.tensor.shape)
      for (auto& [named, t] : inner) n = std::min<std::int64_t>(n * evaluate(t, m).i, 1 << 30);
    if (n > 20000) throw TooLarge("oracle case too large");
  }
  ConcreteTensor ct;
  try {
    ct = eval_concrete(inst, inst.lhs, env, m);
  } catch (const ValidityViolation& v) {
    if (valid) return "interpreter rejected a valid case: " + v.atom();
    return "";
  }
  if (!valid) return "interpreter accepted a case the validity formula rejects";
  if (ct.axes != sr.tensor.axes) return "axis layouts differ";
  if (ct.type != sr.tensor.type) return "element types differ";
  for (auto& [agg, inner] : sr.tensor.shape)
    for (auto& [named, t] : inner)
      if (evaluate(t, m).i != ct.size(named)) return "size of " + named + " differs";
  std::string err;
  ct.for_each([&](const Index& idx) {
    if (!err.empty()) return;
    AggMap access;
    for (auto& [agg, names] : sr.tensor.axes)
      for (auto& n : names) access[agg][n] = bank.int_lit(idx.at(n));
    Value sv;
    try {
      sv = evaluate(sr.tensor.value(access), m);
    } catch (const EvalError& e) {
      err = std::string("symbolic value failed: ") + e.what();
      return;
    }
    if (sv != ct.at(idx)) err = "values differ: symbolic " + sv.str() + ", concrete " + ct.at(idx).str();
  });
  return err;
}

}  // namespace

const std::vector<OpCase>& operator_cases() {
  static const std::vector<OpCase> cases = build_cases();
  return cases;
}

RewriteRule parse_rule_text(const std::string& text) { return parse_rule(nlohmann::json::parse(text)); }

OracleStats semantics_oracle(const RewriteRule& rule, int want_valid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::int64_t lo, std::int64_t hi) { return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng); };
  OracleStats st;
  const int max_cases = want_valid * 400;
  for (int k = 0; k < max_cases && st.valid < want_valid; ++k) {
    std::map<std::string, int> ranks;
    for (auto& [rc, members] : rule.rclasses) ranks[rc] = static_cast<int>(pick(1, 3));
    InstRule inst = instantiate(rule, ranks, "t0");
    std::map<std::string, Value> symbols;
    for (auto& [key, t] : inst.inst.symbols) {
      if (t->role == Role::Index) continue;
      symbols[t->name] = Value::of_int(t->role == Role::Size ? pick(0, 5) : pick(-2, 5));
    }
    Model attrs;
    attrs.symbols = symbols;
    Env env;
    bool too_big = false;
    for (auto& [name, d] : inst.env) {
      Layout l;
      Index sizes;
      std::size_t n = 1;
      for (auto& [agg, inner] : d.shape) {
        l[agg] = inst.inst.expansion.at(agg);
        for (auto& [named, t] : inner) {
          sizes[named] = evaluate(t, attrs).i;
          n *= static_cast<std::size_t>(sizes[named]);
        }
      }
      if (n > 4096) {
        too_big = true;
        break;
      }
      ConcreteTensor t = ConcreteTensor::make(l, sizes, d.type, Value::zero(d.type));
      for (auto& x : t.data) x = random_value(rng, d.type);
      env[name] = std::move(t);
    }
    if (too_big) continue;
    bool valid = false;
    std::string err;
    try {
      err = compare_case(inst, symbols, env, valid);
    } catch (const TooLarge&) {
      continue;
    }
    if (!err.empty()) {
      if (st.failures++ == 0) {
        st.first_failure = err + " [ranks";
        for (auto& [rc, r] : ranks) st.first_failure += " " + rc + "=" + std::to_string(r);
        for (auto& [n, v] : symbols) st.first_failure += " " + n + "=" + v.str();
        st.first_failure += "]";
      }
      continue;
    }
    if (valid) ++st.valid;
    else ++st.rejected;
  }
  return st;
}

std::string corpus_dir() {
  if (const char* d = std::getenv("TRV_CORPUS_DIR")) return d;
  return TRV_CORPUS_DIR;
}

nlohmann::json expected_corpus() {
  std::ifstream in(corpus_dir() + "/expected.json");
  return nlohmann::json::parse(in);
}

RewriteRule corpus_rule(const std::string& name) { return load_rule_file(corpus_dir() + "/" + name + ".json"); }

}  // namespace trv::testing
