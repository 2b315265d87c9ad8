#include <doctest.h>

#include "support.h"
#include "trv/smt.h"

using namespace trv;
using namespace trv::testing;

TEST_CASE("ceil division lowers to div and matches integer brute force") {
  TermBank bank;
  Term e = bank.sym("e", Sort::Int), s = bank.sym("s", Sort::Int), p = bank.sym("p", Sort::Int);
  Term t = bank.ceil_div(bank.sub(e, s), p);
  CHECK(lower(t) == "(ite (= p 0) 0 (div (+ (- e s) (- p 1)) p))");
  Term d = bank.sub(e, s), zero = bank.int_lit(0);
  Query q;
  q.name = "ceil";
  q.assumptions = {bank.gt(p, zero), bank.le(p, bank.int_lit(5)), bank.ge(d, zero), bank.le(d, bank.int_lit(20))};
  q.goal = bank.and_(bank.ge(bank.mul(t, p), d), bank.lt(bank.mul(bank.sub(t, bank.int_lit(1)), p), d));
  CHECK(check(q, {}).status == SolverStatus::Unsat);
  for (std::int64_t diff = 0; diff <= 20; ++diff)
    for (std::int64_t step = 1; step <= 5; ++step) {
      Model m;
      m.symbols = {{"e", Value::of_int(diff + 3)}, {"s", Value::of_int(3)}, {"p", Value::of_int(step)}};
      std::int64_t want = diff / step + (diff % step != 0 ? 1 : 0);
      CHECK(evaluate(t, m).i == want);
    }
}

TEST_CASE("lowering") {
  TermBank bank;
  Term a = bank.sym("a", Sort::Int), l = bank.sym("l", Sort::Int);
  Term t = bank.ite(bank.ge(a, l), bank.read("Y", Sort::Int, {bank.sub(a, l)}), bank.int_lit(0));
  CHECK(lower(t) == "(ite (>= a l) (Y (- a l)) 0)");
  Term r = bank.red(RedOp::Add, {bank.sym("j", Sort::Int)}, {l}, bank.read("Y", Sort::Int, {bank.sym("j", Sort::Int)}));
  CHECK_THROWS_AS(lower(r), Error);
  CHECK(lower(bank.min(a, l)).find("ite") != std::string::npos);
}

TEST_CASE("real division by zero and unit literals") {
  TermBank bank;
  Term x = bank.sym("x", Sort::Real), y = bank.sym("y", Sort::Real);
  Term q = bank.rdiv(x, y);
  Model m;
  m.symbols = {{"x", Value::of_real(Rational(3, 2))}, {"y", Value::of_real(Rational(0))}};
  CHECK(evaluate(q, m) == Value::of_real(Rational(0)));
  m.symbols["y"] = Value::of_real(Rational(1, 2));
  CHECK(evaluate(q, m) == Value::of_real(Rational(3)));
  CHECK(bank.mul(x, bank.real_lit(Rational(1))) == x);
  CHECK(bank.add(x, bank.real_lit(Rational(0))) == x);
}

TEST_CASE("solver proves a tautology and returns a faithful model otherwise") {
  TermBank bank;
  Term x = bank.sym("x", Sort::Int), l1 = bank.sym("l1", Sort::Int), l2 = bank.sym("l2", Sort::Int);
  Term zero = bank.int_lit(0);
  Query q;
  q.name = "taut";
  q.assumptions = {bank.ge(l1, zero), bank.ge(l2, zero), bank.ge(x, bank.add(l1, l2))};
  q.goal = bank.ge(x, l2);
  CHECK(check(q, {}).status == SolverStatus::Unsat);

  q.goal = bank.ge(x, bank.add(l2, bank.int_lit(1)));
  SolverResult r = check(q, {});
  REQUIRE(r.status == SolverStatus::Sat);
  Model m = r.model.to_model({});
  for (Term a : q.assumptions) CHECK(evaluate(a, m).b);
  CHECK_FALSE(evaluate(q.goal, m).b);
}

TEST_CASE("models with tensor functions round-trip through the evaluator") {
  TermBank bank;
  Term i = bank.sym("i", Sort::Int);
  Term rd = bank.read("Y", Sort::Int, {i});
  Query q;
  q.name = "uf";
  q.assumptions = {bank.ge(i, bank.int_lit(0)), bank.lt(i, bank.int_lit(3))};
  q.goal = bank.eq(rd, bank.read("Y", Sort::Int, {bank.int_lit(0)}));
  SolverResult r = check(q, {});
  REQUIRE(r.status == SolverStatus::Sat);
  Model m = r.model.to_model({{"Y", Sort::Int}});
  CHECK_FALSE(evaluate(q.goal, m).b);
}

TEST_CASE("missing solver binary") {
  SolverConfig cfg;
  cfg.solver = "/nonexistent/solver";
  CHECK_THROWS_AS(run_script("(check-sat)\n", cfg), Error);
}

TEST_CASE("model parsing") {
  SmtModel m = parse_model(R"((
  (define-fun s () Int 4)
  (define-fun n () Int (- 2))
  (define-fun r () Real (/ 1.0 3.0))
  (define-fun Y ((x!0 Int)) Int (ite (= x!0 1) 7 (- 1)))
))");
  CHECK(m.get("s") == Value::of_int(4));
  CHECK(m.get("n") == Value::of_int(-2));
  CHECK(m.get("r") == Value::of_real(Rational(1, 3)));
  CHECK(m.get("Y", {Value::of_int(1)}) == Value::of_int(7));
  CHECK(m.get("Y", {Value::of_int(5)}) == Value::of_int(-1));
}

TEST_CASE("scripts are deterministic and canonical names erase task and axis numbering") {
  auto make = [](TermBank& bank, const std::string& task, int axis) {
    std::string n = std::to_string(axis);
    Term s = bank.sym("s.x." + n + "." + task, Sort::Int, "x." + n, Role::Size);
    Term l = bank.sym("l.x." + n + "." + task, Sort::Int, "x." + n, Role::Attr);
    Query q;
    q.name = "value";
    q.assumptions = {bank.ge(s, bank.int_lit(0)), bank.ge(l, bank.int_lit(0))};
    q.goal = bank.ge(bank.add(s, l), s);
    return q;
  };
  TermBank b1, b2;
  Query q1 = make(b1, "tc1", 0), q2 = make(b2, "tc2", 1);
  CHECK(build_script(q1) == build_script(make(b1, "tc1", 0)));
  CHECK(build_script(q1) != build_script(q2));
  CanonicalQuery c1 = canonical_query(b1, q1), c2 = canonical_query(b2, q2);
  CHECK(build_script(c1.query) == build_script(c2.query));
  CHECK(c1.original.at("s.x!0") == "s.x.0.tc1");
  CHECK(c2.original.at("l.x!1") == "l.x.1.tc2");

  SmtModel m = parse_model("((define-fun s.x!0 () Int 3) (define-fun other () Int 1))");
  SmtModel back = rename_model(m, c2.original);
  CHECK(back.has("s.x.1.tc2"));
  CHECK(back.has("other"));
}

TEST_CASE("cached runs return the first answer") {
  std::string script = "(set-logic QF_LIA)\n(declare-fun a () Int)\n(assert (> a a))\n(check-sat)\n";
  SolverResult first = run_cached(script, {});
  SolverResult again = run_cached(script, {});
  CHECK(first.status == SolverStatus::Unsat);
  CHECK(again.status == SolverStatus::Unsat);
  CHECK(again.ms == 0);
}
