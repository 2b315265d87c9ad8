#include <doctest.h>

#include "support.h"
#include "trv/concrete.h"
#include "trv/symeval.h"
#include "trv/verifier.h"

using namespace trv;
using namespace trv::testing;

namespace {

VerifyConfig config() {
  VerifyConfig cfg;
  cfg.jobs = 2;
  return cfg;
}

bool all_unsat(const TaskResult& t) {
  for (auto& o : t.obligations)
    if (o.status != "unsat" && o.status != "syntactic" && o.status != "vacuous") return false;
  return true;
}

ConcreteTensor vector_of(const std::vector<std::int64_t>& xs) {
  ConcreteTensor t = ConcreteTensor::make({{"x", {"x.0"}}}, {{"x.0", static_cast<std::int64_t>(xs.size())}}, Sort::Int,
                                          Value::of_int(0));
  for (std::size_t k = 0; k < xs.size(); ++k) t.data[k] = Value::of_int(xs[k]);
  return t;
}

}  // namespace

TEST_CASE("corpus verdicts match expected.json") {
  auto expected = expected_corpus();
  for (auto& [name, e] : expected.items()) {
    CAPTURE(name);
    Verdict v = verify(corpus_rule(name), config());
    CHECK(outcome_name(v.overall) == e["verdict"].get<std::string>());
    if (e.contains("bounds"))
      for (auto& [rc, k] : e["bounds"].items()) CHECK(v.bounds.classes.at(rc).bound == k.get<int>());
    if (e.contains("reason")) CHECK(v.reason.find(e["reason"].get<std::string>()) != std::string::npos);
    if (v.overall == Outcome::Verified)
      for (auto& t : v.tasks) CHECK(all_unsat(t));
    if (v.overall == Outcome::Invalid) {
      const TaskResult* bad = nullptr;
      for (auto& t : v.tasks)
        if (t.outcome == Outcome::Invalid && !bad) bad = &t;
      REQUIRE(bad);
      REQUIRE(bad->counterexample);
      CHECK(bad->counterexample->confirmed);
      if (e.contains("first_invalid_rank"))
        for (auto& [rc, k] : e["first_invalid_rank"].items()) CHECK(bad->ranks.at(rc) == k.get<int>());
    }
  }
}

TEST_CASE("reflexive rule needs one task") {
  RewriteRule r = parse_rule_text(R"({"name": "id", "rclasses": {"c": ["x"]}, "maps": {"s": "x"},
      "tensors": {"X": {"shape": {"x": "s"}}}, "lhs": {"op": "var", "name": "X"}, "rhs": {"op": "var", "name": "X"}})");
  Verdict v = verify(r, config());
  CHECK(v.overall == Outcome::Verified);
  CHECK(v.tasks.size() == 1);
}

TEST_CASE("slice-dyup left side on a rank-1 input") {
  RewriteRule r = corpus_rule("slice-dyup");
  InstRule inst = instantiate(r, {{"c", 1}}, "t0");
  Env env{{"Y", vector_of({1, 2, 3, 4, 5})}};
  Model m = model_with_env({{"s.x.0.t0", Value::of_int(5)}}, env);
  ConcreteTensor l = eval_concrete(inst, inst.lhs, env, m);
  CHECK(l == vector_of({1, 0, 0}));
  const InstExpr& dyup = *inst.lhs;
  ConcreteTensor sliced = eval_concrete(inst, dyup.args.at(0), env, m);
  CHECK(sliced == vector_of({1, 2, 3}));
  SymResult s = sym_eval(inst, dyup.args.at(0));
  CHECK(evaluate(s.tensor.shape.at("x").at("x.0"), m).i == 3);
}

TEST_CASE("slice-dyup is valid at rank 1 and invalid at rank 2") {
  RewriteRule r = corpus_rule("slice-dyup");
  TaskResult t1 = verify_task(r, {{"c", 1}}, config());
  CHECK(t1.outcome == Outcome::Verified);
  CHECK(all_unsat(t1));
  TaskResult t2 = verify_task(r, {{"c", 2}}, config());
  CHECK(t2.outcome == Outcome::Invalid);
  REQUIRE(t2.counterexample);
  CHECK(t2.counterexample->confirmed);
  REQUIRE(t2.counterexample->lhs_value);
  CHECK(*t2.counterexample->lhs_value != *t2.counterexample->rhs_value);
}

TEST_CASE("corrupted model is flagged as unconfirmed") {
  RewriteRule r = corpus_rule("slice-dyup");
  TaskResult t2 = verify_task(r, {{"c", 2}}, config());
  REQUIRE(t2.counterexample);
  InstRule inst = instantiate(r, {{"c", 2}}, "tc2");
  AggMap access = symbolic_access(inst, sym_eval(inst, inst.lhs, "L").tensor.axes);
  std::string text = "(";
  for (auto& [n, v] : t2.counterexample->symbols) text += "(define-fun " + n + " () Int " + v + ")";
  for (auto& [k, inner] : access)
    for (auto& [n, s] : inner)
      text += "(define-fun " + s->name + " () Int " + std::to_string(t2.counterexample->access.at(n)) + ")";
  text += ")";
  SmtModel honest = parse_model(text.substr(0, text.size() - 1) + "(define-fun Y ((a Int) (b Int)) Int (+ 1 a (* 10 b))))");
  // Tensor contents dropped: every entry reads as 0, so both sides agree.
  SmtModel corrupted = parse_model(text);
  Counterexample bad = extract_counterexample(corrupted, inst, "value", access);
  CHECK_FALSE(bad.confirmed);
  Counterexample good = extract_counterexample(honest, inst, "value", access);
  CHECK(good.confirmed);
}

TEST_CASE("reduction discharge emits bijection and pointwise obligations") {
  TaskResult t = verify_task(corpus_rule("reduce-concat"), {{"c", 1}}, config());
  CHECK(t.outcome == Outcome::Verified);
  int total = 0, unique = 0, pointwise = 0;
  for (auto& o : t.obligations) {
    if (o.name.find("total-") != std::string::npos) ++total;
    if (o.name.find("unique-") != std::string::npos) ++unique;
    if (o.name.find("pointwise") != std::string::npos) ++pointwise;
    CHECK((o.status == "unsat" || o.status == "syntactic"));
  }
  CHECK(total >= 2);
  CHECK(unique >= 2);
  CHECK(pointwise >= 1);

  Verdict nohint = verify(corpus_rule("reduce-concat-nohint"), config());
  CHECK(nohint.overall == Outcome::Unknown);
  CHECK(nohint.reason.find("reduction without hint") != std::string::npos);
}

TEST_CASE("value obligations split along matching guards") {
  TaskResult t = verify_task(corpus_rule("fold-conv-input-pad-general"), {{"cb", 1}, {"cf", 1}, {"co", 1}, {"cx", 2}},
                             config());
  CHECK(t.outcome == Outcome::Verified);
  int split = 0;
  for (auto& o : t.obligations)
    if (o.detail == "split") ++split;
  CHECK(split >= 2);
}

TEST_CASE("early stop and the all-tasks switch") {
  RewriteRule r = corpus_rule("slice-dyup");
  VerifyConfig cfg = config();
  cfg.jobs = 1;
  CHECK(verify(r, cfg).tasks.size() == 2);
  RewriteRule wrong = corpus_rule("fold-conv-input-pad-general-nodilate");
  Verdict stopped = verify(wrong, cfg);
  CHECK(stopped.overall == Outcome::Invalid);
  CHECK(stopped.tasks.size() < 11);
  cfg.all_tasks = true;
  CHECK(verify(wrong, cfg).tasks.size() == 11);
}

TEST_CASE("differential testing finds the padlow mutant at rank 1 with small sizes") {
  FuzzOptions fo;
  fo.ranks = {{"c", 1}};
  fo.size_cap = 3;
  FuzzReport rep = differential_test(corpus_rule("padlow-combine-wrongsum"), fo);
  CHECK(rep.mismatches > 0);
  REQUIRE(rep.first);
  FuzzReport ok = differential_test(corpus_rule("padlow-combine"), fo);
  CHECK(ok.trials == fo.trials);
  CHECK(ok.mismatches == 0);
}
