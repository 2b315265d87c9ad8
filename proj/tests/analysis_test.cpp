#include <doctest.h>

#include "support.h"
#include "trv/analysis.h"
#include "trv/rulefile.h"

using namespace trv;
using namespace trv::testing;

TEST_CASE("bounds match the corpus expectations") {
  auto expected = expected_corpus();
  for (auto& [name, e] : expected.items()) {
    if (!e.contains("bounds")) continue;
    CAPTURE(name);
    BoundReport b = analyze(corpus_rule(name));
    for (auto& [rc, k] : e["bounds"].items()) CHECK(b.classes.at(rc).bound == k.get<int>());
  }
}

TEST_CASE("bounds do not depend on the probe rank") {
  for (auto& file : rule_files(corpus_dir())) {
    CAPTURE(file);
    RewriteRule r = load_rule_file(file);
    BoundReport at1 = analyze(r, 1);
    for (int probe : {2, 3}) {
      BoundReport at = analyze(r, probe);
      for (auto& [rc, b] : at1.classes) {
        CAPTURE(rc);
        CHECK(at.classes.at(rc).bound == b.bound);
        CHECK(at.classes.at(rc).access_counts == b.access_counts);
        CHECK(at.classes.at(rc).condition_count == b.condition_count);
      }
    }
  }
}

TEST_CASE("padlow-combine breakdown") {
  BoundReport b = analyze(corpus_rule("padlow-combine"));
  const RClassBound& c = b.classes.at("c");
  CHECK(c.bound == 2);
  CHECK(c.access_counts.at("Y") == 1);
  CHECK(c.condition_count == 2);
}

TEST_CASE("task set is the product of the bounds in lexicographic order") {
  BoundReport b;
  b.classes["a"].bound = 2;
  b.classes["b"].bound = 3;
  auto tasks = task_set(b);
  REQUIRE(tasks.size() == 6);
  CHECK(tasks.front() == RankMap{{"a", 1}, {"b", 1}});
  CHECK(tasks[1] == RankMap{{"a", 1}, {"b", 2}});
  CHECK(tasks.back() == RankMap{{"a", 2}, {"b", 3}});
  CHECK(task_name(tasks.back()) == "ta2_b3");
}

TEST_CASE("aggregated maps") {
  TermBank bank;
  Term one = bank.int_lit(1), two = bank.int_lit(2);
  AggMap m{{"x", {{"x.0", one}, {"x.1", two}}}, {"y", {{"y.0", two}}}};
  CHECK_NOTHROW(validate_agg_map(m));
  Layout l = layout_of(m);
  CHECK(l.at("x") == std::vector<std::string>{"x.0", "x.1"});
  CHECK(named_axes(l).size() == 3);

  AggMap clash{{"x", {{"x.0", one}}}, {"y", {{"x.0", two}}}};
  CHECK_THROWS_AS(validate_agg_map(clash), Error);
  Layout wrong{{"x", {"x.0"}}, {"y", {"y.0"}}};
  CHECK_THROWS_AS(validate_agg_map(m, &wrong), Error);

  AggMap sum = agg_map_combine([&](const std::vector<Term>& v) { return bank.add(v[0], v[1]); }, {m, m});
  CHECK(sum.at("x").at("x.1") == bank.int_lit(4));
  CHECK(sum.at("y").at("y.0") == bank.int_lit(4));

  Term all_pos = agg_map_fold(bank, [&](const std::vector<Term>& v) { return bank.gt(v[0], bank.int_lit(0)); }, {m});
  CHECK(all_pos->is_true());

  AggMap only_x = restrict_to(m, {"x.0", "x.1"});
  CHECK(only_x.count("x") == 1);
  CHECK(only_x.count("y") == 0);
}
