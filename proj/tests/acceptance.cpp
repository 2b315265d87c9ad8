// Prints one PASS/FAIL line per acceptance criterion; exits non-zero on any FAIL.
#include <sys/wait.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <fmt/core.h>

#include "support.h"
#include "trv/report.h"
#include "trv/rulefile.h"
#include "trv/verifier.h"

#ifndef TRV_CLI
#define TRV_CLI "trv"
#endif

using namespace trv;
using namespace trv::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Check {
  bool ok = true;
  std::vector<std::string> notes;
  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      notes.push_back("failed: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::pair<int, std::string> run_capture(const std::string& cmd) {
  std::string out;
  FILE* p = popen((cmd + " 2>&1").c_str(), "r");
  if (!p) return {-1, ""};
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) out.append(buf, n);
  int rc = pclose(p);
  return {WIFEXITED(rc) ? WEXITSTATUS(rc) : -1, out};
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_word(const std::string& s) {
  std::istringstream in(s);
  std::string w;
  in >> w;
  return w;
}

bool all_unsat(const TaskResult& t) {
  for (auto& o : t.obligations)
    if (o.status != "unsat" && o.status != "syntactic" && o.status != "vacuous") return false;
  return true;
}

std::string rule_path(const std::string& name) { return corpus_dir() + "/" + name + ".json"; }

VerifyConfig base_config() {
  VerifyConfig cfg;
  cfg.jobs = 1;
  return cfg;
}

const TaskResult* first_invalid(const Verdict& v) {
  for (auto& t : v.tasks)
    if (t.outcome == Outcome::Invalid) return &t;
  return nullptr;
}

std::string ranks_text(const RankMap& r) {
  std::string s;
  for (auto& [k, v] : r) s += (s.empty() ? "" : ",") + k + "=" + std::to_string(v);
  return s;
}

Check bounds_reproduction() {
  Check c;
  for (auto [name, want] : {std::pair{"padlow-combine", 2}, {"dyslice-to-slice", 1}}) {
    auto t0 = Clock::now();
    auto [rc, out] = run_capture(std::string(TRV_CLI) + " bounds --format json " + rule_path(name));
    double secs = seconds_since(t0);
    c.require(rc == 0, fmt::format("{}: exit code {}", name, rc));
    if (rc != 0) continue;
    Report r = parse_report(out);
    bool have = r.rules.size() == 1 && r.rules[0].bounds && r.rules[0].bounds->classes.size() == 1;
    c.require(have, fmt::format("{}: one rclass in the report", name));
    if (!have) continue;
    int got = r.rules[0].bounds->classes.begin()->second.bound;
    c.require(got == want, fmt::format("{}: bound {} (want {})", name, got, want));
    c.require(secs < 1.0, fmt::format("{}: {:.3f} s", name, secs));
    c.note(fmt::format("{} bound {} in {:.3f} s", name, got, secs));
  }
  return c;
}

Check valid_rules() {
  Check c;
  for (std::string name :
       {"padlow-combine", "dyslice-to-slice", "transpose-sum", "expand-padlow", "fold-conv-input-pad-general"}) {
    auto t0 = Clock::now();
    Verdict v = verify(corpus_rule(name), base_config());
    double secs = seconds_since(t0);
    c.require(v.overall == Outcome::Verified, name + ": " + outcome_name(v.overall) + " " + v.reason);
    for (auto& t : v.tasks) c.require(all_unsat(t), name + "/" + t.name + ": obligation not unsat");
    c.require(secs < 30.0, fmt::format("{}: {:.2f} s", name, secs));
    c.note(fmt::format("{} {} tasks in {:.2f} s", name, v.tasks.size(), secs));
  }
  return c;
}

Check counterexample_discovery() {
  Check c;
  RewriteRule r = corpus_rule("slice-dyup");
  Verdict v = verify(r, base_config());
  c.require(v.overall == Outcome::Invalid, std::string("verdict ") + outcome_name(v.overall));
  const TaskResult* bad = first_invalid(v);
  c.require(bad && bad->counterexample, "counterexample present");
  if (bad && bad->counterexample) {
    const Counterexample& cx = *bad->counterexample;
    int rank = cx.ranks.at("c");
    c.require(rank <= 2, fmt::format("counterexample rank {}", rank));
    c.require(cx.confirmed, "oracle replay confirms the counterexample");
    c.require(cx.lhs_value && cx.rhs_value && *cx.lhs_value != *cx.rhs_value, "lhs and rhs differ at the access");
    c.note(fmt::format("rank {} {}: lhs {} rhs {}", rank, cx.obligation, cx.lhs_value.value_or("-"),
                       cx.rhs_value.value_or("-")));
  }
  TaskResult t1 = verify_task(r, {{"c", 1}}, base_config());
  c.require(t1.outcome == Outcome::Verified && all_unsat(t1), "rank-1 task unsat");
  return c;
}

Check task_count_law() {
  Check c;
  VerifyConfig cfg = base_config();
  cfg.jobs = 4;
  cfg.all_tasks = true;
  int rules = 0;
  for (auto& file : rule_files(corpus_dir())) {
    Verdict v = verify(load_rule_file(file), cfg);
    long long product = 1;
    for (auto& [rc, b] : v.bounds.classes) product *= b.bound;
    c.require(static_cast<long long>(v.tasks.size()) == product,
              fmt::format("{}: {} tasks, product {}", v.rule, v.tasks.size(), product));
    ++rules;
  }
  c.note(fmt::format("{} rules", rules));
  return c;
}

Check soundness_suite() {
  Check c;
  auto expected = expected_corpus();
  int tuples = 0;
  for (auto& [name, e] : expected.items()) {
    std::string want = e["verdict"];
    RewriteRule rule = corpus_rule(name);
    if (want == "Verified") {
      for (auto& ranks : task_set(analyze(rule))) {
        FuzzOptions fo;
        fo.ranks = ranks;
        FuzzReport rep = differential_test(rule, fo);
        c.require(rep.trials == 200 && rep.mismatches == 0,
                  fmt::format("{} [{}]: {} trials, {} mismatches", name, ranks_text(ranks), rep.trials,
                              rep.mismatches));
        ++tuples;
      }
    } else if (want == "Invalid") {
      Verdict v = verify(rule, base_config());
      const TaskResult* bad = first_invalid(v);
      if (!bad || !bad->counterexample) {
        c.require(false, name + ": no counterexample");
        continue;
      }
      bool replayed = bad->counterexample->confirmed;
      FuzzOptions fo;
      fo.ranks = bad->counterexample->ranks;
      fo.trials = 10'000;
      fo.stop_on_mismatch = true;
      FuzzReport rep = differential_test(rule, fo);
      c.require(replayed || rep.mismatches > 0, name + ": neither replay nor fuzzing reproduces");
      c.note(fmt::format("{} [{}]: replay {}, fuzz mismatch after {} trials", name, ranks_text(fo.ranks),
                         replayed ? "confirmed" : "unconfirmed", rep.mismatches > 0 ? rep.trials : -1));
    }
  }
  c.note(fmt::format("{} in-bound rank tuples of verified rules", tuples));
  return c;
}

Check semantics_equivalence() {
  Check c;
  std::uint64_t seed = 101;
  for (auto& op : operator_cases()) {
    OracleStats s = semantics_oracle(parse_rule_text(op.json), 100, seed++);
    c.require(s.failures == 0, op.name + ": " + s.first_failure);
    c.require(s.valid >= 100, fmt::format("{}: {} valid cases", op.name, s.valid));
  }
  c.note(fmt::format("{} operator cases", operator_cases().size()));
  return c;
}

Check reduction_discharge() {
  Check c;
  Verdict v = verify(corpus_rule("reduce-concat"), base_config());
  c.require(v.overall == Outcome::Verified, std::string("reduce-concat ") + outcome_name(v.overall));
  int bijection = 0, pointwise = 0;
  for (auto& t : v.tasks)
    for (auto& o : t.obligations) {
      bool bij = o.name.find("total-") != std::string::npos || o.name.find("unique-") != std::string::npos;
      bool pw = o.name.find("pointwise") != std::string::npos;
      if (bij) ++bijection;
      if (pw) ++pointwise;
      if (bij || pw) c.require(o.status == "unsat", t.name + "/" + o.name + ": " + o.status);
    }
  c.require(bijection > 0 && pointwise > 0, "bijection and pointwise obligations present");
  c.note(fmt::format("{} bijection and {} pointwise obligations", bijection, pointwise));
  Verdict nohint = verify(corpus_rule("reduce-concat-nohint"), base_config());
  c.require(nohint.overall == Outcome::Unknown, std::string("nohint ") + outcome_name(nohint.overall));
  c.require(nohint.reason.find("reduction without hint") != std::string::npos, "nohint reason: " + nohint.reason);
  return c;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = read_file(e.path());
  return files;
}

Check dump_fidelity() {
  Check c;
  fs::path base = fs::temp_directory_path() / "trv-acceptance-dump";
  fs::remove_all(base);
  fs::path a = base / "a", b = base / "b";
  for (auto& d : {a, b}) {
    auto [rc, out] = run_capture(std::string(TRV_CLI) + " verify --jobs 4 --seed 7 --dump-smt " + d.string() + " " +
                                 corpus_dir());
    c.require(rc == 1, fmt::format("verify exit code {} (want 1)", rc));
  }
  auto ta = tree(a), tb = tree(b);
  c.require(!ta.empty(), "dump is empty");
  c.require(ta == tb, "dump trees differ");
  const char* env = std::getenv("TRV_SOLVER");
  std::string solver = env ? env : "z3";
  int scripts = 0, mismatched = 0;
  std::map<std::string, std::string> standalone;  // script text -> solver answer
  for (auto& [rel, text] : ta) {
    if (fs::path(rel).extension() != ".smt2") continue;
    ++scripts;
    std::string status_file = (a / rel).replace_extension(".status").string();
    std::string recorded = first_word(read_file(status_file));
    auto it = standalone.find(text);
    if (it == standalone.end())
      it = standalone.emplace(text, first_word(run_capture(solver + " " + (a / rel).string()).second)).first;
    const std::string& got = it->second;
    if (got != recorded) {
      ++mismatched;
      c.require(false, fmt::format("{}: recorded {}, standalone {}", rel, recorded, got));
    }
  }
  c.note(fmt::format("{} scripts ({} distinct), {} identical files, {} status mismatches", scripts, standalone.size(),
                     ta.size(), mismatched));
  fs::remove_all(base);
  return c;
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, std::function<Check()>>> criteria = {
      {"bound reproduction", bounds_reproduction},
      {"unbounded verification of valid rules", valid_rules},
      {"counterexample discovery", counterexample_discovery},
      {"task-count law", task_count_law},
      {"soundness property suite", soundness_suite},
      {"semantics oracle equivalence", semantics_equivalence},
      {"reduction discharge", reduction_discharge},
      {"determinism and dump fidelity", dump_fidelity},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    auto& [title, run] = criteria[k];
    auto t0 = Clock::now();
    Check c;
    try {
      c = run();
    } catch (const std::exception& e) {
      c.require(false, std::string("exception: ") + e.what());
    }
    if (!c.ok) ++failed;
    std::cout << fmt::format("criterion {} {}: {} ({:.1f} s)\n", k + 1, title, c.ok ? "PASS" : "FAIL",
                             seconds_since(t0));
    for (auto& n : c.notes) std::cout << "    " << n << "\n";
    std::cout.flush();
  }
  return failed == 0 ? 0 : 1;
}
