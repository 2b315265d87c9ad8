#include <CLI11.hpp>
#include <atomic>
#include <fstream>
#include <iostream>
#include <thread>

#include "trv/analysis.h"
#include "trv/concrete.h"
#include "trv/report.h"
#include "trv/rulefile.h"
#include "trv/verifier.h"

using namespace trv;

namespace {

std::map<std::string, int> parse_rank_list(const std::string& s) {
  std::map<std::string, int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::ParseError, "expected rclass=k, got '" + item + "'");
    out[item.substr(0, eq)] = std::stoi(item.substr(eq + 1));
  }
  return out;
}

struct Loaded {
  std::string file;
  std::optional<RewriteRule> rule;
  std::string error;
};

std::vector<Loaded> load_all(const std::vector<std::string>& paths, bool& tool_error) {
  std::vector<Loaded> out;
  for (auto& p : paths) {
    std::vector<std::string> files;
    try {
      files = rule_files(p);
    } catch (const std::exception& e) {
      out.push_back(Loaded{p, std::nullopt, e.what()});
      tool_error = true;
      continue;
    }
    for (auto& f : files) {
      try {
        out.push_back(Loaded{f, load_rule_file(f), ""});
      } catch (const std::exception& e) {
        out.push_back(Loaded{f, std::nullopt, e.what()});
        tool_error = true;
      }
    }
  }
  return out;
}

template <class F>
void parallel_for(std::size_t n, int jobs, F f) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k; (k = next++) < n;) f(k);
  };
  std::vector<std::thread> pool;
  for (int j = 1; j < std::min<int>(jobs, static_cast<int>(n)); ++j) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
}

void emit(const Report& r, const std::string& format) {
  if (format == "json") std::cout << print_report(r) << "\n";
  else std::cout << format_text(r);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rank-polymorphic verifier for tensor rewrite rules"};
  app.require_subcommand(1);

  std::vector<std::string> paths;
  std::string solver = "z3", dump_dir, override_text, format = "text", corpus_dir = "corpus";
  std::vector<std::string> alias_text;
  int timeout_ms = 10000, jobs = 1, trials = 200;
  std::uint64_t seed = 1;
  bool oracle = false, all_tasks = false;
  std::string fuzz_ranks;

  auto* verify_cmd = app.add_subcommand("verify", "verify rules");
  verify_cmd->add_option("paths", paths, "rule files or directories")->required();
  verify_cmd->add_option("--solver", solver, "solver binary");
  verify_cmd->add_option("--timeout-ms", timeout_ms, "per-query timeout");
  verify_cmd->add_option("--jobs", jobs, "parallel workers");
  verify_cmd->add_option("--dump-smt", dump_dir, "write SMT-LIB scripts under this directory");
  verify_cmd->add_option("--max-rank-override", override_text, "rclass=k,... (diagnostic)");
  verify_cmd->add_flag("--oracle-check", oracle, "differential-test verified rules");
  verify_cmd->add_flag("--all-tasks", all_tasks, "run every task even after a counterexample");
  verify_cmd->add_option("--format", format, "json or text")->check(CLI::IsMember({"json", "text"}));
  verify_cmd->add_option("--seed", seed, "seed for differential testing");
  verify_cmd->add_option("--assume-alias", alias_text, "t1=t2: the two tensors share storage");

  auto* bounds_cmd = app.add_subcommand("bounds", "infer rank bounds");
  bounds_cmd->add_option("paths", paths, "rule files or directories")->required();
  bounds_cmd->add_option("--format", format, "json or text")->check(CLI::IsMember({"json", "text"}));

  auto* fuzz_cmd = app.add_subcommand("fuzz", "differential testing against the concrete interpreter");
  fuzz_cmd->add_option("paths", paths, "rule files or directories")->required();
  fuzz_cmd->add_option("--ranks", fuzz_ranks, "rclass=k,...; default: every in-bound rank tuple");
  fuzz_cmd->add_option("--trials", trials, "samples per rank tuple");
  fuzz_cmd->add_option("--seed", seed, "random seed");
  fuzz_cmd->add_option("--jobs", jobs, "parallel workers");

  auto* list_cmd = app.add_subcommand("list", "list corpus entries");
  list_cmd->add_option("dir", corpus_dir, "corpus directory");

  CLI11_PARSE(app, argc, argv);

  bool tool_error = false;
  try {
    if (*list_cmd) {
      std::ifstream in(corpus_dir + "/expected.json");
      if (!in) throw Error(ErrorCode::IoError, "cannot open " + corpus_dir + "/expected.json");
      nlohmann::json doc = nlohmann::json::parse(in);
      for (auto& [name, e] : doc.items()) {
        std::cout << name << "\t" << e.value("verdict", "?");
        if (e.contains("bounds"))
          for (auto& [c, k] : e["bounds"].items()) std::cout << "\t" << c << "=" << k.get<int>();
        std::cout << "\t" << e.value("note", "") << "\n";
      }
      return 0;
    }

    auto rules = load_all(paths, tool_error);
    Report report;
    report.rules.resize(rules.size());
    for (std::size_t k = 0; k < rules.size(); ++k) {
      report.rules[k].file = rules[k].file;
      report.rules[k].error = rules[k].error;
    }

    if (*bounds_cmd) {
      report.command = "bounds";
      for (std::size_t k = 0; k < rules.size(); ++k) {
        if (!rules[k].rule) continue;
        try {
          report.rules[k].bounds = analyze(*rules[k].rule);
        } catch (const std::exception& e) {
          report.rules[k].error = e.what();
          tool_error = true;
        }
      }
      report.exit_code = tool_error ? 3 : 0;
      emit(report, format);
      return report.exit_code;
    }

    if (*verify_cmd) {
      report.command = "verify";
      VerifyConfig cfg;
      cfg.solver.solver = solver;
      cfg.solver.timeout_ms = timeout_ms;
      if (!dump_dir.empty()) cfg.dump_dir = dump_dir;
      if (!override_text.empty()) cfg.rank_override = parse_rank_list(override_text);
      cfg.oracle_check = oracle;
      cfg.all_tasks = all_tasks;
      cfg.seed = seed;
      for (auto& a : alias_text) {
        auto eq = a.find('=');
        if (eq == std::string::npos) throw Error(ErrorCode::ParseError, "expected t1=t2, got '" + a + "'");
        cfg.aliases.emplace_back(a.substr(0, eq), a.substr(eq + 1));
      }
      std::size_t live = 0;
      for (auto& r : rules) live += r.rule ? 1 : 0;
      cfg.jobs = live > 1 ? 1 : jobs;
      std::atomic<bool> spawn_error{false};
      parallel_for(rules.size(), live > 1 ? jobs : 1, [&](std::size_t k) {
        if (!rules[k].rule) return;
        try {
          report.rules[k].verdict = verify(*rules[k].rule, cfg);
        } catch (const std::exception& e) {
          report.rules[k].error = e.what();
          spawn_error = true;
        }
      });
      tool_error = tool_error || spawn_error;
      bool invalid = false, unknown = false;
      for (auto& r : report.rules) {
        if (!r.verdict) continue;
        invalid = invalid || r.verdict->overall == Outcome::Invalid;
        unknown = unknown || r.verdict->overall == Outcome::Unknown || r.verdict->overall == Outcome::Unsupported;
      }
      report.exit_code = tool_error ? 3 : invalid ? 1 : unknown ? 2 : 0;
      emit(report, format);
      return report.exit_code;
    }

    if (*fuzz_cmd) {
      bool mismatch = false, exhausted = false;
      std::vector<std::string> lines(rules.size());
      parallel_for(rules.size(), jobs, [&](std::size_t k) {
        if (!rules[k].rule) {
          lines[k] = rules[k].file + ": error: " + rules[k].error + "\n";
          return;
        }
        const RewriteRule& rule = *rules[k].rule;
        std::vector<RankMap> tuples;
        if (!fuzz_ranks.empty()) tuples.push_back(parse_rank_list(fuzz_ranks));
        else tuples = task_set(analyze(rule));
        std::ostringstream os;
        for (auto& ranks : tuples) {
          FuzzOptions fo;
          fo.ranks = ranks;
          fo.trials = trials;
          fo.seed = seed;
          FuzzReport fr = differential_test(rule, fo);
          os << rule.name << " " << task_name(ranks) << ": " << fr.trials << " trials, " << fr.mismatches
             << " mismatches, " << fr.attempts << " draws";
          if (fr.exhausted) {
            os << " (" << error_code_name(ErrorCode::SamplingExhausted) << ")";
            exhausted = true;
          }
          if (fr.first) {
            mismatch = true;
            os << "\n  first: " << fr.first->reason;
            for (auto& [n, v] : fr.first->symbols) os << " " << n << "=" << v.str();
            if (fr.first->lhs_value) os << " lhs=" << fr.first->lhs_value->str() << " rhs=" << fr.first->rhs_value->str();
          }
          os << "\n";
        }
        lines[k] = os.str();
      });
      for (auto& l : lines) std::cout << l;
      return tool_error ? 3 : mismatch ? 1 : exhausted ? 2 : 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 3;
}
