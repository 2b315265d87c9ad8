#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "support.h"
#include "trv/report.h"
#include "trv/rulefile.h"

#ifndef TRV_CLI
#define TRV_CLI "trv"
#endif

using namespace trv;
using namespace trv::testing;
namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  std::string cmd = std::string(TRV_CLI) + " " + args + " >/dev/null 2>&1";
  int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("trv-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("report JSON round-trips") {
  VerifyConfig cfg;
  cfg.jobs = 2;
  Report r;
  r.command = "verify";
  for (std::string name : {"padlow-combine", "slice-dyup", "reduce-concat-nohint"}) {
    RuleReport rr;
    rr.file = corpus_dir() + "/" + name + ".json";
    rr.verdict = verify(corpus_rule(name), cfg);
    r.rules.push_back(rr);
  }
  RuleReport broken;
  broken.file = "missing.json";
  broken.error = "IoError: cannot open missing.json";
  r.rules.push_back(broken);
  RuleReport bounds;
  bounds.file = "padlow-combine.json";
  bounds.bounds = analyze(corpus_rule("padlow-combine"));
  r.rules.push_back(bounds);
  r.exit_code = 1;
  std::string text = print_report(r);
  Report back = parse_report(text);
  CHECK(back == r);
  CHECK(print_report(back) == text);
}

TEST_CASE("exit codes") {
  CHECK(run_cli("verify " + corpus_dir()) == 1);
  CHECK(run_cli("verify " + corpus_dir() + "/padlow-combine.json") == 0);
  CHECK(run_cli("verify " + corpus_dir() + "/reduce-concat-nohint.json") == 2);
  CHECK(run_cli("verify /nonexistent/rules") == 3);

  fs::path valid = scratch("valid");
  auto expected = expected_corpus();
  for (auto& [name, e] : expected.items())
    if (e["verdict"] == "Verified") fs::copy_file(corpus_dir() + "/" + name + ".json", valid / (name + ".json"));
  CHECK(run_cli("verify --jobs 4 " + valid.string()) == 0);

  fs::path bad = scratch("bad");
  std::ofstream(bad / "broken.json") << "{\"name\": \"x\",\n  \"tensors\": }";
  CHECK(run_cli("verify " + (bad / "broken.json").string()) == 3);
  CHECK(run_cli("verify --solver /nonexistent/solver " + corpus_dir() + "/padlow-combine.json") == 3);
  CHECK(run_cli("bounds " + corpus_dir() + "/padlow-combine.json") == 0);
  CHECK(run_cli("fuzz " + corpus_dir() + "/reverse-once.json") == 1);
  CHECK(run_cli("fuzz " + corpus_dir() + "/reverse-reverse.json") == 0);
}

TEST_CASE("parse errors carry line and column") {
  fs::path bad = scratch("parse");
  std::ofstream(bad / "broken.json") << "{\"name\": \"x\",\n  \"tensors\": }";
  try {
    load_rule_file((bad / "broken.json").string());
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ParseError);
    CHECK(std::string(e.what()).find("broken.json:2:") != std::string::npos);
  }
}
