#include "trv/smt.h"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <mutex>
#include <unordered_map>
#include <set>
#include <sstream>

#include "trv/error.h"

namespace trv {

// ---- lowering ----

std::string smt_symbol(const std::string& name) {
  static const std::string extra = "~!@$%^&*_-+=<>.?/";
  bool simple = !name.empty() && !std::isdigit(static_cast<unsigned char>(name[0]));
  for (char c : name)
    if (!std::isalnum(static_cast<unsigned char>(c)) && extra.find(c) == std::string::npos) simple = false;
  return simple ? name : "|" + name + "|";
}

namespace {

const char* smt_sort(Sort s) {
  switch (s) {
    case Sort::Int: return "Int";
    case Sort::Real: return "Real";
    case Sort::Bool: return "Bool";
  }
  return "Int";
}

std::string int_text(std::int64_t v) { return v < 0 ? "(- " + std::to_string(-v) + ")" : std::to_string(v); }

std::string real_text(const Rational& r) {
  std::int64_t n = r.numerator(), d = r.denominator();
  std::string mag = std::to_string(n < 0 ? -n : n) + ".0";
  if (d != 1) mag = "(/ " + mag + " " + std::to_string(d) + ".0)";
  return n < 0 ? "(- " + mag + ")" : mag;
}

struct Lowerer {
  std::map<Term, std::string> memo;

  std::string go(Term t) {
    auto it = memo.find(t);
    if (it != memo.end()) return it->second;
    std::string s = build(t);
    memo.emplace(t, s);
    return s;
  }

  std::string app(const std::string& f, std::initializer_list<Term> ks) {
    std::string s = "(" + f;
    for (Term k : ks) s += " " + go(k);
    return s + ")";
  }

  std::string guarded(const char* f, Term a, Term b) {
    std::string core = "(" + std::string(f) + " " + go(a) + " " + go(b) + ")";
    if (b->is_lit()) return core;
    std::string z = b->sort == Sort::Real ? "0.0" : "0";
    return "(ite (= " + go(b) + " " + z + ") " + z + " " + core + ")";
  }

  std::string build(Term t) {
    switch (t->kind) {
      case Kind::IntLit: return int_text(t->ival);
      case Kind::RealLit: return real_text(t->rval);
      case Kind::BoolLit: return t->ival ? "true" : "false";
      case Kind::Sym: return smt_symbol(t->name);
      case Kind::Add: return app("+", {t->kids[0], t->kids[1]});
      case Kind::Sub: return app("-", {t->kids[0], t->kids[1]});
      case Kind::Mul: return app("*", {t->kids[0], t->kids[1]});
      case Kind::Neg: return app("-", {t->kids[0]});
      case Kind::Div: return guarded("div", t->kids[0], t->kids[1]);
      case Kind::Mod: return guarded("mod", t->kids[0], t->kids[1]);
      case Kind::RDiv: return guarded("/", t->kids[0], t->kids[1]);
      case Kind::Min: {
        std::string a = go(t->kids[0]), b = go(t->kids[1]);
        return "(ite (<= " + a + " " + b + ") " + a + " " + b + ")";
      }
      case Kind::Max: {
        std::string a = go(t->kids[0]), b = go(t->kids[1]);
        return "(ite (>= " + a + " " + b + ") " + a + " " + b + ")";
      }
      case Kind::Eq: return app("=", {t->kids[0], t->kids[1]});
      case Kind::Ne: return "(not " + app("=", {t->kids[0], t->kids[1]}) + ")";
      case Kind::Lt: return app("<", {t->kids[0], t->kids[1]});
      case Kind::Le: return app("<=", {t->kids[0], t->kids[1]});
      case Kind::Gt: return app(">", {t->kids[0], t->kids[1]});
      case Kind::Ge: return app(">=", {t->kids[0], t->kids[1]});
      case Kind::And:
      case Kind::Or: {
        std::string s = t->kind == Kind::And ? "(and" : "(or";
        for (Term k : t->kids) s += " " + go(k);
        return s + ")";
      }
      case Kind::Not: return app("not", {t->kids[0]});
      case Kind::Ite: return app("ite", {t->kids[0], t->kids[1], t->kids[2]});
      case Kind::Read: {
        if (t->kids.empty()) return smt_symbol(t->name);
        std::string s = "(" + smt_symbol(t->name);
        for (Term k : t->kids) s += " " + go(k);
        return s + ")";
      }
      case Kind::Red: throw Error(ErrorCode::ResidualReduction, to_string(t));
    }
    throw Error(ErrorCode::UnsupportedTheory, to_string(t));
  }
};

}  // namespace

std::string lower(Term t) {
  Lowerer l;
  return l.go(t);
}

std::string select_logic(const std::vector<Term>& terms) {
  bool real = false, nonlinear = false;
  std::set<Term> seen;
  std::function<void(Term)> go = [&](Term t) {
    if (!seen.insert(t).second) return;
    if (t->sort == Sort::Real) real = true;
    switch (t->kind) {
      case Kind::Mul:
        if (!t->kids[0]->is_lit() && !t->kids[1]->is_lit()) nonlinear = true;
        break;
      case Kind::Div:
      case Kind::Mod:
      case Kind::RDiv:
        if (!t->kids[1]->is_lit()) nonlinear = true;
        break;
      default: break;
    }
    for (Term k : t->kids) go(k);
  };
  for (Term t : terms) go(t);
  if (nonlinear) return real ? "UFNIRA" : "UFNIA";
  return real ? "UFLIRA" : "UFLIA";
}

std::string build_script(const Query& q) {
  std::vector<Term> all = q.assumptions;
  all.push_back(q.goal);
  std::set<Term> bound(q.exists.begin(), q.exists.end());
  std::map<std::string, Sort> consts;
  std::map<std::string, std::pair<std::size_t, Sort>> funs;
  for (Term t : all) {
    for (Term s : free_symbols(t))
      if (!bound.count(s)) consts[s->name] = s->sort;
    for (Term r : collect(t, [](Term x) { return x->kind == Kind::Read; })) {
      auto [it, fresh] = funs.emplace(r->name, std::make_pair(r->kids.size(), r->sort));
      if (!fresh && it->second != std::make_pair(r->kids.size(), r->sort))
        throw Error(ErrorCode::UnsupportedTheory, "tensor " + r->name + " read with inconsistent arity or sort");
    }
  }
  for (auto& [n, f] : funs)
    if (consts.count(n)) throw Error(ErrorCode::UnsupportedTheory, "name used as symbol and tensor: " + n);
  std::ostringstream os;
  os << "(set-logic " << select_logic(all) << ")\n";
  os << "(set-option :produce-models true)\n";
  for (auto& [n, f] : funs) {
    os << "(declare-fun " << smt_symbol(n) << " (";
    for (std::size_t k = 0; k < f.first; ++k) os << (k ? " " : "") << "Int";
    os << ") " << smt_sort(f.second) << ")\n";
  }
  for (auto& [n, s] : consts) os << "(declare-fun " << smt_symbol(n) << " () " << smt_sort(s) << ")\n";
  for (Term a : q.assumptions)
    if (!a->is_true()) os << "(assert " << lower(a) << ")\n";
  std::string goal = lower(q.goal);
  if (!q.exists.empty()) {
    std::string binders;
    for (Term s : q.exists) binders += (binders.empty() ? "(" : " (") + smt_symbol(s->name) + " " + smt_sort(s->sort) + ")";
    goal = "(exists (" + binders + ") " + goal + ")";
  }
  os << "(assert (not " << goal << "))\n";
  os << "(check-sat)\n(get-model)\n";
  return os.str();
}

// ---- s-expressions and models ----

std::string SExpr::str() const {
  if (is_atom()) return atom;
  std::string s = "(";
  for (std::size_t k = 0; k < list.size(); ++k) s += (k ? " " : "") + list[k].str();
  return s + ")";
}

std::vector<SExpr> parse_sexprs(const std::string& text) {
  std::size_t i = 0;
  auto fail = [&](const std::string& m) { throw Error(ErrorCode::ModelParseError, m + " at offset " + std::to_string(i)); };
  std::function<void()> skip = [&] {
    while (i < text.size()) {
      if (std::isspace(static_cast<unsigned char>(text[i]))) ++i;
      else if (text[i] == ';')
        while (i < text.size() && text[i] != '\n') ++i;
      else break;
    }
  };
  std::function<SExpr()> one = [&]() -> SExpr {
    skip();
    if (i >= text.size()) fail("unexpected end");
    SExpr e;
    char c = text[i];
    if (c == '(') {
      ++i;
      while (true) {
        skip();
        if (i >= text.size()) fail("unbalanced parenthesis");
        if (text[i] == ')') {
          ++i;
          break;
        }
        e.list.push_back(one());
      }
      return e;
    }
    if (c == ')') fail("unexpected )");
    if (c == '|') {
      std::size_t j = text.find('|', i + 1);
      if (j == std::string::npos) fail("unterminated |symbol|");
      e.atom = text.substr(i + 1, j - i - 1);
      if (e.atom.empty()) e.atom = "||";
      i = j + 1;
      return e;
    }
    if (c == '"') {
      std::size_t j = i + 1;
      while (j < text.size()) {
        if (text[j] == '"') {
          if (j + 1 < text.size() && text[j + 1] == '"') {
            j += 2;
            continue;
          }
          break;
        }
        ++j;
      }
      if (j >= text.size()) fail("unterminated string");
      e.atom = text.substr(i, j - i + 1);
      i = j + 1;
      return e;
    }
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j])) && text[j] != '(' && text[j] != ')') ++j;
    e.atom = text.substr(i, j - i);
    i = j;
    return e;
  };
  std::vector<SExpr> out;
  while (true) {
    skip();
    if (i >= text.size()) break;
    out.push_back(one());
  }
  return out;
}

namespace {

Sort model_sort(const SExpr& s) {
  if (s.atom == "Int") return Sort::Int;
  if (s.atom == "Real") return Sort::Real;
  if (s.atom == "Bool") return Sort::Bool;
  throw Error(ErrorCode::ModelParseError, "unsupported sort " + s.str());
}

Value to_real(const Value& v) { return v.sort == Sort::Int ? Value::of_real(Rational(v.i)) : v; }

Value parse_number(const std::string& a) {
  auto dot = a.find('.');
  try {
    if (dot == std::string::npos) return Value::of_int(std::stoll(a));
    std::string ip = a.substr(0, dot), fp = a.substr(dot + 1);
    std::int64_t den = 1;
    for (std::size_t k = 0; k < fp.size(); ++k) den *= 10;
    std::int64_t num = std::stoll(ip.empty() ? "0" : ip) * den + (fp.empty() ? 0 : std::stoll(fp));
    return Value::of_real(Rational(num, den));
  } catch (const std::exception&) {
    throw Error(ErrorCode::ModelParseError, "bad numeral " + a);
  }
}

struct Interp {
  const SmtModel& m;
  int depth = 0;

  Value eval(const SExpr& e, const std::map<std::string, Value>& env) {
    if (++depth > 10000) throw Error(ErrorCode::ModelParseError, "model too deep");
    struct Guard {
      int& d;
      ~Guard() { --d; }
    } g{depth};
    if (e.is_atom()) {
      auto it = env.find(e.atom);
      if (it != env.end()) return it->second;
      if (e.atom == "true") return Value::of_bool(true);
      if (e.atom == "false") return Value::of_bool(false);
      if (std::isdigit(static_cast<unsigned char>(e.atom[0]))) return parse_number(e.atom);
      if (m.has(e.atom)) return m.get(e.atom);
      throw Error(ErrorCode::ModelParseError, "unknown name " + e.atom);
    }
    if (e.list.empty() || !e.list[0].is_atom()) throw Error(ErrorCode::ModelParseError, "bad application " + e.str());
    const std::string& f = e.list[0].atom;
    auto arg = [&](std::size_t k) { return eval(e.list.at(k), env); };
    std::size_t n = e.list.size() - 1;
    if (f == "ite") return arg(1).b ? arg(2) : arg(3);
    if (f == "let") {
      std::map<std::string, Value> inner = env;
      for (auto& b : e.list.at(1).list) inner[b.list.at(0).atom] = eval(b.list.at(1), env);
      return eval(e.list.at(2), inner);
    }
    if (f == "and") {
      for (std::size_t k = 1; k <= n; ++k)
        if (!arg(k).b) return Value::of_bool(false);
      return Value::of_bool(true);
    }
    if (f == "or") {
      for (std::size_t k = 1; k <= n; ++k)
        if (arg(k).b) return Value::of_bool(true);
      return Value::of_bool(false);
    }
    if (f == "not") return Value::of_bool(!arg(1).b);
    if (f == "=>") return Value::of_bool(!arg(1).b || arg(2).b);
    std::vector<Value> xs;
    for (std::size_t k = 1; k <= n; ++k) xs.push_back(arg(k));
    bool real = false;
    for (auto& x : xs) real = real || x.sort == Sort::Real;
    if (real)
      for (auto& x : xs) x = to_real(x);
    auto chain = [&](auto cmp) {
      for (std::size_t k = 0; k + 1 < xs.size(); ++k)
        if (!cmp(xs[k], xs[k + 1])) return Value::of_bool(false);
      return Value::of_bool(true);
    };
    if (f == "=") return chain([](const Value& a, const Value& b) { return a == b; });
    if (f == "distinct") return Value::of_bool(xs.size() == 2 && xs[0] != xs[1]);
    if (f == "<") return chain([](const Value& a, const Value& b) { return a < b; });
    if (f == "<=") return chain([](const Value& a, const Value& b) { return !(b < a); });
    if (f == ">") return chain([](const Value& a, const Value& b) { return b < a; });
    if (f == ">=") return chain([](const Value& a, const Value& b) { return !(a < b); });
    if (f == "+" || f == "*") {
      Value acc = xs.at(0);
      for (std::size_t k = 1; k < xs.size(); ++k) acc = apply_kind(f == "+" ? Kind::Add : Kind::Mul, acc, xs[k]);
      return acc;
    }
    if (f == "-") {
      if (xs.size() == 1) return apply_kind(Kind::Sub, Value::zero(xs[0].sort), xs[0]);
      Value acc = xs.at(0);
      for (std::size_t k = 1; k < xs.size(); ++k) acc = apply_kind(Kind::Sub, acc, xs[k]);
      return acc;
    }
    if (f == "div") return apply_kind(Kind::Div, xs.at(0), xs.at(1));
    if (f == "mod") return apply_kind(Kind::Mod, xs.at(0), xs.at(1));
    if (f == "/") return apply_kind(Kind::RDiv, to_real(xs.at(0)), to_real(xs.at(1)));
    if (f == "abs") return xs.at(0) < Value::zero(xs[0].sort) ? apply_kind(Kind::Sub, Value::zero(xs[0].sort), xs[0]) : xs[0];
    if (f == "to_real") return to_real(xs.at(0));
    if (f == "to_int") {
      Value v = to_real(xs.at(0));
      std::int64_t q = v.r.numerator() / v.r.denominator();
      if (Rational(q) > v.r) --q;
      return Value::of_int(q);
    }
    if (m.has(f)) return m.get(f, xs);
    throw Error(ErrorCode::ModelParseError, "unsupported function in model: " + f);
  }
};

void find_defs(const SExpr& e, SmtModel& m) {
  if (e.is_atom()) return;
  if (!e.list.empty() && e.list[0].atom == "define-fun") {
    if (e.list.size() != 5) throw Error(ErrorCode::ModelParseError, "bad define-fun " + e.str());
    FunInterp f;
    for (auto& p : e.list[2].list) f.params.push_back(p.list.at(0).atom);
    f.sort = e.list[3].str();
    f.body = e.list[4];
    m.defs[e.list[1].atom] = f;
    return;
  }
  for (auto& k : e.list) find_defs(k, m);
}

}  // namespace

Value SmtModel::get(const std::string& name, const std::vector<Value>& args) const {
  const FunInterp& f = defs.at(name);
  if (f.params.size() != args.size()) throw Error(ErrorCode::ModelParseError, "arity mismatch for " + name);
  std::map<std::string, Value> env;
  for (std::size_t k = 0; k < args.size(); ++k) env[f.params[k]] = args[k];
  Interp in{*this};
  Value v = in.eval(f.body, env);
  if (f.sort == "Real") v = to_real(v);
  return v;
}

Model SmtModel::to_model(const std::map<std::string, Sort>& tensor_sorts) const {
  Model out;
  for (auto& [n, f] : defs)
    if (f.params.empty() && !tensor_sorts.count(n)) out.symbols[n] = get(n);
  auto self = std::make_shared<SmtModel>(*this);
  auto sorts = tensor_sorts;
  out.read = [self, sorts](const std::string& name, const std::vector<std::int64_t>& idx) -> std::optional<Value> {
    Sort s = sorts.count(name) ? sorts.at(name) : Sort::Int;
    if (!self->has(name)) return Value::zero(s);
    std::vector<Value> args;
    for (auto i : idx) args.push_back(Value::of_int(i));
    Value v = self->get(name, args);
    if (s == Sort::Real) v = to_real(v);
    return v;
  };
  return out;
}

SmtModel parse_model(const std::string& text) {
  SmtModel m;
  for (auto& e : parse_sexprs(text)) find_defs(e, m);
  for (auto& [n, f] : m.defs) model_sort(SExpr{f.sort, {}});
  return m;
}

// ---- solver process ----

const char* status_name(SolverStatus s) {
  switch (s) {
    case SolverStatus::Unsat: return "unsat";
    case SolverStatus::Sat: return "sat";
    case SolverStatus::Unknown: return "unknown";
    case SolverStatus::Timeout: return "timeout";
    case SolverStatus::Error: return "solver-error";
  }
  return "?";
}

std::string resolve_solver(const SolverConfig& cfg) {
  if (const char* env = std::getenv("TRV_SOLVER"); env && *env) return env;
  return cfg.solver;
}

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& content) {
    char tmpl[] = "/tmp/trv-XXXXXX.smt2";
    int fd = mkstemps(tmpl, 5);
    if (fd < 0) throw Error(ErrorCode::IoError, "cannot create temporary file");
    path = tmpl;
    std::size_t off = 0;
    while (off < content.size()) {
      ssize_t w = ::write(fd, content.data() + off, content.size() - off);
      if (w <= 0) {
        ::close(fd);
        throw Error(ErrorCode::IoError, "cannot write temporary file");
      }
      off += static_cast<std::size_t>(w);
    }
    ::close(fd);
  }
  ~TempFile() { ::unlink(path.c_str()); }
};

}  // namespace

SolverResult run_script(const std::string& script, const SolverConfig& cfg) {
  SolverResult res;
  res.script = script;
  TempFile file(script);
  std::string solver = resolve_solver(cfg);
  int out[2], err[2];
  if (pipe(out) != 0 || pipe2(err, O_CLOEXEC) != 0) throw Error(ErrorCode::SolverSpawnError, "pipe failed");
  auto start = std::chrono::steady_clock::now();
  pid_t pid = fork();
  if (pid < 0) throw Error(ErrorCode::SolverSpawnError, "fork failed");
  if (pid == 0) {
    ::close(out[0]);
    ::close(err[0]);
    dup2(out[1], 1);
    dup2(out[1], 2);
    ::close(out[1]);
    const char* argv[] = {solver.c_str(), file.path.c_str(), nullptr};
    execvp(argv[0], const_cast<char* const*>(argv));
    int e = errno;
    ssize_t ignored = ::write(err[1], &e, sizeof e);
    (void)ignored;
    _exit(127);
  }
  ::close(out[1]);
  ::close(err[1]);
  int spawn_errno = 0;
  ssize_t got = ::read(err[0], &spawn_errno, sizeof spawn_errno);
  ::close(err[0]);
  if (got == static_cast<ssize_t>(sizeof spawn_errno)) {
    ::close(out[0]);
    waitpid(pid, nullptr, 0);
    throw Error(ErrorCode::SolverSpawnError, "cannot run " + solver + ": " + std::strerror(spawn_errno));
  }
  auto deadline = start + std::chrono::milliseconds(cfg.timeout_ms);
  bool timed_out = false;
  char buf[4096];
  while (true) {
    auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      timed_out = true;
      break;
    }
    int wait_ms = static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) + 1;
    pollfd p{out[0], POLLIN, 0};
    int r = poll(&p, 1, wait_ms);
    if (r < 0 && errno == EINTR) continue;
    if (r == 0) continue;
    ssize_t n = ::read(out[0], buf, sizeof buf);
    if (n <= 0) break;
    res.raw.append(buf, static_cast<std::size_t>(n));
  }
  if (timed_out) kill(pid, SIGKILL);
  ::close(out[0]);
  int wstatus = 0;
  waitpid(pid, &wstatus, 0);
  res.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (timed_out) {
    res.status = SolverStatus::Timeout;
    return res;
  }
  std::istringstream is(res.raw);
  std::string line;
  while (std::getline(is, line)) {
    auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    line = line.substr(b, line.find_last_not_of(" \t\r") - b + 1);
    break;
  }
  if (line == "unsat") {
    res.status = SolverStatus::Unsat;
  } else if (line == "sat") {
    res.status = SolverStatus::Sat;
    res.model = parse_model(res.raw.substr(res.raw.find("sat") + 3));
  } else if (line == "unknown") {
    res.status = SolverStatus::Unknown;
  } else if (line == "timeout") {
    res.status = SolverStatus::Timeout;
  } else {
    res.status = SolverStatus::Error;
  }
  return res;
}

SolverResult run_cached(const std::string& script, const SolverConfig& cfg) {
  static std::mutex mu;
  static std::unordered_map<std::string, SolverResult> memo;
  std::string key = resolve_solver(cfg) + "\n" + std::to_string(cfg.timeout_ms) + "\n" + script;
  {
    std::lock_guard<std::mutex> lock(mu);
    auto it = memo.find(key);
    if (it != memo.end()) {
      SolverResult r = it->second;
      r.ms = 0;
      return r;
    }
  }
  SolverResult r = run_script(script, cfg);
  if (r.status != SolverStatus::Error) {
    std::lock_guard<std::mutex> lock(mu);
    memo.emplace(key, r);
  }
  return r;
}

CanonicalQuery canonical_query(TermBank& bank, const Query& q) {
  std::map<Term, Term> sub;
  CanonicalQuery out;
  std::set<Term> visited;
  std::function<void(Term)> walk = [&](Term t) {
    if (!visited.insert(t).second) return;
    if (t->kind == Kind::Sym) {
      std::string stem = t->name;
      std::size_t dot = stem.find('.');
      if (dot != std::string::npos) dot = stem.find('.', dot + 1);
      if (dot != std::string::npos) stem.resize(dot);
      std::string name = stem + "!" + std::to_string(sub.size());
      sub.emplace(t, bank.sym(name, t->sort));
      out.original.emplace(name, t->name);
      return;
    }
    for (Term k : t->kids) walk(k);
  };
  for (Term a : q.assumptions) walk(a);
  walk(q.goal);
  for (Term e : q.exists) walk(e);
  out.query.name = q.name;
  for (Term a : q.assumptions) out.query.assumptions.push_back(bank.substitute(a, sub));
  out.query.goal = bank.substitute(q.goal, sub);
  for (Term e : q.exists) out.query.exists.push_back(bank.substitute(e, sub));
  return out;
}

SmtModel rename_model(const SmtModel& m, const std::map<std::string, std::string>& names) {
  SmtModel out;
  for (auto& [n, f] : m.defs) {
    auto it = names.find(n);
    out.defs[it == names.end() ? n : it->second] = f;
  }
  return out;
}

SolverResult check(const Query& q, const SolverConfig& cfg) { return run_script(build_script(q), cfg); }

}  // namespace trv
