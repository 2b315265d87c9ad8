#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <boost/rational.hpp>

namespace trv {

using Rational = boost::rational<std::int64_t>;

enum class Sort : std::uint8_t { Int, Real, Bool };

const char* sort_name(Sort s);
std::optional<Sort> parse_sort(const std::string& s);

// A concrete scalar: integer, exact rational or boolean.
struct Value {
  Sort sort = Sort::Int;
  std::int64_t i = 0;
  Rational r{0};
  bool b = false;

  static Value of_int(std::int64_t v) { Value x; x.sort = Sort::Int; x.i = v; return x; }
  static Value of_real(Rational v) { Value x; x.sort = Sort::Real; x.r = v; return x; }
  static Value of_bool(bool v) { Value x; x.sort = Sort::Bool; x.b = v; return x; }
  static Value zero(Sort s);

  bool operator==(const Value& o) const;
  bool operator!=(const Value& o) const { return !(*this == o); }
  bool operator<(const Value& o) const;
  std::string str() const;
};

enum class Kind : std::uint8_t {
  IntLit, RealLit, BoolLit, Sym,
  Add, Sub, Mul, Neg, Div, Mod, RDiv, Min, Max,
  Eq, Ne, Lt, Le, Gt, Ge,
  And, Or, Not, Ite,
  Read, Red
};

// Reduction operators for RedElem and reduce.
enum class RedOp : std::uint8_t { Add, Mul, Max, Min, And, Or };
const char* red_op_name(RedOp op);
std::optional<RedOp> parse_red_op(const std::string& s);

// What a symbol stands for; analysis and sampling treat roles differently.
enum class Role : std::uint8_t { Attr, Size, Access, Index, Other };

struct Node;
using Term = const Node*;

struct Node {
  Kind kind;
  Sort sort;
  std::int64_t ival = 0;     // IntLit value, BoolLit 0/1, Red: RedOp
  Rational rval{0};          // RealLit
  std::string name;          // Sym name, Read tensor
  std::string axis;          // Sym: owning named axis ("" if none)
  Role role = Role::Other;   // Sym
  std::vector<Term> kids;    // Red: body, indices..., ranges...
  std::uint64_t shash = 0;   // structural hash, stable across runs

  bool is_lit() const { return kind == Kind::IntLit || kind == Kind::RealLit || kind == Kind::BoolLit; }
  bool is_true() const { return kind == Kind::BoolLit && ival == 1; }
  bool is_false() const { return kind == Kind::BoolLit && ival == 0; }
  RedOp red_op() const { return static_cast<RedOp>(ival); }
  std::size_t red_arity() const { return (kids.size() - 1) / 2; }
  Term red_body() const { return kids[0]; }
  Term red_index(std::size_t k) const { return kids[1 + k]; }
  Term red_range(std::size_t k) const { return kids[1 + red_arity() + k]; }
};

// Total structural order, independent of allocation order.
int term_compare(Term a, Term b);
struct TermLess {
  bool operator()(Term a, Term b) const { return term_compare(a, b) < 0; }
};

class TypeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Hash-consing arena. Structurally equal terms built in one bank are pointer-equal.
// Builders fold constants and a few identities (x+0, x*1, ite on a literal) and nothing else.
class TermBank {
 public:
  TermBank() = default;
  TermBank(const TermBank&) = delete;
  TermBank& operator=(const TermBank&) = delete;

  Term int_lit(std::int64_t v);
  Term real_lit(Rational v);
  Term bool_lit(bool v);
  Term lit(const Value& v);
  Term zero(Sort s) { return lit(Value::zero(s)); }
  Term sym(const std::string& name, Sort s, const std::string& axis = "", Role role = Role::Other);

  Term add(Term a, Term b);
  Term sub(Term a, Term b);
  Term mul(Term a, Term b);
  Term neg(Term a);
  Term div(Term a, Term b);   // Euclidean, Int only
  Term mod(Term a, Term b);   // Euclidean, Int only
  Term rdiv(Term a, Term b);  // Real division
  Term min(Term a, Term b);
  Term max(Term a, Term b);
  Term ceil_div(Term a, Term b) { return div(add(a, sub(b, int_lit(1))), b); }

  Term eq(Term a, Term b);
  Term ne(Term a, Term b);
  Term lt(Term a, Term b);
  Term le(Term a, Term b);
  Term gt(Term a, Term b);
  Term ge(Term a, Term b);

  Term and_(std::vector<Term> xs);
  Term or_(std::vector<Term> xs);
  Term and_(Term a, Term b) { return and_(std::vector<Term>{a, b}); }
  Term or_(Term a, Term b) { return or_(std::vector<Term>{a, b}); }
  Term not_(Term a);
  Term implies(Term a, Term b) { return or_(not_(a), b); }
  Term ite(Term c, Term t, Term e);

  Term read(const std::string& tensor, Sort s, std::vector<Term> idx);
  Term red(RedOp op, std::vector<Term> indices, std::vector<Term> ranges, Term body);

  // Rebuild `t` with the same kind but new children (goes through the folding builders).
  Term rebuild(Term t, const std::vector<Term>& kids);

  // Simultaneous substitution of subterms.
  Term substitute(Term t, const std::map<Term, Term>& sub);

  std::size_t size() const { return nodes_.size(); }

 private:
  Term intern(Node n);
  Term arith(Kind k, Term a, Term b);
  Term cmp(Kind k, Term a, Term b);

  struct KeyHash {
    std::size_t operator()(const Node* n) const { return n->shash; }
  };
  struct KeyEq {
    bool operator()(const Node* a, const Node* b) const;
  };
  std::deque<Node> nodes_;
  std::unordered_map<const Node*, const Node*, KeyHash, KeyEq> table_;
  std::mutex mu_;
};

// Printing (S-expression style, used in diagnostics and tests).
std::string to_string(Term t);

// Collect every distinct subterm satisfying `pred`, in structural order.
std::vector<Term> collect(Term t, const std::function<bool(Term)>& pred);
std::vector<Term> free_symbols(Term t);
bool contains_kind(Term t, Kind k);

// Top-level conjuncts of a boolean term (flattens nested And).
std::vector<Term> conjuncts(Term t);

// Euclidean division matching SMT-LIB div/mod; division by zero yields 0.
std::int64_t euclid_div(std::int64_t a, std::int64_t b);
std::int64_t euclid_mod(std::int64_t a, std::int64_t b);

}  // namespace trv
