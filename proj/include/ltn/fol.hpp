#pragma once

// First-order syntax for axiom files.
//
//   pred Cat/1  pred partOf/2        # declarations, explicit arity
//   axiom forall x: Cat(x) -> ~Person(x)
//   axiom tails: forall x,y: Cat(x) & partOf(y,x) -> Tail(y) | Head(y)
//
// Precedence (tightest first): ~  &  |  ->   with -> right-associative and
// & | left-associative. A quantifier body extends as far right as possible.
// Term identifiers starting with a lowercase letter are variables; any
// other identifier (uppercase or digit first) is a constant.

#include <memory>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace ltn::fol {

struct PredicateSymbol {
  std::string name;
  int arity = 1;
  friend bool operator==(const PredicateSymbol&, const PredicateSymbol&) = default;
};

struct Variable {
  std::string name;
  friend bool operator==(const Variable&, const Variable&) = default;
};

struct Constant {
  std::string id;
  friend bool operator==(const Constant&, const Constant&) = default;
};

using Term = std::variant<Variable, Constant>;

struct Formula;
using FormulaPtr = std::shared_ptr<const Formula>;

struct Atom {
  PredicateSymbol pred;
  std::vector<Term> args;
};
struct Not {
  FormulaPtr operand;
};
struct And {
  FormulaPtr lhs, rhs;
};
struct Or {
  FormulaPtr lhs, rhs;
};
struct Implies {
  FormulaPtr lhs, rhs;
};
struct ForAll {
  std::vector<std::string> vars;
  FormulaPtr body;
};

struct Formula {
  std::variant<Atom, Not, And, Or, Implies, ForAll> node;
};

// Constructors.
FormulaPtr atom(PredicateSymbol pred, std::vector<Term> args);
FormulaPtr negate(FormulaPtr f);
FormulaPtr conj(FormulaPtr a, FormulaPtr b);
FormulaPtr disj(FormulaPtr a, FormulaPtr b);
FormulaPtr implies(FormulaPtr a, FormulaPtr b);
FormulaPtr forall(std::vector<std::string> vars, FormulaPtr body);
/// Left-folded disjunction / conjunction of a non-empty list.
FormulaPtr disj_all(const std::vector<FormulaPtr>& fs);
FormulaPtr conj_all(const std::vector<FormulaPtr>& fs);

inline Term var(std::string name) { return Variable{std::move(name)}; }
inline Term constant(std::string id) { return Constant{std::move(id)}; }

/// Structural equality.
bool equal(const Formula& a, const Formula& b);

struct Axiom {
  std::string label;  // empty means "use the printed formula"
  FormulaPtr formula;
};

struct KnowledgeBase {
  std::vector<PredicateSymbol> predicates;
  std::vector<Axiom> axioms;

  const PredicateSymbol* find(std::string_view name) const;
};

/// Canonical clause name of an axiom: its label, else its printed formula.
std::string axiom_name(const Axiom& a);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, int line, int column);
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

KnowledgeBase parse_axioms(std::string_view text);

/// Parses a single formula against the given declarations.
FormulaPtr parse_formula(std::string_view text, const std::vector<PredicateSymbol>& predicates);

std::string to_string(const Formula& f);
std::string to_string(const Term& t);
/// Axiom-file text that parses back to an equal knowledge base.
std::string to_string(const KnowledgeBase& kb);

std::set<std::string> free_variables(const Formula& f);

struct Diagnostic {
  std::string code;  // "arity mismatch", "duplicate symbol", "undeclared predicate", "free variable", ...
  std::string message;
};

/// Empty when the knowledge base satisfies every invariant.
std::vector<Diagnostic> validate(const KnowledgeBase& kb);

}  // namespace ltn::fol
