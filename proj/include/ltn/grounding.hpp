#pragma once

// Predicates grounded as neural tensor networks, formula grounding over
// batch domains, and compilation of a grounded theory into one loss node.

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltn/autodiff.hpp"
#include "ltn/fol.hpp"
#include "ltn/fuzzy.hpp"

namespace ltn::ground {

class GroundingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Trainable tensors of one predicate:
///   truth(v) = sigmoid(u^T tanh(v^T W[1:k] v + V v + b))
struct PredicateParams {
  std::size_t kernels = 0;
  std::size_t input_dim = 0;
  ad::Parameter W;  // [k, d, d]
  ad::Parameter V;  // [k, d]
  ad::Parameter u;  // [k]
  ad::Parameter b;  // [1]

  PredicateParams(const std::string& prefix, std::size_t kernels, std::size_t input_dim);

  /// Entries drawn uniformly from [-scale, scale], in the order W, V, u, b.
  void randomize(std::mt19937_64& rng, double scale = 0.05);

  std::vector<ad::Parameter*> all() { return {&W, &V, &u, &b}; }
  std::vector<const ad::Parameter*> all() const { return {&W, &V, &u, &b}; }
};

struct GroundedPredicate {
  fol::PredicateSymbol symbol;
  PredicateParams params;

  GroundedPredicate(fol::PredicateSymbol symbol, std::size_t kernels, std::size_t input_dim);
  std::size_t input_dim() const { return params.input_dim; }
};

/// Truth values of `gp` on a single grounding [d] (scalar result) or on
/// every row of a batch [n, d] (result [n]).
ad::Var predicate_forward(ad::Tape& tape, GroundedPredicate& gp, ad::Var inputs);
ad::Var predicate_forward(ad::Tape& tape, GroundedPredicate& gp, std::span<const double> v);

struct ObjectRef {
  std::string domain;
  std::size_t index = 0;
};

/// Domains of grounding vectors, variable and constant bindings, and the
/// predicate table a formula is grounded against.
class GroundingEnvironment {
 public:
  /// Builds the input vector of an arity >= 2 predicate from its arguments.
  using InputBuilder = std::function<std::vector<double>(std::span<const ObjectRef>)>;

  /// features: [n, d], one grounding per row.
  void add_domain(const std::string& name, ad::Tensor features);
  void bind_variable(const std::string& var, const std::string& domain);
  /// Domain used by variables without an explicit binding.
  void set_default_domain(const std::string& domain) { default_domain_ = domain; }
  void add_constant(const std::string& id, ObjectRef ref);
  void add_predicate(GroundedPredicate& p);
  /// Overrides argument concatenation for predicates of the given arity.
  void set_input_builder(int arity, InputBuilder builder) { builders_[arity] = std::move(builder); }

  const ad::Tensor& domain(const std::string& name) const;
  std::size_t domain_size(const std::string& name) const { return domain(name).dim(0); }
  const std::string& variable_domain(const std::string& var) const;
  const ObjectRef& constant(const std::string& id) const;
  GroundedPredicate& predicate(const std::string& name) const;
  bool has_predicate(const std::string& name) const { return predicates_.contains(name); }
  /// Predicates in registration order.
  const std::vector<GroundedPredicate*>& predicates() const { return order_; }

  std::vector<double> build_input(int arity, std::span<const ObjectRef> args) const;

 private:
  std::map<std::string, ad::Tensor> domains_;
  std::map<std::string, std::string> var_domains_;
  std::string default_domain_;
  std::map<std::string, ObjectRef> constants_;
  std::map<std::string, GroundedPredicate*> predicates_;
  std::vector<GroundedPredicate*> order_;
  std::map<int, InputBuilder> builders_;
};

/// Per-instantiation truth values of a grounded formula.
struct GroundedFormula {
  ad::Var truths;                               // [rows]
  std::vector<std::string> variables;           // quantified variables, outermost first
  std::vector<std::vector<std::size_t>> rows;   // one index per variable
};

/// Grounds formulas on one tape. Predicate outputs over a full domain
/// product are computed once per tape and shared between formulas.
class Grounder {
 public:
  Grounder(ad::Tape& tape, const GroundingEnvironment& env) : tape_(tape), env_(env) {}

  /// A leading chain of quantifiers enumerates the Cartesian product of the
  /// variables' domains, skipping rows where distinct variables over the
  /// same domain bind the same element. A quantifier-free closed formula
  /// grounds to a single row.
  GroundedFormula ground(const fol::Formula& f);

  /// Predicate truth over the product of the given domains, flattened
  /// row-major (first domain slowest).
  ad::Var product_truths(const std::string& predicate, const std::vector<std::string>& domains);

  ad::Tape& tape() { return tape_; }
  const GroundingEnvironment& env() const { return env_; }

 private:
  struct Slot {
    std::string domain;
    int column = -1;          // variable column in the instantiation table
    std::size_t fixed = 0;    // element index for constants
  };

  ad::Var eval(const fol::Formula& f, const std::map<std::string, int>& columns,
               const std::vector<std::vector<std::size_t>>& rows);
  ad::Var product_truths_impl(const std::string& predicate, const std::vector<Slot>& slots);

  ad::Tape& tape_;
  const GroundingEnvironment& env_;
  std::map<std::string, ad::Var> cache_;
};

struct ClauseLoss {
  std::string name;
  std::string group;
  ad::Var loss;
  ad::Var literals;
};

struct TheoryLoss {
  std::vector<ClauseLoss> clauses;  // sorted by name
  ad::Var l2_term;
  ad::Var total;

  /// Sum of the clause losses belonging to `group` (0 when none); forward must have run.
  double group_value(const ad::Tape& tape, const std::string& group) const;
};

/// lambda * sum of squared entries of every trainable parameter of `preds`.
ad::Var l2_penalty(ad::Tape& tape, std::span<GroundedPredicate* const> preds, double lambda_l2);

/// Accumulates clause losses on a tape and lowers the conjunction of all
/// clauses to their sum.
class TheoryBuilder {
 public:
  TheoryBuilder(ad::Tape& tape, const GroundingEnvironment& env) : grounder_(tape, env) {}

  Grounder& grounder() { return grounder_; }

  /// Grounds the axiom and aggregates its instantiations with unit weights.
  ClauseLoss add_axiom(const fol::Axiom& axiom, const fuzzy::AggregatorConfig& agg, double weight = 1.0,
                        const std::string& group = "prior");

  /// Aggregates precomputed literal truths with per-literal weights.
  ClauseLoss add_clause(const std::string& name, const std::string& group, ad::Var literals,
                         const ad::Tensor& weights, double gamma, double weight = 1.0);

  TheoryLoss finish(double lambda_l2);

 private:
  Grounder grounder_;
  std::vector<ClauseLoss> clauses_;
};

TheoryLoss compile_theory(ad::Tape& tape, const fol::KnowledgeBase& kb, const GroundingEnvironment& env,
                          const fuzzy::AggregatorConfig& agg, double lambda_l2);

}  // namespace ltn::ground
