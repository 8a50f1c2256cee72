#include "ltn/grounding.hpp"

#include <algorithm>

namespace ltn::ground {

PredicateParams::PredicateParams(const std::string& prefix, std::size_t k, std::size_t d)
    : kernels(k),
      input_dim(d),
      W{prefix + ".W", ad::Tensor(ad::Shape{k, d, d})},
      V{prefix + ".V", ad::Tensor(ad::Shape{k, d})},
      u{prefix + ".u", ad::Tensor(ad::Shape{k})},
      b{prefix + ".b", ad::Tensor(ad::Shape{1})} {
  if (k == 0 || d == 0) throw std::invalid_argument("predicate needs at least one kernel and one input dimension");
}

void PredicateParams::randomize(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (auto* p : all())
    for (auto& v : p->value.values()) v = dist(rng);
}

GroundedPredicate::GroundedPredicate(fol::PredicateSymbol sym, std::size_t kernels, std::size_t input_dim)
    : symbol(sym), params(sym.name + "/" + std::to_string(sym.arity), kernels, input_dim) {}

ad::Var predicate_forward(ad::Tape& tape, GroundedPredicate& gp, ad::Var inputs) {
  const ad::Shape shape = tape.shape(inputs);
  if (shape.empty() || shape.size() > 2 || shape.back() != gp.input_dim())
    throw GroundingError("dimension mismatch: predicate '" + gp.symbol.name + "' expects inputs of dimension " +
                         std::to_string(gp.input_dim()) + ", got " + ad::shape_string(shape));
  ad::Var W = tape.parameter(gp.params.W);
  ad::Var V = tape.parameter(gp.params.V);
  ad::Var u = tape.parameter(gp.params.u);
  ad::Var b = tape.parameter(gp.params.b);
  ad::Var pre = ad::add(ad::add(ad::bilinear(W, inputs), ad::matvec(V, inputs)), b);
  ad::Var hidden = ad::tanh(pre);
  if (shape.size() == 1) return ad::sigmoid(ad::sum(ad::mul(u, hidden)));
  return ad::sigmoid(ad::matvec(hidden, u));
}

ad::Var predicate_forward(ad::Tape& tape, GroundedPredicate& gp, std::span<const double> v) {
  return predicate_forward(tape, gp, tape.constant(ad::Tensor::vector({v.begin(), v.end()})));
}

// ---------------------------------------------------------------------------

void GroundingEnvironment::add_domain(const std::string& name, ad::Tensor features) {
  if (features.rank() != 2) throw GroundingError("domain '" + name + "' must be an [n, d] matrix");
  if (!features.all_finite()) throw GroundingError("domain '" + name + "' has non-finite groundings");
  domains_[name] = std::move(features);
}

void GroundingEnvironment::bind_variable(const std::string& var, const std::string& domain) {
  var_domains_[var] = domain;
}

void GroundingEnvironment::add_constant(const std::string& id, ObjectRef ref) { constants_[id] = std::move(ref); }

void GroundingEnvironment::add_predicate(GroundedPredicate& p) {
  if (predicates_.contains(p.symbol.name)) throw GroundingError("predicate '" + p.symbol.name + "' grounded twice");
  predicates_[p.symbol.name] = &p;
  order_.push_back(&p);
}

const ad::Tensor& GroundingEnvironment::domain(const std::string& name) const {
  auto it = domains_.find(name);
  if (it == domains_.end()) throw GroundingError("unknown domain '" + name + "'");
  return it->second;
}

const std::string& GroundingEnvironment::variable_domain(const std::string& var) const {
  if (auto it = var_domains_.find(var); it != var_domains_.end()) return it->second;
  if (default_domain_.empty()) throw GroundingError("unbound variable '" + var + "'");
  return default_domain_;
}

const ObjectRef& GroundingEnvironment::constant(const std::string& id) const {
  auto it = constants_.find(id);
  if (it == constants_.end()) throw GroundingError("unknown constant '" + id + "'");
  return it->second;
}

GroundedPredicate& GroundingEnvironment::predicate(const std::string& name) const {
  auto it = predicates_.find(name);
  if (it == predicates_.end()) throw GroundingError("predicate '" + name + "' is not grounded");
  return *it->second;
}

std::vector<double> GroundingEnvironment::build_input(int arity, std::span<const ObjectRef> args) const {
  if (auto it = builders_.find(arity); it != builders_.end()) return it->second(args);
  std::vector<double> out;
  for (const auto& ref : args) {
    const auto& t = domain(ref.domain);
    if (ref.index >= t.dim(0)) throw GroundingError("object index out of range in domain '" + ref.domain + "'");
    const std::size_t d = t.dim(1);
    auto row = t.data().subspan(ref.index * d, d);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

// ---------------------------------------------------------------------------

GroundedFormula Grounder::ground(const fol::Formula& f) {
  GroundedFormula out;
  const fol::Formula* body = &f;
  while (const auto* q = std::get_if<fol::ForAll>(&body->node)) {
    for (const auto& v : q->vars) {
      if (std::find(out.variables.begin(), out.variables.end(), v) != out.variables.end())
        throw GroundingError("variable '" + v + "' is quantified twice");
      out.variables.push_back(v);
    }
    body = q->body.get();
  }

  std::vector<std::string> domains;
  std::vector<std::size_t> sizes;
  for (const auto& v : out.variables) {
    domains.push_back(env_.variable_domain(v));
    sizes.push_back(env_.domain_size(domains.back()));
    if (sizes.back() == 0) throw GroundingError("variable '" + v + "' ranges over an empty domain");
  }

  // Odometer over the product, last variable fastest.
  std::vector<std::size_t> idx(out.variables.size(), 0);
  for (bool more = true; more;) {
    bool distinct = true;
    for (std::size_t i = 0; i < idx.size() && distinct; ++i)
      for (std::size_t j = i + 1; j < idx.size(); ++j)
        if (domains[i] == domains[j] && idx[i] == idx[j]) {
          distinct = false;
          break;
        }
    if (distinct) out.rows.push_back(idx);
    more = false;
    for (std::size_t p = idx.size(); p-- > 0;) {
      if (++idx[p] < sizes[p]) {
        more = true;
        break;
      }
      idx[p] = 0;
    }
  }

  std::map<std::string, int> columns;
  for (std::size_t i = 0; i < out.variables.size(); ++i) columns[out.variables[i]] = static_cast<int>(i);
  out.truths = eval(*body, columns, out.rows);
  return out;
}

ad::Var Grounder::eval(const fol::Formula& f, const std::map<std::string, int>& columns,
                       const std::vector<std::vector<std::size_t>>& rows) {
  return std::visit(
      [&](const auto& x) -> ad::Var {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, fol::Atom>) {
          std::vector<Slot> slots;
          for (const auto& term : x.args) {
            if (const auto* v = std::get_if<fol::Variable>(&term)) {
              auto it = columns.find(v->name);
              if (it == columns.end()) throw GroundingError("unbound variable '" + v->name + "'");
              slots.push_back({env_.variable_domain(v->name), it->second, 0});
            } else {
              const auto& ref = env_.constant(std::get<fol::Constant>(term).id);
              slots.push_back({ref.domain, -1, ref.index});
            }
          }
          ad::Var full = product_truths_impl(x.pred.name, slots);
          std::vector<std::size_t> strides(slots.size(), 1);
          for (std::size_t i = slots.size(); i-- > 1;) {
            const std::size_t dim = slots[i].column >= 0 ? env_.domain_size(slots[i].domain) : 1;
            strides[i - 1] = strides[i] * dim;
          }
          std::vector<std::size_t> index;
          index.reserve(rows.size());
          for (const auto& row : rows) {
            std::size_t flat = 0;
            for (std::size_t i = 0; i < slots.size(); ++i)
              if (slots[i].column >= 0) flat += row[static_cast<std::size_t>(slots[i].column)] * strides[i];
            index.push_back(flat);
          }
          return ad::gather(full, std::move(index));
        } else if constexpr (std::is_same_v<T, fol::Not>) {
          return fuzzy::luk_not(eval(*x.operand, columns, rows));
        } else if constexpr (std::is_same_v<T, fol::And>) {
          return fuzzy::luk_and(eval(*x.lhs, columns, rows), eval(*x.rhs, columns, rows));
        } else if constexpr (std::is_same_v<T, fol::Or>) {
          return fuzzy::luk_or(eval(*x.lhs, columns, rows), eval(*x.rhs, columns, rows));
        } else if constexpr (std::is_same_v<T, fol::Implies>) {
          return fuzzy::luk_implies(eval(*x.lhs, columns, rows), eval(*x.rhs, columns, rows));
        } else {
          throw GroundingError("quantifier nested under a connective is not supported: " + fol::to_string(f));
        }
      },
      f.node);
}

ad::Var Grounder::product_truths(const std::string& predicate, const std::vector<std::string>& domains) {
  std::vector<Slot> slots;
  for (std::size_t i = 0; i < domains.size(); ++i) slots.push_back({domains[i], static_cast<int>(i), 0});
  return product_truths_impl(predicate, slots);
}

ad::Var Grounder::product_truths_impl(const std::string& predicate, const std::vector<Slot>& slots) {
  std::string key = predicate;
  for (const auto& s : slots)
    key += s.column >= 0 ? "|d:" + s.domain : "|c:" + s.domain + "#" + std::to_string(s.fixed);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;

  GroundedPredicate& gp = env_.predicate(predicate);
  if (static_cast<int>(slots.size()) != gp.symbol.arity)
    throw GroundingError("predicate '" + predicate + "' applied to " + std::to_string(slots.size()) +
                         " argument(s), arity is " + std::to_string(gp.symbol.arity));

  ad::Var inputs;
  if (slots.size() == 1 && slots[0].column >= 0) {
    const std::string dkey = "domain:" + slots[0].domain;
    auto it = cache_.find(dkey);
    if (it == cache_.end()) it = cache_.emplace(dkey, tape_.constant(env_.domain(slots[0].domain))).first;
    inputs = it->second;
  } else {
    std::vector<std::size_t> dims;
    for (const auto& s : slots) dims.push_back(s.column >= 0 ? env_.domain_size(s.domain) : 1);
    std::size_t total = 1;
    for (auto d : dims) total *= d;
    std::vector<std::vector<double>> rows;
    rows.reserve(total);
    std::vector<std::size_t> idx(slots.size(), 0);
    std::vector<ObjectRef> refs(slots.size());
    for (std::size_t n = 0; n < total; ++n) {
      std::size_t rem = n;
      for (std::size_t i = slots.size(); i-- > 0;) {
        idx[i] = rem % dims[i];
        rem /= dims[i];
      }
      for (std::size_t i = 0; i < slots.size(); ++i)
        refs[i] = ObjectRef{slots[i].domain, slots[i].column >= 0 ? idx[i] : slots[i].fixed};
      rows.push_back(env_.build_input(gp.symbol.arity, refs));
    }
    const std::size_t width = rows.empty() ? gp.input_dim() : rows.front().size();
    inputs = tape_.constant(ad::Tensor::matrix(rows, width));
  }
  const auto& ishape = tape_.shape(inputs);
  if (ishape.back() != gp.input_dim())
    throw GroundingError("dimension mismatch: predicate '" + predicate + "' expects " +
                         std::to_string(gp.input_dim()) + " inputs, grounding has " + std::to_string(ishape.back()));
  ad::Var truths = predicate_forward(tape_, gp, inputs);
  cache_.emplace(key, truths);
  return truths;
}

// ---------------------------------------------------------------------------

double TheoryLoss::group_value(const ad::Tape& tape, const std::string& group) const {
  double acc = 0.0;
  for (const auto& c : clauses)
    if (c.group == group) acc += tape.value(c.loss).item();
  return acc;
}

ad::Var l2_penalty(ad::Tape& tape, std::span<GroundedPredicate* const> preds, double lambda_l2) {
  if (lambda_l2 < 0.0) throw std::invalid_argument("lambda_l2 must be >= 0");
  ad::Var acc = tape.constant(0.0);
  for (auto* gp : preds)
    for (auto* p : gp->params.all()) {
      if (!p->trainable) continue;
      ad::Var v = tape.parameter(*p);
      acc = ad::add(acc, ad::sum(ad::mul(v, v)));
    }
  return ad::scale(acc, lambda_l2);
}

ClauseLoss TheoryBuilder::add_axiom(const fol::Axiom& axiom, const fuzzy::AggregatorConfig& agg, double weight,
                                    const std::string& group) {
  const std::string name = group + "/" + fol::axiom_name(axiom);
  grounder_.tape().set_scope(name);
  GroundedFormula g = grounder_.ground(*axiom.formula);
  ad::Tensor ones(ad::Shape{g.rows.size()}, 1.0);
  return add_clause(name, group, g.truths, ones, agg.effective_gamma(), weight);
}

ClauseLoss TheoryBuilder::add_clause(const std::string& name, const std::string& group, ad::Var literals,
                                     const ad::Tensor& weights, double gamma, double weight) {
  ad::Tape& tape = grounder_.tape();
  tape.set_scope(name);
  ClauseLoss c{name, group, ad::scale(fuzzy::focal_log_product(literals, weights, gamma), weight), literals};
  tape.set_scope("");
  clauses_.push_back(c);
  return c;
}

TheoryLoss TheoryBuilder::finish(double lambda_l2) {
  ad::Tape& tape = grounder_.tape();
  const auto& preds = grounder_.env().predicates();
  tape.set_scope("l2");
  TheoryLoss out;
  out.l2_term = l2_penalty(tape, preds, lambda_l2);
  out.clauses = clauses_;
  std::stable_sort(out.clauses.begin(), out.clauses.end(),
                   [](const ClauseLoss& a, const ClauseLoss& b) { return a.name < b.name; });
  if (out.clauses.empty()) {
    out.total = out.l2_term;
  } else {
    ad::Var acc = out.clauses.front().loss;
    for (std::size_t i = 1; i < out.clauses.size(); ++i) acc = ad::add(acc, out.clauses[i].loss);
    out.total = ad::add(acc, out.l2_term);
  }
  tape.set_scope("");
  return out;
}

TheoryLoss compile_theory(ad::Tape& tape, const fol::KnowledgeBase& kb, const GroundingEnvironment& env,
                          const fuzzy::AggregatorConfig& agg, double lambda_l2) {
  agg.validate();
  TheoryBuilder builder(tape, env);
  for (const auto& ax : kb.axioms) builder.add_axiom(ax, agg);
  return builder.finish(lambda_l2);
}

}  // namespace ltn::ground
