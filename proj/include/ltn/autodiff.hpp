#pragma once

// Minimal reverse-mode differentiation over dense double tensors.
//
// Graphs are recorded on a Tape: building a node only infers its shape,
// Tape::forward() evaluates every node in recording order (which is a
// topological order by construction), and Tape::backward() propagates
// adjoints from a scalar output to every trainable Parameter leaf.
// Parameters live outside the tape so that a fresh tape can be recorded
// for every batch while the optimizer state persists.

#include <cstddef>
#include <initializer_list>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ltn/tensor.hpp"

namespace ltn::ad {

class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, std::string scope)
      : std::runtime_error(what), scope_(std::move(scope)) {}
  /// Scope label active when the offending node was recorded.
  const std::string& scope() const { return scope_; }

 private:
  std::string scope_;
};

/// A named trainable tensor owned by a model, referenced by tapes.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

enum class Op {
  Constant,
  Param,
  Add,
  Sub,
  Mul,
  Affine,    // a*x + b with scalar constants
  MatVec,    // M[k,d] applied to x[d] or to every row of X[n,d]
  Bilinear,  // x^T W[r] x for every slice r of W[k,d,d]
  Tanh,
  Sigmoid,
  Log,
  Pow,       // x^p, constant exponent
  ClampMax,  // min(x, c)
  ClampMin,  // max(x, c)
  Sum,
  Mean,
  Concat,
  Gather,
};

std::string_view op_name(Op op);

class Tape;

/// Lightweight handle to a node recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;
};

struct Node {
  Op op = Op::Constant;
  std::vector<std::size_t> inputs;
  Shape shape;
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  double a = 0.0;
  double b = 0.0;
  std::vector<std::size_t> index;
  Parameter* param = nullptr;
  std::string scope;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var constant(double value) { return constant(Tensor::scalar(value)); }
  /// Leaf bound to a model parameter; recording the same parameter twice
  /// returns the same node.
  Var parameter(Parameter& p);

  Var record(Op op, std::vector<std::size_t> inputs, Shape shape, double a = 0.0, double b = 0.0,
             std::vector<std::size_t> index = {});

  /// Label attached to every node recorded from now on (diagnostics only).
  void set_scope(std::string scope) { scope_ = std::move(scope); }

  /// Evaluates every node; throws NonFiniteError on NaN/Inf.
  void forward();
  const Tensor& forward(Var output);

  /// Reverse pass from a scalar output. Returns d(output)/d(p) for every
  /// trainable parameter, in the order of trainable_parameters().
  std::vector<Tensor> backward(Var output);

  std::vector<Parameter*> trainable_parameters() const;

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor& grad(Var v) const { return nodes_.at(v.id).grad; }
  const Shape& shape(Var v) const { return nodes_.at(v.id).shape; }
  const Node& node(Var v) const { return nodes_.at(v.id); }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  bool evaluated() const { return evaluated_; }

 private:
  void eval_node(Node& n);
  void backprop_node(const Node& n);

  std::vector<Node> nodes_;
  std::map<const Parameter*, std::size_t> param_nodes_;
  std::vector<std::size_t> param_order_;
  std::string scope_;
  bool evaluated_ = false;
};

// Graph builders. All operands must live on the same tape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var affine(Var x, double scale, double shift);
Var scale(Var x, double s);
Var matvec(Var matrix, Var x);
Var bilinear(Var w, Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var log(Var x);
Var pow(Var x, double exponent);
Var clamp_max(Var x, double c);
Var clamp_min(Var x, double c);
Var sum(Var x);
Var mean(Var x);
Var concat(const std::vector<Var>& parts);
Var gather(Var x, std::vector<std::size_t> index);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

/// Max over trainable parameter entries of
/// |analytic - central| / max(1e-12, |analytic| + |central|).
double grad_check(Tape& tape, Var output, double eps);

}  // namespace ltn::ad
