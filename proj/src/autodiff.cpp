#include "ltn/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace ltn::ad {

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Param: return "param";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Affine: return "affine";
    case Op::MatVec: return "matvec";
    case Op::Bilinear: return "bilinear";
    case Op::Tanh: return "tanh";
    case Op::Sigmoid: return "sigmoid";
    case Op::Log: return "log";
    case Op::Pow: return "pow";
    case Op::ClampMax: return "clamp_max";
    case Op::ClampMin: return "clamp_min";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Concat: return "concat";
    case Op::Gather: return "gather";
  }
  return "?";
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NonFiniteError("non-finite constant", scope_);
  Node n;
  n.op = Op::Constant;
  n.shape = value.shape();
  n.value = std::move(value);
  n.scope = scope_;
  nodes_.push_back(std::move(n));
  evaluated_ = false;
  return Var{this, nodes_.size() - 1};
}

Var Tape::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  n.op = Op::Param;
  n.shape = p.value.shape();
  n.param = &p;
  n.requires_grad = p.trainable;
  n.scope = scope_;
  nodes_.push_back(std::move(n));
  const std::size_t id = nodes_.size() - 1;
  param_nodes_[&p] = id;
  if (p.trainable) param_order_.push_back(id);
  evaluated_ = false;
  return Var{this, id};
}

Var Tape::record(Op op, std::vector<std::size_t> inputs, Shape shape, double a, double b,
                 std::vector<std::size_t> index) {
  Node n;
  n.op = op;
  n.shape = std::move(shape);
  n.a = a;
  n.b = b;
  n.index = std::move(index);
  n.scope = scope_;
  for (auto i : inputs) n.requires_grad = n.requires_grad || nodes_.at(i).requires_grad;
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  evaluated_ = false;
  return Var{this, nodes_.size() - 1};
}

std::vector<Parameter*> Tape::trainable_parameters() const {
  std::vector<Parameter*> out;
  out.reserve(param_order_.size());
  for (auto id : param_order_) out.push_back(nodes_[id].param);
  return out;
}

namespace {

// Index into an operand that is either full-size or a broadcast scalar.
inline double at(const Tensor& t, std::size_t i) { return t.size() == 1 ? t[0] : t[i]; }

// Rows of a rank-1 or rank-2 operand.
inline std::size_t rows_of(const Shape& s) { return s.size() == 1 ? 1 : s[0]; }

}  // namespace

void Tape::eval_node(Node& n) {
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[n.inputs[k]].value; };
  if (n.op == Op::Constant) return;
  if (n.op == Op::Param) {
    n.value = n.param->value;
    if (n.value.shape() != n.shape) throw ShapeError("parameter '" + n.param->name + "' changed shape");
    if (!n.value.all_finite()) throw NonFiniteError("parameter '" + n.param->name + "' is not finite", n.scope);
    return;
  }
  Tensor out(n.shape);
  auto& y = out.values();
  switch (n.op) {
    case Op::Add:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = at(in(0), i) + at(in(1), i);
      break;
    case Op::Sub:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = at(in(0), i) - at(in(1), i);
      break;
    case Op::Mul:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = at(in(0), i) * at(in(1), i);
      break;
    case Op::Affine:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = n.a * in(0)[i] + n.b;
      break;
    case Op::MatVec: {
      const Tensor& m = in(0);
      const Tensor& x = in(1);
      const std::size_t k = m.dim(0), d = m.dim(1), rows = rows_of(x.shape());
      for (std::size_t i = 0; i < rows; ++i) {
        const double* xi = x.data().data() + i * d;
        for (std::size_t r = 0; r < k; ++r) {
          const double* mr = m.data().data() + r * d;
          double acc = 0.0;
          for (std::size_t c = 0; c < d; ++c) acc += mr[c] * xi[c];
          y[i * k + r] = acc;
        }
      }
      break;
    }
    case Op::Bilinear: {
      const Tensor& w = in(0);
      const Tensor& x = in(1);
      const std::size_t k = w.dim(0), d = w.dim(1), rows = rows_of(x.shape());
      // x^T W x = x^T S x with S = (W + W^T) / 2; only the upper triangle of S is visited.
      std::vector<double> sym(k * d * d);
      for (std::size_t r = 0; r < k; ++r) {
        const double* wr = w.data().data() + r * d * d;
        double* sr = sym.data() + r * d * d;
        for (std::size_t a = 0; a < d; ++a) {
          sr[a * d + a] = wr[a * d + a];
          for (std::size_t b = a + 1; b < d; ++b) sr[a * d + b] = wr[a * d + b] + wr[b * d + a];
        }
      }
      std::vector<double> t(d);
      for (std::size_t i = 0; i < rows; ++i) {
        const double* xi = x.data().data() + i * d;
        for (std::size_t r = 0; r < k; ++r) {
          const double* sr = sym.data() + r * d * d;
          std::fill(t.begin(), t.end(), 0.0);
          for (std::size_t a = 0; a < d; ++a) {
            const double xa = xi[a];
            const double* row = sr + a * d;
            for (std::size_t b = a; b < d; ++b) t[b] += xa * row[b];
          }
          double acc = 0.0;
          for (std::size_t b = 0; b < d; ++b) acc += t[b] * xi[b];
          y[i * k + r] = acc;
        }
      }
      break;
    }
    case Op::Tanh:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::tanh(in(0)[i]);
      break;
    case Op::Sigmoid:
      for (std::size_t i = 0; i < y.size(); ++i) {
        const double v = in(0)[i];
        // Split by sign so exp never overflows.
        if (v >= 0) {
          y[i] = 1.0 / (1.0 + std::exp(-v));
        } else {
          const double e = std::exp(v);
          y[i] = e / (1.0 + e);
        }
      }
      break;
    case Op::Log:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::log(in(0)[i]);
      break;
    case Op::Pow:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = n.a == 0.0 ? 1.0 : std::pow(in(0)[i], n.a);
      break;
    case Op::ClampMax:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(in(0)[i], n.a);
      break;
    case Op::ClampMin:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(in(0)[i], n.a);
      break;
    case Op::Sum: {
      double acc = 0.0;
      for (double v : in(0).values()) acc += v;
      y[0] = acc;
      break;
    }
    case Op::Mean: {
      double acc = 0.0;
      for (double v : in(0).values()) acc += v;
      y[0] = acc / static_cast<double>(in(0).size());
      break;
    }
    case Op::Concat: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        const auto& src = in(k).values();
        std::copy(src.begin(), src.end(), y.begin() + static_cast<std::ptrdiff_t>(off));
        off += src.size();
      }
      break;
    }
    case Op::Gather:
      for (std::size_t i = 0; i < n.index.size(); ++i) y[i] = in(0)[n.index[i]];
      break;
    case Op::Constant:
    case Op::Param:
      break;
  }
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!std::isfinite(y[i])) {
      throw NonFiniteError("non-finite value in " + std::string(op_name(n.op)) +
                               (n.scope.empty() ? std::string() : " (in '" + n.scope + "')"),
                           n.scope);
    }
  }
  n.value = std::move(out);
}

void Tape::forward() {
  for (auto& n : nodes_) eval_node(n);
  evaluated_ = true;
}

const Tensor& Tape::forward(Var output) {
  forward();
  return nodes_.at(output.id).value;
}

void Tape::backprop_node(const Node& n) {
  const Tensor& g = n.grad;
  auto input = [&](std::size_t k) -> Node& { return nodes_[n.inputs[k]]; };
  // Accumulates g_i * factor into an operand that may be a broadcast scalar.
  auto acc_into = [&](Node& dst, std::size_t i, double v) {
    if (dst.grad.size() == 1)
      dst.grad[0] += v;
    else
      dst.grad[i] += v;
  };
  switch (n.op) {
    case Op::Constant:
    case Op::Param:
      break;
    case Op::Add:
    case Op::Sub: {
      const double sign = n.op == Op::Add ? 1.0 : -1.0;
      Node& a = input(0);
      Node& b = input(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (a.requires_grad) acc_into(a, i, g[i]);
        if (b.requires_grad) acc_into(b, i, sign * g[i]);
      }
      break;
    }
    case Op::Mul: {
      Node& a = input(0);
      Node& b = input(1);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (a.requires_grad) acc_into(a, i, g[i] * at(b.value, i));
        if (b.requires_grad) acc_into(b, i, g[i] * at(a.value, i));
      }
      break;
    }
    case Op::Affine: {
      Node& x = input(0);
      for (std::size_t i = 0; i < g.size(); ++i) x.grad[i] += n.a * g[i];
      break;
    }
    case Op::MatVec: {
      Node& m = input(0);
      Node& x = input(1);
      const std::size_t k = m.shape[0], d = m.shape[1], rows = rows_of(x.shape);
      for (std::size_t i = 0; i < rows; ++i) {
        const double* xi = x.value.data().data() + i * d;
        for (std::size_t r = 0; r < k; ++r) {
          const double gi = g[i * k + r];
          if (gi == 0.0) continue;
          if (m.requires_grad) {
            double* gm = m.grad.data().data() + r * d;
            for (std::size_t c = 0; c < d; ++c) gm[c] += gi * xi[c];
          }
          if (x.requires_grad) {
            const double* mr = m.value.data().data() + r * d;
            double* gx = x.grad.data().data() + i * d;
            for (std::size_t c = 0; c < d; ++c) gx[c] += gi * mr[c];
          }
        }
      }
      break;
    }
    case Op::Bilinear: {
      Node& w = input(0);
      Node& x = input(1);
      const std::size_t k = w.shape[0], d = w.shape[1], rows = rows_of(x.shape);
      // sum_i g_i x_i x_i^T is symmetric: accumulate the upper triangle, mirror once.
      std::vector<double> upper(w.requires_grad ? k * d * d : 0, 0.0);
      for (std::size_t i = 0; i < rows; ++i) {
        const double* xi = x.value.data().data() + i * d;
        for (std::size_t r = 0; r < k; ++r) {
          const double gi = g[i * k + r];
          if (gi == 0.0) continue;
          if (w.requires_grad) {
            double* ur = upper.data() + r * d * d;
            for (std::size_t a = 0; a < d; ++a) {
              const double ga = gi * xi[a];
              for (std::size_t b = a; b < d; ++b) ur[a * d + b] += ga * xi[b];
            }
          }
          if (x.requires_grad) {
            // gx += g (W + W^T) x, as row updates.
            const double* wr = w.value.data().data() + r * d * d;
            double* gx = x.grad.data().data() + i * d;
            for (std::size_t a = 0; a < d; ++a) {
              const double* row = wr + a * d;
              const double ga = gi * xi[a];
              double s = 0.0;
              for (std::size_t b = 0; b < d; ++b) {
                gx[b] += ga * row[b];
                s += row[b] * xi[b];
              }
              gx[a] += gi * s;
            }
          }
        }
      }
      if (w.requires_grad)
        for (std::size_t r = 0; r < k; ++r) {
          const double* ur = upper.data() + r * d * d;
          double* gw = w.grad.data().data() + r * d * d;
          for (std::size_t a = 0; a < d; ++a) {
            gw[a * d + a] += ur[a * d + a];
            for (std::size_t b = a + 1; b < d; ++b) {
              gw[a * d + b] += ur[a * d + b];
              gw[b * d + a] += ur[a * d + b];
            }
          }
        }
      break;
    }
    case Op::Tanh: {
      Node& x = input(0);
      for (std::size_t i = 0; i < g.size(); ++i) x.grad[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      break;
    }
    case Op::Sigmoid: {
      Node& x = input(0);
      for (std::size_t i = 0; i < g.size(); ++i) x.grad[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
      break;
    }
    case Op::Log: {
      Node& x = input(0);
      for (std::size_t i = 0; i < g.size(); ++i) x.grad[i] += g[i] / x.value[i];
      break;
    }
    case Op::Pow: {
      Node& x = input(0);
      if (n.a == 0.0) break;
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double base = x.value[i];
        double d;
        if (n.a == 1.0)
          d = 1.0;
        else if (base == 0.0)
          d = n.a > 1.0 ? 0.0 : std::pow(base, n.a - 1.0) * n.a;
        else
          d = n.a * std::pow(base, n.a - 1.0);
        x.grad[i] += g[i] * d;
      }
      break;
    }
    case Op::ClampMax: {
      // Ties go to the constant branch: zero gradient at x == c.
      Node& x = input(0);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x.value[i] < n.a) x.grad[i] += g[i];
      break;
    }
    case Op::ClampMin: {
      Node& x = input(0);
      for (std::size_t i = 0; i < g.size(); ++i)
        if (x.value[i] > n.a) x.grad[i] += g[i];
      break;
    }
    case Op::Sum: {
      Node& x = input(0);
      for (auto& v : x.grad.values()) v += g[0];
      break;
    }
    case Op::Mean: {
      Node& x = input(0);
      const double s = g[0] / static_cast<double>(x.value.size());
      for (auto& v : x.grad.values()) v += s;
      break;
    }
    case Op::Concat: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.inputs.size(); ++k) {
        Node& x = input(k);
        if (x.requires_grad)
          for (std::size_t i = 0; i < x.value.size(); ++i) x.grad[i] += g[off + i];
        off += x.value.size();
      }
      break;
    }
    case Op::Gather: {
      Node& x = input(0);
      for (std::size_t i = 0; i < n.index.size(); ++i) x.grad[n.index[i]] += g[i];
      break;
    }
  }
}

std::vector<Tensor> Tape::backward(Var output) {
  Node& out = nodes_.at(output.id);
  if (numel(out.shape) != 1) throw ShapeError("backward requires a scalar output, got " + shape_string(out.shape));
  if (!evaluated_) forward();
  for (auto& n : nodes_) {
    if (n.requires_grad)
      n.grad = Tensor(n.shape, 0.0);
    else
      n.grad = Tensor();
  }
  if (out.requires_grad) {
    out.grad[0] = 1.0;
    for (std::size_t i = output.id + 1; i-- > 0;) {
      const Node& n = nodes_[i];
      if (n.requires_grad) backprop_node(n);
    }
  }
  std::vector<Tensor> grads;
  grads.reserve(param_order_.size());
  for (auto id : param_order_) {
    const Node& n = nodes_[id];
    grads.push_back(n.grad.size() == numel(n.shape) ? n.grad : Tensor(n.shape, 0.0));
  }
  return grads;
}

// ---------------------------------------------------------------------------
// Builders

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape == nullptr || a.tape != b.tape) throw std::invalid_argument("operands recorded on different tapes");
  return *a.tape;
}

Var elementwise(Op op, Var a, Var b) {
  Tape& t = same_tape(a, b);
  const Shape& sa = t.shape(a);
  const Shape& sb = t.shape(b);
  Shape out;
  if (sa == sb)
    out = sa;
  else if (numel(sb) == 1)
    out = sa;
  else if (numel(sa) == 1)
    out = sb;
  else
    throw ShapeError(std::string(op_name(op)) + ": incompatible shapes " + shape_string(sa) + " and " +
                     shape_string(sb));
  return t.record(op, {a.id, b.id}, std::move(out));
}

Var unary(Op op, Var x, double a = 0.0) {
  Tape& t = *x.tape;
  return t.record(op, {x.id}, t.shape(x), a);
}

}  // namespace

Var add(Var a, Var b) { return elementwise(Op::Add, a, b); }
Var sub(Var a, Var b) { return elementwise(Op::Sub, a, b); }
Var mul(Var a, Var b) { return elementwise(Op::Mul, a, b); }

Var affine(Var x, double scale, double shift) {
  Tape& t = *x.tape;
  return t.record(Op::Affine, {x.id}, t.shape(x), scale, shift);
}

Var scale(Var x, double s) { return affine(x, s, 0.0); }

Var matvec(Var matrix, Var x) {
  Tape& t = same_tape(matrix, x);
  const Shape& sm = t.shape(matrix);
  const Shape& sx = t.shape(x);
  if (sm.size() != 2) throw ShapeError("matvec: matrix must be rank 2, got " + shape_string(sm));
  if (sx.empty() || sx.size() > 2 || sx.back() != sm[1])
    throw ShapeError("matvec: operand " + shape_string(sx) + " incompatible with matrix " + shape_string(sm));
  Shape out = sx.size() == 1 ? Shape{sm[0]} : Shape{sx[0], sm[0]};
  return t.record(Op::MatVec, {matrix.id, x.id}, std::move(out));
}

Var bilinear(Var w, Var x) {
  Tape& t = same_tape(w, x);
  const Shape& sw = t.shape(w);
  const Shape& sx = t.shape(x);
  if (sw.size() != 3 || sw[1] != sw[2]) throw ShapeError("bilinear: W must be [k,d,d], got " + shape_string(sw));
  if (sx.empty() || sx.size() > 2 || sx.back() != sw[1])
    throw ShapeError("bilinear: operand " + shape_string(sx) + " incompatible with W " + shape_string(sw));
  Shape out = sx.size() == 1 ? Shape{sw[0]} : Shape{sx[0], sw[0]};
  return t.record(Op::Bilinear, {w.id, x.id}, std::move(out));
}

Var tanh(Var x) { return unary(Op::Tanh, x); }
Var sigmoid(Var x) { return unary(Op::Sigmoid, x); }
Var log(Var x) { return unary(Op::Log, x); }
Var pow(Var x, double exponent) { return unary(Op::Pow, x, exponent); }
Var clamp_max(Var x, double c) { return unary(Op::ClampMax, x, c); }
Var clamp_min(Var x, double c) { return unary(Op::ClampMin, x, c); }

Var sum(Var x) { return x.tape->record(Op::Sum, {x.id}, Shape{}); }

Var mean(Var x) {
  if (numel(x.tape->shape(x)) == 0) throw ShapeError("mean of an empty tensor");
  return x.tape->record(Op::Mean, {x.id}, Shape{});
}

Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat of zero operands");
  Tape& t = *parts.front().tape;
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (auto p : parts) {
    if (p.tape != &t) throw std::invalid_argument("operands recorded on different tapes");
    if (t.shape(p).size() != 1) throw ShapeError("concat expects rank-1 operands, got " + shape_string(t.shape(p)));
    total += t.shape(p)[0];
    ids.push_back(p.id);
  }
  return t.record(Op::Concat, std::move(ids), Shape{total});
}

Var gather(Var x, std::vector<std::size_t> index) {
  Tape& t = *x.tape;
  const Shape& sx = t.shape(x);
  if (sx.size() != 1) throw ShapeError("gather expects a rank-1 operand, got " + shape_string(sx));
  for (auto i : index)
    if (i >= sx[0]) throw ShapeError("gather index " + std::to_string(i) + " out of range " + shape_string(sx));
  Shape out{index.size()};
  return t.record(Op::Gather, {x.id}, std::move(out), 0.0, 0.0, std::move(index));
}

// ---------------------------------------------------------------------------

double grad_check(Tape& tape, Var output, double eps) {
  tape.forward();
  const auto analytic = tape.backward(output);
  const auto params = tape.trainable_parameters();
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto& values = params[p]->value.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double up = tape.forward(output).item();
      values[i] = saved - eps;
      const double down = tape.forward(output).item();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[p][i];
      const double err = std::abs(a - numeric) / std::max(1e-12, std::abs(a) + std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  tape.forward();
  return worst;
}

}  // namespace ltn::ad
