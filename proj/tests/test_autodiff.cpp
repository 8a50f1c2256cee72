#include <cmath>
#include <cstring>
#include <functional>
#include <random>

#include "doctest.h"
#include "ltn/autodiff.hpp"
#include "ltn/checkpoint.hpp"
#include "ltn/optim.hpp"

using namespace ltn::ad;

namespace {

Parameter random_param(const std::string& name, Shape shape, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = d(rng);
  return Parameter{name, t};
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = d(rng);
  return t;
}

// Central differences computed independently of grad_check.
double max_fd_error(Tape& tape, Var out, double eps = 1e-6) {
  tape.forward();
  auto grads = tape.backward(out);
  auto order = tape.trainable_parameters();
  double worst = 0.0;
  for (std::size_t p = 0; p < order.size(); ++p) {
    auto& vals = order[p]->value.values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + eps;
      tape.forward();
      const double up = tape.value(out).item();
      vals[i] = keep - eps;
      tape.forward();
      const double down = tape.value(out).item();
      vals[i] = keep;
      const double num = (up - down) / (2 * eps);
      const double a = grads[p][i];
      worst = std::max(worst, std::abs(a - num) / std::max(1e-12, std::abs(a) + std::abs(num)));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("forward examples") {
  Tape t;
  CHECK(t.forward(sigmoid(t.constant(0.0))).item() == 0.5);
  CHECK(t.forward(tanh(t.constant(0.0))).item() == 0.0);
  Var s = clamp_max(add(t.constant(0.4), t.constant(0.9)), 1.0);
  CHECK(t.forward(s).item() == 1.0);
}

TEST_CASE("backward examples") {
  SUBCASE("square") {
    Parameter x{"x", Tensor::scalar(3.0)};
    Tape t;
    Var v = t.parameter(x);
    Var y = mul(v, v);
    t.forward();
    auto g = t.backward(y);
    REQUIRE(g.size() == 1);
    CHECK(g[0].item() == 6.0);
  }
  SUBCASE("saturated disjunction has zero gradient") {
    Parameter a{"a", Tensor::scalar(0.4)}, b{"b", Tensor::scalar(0.9)};
    Tape t;
    Var y = clamp_max(add(t.parameter(a), t.parameter(b)), 1.0);
    t.forward();
    auto g = t.backward(y);
    CHECK(g[0].item() == 0.0);
    CHECK(g[1].item() == 0.0);
  }
  SUBCASE("tie at the clamp goes to the constant branch") {
    Parameter a{"a", Tensor::scalar(0.5)}, b{"b", Tensor::scalar(0.5)};
    Tape t;
    Var y = clamp_max(add(t.parameter(a), t.parameter(b)), 1.0);
    t.forward();
    CHECK(t.backward(y)[0].item() == 0.0);
    Tape t2;
    Var z = clamp_min(t2.parameter(a), 0.5);
    t2.forward();
    CHECK(t2.backward(z)[0].item() == 0.0);
  }
  SUBCASE("non-scalar output is rejected") {
    Parameter x{"x", Tensor::vector({1.0, 2.0})};
    Tape t;
    Var v = t.parameter(x);
    t.forward();
    CHECK_THROWS_AS(t.backward(v), ShapeError);
  }
}

TEST_CASE("shape errors and non-finite values") {
  Tape t;
  Var a = t.constant(Tensor::vector({1, 2, 3}));
  Var b = t.constant(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(add(a, b), ShapeError);
  CHECK_THROWS_AS(matvec(a, b), ShapeError);
  CHECK_THROWS_AS(gather(a, {3}), ShapeError);
  CHECK_THROWS_AS(t.constant(Tensor::scalar(NAN)), NonFiniteError);

  Tape t2;
  t2.set_scope("clause/x");
  Var z = log(t2.constant(0.0));
  try {
    t2.forward(z);
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.scope() == "clause/x");
  }
}

TEST_CASE("every primitive matches central differences") {
  std::mt19937_64 rng(1234);
  for (int trial = 0; trial < 5; ++trial) {
    auto run = [&](const char* name, std::function<Var(Tape&, std::vector<Var>&)> build,
                   std::vector<Parameter> params) {
      Tape t;
      std::vector<Var> vars;
      for (auto& p : params) vars.push_back(t.parameter(p));
      Var y = build(t, vars);
      Var out = sum(mul(y, t.constant(random_tensor(t.shape(y), rng))));
      INFO(name);
      CHECK(max_fd_error(t, out) < 1e-4);
    };
    auto P = [&](Shape s, double lo = -1.0, double hi = 1.0) { return random_param("p", std::move(s), rng, lo, hi); };

    run("add", [](Tape&, auto& v) { return add(v[0], v[1]); }, {P({4}), P({4})});
    run("add broadcast", [](Tape&, auto& v) { return add(v[0], v[1]); }, {P({3, 2}), P({1})});
    run("sub", [](Tape&, auto& v) { return sub(v[0], v[1]); }, {P({4}), P({4})});
    run("mul", [](Tape&, auto& v) { return mul(v[0], v[1]); }, {P({4}), P({4})});
    run("affine", [](Tape&, auto& v) { return affine(v[0], -2.5, 0.3); }, {P({4})});
    run("matvec", [](Tape&, auto& v) { return matvec(v[0], v[1]); }, {P({3, 4}), P({4})});
    run("matvec batch", [](Tape&, auto& v) { return matvec(v[0], v[1]); }, {P({3, 4}), P({5, 4})});
    run("bilinear", [](Tape&, auto& v) { return bilinear(v[0], v[1]); }, {P({2, 3, 3}), P({3})});
    run("bilinear batch", [](Tape&, auto& v) { return bilinear(v[0], v[1]); }, {P({2, 3, 3}), P({4, 3})});
    run("tanh", [](Tape&, auto& v) { return tanh(v[0]); }, {P({4}, -2, 2)});
    run("sigmoid", [](Tape&, auto& v) { return sigmoid(v[0]); }, {P({4}, -4, 4)});
    run("log", [](Tape&, auto& v) { return log(v[0]); }, {P({4}, 0.1, 2.0)});
    run("pow", [](Tape&, auto& v) { return pow(v[0], 2.0); }, {P({4}, 0.1, 1.0)});
    run("pow frac", [](Tape&, auto& v) { return pow(v[0], 1.7); }, {P({4}, 0.1, 1.0)});
    // Away from the kink by a margin well above eps.
    run("clamp_max", [](Tape&, auto& v) { return clamp_max(v[0], 0.0); }, {P({6}, 0.01, 1.0)});
    run("clamp_max below", [](Tape&, auto& v) { return clamp_max(v[0], 2.0); }, {P({6}, 0.0, 1.0)});
    run("clamp_min", [](Tape&, auto& v) { return clamp_min(v[0], 0.0); }, {P({6}, 0.01, 1.0)});
    run("sum", [](Tape&, auto& v) { return sum(v[0]); }, {P({5})});
    run("mean", [](Tape&, auto& v) { return mean(v[0]); }, {P({5})});
    run("concat", [](Tape&, auto& v) { return concat({v[0], v[1]}); }, {P({2}), P({3})});
    run("gather", [](Tape&, auto& v) { return gather(v[0], {2, 0, 2, 1}); }, {P({3})});
  }
}

TEST_CASE("grad_check on a quadratic") {
  Parameter a{"a", Tensor::vector({0.3, -1.2, 2.0})};
  Parameter frozen{"c", Tensor::vector({1.0, 1.0, 1.0}), false};
  Tape t;
  Var va = t.parameter(a);
  Var vc = t.parameter(frozen);
  Var out = sum(mul(mul(va, va), vc));
  CHECK(grad_check(t, out, 1e-6) < 1e-7);
  auto params = t.trainable_parameters();
  REQUIRE(params.size() == 1);
  CHECK(params[0] == &a);
}

TEST_CASE("adjoint is linear in the output") {
  std::mt19937_64 rng(7);
  Parameter w = random_param("w", {2, 3, 3}, rng, -1, 1);
  Parameter x = random_param("x", {4, 3}, rng, -1, 1);
  auto build = [&](Tape& t, int which) {
    Var q = tanh(bilinear(t.parameter(w), t.parameter(x)));
    Var f1 = sum(mul(q, q));
    Var f2 = sum(sigmoid(q));
    return which == 0 ? f1 : which == 1 ? f2 : add(f1, f2);
  };
  std::vector<std::vector<Tensor>> g(3);
  for (int k = 0; k < 3; ++k) {
    Tape t;
    Var out = build(t, k);
    t.forward();
    g[k] = t.backward(out);
  }
  for (std::size_t p = 0; p < g[2].size(); ++p)
    for (std::size_t i = 0; i < g[2][p].size(); ++i)
      CHECK(g[2][p][i] == doctest::Approx(g[0][p][i] + g[1][p][i]).epsilon(1e-12));
}

TEST_CASE("forward is deterministic") {
  std::mt19937_64 rng(99);
  Parameter w = random_param("w", {3, 5, 5}, rng, -1, 1);
  Parameter x = random_param("x", {7, 5}, rng, -1, 1);
  auto run = [&] {
    Tape t;
    Var out = sum(sigmoid(matvec(tanh(bilinear(t.parameter(w), t.parameter(x))), t.constant(Tensor::vector({1, -2, 3})))));
    return t.forward(out).item();
  };
  const double a = run(), b = run();
  CHECK(std::memcmp(&a, &b, sizeof(double)) == 0);
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged without decay") {
    Parameter p{"p", Tensor::vector({0.5, -0.25})};
    AdamState st;
    std::vector<Parameter*> ps{&p};
    std::vector<Tensor> gs{Tensor(Shape{2}, 0.0)};
    adam_step(ps, gs, st, 0.1, 0.0);
    CHECK(p.value[0] == 0.5);
    CHECK(p.value[1] == -0.25);
  }
  SUBCASE("zero gradient with decay shrinks toward zero") {
    Parameter p{"p", Tensor::vector({0.5, -0.25})};
    AdamState st;
    std::vector<Parameter*> ps{&p};
    std::vector<Tensor> gs{Tensor(Shape{2}, 0.0)};
    adam_step(ps, gs, st, 0.01, 5e-4);
    CHECK(std::abs(p.value[0]) < 0.5);
    CHECK(std::abs(p.value[1]) < 0.25);
    CHECK(p.value[0] > 0.0);
  }
  SUBCASE("one step on theta^2 descends") {
    Parameter p{"p", Tensor::scalar(1.0)};
    AdamState st;
    std::vector<Parameter*> ps{&p};
    std::vector<Tensor> gs{Tensor::scalar(2.0)};
    adam_step(ps, gs, st, 0.1, 0.0);
    CHECK(p.value[0] < 1.0);
  }
  SUBCASE("converges on (theta-2)^2") {
    Parameter p{"p", Tensor::scalar(0.0)};
    AdamState st;
    std::vector<Parameter*> ps{&p};
    for (int i = 0; i < 1000; ++i) {
      Tape t;
      Var d = affine(t.parameter(p), 1.0, -2.0);
      Var f = mul(d, d);
      t.forward();
      auto g = t.backward(f);
      adam_step(ps, g, st, 0.01, 0.0);
    }
    CHECK(std::abs(p.value[0] - 2.0) < 1e-2);
  }
  SUBCASE("non-finite gradient aborts the step") {
    Parameter p{"p", Tensor::scalar(1.0)};
    AdamState st;
    std::vector<Parameter*> ps{&p};
    std::vector<Tensor> gs{Tensor::scalar(INFINITY)};
    CHECK_THROWS_AS(adam_step(ps, gs, st, 0.1, 0.0), DivergenceError);
    CHECK(p.value[0] == 1.0);
    CHECK(st.step == 0);
  }
}

TEST_CASE("checkpoint format") {
  std::vector<NamedTensor> params{
      {"Cat/1.W", Tensor(Shape{1, 2, 2}, {1.5, -0.0, 4.9e-324, 1e308})},
      {"Cat/1.b", Tensor(Shape{1}, {0.1})},
  };
  const std::string bytes = encode_checkpoint(params);
  SUBCASE("header layout") {
    CHECK(bytes.substr(0, 4) == "LTNW");
    CHECK(bytes[4] == 1);  // version, little-endian
    CHECK(bytes[8] == 2);  // parameter count
    CHECK(bytes[16] == 7); // first name length
    CHECK(bytes.substr(20, 7) == "Cat/1.W");
    CHECK(bytes.size() == 4 + 4 + 8 + (4 + 7 + 4 + 3 * 8 + 4 * 8) + (4 + 7 + 4 + 8 + 8));
  }
  SUBCASE("bit-exact round trip") {
    auto back = decode_checkpoint(bytes);
    REQUIRE(back.size() == 2);
    CHECK(encode_checkpoint(back) == bytes);
    CHECK(std::signbit(back[0].value[1]));
  }
  SUBCASE("corruption is detected") {
    CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), CheckpointError);
    std::string bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bad), CheckpointError);
    CHECK_THROWS_AS(decode_checkpoint(bytes + "z"), CheckpointError);
  }
}
