#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "ltn/fuzzy.hpp"

using namespace ltn;
using namespace ltn::fuzzy;

namespace {

// Multiples of 2^-20 in [0,1]: sums and differences of these are exact.
double dyadic(std::mt19937_64& rng) {
  return static_cast<double>(std::uniform_int_distribution<int>(0, 1 << 20)(rng)) / static_cast<double>(1 << 20);
}

double graph_value(std::function<ad::Var(ad::Tape&)> build) {
  ad::Tape t;
  ad::Var v = build(t);
  return t.forward(v).item();
}

}  // namespace

TEST_CASE("connective examples") {
  CHECK(luk_not(0.0) == 1.0);
  CHECK(luk_not(1.0) == 0.0);
  CHECK(luk_not(0.3) == doctest::Approx(0.7).epsilon(1e-15));

  CHECK(luk_or(0.5, 0.7) == 1.0);
  CHECK(luk_or(0.2, 0.3) == 0.5);
  CHECK(luk_or(0.37, 0.0) == 0.37);

  CHECK(luk_and(1.0, 0.42) == doctest::Approx(0.42).epsilon(1e-15));
  CHECK(luk_and(1.0, 0.375) == 0.375);
  CHECK(luk_and(0.5, 0.5) == 0.0);

  CHECK(luk_implies(1.0, 0.0) == 0.0);
  CHECK(luk_implies(0.0, 0.123) == 1.0);
  CHECK(luk_implies(0.8, 0.5) == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("graph connectives agree bit-for-bit with scalar semantics") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double a = u(rng), b = u(rng);
    auto c = [&](ad::Tape& t, double v) { return t.constant(v); };
    CHECK(graph_value([&](ad::Tape& t) { return luk_not(c(t, a)); }) == luk_not(a));
    CHECK(graph_value([&](ad::Tape& t) { return luk_or(c(t, a), c(t, b)); }) == luk_or(a, b));
    CHECK(graph_value([&](ad::Tape& t) { return luk_and(c(t, a), c(t, b)); }) == luk_and(a, b));
    CHECK(graph_value([&](ad::Tape& t) { return luk_implies(c(t, a), c(t, b)); }) == luk_implies(a, b));
  }
}

TEST_CASE("closure on [0,1]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double a = i == 0 ? 0.0 : i == 1 ? 1.0 : u(rng);
    const double b = u(rng);
    for (double v : {luk_not(a), luk_or(a, b), luk_and(a, b), luk_implies(a, b)}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("algebraic laws") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    const double a = dyadic(rng), b = dyadic(rng), c = dyadic(rng);
    CHECK(luk_not(luk_not(a)) == a);
    CHECK(luk_or(a, b) == luk_or(b, a));
    CHECK(luk_or(luk_or(a, b), c) == luk_or(a, luk_or(b, c)));
    CHECK(luk_and(a, b) == luk_and(b, a));
    CHECK(luk_and(a, 1.0) == a);
    CHECK(luk_and(luk_and(a, b), c) == luk_and(a, luk_and(b, c)));

    // For arbitrary doubles only these hold exactly; (x + 1) - 1 rounds once.
    const double x = u(rng), y = u(rng);
    CHECK(luk_or(x, 0.0) == x);
    CHECK(luk_or(x, 1.0) == 1.0);
    CHECK(std::abs(luk_and(x, 1.0) - x) <= 0x1p-53);
    CHECK(luk_and(x, 0.0) == 0.0);
    CHECK(luk_or(x, y) == luk_or(y, x));
    // 1 - (1 - x) rounds once for x < 1/2.
    CHECK(std::abs(luk_not(luk_not(x)) - x) <= 0x1p-53);
  }
}

TEST_CASE("De Morgan duality") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double a = u(rng), b = u(rng);
    worst = std::max(worst, std::abs(luk_not(luk_and(a, b)) - luk_or(luk_not(a), luk_not(b))));
    worst = std::max(worst, std::abs(luk_not(luk_or(a, b)) - luk_and(luk_not(a), luk_not(b))));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("focal log-product examples") {
  auto eval = [](std::vector<double> xs, std::vector<double> w, double gamma) {
    ad::Tape t;
    ad::Var lit = t.constant(ad::Tensor::vector(xs));
    return t.forward(focal_log_product(lit, ad::Tensor::vector(w), gamma)).item();
  };
  CHECK(eval({1.0, 1.0, 1.0}, {1, 1, 1}, 2.0) == 0.0);
  CHECK(eval({0.5}, {1}, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(eval({0.5}, {1}, 2.0) == doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-15));
  CHECK(eval({0.5}, {1}, 2.0) == doctest::Approx(0.1733).epsilon(1e-3));
  // The log guard keeps a zero literal finite.
  CHECK(eval({0.0}, {1}, 0.0) == doctest::Approx(-std::log(kLogGuard)));
  CHECK(eval({}, {}, 2.0) == 0.0);
}

TEST_CASE("focal log-product is monotone non-increasing in each literal") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> xs(5), w(5);
    for (auto& v : xs) v = u(rng);
    for (auto& v : w) v = 0.1 + u(rng);
    const double gamma = trial % 3 == 0 ? 0.0 : 2.0;
    auto eval = [&](const std::vector<double>& x) {
      ad::Tape t;
      return t.forward(focal_log_product(t.constant(ad::Tensor::vector(x)), ad::Tensor::vector(w), gamma)).item();
    };
    const double base = eval(xs);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      auto up = xs;
      up[i] = std::min(1.0, up[i] + 0.05 * u(rng));
      CHECK(eval(up) <= base + 1e-15);
    }
  }
}

TEST_CASE("class weights") {
  SUBCASE("pos_c = 1 gives weight exactly 1") {
    // N = 128, fg = 1/2: pos = 64 p.
    auto w = class_weights(1.0 / 64.0, 128, 0.999);
    CHECK(w.pos_count == 1.0);
    CHECK(w.alpha_pos == 1.0);
  }
  SUBCASE("closed form at N=128, p=0.25, beta=0.999") {
    auto w = class_weights(0.25, 128, 0.999);
    CHECK(w.pos_count == 16.0);
    CHECK(w.neg_count == 112.0);
    CHECK(w.alpha_pos == doctest::Approx((1 - 0.999) / (1 - std::pow(0.999, 16))).epsilon(1e-14));
    CHECK(w.alpha_neg == doctest::Approx((1 - 0.999) / (1 - std::pow(0.999, 112))).epsilon(1e-14));
  }
  SUBCASE("absent class") {
    auto w = class_weights(0.0, 128, 0.999);
    CHECK(w.alpha_pos == 0.0);
    CHECK(w.neg_count == 128.0);
  }
  SUBCASE("rarer side weighted more") {
    for (double p : {0.01, 0.05, 0.1, 0.25, 0.4, 0.49})
      for (double beta : {0.9, 0.99, 0.999}) {
        auto w = class_weights(p, 128, beta);
        if (w.pos_count >= 1.0 && w.neg_count > w.pos_count) CHECK(w.alpha_neg < w.alpha_pos);
      }
  }
  SUBCASE("invalid beta") {
    CHECK_THROWS_AS(class_weights(0.5, 128, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(class_weights(0.5, 128, 0.0), std::invalid_argument);
  }
  SUBCASE("class stats from counts") {
    auto s = ClassStats::from_counts({"a", "b", "c"}, {1, 1, 2}, 32, 0.999);
    CHECK(s.class_freq[2] == 0.5);
    CHECK(s.weights[2].pos_count == 8.0);
    double total = 0;
    for (double p : s.class_freq) total += p;
    CHECK(total == 1.0);
  }
}

TEST_CASE("aggregator config validation") {
  AggregatorConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.gamma = -1;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.beta = 1.5;
  CHECK_THROWS(cfg.validate());
  cfg = {};
  cfg.variant = Aggregator::LogProduct;
  CHECK(cfg.effective_gamma() == 0.0);
}
