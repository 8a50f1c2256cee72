#pragma once

// Łukasiewicz connectives and the log-space aggregators that turn literal
// truth values into a loss.

#include <cstddef>
#include <string>
#include <vector>

#include "ltn/autodiff.hpp"

namespace ltn::fuzzy {

/// Lower bound applied to a truth value before taking its log.
inline constexpr double kLogGuard = 1e-7;

// Scalar semantics.
inline double luk_not(double a) { return 1.0 - a; }
inline double luk_or(double a, double b) { return a + b < 1.0 ? a + b : 1.0; }
inline double luk_and(double a, double b) { return a + b - 1.0 > 0.0 ? a + b - 1.0 : 0.0; }
inline double luk_implies(double a, double b) { return (1.0 - a) + b < 1.0 ? (1.0 - a) + b : 1.0; }

// Graph builders with the same arithmetic as the scalar versions.
ad::Var luk_not(ad::Var a);
ad::Var luk_or(ad::Var a, ad::Var b);
ad::Var luk_and(ad::Var a, ad::Var b);
ad::Var luk_implies(ad::Var a, ad::Var b);

enum class Aggregator { LogProduct, FocalLogProduct };

struct AggregatorConfig {
  double gamma = 2.0;
  bool use_alpha = false;
  double beta = 0.999;
  Aggregator variant = Aggregator::FocalLogProduct;

  /// Focusing exponent actually applied (0 for the plain log-product).
  double effective_gamma() const { return variant == Aggregator::LogProduct ? 0.0 : gamma; }
  /// Throws std::invalid_argument on gamma < 0 or beta outside (0,1).
  void validate() const;
};

/// -sum_i w_i (1 - x_i)^gamma log(max(x_i, kLogGuard)) over a rank-1 vector
/// of literal truth values. `weights` has one entry per literal.
ad::Var focal_log_product(ad::Var literals, const ad::Tensor& weights, double gamma);

/// Double sum over a list of literal columns (one per class), each with its
/// own per-literal weights.
ad::Var focal_log_product(const std::vector<ad::Var>& columns, const std::vector<ad::Tensor>& weights, double gamma);

struct ClassWeights {
  double pos_count = 0.0;
  double neg_count = 0.0;
  double alpha_pos = 0.0;
  double alpha_neg = 0.0;
};

/// Effective-number weights (1-beta)/(1-beta^n) for explicit literal counts.
ClassWeights weights_from_counts(double pos_count, double neg_count, double beta);

/// Effective-number weights (1-beta)/(1-beta^n) for the positive and
/// negative literals of a class with training-set frequency p_c, in a batch
/// of N boxes of which fg_fraction are foreground:
///   pos_c = N fg p_c,   neg_c = N (1-fg) + N fg (1 - p_c).
/// A count of zero yields a weight of zero.
ClassWeights class_weights(double p_c, std::size_t batch_size, double beta, double fg_fraction = 0.5);

/// Per-class frequencies and the weights derived from them. Immutable once built.
struct ClassStats {
  std::vector<std::string> classes;
  std::vector<double> class_freq;
  std::size_t batch_size = 0;
  double fg_fraction = 0.5;
  std::vector<ClassWeights> weights;

  /// counts[i] is the number of training boxes of classes[i].
  static ClassStats from_counts(std::vector<std::string> classes, const std::vector<std::size_t>& counts,
                                std::size_t batch_size, double beta, double fg_fraction = 0.5);
};

}  // namespace ltn::fuzzy
