#include "ltn/fuzzy.hpp"

#include <cmath>
#include <stdexcept>

namespace ltn::fuzzy {

ad::Var luk_not(ad::Var a) { return ad::affine(a, -1.0, 1.0); }

ad::Var luk_or(ad::Var a, ad::Var b) { return ad::clamp_max(ad::add(a, b), 1.0); }

ad::Var luk_and(ad::Var a, ad::Var b) { return ad::clamp_min(ad::affine(ad::add(a, b), 1.0, -1.0), 0.0); }

ad::Var luk_implies(ad::Var a, ad::Var b) { return ad::clamp_max(ad::add(luk_not(a), b), 1.0); }

void AggregatorConfig::validate() const {
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be >= 0");
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must lie in (0,1)");
}

ad::Var focal_log_product(ad::Var literals, const ad::Tensor& weights, double gamma) {
  ad::Tape& tape = *literals.tape;
  const auto& shape = tape.shape(literals);
  if (shape.size() != 1 || weights.rank() != 1 || weights.size() != shape[0])
    throw ad::ShapeError("focal_log_product: literals " + ad::shape_string(shape) + " vs weights " +
                         ad::shape_string(weights.shape()));
  if (shape[0] == 0) return tape.constant(0.0);
  ad::Var logs = ad::log(ad::clamp_min(literals, kLogGuard));
  ad::Var focus = ad::pow(luk_not(literals), gamma);
  ad::Var terms = ad::mul(ad::mul(focus, logs), tape.constant(weights));
  return ad::scale(ad::sum(terms), -1.0);
}

ad::Var focal_log_product(const std::vector<ad::Var>& columns, const std::vector<ad::Tensor>& weights, double gamma) {
  if (columns.size() != weights.size()) throw ad::ShapeError("focal_log_product: one weight vector per column");
  if (columns.empty()) throw ad::ShapeError("focal_log_product: no columns");
  ad::Var total = focal_log_product(columns[0], weights[0], gamma);
  for (std::size_t j = 1; j < columns.size(); ++j) total = ad::add(total, focal_log_product(columns[j], weights[j], gamma));
  return total;
}

namespace {

double effective_number_weight(double count, double beta) {
  if (count <= 0.0) return 0.0;
  return (1.0 - beta) / (1.0 - std::pow(beta, count));
}

}  // namespace

ClassWeights weights_from_counts(double pos_count, double neg_count, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must lie in (0,1)");
  ClassWeights w;
  w.pos_count = pos_count;
  w.neg_count = neg_count;
  w.alpha_pos = effective_number_weight(pos_count, beta);
  w.alpha_neg = effective_number_weight(neg_count, beta);
  return w;
}

ClassWeights class_weights(double p_c, std::size_t batch_size, double beta, double fg_fraction) {
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("beta must lie in (0,1)");
  if (!(p_c >= 0.0 && p_c <= 1.0)) throw std::invalid_argument("class frequency must lie in [0,1]");
  if (!(fg_fraction > 0.0 && fg_fraction <= 1.0)) throw std::invalid_argument("foreground fraction must lie in (0,1]");
  const double n = static_cast<double>(batch_size);
  const double fg = n * fg_fraction;
  const double bg = n * (1.0 - fg_fraction);
  return weights_from_counts(fg * p_c, bg + fg * (1.0 - p_c), beta);
}

ClassStats ClassStats::from_counts(std::vector<std::string> classes, const std::vector<std::size_t>& counts,
                                   std::size_t batch_size, double beta, double fg_fraction) {
  if (classes.size() != counts.size()) throw std::invalid_argument("one count per class required");
  std::size_t total = 0;
  for (auto c : counts) total += c;
  ClassStats s;
  s.classes = std::move(classes);
  s.batch_size = batch_size;
  s.fg_fraction = fg_fraction;
  for (auto c : counts) {
    const double p = total == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(total);
    s.class_freq.push_back(p);
    s.weights.push_back(class_weights(p, batch_size, beta, fg_fraction));
  }
  return s;
}

}  // namespace ltn::fuzzy
