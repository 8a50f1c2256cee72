#pragma once

// Experiment configuration, the predicate model, and the training loop.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "ltn/checkpoint.hpp"
#include "ltn/dataset.hpp"
#include "ltn/detection.hpp"
#include "ltn/grounding.hpp"
#include "ltn/optim.hpp"

namespace ltn::harness {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Variant { Plain, Alpha, Bg, BgAlpha };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);
inline bool uses_alpha(Variant v) { return v == Variant::Alpha || v == Variant::BgAlpha; }
inline bool uses_bg(Variant v) { return v == Variant::Bg || v == Variant::BgAlpha; }

struct ExperimentConfig {
  Variant variant = Variant::Plain;
  double gamma = 2.0;
  double prior_gamma = 2.0;
  double beta = 0.999;
  double lambda_l2 = 5e-4;
  double weight_decay = 5e-4;
  double lr = 1e-5;
  std::size_t lr_drop_epoch = 60;
  double lr_dropped = 1e-6;
  std::size_t epochs = 150;
  det::BatchPolicy batch{32, 96};
  std::uint64_t seed = 0;
  std::size_t kernels = 6;
  double init_scale = 0.1;
  bool prior = true;             // include T_prior
  bool mutual_exclusion = true;
  double expl_weight = 1.0;
  double prior_weight = 1.0;
  det::PartOfThresholds partof;

  std::filesystem::path data;
  std::filesystem::path classes;   // empty: <data>.classes when present, else dataset labels
  std::filesystem::path ontology;  // optional
  std::filesystem::path axioms;    // optional extra prior axioms
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;

  double lr_at(std::size_t epoch) const { return epoch < lr_drop_epoch ? lr : lr_dropped; }
  /// Throws ConfigError on inconsistent hyperparameters.
  void validate() const;
};

/// Relative paths resolve against `base_dir`. Unknown keys are errors.
ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string format_experiment_config(const ExperimentConfig& cfg);

/// Full-schedule defaults for the named ablation: plain, alpha, bg, bg_alpha.
ExperimentConfig run_preset(const std::string& name);
/// run_preset with the desk-scale schedule (50 epochs, faster learning rate).
ExperimentConfig run_desk_preset(const std::string& name);

/// One predicate per class (plus bg and partOf when enabled).
class Model {
 public:
  Model(std::vector<std::string> classes, std::size_t dim, std::size_t kernels, bool with_bg, bool with_partof);

  void randomize(std::uint64_t seed, double scale);

  const std::vector<std::string>& classes() const { return classes_; }
  std::size_t dim() const { return dim_; }
  std::size_t kernels() const { return kernels_; }
  bool has_bg() const { return has_bg_; }
  bool has_partof() const { return has_partof_; }

  ground::GroundedPredicate& predicate(const std::string& name);
  std::vector<ground::GroundedPredicate*> predicates();
  /// Every parameter in a fixed order: predicates in declaration order, then W, V, u, b.
  std::vector<ad::Parameter*> parameters();

  std::vector<ad::NamedTensor> export_parameters();
  /// Rebuilds a model from checkpoint tensors named "<pred>/<arity>.<W|V|u|b>".
  static Model from_checkpoint(const std::vector<ad::NamedTensor>& tensors);

 private:
  std::vector<std::string> classes_;
  std::size_t dim_, kernels_;
  bool has_bg_, has_partof_;
  std::deque<ground::GroundedPredicate> preds_;
};

/// Data, theory and model assembled from a config.
struct Experiment {
  ExperimentConfig config;
  Dataset data;
  std::vector<std::string> classes;
  det::PartOntology ontology;
  fol::KnowledgeBase prior;
  fuzzy::ClassStats stats;
};

Experiment prepare_experiment(const ExperimentConfig& cfg);

struct EpochMetrics {
  std::size_t epoch = 0;
  double expl = 0.0;   // mean per trained image
  double prior = 0.0;
  double l2 = 0.0;
  double total = 0.0;
  double lr = 0.0;
  std::size_t images = 0;
  std::size_t skipped = 0;
};

std::string format_metrics_line(const EpochMetrics& m);
std::string metrics_header();

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  std::size_t skipped_images = 0;
};

/// Builds the per-image loss graph on `tape`; exposed for graph inspection.
struct ImageGraph {
  ground::TheoryLoss loss;
  std::vector<ground::GroundedPredicate*> preds;
};

class Trainer {
 public:
  Trainer(const Experiment& ex, Model& model);

  /// One Adam step on one batch. Returns group losses of the batch.
  EpochMetrics step(const det::Batch& batch, std::size_t epoch);
  /// Records the batch theory without evaluating it.
  ImageGraph build_graph(ad::Tape& tape, ground::GroundingEnvironment& env, const det::Batch& batch);
  TrainResult run(const std::function<void(const EpochMetrics&)>& on_epoch = {});

 private:
  const Experiment& ex_;
  Model& model_;
  ad::AdamState adam_;
};

/// Fresh model for the experiment, initialized from the config seed.
Model initial_model(const Experiment& ex);

/// Full `train` command: runs, then writes the checkpoint and metrics log.
TrainResult train(const ExperimentConfig& cfg);

/// Fills `env` with the batch domain, the model predicates, and the pair builder.
void bind_batch(ground::GroundingEnvironment& env, const det::Batch& batch, Model& model);

/// Batch covering every proposal of an image, in file order.
det::Batch whole_image_batch(const Image& im);

/// Mean literal truth of each T_expl clause over whole images (positives x, negatives 1-x).
std::map<std::string, double> expl_satisfaction(Model& model, const Dataset& ds, bool include_bg);

/// Mean truth over all instantiations of each axiom, pooled over images.
std::map<std::string, double> axiom_satisfaction(Model& model, const Dataset& ds, const fol::KnowledgeBase& kb);

}  // namespace ltn::harness
