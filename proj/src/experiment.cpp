#include "ltn/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ltn::harness {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Plain: return "plain";
    case Variant::Alpha: return "alpha";
    case Variant::Bg: return "bg";
    case Variant::BgAlpha: return "bg_alpha";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (auto v : {Variant::Plain, Variant::Alpha, Variant::Bg, Variant::BgAlpha})
    if (variant_name(v) == name) return v;
  throw ConfigError("unknown variant '" + name + "' (expected plain, alpha, bg or bg_alpha)");
}

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (!(gamma >= 0.0) || !(prior_gamma >= 0.0)) fail("gamma must be >= 0");
  if (!(beta > 0.0 && beta < 1.0)) fail("beta must lie in (0,1)");
  if (!(lambda_l2 >= 0.0)) fail("lambda_l2 must be >= 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(lr > 0.0) || !(lr_dropped > 0.0)) fail("learning rates must be positive");
  if (epochs > 0 && lr_drop_epoch >= epochs) fail("lr_drop_epoch must be < epochs");
  if (batch.fg == 0) fail("batch_fg must be > 0");
  if (kernels == 0) fail("kernels must be > 0");
  if (!(init_scale >= 0.0)) fail("init_scale must be >= 0");
  if (!(expl_weight >= 0.0) || !(prior_weight >= 0.0)) fail("clause weights must be >= 0");
  if (!(partof.negative >= 0.0 && partof.negative < partof.positive && partof.positive <= 1.0))
    fail("part-of thresholds need 0 <= negative < positive <= 1");
}

namespace {

const std::vector<std::string> kConfigKeys{
    "variant",        "gamma",        "prior_gamma",  "beta",        "lambda_l2",   "weight_decay",
    "lr",             "lr_drop_epoch", "lr_dropped",  "epochs",      "batch_fg",    "batch_bg",
    "seed",           "kernels",      "init_scale",   "prior",       "mutual_exclusion", "expl_weight",
    "prior_weight",   "partof_positive", "partof_negative", "data",  "classes",     "ontology",
    "axioms",         "checkpoint",   "metrics"};

std::size_t non_negative(const KeyValues& kv, const std::string& key, std::size_t fallback) {
  const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
  if (v < 0) throw FormatError(key + " must be >= 0", kv.entries.at(key).second);
  return static_cast<std::size_t>(v);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  if (value.empty()) return {};
  std::filesystem::path p(value);
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir) {
  auto kv = parse_key_values(text);
  kv.reject_unknown(kConfigKeys);
  ExperimentConfig c;
  c.variant = parse_variant(kv.get_string("variant", variant_name(c.variant)));
  c.gamma = kv.get_double("gamma", c.gamma);
  c.prior_gamma = kv.get_double("prior_gamma", c.prior_gamma);
  c.beta = kv.get_double("beta", c.beta);
  c.lambda_l2 = kv.get_double("lambda_l2", c.lambda_l2);
  c.weight_decay = kv.get_double("weight_decay", c.weight_decay);
  c.lr = kv.get_double("lr", c.lr);
  c.lr_drop_epoch = non_negative(kv, "lr_drop_epoch", c.lr_drop_epoch);
  c.lr_dropped = kv.get_double("lr_dropped", c.lr_dropped);
  c.epochs = non_negative(kv, "epochs", c.epochs);
  c.batch.fg = non_negative(kv, "batch_fg", c.batch.fg);
  c.batch.bg = non_negative(kv, "batch_bg", c.batch.bg);
  c.seed = static_cast<std::uint64_t>(non_negative(kv, "seed", c.seed));
  c.kernels = non_negative(kv, "kernels", c.kernels);
  c.init_scale = kv.get_double("init_scale", c.init_scale);
  c.prior = kv.get_bool("prior", c.prior);
  c.mutual_exclusion = kv.get_bool("mutual_exclusion", c.mutual_exclusion);
  c.expl_weight = kv.get_double("expl_weight", c.expl_weight);
  c.prior_weight = kv.get_double("prior_weight", c.prior_weight);
  c.partof.positive = kv.get_double("partof_positive", c.partof.positive);
  c.partof.negative = kv.get_double("partof_negative", c.partof.negative);
  c.data = resolve(base_dir, kv.get_string("data", ""));
  c.classes = resolve(base_dir, kv.get_string("classes", ""));
  c.ontology = resolve(base_dir, kv.get_string("ontology", ""));
  c.axioms = resolve(base_dir, kv.get_string("axioms", ""));
  c.checkpoint = resolve(base_dir, kv.get_string("checkpoint", ""));
  c.metrics = resolve(base_dir, kv.get_string("metrics", ""));
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_file(path), path.parent_path());
}

std::string format_experiment_config(const ExperimentConfig& c) {
  std::string out;
  auto put = [&](const std::string& k, const std::string& v) { out += k + " = " + v + "\n"; };
  auto num = [](double v) { return format_double(v); };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  put("variant", variant_name(c.variant));
  put("gamma", num(c.gamma));
  put("prior_gamma", num(c.prior_gamma));
  put("beta", num(c.beta));
  put("lambda_l2", num(c.lambda_l2));
  put("weight_decay", num(c.weight_decay));
  put("lr", num(c.lr));
  put("lr_drop_epoch", std::to_string(c.lr_drop_epoch));
  put("lr_dropped", num(c.lr_dropped));
  put("epochs", std::to_string(c.epochs));
  put("batch_fg", std::to_string(c.batch.fg));
  put("batch_bg", std::to_string(c.batch.bg));
  put("seed", std::to_string(c.seed));
  put("kernels", std::to_string(c.kernels));
  put("init_scale", num(c.init_scale));
  put("prior", b(c.prior));
  put("mutual_exclusion", b(c.mutual_exclusion));
  put("expl_weight", num(c.expl_weight));
  put("prior_weight", num(c.prior_weight));
  put("partof_positive", num(c.partof.positive));
  put("partof_negative", num(c.partof.negative));
  for (auto [k, p] : {std::pair{"data", &c.data}, {"classes", &c.classes}, {"ontology", &c.ontology},
                      {"axioms", &c.axioms}, {"checkpoint", &c.checkpoint}, {"metrics", &c.metrics}})
    if (!p->empty()) put(k, p->string());
  return out;
}

ExperimentConfig run_preset(const std::string& name) {
  ExperimentConfig c;
  c.variant = parse_variant(name);
  return c;
}

ExperimentConfig run_desk_preset(const std::string& name) {
  ExperimentConfig c = run_preset(name);
  c.epochs = 50;
  c.lr = 3e-3;
  c.lr_drop_epoch = 40;
  c.lr_dropped = 3e-4;
  return c;
}

// ---------------------------------------------------------------------------

Model::Model(std::vector<std::string> classes, std::size_t dim, std::size_t kernels, bool with_bg, bool with_partof)
    : classes_(std::move(classes)), dim_(dim), kernels_(kernels), has_bg_(with_bg), has_partof_(with_partof) {
  if (classes_.empty()) throw ConfigError("model needs at least one class");
  for (const auto& c : classes_) preds_.emplace_back(fol::PredicateSymbol{c, 1}, kernels, dim);
  if (has_bg_) preds_.emplace_back(fol::PredicateSymbol{det::kBackground, 1}, kernels, dim);
  if (has_partof_) preds_.emplace_back(fol::PredicateSymbol{det::kPartOf, 2}, kernels, det::pair_dim(dim));
}

void Model::randomize(std::uint64_t seed, double scale) {
  for (std::size_t i = 0; i < preds_.size(); ++i) {
    std::mt19937_64 rng(derive_seed(seed, 0x5eed, i));
    preds_[i].params.randomize(rng, scale);
  }
}

ground::GroundedPredicate& Model::predicate(const std::string& name) {
  for (auto& p : preds_)
    if (p.symbol.name == name) return p;
  throw ConfigError("model has no predicate '" + name + "'");
}

std::vector<ground::GroundedPredicate*> Model::predicates() {
  std::vector<ground::GroundedPredicate*> out;
  for (auto& p : preds_) out.push_back(&p);
  return out;
}

std::vector<ad::Parameter*> Model::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& p : preds_)
    for (auto* q : p.params.all()) out.push_back(q);
  return out;
}

std::vector<ad::NamedTensor> Model::export_parameters() {
  std::vector<ad::NamedTensor> out;
  for (auto* p : parameters()) out.push_back({p->name, p->value});
  return out;
}

Model Model::from_checkpoint(const std::vector<ad::NamedTensor>& tensors) {
  struct Entry {
    std::string pred;
    int arity = 0;
  };
  std::vector<Entry> order;
  std::map<std::string, const ad::Tensor*> by_name;
  for (const auto& t : tensors) {
    const auto slash = t.name.find('/');
    const auto dot = t.name.rfind('.');
    if (slash == std::string::npos || dot == std::string::npos || dot < slash)
      throw ad::CheckpointError("unexpected tensor name '" + t.name + "'");
    Entry e{t.name.substr(0, slash), std::stoi(t.name.substr(slash + 1, dot - slash - 1))};
    if (std::none_of(order.begin(), order.end(), [&](const Entry& x) { return x.pred == e.pred; })) order.push_back(e);
    by_name[t.name] = &t.value;
  }
  std::vector<std::string> classes;
  bool bg = false, partof = false;
  for (const auto& e : order) {
    if (e.arity == 2 && e.pred == det::kPartOf)
      partof = true;
    else if (e.arity == 1 && e.pred == det::kBackground)
      bg = true;
    else if (e.arity == 1)
      classes.push_back(e.pred);
    else
      throw ad::CheckpointError("unsupported predicate '" + e.pred + "'");
  }
  if (classes.empty()) throw ad::CheckpointError("checkpoint holds no class predicates");
  auto it = by_name.find(classes.front() + "/1.W");
  if (it == by_name.end() || it->second->rank() != 3) throw ad::CheckpointError("missing W for '" + classes.front() + "'");
  Model m(classes, it->second->dim(1), it->second->dim(0), bg, partof);
  for (auto* p : m.parameters()) {
    auto found = by_name.find(p->name);
    if (found == by_name.end()) throw ad::CheckpointError("checkpoint lacks '" + p->name + "'");
    if (found->second->shape() != p->value.shape())
      throw ad::CheckpointError("shape mismatch for '" + p->name + "': " + ad::shape_string(found->second->shape()) +
                                " vs " + ad::shape_string(p->value.shape()));
    p->value = *found->second;
  }
  if (m.parameters().size() != tensors.size()) throw ad::CheckpointError("checkpoint holds unexpected tensors");
  return m;
}

// ---------------------------------------------------------------------------

Experiment prepare_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  if (cfg.data.empty()) throw ConfigError("config needs a 'data' path");
  Experiment ex;
  ex.config = cfg;
  ex.data = load_dataset(cfg.data);
  if (ex.data.images.empty() || ex.data.dim == 0) throw ConfigError("dataset '" + cfg.data.string() + "' has no proposals");

  std::filesystem::path classes_path = cfg.classes;
  if (classes_path.empty()) {
    auto sidecar = cfg.data;
    sidecar += ".classes";
    if (std::filesystem::exists(sidecar)) classes_path = sidecar;
  }
  ex.classes = classes_path.empty() ? ex.data.labels() : det::parse_class_list(read_file(classes_path));
  if (ex.classes.size() < 2) throw ConfigError("need at least two classes");
  if (std::find(ex.classes.begin(), ex.classes.end(), det::kBackground) != ex.classes.end())
    throw ConfigError("'" + det::kBackground + "' is reserved for background proposals");

  if (!cfg.ontology.empty()) {
    ex.ontology = det::parse_ontology(read_file(cfg.ontology));
    ex.ontology.validate(ex.classes);
  }

  if (cfg.prior) {
    auto prior_classes = ex.classes;
    if (uses_bg(cfg.variant)) prior_classes.push_back(det::kBackground);
    ex.prior = det::build_prior_theory(prior_classes, ex.ontology.empty() ? nullptr : &ex.ontology,
                                       cfg.mutual_exclusion);
    if (!cfg.axioms.empty()) {
      auto extra = fol::parse_axioms(read_file(cfg.axioms));
      for (const auto& p : extra.predicates)
        if (std::find(ex.prior.predicates.begin(), ex.prior.predicates.end(), p) == ex.prior.predicates.end())
          throw ConfigError("axiom file declares '" + p.name + "/" + std::to_string(p.arity) +
                            "', which the model does not ground");
      for (auto& a : extra.axioms) ex.prior.axioms.push_back(std::move(a));
    }
  }

  std::vector<std::size_t> counts(ex.classes.size(), 0);
  for (const auto& im : ex.data.images)
    for (const auto& p : im.proposals) {
      if (p.is_background()) continue;
      auto it = std::find(ex.classes.begin(), ex.classes.end(), p.label);
      if (it == ex.classes.end()) throw ConfigError("unknown label '" + p.label + "' in image '" + im.id + "'");
      ++counts[static_cast<std::size_t>(it - ex.classes.begin())];
    }
  const double fg_fraction = static_cast<double>(cfg.batch.fg) / static_cast<double>(cfg.batch.size());
  ex.stats = fuzzy::ClassStats::from_counts(ex.classes, counts, cfg.batch.size(), cfg.beta, fg_fraction);
  return ex;
}

std::string metrics_header() { return "#epoch\texpl_loss\tprior_loss\tl2\ttotal\tlr\n"; }

std::string format_metrics_line(const EpochMetrics& m) {
  return std::to_string(m.epoch) + "\t" + format_double(m.expl) + "\t" + format_double(m.prior) + "\t" +
         format_double(m.l2) + "\t" + format_double(m.total) + "\t" + format_double(m.lr) + "\n";
}

det::Batch whole_image_batch(const Image& im) {
  det::Batch b;
  b.image_id = im.id;
  b.extent = im.extent;
  b.proposals = im.proposals;
  for (std::size_t i = 0; i < im.proposals.size(); ++i) {
    b.source_index.push_back(i);
    if (!im.proposals[i].is_background()) ++b.fg_count;
  }
  return b;
}

void bind_batch(ground::GroundingEnvironment& env, const det::Batch& batch, Model& model) {
  const std::size_t n = batch.proposals.size(), d = model.dim();
  ad::Tensor z(ad::Shape{n, d});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = batch.proposals[i].z;
    if (v.size() != d)
      throw ground::GroundingError("dimension mismatch: model expects embeddings of size " + std::to_string(d) +
                                   ", image '" + batch.image_id + "' has " + std::to_string(v.size()));
    std::copy(v.begin(), v.end(), z.values().begin() + static_cast<long>(i * d));
  }
  env.add_domain("obj", std::move(z));
  env.set_default_domain("obj");
  for (auto* p : model.predicates()) env.add_predicate(*p);
  env.set_input_builder(2, [&batch](std::span<const ground::ObjectRef> args) {
    return det::ground_pair(batch.proposals[args[0].index], batch.proposals[args[1].index], batch.extent);
  });
}

Trainer::Trainer(const Experiment& ex, Model& model) : ex_(ex), model_(model) {}

ImageGraph Trainer::build_graph(ad::Tape& tape, ground::GroundingEnvironment& env, const det::Batch& batch) {
  const auto& cfg = ex_.config;
  ground::TheoryBuilder tb(tape, env);
  auto& gr = tb.grounder();
  const bool alpha = uses_alpha(cfg.variant);
  const double n = static_cast<double>(cfg.batch.size());
  const double fg = static_cast<double>(cfg.batch.fg) / n;

  auto literal_clause = [&](const std::string& name, ad::Var truths, const std::vector<std::size_t>& pos,
                            const std::vector<std::size_t>& neg, const fuzzy::ClassWeights& w) {
    std::vector<ad::Var> parts;
    if (!pos.empty()) parts.push_back(ad::gather(truths, pos));
    if (!neg.empty()) parts.push_back(fuzzy::luk_not(ad::gather(truths, neg)));
    if (parts.empty()) return;
    std::vector<double> weights;
    weights.insert(weights.end(), pos.size(), alpha ? w.alpha_pos : 1.0);
    weights.insert(weights.end(), neg.size(), alpha ? w.alpha_neg : 1.0);
    tb.add_clause(name, "expl", parts.size() == 1 ? parts[0] : ad::concat(parts), ad::Tensor::vector(weights),
                  cfg.gamma, cfg.expl_weight);
  };

  for (const auto& clause : det::build_expl_theory(batch, ex_.classes, uses_bg(cfg.variant))) {
    const std::string name = "expl/" + clause.predicate;
    tape.set_scope(name);
    ad::Var truths = gr.product_truths(clause.predicate, {"obj"});
    fuzzy::ClassWeights w;
    if (clause.predicate == det::kBackground) {
      w = fuzzy::weights_from_counts(n * (1.0 - fg), n * fg, cfg.beta);
    } else {
      const auto idx = static_cast<std::size_t>(
          std::find(ex_.classes.begin(), ex_.classes.end(), clause.predicate) - ex_.classes.begin());
      w = ex_.stats.weights[idx];
    }
    literal_clause(name, truths, clause.positives, clause.negatives, w);
  }

  if (model_.has_partof()) {
    const auto examples = det::build_partof_examples(batch, ex_.ontology, cfg.partof);
    if (!examples.empty()) {
      const std::string name = "expl/" + det::kPartOf;
      tape.set_scope(name);
      ad::Var truths = gr.product_truths(det::kPartOf, {"obj", "obj"});
      const std::size_t m = batch.proposals.size();
      std::vector<std::size_t> pos, neg;
      for (const auto& e : examples) (e.positive ? pos : neg).push_back(e.part * m + e.whole);
      const auto w = fuzzy::weights_from_counts(static_cast<double>(pos.size()), static_cast<double>(neg.size()),
                                                cfg.beta);
      literal_clause(name, truths, pos, neg, w);
    }
  }

  fuzzy::AggregatorConfig prior_agg;
  prior_agg.gamma = cfg.prior_gamma;
  prior_agg.beta = cfg.beta;
  for (const auto& ax : ex_.prior.axioms) tb.add_axiom(ax, prior_agg, cfg.prior_weight, "prior");
  tape.set_scope("");
  return {tb.finish(cfg.lambda_l2), model_.predicates()};
}

EpochMetrics Trainer::step(const det::Batch& batch, std::size_t epoch) {
  ad::Tape tape;
  ground::GroundingEnvironment env;
  bind_batch(env, batch, model_);
  ImageGraph g = build_graph(tape, env, batch);
  try {
    tape.forward();
  } catch (const ad::NonFiniteError& e) {
    throw TrainingError("non-finite loss in clause '" + e.scope() + "' (image '" + batch.image_id + "', epoch " +
                        std::to_string(epoch + 1) + "): " + e.what());
  }
  EpochMetrics m;
  m.expl = g.loss.group_value(tape, "expl");
  m.prior = g.loss.group_value(tape, "prior");
  m.l2 = tape.value(g.loss.l2_term).item();
  m.total = tape.value(g.loss.total).item();
  if (!std::isfinite(m.total))
    throw TrainingError("non-finite total loss (image '" + batch.image_id + "', epoch " + std::to_string(epoch + 1) + ")");

  const auto grads = tape.backward(g.loss.total);
  const auto on_tape = tape.trainable_parameters();
  auto params = model_.parameters();
  std::vector<ad::Tensor> aligned;
  aligned.reserve(params.size());
  for (auto* p : params) {
    auto it = std::find(on_tape.begin(), on_tape.end(), p);
    aligned.push_back(it == on_tape.end() ? ad::Tensor(p->value.shape(), 0.0)
                                          : grads[static_cast<std::size_t>(it - on_tape.begin())]);
  }
  try {
    ad::adam_step(params, aligned, adam_, ex_.config.lr_at(epoch), ex_.config.weight_decay);
  } catch (const ad::DivergenceError& e) {
    throw TrainingError("diverged at image '" + batch.image_id + "', epoch " + std::to_string(epoch + 1) + ": " +
                        e.what());
  }
  return m;
}

TrainResult Trainer::run(const std::function<void(const EpochMetrics&)>& on_epoch) {
  const auto& cfg = ex_.config;
  TrainResult result;
  const auto& images = ex_.data.images;
  std::vector<std::size_t> order(images.size());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, e, ~0ULL));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochMetrics acc;
    acc.epoch = e + 1;
    acc.lr = cfg.lr_at(e);
    for (auto i : order) {
      det::Batch batch;
      try {
        batch = det::make_batch(images[i].proposals, images[i].extent, cfg.batch, derive_seed(cfg.seed, e, i),
                                images[i].id);
      } catch (const det::NoForegroundError&) {
        ++acc.skipped;
        continue;
      }
      const auto m = step(batch, e);
      acc.expl += m.expl;
      acc.prior += m.prior;
      acc.l2 += m.l2;
      acc.total += m.total;
      ++acc.images;
    }
    if (acc.images > 0) {
      const double k = static_cast<double>(acc.images);
      acc.expl /= k;
      acc.prior /= k;
      acc.l2 /= k;
      acc.total /= k;
    }
    result.skipped_images += acc.skipped;
    result.epochs.push_back(acc);
    if (on_epoch) on_epoch(acc);
  }
  return result;
}

Model initial_model(const Experiment& ex) {
  Model m(ex.classes, ex.data.dim, ex.config.kernels, uses_bg(ex.config.variant), !ex.ontology.empty());
  m.randomize(ex.config.seed, ex.config.init_scale);
  return m;
}

TrainResult train(const ExperimentConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("config needs a 'checkpoint' path");
  if (cfg.metrics.empty()) throw ConfigError("config needs a 'metrics' path");
  Experiment ex = prepare_experiment(cfg);
  Model model = initial_model(ex);
  Trainer trainer(ex, model);
  std::string log = metrics_header();
  TrainResult r = trainer.run([&](const EpochMetrics& m) { log += format_metrics_line(m); });
  write_file(cfg.metrics, log);
  ad::save_checkpoint(cfg.checkpoint, model.export_parameters());
  return r;
}

// ---------------------------------------------------------------------------

std::map<std::string, double> expl_satisfaction(Model& model, const Dataset& ds, bool include_bg) {
  std::vector<std::string> preds = model.classes();
  if (include_bg) preds.push_back(det::kBackground);
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& im : ds.images) {
    const det::Batch batch = whole_image_batch(im);
    if (batch.proposals.empty()) continue;
    ad::Tape tape;
    ground::GroundingEnvironment env;
    bind_batch(env, batch, model);
    ground::Grounder gr(tape, env);
    std::vector<ad::Var> truths;
    for (const auto& c : preds) truths.push_back(gr.product_truths(c, {"obj"}));
    tape.forward();
    for (const auto& clause : det::build_expl_theory(batch, model.classes(), include_bg)) {
      const auto k = static_cast<std::size_t>(std::find(preds.begin(), preds.end(), clause.predicate) - preds.begin());
      const auto& t = tape.value(truths[k]);
      auto& [sum, count] = acc[clause.predicate];
      for (auto i : clause.positives) sum += t[i];
      for (auto i : clause.negatives) sum += 1.0 - t[i];
      count += clause.positives.size() + clause.negatives.size();
    }
  }
  std::map<std::string, double> out;
  for (const auto& [k, v] : acc) out[k] = v.second ? v.first / static_cast<double>(v.second) : 0.0;
  return out;
}

std::map<std::string, double> axiom_satisfaction(Model& model, const Dataset& ds, const fol::KnowledgeBase& kb) {
  std::map<std::string, std::pair<double, std::size_t>> acc;
  for (const auto& im : ds.images) {
    const det::Batch batch = whole_image_batch(im);
    if (batch.proposals.size() < 2) continue;
    ad::Tape tape;
    ground::GroundingEnvironment env;
    bind_batch(env, batch, model);
    ground::Grounder gr(tape, env);
    std::vector<std::pair<std::string, ad::Var>> grounded;
    for (const auto& ax : kb.axioms) grounded.emplace_back(fol::axiom_name(ax), gr.ground(*ax.formula).truths);
    tape.forward();
    for (const auto& [name, v] : grounded) {
      auto& [sum, count] = acc[name];
      for (double x : tape.value(v).values()) sum += x;
      count += tape.value(v).size();
    }
  }
  std::map<std::string, double> out;
  for (const auto& [k, v] : acc) out[k] = v.second ? v.first / static_cast<double>(v.second) : 0.0;
  return out;
}

}  // namespace ltn::harness
