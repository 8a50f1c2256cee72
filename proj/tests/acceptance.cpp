// Acceptance suite: one PASS/FAIL line per criterion.
//
// usage: acceptance <ltn-cli> <work-dir> [criterion ...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ltn/detection.hpp"
#include "ltn/evaluation.hpp"
#include "ltn/experiment.hpp"
#include "ltn/fuzzy.hpp"
#include "ltn/grounding.hpp"

namespace fs = std::filesystem;
using namespace ltn;
using namespace ltn::harness;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string cli;
fs::path work;

int run(const std::string& cmd) {
  const std::string full = cmd + " > " + (work / "last_cmd.log").string() + " 2>&1";
  const int status = std::system(full.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

// Straight-line NTN, kept independent of the library's graph code.
double ntn(const ground::PredicateParams& p, const std::vector<double>& v) {
  const std::size_t k = p.kernels, d = p.input_dim;
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    double pre = p.b.value.values()[0];
    for (std::size_t a = 0; a < d; ++a) {
      pre += p.V.value.values()[i * d + a] * v[a];
      for (std::size_t b = 0; b < d; ++b) pre += v[a] * p.W.value.values()[(i * d + a) * d + b] * v[b];
    }
    s += p.u.value.values()[i] * std::tanh(pre);
  }
  return 1.0 / (1.0 + std::exp(-s));
}

ad::Tensor random_matrix(std::mt19937_64& rng, std::size_t n, std::size_t d) {
  std::normal_distribution<double> g(0.0, 1.0);
  ad::Tensor t(ad::Shape{n, d});
  for (auto& v : t.values()) v = g(rng);
  return t;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  const char* theory =
      "pred Cat/1 pred Person/1 pred Tail/1 pred partOf/2\n"
      "axiom forall x: Cat(x) -> ~Person(x)\n"
      "axiom forall x,y: Cat(x) & partOf(y,x) -> Tail(y)\n"
      "axiom forall x,y: partOf(x,y) -> ~partOf(y,x)\n";
  const auto kb = fol::parse_axioms(theory);
  double worst_pred = 0.0, worst_theory = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    {
      ground::GroundedPredicate p({"Cat", 1}, 6, 5);
      p.params.randomize(rng, ExperimentConfig{}.init_scale);
      ad::Tape tape;
      ad::Var out = ad::sum(ground::predicate_forward(tape, p, tape.constant(random_matrix(rng, 4, 5))));
      worst_pred = std::max(worst_pred, ad::grad_check(tape, out, 1e-6));
    }
    {
      const std::size_t d = 3;
      ground::GroundedPredicate cat({"Cat", 1}, 3, d), person({"Person", 1}, 3, d), tail({"Tail", 1}, 3, d),
          part({"partOf", 2}, 3, 2 * d);
      for (auto* gp : {&cat, &person, &tail, &part}) gp->params.randomize(rng, ExperimentConfig{}.init_scale);
      ground::GroundingEnvironment env;
      env.add_domain("obj", random_matrix(rng, 3, d));
      env.set_default_domain("obj");
      for (auto* gp : {&cat, &person, &tail, &part}) env.add_predicate(*gp);
      fuzzy::AggregatorConfig agg;
      agg.gamma = 2.0;
      ad::Tape tape;
      auto loss = ground::compile_theory(tape, kb, env, agg, 5e-4);
      worst_theory = std::max(worst_theory, ad::grad_check(tape, loss.total, 1e-6));
    }
  }
  const double secs = seconds_since(t0);
  return {worst_pred < 1e-4 && worst_theory < 1e-4 && secs < 10.0,
          "max rel err predicate " + fmt("%.2e", worst_pred) + ", theory " + fmt("%.2e", worst_theory) +
              " over 20 seeds (params at init scale), " + fmt("%.2f", secs) + " s"};
}

Outcome fuzzy_algebra() {
  using namespace fuzzy;
  std::mt19937_64 rng(2);
  // Grid values k/2^20: every sum and difference below is representable, so
  // exact equality is the meaningful check.
  std::uniform_int_distribution<int> grid(0, 1 << 20);
  auto gv = [&] { return static_cast<double>(grid(rng)) / static_cast<double>(1 << 20); };
  std::size_t violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const double a = gv(), b = gv(), c = gv();
    violations += luk_not(luk_not(a)) != a;
    violations += luk_or(a, 0.0) != a;
    violations += luk_or(a, 1.0) != 1.0;
    violations += luk_or(a, b) != luk_or(b, a);
    violations += luk_or(luk_or(a, b), c) != luk_or(a, luk_or(b, c));
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double demorgan = 0.0, dn_arbitrary = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double a = u(rng), b = u(rng);
    demorgan = std::max(demorgan, std::abs(luk_not(luk_and(a, b)) - luk_or(luk_not(a), luk_not(b))));
    demorgan = std::max(demorgan, std::abs(luk_not(luk_or(a, b)) - luk_and(luk_not(a), luk_not(b))));
    dn_arbitrary = std::max(dn_arbitrary, std::abs(luk_not(luk_not(a)) - a));
  }
  return {violations == 0 && demorgan < 1e-12,
          std::to_string(violations) + " exactness violations on 10^4 grid triples; De Morgan max dev " +
              fmt("%.1e", demorgan) + " on 10^4 pairs (double negation on arbitrary doubles: max dev " +
              fmt("%.1e", dn_arbitrary) + ")"};
}

Outcome cross_entropy_equivalence() {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1e-3, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 1 + trial % 17, cols = 1 + trial % 5;
    ad::Tape tape;
    std::vector<ad::Var> columns;
    std::vector<ad::Tensor> weights;
    double expect = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      std::vector<double> x(rows);
      for (auto& v : x) {
        v = u(rng);
        expect -= std::log(v);
      }
      columns.push_back(tape.constant(ad::Tensor::vector(x)));
      weights.emplace_back(ad::Shape{rows}, 1.0);
    }
    const double got = tape.forward(fuzzy::focal_log_product(columns, weights, 0.0)).item();
    worst = std::max(worst, std::abs(got - expect));
  }
  return {worst < 1e-12, "max |focal(gamma=0) + sum log x| = " + fmt("%.1e", worst) + " over 50 matrices"};
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(4);
  const std::size_t d = 3;
  ground::GroundedPredicate cat({"Cat", 1}, 6, d), near({"Near", 2}, 6, 2 * d);
  cat.params.randomize(rng, 0.7);
  near.params.randomize(rng, 0.7);
  const ad::Tensor objs = random_matrix(rng, 3, d);
  ground::GroundingEnvironment env;
  env.add_domain("obj", objs);
  env.set_default_domain("obj");
  env.add_constant("A", {"obj", 0});
  env.add_constant("B", {"obj", 1});
  env.add_constant("C", {"obj", 2});
  env.add_predicate(cat);
  env.add_predicate(near);
  const auto kb = fol::parse_axioms(
      "pred Cat/1 pred Near/2\n"
      "axiom Cat(A) & ~Cat(B) -> Near(A, C)\n"
      "axiom Near(B, C) | ~Near(C, A) | Cat(C)\n");
  const double lambda = 5e-4, gamma = 2.0;
  fuzzy::AggregatorConfig agg;
  agg.gamma = gamma;
  ad::Tape tape;
  const auto loss = ground::compile_theory(tape, kb, env, agg, lambda);
  const double got = tape.forward(loss.total).item();

  auto row = [&](std::size_t i) {
    return std::vector<double>(objs.values().begin() + static_cast<long>(i * d),
                               objs.values().begin() + static_cast<long>((i + 1) * d));
  };
  auto pair = [&](std::size_t i, std::size_t j) {
    auto v = row(i);
    auto w = row(j);
    v.insert(v.end(), w.begin(), w.end());
    return v;
  };
  const double cat_a = ntn(cat.params, row(0)), cat_b = ntn(cat.params, row(1)), cat_c = ntn(cat.params, row(2));
  const double near_ac = ntn(near.params, pair(0, 2)), near_bc = ntn(near.params, pair(1, 2)),
               near_ca = ntn(near.params, pair(2, 0));
  const double body1 = std::max(0.0, cat_a + (1.0 - cat_b) - 1.0);
  const double ax1 = std::min(1.0, 1.0 - body1 + near_ac);
  const double ax2 = std::min(1.0, std::min(1.0, near_bc + (1.0 - near_ca)) + cat_c);
  auto term = [&](double x) { return -std::pow(1.0 - x, gamma) * std::log(std::max(x, 1e-7)); };
  double sq = 0.0;
  for (auto* gp : {&cat, &near})
    for (auto* p : gp->params.all())
      for (double v : p->value.values()) sq += v * v;
  const double expect = term(ax1) + term(ax2) + lambda * sq;
  const double diff = std::abs(got - expect);
  return {diff < 1e-10, "compiled " + fmt("%.15g", got) + " vs oracle " + fmt("%.15g", expect) + " (|diff| " +
                            fmt("%.1e", diff) + ")"};
}

Outcome mutual_exclusion_count() {
  std::string detail;
  bool ok = true;
  for (std::size_t k : {2u, 5u, 20u}) {
    std::vector<std::string> classes;
    for (std::size_t i = 0; i < k; ++i) classes.push_back("C" + std::to_string(i));
    const auto n = det::build_prior_theory(classes, nullptr, true).axioms.size();
    ok = ok && n == k * (k - 1) / 2;
    detail += (detail.empty() ? "" : ", ") + std::string("K=") + std::to_string(k) + " -> " + std::to_string(n);
  }
  return {ok, detail};
}

Outcome class_weight_formulas() {
  double worst = 0.0;
  for (double beta : {0.9, 0.999})
    for (double p : {0.0, 0.05, 0.25, 1.0}) {
      const auto w = fuzzy::class_weights(p, 128, beta);
      const double pos = 128.0 * 0.5 * p, neg = 128.0 * 0.5 + 128.0 * 0.5 * (1.0 - p);
      auto alpha = [&](double n) { return n == 0.0 ? 0.0 : (1.0 - beta) / (1.0 - std::pow(beta, n)); };
      worst = std::max({worst, std::abs(w.pos_count - pos), std::abs(w.neg_count - neg),
                        std::abs(w.alpha_pos - alpha(pos)), std::abs(w.alpha_neg - alpha(neg))});
    }
  const bool unit = fuzzy::class_weights(1.0 / 64.0, 128, 0.999).alpha_pos == 1.0 &&
                    fuzzy::class_weights(1.0 / 64.0, 128, 0.9).alpha_pos == 1.0;
  return {worst < 1e-12 && unit,
          "max deviation " + fmt("%.1e", worst) + "; alpha_pos(pos=1) == 1: " + (unit ? "yes" : "no")};
}

fs::path separable_dataset() {
  const fs::path data = work / "separable.data";
  if (!fs::exists(data)) {
    SyntheticSpec spec;
    spec.classes = 4;
    spec.dim = 16;
    spec.images = 200;
    spec.separation = 10.0;
    save_dataset(data, generate_synthetic(spec, 7));
    std::string classes;
    for (const auto& c : spec.class_names()) classes += c + "\n";
    write_file(fs::path(data.string() + ".classes"), classes);
  }
  return data;
}

Outcome training_convergence() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = run_desk_preset("plain");
  cfg.seed = 7;
  cfg.data = separable_dataset();
  const Experiment ex = prepare_experiment(cfg);
  Model model = initial_model(ex);
  Trainer trainer(ex, model);
  trainer.run();
  const double train_secs = seconds_since(t0);
  const auto sat = expl_satisfaction(model, ex.data, false);
  const auto report = evaluate(model, ex.data);
  double lowest = 1.0;
  std::string worst;
  for (const auto& [c, v] : sat)
    if (v < lowest) {
      lowest = v;
      worst = c;
    }
  const double secs = seconds_since(t0);
  return {lowest >= 0.95 && report.map >= 0.90 && secs < 300.0,
          "min clause truth " + fmt("%.4f", lowest) + " (" + worst + "), mAP " + fmt("%.4f", report.map) +
              ", train " + fmt("%.1f", train_secs) + " s, total " + fmt("%.1f", secs) + " s"};
}

Outcome axiom_effect() {
  SyntheticSpec spec;
  spec.dim = 16;
  spec.parts = true;
  spec.wholes = 2;
  spec.parts_per_whole = 2;
  spec.images = 60;
  spec.objects_per_image = 2;
  spec.proposals_per_object = 4;
  spec.bg_proposals = 16;
  spec.separation = 6.0;
  const fs::path data = work / "parts.data";
  save_dataset(data, generate_synthetic(spec, 11));
  std::string onto;
  for (const auto& [w, parts] : spec.ontology().wholes) {
    onto += w + ":";
    for (std::size_t i = 0; i < parts.size(); ++i) onto += (i ? ", " : " ") + parts[i];
    onto += "\n";
  }
  write_file(fs::path(data.string() + ".ontology"), onto);

  auto configure = [&](bool prior) {
    ExperimentConfig cfg = run_desk_preset("plain");
    cfg.seed = 7;
    cfg.epochs = 30;
    cfg.lr_drop_epoch = 25;
    cfg.batch = {16, 16};
    cfg.data = data;
    cfg.ontology = data.string() + ".ontology";
    cfg.prior = prior;
    return cfg;
  };
  const Experiment with = prepare_experiment(configure(true));
  const Experiment without = prepare_experiment(configure(false));
  Model m_with = initial_model(with), m_without = initial_model(without);
  Trainer(with, m_with).run();
  Trainer(without, m_without).run();

  auto mean = [](const std::map<std::string, double>& m) {
    double s = 0.0;
    for (const auto& [_, v] : m) s += v;
    return m.empty() ? 0.0 : s / static_cast<double>(m.size());
  };
  const auto s_with = axiom_satisfaction(m_with, with.data, with.prior);
  const auto s_without = axiom_satisfaction(m_without, with.data, with.prior);
  const double a = mean(s_with), b = mean(s_without);
  double lowest = 1.0;
  std::size_t higher = 0;
  for (const auto& [name, v] : s_with) {
    lowest = std::min(lowest, v);
    higher += v > s_without.at(name);
  }
  return {a >= 0.90 && a > b, "mean T_prior satisfaction with prior " + fmt("%.4f", a) + ", without " +
                                  fmt("%.4f", b) + " (" + std::to_string(s_with.size()) + " axioms, weakest " +
                                  fmt("%.4f", lowest) + ", higher with prior on " + std::to_string(higher) + ")"};
}

Outcome metric_correctness() {
  std::string detail;
  bool ok = true;
  auto check = [&](const std::string& name, double got, double want) {
    ok = ok && got == want;
    detail += (detail.empty() ? "" : ", ") + name + " " + fmt("%.6g", got) + (got == want ? "" : " (want " + fmt("%.6g", want) + ")");
  };
  const det::BoundingBox g1{0, 0, 100, 100}, g2{200, 200, 300, 300};
  // PR points (0.5, 1) and (1, 0.5).
  const std::vector<double> r{0.5, 1.0}, p{1.0, 0.5};
  check("PR{(.5,1),(1,.5)}", all_point_ap(r, p), 0.75);
  check("ranked TP,FP,FP,TP",
        average_precision({{"i", g1, "c", 0.9}, {"i", {500, 500, 510, 510}, "c", 0.8},
                           {"i", {600, 600, 610, 610}, "c", 0.7}, {"i", g2, "c", 0.6}},
                          {{"i", g1}, {"i", g2}}),
        0.75);
  check("GT+duplicate", average_precision({{"i", g1, "c", 0.9}, {"i", g1, "c", 0.8}}, {{"i", g1}}), 1.0);
  check("IoU 0.49", average_precision({{"i", {0, 0, 49, 100}, "c", 0.9}}, {{"i", g1}}), 0.0);
  check("no detections", average_precision({}, {{"i", g1}}), 0.0);
  return {ok, detail};
}

Outcome determinism() {
  const fs::path data = separable_dataset();
  auto cfg = run_desk_preset("bg_alpha");
  cfg.seed = 5;
  cfg.epochs = 3;
  cfg.lr_drop_epoch = 2;
  cfg.data = data;
  std::vector<std::string> ckpt, metrics;
  for (int i = 0; i < 2; ++i) {
    cfg.checkpoint = work / ("det" + std::to_string(i) + ".ckpt");
    cfg.metrics = work / ("det" + std::to_string(i) + ".metrics");
    const fs::path cfg_path = work / ("det" + std::to_string(i) + ".cfg");
    write_file(cfg_path, format_experiment_config(cfg));
    if (run(quote(cli) + " train --config " + quote(cfg_path)) != 0) return {false, "train run " + std::to_string(i) + " failed"};
    ckpt.push_back(read_file(cfg.checkpoint));
    metrics.push_back(read_file(cfg.metrics));
  }
  const bool same = ckpt[0] == ckpt[1] && metrics[0] == metrics[1];
  return {same, std::string("checkpoints ") + (ckpt[0] == ckpt[1] ? "identical" : "differ") + " (" +
                    std::to_string(ckpt[0].size()) + " bytes), metrics logs " +
                    (metrics[0] == metrics[1] ? "identical" : "differ")};
}

Outcome ablation_presets() {
  const fs::path data = separable_dataset();
  std::map<std::string, std::string> logs;
  std::string detail;
  for (const std::string name : {"plain", "alpha", "bg", "bg_alpha"}) {
    const fs::path cfg = work / (name + ".cfg");
    if (run(quote(cli) + " preset --desk --name " + name + " --data " + quote(data) + " --out " + quote(cfg)) != 0)
      return {false, "preset " + name + " failed"};
    if (run(quote(cli) + " train --config " + quote(cfg)) != 0) return {false, "train " + name + " failed"};
    const fs::path ckpt = data.string() + "." + name + ".ckpt";
    const fs::path report = work / (name + ".report");
    if (run(quote(cli) + " eval --checkpoint " + quote(ckpt) + " --data " + quote(data) + " --report " +
            quote(report)) != 0)
      return {false, "eval " + name + " failed"};
    logs[name] = read_file(data.string() + "." + name + ".metrics");
    const std::string rep = read_file(report);
    const auto pos = rep.rfind("mAP\t");
    detail += (detail.empty() ? "" : ", ") + name + " mAP " + rep.substr(pos + 4, rep.find('\n', pos) - pos - 4);
  }
  std::set<std::string> distinct;
  for (const auto& [_, l] : logs) distinct.insert(l);
  return {distinct.size() == 4, std::to_string(distinct.size()) + "/4 distinct metrics logs; " + detail};
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: acceptance <ltn-cli> <work-dir> [criterion ...]\n");
    return 2;
  }
  cli = fs::absolute(argv[1]).string();
  work = fs::absolute(argv[2]);
  fs::create_directories(work);
  std::set<int> only;
  for (int i = 3; i < argc; ++i) only.insert(std::atoi(argv[i]));

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"fuzzy algebra", fuzzy_algebra},
      {"cross-entropy equivalence", cross_entropy_equivalence},
      {"oracle equivalence", oracle_equivalence},
      {"mutual-exclusion clause count", mutual_exclusion_count},
      {"class-weight formulas", class_weight_formulas},
      {"training convergence", training_convergence},
      {"axiom effect", axiom_effect},
      {"metric correctness", metric_correctness},
      {"determinism", determinism},
      {"ablation presets", ablation_presets},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.contains(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] criterion %d: %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
