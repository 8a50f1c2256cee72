#include <algorithm>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "ltn/evaluation.hpp"
#include "ltn/experiment.hpp"

using namespace ltn;
using namespace ltn::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ltn_test_harness";
  fs::create_directories(dir);
  return dir / name;
}

fs::path small_dataset() {
  const fs::path p = scratch("small.data");
  SyntheticSpec spec;
  spec.classes = 3;
  spec.dim = 6;
  spec.images = 10;
  spec.proposals_per_object = 3;
  spec.bg_proposals = 8;
  save_dataset(p, generate_synthetic(spec, 21));
  return p;
}

ExperimentConfig small_config(const std::string& variant) {
  ExperimentConfig c = run_desk_preset(variant);
  c.data = small_dataset();
  c.epochs = 10;
  c.lr_drop_epoch = 8;
  c.kernels = 3;
  c.batch = {4, 8};
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("presets") {
  CHECK(run_preset("plain").variant == Variant::Plain);
  CHECK(run_preset("bg_alpha").variant == Variant::BgAlpha);
  CHECK(uses_alpha(Variant::BgAlpha));
  CHECK(uses_bg(Variant::BgAlpha));
  CHECK(!uses_alpha(Variant::Bg));
  CHECK_THROWS_AS(run_preset("foo"), ConfigError);
  const auto desk = run_desk_preset("alpha");
  CHECK(desk.epochs == 50);
  CHECK(desk.lr_at(39) == desk.lr);
  CHECK(desk.lr_at(40) == desk.lr_dropped);
  CHECK_NOTHROW(desk.validate());
}

TEST_CASE("config text round trip and validation") {
  ExperimentConfig c = run_preset("bg");
  c.beta = 0.99;
  c.batch = {8, 24};
  c.data = "/data/x.data";
  c.checkpoint = "/out/x.ckpt";
  c.metrics = "/out/x.metrics";
  const auto back = parse_experiment_config(format_experiment_config(c));
  CHECK(format_experiment_config(back) == format_experiment_config(c));
  CHECK(back.variant == Variant::Bg);
  CHECK(back.beta == 0.99);
  CHECK(back.batch.fg == 8);

  CHECK(parse_experiment_config("data = d.data\n", "/cfg").data == fs::path("/cfg/d.data"));
  CHECK_THROWS_AS(parse_experiment_config("learning_rate = 1\n"), FormatError);
  CHECK_THROWS_AS(parse_experiment_config("epochs = 10\nlr_drop_epoch = 10\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("beta = 1\n"), ConfigError);
  CHECK_NOTHROW(parse_experiment_config("epochs = 0\n"));
}

TEST_CASE("zero epochs writes the initial parameters") {
  ExperimentConfig c = small_config("plain");
  c.epochs = 0;
  c.checkpoint = scratch("zero.ckpt");
  c.metrics = scratch("zero.metrics");
  const auto r = train(c);
  CHECK(r.epochs.empty());
  const Experiment ex = prepare_experiment(c);
  Model init = initial_model(ex);
  CHECK(ad::load_checkpoint(c.checkpoint) == init.export_parameters());
  CHECK(read_file(c.metrics) == metrics_header());
}

TEST_CASE("alpha changes weights, not graph structure") {
  const Experiment plain = prepare_experiment(small_config("plain"));
  const Experiment alpha = prepare_experiment(small_config("alpha"));
  Model m1 = initial_model(plain), m2 = initial_model(alpha);
  Trainer t1(plain, m1), t2(alpha, m2);
  const det::Batch batch = whole_image_batch(plain.data.images[0]);

  ad::Tape a, b;
  ground::GroundingEnvironment ea, eb;
  bind_batch(ea, batch, m1);
  bind_batch(eb, batch, m2);
  const auto ga = t1.build_graph(a, ea, batch);
  const auto gb = t2.build_graph(b, eb, batch);
  CHECK(a.size() == b.size());
  REQUIRE(ga.loss.clauses.size() == gb.loss.clauses.size());
  for (std::size_t i = 0; i < ga.loss.clauses.size(); ++i) CHECK(ga.loss.clauses[i].name == gb.loss.clauses[i].name);
  CHECK(a.forward(ga.loss.total).item() != b.forward(gb.loss.total).item());
}

TEST_CASE("bg variant adds the bg clause") {
  const Experiment ex = prepare_experiment(small_config("bg"));
  Model m = initial_model(ex);
  CHECK(m.has_bg());
  Trainer t(ex, m);
  const det::Batch batch = whole_image_batch(ex.data.images[0]);
  ad::Tape tape;
  ground::GroundingEnvironment env;
  bind_batch(env, batch, m);
  const auto g = t.build_graph(tape, env, batch);
  CHECK(std::any_of(g.loss.clauses.begin(), g.loss.clauses.end(),
                    [](const auto& c) { return c.name.find(det::kBackground) != std::string::npos; }));
}

TEST_CASE("training reduces the loss and improves detection") {
  const Experiment ex = prepare_experiment(small_config("plain"));
  Model m = initial_model(ex);
  const double before = evaluate(m, ex.data).map;
  Trainer t(ex, m);
  const auto r = t.run();
  REQUIRE(r.epochs.size() == 10);
  CHECK(r.epochs.back().total < r.epochs.front().total);
  const double after = evaluate(m, ex.data).map;
  CHECK(after > before);
  CHECK(after > 0.9);
}

TEST_CASE("checkpoint reload reproduces scores") {
  const Experiment ex = prepare_experiment(small_config("bg_alpha"));
  Model m = initial_model(ex);
  const fs::path p = scratch("reload.ckpt");
  ad::save_checkpoint(p, m.export_parameters());
  Model back = Model::from_checkpoint(ad::load_checkpoint(p));
  CHECK(back.classes() == m.classes());
  CHECK(back.has_bg());
  const auto s1 = score_proposals(m, ex.data), s2 = score_proposals(back, ex.data);
  REQUIRE(s1.size() == s2.size());
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1[i].score == s2[i].score);

  Dataset wrong = ex.data;
  wrong.dim += 1;
  CHECK_THROWS_AS(score_proposals(m, wrong), ground::GroundingError);
}

TEST_CASE("average precision ignores input order") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<LabelledBox> gts;
  std::vector<Detection> dets;
  for (int i = 0; i < 20; ++i) {
    const double x = 100.0 * i;
    const std::string img = "im" + std::to_string(i % 4);
    gts.push_back({img, {x, 0, x + 50, 50}});
    dets.push_back({img, {x + 5 * u(rng), 0, x + 50, 50}, "c", u(rng)});
    dets.push_back({img, {x + 60, 0, x + 90, 50}, "c", u(rng)});
  }
  const double ap = average_precision(dets, gts);
  CHECK(ap > 0.0);
  CHECK(ap < 1.0);
  for (int k = 0; k < 5; ++k) {
    std::shuffle(dets.begin(), dets.end(), rng);
    CHECK(average_precision(dets, gts) == ap);
  }
  CHECK(all_point_ap(std::vector<double>{}, std::vector<double>{}) == 0.0);
  CHECK_THROWS_AS(all_point_ap(std::vector<double>{0.5}, std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("non-maximum suppression") {
  const det::BoundingBox a{0, 0, 10, 10}, a2{1, 0, 11, 10}, b{50, 50, 60, 60};
  std::vector<Detection> dets{{"i", a2, "c", 0.8}, {"i", a, "c", 0.9}, {"i", b, "c", 0.7},
                              {"j", a2, "c", 0.6}, {"i", a2, "d", 0.5}};
  const auto kept = non_max_suppression(dets, 0.3);
  REQUIRE(kept.size() == 4);
  CHECK(kept[0].score == 0.9);
  CHECK(std::none_of(kept.begin(), kept.end(), [](const Detection& d) { return d.score == 0.8; }));
  std::reverse(dets.begin(), dets.end());
  const auto again = non_max_suppression(dets, 0.3);
  REQUIRE(again.size() == kept.size());
  for (std::size_t i = 0; i < kept.size(); ++i) CHECK(again[i].score == kept[i].score);
  CHECK(non_max_suppression(dets, 1.0).size() == dets.size());
}

TEST_CASE("report format") {
  EvalReport r;
  r.classes.push_back({"C0", 0.5, 2, 7});
  r.map = 0.5;
  CHECK(format_report(r) == "C0\t0.5\t2\t7\nmAP\t0.5\n");
}
