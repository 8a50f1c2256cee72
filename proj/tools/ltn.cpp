// ltn: synthetic data generation, training, evaluation and presets.
//
// Exit status: 0 success, 1 validation error, 2 runtime failure.

#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "ltn/checkpoint.hpp"
#include "ltn/evaluation.hpp"
#include "ltn/experiment.hpp"

namespace {

using namespace ltn;
using namespace ltn::harness;

int cmd_gen(const std::string& spec_path, std::uint64_t seed, const std::string& out) {
  const SyntheticSpec spec = parse_synthetic_spec(read_file(spec_path));
  const Dataset ds = generate_synthetic(spec, seed);
  save_dataset(out, ds);
  std::string classes;
  for (const auto& c : spec.class_names()) classes += c + "\n";
  write_file(out + ".classes", classes);
  if (spec.parts) {
    std::string onto;
    for (const auto& [w, parts] : spec.ontology().wholes) {
      onto += w + ":";
      for (std::size_t i = 0; i < parts.size(); ++i) onto += (i ? ", " : " ") + parts[i];
      onto += "\n";
    }
    write_file(out + ".ontology", onto);
  }
  std::printf("wrote %zu images, %zu proposals to %s\n", ds.images.size(), ds.proposal_count(), out.c_str());
  return 0;
}

int cmd_train(const std::string& config_path) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const TrainResult r = train(cfg);
  if (!r.epochs.empty()) {
    const auto& last = r.epochs.back();
    std::printf("epoch %zu: expl %.6g prior %.6g l2 %.6g total %.6g\n", last.epoch, last.expl, last.prior, last.l2,
                last.total);
  }
  std::printf("skipped %zu image batches without foreground\n", r.skipped_images);
  std::printf("checkpoint: %s\nmetrics: %s\n", cfg.checkpoint.string().c_str(), cfg.metrics.string().c_str());
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data, double iou_threshold, double nms,
             const std::string& report_path) {
  const EvalReport r = evaluate_checkpoint(checkpoint, data, {iou_threshold, nms});
  const std::string text = format_report(r);
  std::fputs(text.c_str(), stdout);
  if (!report_path.empty()) write_file(report_path, text);
  return 0;
}

int cmd_preset(const std::string& name, const std::string& out, bool desk, const std::string& data) {
  ExperimentConfig cfg = desk ? run_desk_preset(name) : run_preset(name);
  if (!data.empty()) {
    cfg.data = data;
    cfg.checkpoint = data + "." + name + ".ckpt";
    cfg.metrics = data + "." + name + ".metrics";
  }
  write_file(out, format_experiment_config(cfg));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Logic tensor network detection harness"};
  app.require_subcommand(1);

  std::string spec_path, out, config_path, checkpoint, data, report, name;
  std::uint64_t seed = 0;
  double iou_threshold = 0.5, nms = 0.3;
  bool desk = false;

  auto* gen = app.add_subcommand("gen", "generate a synthetic proposal dataset");
  gen->add_option("--spec", spec_path, "synthetic spec (key = value)")->required();
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--out", out, "dataset file; <out>.classes and <out>.ontology are written alongside")->required();

  auto* tr = app.add_subcommand("train", "train predicates on a dataset");
  tr->add_option("--config", config_path, "experiment config (key = value)")->required();

  auto* ev = app.add_subcommand("eval", "score a dataset and report per-class AP and mAP");
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--data", data)->required();
  ev->add_option("--iou", iou_threshold, "match threshold")->check(CLI::Range(0.0, 1.0));
  ev->add_option("--nms", nms, "per-class suppression threshold; 1 disables")->check(CLI::Range(0.0, 1.0));
  ev->add_option("--report", report, "also write the report here");

  auto* pr = app.add_subcommand("preset", "write the config of an ablation variant");
  pr->add_option("--name", name, "plain, alpha, bg or bg_alpha")->required();
  pr->add_option("--out", out)->required();
  pr->add_flag("--desk", desk, "50-epoch desk-scale schedule");
  pr->add_option("--data", data, "dataset path; checkpoint and metrics paths are derived from it");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen(spec_path, seed, out);
    if (*tr) return cmd_train(config_path);
    if (*ev) return cmd_eval(checkpoint, data, iou_threshold, nms, report);
    if (*pr) return cmd_preset(name, out, desk, data);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 1;
  } catch (const fol::ParseError& e) {
    std::cerr << "axiom error: " << e.what() << "\n";
    return 1;
  } catch (const det::DetectionError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const ground::GroundingError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const ad::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
