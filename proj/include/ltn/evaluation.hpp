#pragma once

// Detection scoring and PASCAL-style all-point average precision.

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ltn/dataset.hpp"
#include "ltn/experiment.hpp"

namespace ltn::harness {

struct Detection {
  std::string image_id;
  det::BoundingBox box;
  std::string cls;
  double score = 0.0;
};

struct LabelledBox {
  std::string image_id;
  det::BoundingBox box;
};

/// Area under the precision envelope: sum over recall steps of the maximum
/// precision at any recall >= the step. `recall` is non-decreasing.
double all_point_ap(std::span<const double> recall, std::span<const double> precision);

/// Detections of one class, ranked by descending score (stable), greedily
/// matched to unmatched ground truth of the same image at IoU >= threshold.
/// Duplicates of a matched object are false positives. 0 when there is no
/// ground truth.
double average_precision(std::vector<Detection> detections, const std::vector<LabelledBox>& ground_truth,
                         double iou_threshold = 0.5);

/// Greedy per-class suppression; keeps the highest-scoring box of any group
/// overlapping above `threshold`. A threshold >= 1 keeps everything.
std::vector<Detection> non_max_suppression(std::vector<Detection> dets, double threshold);

struct ClassReport {
  std::string cls;
  double ap = 0.0;
  std::size_t n_gt = 0;
  std::size_t n_det = 0;
};

struct EvalReport {
  std::vector<ClassReport> classes;
  double map = 0.0;  // mean AP over classes with ground truth
};

struct EvalOptions {
  double iou = 0.5;
  double nms = 0.3;
};

/// Scores every proposal with every class predicate (bg and partOf excluded).
std::vector<Detection> score_proposals(Model& model, const Dataset& ds);

EvalReport evaluate(Model& model, const Dataset& ds, const EvalOptions& opt = {});
EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                               const EvalOptions& opt = {});

std::string format_report(const EvalReport& r);

}  // namespace ltn::harness
