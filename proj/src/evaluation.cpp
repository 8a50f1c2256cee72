#include "ltn/evaluation.hpp"

#include <algorithm>
#include <map>
#include <tuple>

namespace ltn::harness {

namespace {

// Descending score; ties resolved by position so the ranking does not depend on input order.
bool ranks_before(const Detection& a, const Detection& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.image_id, a.box.x1, a.box.y1, a.box.x2, a.box.y2) <
         std::tie(b.image_id, b.box.x1, b.box.y1, b.box.x2, b.box.y2);
}

}  // namespace

double all_point_ap(std::span<const double> recall, std::span<const double> precision) {
  if (recall.size() != precision.size()) throw std::invalid_argument("recall and precision differ in length");
  std::vector<double> r{0.0}, p{0.0};
  r.insert(r.end(), recall.begin(), recall.end());
  p.insert(p.end(), precision.begin(), precision.end());
  r.push_back(1.0);
  p.push_back(0.0);
  for (std::size_t i = p.size() - 1; i-- > 0;) p[i] = std::max(p[i], p[i + 1]);
  double ap = 0.0;
  for (std::size_t i = 1; i < r.size(); ++i)
    if (r[i] != r[i - 1]) ap += (r[i] - r[i - 1]) * p[i];
  return ap;
}

double average_precision(std::vector<Detection> detections, const std::vector<LabelledBox>& ground_truth,
                         double iou_threshold) {
  if (ground_truth.empty()) return 0.0;
  std::stable_sort(detections.begin(), detections.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });

  std::map<std::string, std::vector<std::size_t>> by_image;
  for (std::size_t i = 0; i < ground_truth.size(); ++i) by_image[ground_truth[i].image_id].push_back(i);
  std::vector<bool> matched(ground_truth.size(), false);

  const double n_gt = static_cast<double>(ground_truth.size());
  std::vector<double> recall, precision;
  std::size_t tp = 0, fp = 0;
  for (const auto& d : detections) {
    double best = -1.0;
    std::size_t best_gt = 0;
    if (auto it = by_image.find(d.image_id); it != by_image.end())
      for (auto g : it->second) {
        const double o = det::iou(d.box, ground_truth[g].box);
        if (o > best) {
          best = o;
          best_gt = g;
        }
      }
    if (best >= iou_threshold && !matched[best_gt]) {
      matched[best_gt] = true;
      ++tp;
    } else {
      ++fp;
    }
    recall.push_back(static_cast<double>(tp) / n_gt);
    precision.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
  }
  return all_point_ap(recall, precision);
}

std::vector<Detection> non_max_suppression(std::vector<Detection> dets, double threshold) {
  std::sort(dets.begin(), dets.end(), ranks_before);
  if (threshold >= 1.0) return dets;
  std::vector<Detection> kept;
  for (auto& d : dets) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const Detection& k) {
      return k.image_id == d.image_id && k.cls == d.cls && det::iou(k.box, d.box) > threshold;
    });
    if (!suppressed) kept.push_back(std::move(d));
  }
  return kept;
}

std::vector<Detection> score_proposals(Model& model, const Dataset& ds) {
  if (ds.dim != model.dim())
    throw ground::GroundingError("dimension mismatch: checkpoint expects embeddings of size " +
                                 std::to_string(model.dim()) + ", dataset has " + std::to_string(ds.dim));
  std::vector<Detection> out;
  for (const auto& im : ds.images) {
    if (im.proposals.empty()) continue;
    const det::Batch batch = whole_image_batch(im);
    ad::Tape tape;
    ground::GroundingEnvironment env;
    bind_batch(env, batch, model);
    ground::Grounder gr(tape, env);
    std::vector<ad::Var> truths;
    for (const auto& c : model.classes()) truths.push_back(gr.product_truths(c, {"obj"}));
    tape.forward();
    for (std::size_t k = 0; k < truths.size(); ++k) {
      const auto& t = tape.value(truths[k]);
      for (std::size_t i = 0; i < im.proposals.size(); ++i)
        out.push_back({im.id, im.proposals[i].box, model.classes()[k], t[i]});
    }
  }
  return out;
}

EvalReport evaluate(Model& model, const Dataset& ds, const EvalOptions& opt) {
  const auto scored = score_proposals(model, ds);
  std::map<std::string, std::vector<Detection>> per_class;
  for (const auto& d : scored) per_class[d.cls].push_back(d);

  EvalReport report;
  double sum = 0.0;
  std::size_t with_gt = 0;
  for (const auto& c : model.classes()) {
    std::vector<LabelledBox> gts;
    for (const auto& im : ds.images)
      for (const auto& g : im.objects)
        if (g.label == c) gts.push_back({im.id, g.box});
    auto dets = non_max_suppression(std::move(per_class[c]), opt.nms);
    ClassReport r{c, average_precision(dets, gts, opt.iou), gts.size(), dets.size()};
    if (r.n_gt > 0) {
      sum += r.ap;
      ++with_gt;
    }
    report.classes.push_back(r);
  }
  report.map = with_gt ? sum / static_cast<double>(with_gt) : 0.0;
  return report;
}

EvalReport evaluate_checkpoint(const std::filesystem::path& checkpoint, const std::filesystem::path& data,
                               const EvalOptions& opt) {
  Model model = Model::from_checkpoint(ad::load_checkpoint(checkpoint));
  const Dataset ds = load_dataset(data);
  return evaluate(model, ds, opt);
}

std::string format_report(const EvalReport& r) {
  std::string out;
  for (const auto& c : r.classes)
    out += c.cls + "\t" + format_double(c.ap) + "\t" + std::to_string(c.n_gt) + "\t" + std::to_string(c.n_det) + "\n";
  out += "mAP\t" + format_double(r.map) + "\n";
  return out;
}

}  // namespace ltn::harness
