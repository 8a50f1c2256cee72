#pragma once

// Detection-specific groundings: boxes, proposal embeddings, per-image
// batches, and the example (T_expl) and prior-knowledge (T_prior) theories.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ltn/fol.hpp"

namespace ltn::det {

/// Label carried by proposals that match no object.
inline const std::string kBackground = "bg";
/// Name of the binary predicate relating a part (first argument) to its whole.
inline const std::string kPartOf = "partOf";

class DetectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by make_batch when an image has no foreground proposal; callers skip the image.
class NoForegroundError : public DetectionError {
 public:
  using DetectionError::DetectionError;
};

struct BoundingBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double width() const { return x2 - x1; }
  double height() const { return y2 - y1; }
  double area() const { return width() * height(); }
  bool valid() const { return x2 > x1 && y2 > y1; }
  bool operator==(const BoundingBox&) const = default;
};

double intersection_area(const BoundingBox& a, const BoundingBox& b);
/// Area(m ∩ l) / Area(m). Asymmetric.
double containment_ratio(const BoundingBox& m, const BoundingBox& l);
double iou(const BoundingBox& a, const BoundingBox& b);

struct ProposalEmbedding {
  BoundingBox box;
  std::vector<double> z;
  std::string label;

  bool is_background() const { return label == kBackground; }
};

struct ImageExtent {
  double width = 1.0;
  double height = 1.0;
};

/// is-a input: the embedding alone.
std::vector<double> ground_object(const ProposalEmbedding& p);

/// part-of input <z_m, b_m, z_l, b_l, ir(m,l)>, boxes scaled by the image extent.
std::vector<double> ground_pair(const ProposalEmbedding& m, const ProposalEmbedding& l, const ImageExtent& extent);

inline std::size_t pair_dim(std::size_t d) { return 2 * d + 9; }

struct BatchPolicy {
  std::size_t fg = 32;
  std::size_t bg = 96;
  std::size_t size() const { return fg + bg; }
};

struct Batch {
  std::string image_id;
  ImageExtent extent;
  std::vector<ProposalEmbedding> proposals;
  std::vector<std::size_t> source_index;  // position of each proposal in the image's list
  std::size_t fg_count = 0;
};

/// Seeded selection of up to policy.fg foreground and policy.bg background
/// proposals. When one side is short the other is cut back to keep the ratio.
Batch make_batch(std::span<const ProposalEmbedding> proposals, const ImageExtent& extent, const BatchPolicy& policy,
                 std::uint64_t seed, const std::string& image_id = "");

/// One-vs-all clause of a single predicate: proposals (batch indices) used
/// as positive and negated literals.
struct ExplClause {
  std::string predicate;
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

std::vector<ExplClause> build_expl_theory(const Batch& batch, const std::vector<std::string>& classes, bool include_bg);

struct PartOntology {
  std::vector<std::pair<std::string, std::vector<std::string>>> wholes;  // file order

  bool empty() const { return wholes.empty(); }
  std::vector<std::string> whole_classes() const;
  std::vector<std::string> part_classes() const;
  bool is_whole(const std::string& c) const;
  bool is_part(const std::string& c) const;
  /// True when `part` is listed under `whole`.
  bool has_part(const std::string& whole, const std::string& part) const;
  /// Throws DetectionError for classes missing from `classes` or used as both whole and part.
  void validate(const std::vector<std::string>& classes) const;
};

/// `whole: part1, part2` per line, `#` comments.
PartOntology parse_ontology(const std::string& text);
/// One class per line, `#` comments and blank lines ignored.
std::vector<std::string> parse_class_list(const std::string& text);

/// Pairwise exclusion over every unordered class pair and, with an ontology,
/// per-whole mereology plus whole-in-whole and part-in-part exclusions.
fol::KnowledgeBase build_prior_theory(const std::vector<std::string>& classes, const PartOntology* ontology,
                                      bool mutual_exclusion);

struct PartOfThresholds {
  double positive = 0.7;  // min containment of a consistent pair
  double negative = 0.1;  // max containment of an unlabelled negative
};

struct PartOfExample {
  std::size_t part = 0;   // batch index of y
  std::size_t whole = 0;  // batch index of x
  bool positive = false;
};

/// Ordered pairs (y, x), y != x. Consistent labels with ir(y, x) >= positive
/// are positives; inconsistent labels or ir(y, x) <= negative are negatives.
std::vector<PartOfExample> build_partof_examples(const Batch& batch, const PartOntology& ontology,
                                                 const PartOfThresholds& th);

}  // namespace ltn::det
