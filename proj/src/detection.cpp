#include "ltn/detection.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

namespace ltn::det {

namespace {

void require_valid(const BoundingBox& b) {
  if (!b.valid() || !std::isfinite(b.x1) || !std::isfinite(b.y1) || !std::isfinite(b.x2) || !std::isfinite(b.y2))
    throw DetectionError("invalid box (" + std::to_string(b.x1) + "," + std::to_string(b.y1) + "," +
                         std::to_string(b.x2) + "," + std::to_string(b.y2) + ")");
}

std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto a = s.find_first_not_of(ws);
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(ws);
  return std::string(s.substr(a, b - a + 1));
}

std::string strip_comment(const std::string& line) {
  const auto h = line.find('#');
  return trim(h == std::string::npos ? line : line.substr(0, h));
}

fol::Term var(const char* n) { return fol::var(n); }

fol::FormulaPtr any_of(const std::vector<std::string>& classes, const char* v) {
  std::vector<fol::FormulaPtr> atoms;
  for (const auto& c : classes) atoms.push_back(fol::atom({c, 1}, {var(v)}));
  return fol::disj_all(atoms);
}

}  // namespace

double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double h = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  return w > 0.0 && h > 0.0 ? w * h : 0.0;
}

double containment_ratio(const BoundingBox& m, const BoundingBox& l) {
  require_valid(m);
  require_valid(l);
  return std::clamp(intersection_area(m, l) / m.area(), 0.0, 1.0);
}

double iou(const BoundingBox& a, const BoundingBox& b) {
  require_valid(a);
  require_valid(b);
  const double inter = intersection_area(a, b);
  return std::clamp(inter / (a.area() + b.area() - inter), 0.0, 1.0);
}

std::vector<double> ground_object(const ProposalEmbedding& p) { return p.z; }

std::vector<double> ground_pair(const ProposalEmbedding& m, const ProposalEmbedding& l, const ImageExtent& extent) {
  if (m.z.size() != l.z.size())
    throw DetectionError("dimension mismatch: embeddings of size " + std::to_string(m.z.size()) + " and " +
                         std::to_string(l.z.size()));
  if (!(extent.width > 0.0) || !(extent.height > 0.0)) throw DetectionError("image extent must be positive");
  std::vector<double> out;
  out.reserve(pair_dim(m.z.size()));
  auto push_box = [&](const BoundingBox& b) {
    out.push_back(b.x1 / extent.width);
    out.push_back(b.y1 / extent.height);
    out.push_back(b.x2 / extent.width);
    out.push_back(b.y2 / extent.height);
  };
  out.insert(out.end(), m.z.begin(), m.z.end());
  push_box(m.box);
  out.insert(out.end(), l.z.begin(), l.z.end());
  push_box(l.box);
  out.push_back(containment_ratio(m.box, l.box));
  return out;
}

Batch make_batch(std::span<const ProposalEmbedding> proposals, const ImageExtent& extent, const BatchPolicy& policy,
                 std::uint64_t seed, const std::string& image_id) {
  if (policy.fg == 0) throw DetectionError("batch policy needs at least one foreground slot");
  std::vector<std::size_t> fg, bg;
  for (std::size_t i = 0; i < proposals.size(); ++i) (proposals[i].is_background() ? bg : fg).push_back(i);
  if (fg.empty()) throw NoForegroundError("image '" + image_id + "' has no foreground proposals");

  std::mt19937_64 rng(seed);
  std::shuffle(fg.begin(), fg.end(), rng);
  std::shuffle(bg.begin(), bg.end(), rng);

  std::size_t nf = std::min(policy.fg, fg.size());
  std::size_t nb = std::min(policy.bg, bg.size());
  if (nf < policy.fg) {
    const auto keep = static_cast<std::size_t>(std::llround(static_cast<double>(nf * policy.bg) / policy.fg));
    nb = std::min(nb, keep);
  }
  if (nb < policy.bg && policy.bg > 0) {
    const auto keep = static_cast<std::size_t>(std::llround(static_cast<double>(nb * policy.fg) / policy.bg));
    nf = std::min(nf, std::max<std::size_t>(1, keep));
  }

  std::vector<std::size_t> picked(fg.begin(), fg.begin() + static_cast<long>(nf));
  picked.insert(picked.end(), bg.begin(), bg.begin() + static_cast<long>(nb));
  std::sort(picked.begin(), picked.end());

  Batch b;
  b.image_id = image_id;
  b.extent = extent;
  b.fg_count = nf;
  for (auto i : picked) {
    b.proposals.push_back(proposals[i]);
    b.source_index.push_back(i);
  }
  return b;
}

std::vector<ExplClause> build_expl_theory(const Batch& batch, const std::vector<std::string>& classes,
                                          bool include_bg) {
  if (batch.proposals.empty()) throw DetectionError("empty batch");
  std::vector<std::string> preds = classes;
  if (include_bg) preds.push_back(kBackground);
  for (const auto& p : batch.proposals)
    if (!p.is_background() && std::find(classes.begin(), classes.end(), p.label) == classes.end())
      throw DetectionError("unknown label '" + p.label + "' in image '" + batch.image_id + "'");

  std::vector<ExplClause> out;
  for (const auto& c : preds) {
    ExplClause clause{c, {}, {}};
    for (std::size_t i = 0; i < batch.proposals.size(); ++i)
      (batch.proposals[i].label == c ? clause.positives : clause.negatives).push_back(i);
    out.push_back(std::move(clause));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::string> PartOntology::whole_classes() const {
  std::vector<std::string> out;
  for (const auto& [w, _] : wholes) out.push_back(w);
  return out;
}

std::vector<std::string> PartOntology::part_classes() const {
  std::vector<std::string> out;
  for (const auto& [_, parts] : wholes)
    for (const auto& p : parts)
      if (std::find(out.begin(), out.end(), p) == out.end()) out.push_back(p);
  return out;
}

bool PartOntology::is_whole(const std::string& c) const {
  return std::any_of(wholes.begin(), wholes.end(), [&](const auto& w) { return w.first == c; });
}

bool PartOntology::is_part(const std::string& c) const {
  for (const auto& [_, parts] : wholes)
    if (std::find(parts.begin(), parts.end(), c) != parts.end()) return true;
  return false;
}

bool PartOntology::has_part(const std::string& whole, const std::string& part) const {
  for (const auto& [w, parts] : wholes)
    if (w == whole) return std::find(parts.begin(), parts.end(), part) != parts.end();
  return false;
}

void PartOntology::validate(const std::vector<std::string>& classes) const {
  auto declared = [&](const std::string& c) { return std::find(classes.begin(), classes.end(), c) != classes.end(); };
  std::set<std::string> seen;
  for (const auto& [w, parts] : wholes) {
    if (!declared(w)) throw DetectionError("ontology references undeclared class '" + w + "'");
    if (!seen.insert(w).second) throw DetectionError("whole '" + w + "' listed twice in ontology");
    if (parts.empty()) throw DetectionError("whole '" + w + "' has no parts");
    for (const auto& p : parts) {
      if (!declared(p)) throw DetectionError("ontology references undeclared class '" + p + "'");
      if (is_whole(p)) throw DetectionError("class '" + p + "' is both a whole and a part");
    }
  }
}

PartOntology parse_ontology(const std::string& text) {
  PartOntology out;
  std::istringstream in(text);
  std::string raw;
  for (int line = 1; std::getline(in, raw); ++line) {
    const std::string s = strip_comment(raw);
    if (s.empty()) continue;
    const auto colon = s.find(':');
    if (colon == std::string::npos)
      throw DetectionError("ontology line " + std::to_string(line) + ": expected 'whole: part, ...'");
    std::string whole = trim(std::string_view(s).substr(0, colon));
    if (whole.empty()) throw DetectionError("ontology line " + std::to_string(line) + ": missing whole class");
    std::vector<std::string> parts;
    std::istringstream rest(s.substr(colon + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
      item = trim(item);
      if (item.empty()) throw DetectionError("ontology line " + std::to_string(line) + ": empty part name");
      parts.push_back(item);
    }
    out.wholes.emplace_back(std::move(whole), std::move(parts));
  }
  return out;
}

std::vector<std::string> parse_class_list(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string raw;
  for (int line = 1; std::getline(in, raw); ++line) {
    const std::string s = strip_comment(raw);
    if (s.empty()) continue;
    if (s.find_first_of(" \t,") != std::string::npos)
      throw DetectionError("class list line " + std::to_string(line) + ": class names cannot contain spaces or commas");
    if (std::find(out.begin(), out.end(), s) != out.end())
      throw DetectionError("class list line " + std::to_string(line) + ": duplicate class '" + s + "'");
    out.push_back(s);
  }
  return out;
}

fol::KnowledgeBase build_prior_theory(const std::vector<std::string>& classes, const PartOntology* ontology,
                                      bool mutual_exclusion) {
  std::set<std::string> unique(classes.begin(), classes.end());
  if (unique.size() != classes.size()) throw DetectionError("class names must be unique");

  fol::KnowledgeBase kb;
  for (const auto& c : classes) kb.predicates.push_back({c, 1});

  if (mutual_exclusion)
    for (std::size_t i = 0; i < classes.size(); ++i)
      for (std::size_t j = i + 1; j < classes.size(); ++j)
        kb.axioms.push_back({"excl_" + classes[i] + "_" + classes[j],
                             fol::forall({"x"}, fol::implies(fol::atom({classes[i], 1}, {var("x")}),
                                                             fol::negate(fol::atom({classes[j], 1}, {var("x")}))))});

  if (ontology != nullptr && !ontology->empty()) {
    ontology->validate(classes);
    kb.predicates.push_back({kPartOf, 2});
    const auto wholes = ontology->whole_classes();
    const auto parts = ontology->part_classes();
    auto body = [&](const std::string& c) {
      return fol::conj(fol::atom({c, 1}, {var("x")}), fol::atom({kPartOf, 2}, {var("y"), var("x")}));
    };
    for (const auto& [w, ps] : ontology->wholes)
      kb.axioms.push_back({"parts_" + w, fol::forall({"x", "y"}, fol::implies(body(w), any_of(ps, "y")))});
    for (const auto& w : wholes)
      kb.axioms.push_back(
          {"no_whole_in_" + w, fol::forall({"x", "y"}, fol::implies(body(w), fol::negate(any_of(wholes, "y"))))});
    for (const auto& p : parts)
      kb.axioms.push_back(
          {"no_part_in_" + p, fol::forall({"x", "y"}, fol::implies(body(p), fol::negate(any_of(parts, "y"))))});
  }
  return kb;
}

std::vector<PartOfExample> build_partof_examples(const Batch& batch, const PartOntology& ontology,
                                                 const PartOfThresholds& th) {
  std::vector<PartOfExample> out;
  const auto& ps = batch.proposals;
  for (std::size_t y = 0; y < ps.size(); ++y)
    for (std::size_t x = 0; x < ps.size(); ++x) {
      if (x == y) continue;
      const bool consistent = ontology.has_part(ps[x].label, ps[y].label);
      const double ir = containment_ratio(ps[y].box, ps[x].box);
      if (consistent && ir >= th.positive)
        out.push_back({y, x, true});
      else if (!consistent || ir <= th.negative)
        out.push_back({y, x, false});
    }
  return out;
}

}  // namespace ltn::det
