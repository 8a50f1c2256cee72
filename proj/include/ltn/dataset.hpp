#pragma once

// Proposal-embedding datasets: text ingestion/serialization and a seeded
// synthetic generator.
//
// Record format, one per line:
//   @image <id> <W> <H>
//   @gt <id> <label> <x1,y1,x2,y2>
//   <id>\t<x1,y1,x2,y2>\t<label>\t<v1,...,vd>
// `#` starts a comment line. An image must be declared before its records.

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltn/detection.hpp"

namespace ltn::harness {

class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, int line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct GroundTruth {
  det::BoundingBox box;
  std::string label;
};

struct Image {
  std::string id;
  det::ImageExtent extent;
  std::vector<det::ProposalEmbedding> proposals;
  std::vector<GroundTruth> objects;
};

struct Dataset {
  std::vector<Image> images;  // declaration order
  std::size_t dim = 0;

  /// Foreground labels in order of first appearance (proposals, then ground truth).
  std::vector<std::string> labels() const;
  std::size_t proposal_count() const;
};

Dataset parse_dataset(const std::string& text);
std::string format_dataset(const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);
void save_dataset(const std::filesystem::path& path, const Dataset& ds);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view s);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

/// Flat `key = value` text with `#` comments.
struct KeyValues {
  std::map<std::string, std::pair<std::string, int>> entries;  // key -> (value, line)

  /// Throws FormatError naming the first key not in `allowed`.
  void reject_unknown(const std::vector<std::string>& allowed) const;
  bool has(const std::string& key) const { return entries.contains(key); }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
};

KeyValues parse_key_values(const std::string& text);

struct SyntheticSpec {
  std::size_t classes = 4;            // flat layout only
  std::size_t dim = 16;
  double separation = 10.0;           // distance between class means, in units of sigma
  double sigma = 1.0;                 // per-class isotropic spread
  double bg_scale = 1.0;              // background spread relative to sigma
  std::size_t images = 200;
  std::size_t objects_per_image = 2;  // wholes per image in the part layout
  std::size_t proposals_per_object = 8;
  std::size_t bg_proposals = 48;
  double width = 640.0;
  double height = 480.0;
  double jitter = 0.04;               // proposal corner jitter, fraction of object size
  bool parts = false;                 // part layout: wholes with nested part boxes
  std::size_t wholes = 2;             // part layout: number of whole classes
  std::size_t parts_per_whole = 2;

  /// Class names: C0..C{K-1}, or W<i> followed by W<i>P<j> per whole in the part layout.
  std::vector<std::string> class_names() const;
  /// Part layout only: `W<i>: W<i>P0, ...` lines.
  det::PartOntology ontology() const;
  void validate() const;
};

SyntheticSpec parse_synthetic_spec(const std::string& text);

/// Class means at separation*sigma/sqrt(2) along distinct axes; background
/// embeddings centred at the origin. Deterministic per seed.
Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// Independent 64-bit seed for a (base, a, b) triple.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0);

}  // namespace ltn::harness
