#include "ltn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace ltn::harness {

namespace {

std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto a = s.find_first_not_of(ws);
  if (a == std::string_view::npos) return {};
  const auto b = s.find_last_not_of(ws);
  return std::string(s.substr(a, b - a + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(sep, start);
    out.emplace_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

std::vector<double> parse_numbers(const std::string& s, int line) {
  std::vector<double> out;
  for (const auto& item : split(s, ',')) {
    try {
      out.push_back(parse_double(trim(item)));
    } catch (const std::invalid_argument& e) {
      throw FormatError(e.what(), line);
    }
  }
  return out;
}

det::BoundingBox parse_box(const std::string& s, int line) {
  auto v = parse_numbers(s, line);
  if (v.size() != 4) throw FormatError("box needs 4 coordinates, got " + std::to_string(v.size()), line);
  det::BoundingBox b{v[0], v[1], v[2], v[3]};
  if (!b.valid()) throw FormatError("box has non-positive area", line);
  return b;
}

std::string format_box(const det::BoundingBox& b) {
  return format_double(b.x1) + "," + format_double(b.y1) + "," + format_double(b.x2) + "," + format_double(b.y2);
}

bool valid_label(const std::string& s) {
  return !s.empty() && s.find_first_of(" \t,#") == std::string::npos;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("cannot format number");
  return std::string(buf, end);
}

double parse_double(std::string_view s) {
  double v = 0.0;
  const char* first = s.data();
  if (!s.empty() && s.front() == '+') ++first;
  auto [end, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size() || s.empty() || !std::isfinite(v))
    throw std::invalid_argument("not a finite number: '" + std::string(s) + "'");
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------

std::vector<std::string> Dataset::labels() const {
  std::vector<std::string> out;
  auto note = [&](const std::string& l) {
    if (l != det::kBackground && std::find(out.begin(), out.end(), l) == out.end()) out.push_back(l);
  };
  for (const auto& im : images)
    for (const auto& p : im.proposals) note(p.label);
  for (const auto& im : images)
    for (const auto& g : im.objects) note(g.label);
  return out;
}

std::size_t Dataset::proposal_count() const {
  std::size_t n = 0;
  for (const auto& im : images) n += im.proposals.size();
  return n;
}

Dataset parse_dataset(const std::string& text) {
  Dataset ds;
  std::map<std::string, std::size_t> index;
  auto image = [&](const std::string& id, int line) -> Image& {
    auto it = index.find(id);
    if (it == index.end()) throw FormatError("record for undeclared image '" + id + "'", line);
    return ds.images[it->second];
  };
  bool have_dim = false;

  std::istringstream in(text);
  std::string raw;
  for (int line = 1; std::getline(in, raw); ++line) {
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    const std::string s = trim(raw);
    if (s.empty() || s.front() == '#') continue;
    if (s.starts_with("@image")) {
      std::istringstream f(s.substr(6));
      std::string id, w, h, extra;
      if (!(f >> id >> w >> h) || (f >> extra)) throw FormatError("expected '@image <id> <W> <H>'", line);
      if (index.contains(id)) throw FormatError("image '" + id + "' declared twice", line);
      Image im;
      im.id = id;
      try {
        im.extent = {parse_double(w), parse_double(h)};
      } catch (const std::invalid_argument& e) {
        throw FormatError(e.what(), line);
      }
      if (!(im.extent.width > 0.0 && im.extent.height > 0.0)) throw FormatError("image extent must be positive", line);
      index[id] = ds.images.size();
      ds.images.push_back(std::move(im));
    } else if (s.starts_with("@gt")) {
      std::istringstream f(s.substr(3));
      std::string id, label, box, extra;
      if (!(f >> id >> label >> box) || (f >> extra)) throw FormatError("expected '@gt <id> <label> <x1,y1,x2,y2>'", line);
      if (!valid_label(label) || label == det::kBackground) throw FormatError("invalid object label '" + label + "'", line);
      image(id, line).objects.push_back({parse_box(box, line), label});
    } else if (s.front() == '@') {
      throw FormatError("unknown directive '" + s.substr(0, s.find_first_of(" \t")) + "'", line);
    } else {
      auto fields = split(raw, '\t');
      if (fields.size() != 4) throw FormatError("expected 4 tab-separated fields, got " + std::to_string(fields.size()), line);
      det::ProposalEmbedding p;
      p.box = parse_box(fields[1], line);
      p.label = trim(fields[2]);
      if (!valid_label(p.label)) throw FormatError("invalid label '" + p.label + "'", line);
      p.z = parse_numbers(fields[3], line);
      if (p.z.empty()) throw FormatError("empty embedding", line);
      if (!have_dim) {
        ds.dim = p.z.size();
        have_dim = true;
      } else if (p.z.size() != ds.dim) {
        throw FormatError("embedding dimension " + std::to_string(p.z.size()) + " differs from " +
                              std::to_string(ds.dim),
                          line);
      }
      image(trim(fields[0]), line).proposals.push_back(std::move(p));
    }
  }
  return ds;
}

std::string format_dataset(const Dataset& ds) {
  std::string out;
  for (const auto& im : ds.images) {
    out += "@image " + im.id + " " + format_double(im.extent.width) + " " + format_double(im.extent.height) + "\n";
    for (const auto& g : im.objects) out += "@gt " + im.id + " " + g.label + " " + format_box(g.box) + "\n";
    for (const auto& p : im.proposals) {
      out += im.id + "\t" + format_box(p.box) + "\t" + p.label + "\t";
      for (std::size_t i = 0; i < p.z.size(); ++i) {
        if (i) out += ',';
        out += format_double(p.z[i]);
      }
      out += '\n';
    }
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& path) { return parse_dataset(read_file(path)); }

void save_dataset(const std::filesystem::path& path, const Dataset& ds) { write_file(path, format_dataset(ds)); }

// ---------------------------------------------------------------------------

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string raw;
  for (int line = 1; std::getline(in, raw); ++line) {
    const auto hash = raw.find('#');
    const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (s.empty()) continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw FormatError("expected 'key = value'", line);
    std::string key = trim(std::string_view(s).substr(0, eq));
    std::string value = trim(std::string_view(s).substr(eq + 1));
    if (key.empty()) throw FormatError("missing key", line);
    if (kv.entries.contains(key)) throw FormatError("key '" + key + "' set twice", line);
    kv.entries[key] = {value, line};
  }
  return kv;
}

void KeyValues::reject_unknown(const std::vector<std::string>& allowed) const {
  for (const auto& [k, v] : entries)
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw FormatError("unknown key '" + k + "'", v.second);
}

std::string KeyValues::get_string(const std::string& key, const std::string& fallback) const {
  auto it = entries.find(key);
  return it == entries.end() ? fallback : it->second.first;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  auto it = entries.find(key);
  if (it == entries.end()) return fallback;
  try {
    return parse_double(it->second.first);
  } catch (const std::invalid_argument& e) {
    throw FormatError(key + ": " + e.what(), it->second.second);
  }
}

std::int64_t KeyValues::get_int(const std::string& key, std::int64_t fallback) const {
  auto it = entries.find(key);
  if (it == entries.end()) return fallback;
  const auto& s = it->second.first;
  std::int64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size() || s.empty())
    throw FormatError(key + ": not an integer: '" + s + "'", it->second.second);
  return v;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  auto it = entries.find(key);
  if (it == entries.end()) return fallback;
  const auto& s = it->second.first;
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw FormatError(key + ": expected true or false, got '" + s + "'", it->second.second);
}

// ---------------------------------------------------------------------------

std::vector<std::string> SyntheticSpec::class_names() const {
  std::vector<std::string> out;
  if (!parts) {
    for (std::size_t c = 0; c < classes; ++c) out.push_back("C" + std::to_string(c));
    return out;
  }
  for (std::size_t w = 0; w < wholes; ++w) out.push_back("W" + std::to_string(w));
  for (std::size_t w = 0; w < wholes; ++w)
    for (std::size_t p = 0; p < parts_per_whole; ++p) out.push_back("W" + std::to_string(w) + "P" + std::to_string(p));
  return out;
}

det::PartOntology SyntheticSpec::ontology() const {
  det::PartOntology o;
  if (!parts) return o;
  for (std::size_t w = 0; w < wholes; ++w) {
    std::vector<std::string> ps;
    for (std::size_t p = 0; p < parts_per_whole; ++p) ps.push_back("W" + std::to_string(w) + "P" + std::to_string(p));
    o.wholes.emplace_back("W" + std::to_string(w), std::move(ps));
  }
  return o;
}

void SyntheticSpec::validate() const {
  const std::size_t k = class_names().size();
  if (k < 2) throw std::invalid_argument("synthetic spec needs at least 2 classes");
  if (dim < 2) throw std::invalid_argument("synthetic spec needs dim >= 2");
  if (k > dim) throw std::invalid_argument("synthetic spec needs dim >= number of classes");
  if (!(separation > 0.0)) throw std::invalid_argument("separation must be > 0");
  if (!(sigma > 0.0) || !(bg_scale > 0.0)) throw std::invalid_argument("sigma and bg_scale must be > 0");
  if (images == 0 || objects_per_image == 0 || proposals_per_object == 0)
    throw std::invalid_argument("images, objects_per_image and proposals_per_object must be > 0");
  if (!(width > 0.0 && height > 0.0)) throw std::invalid_argument("image extent must be positive");
  if (!(jitter >= 0.0 && jitter < 0.2)) throw std::invalid_argument("jitter must lie in [0, 0.2)");
  if (parts && (wholes == 0 || parts_per_whole == 0)) throw std::invalid_argument("part layout needs wholes and parts");
}

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  auto kv = parse_key_values(text);
  kv.reject_unknown({"classes", "dim", "separation", "sigma", "bg_scale", "images", "objects_per_image",
                     "proposals_per_object", "bg_proposals", "width", "height", "jitter", "parts", "wholes",
                     "parts_per_whole"});
  SyntheticSpec s;
  auto count = [&](const char* key, std::size_t fallback) {
    const auto v = kv.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw FormatError(std::string(key) + " must be >= 0", kv.entries.at(key).second);
    return static_cast<std::size_t>(v);
  };
  s.classes = count("classes", s.classes);
  s.dim = count("dim", s.dim);
  s.separation = kv.get_double("separation", s.separation);
  s.sigma = kv.get_double("sigma", s.sigma);
  s.bg_scale = kv.get_double("bg_scale", s.bg_scale);
  s.images = count("images", s.images);
  s.objects_per_image = count("objects_per_image", s.objects_per_image);
  s.proposals_per_object = count("proposals_per_object", s.proposals_per_object);
  s.bg_proposals = count("bg_proposals", s.bg_proposals);
  s.width = kv.get_double("width", s.width);
  s.height = kv.get_double("height", s.height);
  s.jitter = kv.get_double("jitter", s.jitter);
  s.parts = kv.get_bool("parts", s.parts);
  s.wholes = count("wholes", s.wholes);
  s.parts_per_whole = count("parts_per_whole", s.parts_per_whole);
  s.validate();
  return s;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over a running combination
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ b);
}

namespace {

struct Generator {
  const SyntheticSpec& spec;
  std::mt19937_64 rng;
  std::vector<std::vector<double>> means;

  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); }

  std::vector<double> embed(std::size_t cls) {
    std::normal_distribution<double> g(0.0, spec.sigma);
    std::vector<double> z(spec.dim);
    for (std::size_t i = 0; i < spec.dim; ++i) z[i] = means[cls][i] + g(rng);
    return z;
  }

  std::vector<double> embed_background() {
    std::normal_distribution<double> g(0.0, spec.sigma * spec.bg_scale);
    std::vector<double> z(spec.dim);
    for (auto& v : z) v = g(rng);
    return z;
  }

  det::BoundingBox random_box(double min_frac, double max_frac, const det::BoundingBox& within) {
    const double w = within.width() * uniform(min_frac, max_frac);
    const double h = within.height() * uniform(min_frac, max_frac);
    const double x = uniform(within.x1, within.x2 - w);
    const double y = uniform(within.y1, within.y2 - h);
    return {x, y, x + w, y + h};
  }

  // Jittered copy of `gt` with IoU >= 0.7, optionally clipped to `clip`.
  det::BoundingBox jittered(const det::BoundingBox& gt, const det::BoundingBox* clip) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      const double jx = spec.jitter * gt.width(), jy = spec.jitter * gt.height();
      det::BoundingBox b{gt.x1 + uniform(-jx, jx), gt.y1 + uniform(-jy, jy), gt.x2 + uniform(-jx, jx),
                         gt.y2 + uniform(-jy, jy)};
      b.x1 = std::max(b.x1, 0.0);
      b.y1 = std::max(b.y1, 0.0);
      b.x2 = std::min(b.x2, spec.width);
      b.y2 = std::min(b.y2, spec.height);
      if (clip != nullptr) {
        b.x1 = std::max(b.x1, clip->x1);
        b.y1 = std::max(b.y1, clip->y1);
        b.x2 = std::min(b.x2, clip->x2);
        b.y2 = std::min(b.y2, clip->y2);
      }
      if (b.valid() && det::iou(b, gt) >= 0.7) return b;
    }
    return gt;
  }
};

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto names = spec.class_names();
  Generator gen{spec, std::mt19937_64(seed), {}};
  const double offset = spec.separation * spec.sigma / std::sqrt(2.0);
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::vector<double> m(spec.dim, 0.0);
    m[c] = offset;
    gen.means.push_back(std::move(m));
  }

  const det::BoundingBox frame{0.0, 0.0, spec.width, spec.height};
  Dataset ds;
  ds.dim = spec.dim;
  for (std::size_t n = 0; n < spec.images; ++n) {
    gen.rng.seed(derive_seed(seed, n));
    Image im;
    char id[32];
    std::snprintf(id, sizeof id, "img%05zu", n);
    im.id = id;
    im.extent = {spec.width, spec.height};

    // Object boxes with pairwise-disjoint extents.
    const double lo = spec.parts ? 0.3 : 0.15, hi = spec.parts ? 0.45 : 0.3;
    std::vector<det::BoundingBox> placed;
    std::vector<std::size_t> placed_cls;
    for (std::size_t o = 0; o < spec.objects_per_image; ++o) {
      const std::size_t top_classes = spec.parts ? spec.wholes : names.size();
      const std::size_t cls = std::uniform_int_distribution<std::size_t>(0, top_classes - 1)(gen.rng);
      for (int attempt = 0; attempt < 200; ++attempt) {
        auto b = gen.random_box(lo, hi, frame);
        if (std::all_of(placed.begin(), placed.end(), [&](const auto& p) { return det::intersection_area(b, p) == 0.0; })) {
          placed.push_back(b);
          placed_cls.push_back(cls);
          break;
        }
      }
    }

    auto add_object = [&](const det::BoundingBox& gt, std::size_t cls, const det::BoundingBox* clip) {
      im.objects.push_back({gt, names[cls]});
      for (std::size_t k = 0; k < spec.proposals_per_object; ++k)
        im.proposals.push_back({gen.jittered(gt, clip), gen.embed(cls), names[cls]});
    };

    for (std::size_t o = 0; o < placed.size(); ++o) {
      add_object(placed[o], placed_cls[o], nullptr);
      if (!spec.parts) continue;
      // Parts occupy disjoint horizontal strips of the whole.
      const auto& whole = placed[o];
      const double strip = whole.height() / static_cast<double>(spec.parts_per_whole);
      for (std::size_t p = 0; p < spec.parts_per_whole; ++p) {
        const det::BoundingBox band{whole.x1, whole.y1 + p * strip, whole.x2, whole.y1 + (p + 1) * strip};
        const auto part_box = gen.random_box(0.6, 0.9, band);
        const std::size_t cls = spec.wholes + placed_cls[o] * spec.parts_per_whole + p;
        add_object(part_box, cls, &whole);
      }
    }

    for (std::size_t k = 0; k < spec.bg_proposals; ++k) {
      for (int attempt = 0; attempt < 1000; ++attempt) {
        auto b = gen.random_box(0.1, 0.35, frame);
        if (std::all_of(im.objects.begin(), im.objects.end(), [&](const auto& g) { return det::iou(b, g.box) < 0.3; })) {
          im.proposals.push_back({b, gen.embed_background(), det::kBackground});
          break;
        }
      }
    }
    ds.images.push_back(std::move(im));
  }
  return ds;
}

}  // namespace ltn::harness
