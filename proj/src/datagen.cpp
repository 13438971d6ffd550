#include "pal/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "pal/image_io.hpp"
#include "pal/imaging.hpp"

namespace pal::datagen {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ (stream * 0xD1B54A32D192ED03ULL)) + index);
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Value noise in [-1, 1]: random lattice values blended with a smoothstep,
// summed over cell sizes 16, 8, ... down to `finest_cell`, each octave at half
// the weight of the previous one.
Field value_noise(Extent size, int finest_cell, std::mt19937_64& rng) {
  Field out(size, 0.0);
  std::vector<int> cells;
  for (int cell = 16; cell >= finest_cell; cell /= 2) cells.push_back(cell);
  double total = 0.0;
  for (std::size_t o = 0; o < cells.size(); ++o) total += std::ldexp(1.0, -static_cast<int>(o));
  for (std::size_t o = 0; o < cells.size(); ++o) {
    const int cell = cells[o];
    const double weight = std::ldexp(1.0, -static_cast<int>(o)) / total;
    const int gh = size.height / cell + 2;
    const int gw = size.width / cell + 2;
    Field lattice(gh, gw);
    for (double& v : lattice.data()) v = uniform(rng, -1.0, 1.0);
    for (int r = 0; r < size.height; ++r)
      for (int c = 0; c < size.width; ++c) {
        const double fr = static_cast<double>(r) / cell;
        const double fc = static_cast<double>(c) / cell;
        const int ir = static_cast<int>(fr);
        const int ic = static_cast<int>(fc);
        auto smooth = [](double t) { return t * t * (3.0 - 2.0 * t); };
        const double tr = smooth(fr - ir);
        const double tc = smooth(fc - ic);
        const double top = lattice(ir, ic) * (1 - tc) + lattice(ir, ic + 1) * tc;
        const double bottom = lattice(ir + 1, ic) * (1 - tc) + lattice(ir + 1, ic + 1) * tc;
        out(r, c) += weight * (top * (1 - tr) + bottom * tr);
      }
  }
  return out;
}

struct Blob {
  double row;
  double col;
  double major;  // half-peak semi-axes
  double minor;
  double theta;
  double contrast;
};

// Squared normalized distance; <= 1 inside the half-peak ellipse.
double blob_q(const Blob& b, double r, double c) {
  const double dr = r - b.row;
  const double dc = c - b.col;
  const double u = dc * std::cos(b.theta) + dr * std::sin(b.theta);
  const double v = -dc * std::sin(b.theta) + dr * std::cos(b.theta);
  return (u * u) / (b.major * b.major) + (v * v) / (b.minor * b.minor);
}

}  // namespace

std::string to_string(Background b) {
  switch (b) {
    case Background::flat:
      return "flat";
    case Background::gradient:
      return "gradient";
    case Background::clutter:
      return "clutter";
  }
  return "flat";
}

std::string to_string(Difficulty d) { return d == Difficulty::easy ? "easy" : "hard"; }

SceneSpec default_easy_spec() {
  SceneSpec s;
  s.min_contrast = 0.6;
  s.max_contrast = 0.85;
  s.background = Background::flat;
  s.background_level = 0.12;
  s.noise_std = 0.01;
  s.difficulty = Difficulty::easy;
  return s;
}

SceneSpec default_hard_spec() {
  SceneSpec s;
  s.min_contrast = 0.15;
  s.max_contrast = 0.3;
  s.background = Background::clutter;
  s.background_level = 0.25;
  s.clutter_amplitude = 0.12;
  s.noise_std = 0.05;
  s.difficulty = Difficulty::hard;
  return s;
}

void require_valid(const SceneSpec& spec) {
  if (spec.size.height < 8 || spec.size.width < 8) throw ParameterError("scene must be at least 8x8");
  if (spec.min_targets < 1 || spec.max_targets < spec.min_targets) throw ParameterError("bad target count range");
  const double rmax = std::min(spec.size.height, spec.size.width) / 8.0;
  if (!(spec.min_radius >= 1.0 && spec.max_radius >= spec.min_radius && spec.max_radius <= rmax))
    throw ParameterError("radius range must lie within [1, min(h,w)/8]");
  if (!(spec.min_contrast > 0.0 && spec.max_contrast >= spec.min_contrast && spec.max_contrast <= 1.0))
    throw ParameterError("contrast range must lie within (0,1]");
  if (!(spec.max_aspect >= 1.0)) throw ParameterError("max_aspect must be >= 1");
  if (!(spec.noise_std >= 0.0) || !(spec.clutter_amplitude >= 0.0)) throw ParameterError("negative noise");
  if (spec.max_retries < 1) throw ParameterError("max_retries must be >= 1");
  if (spec.clutter_finest_cell < 2 || spec.clutter_finest_cell > 16) throw ParameterError("clutter_finest_cell must lie in [2,16]");
}

Pixel centroid_point(const std::vector<Pixel>& pixels) {
  double sr = 0.0, sc = 0.0;
  for (const Pixel& p : pixels) {
    sr += p.row;
    sc += p.col;
  }
  const double cr = sr / static_cast<double>(pixels.size());
  const double cc = sc / static_cast<double>(pixels.size());
  Pixel best = pixels.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (const Pixel& p : pixels) {
    const double d = (p.row - cr) * (p.row - cr) + (p.col - cc) * (p.col - cc);
    if (d < best_d) {
      best_d = d;
      best = p;
    }
  }
  return best;
}

Scene generate_scene(const SceneSpec& spec, std::mt19937_64& rng) {
  require_valid(spec);
  const int h = spec.size.height;
  const int w = spec.size.width;
  const int n_targets = std::uniform_int_distribution<int>(spec.min_targets, spec.max_targets)(rng);

  std::vector<Blob> blobs;
  for (int t = 0; t < n_targets; ++t) {
    const double radius = uniform(rng, spec.min_radius, spec.max_radius);
    const double aspect = uniform(rng, 1.0, spec.max_aspect);
    Blob b{};
    b.major = radius * std::sqrt(aspect);
    b.minor = radius / std::sqrt(aspect);
    b.theta = uniform(rng, 0.0, std::numbers::pi);
    b.contrast = uniform(rng, spec.min_contrast, spec.max_contrast);
    const int margin = static_cast<int>(std::ceil(2.0 * b.major)) + 1;
    if (2 * margin >= h || 2 * margin >= w) throw GenerationError("target does not fit in the scene");

    bool placed = false;
    for (int attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
      b.row = std::uniform_int_distribution<int>(margin, h - 1 - margin)(rng);
      b.col = std::uniform_int_distribution<int>(margin, w - 1 - margin)(rng);
      placed = std::all_of(blobs.begin(), blobs.end(), [&](const Blob& o) {
        return std::hypot(o.row - b.row, o.col - b.col) >= o.major + b.major + 4.0;
      });
    }
    if (!placed) throw GenerationError("could not place target " + std::to_string(t) + " without overlap");
    blobs.push_back(b);
  }

  Field value(spec.size, spec.background_level);
  if (spec.background == Background::gradient) {
    const double angle = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double span = 0.1;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double t = ((r - h / 2.0) * std::sin(angle) + (c - w / 2.0) * std::cos(angle)) / std::max(h, w);
        value(r, c) += span * t;
      }
  } else if (spec.background == Background::clutter) {
    const Field clutter = value_noise(spec.size, spec.clutter_finest_cell, rng);
    for (std::size_t i = 0; i < value.size(); ++i) value.data()[i] += spec.clutter_amplitude * clutter.data()[i];
  }

  Scene scene;
  scene.ground_truth = BinaryMask(spec.size, 0);
  scene.coarse.kind = PointKind::coarse;
  scene.centroid.kind = PointKind::centroid;
  const double ln2x2 = 2.0 * std::log(2.0);
  for (const Blob& b : blobs) {
    std::vector<Pixel> pixels;
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c) {
        const double q = blob_q(b, r, c);
        // Half-peak semi-axes: exp(-ln2 * q) is the normalized profile.
        value(r, c) += b.contrast * std::exp(-0.5 * ln2x2 * q);
        if (q <= 1.0 + 1e-9) {
          scene.ground_truth(r, c) = 1;
          pixels.push_back({r, c});
        }
      }
    if (pixels.empty()) throw GenerationError("target mask is empty");
    scene.centroid.points.push_back(centroid_point(pixels));
    const auto pick = std::uniform_int_distribution<std::size_t>(0, pixels.size() - 1)(rng);
    scene.coarse.points.push_back(pixels[pick]);
  }

  if (spec.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_std);
    for (double& v : value.data()) v += noise(rng);
  }

  scene.image = GrayImage(spec.size);
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double v = std::clamp(value.data()[i], 0.0, 1.0);
    scene.image.data()[i] = static_cast<float>(static_cast<int>(v * 255.0 + 0.5)) / 255.0f;
  }
  return scene;
}

// -----------------------------------------------------------------------------
// GroundTruthStore
// -----------------------------------------------------------------------------

void GroundTruthStore::insert(const std::string& id, BinaryMask mask) { masks_[id] = std::move(mask); }

const BinaryMask& GroundTruthStore::mask_for_evaluation(const std::string& id) const {
  auto it = masks_.find(id);
  if (it == masks_.end()) throw Error("no ground truth for sample '" + id + "'");
  ++reads_;
  return it->second;
}

std::vector<std::string> GroundTruthStore::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, mask] : masks_) out.push_back(id);
  return out;
}

// -----------------------------------------------------------------------------
// Datasets
// -----------------------------------------------------------------------------

std::string sample_id(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

Dataset generate_dataset(const DatasetOptions& o) {
  if (o.n < 1) throw ParameterError("dataset needs at least one sample");
  if (!(o.easy_frac >= 0.0 && o.easy_frac <= 1.0)) throw ParameterError("easy_frac must lie in [0,1]");
  if (o.test_n < 0) throw ParameterError("test_n must be >= 0");
  require_valid(o.easy);
  require_valid(o.hard);

  Dataset ds;
  const int n_easy = static_cast<int>(std::lround(o.n * o.easy_frac));
  for (int i = 0; i < o.n; ++i) {
    const bool easy = i < n_easy;
    std::mt19937_64 rng(stream_seed(o.seed, 1, static_cast<std::uint64_t>(i)));
    Scene scene = generate_scene(easy ? o.easy : o.hard, rng);
    SampleRecord rec;
    rec.id = sample_id(i);
    rec.image = std::move(scene.image);
    rec.annotation = o.labels == PointKind::coarse ? scene.coarse : scene.centroid;
    rec.pseudo_label = SoftLabel(rec.image.extent(), 0.0f);
    ds.ground_truth.insert(rec.id, std::move(scene.ground_truth));
    ds.coarse.push_back(std::move(scene.coarse));
    ds.centroid.push_back(std::move(scene.centroid));
    ds.difficulty.push_back(easy ? Difficulty::easy : Difficulty::hard);
    ds.records.push_back(std::move(rec));
  }

  const int test_easy = static_cast<int>(std::lround(o.test_n * o.easy_frac));
  for (int i = 0; i < o.test_n; ++i) {
    std::mt19937_64 rng(stream_seed(o.seed, 2, static_cast<std::uint64_t>(i)));
    Scene scene = generate_scene(i < test_easy ? o.easy : o.hard, rng);
    ds.test.push_back({sample_id(i), std::move(scene.image), std::move(scene.ground_truth)});
  }
  return ds;
}

void use_labels(Dataset& dataset, PointKind kind) {
  for (std::size_t i = 0; i < dataset.records.size(); ++i)
    dataset.records[i].annotation = kind == PointKind::coarse ? dataset.coarse[i] : dataset.centroid[i];
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  for (const char* sub : {"images", "gt_masks", "test/images", "test/gt_masks"}) fs::create_directories(dir / sub);

  nlohmann::json samples = nlohmann::json::array();
  for (std::size_t i = 0; i < ds.records.size(); ++i) {
    const SampleRecord& rec = ds.records[i];
    io::write_image(dir / "images" / (rec.id + ".png"), rec.image);
    io::write_mask(dir / "gt_masks" / (rec.id + ".png"), ds.ground_truth.mask_for_evaluation(rec.id));
    nlohmann::json j = record_metadata(rec);
    j.erase("points");
    j.erase("kind");
    j["coarse"] = ds.coarse[i].points;
    j["centroid"] = ds.centroid[i].points;
    j["difficulty"] = to_string(ds.difficulty[i]);
    samples.push_back(std::move(j));
  }
  nlohmann::json test = nlohmann::json::array();
  for (const EvalSample& s : ds.test) {
    io::write_image(dir / "test" / "images" / (s.id + ".png"), s.image);
    io::write_mask(dir / "test" / "gt_masks" / (s.id + ".png"), s.ground_truth);
    test.push_back(s.id);
  }
  ds.ground_truth.reset_audit();

  std::ofstream out(dir / "labels.json", std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "labels.json").string());
  out << nlohmann::json{{"samples", samples}, {"test", test}}.dump(2) << "\n";
}

Dataset read_dataset(const std::filesystem::path& dir, PointKind labels) {
  std::ifstream in(dir / "labels.json");
  if (!in) throw FormatError("missing " + (dir / "labels.json").string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("labels.json: ") + e.what());
  }

  Dataset ds;
  try {
    for (const auto& j : meta.at("samples")) {
      SampleRecord rec;
      rec.id = j.at("id").get<std::string>();
      rec.image = io::read_image(dir / "images" / (rec.id + ".png"));
      check_gray_image(rec.image);
      PointAnnotation coarse{j.at("coarse").get<std::vector<Pixel>>(), PointKind::coarse};
      PointAnnotation centroid{j.at("centroid").get<std::vector<Pixel>>(), PointKind::centroid};
      rec.annotation = labels == PointKind::coarse ? coarse : centroid;
      rec.pseudo_label = SoftLabel(rec.image.extent(), 0.0f);
      ds.ground_truth.insert(rec.id, io::read_mask(dir / "gt_masks" / (rec.id + ".png")));
      ds.coarse.push_back(std::move(coarse));
      ds.centroid.push_back(std::move(centroid));
      ds.difficulty.push_back(j.value("difficulty", "easy") == "hard" ? Difficulty::hard : Difficulty::easy);
      ds.records.push_back(std::move(rec));
    }
    for (const auto& j : meta.at("test")) {
      const auto id = j.get<std::string>();
      ds.test.push_back({id, io::read_image(dir / "test" / "images" / (id + ".png")),
                         io::read_mask(dir / "test" / "gt_masks" / (id + ".png"))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("labels.json: ") + e.what());
  }
  return ds;
}

}  // namespace pal::datagen
