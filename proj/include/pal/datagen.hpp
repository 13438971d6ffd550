#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "pal/core_types.hpp"

namespace pal::datagen {

enum class Background { flat, gradient, clutter };
enum class Difficulty { easy, hard };

std::uint64_t splitmix64(std::uint64_t x);

/// Independent seed for item `index` of RNG stream `stream`.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

std::string to_string(Background b);
std::string to_string(Difficulty d);

/// Scene recipe. Radii are half-peak radii in pixels.
struct SceneSpec {
  Extent size{64, 64};
  int min_targets = 1;
  int max_targets = 3;
  double min_radius = 1.0;
  double max_radius = 4.0;
  double min_contrast = 0.6;
  double max_contrast = 1.0;
  double max_aspect = 1.4;  // major/minor half-peak radius ratio
  Background background = Background::flat;
  double background_level = 0.15;
  double clutter_amplitude = 0.0;
  int clutter_finest_cell = 8;  // smallest value-noise cell, pixels
  double noise_std = 0.01;
  Difficulty difficulty = Difficulty::easy;
  int max_retries = 200;
};

SceneSpec default_easy_spec();
SceneSpec default_hard_spec();

/// Throws ParameterError on an invalid spec.
void require_valid(const SceneSpec& spec);

class GenerationError : public Error {
 public:
  using Error::Error;
};

struct Scene {
  GrayImage image;
  BinaryMask ground_truth;
  PointAnnotation coarse;
  PointAnnotation centroid;
};

/// Anisotropic Gaussian blobs on the requested background. Each blob's mask is
/// its own half-peak region; annotation i belongs to blob i. Intensities are
/// quantized to multiples of 1/255 so 8-bit files round-trip exactly.
Scene generate_scene(const SceneSpec& spec, std::mt19937_64& rng);

/// Nearest in-mask pixel to the component's real centroid (raster-order ties).
Pixel centroid_point(const std::vector<Pixel>& component_pixels);

/// Dense masks kept away from the training path. Every read is counted so
/// tests can assert the training loop never touched them.
class GroundTruthStore {
 public:
  void insert(const std::string& id, BinaryMask mask);
  bool contains(const std::string& id) const { return masks_.count(id) != 0; }
  std::size_t size() const { return masks_.size(); }

  /// Evaluation-only access; increments the audit counter.
  const BinaryMask& mask_for_evaluation(const std::string& id) const;
  std::size_t evaluation_reads() const { return reads_; }
  void reset_audit() const { reads_ = 0; }

  std::vector<std::string> ids() const;

 private:
  std::map<std::string, BinaryMask> masks_;
  mutable std::size_t reads_ = 0;
};

struct EvalSample {
  std::string id;
  GrayImage image;
  BinaryMask ground_truth;
};

struct Dataset {
  std::vector<SampleRecord> records;  // preparation pool, empty pseudo-labels
  GroundTruthStore ground_truth;
  std::vector<PointAnnotation> coarse;    // per record, same order
  std::vector<PointAnnotation> centroid;  // per record, same order
  std::vector<Difficulty> difficulty;     // per record, same order
  std::vector<EvalSample> test;
};

struct DatasetOptions {
  int n = 200;
  double easy_frac = 0.5;
  int test_n = 100;
  SceneSpec easy = default_easy_spec();
  SceneSpec hard = default_hard_spec();
  PointKind labels = PointKind::coarse;
  std::uint64_t seed = 42;
};

/// round(n * easy_frac) easy records followed by hard ones; ids are zero-padded
/// indices. Per-sample RNG streams are derived from the seed, so any subset
/// can be regenerated independently.
Dataset generate_dataset(const DatasetOptions& options);

/// Selects which annotation kind the records carry.
void use_labels(Dataset& dataset, PointKind kind);

std::string sample_id(int index);

// -----------------------------------------------------------------------------
// On-disk layout: images/, gt_masks/, labels.json, test/{images,gt_masks}/
// -----------------------------------------------------------------------------

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir, PointKind labels);

}  // namespace pal::datagen
