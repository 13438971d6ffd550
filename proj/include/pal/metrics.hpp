#pragma once

#include <span>
#include <vector>

#include "pal/core_types.hpp"
#include "pal/imaging.hpp"

namespace pal::metrics {

/// Runs with a false-alarm rate strictly above this are judged invalid.
inline constexpr double kFaLimit = 1e-4;
inline constexpr double kDefaultDeviation = 3.0;
inline constexpr double kEvalThreshold = 0.5;

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  Confusion& operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

Confusion confusion(const BinaryMask& pred, const BinaryMask& gt);

/// Dataset-pooled sum(TP) / sum(TP + FP + FN). 1.0 when both sides are empty.
double iou(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt);

/// Mean of per-sample IoU; a sample with empty prediction and empty truth scores 1.
double niou(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt);

/// IoU of one pair, with the empty/empty convention of niou.
double sample_iou(const BinaryMask& pred, const BinaryMask& gt);

/// Target matching on one image. A (gt, pred) pair is eligible when the
/// components overlap or their centroids are within `deviation` pixels.
/// Eligible pairs are taken in order of increasing centroid distance (ties by
/// gt index, then pred index); each side is used at most once.
/// Returns, per gt component, the matched pred index or -1.
std::vector<int> greedy_match(const std::vector<imaging::ConnectedComponent>& pred,
                              const std::vector<imaging::ConnectedComponent>& gt, double deviation);

bool eligible(const imaging::ConnectedComponent& pred, const imaging::ConnectedComponent& gt, double deviation);

struct PdFa {
  double pd = 0.0;
  double fa = 0.0;
  std::size_t targets = 0;
  std::size_t detected = 0;
  std::size_t false_pixels = 0;  // pixels of unmatched predicted components
  std::size_t total_pixels = 0;
};

/// Pd = detected / gt targets (1.0 with no targets); Fa = unmatched predicted
/// pixels / all pixels in the set.
PdFa pd_fa(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt, double deviation = kDefaultDeviation);

/// Strict gate: invalid iff fa > kFaLimit.
bool is_valid(double fa);

struct Summary {
  double iou = 0.0;
  double niou = 0.0;
  double pd = 0.0;
  double fa = 0.0;
  bool valid = true;
};

Summary evaluate(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt,
                 double deviation = kDefaultDeviation);

/// Binarizes probability maps at kEvalThreshold first.
Summary evaluate(std::span<const SoftLabel> prob, std::span<const BinaryMask> gt,
                 double deviation = kDefaultDeviation);

}  // namespace pal::metrics
