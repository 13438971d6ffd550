#pragma once

#include <vector>

#include "pal/core_types.hpp"
#include "pal/imaging.hpp"

namespace pal::epg {

/// Classical-CV settings of the patch segmenter.
struct SegmenterParams {
  double blur_sigma = 1.0;
  int blur_ksize = 5;
  double canny_low = 0.1;
  double canny_high = 0.3;
  int close_radius = 1;
};

/// crop -> blur -> Canny -> close -> fill. Returns the patch-local mask and
/// its offset in image coordinates.
imaging::Patch<BinaryMask> segment_patch(const GrayImage& img, Pixel point, int patch_side,
                                         const SegmenterParams& params = {});

struct ValidatedSegmentation {
  BinaryMask kept;                   // patch-local true-target components
  std::vector<bool> point_covered;   // per input point
  double recall = 0.0;
};

/// Keeps components that contain at least one point and have area <= max_area.
/// Points are patch-local; out-of-patch points count as uncovered.
ValidatedSegmentation validate_components(const BinaryMask& seg, const std::vector<Pixel>& points_in_patch,
                                          std::size_t max_area);

enum class Classification { easy, hard };

struct EpgResult {
  Classification classification = Classification::hard;
  SoftLabel pseudo_label;
  double recall = 0.0;
};

/// Per-component area cap: ceil(r * h * w).
std::size_t max_component_area(Extent image, const Hyperparams& hp);

/// Easy iff the fraction of annotation points covered by a kept component
/// reaches hp.recall_threshold. Easy samples get the kept components pasted
/// (pixelwise max) on a zero canvas; both classes end with every point at 1.
EpgResult epg_classify(const SampleRecord& record, const Hyperparams& hp, const SegmenterParams& params = {});

}  // namespace pal::epg
