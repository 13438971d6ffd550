#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "pal/core_types.hpp"
#include "pal/imaging.hpp"

namespace pal::update {

// -----------------------------------------------------------------------------
// Coarse outer update: sample admission
// -----------------------------------------------------------------------------

struct CouDecision {
  std::string sample_id;
  double miss_rate = 0.0;   // missed points / points
  double false_rate = 0.0;  // point-free predicted components / points (may exceed 1)
  bool admitted = false;
  std::optional<SoftLabel> refined_label;  // present iff admitted
};

/// A point is detected when it lies inside a predicted component (prediction
/// binarized at hp.pred_threshold). Admitted iff miss_rate <= t_m and
/// false_rate <= t_f; the refined label keeps the prediction on point-hitting
/// components only, with every point set to 1.
CouDecision cou_evaluate(const SampleRecord& record, const SoftLabel& prediction, double t_m, double t_f,
                         const Hyperparams& hp);

// -----------------------------------------------------------------------------
// Fine inner update: pseudo-label refinement
// -----------------------------------------------------------------------------

/// max(P) * (tb + k (1 - tb) n / (H W r)), where n counts label-patch pixels
/// above hp.binarize_threshold and H x W is the full image extent, so H W r is
/// the small-target area cap in pixels.
template <typename P, typename L>
double adaptive_threshold(const P& pred_patch, const L& label_patch, Extent image, const Hyperparams& hp) {
  if (pred_patch.extent() != label_patch.extent()) throw ParameterError("adaptive_threshold: patch shapes differ");
  const double budget = static_cast<double>(image.area()) * hp.r;
  if (!(budget > 0.0)) throw ParameterError("adaptive_threshold: h*w*r must be positive");
  double peak = 0.0;
  for (auto v : pred_patch.data()) peak = std::max(peak, static_cast<double>(v));
  std::size_t positive = 0;
  for (auto v : label_patch.data()) positive += static_cast<double>(v) > hp.binarize_threshold ? 1 : 0;
  return peak * (hp.tb + hp.k * (1.0 - hp.tb) * static_cast<double>(positive) / budget);
}

/// One d x d crop around a pseudo-label component centroid.
struct CandidateCrop {
  Pixel centre;
  Pixel offset;
  Extent extent;
  double threshold = 0.0;
  std::size_t kept_components = 0;
};

/// Candidate union N_n with its per-crop bookkeeping.
struct FiuContext {
  BinaryMask candidates;  // N_n membership, starts all-zero
  std::vector<CandidateCrop> crops;
  std::vector<Pixel> label_centroids;
  double decay = 1.0;
};

/// For each component of the binarized label: crop P and L around its rounded
/// centroid, threshold the P crop adaptively, keep candidate components that
/// contain any label centroid, and union them into N_n.
FiuContext extract_candidates(const SoftLabel& prediction, const SoftLabel& pseudo_label, const Hyperparams& hp);

struct FiuResult {
  SoftLabel label;
  FiuContext context;
};

/// L' = lambda L (1 - N) + (L + P)/2 N, annotation points reset to 1, clamped to [0,1].
FiuResult fiu_update_detailed(const SoftLabel& label, const SoftLabel& prediction, const PointAnnotation& points,
                              const Hyperparams& hp);

SoftLabel fiu_update(const SoftLabel& label, const SoftLabel& prediction, const PointAnnotation& points,
                     const Hyperparams& hp);

}  // namespace pal::update
