#include "pal/dual_update.hpp"

namespace pal::update {

CouDecision cou_evaluate(const SampleRecord& record, const SoftLabel& prediction, double t_m, double t_f,
                         const Hyperparams& hp) {
  const auto& points = record.annotation.points;
  if (points.empty()) throw ParameterError("sample '" + record.id + "' has no annotation points");
  if (prediction.extent() != record.image.extent()) throw ParameterError("prediction shape differs from image");

  const auto components = imaging::connected_components(binarize(prediction, hp.pred_threshold));
  std::vector<bool> component_hit(components.size(), false);
  std::size_t missed = 0;
  for (const Pixel& p : points) {
    bool found = false;
    for (std::size_t i = 0; i < components.size(); ++i) {
      if (components[i].contains(p)) {
        component_hit[i] = true;
        found = true;
      }
    }
    missed += found ? 0 : 1;
  }
  const auto spurious = static_cast<std::size_t>(std::count(component_hit.begin(), component_hit.end(), false));

  CouDecision d;
  d.sample_id = record.id;
  d.miss_rate = static_cast<double>(missed) / static_cast<double>(points.size());
  d.false_rate = static_cast<double>(spurious) / static_cast<double>(points.size());
  d.admitted = d.miss_rate <= t_m && d.false_rate <= t_f;
  if (d.admitted) {
    SoftLabel refined(prediction.extent(), 0.0f);
    for (std::size_t i = 0; i < components.size(); ++i) {
      if (!component_hit[i]) continue;
      for (const Pixel& p : components[i].pixels) refined[p] = prediction[p];
    }
    stamp_points(refined, record.annotation);
    d.refined_label = std::move(refined);
  }
  return d;
}

FiuContext extract_candidates(const SoftLabel& prediction, const SoftLabel& pseudo_label, const Hyperparams& hp) {
  if (prediction.extent() != pseudo_label.extent()) throw ParameterError("extract_candidates: shapes differ");
  const Extent extent = prediction.extent();

  FiuContext ctx;
  ctx.candidates = BinaryMask(extent, 0);
  ctx.decay = hp.lambda_decay;

  const auto label_components = imaging::connected_components(binarize(pseudo_label, hp.binarize_threshold));
  for (const auto& comp : label_components) ctx.label_centroids.push_back(comp.rounded_centroid());

  for (const Pixel& centre : ctx.label_centroids) {
    const auto pred_crop = imaging::crop_patch(prediction, centre, hp.d);
    const auto label_crop = imaging::crop_patch(pseudo_label, centre, hp.d);
    CandidateCrop crop{centre, pred_crop.offset, pred_crop.raster.extent(), 0.0, 0};
    crop.threshold = adaptive_threshold(pred_crop.raster, label_crop.raster, extent, hp);

    const BinaryMask local = binarize(pred_crop.raster, crop.threshold);
    for (const auto& cand : imaging::connected_components(local)) {
      bool hits_centroid = false;
      for (const Pixel& c : ctx.label_centroids) {
        const Pixel lc{c.row - crop.offset.row, c.col - crop.offset.col};
        if (local.contains(lc) && cand.contains(lc)) {
          hits_centroid = true;
          break;
        }
      }
      if (!hits_centroid) continue;
      ++crop.kept_components;
      for (const Pixel& p : cand.pixels) ctx.candidates(p.row + crop.offset.row, p.col + crop.offset.col) = 1;
    }
    ctx.crops.push_back(crop);
  }
  return ctx;
}

FiuResult fiu_update_detailed(const SoftLabel& label, const SoftLabel& prediction, const PointAnnotation& points,
                              const Hyperparams& hp) {
  if (!(hp.lambda_decay > 0.0 && hp.lambda_decay <= 1.0)) throw ParameterError("lambda_decay must lie in (0,1]");
  FiuResult out{SoftLabel(label.extent(), 0.0f), extract_candidates(prediction, label, hp)};
  const float lambda = static_cast<float>(hp.lambda_decay);
  auto l = label.data();
  auto p = prediction.data();
  auto n = out.context.candidates.data();
  auto dst = out.label.data();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const float v = n[i] ? (l[i] + p[i]) / 2.0f : lambda * l[i];
    dst[i] = std::clamp(v, 0.0f, 1.0f);
  }
  stamp_points(out.label, points);
  return out;
}

SoftLabel fiu_update(const SoftLabel& label, const SoftLabel& prediction, const PointAnnotation& points,
                     const Hyperparams& hp) {
  return fiu_update_detailed(label, prediction, points, hp).label;
}

}  // namespace pal::update
