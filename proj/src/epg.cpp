#include "pal/epg.hpp"

#include <cmath>

namespace pal::epg {

imaging::Patch<BinaryMask> segment_patch(const GrayImage& img, Pixel point, int patch_side,
                                         const SegmenterParams& params) {
  if (!img.contains(point)) throw ParameterError("segment_patch: point outside image");
  auto patch = imaging::crop_patch(img, point, patch_side);
  const GrayImage blurred = imaging::gaussian_blur(patch.raster, params.blur_sigma, params.blur_ksize);
  const BinaryMask edges = imaging::canny(blurred, params.canny_low, params.canny_high);
  const BinaryMask closed = imaging::morph_close(edges, params.close_radius);
  return {imaging::fill_holes(closed), patch.offset};
}

ValidatedSegmentation validate_components(const BinaryMask& seg, const std::vector<Pixel>& points, std::size_t max_area) {
  if (max_area < 1) throw ParameterError("max_area must be >= 1");
  if (points.empty()) throw ParameterError("recall is undefined without annotation points");

  ValidatedSegmentation out{BinaryMask(seg.extent(), 0), std::vector<bool>(points.size(), false), 0.0};
  for (const auto& comp : imaging::connected_components(seg)) {
    bool hit = false;
    std::vector<std::size_t> inside;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (seg.contains(points[i]) && comp.contains(points[i])) inside.push_back(i);
    }
    hit = !inside.empty();
    if (!hit || comp.area > max_area) continue;
    for (const Pixel& p : comp.pixels) out.kept[p] = 1;
    for (std::size_t i : inside) out.point_covered[i] = true;
  }
  std::size_t covered = 0;
  for (bool b : out.point_covered) covered += b ? 1 : 0;
  out.recall = static_cast<double>(covered) / static_cast<double>(points.size());
  return out;
}

std::size_t max_component_area(Extent image, const Hyperparams& hp) {
  return static_cast<std::size_t>(std::ceil(hp.r * static_cast<double>(image.area())));
}

EpgResult epg_classify(const SampleRecord& record, const Hyperparams& hp, const SegmenterParams& params) {
  const auto& points = record.annotation.points;
  if (points.empty()) throw ParameterError("sample '" + record.id + "' has no annotation points");
  const Extent extent = record.image.extent();
  const std::size_t max_area = max_component_area(extent, hp);

  SoftLabel canvas(extent, 0.0f);
  std::vector<bool> covered(points.size(), false);
  for (const Pixel& centre : points) {
    const auto seg = segment_patch(record.image, centre, hp.d, params);
    std::vector<Pixel> local;
    local.reserve(points.size());
    for (const Pixel& p : points) local.push_back({p.row - seg.offset.row, p.col - seg.offset.col});
    const auto valid = validate_components(seg.raster, local, max_area);
    for (std::size_t i = 0; i < points.size(); ++i) covered[i] = covered[i] || valid.point_covered[i];

    imaging::Patch<SoftLabel> soft{convert<SoftLabel>(valid.kept), seg.offset};
    imaging::paste_patch_max(canvas, soft);
  }

  std::size_t hits = 0;
  for (bool b : covered) hits += b ? 1 : 0;

  EpgResult out;
  out.recall = static_cast<double>(hits) / static_cast<double>(points.size());
  out.classification = out.recall >= hp.recall_threshold ? Classification::easy : Classification::hard;
  out.pseudo_label = out.classification == Classification::easy ? std::move(canvas) : SoftLabel(extent, 0.0f);
  stamp_points(out.pseudo_label, record.annotation);
  return out;
}

}  // namespace pal::epg
