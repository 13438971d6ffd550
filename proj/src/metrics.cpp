#include "pal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace pal::metrics {
namespace {

void check_sets(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt) {
  if (pred.size() != gt.size()) throw ParameterError("metrics: prediction and ground-truth counts differ");
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i].extent() != gt[i].extent()) throw ParameterError("metrics: shape mismatch at sample " + std::to_string(i));
}

double ratio(const Confusion& c) {
  const std::size_t denom = c.tp + c.fp + c.fn;
  return denom == 0 ? 1.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

double centroid_distance(const imaging::ConnectedComponent& a, const imaging::ConnectedComponent& b) {
  return std::hypot(a.centroid.row - b.centroid.row, a.centroid.col - b.centroid.col);
}

bool overlaps(const imaging::ConnectedComponent& a, const imaging::ConnectedComponent& b) {
  if (a.bbox.max_row < b.bbox.min_row || b.bbox.max_row < a.bbox.min_row) return false;
  if (a.bbox.max_col < b.bbox.min_col || b.bbox.max_col < a.bbox.min_col) return false;
  const auto& small = a.area <= b.area ? a : b;
  const auto& large = a.area <= b.area ? b : a;
  return std::any_of(small.pixels.begin(), small.pixels.end(), [&](Pixel p) { return large.contains(p); });
}

}  // namespace

Confusion confusion(const BinaryMask& pred, const BinaryMask& gt) {
  if (pred.extent() != gt.extent()) throw ParameterError("confusion: shape mismatch");
  Confusion c;
  auto p = pred.data();
  auto g = gt.data();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool a = p[i] != 0, b = g[i] != 0;
    c.tp += a && b;
    c.fp += a && !b;
    c.fn += !a && b;
  }
  return c;
}

double sample_iou(const BinaryMask& pred, const BinaryMask& gt) { return ratio(confusion(pred, gt)); }

double iou(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt) {
  check_sets(pred, gt);
  Confusion total;
  for (std::size_t i = 0; i < pred.size(); ++i) total += confusion(pred[i], gt[i]);
  return ratio(total);
}

double niou(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt) {
  check_sets(pred, gt);
  if (pred.empty()) return 1.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += sample_iou(pred[i], gt[i]);
  return sum / static_cast<double>(pred.size());
}

bool eligible(const imaging::ConnectedComponent& pred, const imaging::ConnectedComponent& gt, double deviation) {
  return centroid_distance(pred, gt) <= deviation || overlaps(pred, gt);
}

std::vector<int> greedy_match(const std::vector<imaging::ConnectedComponent>& pred,
                              const std::vector<imaging::ConnectedComponent>& gt, double deviation) {
  if (deviation < 0.0) throw ParameterError("pd_fa: deviation must be >= 0");
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t g = 0; g < gt.size(); ++g)
    for (std::size_t p = 0; p < pred.size(); ++p)
      if (eligible(pred[p], gt[g], deviation)) pairs.emplace_back(centroid_distance(pred[p], gt[g]), g, p);
  std::sort(pairs.begin(), pairs.end());

  std::vector<int> match(gt.size(), -1);
  std::vector<bool> used(pred.size(), false);
  for (const auto& [dist, g, p] : pairs) {
    if (match[g] >= 0 || used[p]) continue;
    match[g] = static_cast<int>(p);
    used[p] = true;
  }
  return match;
}

PdFa pd_fa(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt, double deviation) {
  check_sets(pred, gt);
  PdFa out;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto pc = imaging::connected_components(pred[i]);
    const auto gc = imaging::connected_components(gt[i]);
    const auto match = greedy_match(pc, gc, deviation);
    std::vector<bool> used(pc.size(), false);
    for (int m : match) {
      if (m < 0) continue;
      used[static_cast<std::size_t>(m)] = true;
      ++out.detected;
    }
    for (std::size_t p = 0; p < pc.size(); ++p)
      if (!used[p]) out.false_pixels += pc[p].area;
    out.targets += gc.size();
    out.total_pixels += pred[i].size();
  }
  out.pd = out.targets == 0 ? 1.0 : static_cast<double>(out.detected) / static_cast<double>(out.targets);
  out.fa = out.total_pixels == 0 ? 0.0 : static_cast<double>(out.false_pixels) / static_cast<double>(out.total_pixels);
  return out;
}

bool is_valid(double fa) {
  if (fa < 0.0 || std::isnan(fa)) throw ParameterError("validity: fa must be >= 0");
  return !(fa > kFaLimit);
}

Summary evaluate(std::span<const BinaryMask> pred, std::span<const BinaryMask> gt, double deviation) {
  Summary s;
  s.iou = iou(pred, gt);
  s.niou = niou(pred, gt);
  const PdFa t = pd_fa(pred, gt, deviation);
  s.pd = t.pd;
  s.fa = t.fa;
  s.valid = is_valid(t.fa);
  return s;
}

Summary evaluate(std::span<const SoftLabel> prob, std::span<const BinaryMask> gt, double deviation) {
  std::vector<BinaryMask> pred;
  pred.reserve(prob.size());
  for (const auto& p : prob) pred.push_back(binarize(p, kEvalThreshold));
  return evaluate(std::span<const BinaryMask>(pred), gt, deviation);
}

}  // namespace pal::metrics
