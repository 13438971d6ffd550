#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "pal/metrics.hpp"

using namespace pal;
using namespace pal::metrics;

namespace {

void block(BinaryMask& m, int r0, int c0, int h, int w) {
  for (int r = r0; r < r0 + h; ++r)
    for (int c = c0; c < c0 + w; ++c) m(r, c) = 1;
}

using Masks = std::vector<BinaryMask>;

// Largest number of (gt, pred) pairs that can be matched one-to-one among
// eligible pairs, by trying every assignment.
std::size_t brute_force_matches(const std::vector<imaging::ConnectedComponent>& pred,
                                const std::vector<imaging::ConnectedComponent>& gt, double deviation,
                                std::size_t gi = 0, std::vector<bool> used = {}) {
  if (used.empty()) used.assign(pred.size(), false);
  if (gi == gt.size()) return 0;
  std::size_t best = brute_force_matches(pred, gt, deviation, gi + 1, used);
  for (std::size_t p = 0; p < pred.size(); ++p) {
    if (used[p] || !eligible(pred[p], gt[gi], deviation)) continue;
    used[p] = true;
    best = std::max(best, 1 + brute_force_matches(pred, gt, deviation, gi + 1, used));
    used[p] = false;
  }
  return best;
}

BinaryMask random_blobs(std::mt19937_64& rng, int n) {
  BinaryMask m(24, 24, 0);
  std::uniform_int_distribution<int> pos(0, 20), sz(1, 3);
  for (int i = 0; i < n; ++i) block(m, pos(rng), pos(rng), sz(rng), sz(rng));
  return m;
}

}  // namespace

TEST_CASE("IoU examples") {
  BinaryMask gt(4, 4, 0);
  block(gt, 1, 1, 2, 2);
  const Masks g{gt};
  CHECK(iou(Masks{gt}, g) == 1.0);
  CHECK(iou(Masks{BinaryMask(4, 4, 0)}, g) == 0.0);
  BinaryMask left(4, 4, 0);
  block(left, 1, 1, 2, 1);
  CHECK(iou(Masks{left}, g) == 0.5);
}

TEST_CASE("nIoU examples") {
  BinaryMask a(4, 4, 0), b(4, 4, 0);
  block(a, 0, 0, 2, 2);
  block(b, 2, 2, 2, 2);
  CHECK(niou(Masks{a, b}, Masks{a, b}) == 1.0);
  CHECK(niou(Masks{a, BinaryMask(4, 4, 0)}, Masks{a, b}) == 0.5);
  CHECK(niou(Masks{BinaryMask(4, 4, 0)}, Masks{BinaryMask(4, 4, 0)}) == 1.0);
}

TEST_CASE("pooled IoU and per-sample nIoU diverge") {
  BinaryMask big(20, 20, 0), small(20, 20, 0), miss(20, 20, 0);
  block(big, 0, 0, 10, 10);  // 100 px, predicted exactly
  block(small, 5, 5, 2, 2);  // 4 px, missed
  const Masks gt{big, small};
  const Masks pred{big, miss};
  CHECK(iou(pred, gt) == doctest::Approx(100.0 / 104.0).epsilon(1e-12));
  CHECK(niou(pred, gt) == 0.5);
}

TEST_CASE("IoU and nIoU are symmetric and bounded") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    Masks a, b;
    for (int i = 0; i < 3; ++i) {
      a.push_back(random_blobs(rng, t % 4));
      b.push_back(random_blobs(rng, t % 3));
    }
    CHECK(iou(a, b) == iou(b, a));
    CHECK(niou(a, b) == niou(b, a));
    CHECK(iou(a, b) >= 0.0);
    CHECK(iou(a, b) <= 1.0);
    CHECK(niou(a, b) >= 0.0);
    CHECK(niou(a, b) <= 1.0);
  }
}

TEST_CASE("Pd and Fa examples") {
  SUBCASE("perfect") {
    BinaryMask gt(16, 16, 0);
    block(gt, 3, 3, 2, 2);
    block(gt, 10, 10, 3, 3);
    const auto r = pd_fa(Masks{gt}, Masks{gt});
    CHECK(r.pd == 1.0);
    CHECK(r.fa == 0.0);
  }
  SUBCASE("one spurious 5-pixel component in ten 64x64 images") {
    Masks gt, pred;
    for (int i = 0; i < 10; ++i) {
      BinaryMask g(64, 64, 0);
      block(g, 10, 10, 3, 3);
      gt.push_back(g);
      pred.push_back(g);
    }
    block(pred[4], 50, 40, 1, 5);
    const auto r = pd_fa(pred, gt);
    CHECK(r.false_pixels == 5);
    CHECK(r.total_pixels == 40960);
    CHECK(r.fa == doctest::Approx(5.0 / 40960.0).epsilon(1e-12));
    CHECK(r.pd == 1.0);
    CHECK_FALSE(is_valid(r.fa));
  }
  SUBCASE("centroid 2 px away without overlap is detected") {
    BinaryMask gt(16, 16, 0), pred(16, 16, 0);
    gt(5, 5) = 1;
    pred(5, 7) = 1;
    CHECK(pd_fa(Masks{pred}, Masks{gt}, 3.0).pd == 1.0);
    CHECK(pd_fa(Masks{pred}, Masks{gt}, 1.5).pd == 0.0);
  }
  SUBCASE("no targets") {
    const auto r = pd_fa(Masks{BinaryMask(8, 8, 0)}, Masks{BinaryMask(8, 8, 0)});
    CHECK(r.pd == 1.0);
    CHECK(r.fa == 0.0);
  }
  SUBCASE("empty prediction") {
    BinaryMask gt(8, 8, 0);
    block(gt, 2, 2, 2, 2);
    CHECK(pd_fa(Masks{BinaryMask(8, 8, 0)}, Masks{gt}).pd == 0.0);
  }
  SUBCASE("one prediction serves one target") {
    BinaryMask gt(16, 16, 0), pred(16, 16, 0);
    gt(5, 5) = 1;
    gt(5, 8) = 1;
    pred(5, 6) = 1;
    const auto r = pd_fa(Masks{pred}, Masks{gt});
    CHECK(r.detected == 1);
    CHECK(r.fa == 0.0);
  }
}

TEST_CASE("validity gate") {
  CHECK_FALSE(is_valid(1.22e-4));
  CHECK(is_valid(1e-4));
  CHECK(is_valid(0.0));
  CHECK_THROWS_AS(is_valid(-1e-9), ParameterError);
  CHECK_THROWS_AS(is_valid(std::nan("")), ParameterError);
}

TEST_CASE("greedy order: nearest pair first, ties by index") {
  BinaryMask gt(10, 20, 0), pred(10, 20, 0);
  gt(5, 5) = 1;
  gt(5, 9) = 1;
  pred(5, 7) = 1;  // 2 px from both; tie goes to gt 0
  const auto m = greedy_match(imaging::connected_components(pred), imaging::connected_components(gt), 3.0);
  CHECK(m == std::vector<int>{0, -1});
}

TEST_CASE("Pd and Fa monotonicity") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const BinaryMask gt = random_blobs(rng, 1 + t % 4);
    BinaryMask pred = random_blobs(rng, t % 3);
    const auto before = pd_fa(Masks{pred}, Masks{gt});
    // A far-away isolated pixel cannot match anything: Fa must not fall.
    BinaryMask far(30, 30, 0);
    for (int r = 0; r < 24; ++r)
      for (int c = 0; c < 24; ++c) far(r, c) = pred(r, c);
    BinaryMask gt_big(30, 30, 0);
    for (int r = 0; r < 24; ++r)
      for (int c = 0; c < 24; ++c) gt_big(r, c) = gt(r, c);
    const auto base = pd_fa(Masks{far}, Masks{gt_big});
    far(29, 29) = 1;
    const auto more = pd_fa(Masks{far}, Masks{gt_big});
    CHECK(more.false_pixels >= base.false_pixels);
    CHECK(more.pd == base.pd);
    // Adding an exact copy of an undetected target never lowers Pd.
    const auto gcc = imaging::connected_components(gt);
    const auto match = greedy_match(imaging::connected_components(pred), gcc, kDefaultDeviation);
    for (std::size_t g = 0; g < gcc.size(); ++g) {
      if (match[g] >= 0) continue;
      BinaryMask added = pred;
      bool overlaps = false;
      for (const Pixel& p : gcc[g].pixels) overlaps |= pred[p] == 1;
      if (overlaps) break;  // would merge with an existing component
      for (const Pixel& p : gcc[g].pixels) added[p] = 1;
      CHECK(pd_fa(Masks{added}, Masks{gt}).pd >= before.pd);
      break;
    }
  }
}

TEST_CASE("greedy matching agrees with exhaustive assignment") {
  std::mt19937_64 rng(4);
  int disagreements = 0;
  const int instances = 2000;
  for (int t = 0; t < instances; ++t) {
    std::uniform_int_distribution<int> k(1, 4);
    const auto gcc = imaging::connected_components(random_blobs(rng, k(rng)));
    const auto pcc = imaging::connected_components(random_blobs(rng, k(rng)));
    if (gcc.size() > 4 || pcc.size() > 4) continue;
    const auto m = greedy_match(pcc, gcc, kDefaultDeviation);
    const auto greedy = static_cast<std::size_t>(std::count_if(m.begin(), m.end(), [](int v) { return v >= 0; }));
    const std::size_t best = brute_force_matches(pcc, gcc, kDefaultDeviation);
    CHECK(greedy <= best);
    disagreements += greedy != best;
  }
  MESSAGE("greedy-gap instances: " << disagreements << " / " << instances);
  CHECK(disagreements < instances / 100);
}

TEST_CASE("evaluate binarizes probabilities strictly at 0.5") {
  SoftLabel p(4, 4, 0.5f);
  p(1, 1) = 0.51f;
  BinaryMask gt(4, 4, 0);
  gt(1, 1) = 1;
  const auto s = evaluate(std::vector<SoftLabel>{p}, Masks{gt});
  CHECK(s.iou == 1.0);
  CHECK(s.pd == 1.0);
  CHECK(s.valid);
}
