#include <doctest.h>

#include <cmath>
#include <random>

#include "pal/datagen.hpp"
#include "pal/epg.hpp"
#include "pal/metrics.hpp"

using namespace pal;
using namespace pal::epg;

namespace {

// Round Gaussian blob with half-peak radius `radius` on a flat 0.1 background.
GrayImage blob_image(Extent size, std::vector<Pixel> centres, double radius, double contrast,
                     BinaryMask* half_peak = nullptr) {
  GrayImage img(size, 0.1f);
  if (half_peak) *half_peak = BinaryMask(size, 0);
  for (const Pixel& c : centres)
    for (int r = 0; r < size.height; ++r)
      for (int col = 0; col < size.width; ++col) {
        const double q = ((r - c.row) * (r - c.row) + (col - c.col) * (col - c.col)) / (radius * radius);
        img(r, col) += static_cast<float>(contrast * std::exp(-std::log(2.0) * q));
        if (half_peak && q <= 1.0) (*half_peak)(r, col) = 1;
      }
  return img;
}

SampleRecord record_for(GrayImage img, std::vector<Pixel> points) {
  SampleRecord r;
  r.id = "s";
  r.image = std::move(img);
  r.annotation.points = std::move(points);
  r.pseudo_label = SoftLabel(r.image.extent(), 0.0f);
  return r;
}

}  // namespace

TEST_CASE("segment_patch on a bright blob covers its core") {
  // Below a half-peak radius of about 2.5 px the contour ring itself is a
  // large share of the area and the segmentation runs 1.5-2x the mask.
  for (double radius : {2.5, 3.0, 3.5, 4.0}) {
    BinaryMask truth;
    const GrayImage img = blob_image({64, 64}, {{30, 34}}, radius, 0.8, &truth);
    const auto seg = segment_patch(img, {30, 34}, 33);
    const auto cc = imaging::connected_components(seg.raster);
    const Pixel local{30 - seg.offset.row, 34 - seg.offset.col};
    const imaging::ConnectedComponent* hit = nullptr;
    for (const auto& c : cc)
      if (c.contains(local)) hit = &c;
    REQUIRE_MESSAGE(hit != nullptr, "radius " << radius);
    const double area = static_cast<double>(count_nonzero(truth));
    CHECK(static_cast<double>(hit->area) >= 0.5 * area);
    CHECK(static_cast<double>(hit->area) <= 1.5 * area);
  }
}

TEST_CASE("segment_patch on a flat patch is empty") {
  const GrayImage img(64, 64, 0.3f);
  CHECK(count_nonzero(segment_patch(img, {32, 32}, 33).raster) == 0);
}

TEST_CASE("segment_patch near the border clips the patch and still finds the blob") {
  const GrayImage img = blob_image({64, 64}, {{3, 60}}, 2.5, 0.8);
  const auto seg = segment_patch(img, {3, 60}, 33);
  CHECK(seg.raster.extent() == Extent{20, 20});
  CHECK(seg.offset == Pixel{0, 44});
  CHECK(seg.raster(3, 16) == 1);
}

TEST_CASE("validate_components") {
  BinaryMask seg(20, 20, 0);
  for (int r = 2; r < 5; ++r)
    for (int c = 2; c < 6; ++c) seg(r, c) = 1;  // 12 px
  SUBCASE("kept") {
    const auto v = validate_components(seg, {{3, 3}}, 100);
    CHECK(v.recall == 1.0);
    CHECK(v.kept == seg);
  }
  SUBCASE("too large") {
    BinaryMask big(20, 20, 0);
    for (int r = 0; r < 10; ++r)
      for (int c = 0; c < 20; ++c) big(r, c) = 1;  // 200 px
    const auto v = validate_components(big, {{3, 3}}, 100);
    CHECK(v.recall == 0.0);
    CHECK(count_nonzero(v.kept) == 0);
  }
  SUBCASE("half the points covered") {
    const auto v = validate_components(seg, {{3, 3}, {15, 15}}, 100);
    CHECK(v.recall == 0.5);
    CHECK(v.point_covered == std::vector<bool>{true, false});
  }
  SUBCASE("point-free components are removed") {
    BinaryMask two = seg;
    two(15, 15) = 1;
    const auto v = validate_components(two, {{3, 3}}, 100);
    CHECK(v.kept == seg);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(validate_components(seg, {}, 100), ParameterError);
    CHECK_THROWS_AS(validate_components(seg, {{3, 3}}, 0), ParameterError);
  }
  SUBCASE("points outside the patch count as uncovered") {
    const auto v = validate_components(seg, {{3, 3}, {-4, 2}}, 100);
    CHECK(v.recall == 0.5);
  }
}

TEST_CASE("easy blob sample: classified easy with a usable pseudo-label") {
  BinaryMask truth;
  const GrayImage img = blob_image({64, 64}, {{20, 20}, {44, 40}}, 3.0, 0.8, &truth);
  const SampleRecord rec = record_for(img, {{20, 20}, {44, 40}});
  Hyperparams hp;
  hp.r = 0.024;  // cap 99 px, room for the 29 px blobs
  const EpgResult res = epg_classify(rec, hp);
  CHECK(res.classification == Classification::easy);
  CHECK(res.recall == 1.0);
  CHECK(metrics::sample_iou(binarize(res.pseudo_label, 0.5), truth) >= 0.5);
}

TEST_CASE("flat sample is hard and gets its point only") {
  const SampleRecord rec = record_for(GrayImage(64, 64, 0.2f), {{10, 11}});
  const EpgResult res = epg_classify(rec, Hyperparams{});
  CHECK(res.classification == Classification::hard);
  CHECK(res.recall == 0.0);
  CHECK(res.pseudo_label == point_label({64, 64}, rec.annotation));
}

TEST_CASE("one of two targets segmentable: recall 0.5 is hard") {
  const GrayImage img = blob_image({64, 64}, {{20, 20}}, 3.0, 0.8);
  const SampleRecord rec = record_for(img, {{20, 20}, {50, 50}});
  Hyperparams hp;
  hp.r = 0.024;
  const EpgResult res = epg_classify(rec, hp);
  CHECK(res.recall == 0.5);
  CHECK(res.classification == Classification::hard);
  CHECK(res.pseudo_label == point_label({64, 64}, rec.annotation));
}

TEST_CASE("area cap is ceil(r h w)") {
  Hyperparams hp;
  hp.r = 0.0015;
  CHECK(max_component_area({256, 256}, hp) == 99);
  hp.r = 0.024;
  CHECK(max_component_area({64, 64}, hp) == 99);
}

TEST_CASE("EPG properties over generated scenes") {
  datagen::DatasetOptions o;
  o.n = 40;
  o.test_n = 0;
  const auto ds = datagen::generate_dataset(o);
  Hyperparams hp;
  for (const auto& rec : ds.records) {
    const EpgResult a = epg_classify(rec, hp);
    // Points are always 1.
    for (const Pixel& p : rec.annotation.points) CHECK(a.pseudo_label[p] == 1.0f);
    // Determinism.
    CHECK(epg_classify(rec, hp).pseudo_label == a.pseudo_label);
    // No leakage: every positive non-point pixel lies in a kept component of some patch.
    BinaryMask allowed(rec.image.extent(), 0);
    for (const Pixel& p : rec.annotation.points) {
      const auto seg = segment_patch(rec.image, p, hp.d);
      std::vector<Pixel> local;
      for (const Pixel& q : rec.annotation.points) local.push_back({q.row - seg.offset.row, q.col - seg.offset.col});
      const auto v = validate_components(seg.raster, local, max_component_area(rec.image.extent(), hp));
      for (int r = 0; r < v.kept.height(); ++r)
        for (int c = 0; c < v.kept.width(); ++c)
          if (v.kept(r, c)) allowed(r + seg.offset.row, c + seg.offset.col) = 1;
    }
    for (int r = 0; r < allowed.height(); ++r)
      for (int c = 0; c < allowed.width(); ++c)
        if (a.pseudo_label(r, c) > 0.0f && !allowed(r, c))
          CHECK(std::find(rec.annotation.points.begin(), rec.annotation.points.end(), Pixel{r, c}) !=
                rec.annotation.points.end());
    // Monotonicity in the recall threshold.
    for (double t : {0.5, 0.8, 0.9, 1.0}) {
      Hyperparams h2 = hp;
      h2.recall_threshold = t;
      const bool easy_here = epg_classify(rec, h2).classification == Classification::easy;
      if (t >= hp.recall_threshold && a.classification == Classification::hard) CHECK_FALSE(easy_here);
    }
  }
}
