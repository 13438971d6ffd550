#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "pal/imaging.hpp"

using namespace pal;
using namespace pal::imaging;

namespace {

int reflect101(int i, int n) {
  while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
  return i;
}

// Full 2-D convolution with the outer-product kernel, no separability.
Field blur_oracle(const GrayImage& img, double sigma, int ksize) {
  const int half = ksize / 2;
  std::vector<double> k1;
  double s = 0;
  for (int i = -half; i <= half; ++i) {
    k1.push_back(std::exp(-(i * i) / (2 * sigma * sigma)));
    s += k1.back();
  }
  Field out(img.extent(), 0.0);
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) {
      double acc = 0;
      for (int i = -half; i <= half; ++i)
        for (int j = -half; j <= half; ++j)
          acc += k1[i + half] * k1[j + half] / (s * s) *
                 img(reflect101(r + i, img.height()), reflect101(c + j, img.width()));
      out(r, c) = acc;
    }
  return out;
}

BinaryMask from_rows(const std::vector<std::string>& rows) {
  BinaryMask m(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()), 0);
  for (int r = 0; r < m.height(); ++r)
    for (int c = 0; c < m.width(); ++c) m(r, c) = rows[r][c] == '#';
  return m;
}

BinaryMask random_mask(std::mt19937_64& rng, int h, int w, double p) {
  std::bernoulli_distribution bit(p);
  BinaryMask m(h, w, 0);
  for (auto& v : m.data()) v = bit(rng);
  return m;
}

bool subset(const BinaryMask& a, const BinaryMask& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a.data()[i] && !b.data()[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("gaussian blur keeps constants") {
  GrayImage img(12, 10, 0.5f);
  const GrayImage out = gaussian_blur(img, 1.0, 5);
  for (float v : out.data()) CHECK(v == doctest::Approx(0.5).epsilon(1e-7));
}

TEST_CASE("gaussian blur of an impulse matches direct 2-D convolution") {
  GrayImage img(15, 15, 0.0f);
  img(7, 7) = 1.0f;
  const GrayImage out = gaussian_blur(img, 1.0, 5);
  const Field ref = blur_oracle(img, 1.0, 5);
  double mass = 0;
  for (int r = 0; r < 15; ++r)
    for (int c = 0; c < 15; ++c) {
      CHECK(out(r, c) == doctest::Approx(ref(r, c)).epsilon(1e-6));
      mass += out(r, c);
    }
  const auto k = gaussian_kernel(1.0, 5);
  CHECK(out(7, 7) == doctest::Approx(k[2] * k[2]).epsilon(1e-6));
  CHECK(std::abs(mass - 1.0) < 1e-6);
}

TEST_CASE("gaussian blur of a checkerboard approaches the mean for large sigma") {
  GrayImage img(16, 16);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) img(r, c) = (r + c) % 2 ? 1.0f : 0.0f;
  const GrayImage out = gaussian_blur(img, 1000.0, 5);
  const Field ref = blur_oracle(img, 1000.0, 5);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) {
      CHECK(out(r, c) == doctest::Approx(ref(r, c)).epsilon(1e-6));
      CHECK(std::abs(out(r, c) - 0.5) <= 1.0 / 25.0 + 1e-6);
    }
}

TEST_CASE("gaussian blur rejects bad parameters") {
  GrayImage img(8, 8, 0.1f);
  CHECK_THROWS_AS(gaussian_blur(img, 1.0, 4), ParameterError);
  CHECK_THROWS_AS(gaussian_blur(img, 0.0, 5), ParameterError);
}

TEST_CASE("gaussian blur preserves the mean of a random image") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  GrayImage img(20, 20);
  for (auto& v : img.data()) v = u(rng);
  const GrayImage out = gaussian_blur(img, 1.0, 5);
  const Field ref = blur_oracle(img, 1.0, 5);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-5));
}

TEST_CASE("canny on a constant image is empty") {
  GrayImage img(16, 16, 0.4f);
  CHECK(count_nonzero(canny(img, 0.1, 0.3)) == 0);
}

TEST_CASE("canny on a vertical step gives a single one-pixel line") {
  // Left half 0.1, right half 0.9. The halved Sobel response is 1.6 on the
  // two columns either side of the step and 0 elsewhere; suppression keeps
  // the first of the two equal maxima along the gradient direction.
  GrayImage img(16, 16);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) img(r, c) = c < 8 ? 0.1f : 0.9f;
  const BinaryMask e = canny(img, 0.1, 0.3);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) CHECK_MESSAGE(e(r, c) == (c == 7 ? 1 : 0), "r=" << r << " c=" << c);
}

TEST_CASE("canny around a bright square is a closed ring") {
  GrayImage img(15, 15, 0.1f);
  for (int r = 5; r < 10; ++r)
    for (int c = 5; c < 10; ++c) img(r, c) = 0.9f;
  const BinaryMask e = canny(img, 0.1, 0.3);
  const auto comps = connected_components(e);
  REQUIRE(comps.size() == 1);
  // Closed: hole filling adds an interior, and the interior covers the square core.
  const BinaryMask filled = fill_holes(e);
  CHECK(count_nonzero(filled) > count_nonzero(e));
  for (int r = 6; r < 9; ++r)
    for (int c = 6; c < 9; ++c) CHECK(filled(r, c) == 1);
  // Ring hugs the square: nothing further than one pixel outside it.
  for (const Pixel& p : comps[0].pixels) {
    CHECK(p.row >= 4);
    CHECK(p.row <= 10);
    CHECK(p.col >= 4);
    CHECK(p.col <= 10);
  }
}

TEST_CASE("canny output lies on nonzero gradient") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (int t = 0; t < 20; ++t) {
    GrayImage img(12, 12);
    for (auto& v : img.data()) v = u(rng) > 0.7f ? u(rng) : 0.2f;
    const BinaryMask e = canny(img, 0.1, 0.3);
    const Gradients g = sobel(img);
    for (std::size_t i = 0; i < e.size(); ++i)
      if (e.data()[i]) CHECK(g.magnitude.data()[i] > 0.0);
  }
}

TEST_CASE("canny rejects low >= high") {
  GrayImage img(8, 8, 0.1f);
  CHECK_THROWS_AS(canny(img, 0.3, 0.3), ParameterError);
  CHECK_THROWS_AS(canny(img, 0.4, 0.3), ParameterError);
}

TEST_CASE("closing an empty mask is empty") { CHECK(count_nonzero(morph_close(BinaryMask(9, 9, 0), 1)) == 0); }

TEST_CASE("closing bridges a one-pixel gap in a ring") {
  // The dilated ring covers everything within one pixel of it except the
  // ring centre, so erosion clears exactly the interior and keeps the gap.
  const BinaryMask ring = from_rows({
      ".........",
      ".........",
      "..#####..",
      "..#...#..",
      "..#......",
      "..#...#..",
      "..#####..",
      ".........",
      ".........",
  });
  const BinaryMask expected = from_rows({
      ".........",
      ".........",
      "..#####..",
      "..#...#..",
      "..#...#..",
      "..#...#..",
      "..#####..",
      ".........",
      ".........",
  });
  const BinaryMask closed = morph_close(ring, 1);
  CHECK(closed == expected);
  CHECK(subset(ring, closed));
}

TEST_CASE("closing and hole filling are extensive and idempotent") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const BinaryMask m = random_mask(rng, 14, 11, 0.3);
    const BinaryMask c = morph_close(m, 1);
    CHECK(subset(m, c));
    CHECK(morph_close(c, 1) == c);
    const BinaryMask f = fill_holes(m);
    CHECK(subset(m, f));
    CHECK(fill_holes(f) == f);
  }
}

TEST_CASE("closing leaves a solid blob unchanged") {
  BinaryMask m(10, 10, 0);
  for (int r = 2; r < 7; ++r)
    for (int c = 3; c < 8; ++c) m(r, c) = 1;
  CHECK(morph_close(m, 1) == m);
}

TEST_CASE("hole filling") {
  SUBCASE("closed ring becomes a solid disk") {
    const BinaryMask ring = from_rows({
        ".....",
        ".###.",
        ".#.#.",
        ".###.",
        ".....",
    });
    const BinaryMask f = fill_holes(ring);
    CHECK(f(2, 2) == 1);
    CHECK(count_nonzero(f) == 9);
  }
  SUBCASE("open C-shape is unchanged") {
    const BinaryMask c = from_rows({
        ".....",
        ".###.",
        ".#...",
        ".###.",
        ".....",
    });
    CHECK(fill_holes(c) == c);
  }
  SUBCASE("nested rings fill solid") {
    const BinaryMask m = from_rows({
        ".........",
        ".#######.",
        ".#.....#.",
        ".#.###.#.",
        ".#.#.#.#.",
        ".#.###.#.",
        ".#.....#.",
        ".#######.",
        ".........",
    });
    const BinaryMask f = fill_holes(m);
    // Oracle: 4-connected flood of the background from the border.
    BinaryMask outside(9, 9, 0);
    std::vector<Pixel> stack;
    for (int i = 0; i < 9; ++i)
      for (Pixel p : {Pixel{0, i}, Pixel{8, i}, Pixel{i, 0}, Pixel{i, 8}})
        if (!m[p]) stack.push_back(p);
    while (!stack.empty()) {
      Pixel p = stack.back();
      stack.pop_back();
      if (!m.contains(p) || m[p] || outside[p]) continue;
      outside[p] = 1;
      stack.push_back({p.row + 1, p.col});
      stack.push_back({p.row - 1, p.col});
      stack.push_back({p.row, p.col + 1});
      stack.push_back({p.row, p.col - 1});
    }
    for (int r = 0; r < 9; ++r)
      for (int c = 0; c < 9; ++c) CHECK(f(r, c) == (outside(r, c) ? 0 : 1));
    CHECK(count_nonzero(f) == 49);
  }
  SUBCASE("4-connectivity: a diagonal gap does not leak") {
    const BinaryMask m = from_rows({
        ".....",
        "..#..",
        ".#.#.",
        "..#..",
        ".....",
    });
    CHECK(fill_holes(m)(2, 2) == 1);
  }
}

TEST_CASE("connected components") {
  SUBCASE("empty") { CHECK(connected_components(BinaryMask(5, 5, 0)).empty()); }
  SUBCASE("diagonal pixels are one component") {
    BinaryMask m(4, 4, 0);
    m(1, 1) = 1;
    m(2, 2) = 1;
    CHECK(connected_components(m).size() == 1);
  }
  SUBCASE("3x3 square") {
    BinaryMask m(8, 8, 0);
    for (int r = 2; r < 5; ++r)
      for (int c = 2; c < 5; ++c) m(r, c) = 1;
    const auto cc = connected_components(m);
    REQUIRE(cc.size() == 1);
    CHECK(cc[0].area == 9);
    CHECK(cc[0].centroid.row == 3.0);
    CHECK(cc[0].centroid.col == 3.0);
    CHECK(cc[0].rounded_centroid() == Pixel{3, 3});
  }
  SUBCASE("ordered by top-left of the bounding box") {
    const BinaryMask m = from_rows({
        "......#",
        "##....#",
        ".......",
        "...#...",
    });
    const auto cc = connected_components(m);
    REQUIRE(cc.size() == 3);
    CHECK(cc[0].bbox.min_col == 6);
    CHECK(cc[1].bbox.min_row == 1);
    CHECK(cc[2].bbox.min_row == 3);
  }
}

TEST_CASE("connected components partition the foreground") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 50; ++t) {
    const BinaryMask m = random_mask(rng, 13, 9, 0.35);
    const auto cc = connected_components(m);
    std::set<Pixel> seen;
    for (const auto& comp : cc) {
      CHECK(comp.area == comp.pixels.size());
      CHECK(comp.area >= 1);
      CHECK(comp.bbox.contains(comp.centroid.row, comp.centroid.col));
      for (const Pixel& p : comp.pixels) {
        CHECK(m[p] == 1);
        CHECK(seen.insert(p).second);
      }
    }
    CHECK(seen.size() == count_nonzero(m));
  }
}

TEST_CASE("edge extraction") {
  SUBCASE("single pixel") {
    BinaryMask m(3, 3, 0);
    m(1, 1) = 1;
    CHECK(extract_edges(m) == m);
  }
  SUBCASE("4x4 square has 12 edge pixels") {
    BinaryMask m(6, 6, 0);
    for (int r = 1; r < 5; ++r)
      for (int c = 1; c < 5; ++c) m(r, c) = 1;
    const BinaryMask e = extract_edges(m);
    CHECK(count_nonzero(e) == 12);
    for (int r = 2; r < 4; ++r)
      for (int c = 2; c < 4; ++c) CHECK(e(r, c) == 0);
  }
  SUBCASE("empty") { CHECK(count_nonzero(extract_edges(BinaryMask(4, 4, 0))) == 0); }
  SUBCASE("pixels on the image border are edges") {
    const BinaryMask full(3, 3, 1);
    const BinaryMask e = extract_edges(full);
    CHECK(count_nonzero(e) == 8);
    CHECK(e(1, 1) == 0);
  }
}

TEST_CASE("crop and paste") {
  GrayImage img(64, 64);
  for (int r = 0; r < 64; ++r)
    for (int c = 0; c < 64; ++c) img(r, c) = static_cast<float>((r * 64 + c) % 255) / 255.0f;

  SUBCASE("mid-image crop is full size") {
    const auto p = crop_patch(img, {32, 32}, 33);
    CHECK(p.raster.extent() == Extent{33, 33});
    CHECK(p.offset == Pixel{16, 16});
    CHECK(p.raster(0, 0) == img(16, 16));
  }
  SUBCASE("corner crop is clamped") {
    const auto p = crop_patch(img, {0, 0}, 33);
    CHECK(p.raster.extent() == Extent{17, 17});
    CHECK(p.offset == Pixel{0, 0});
  }
  SUBCASE("far corner") {
    const auto p = crop_patch(img, {63, 60}, 33);
    CHECK(p.raster.extent() == Extent{17, 20});
    CHECK(p.offset == Pixel{47, 44});
  }
  SUBCASE("paste inverts crop") {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> pos(0, 63);
    for (int t = 0; t < 30; ++t) {
      const Pixel centre{pos(rng), pos(rng)};
      const auto p = crop_patch(img, centre, 9);
      GrayImage blank(64, 64, 0.0f);
      paste_patch(blank, p);
      for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
          const bool inside = r >= p.offset.row && r < p.offset.row + p.raster.height() && c >= p.offset.col &&
                              c < p.offset.col + p.raster.width();
          CHECK(blank(r, c) == (inside ? img(r, c) : 0.0f));
        }
    }
  }
  SUBCASE("even side is rejected") { CHECK_THROWS_AS(crop_patch(img, {5, 5}, 4), ParameterError); }
}
