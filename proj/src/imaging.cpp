#include "pal/imaging.hpp"

#include <cmath>
#include <deque>
#include <numbers>

namespace pal::imaging {
namespace {

// Reflect-101 index: -1 -> 1, n -> n-2.
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

constexpr int kNeighbours8[8][2] = {{-1, -1}, {-1, 0}, {-1, 1}, {0, -1}, {0, 1}, {1, -1}, {1, 0}, {1, 1}};
constexpr int kNeighbours4[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};

}  // namespace

Pixel ConnectedComponent::rounded_centroid() const {
  return Pixel{static_cast<int>(std::lround(centroid.row)), static_cast<int>(std::lround(centroid.col))};
}

std::vector<double> gaussian_kernel(double sigma, int ksize) {
  if (ksize < 1 || ksize % 2 == 0) throw ParameterError("gaussian ksize must be odd and positive");
  if (!(sigma > 0.0)) throw ParameterError("gaussian sigma must be positive");
  std::vector<double> k(static_cast<std::size_t>(ksize));
  const int half = ksize / 2;
  double sum = 0.0;
  for (int i = -half; i <= half; ++i) {
    k[i + half] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += k[i + half];
  }
  for (double& v : k) v /= sum;
  return k;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma, int ksize) {
  const auto k = gaussian_kernel(sigma, ksize);
  const int half = ksize / 2;
  const int h = img.height();
  const int w = img.width();

  Field tmp(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = -half; i <= half; ++i) acc += k[i + half] * img(r, reflect(c + i, w));
      tmp(r, c) = acc;
    }

  GrayImage out(h, w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = -half; i <= half; ++i) acc += k[i + half] * tmp(reflect(r + i, h), c);
      out(r, c) = static_cast<float>(acc);
    }
  return out;
}

Gradients sobel(const GrayImage& img) {
  const int h = img.height();
  const int w = img.width();
  Gradients g{Field(h, w), Field(h, w), Field(h, w)};
  auto at = [&](int r, int c) { return static_cast<double>(img(reflect(r, h), reflect(c, w))); };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double gx = (at(r - 1, c + 1) + 2.0 * at(r, c + 1) + at(r + 1, c + 1) - at(r - 1, c - 1) -
                         2.0 * at(r, c - 1) - at(r + 1, c - 1)) /
                        2.0;
      const double gy = (at(r + 1, c - 1) + 2.0 * at(r + 1, c) + at(r + 1, c + 1) - at(r - 1, c - 1) -
                         2.0 * at(r - 1, c) - at(r - 1, c + 1)) /
                        2.0;
      g.gx(r, c) = gx;
      g.gy(r, c) = gy;
      g.magnitude(r, c) = std::hypot(gx, gy);
    }
  return g;
}

BinaryMask canny(const GrayImage& img, double low, double high) {
  if (!(low >= 0.0 && low < high && high <= 1.0)) throw ParameterError("canny requires 0 <= low < high <= 1");
  const int h = img.height();
  const int w = img.width();
  const Gradients g = sobel(img);
  auto mag = [&](int r, int c) { return (r < 0 || c < 0 || r >= h || c >= w) ? 0.0 : g.magnitude(r, c); };

  // 0: strong, 1: weak, 2: suppressed
  Raster<std::uint8_t> cls(h, w, 2);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double m = g.magnitude(r, c);
      if (!(m > low)) continue;
      double angle = std::atan2(g.gy(r, c), g.gx(r, c)) * 180.0 / std::numbers::pi;
      if (angle < 0.0) angle += 180.0;
      int dr = 0, dc = 1;  // horizontal gradient
      if (angle >= 22.5 && angle < 67.5) {
        dr = 1;
        dc = 1;
      } else if (angle >= 67.5 && angle < 112.5) {
        dr = 1;
        dc = 0;
      } else if (angle >= 112.5 && angle < 157.5) {
        dr = 1;
        dc = -1;
      }
      const double prev = mag(r - dr, c - dc);
      const double next = mag(r + dr, c + dc);
      // Asymmetric comparison keeps exactly one pixel across a plateau.
      if (m > prev && m >= next) cls(r, c) = m > high ? 0 : 1;
    }

  BinaryMask out(h, w, 0);
  std::deque<Pixel> queue;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      if (cls(r, c) == 0) {
        out(r, c) = 1;
        queue.push_back({r, c});
      }
  while (!queue.empty()) {
    const Pixel p = queue.front();
    queue.pop_front();
    for (const auto& d : kNeighbours8) {
      const Pixel q{p.row + d[0], p.col + d[1]};
      if (!out.contains(q) || out[q] || cls[q] != 1) continue;
      out[q] = 1;
      queue.push_back(q);
    }
  }
  return out;
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
  const int h = mask.height();
  const int w = mask.width();
  BinaryMask out(h, w, 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      std::uint8_t v = 0;
      for (int dr = -radius; dr <= radius && !v; ++dr)
        for (int dc = -radius; dc <= radius; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr >= 0 && cc >= 0 && rr < h && cc < w && mask(rr, cc)) {
            v = 1;
            break;
          }
        }
      out(r, c) = v;
    }
  return out;
}

BinaryMask erode(const BinaryMask& mask, int radius) {
  const int h = mask.height();
  const int w = mask.width();
  BinaryMask out(h, w, 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      std::uint8_t v = 1;
      for (int dr = -radius; dr <= radius && v; ++dr)
        for (int dc = -radius; dc <= radius; ++dc) {
          const int rr = r + dr, cc = c + dc;
          if (rr >= 0 && cc >= 0 && rr < h && cc < w && !mask(rr, cc)) {
            v = 0;
            break;
          }
        }
      out(r, c) = v;
    }
  return out;
}

BinaryMask morph_close(const BinaryMask& mask, int radius) {
  if (radius < 1) throw ParameterError("closing radius must be >= 1");
  return erode(dilate(mask, radius), radius);
}

BinaryMask fill_holes(const BinaryMask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  BinaryMask outside(h, w, 0);
  std::deque<Pixel> queue;
  auto seed = [&](int r, int c) {
    if (!mask(r, c) && !outside(r, c)) {
      outside(r, c) = 1;
      queue.push_back({r, c});
    }
  };
  for (int r = 0; r < h; ++r) {
    seed(r, 0);
    seed(r, w - 1);
  }
  for (int c = 0; c < w; ++c) {
    seed(0, c);
    seed(h - 1, c);
  }
  while (!queue.empty()) {
    const Pixel p = queue.front();
    queue.pop_front();
    for (const auto& d : kNeighbours4) {
      const Pixel q{p.row + d[0], p.col + d[1]};
      if (mask.contains(q) && !mask[q] && !outside[q]) {
        outside[q] = 1;
        queue.push_back(q);
      }
    }
  }
  BinaryMask out(h, w, 0);
  auto src = outside.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] ? 0 : 1;
  return out;
}

std::vector<ConnectedComponent> connected_components(const BinaryMask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  Raster<std::uint8_t> seen(h, w, 0);
  std::vector<ConnectedComponent> out;
  std::deque<Pixel> queue;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!mask(r, c) || seen(r, c)) continue;
      ConnectedComponent comp;
      seen(r, c) = 1;
      queue.push_back({r, c});
      while (!queue.empty()) {
        const Pixel p = queue.front();
        queue.pop_front();
        comp.pixels.push_back(p);
        for (const auto& d : kNeighbours8) {
          const Pixel q{p.row + d[0], p.col + d[1]};
          if (mask.contains(q) && mask[q] && !seen[q]) {
            seen[q] = 1;
            queue.push_back(q);
          }
        }
      }
      std::sort(comp.pixels.begin(), comp.pixels.end());
      comp.area = comp.pixels.size();
      comp.bbox = {comp.pixels.front().row, comp.pixels.front().col, comp.pixels.front().row, comp.pixels.front().col};
      double sr = 0.0, sc = 0.0;
      for (const Pixel& p : comp.pixels) {
        comp.bbox.min_row = std::min(comp.bbox.min_row, p.row);
        comp.bbox.max_row = std::max(comp.bbox.max_row, p.row);
        comp.bbox.min_col = std::min(comp.bbox.min_col, p.col);
        comp.bbox.max_col = std::max(comp.bbox.max_col, p.col);
        sr += p.row;
        sc += p.col;
      }
      comp.centroid = {sr / static_cast<double>(comp.area), sc / static_cast<double>(comp.area)};
      out.push_back(std::move(comp));
    }
  std::stable_sort(out.begin(), out.end(), [](const ConnectedComponent& a, const ConnectedComponent& b) {
    if (a.bbox.min_row != b.bbox.min_row) return a.bbox.min_row < b.bbox.min_row;
    return a.bbox.min_col < b.bbox.min_col;
  });
  return out;
}

BinaryMask extract_edges(const BinaryMask& mask) {
  const int h = mask.height();
  const int w = mask.width();
  BinaryMask out(h, w, 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      if (!mask(r, c)) continue;
      for (const auto& d : kNeighbours4) {
        const Pixel q{r + d[0], c + d[1]};
        if (!mask.contains(q) || !mask[q]) {
          out(r, c) = 1;
          break;
        }
      }
    }
  return out;
}

}  // namespace pal::imaging
