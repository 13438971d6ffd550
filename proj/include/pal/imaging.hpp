#pragma once

#include <algorithm>
#include <vector>

#include "pal/core_types.hpp"

namespace pal::imaging {

struct BoundingBox {
  int min_row = 0;
  int min_col = 0;
  int max_row = 0;
  int max_col = 0;

  bool contains(double row, double col) const { return row >= min_row && row <= max_row && col >= min_col && col <= max_col; }
};

struct Centroid {
  double row = 0.0;
  double col = 0.0;
};

struct ConnectedComponent {
  std::vector<Pixel> pixels;  // raster order
  BoundingBox bbox;
  std::size_t area = 0;
  Centroid centroid;

  bool contains(Pixel p) const { return std::binary_search(pixels.begin(), pixels.end(), p); }
  /// Centroid rounded half-away-from-zero to the nearest pixel.
  Pixel rounded_centroid() const;
};

/// Separable Gaussian blur with reflect-101 borders; kernel normalized to sum 1.
GrayImage gaussian_blur(const GrayImage& img, double sigma = 1.0, int ksize = 5);

/// Normalized 1-D Gaussian taps, length ksize.
std::vector<double> gaussian_kernel(double sigma, int ksize);

/// Halved Sobel responses: a ramp of slope g (per pixel) gives magnitude 4g,
/// a step of contrast c gives 2c on the pixels either side of it.
struct Gradients {
  Field gx;
  Field gy;
  Field magnitude;
};
Gradients sobel(const GrayImage& img);

/// Canny: Sobel, 4-direction non-maximum suppression, double threshold on
/// magnitude (strict), 8-connected hysteresis from strong pixels.
BinaryMask canny(const GrayImage& img, double low = 0.1, double high = 0.3);

/// Binary dilation / erosion with a (2r+1)^2 square. Out-of-bounds pixels count as
/// background for dilation and foreground for erosion.
BinaryMask dilate(const BinaryMask& mask, int radius);
BinaryMask erode(const BinaryMask& mask, int radius);
BinaryMask morph_close(const BinaryMask& mask, int radius = 1);

/// Background pixels not 4-connected to the border become foreground.
BinaryMask fill_holes(const BinaryMask& mask);

/// 8-connected components, ordered by (bbox.min_row, bbox.min_col) then first pixel.
std::vector<ConnectedComponent> connected_components(const BinaryMask& mask);

/// Foreground pixels with a 4-neighbour that is background or off-image.
BinaryMask extract_edges(const BinaryMask& mask);

// -----------------------------------------------------------------------------
// Patches
// -----------------------------------------------------------------------------

template <typename R>
struct Patch {
  R raster;
  Pixel offset;  // top-left of the patch in source coordinates
};

/// side x side window centred on `center`, clamped to the image.
template <typename T, typename Tag>
Patch<Raster<T, Tag>> crop_patch(const Raster<T, Tag>& src, Pixel center, int side) {
  if (side < 1 || side % 2 == 0) throw ParameterError("crop side must be odd and positive");
  const int half = side / 2;
  const int r0 = std::max(0, center.row - half);
  const int c0 = std::max(0, center.col - half);
  const int r1 = std::min(src.height(), center.row + half + 1);
  const int c1 = std::min(src.width(), center.col + half + 1);
  Patch<Raster<T, Tag>> out{Raster<T, Tag>(std::max(0, r1 - r0), std::max(0, c1 - c0)), Pixel{r0, c0}};
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) out.raster(r - r0, c - c0) = src(r, c);
  return out;
}

/// Writes the patch back at its offset (overwrite).
template <typename T, typename Tag>
void paste_patch(Raster<T, Tag>& dst, const Patch<Raster<T, Tag>>& patch) {
  for (int r = 0; r < patch.raster.height(); ++r)
    for (int c = 0; c < patch.raster.width(); ++c) {
      const Pixel p{patch.offset.row + r, patch.offset.col + c};
      if (dst.contains(p)) dst[p] = patch.raster(r, c);
    }
}

/// Pixelwise max merge of the patch into dst.
template <typename T, typename Tag>
void paste_patch_max(Raster<T, Tag>& dst, const Patch<Raster<T, Tag>>& patch) {
  for (int r = 0; r < patch.raster.height(); ++r)
    for (int c = 0; c < patch.raster.width(); ++c) {
      const Pixel p{patch.offset.row + r, patch.offset.col + c};
      if (dst.contains(p)) dst[p] = std::max(dst[p], patch.raster(r, c));
    }
}

}  // namespace pal::imaging
