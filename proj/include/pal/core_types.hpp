#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace pal {

// -----------------------------------------------------------------------------
// Errors
// -----------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument to an operation (even kernel size, low >= high, ...).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// Malformed file or metadata.
class FormatError : public Error {
 public:
  using Error::Error;
};

// -----------------------------------------------------------------------------
// Geometry
// -----------------------------------------------------------------------------

struct Pixel {
  int row = 0;
  int col = 0;

  friend bool operator==(const Pixel&, const Pixel&) = default;
  friend auto operator<=>(const Pixel&, const Pixel&) = default;
};

struct Extent {
  int height = 0;
  int width = 0;

  std::size_t area() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  bool contains(Pixel p) const { return p.row >= 0 && p.col >= 0 && p.row < height && p.col < width; }

  friend bool operator==(const Extent&, const Extent&) = default;
};

// -----------------------------------------------------------------------------
// Rasters
// -----------------------------------------------------------------------------

struct image_tag {};
struct label_tag {};

/// Row-major 2-D raster. The tag keeps images, labels and plain fields from
/// being passed for one another.
template <typename T, typename Tag = void>
class Raster {
 public:
  using value_type = T;
  using tag_type = Tag;

  Raster() = default;
  Raster(int height, int width, T fill = T{}) : extent_{height, width}, data_(checked_area(height, width), fill) {}
  explicit Raster(Extent e, T fill = T{}) : Raster(e.height, e.width, fill) {}
  Raster(int height, int width, std::vector<T> data) : extent_{height, width}, data_(std::move(data)) {
    if (data_.size() != checked_area(height, width)) throw ParameterError("raster data length does not match extent");
  }

  int height() const { return extent_.height; }
  int width() const { return extent_.width; }
  Extent extent() const { return extent_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  bool contains(Pixel p) const { return extent_.contains(p); }

  T& operator()(int row, int col) { return data_[index(row, col)]; }
  const T& operator()(int row, int col) const { return data_[index(row, col)]; }
  T& operator[](Pixel p) { return (*this)(p.row, p.col); }
  const T& operator[](Pixel p) const { return (*this)(p.row, p.col); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  static std::size_t checked_area(int height, int width) {
    if (height < 0 || width < 0) throw ParameterError("negative raster extent");
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  std::size_t index(int row, int col) const {
    return static_cast<std::size_t>(row) * static_cast<std::size_t>(extent_.width) + static_cast<std::size_t>(col);
  }

  Extent extent_{};
  std::vector<T> data_;
};

/// Single-channel intensity image, values in [0,1].
using GrayImage = Raster<float, image_tag>;
/// Evolving pseudo-label or predictor output, values in [0,1].
using SoftLabel = Raster<float, label_tag>;
/// 0/1 membership mask.
using BinaryMask = Raster<std::uint8_t>;
/// Double-precision scalar field; loss inputs and gradients.
using Field = Raster<double>;

/// Copies values across raster kinds (e.g. image -> field).
template <typename Out, typename T, typename Tag>
Out convert(const Raster<T, Tag>& in) {
  Out out(in.extent());
  auto src = in.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<typename Out::value_type>(src[i]);
  return out;
}

/// Pixels strictly above `threshold` become 1.
template <typename T, typename Tag>
BinaryMask binarize(const Raster<T, Tag>& in, double threshold) {
  BinaryMask out(in.extent());
  auto src = in.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<double>(src[i]) > threshold ? 1 : 0;
  return out;
}

std::size_t count_nonzero(const BinaryMask& mask);

/// Throws ParameterError unless extent >= 8x8 and every value is in [0,1].
void check_gray_image(const GrayImage& img);

// -----------------------------------------------------------------------------
// Annotations and samples
// -----------------------------------------------------------------------------

enum class PointKind { coarse, centroid };
enum class Pool { preparation, training };

struct PointAnnotation {
  std::vector<Pixel> points;
  PointKind kind = PointKind::coarse;

  friend bool operator==(const PointAnnotation&, const PointAnnotation&) = default;
};

struct SampleRecord {
  std::string id;
  GrayImage image;
  PointAnnotation annotation;
  SoftLabel pseudo_label;
  Pool pool = Pool::preparation;
  std::optional<int> admitted_epoch;
};

/// Pseudo-label with every annotation point set to 1.0 and nothing else.
SoftLabel point_label(Extent extent, const PointAnnotation& annotation);

/// Sets every annotation point of `label` to 1.0.
void stamp_points(SoftLabel& label, const PointAnnotation& annotation);

// -----------------------------------------------------------------------------
// Hyperparameters
// -----------------------------------------------------------------------------

struct Hyperparams {
  int total_epochs = 60;
  double prestart_frac = 0.2;
  double refine_frac = 0.8;
  int update_period = 5;
  double tm_init = 0.2;
  double tf = 10.0;
  // Per-round decay of uncovered label pixels. 0.823^10 over the ~10 update
  // rounds of a 60-epoch run equals 0.97^64 over a 400-epoch run.
  double lambda_decay = 0.823;
  double tb = 0.5;
  double k = 0.5;
  // Target-area ratio against the full image: the mean target area of the
  // default synthetic set (~24 px) over 64x64.
  double r = 0.006;
  int d = 33;
  double alpha_edge = 4.0;
  double recall_threshold = 0.8;
  double learning_rate = 1e-3;
  int batch_size = 16;
  double binarize_threshold = 0.5;
  double pred_threshold = 0.5;
  std::uint64_t seed = 42;

  friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// Returns the names of violated invariants; empty when valid.
std::vector<std::string> check_hyperparams(const Hyperparams& hp);

/// Throws ParameterError listing every violated invariant.
void require_valid(const Hyperparams& hp);

// -----------------------------------------------------------------------------
// Validation
// -----------------------------------------------------------------------------

struct Violation {
  std::string name;
  std::string detail;
};

/// Every violated SampleRecord invariant, by name. Empty list means ok.
std::vector<Violation> validate(const SampleRecord& record);

// -----------------------------------------------------------------------------
// JSON
// -----------------------------------------------------------------------------

std::string to_string(PointKind kind);
std::string to_string(Pool pool);
PointKind point_kind_from_string(const std::string& s);
Pool pool_from_string(const std::string& s);

void to_json(nlohmann::json& j, const Pixel& p);
void from_json(const nlohmann::json& j, Pixel& p);
void to_json(nlohmann::json& j, const PointAnnotation& a);
void from_json(const nlohmann::json& j, PointAnnotation& a);
void to_json(nlohmann::json& j, const Hyperparams& hp);

/// Strict parse: unknown keys and wrong types throw FormatError.
Hyperparams hyperparams_from_json(const nlohmann::json& j);

/// Metadata only (id, points, kind, pool, admitted_epoch); rasters travel as files.
nlohmann::json record_metadata(const SampleRecord& record);

struct RecordMetadata {
  std::string id;
  PointAnnotation annotation;
  Pool pool = Pool::preparation;
  std::optional<int> admitted_epoch;
};

RecordMetadata record_metadata_from_json(const nlohmann::json& j);

}  // namespace pal
