#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pal/core_types.hpp"
#include "pal/loss.hpp"

namespace pal::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Loss or gradient went non-finite during training.
class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

/// Anything that maps images to per-pixel target probabilities and can be
/// trained on binary labels.
class Predictor {
 public:
  virtual ~Predictor() = default;

  /// Probability maps in (0,1), one per image, same extent as the image.
  virtual std::vector<SoftLabel> forward(std::span<const GrayImage> batch) const = 0;

  /// One optimizer step on the batch; returns the mean loss before the update.
  virtual double train_step(std::span<const GrayImage> images, std::span<const BinaryMask> labels,
                            const loss::LossFn& loss) = 0;

  virtual std::string save() const = 0;
  virtual void load(std::string_view blob) = 0;
  virtual std::size_t parameter_count() const = 0;

  /// Optimizer step size for subsequent train_step calls.
  virtual void set_learning_rate(double lr) = 0;
};

/// Named view of one parameter tensor and its gradient accumulator.
template <typename T>
struct ParamView {
  std::string name;
  std::vector<int> shape;
  std::span<T> value;
  std::span<double> grad;
};

template <typename T>
struct Conv2d {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  Mat<T> weight;  // out x (in * k * k)
  Vec<T> bias;
  Mat<double> grad_weight;
  Vec<double> grad_bias;

  Conv2d() = default;
  Conv2d(std::string name, int in, int out, int kernel, int stride);
};

/// Encoder-decoder: two stride-2 stages (8 -> 16 -> 32 channels), bottleneck,
/// two nearest-upsample + conv stages with concatenated skips, 1x1 sigmoid head.
template <typename T>
class BasicSegNet {
 public:
  /// Per-image activations kept for backward.
  struct Cache {
    int height = 0;
    int width = 0;
    std::vector<Mat<T>> cols;  // im2col input of each conv, layer order
    std::vector<Mat<T>> act;   // post-ReLU outputs, layer order
    Mat<T> prob;               // 1 x (h*w)
  };

  explicit BasicSegNet(std::uint64_t seed = 0);

  std::size_t parameter_count() const;
  std::vector<ParamView<T>> parameters();
  void zero_grad();

  /// h, w must be divisible by 4. Input is a 1 x (h*w) row.
  Mat<T> forward(const Mat<T>& input, int height, int width, Cache* cache = nullptr) const;

  /// Accumulates parameter gradients given d loss / d probability.
  void backward(const Cache& cache, const Mat<T>& grad_prob);

  std::vector<Conv2d<T>>& layers() { return layers_; }
  const std::vector<Conv2d<T>>& layers() const { return layers_; }

 private:
  std::vector<Conv2d<T>> layers_;
};

extern template class BasicSegNet<float>;
extern template class BasicSegNet<double>;

/// Input normalization: subtract the image mean, divide by a fixed scale.
inline constexpr double kInputScale = 0.15;

/// Reflect-pads to a multiple of 4 and normalizes into a 1 x (h*w) row.
template <typename T>
Mat<T> prepare_input(const GrayImage& img, int& padded_h, int& padded_w);

// -----------------------------------------------------------------------------
// Optimizer
// -----------------------------------------------------------------------------

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

/// Adaptive moments with decoupled weight decay:
///   p <- p - lr * wd * p
///   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  template <typename T>
  void step(std::vector<ParamView<T>>& params);

  const AdamWConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  long long steps() const { return t_; }

 private:
  AdamWConfig config_;
  long long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// -----------------------------------------------------------------------------
// TinySegNet
// -----------------------------------------------------------------------------

class TinySegNet final : public Predictor {
 public:
  explicit TinySegNet(std::uint64_t seed = 0, AdamWConfig optimizer = {});

  std::vector<SoftLabel> forward(std::span<const GrayImage> batch) const override;
  SoftLabel predict(const GrayImage& img) const;
  double train_step(std::span<const GrayImage> images, std::span<const BinaryMask> labels,
                    const loss::LossFn& loss) override;

  /// "PALNET1\n", u32 LE header length, JSON header (name, shape, offset, bytes
  /// per tensor), then little-endian float32 data.
  std::string save() const override;
  void load(std::string_view blob) override;
  std::size_t parameter_count() const override { return net_.parameter_count(); }
  void set_learning_rate(double lr) override { optimizer_.set_learning_rate(lr); }

  BasicSegNet<float>& network() { return net_; }
  AdamW& optimizer() { return optimizer_; }

 private:
  BasicSegNet<float> net_;
  AdamW optimizer_;
};

}  // namespace pal::nn
