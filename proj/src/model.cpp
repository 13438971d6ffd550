#include "pal/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>

#include <json.hpp>

namespace pal::nn {
namespace {

struct LayerSpec {
  const char* name;
  int in;
  int out;
  int kernel;
  int stride;
};

constexpr LayerSpec kLayers[] = {
    {"enc1a", 1, 8, 3, 1},   {"enc1b", 8, 8, 3, 1},   {"down1", 8, 16, 3, 2},  {"enc2", 16, 16, 3, 1},
    {"down2", 16, 32, 3, 2}, {"bottleneck", 32, 32, 3, 1}, {"up2", 32, 16, 3, 1}, {"fuse2", 32, 16, 3, 1},
    {"up1", 16, 8, 3, 1},    {"fuse1", 16, 8, 3, 1},  {"head", 8, 1, 1, 1},
};
constexpr int kHead = 10;

template <typename T>
Mat<T> im2col(const Mat<T>& in, int h, int w, int k, int stride, int& ho, int& wo) {
  const int pad = k / 2;
  ho = (h + 2 * pad - k) / stride + 1;
  wo = (w + 2 * pad - k) / stride + 1;
  const int channels = static_cast<int>(in.rows());
  Mat<T> cols(channels * k * k, ho * wo);
  for (int c = 0; c < channels; ++c) {
    const T* src = in.row(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* dst = cols.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            std::fill(dst + oy * wo, dst + (oy + 1) * wo, T(0));
            continue;
          }
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            dst[oy * wo + ox] = (ix < 0 || ix >= w) ? T(0) : src[iy * w + ix];
          }
        }
      }
  }
  return cols;
}

template <typename T>
Mat<T> col2im(const Mat<T>& cols, int channels, int h, int w, int k, int stride, int ho, int wo) {
  const int pad = k / 2;
  Mat<T> out = Mat<T>::Zero(channels, h * w);
  for (int c = 0; c < channels; ++c) {
    T* dst = out.row(c).data();
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* src = cols.row((c * k + ky) * k + kx).data();
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[iy * w + ix] += src[oy * wo + ox];
          }
        }
      }
  }
  return out;
}

template <typename T>
Mat<T> upsample2(const Mat<T>& in, int h, int w) {
  Mat<T> out(in.rows(), 4 * h * w);
  const int w2 = 2 * w;
  for (Eigen::Index c = 0; c < in.rows(); ++c) {
    const T* src = in.row(c).data();
    T* dst = out.row(c).data();
    for (int y = 0; y < 2 * h; ++y)
      for (int x = 0; x < w2; ++x) dst[y * w2 + x] = src[(y / 2) * w + x / 2];
  }
  return out;
}

template <typename T>
Mat<T> upsample2_backward(const Mat<T>& grad, int h, int w) {
  Mat<T> out = Mat<T>::Zero(grad.rows(), h * w);
  const int w2 = 2 * w;
  for (Eigen::Index c = 0; c < grad.rows(); ++c) {
    const T* src = grad.row(c).data();
    T* dst = out.row(c).data();
    for (int y = 0; y < 2 * h; ++y)
      for (int x = 0; x < w2; ++x) dst[(y / 2) * w + x / 2] += src[y * w2 + x];
  }
  return out;
}

template <typename T>
Mat<T> concat(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

template <typename T>
void relu_inplace(Mat<T>& m) {
  m = m.cwiseMax(T(0));
}

template <typename T>
void relu_backward(Mat<T>& grad, const Mat<T>& act) {
  grad = (act.array() > T(0)).select(grad, T(0));
}

template <typename T>
Mat<T> conv_forward(const Conv2d<T>& layer, const Mat<T>& in, int h, int w, Mat<T>* cols_out, int& ho, int& wo) {
  Mat<T> cols = im2col(in, h, w, layer.kernel, layer.stride, ho, wo);
  Mat<T> out(layer.out_channels, ho * wo);
  out.noalias() = layer.weight * cols;
  out.colwise() += layer.bias;
  if (cols_out) *cols_out = std::move(cols);
  return out;
}

template <typename T>
Mat<T> conv_backward(Conv2d<T>& layer, const Mat<T>& grad_out, const Mat<T>& cols, int h, int w, int ho, int wo,
                     bool need_input_grad) {
  Mat<T> gw(layer.weight.rows(), layer.weight.cols());
  gw.noalias() = grad_out * cols.transpose();
  layer.grad_weight += gw.template cast<double>();
  layer.grad_bias += grad_out.rowwise().sum().template cast<double>();
  if (!need_input_grad) return {};
  Mat<T> dcols(cols.rows(), cols.cols());
  dcols.noalias() = layer.weight.transpose() * grad_out;
  return col2im(dcols, layer.in_channels, h, w, layer.kernel, layer.stride, ho, wo);
}

int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(std::string n, int in, int out, int k, int s)
    : name(std::move(n)),
      in_channels(in),
      out_channels(out),
      kernel(k),
      stride(s),
      weight(Mat<T>::Zero(out, in * k * k)),
      bias(Vec<T>::Zero(out)),
      grad_weight(Mat<double>::Zero(out, in * k * k)),
      grad_bias(Vec<double>::Zero(out)) {}

template <typename T>
BasicSegNet<T>::BasicSegNet(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (const auto& spec : kLayers) {
    Conv2d<T> layer(spec.name, spec.in, spec.out, spec.kernel, spec.stride);
    const double fan_in = static_cast<double>(spec.in * spec.kernel * spec.kernel);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) layer.weight.data()[i] = static_cast<T>(dist(rng));
    layers_.push_back(std::move(layer));
  }
}

template <typename T>
std::size_t BasicSegNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

template <typename T>
std::vector<ParamView<T>> BasicSegNet<T>::parameters() {
  std::vector<ParamView<T>> out;
  for (auto& l : layers_) {
    out.push_back({l.name + ".weight",
                   {l.out_channels, l.in_channels, l.kernel, l.kernel},
                   std::span<T>(l.weight.data(), static_cast<std::size_t>(l.weight.size())),
                   std::span<double>(l.grad_weight.data(), static_cast<std::size_t>(l.grad_weight.size()))});
    out.push_back({l.name + ".bias",
                   {l.out_channels},
                   std::span<T>(l.bias.data(), static_cast<std::size_t>(l.bias.size())),
                   std::span<double>(l.grad_bias.data(), static_cast<std::size_t>(l.grad_bias.size()))});
  }
  return out;
}

template <typename T>
void BasicSegNet<T>::zero_grad() {
  for (auto& l : layers_) {
    l.grad_weight.setZero();
    l.grad_bias.setZero();
  }
}

template <typename T>
Mat<T> BasicSegNet<T>::forward(const Mat<T>& input, int h, int w, Cache* cache) const {
  if (h % 4 != 0 || w % 4 != 0) throw ParameterError("network input extent must be divisible by 4");
  if (input.rows() != 1 || input.cols() != static_cast<Eigen::Index>(h) * w)
    throw ParameterError("network input must be a 1 x (h*w) row");

  std::vector<Mat<T>> cols(std::size(kLayers));
  std::vector<Mat<T>> act(std::size(kLayers) - 1);
  Mat<T>* col_slot = nullptr;
  int ho = 0, wo = 0;
  auto run = [&](int i, const Mat<T>& in, int ih, int iw, bool relu) {
    col_slot = cache ? &cols[i] : nullptr;
    Mat<T> out = conv_forward(layers_[i], in, ih, iw, col_slot, ho, wo);
    if (relu) relu_inplace(out);
    return out;
  };

  const int h2 = h / 2, w2 = w / 2, h4 = h / 4, w4 = w / 4;
  act[0] = run(0, input, h, w, true);
  act[1] = run(1, act[0], h, w, true);
  act[2] = run(2, act[1], h, w, true);
  act[3] = run(3, act[2], h2, w2, true);
  act[4] = run(4, act[3], h2, w2, true);
  act[5] = run(5, act[4], h4, w4, true);
  act[6] = run(6, upsample2(act[5], h4, w4), h2, w2, true);
  act[7] = run(7, concat(act[6], act[3]), h2, w2, true);
  act[8] = run(8, upsample2(act[7], h2, w2), h, w, true);
  act[9] = run(9, concat(act[8], act[1]), h, w, true);
  Mat<T> z = run(kHead, act[9], h, w, false);

  Mat<T> prob = (T(1) / (T(1) + (-z.array()).exp())).matrix();
  if (cache) {
    cache->height = h;
    cache->width = w;
    cache->cols = std::move(cols);
    cache->act = std::move(act);
    cache->prob = prob;
  }
  return prob;
}

template <typename T>
void BasicSegNet<T>::backward(const Cache& cache, const Mat<T>& grad_prob) {
  const int h = cache.height, w = cache.width;
  const int h2 = h / 2, w2 = w / 2, h4 = h / 4, w4 = w / 4;
  const auto& a = cache.act;
  const auto& c = cache.cols;

  Mat<T> g = (grad_prob.array() * cache.prob.array() * (T(1) - cache.prob.array())).matrix();
  g = conv_backward(layers_[kHead], g, c[kHead], h, w, h, w, true);

  relu_backward(g, a[9]);
  Mat<T> gcat = conv_backward(layers_[9], g, c[9], h, w, h, w, true);
  Mat<T> g8 = gcat.topRows(8);
  Mat<T> g1_skip = gcat.bottomRows(8);

  relu_backward(g8, a[8]);
  Mat<T> g_up1 = conv_backward(layers_[8], g8, c[8], h, w, h, w, true);
  Mat<T> g7 = upsample2_backward(g_up1, h2, w2);

  relu_backward(g7, a[7]);
  gcat = conv_backward(layers_[7], g7, c[7], h2, w2, h2, w2, true);
  Mat<T> g6 = gcat.topRows(16);
  Mat<T> g3_skip = gcat.bottomRows(16);

  relu_backward(g6, a[6]);
  Mat<T> g_up2 = conv_backward(layers_[6], g6, c[6], h2, w2, h2, w2, true);
  Mat<T> g5 = upsample2_backward(g_up2, h4, w4);

  relu_backward(g5, a[5]);
  Mat<T> g4 = conv_backward(layers_[5], g5, c[5], h4, w4, h4, w4, true);

  relu_backward(g4, a[4]);
  Mat<T> g3 = conv_backward(layers_[4], g4, c[4], h2, w2, h4, w4, true);
  g3 += g3_skip;

  relu_backward(g3, a[3]);
  Mat<T> g2 = conv_backward(layers_[3], g3, c[3], h2, w2, h2, w2, true);

  relu_backward(g2, a[2]);
  Mat<T> g1 = conv_backward(layers_[2], g2, c[2], h, w, h2, w2, true);
  g1 += g1_skip;

  relu_backward(g1, a[1]);
  Mat<T> g0 = conv_backward(layers_[1], g1, c[1], h, w, h, w, true);

  relu_backward(g0, a[0]);
  conv_backward(layers_[0], g0, c[0], h, w, h, w, false);
}

template class BasicSegNet<float>;
template class BasicSegNet<double>;

template <typename T>
Mat<T> prepare_input(const GrayImage& img, int& padded_h, int& padded_w) {
  const int h = img.height(), w = img.width();
  padded_h = (h + 3) / 4 * 4;
  padded_w = (w + 3) / 4 * 4;
  double mean = 0.0;
  for (float v : img.data()) mean += v;
  mean /= static_cast<double>(img.size());
  Mat<T> out(1, static_cast<Eigen::Index>(padded_h) * padded_w);
  for (int r = 0; r < padded_h; ++r)
    for (int c = 0; c < padded_w; ++c)
      out(0, r * padded_w + c) = static_cast<T>((img(reflect(r, h), reflect(c, w)) - mean) / kInputScale);
  return out;
}

template Mat<float> prepare_input<float>(const GrayImage&, int&, int&);
template Mat<double> prepare_input<double>(const GrayImage&, int&, int&);

// -----------------------------------------------------------------------------
// AdamW
// -----------------------------------------------------------------------------

template <typename T>
void AdamW::step(std::vector<ParamView<T>>& params) {
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.value.size(), 0.0);
      v_.emplace_back(p.value.size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw ParameterError("optimizer state does not match parameter list");
  ++t_;
  const double lr = config_.learning_rate;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      const double g = p.grad[j];
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      double x = static_cast<double>(p.value[j]);
      x -= lr * config_.weight_decay * x;
      x -= lr * (m[j] / bias1) / (std::sqrt(v[j] / bias2) + config_.eps);
      p.value[j] = static_cast<T>(x);
    }
  }
}

template void AdamW::step<float>(std::vector<ParamView<float>>&);
template void AdamW::step<double>(std::vector<ParamView<double>>&);

// -----------------------------------------------------------------------------
// TinySegNet
// -----------------------------------------------------------------------------

TinySegNet::TinySegNet(std::uint64_t seed, AdamWConfig optimizer) : net_(seed), optimizer_(optimizer) {}

SoftLabel TinySegNet::predict(const GrayImage& img) const {
  int ph = 0, pw = 0;
  const Mat<float> input = prepare_input<float>(img, ph, pw);
  const Mat<float> prob = net_.forward(input, ph, pw);
  SoftLabel out(img.extent());
  constexpr float lo = static_cast<float>(loss::kEps);
  constexpr float hi = 1.0f - static_cast<float>(loss::kEps);
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) out(r, c) = std::clamp(prob(0, r * pw + c), lo, hi);
  return out;
}

std::vector<SoftLabel> TinySegNet::forward(std::span<const GrayImage> batch) const {
  std::vector<SoftLabel> out;
  out.reserve(batch.size());
  for (const auto& img : batch) out.push_back(predict(img));
  return out;
}

double TinySegNet::train_step(std::span<const GrayImage> images, std::span<const BinaryMask> labels,
                              const loss::LossFn& loss_fn) {
  if (images.size() != labels.size()) throw ParameterError("train_step: image/label count mismatch");
  if (images.empty()) throw ParameterError("train_step: empty batch");
  net_.zero_grad();
  const double inv_batch = 1.0 / static_cast<double>(images.size());
  double total = 0.0;
  BasicSegNet<float>::Cache cache;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const GrayImage& img = images[i];
    if (labels[i].extent() != img.extent()) throw ParameterError("train_step: label shape differs from image");
    int ph = 0, pw = 0;
    const Mat<float> input = prepare_input<float>(img, ph, pw);
    const Mat<float> prob = net_.forward(input, ph, pw, &cache);

    Field p(img.extent());
    for (int r = 0; r < img.height(); ++r)
      for (int c = 0; c < img.width(); ++c) p(r, c) = prob(0, r * pw + c);
    const loss::LossOutput lo = loss_fn(p, labels[i]);
    if (!std::isfinite(lo.value)) throw NonFiniteLoss("non-finite loss in train_step");
    total += lo.value;

    Mat<float> grad = Mat<float>::Zero(1, prob.cols());
    for (int r = 0; r < img.height(); ++r)
      for (int c = 0; c < img.width(); ++c) grad(0, r * pw + c) = static_cast<float>(lo.gradient(r, c) * inv_batch);
    net_.backward(cache, grad);
  }
  auto params = net_.parameters();
  for (const auto& p : params)
    for (double g : p.grad)
      if (!std::isfinite(g)) throw NonFiniteLoss("non-finite gradient in " + p.name);
  optimizer_.step(params);
  return total * inv_batch;
}

std::string TinySegNet::save() const {
  auto& self = const_cast<BasicSegNet<float>&>(net_);
  auto params = self.parameters();
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& p : params) {
    const std::size_t bytes = p.value.size() * 4;
    tensors.push_back({{"name", p.name}, {"shape", p.shape}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  const std::string header = nlohmann::json{{"format", "tinysegnet"}, {"dtype", "float32-le"}, {"tensors", tensors}}.dump();

  std::string out = "PALNET1\n";
  const auto len = static_cast<std::uint32_t>(header.size());
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((len >> (8 * b)) & 0xFF));
  out += header;
  for (const auto& p : params)
    for (float v : p.value) {
      const auto bits = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
    }
  return out;
}

void TinySegNet::load(std::string_view blob) {
  constexpr std::string_view magic = "PALNET1\n";
  if (blob.size() < magic.size() + 4 || blob.substr(0, magic.size()) != magic) throw FormatError("not a model blob");
  const auto* u = reinterpret_cast<const unsigned char*>(blob.data());
  const std::uint32_t len = u[8] | u[9] << 8 | u[10] << 16 | static_cast<std::uint32_t>(u[11]) << 24;
  const std::size_t data_start = 12 + static_cast<std::size_t>(len);
  if (blob.size() < data_start) throw FormatError("truncated model header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(blob.substr(12, len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model header: ") + e.what());
  }

  auto params = net_.parameters();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size()) throw FormatError("model blob has the wrong number of tensors");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    if (t.at("name").get<std::string>() != params[i].name || t.at("shape").get<std::vector<int>>() != params[i].shape)
      throw FormatError("model tensor mismatch at " + params[i].name);
    const auto offset = t.at("offset").get<std::size_t>();
    const auto bytes = t.at("bytes").get<std::size_t>();
    if (bytes != params[i].value.size() * 4 || data_start + offset + bytes > blob.size())
      throw FormatError("model tensor " + params[i].name + " out of range");
    const auto* p = u + data_start + offset;
    for (std::size_t j = 0; j < params[i].value.size(); ++j) {
      const std::uint32_t bits =
          p[4 * j] | p[4 * j + 1] << 8 | p[4 * j + 2] << 16 | static_cast<std::uint32_t>(p[4 * j + 3]) << 24;
      params[i].value[j] = std::bit_cast<float>(bits);
    }
  }
}

}  // namespace pal::nn
