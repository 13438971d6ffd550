#include "pal/loss.hpp"

#include <algorithm>
#include <cmath>

#include "pal/imaging.hpp"

namespace pal::loss {
namespace {

void check_inputs(const Field& prediction, const BinaryMask& target) {
  if (prediction.extent() != target.extent()) throw ParameterError("loss: prediction and target shapes differ");
  if (prediction.empty()) throw ParameterError("loss: empty prediction");
  for (auto t : target.data()) {
    if (t > 1) throw ParameterError("loss: target must be binary");
  }
}

double clamp_prob(double p) { return std::clamp(p, kEps, 1.0 - kEps); }

double bce(double p, double t) { return -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p)); }

// d bce / d p
double bce_grad(double p, double t) { return (p - t) / (p * (1.0 - p)); }

double median_of(std::vector<double> values) {
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lower + upper) / 2.0;
}

}  // namespace

MiningSet eedm_mining_set(const Field& prediction, const BinaryMask& target, double alpha) {
  check_inputs(prediction, target);
  const BinaryMask edges = imaging::extract_edges(target);
  MiningSet m;
  m.pixel_losses.resize(prediction.size());
  auto P = prediction.data();
  auto T = target.data();
  auto E = edges.data();
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double w = E[i] ? alpha : 1.0;
    m.pixel_losses[i] = w * bce(clamp_prob(P[i]), T[i]);
  }
  m.median = median_of(m.pixel_losses);
  m.selected = BinaryMask(prediction.extent(), 0);
  auto S = m.selected.data();
  for (std::size_t i = 0; i < P.size(); ++i) S[i] = m.pixel_losses[i] >= m.median ? 1 : 0;
  return m;
}

LossOutput eedm_loss(const Field& prediction, const BinaryMask& target, double alpha) {
  const MiningSet m = eedm_mining_set(prediction, target, alpha);
  const BinaryMask edges = imaging::extract_edges(target);
  auto P = prediction.data();
  auto T = target.data();
  auto E = edges.data();
  auto S = m.selected.data();

  std::size_t count = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    if (!S[i]) continue;
    sum += m.pixel_losses[i];
    ++count;
  }
  LossOutput out{sum / static_cast<double>(count), Field(prediction.extent(), 0.0)};
  auto G = out.gradient.data();
  for (std::size_t i = 0; i < P.size(); ++i) {
    if (!S[i]) continue;
    const double w = E[i] ? alpha : 1.0;
    G[i] = w * bce_grad(clamp_prob(P[i]), T[i]) / static_cast<double>(count);
  }
  return out;
}

LossOutput bce_loss(const Field& prediction, const BinaryMask& target) {
  check_inputs(prediction, target);
  auto P = prediction.data();
  auto T = target.data();
  const double n = static_cast<double>(P.size());
  LossOutput out{0.0, Field(prediction.extent(), 0.0)};
  auto G = out.gradient.data();
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double p = clamp_prob(P[i]);
    out.value += bce(p, T[i]);
    G[i] = bce_grad(p, T[i]) / n;
  }
  out.value /= n;
  return out;
}

LossOutput dice_loss(const Field& prediction, const BinaryMask& target, double smooth) {
  check_inputs(prediction, target);
  auto P = prediction.data();
  auto T = target.data();
  double inter = 0.0, sp = 0.0, st = 0.0;
  for (std::size_t i = 0; i < P.size(); ++i) {
    inter += P[i] * T[i];
    sp += P[i];
    st += T[i];
  }
  const double num = 2.0 * inter + smooth;
  const double den = sp + st + smooth;
  LossOutput out{1.0 - num / den, Field(prediction.extent(), 0.0)};
  auto G = out.gradient.data();
  for (std::size_t i = 0; i < P.size(); ++i) G[i] = -(2.0 * T[i] * den - num) / (den * den);
  return out;
}

LossOutput focal_loss(const Field& prediction, const BinaryMask& target, double gamma, double alpha_f) {
  check_inputs(prediction, target);
  auto P = prediction.data();
  auto T = target.data();
  const double n = static_cast<double>(P.size());
  LossOutput out{0.0, Field(prediction.extent(), 0.0)};
  auto G = out.gradient.data();
  for (std::size_t i = 0; i < P.size(); ++i) {
    const double p = clamp_prob(P[i]);
    const double t = T[i];
    const double pt = t * p + (1.0 - t) * (1.0 - p);
    const double dpt = 2.0 * t - 1.0;  // d pt / d p
    const double b = -std::log(pt);
    const double mod = std::pow(1.0 - pt, gamma);
    out.value += alpha_f * mod * b;
    // d/dp [ (1-pt)^g * -log(pt) ]
    const double dmod = gamma == 0.0 ? 0.0 : -gamma * std::pow(1.0 - pt, gamma - 1.0) * dpt;
    G[i] = alpha_f * (dmod * b + mod * (-dpt / pt)) / n;
  }
  out.value /= n;
  return out;
}

Kind kind_from_string(const std::string& s) {
  if (s == "eedm") return Kind::eedm;
  if (s == "bce") return Kind::bce;
  if (s == "dice") return Kind::dice;
  if (s == "focal") return Kind::focal;
  throw ParameterError("unknown loss '" + s + "'");
}

std::string to_string(Kind kind) {
  switch (kind) {
    case Kind::eedm:
      return "eedm";
    case Kind::bce:
      return "bce";
    case Kind::dice:
      return "dice";
    case Kind::focal:
      return "focal";
  }
  return "eedm";
}

LossFn make_loss(Kind kind, double alpha_edge) {
  switch (kind) {
    case Kind::bce:
      return [](const Field& p, const BinaryMask& t) { return bce_loss(p, t); };
    case Kind::dice:
      return [](const Field& p, const BinaryMask& t) { return dice_loss(p, t); };
    case Kind::focal:
      return [](const Field& p, const BinaryMask& t) { return focal_loss(p, t); };
    case Kind::eedm:
      break;
  }
  return [alpha_edge](const Field& p, const BinaryMask& t) { return eedm_loss(p, t, alpha_edge); };
}

}  // namespace pal::loss
