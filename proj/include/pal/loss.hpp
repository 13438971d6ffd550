#pragma once

#include <functional>
#include <string>

#include "pal/core_types.hpp"

namespace pal::loss {

/// Probabilities are clamped to [kEps, 1 - kEps] before any log.
inline constexpr double kEps = 1e-7;

struct LossOutput {
  double value = 0.0;
  Field gradient;  // d value / d prediction, same extent as the prediction
};

/// Edge-enhanced difficulty-mining loss.
///
/// Per-pixel BCE is weighted by alpha on target edges (4-neighbour boundary of
/// T) and 1 elsewhere. Pixels whose weighted loss is >= the median (mean of the
/// two middle values for even counts) form the mining set S; the loss is the
/// mean over S. The gradient treats S as fixed.
LossOutput eedm_loss(const Field& prediction, const BinaryMask& target, double alpha = 4.0);

/// Which pixels the median selected, for tests and diagnostics.
struct MiningSet {
  std::vector<double> pixel_losses;  // weighted, row-major
  double median = 0.0;
  BinaryMask selected;
};
MiningSet eedm_mining_set(const Field& prediction, const BinaryMask& target, double alpha = 4.0);

/// Mean binary cross-entropy.
LossOutput bce_loss(const Field& prediction, const BinaryMask& target);

/// 1 - (2 sum(PT) + smooth) / (sum(P) + sum(T) + smooth).
LossOutput dice_loss(const Field& prediction, const BinaryMask& target, double smooth = 1.0);

/// Mean of alpha_f (1 - p_t)^gamma BCE, with p_t the probability of the true class.
LossOutput focal_loss(const Field& prediction, const BinaryMask& target, double gamma = 2.0, double alpha_f = 0.25);

enum class Kind { eedm, bce, dice, focal };

Kind kind_from_string(const std::string& s);
std::string to_string(Kind kind);

using LossFn = std::function<LossOutput(const Field&, const BinaryMask&)>;

LossFn make_loss(Kind kind, double alpha_edge = 4.0);

}  // namespace pal::loss
