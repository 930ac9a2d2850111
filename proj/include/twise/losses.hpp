#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "twise/types.hpp"

namespace twise {

/// Which parameters receive gradient from the fusion term.
enum class FusionGradient {
  kSigmaOnly,  // d1_hat and d2_hat are treated as constants by the fusion term
  kFull,
};

struct LossConfig {
  double gamma = 2.0;
  std::array<double, 3> omega{1.0, 0.0, 0.0};
  double fusion_weight = 1.0;
  FusionGradient fusion_gradient = FusionGradient::kSigmaOnly;

  /// Throws std::domain_error on gamma < 1 or negative weights.
  void validate() const;
};

template <typename Scalar>
struct LossEval {
  Scalar value;
  Scalar dvalue;
};

/// Value of the fusion term and its partial derivatives.
template <typename Scalar>
struct FusionEval {
  Scalar value;
  Scalar d_c3;
  Scalar d_d1;
  Scalar d_d2;
};

namespace detail {

template <typename Scalar>
void check_loss_args(Scalar epsilon, Scalar gamma) {
  using std::isfinite;
  if (!isfinite(epsilon)) throw std::domain_error("loss: non-finite residual");
  if (!isfinite(gamma) || gamma < Scalar(1)) throw std::domain_error("loss: gamma must be >= 1");
}

}  // namespace detail

/// Logit is clamped to +-30 so sigma stays strictly inside (0, 1).
constexpr double kLogitClamp = 30.0;

template <typename Scalar>
Scalar sigmoid(Scalar logit) {
  using std::exp;
  const Scalar z = logit > Scalar(kLogitClamp) ? Scalar(kLogitClamp)
                   : logit < Scalar(-kLogitClamp) ? Scalar(-kLogitClamp)
                                                  : logit;
  return Scalar(1) / (Scalar(1) + exp(-z));
}

template <typename Scalar>
Scalar logit(Scalar sigma) {
  using std::log;
  const Scalar lo = sigmoid(Scalar(-kLogitClamp));
  const Scalar s = sigma < lo ? lo : (sigma > Scalar(1) - lo ? Scalar(1) - lo : sigma);
  return log(s / (Scalar(1) - s));
}

/// Asymmetric linear error: slope gamma for over-estimates, 1/gamma for
/// under-estimates. The subgradient at epsilon == 0 is gamma.
template <typename Scalar>
LossEval<Scalar> ale(Scalar epsilon, Scalar gamma) {
  detail::check_loss_args(epsilon, gamma);
  if (epsilon >= Scalar(0)) return {gamma * epsilon, gamma};
  return {-epsilon / gamma, Scalar(-1) / gamma};
}

/// Reflected asymmetric linear error, rale(e) == ale(-e). The subgradient at
/// epsilon == 0 is 1/gamma.
template <typename Scalar>
LossEval<Scalar> rale(Scalar epsilon, Scalar gamma) {
  detail::check_loss_args(epsilon, gamma);
  if (epsilon >= Scalar(0)) return {epsilon / gamma, Scalar(1) / gamma};
  return {-gamma * epsilon, -gamma};
}

/// |sigma * d1 + (1 - sigma) * d2 - d_true| with sigma = sigmoid(c3).
template <typename Scalar>
FusionEval<Scalar> fusion_loss(Scalar d1_hat, Scalar d2_hat, Scalar c3, Scalar d_true) {
  using std::isfinite;
  if (!isfinite(d1_hat) || !isfinite(d2_hat) || !isfinite(c3) || !isfinite(d_true)) {
    throw std::domain_error("fusion_loss: non-finite input");
  }
  const Scalar sigma = sigmoid(c3);
  const Scalar residual = sigma * d1_hat + (Scalar(1) - sigma) * d2_hat - d_true;
  const Scalar sign = residual >= Scalar(0) ? Scalar(1) : Scalar(-1);
  const Scalar dsigma = sigma * (Scalar(1) - sigma);
  return {residual * sign, sign * (d1_hat - d2_hat) * dsigma, sign * sigma,
          sign * (Scalar(1) - sigma)};
}

/// Per-pixel three-channel loss and its gradient w.r.t. (c1, c2, c3).
template <typename Scalar>
struct PixelLoss {
  Scalar value;
  std::array<Scalar, 3> grad;
};

template <typename Scalar>
PixelLoss<Scalar> pixel_loss(Scalar c1, Scalar c2, Scalar c3, Scalar d_true,
                             const LossConfig& cfg) {
  const Scalar gamma(cfg.gamma);
  const Scalar w(cfg.fusion_weight);
  const auto fg = ale(c1 - d_true, gamma);
  const auto bg = rale(c2 - d_true, gamma);
  const auto fu = fusion_loss(c1, c2, c3, d_true);
  PixelLoss<Scalar> out{fg.value + bg.value + w * fu.value, {fg.dvalue, bg.dvalue, w * fu.d_c3}};
  if (cfg.fusion_gradient == FusionGradient::kFull) {
    out.grad[0] += w * fu.d_d1;
    out.grad[1] += w * fu.d_d2;
  }
  return out;
}

template <typename Scalar>
struct FieldLoss {
  Scalar value;
  TwinSurfaceField<Scalar> gradient;
  Eigen::Index valid_count;
};

/// Mean of the per-pixel three-channel loss over valid target pixels.
/// Invalid target pixels contribute zero value and zero gradient.
template <typename Scalar>
FieldLoss<Scalar> combined_loss(const TwinSurfaceField<Scalar>& field,
                                const DepthImage<Scalar>& target, const LossConfig& cfg) {
  cfg.validate();
  if (!field.consistent()) throw std::invalid_argument("combined_loss: inconsistent field");
  require_same_shape(field.c1, target, "combined_loss");

  FieldLoss<Scalar> out{Scalar(0), TwinSurfaceField<Scalar>(field.rows(), field.cols()), 0};
  std::vector<Scalar> values;
  values.reserve(static_cast<std::size_t>(target.size()));
  for (Eigen::Index r = 0; r < target.rows(); ++r) {
    for (Eigen::Index c = 0; c < target.cols(); ++c) {
      if (!(target(r, c) > Scalar(0))) continue;
      const auto px = pixel_loss(field.c1(r, c), field.c2(r, c), field.c3(r, c), target(r, c), cfg);
      values.push_back(px.value);
      out.gradient.c1(r, c) = px.grad[0];
      out.gradient.c2(r, c) = px.grad[1];
      out.gradient.c3(r, c) = px.grad[2];
    }
  }
  if (values.empty()) throw std::invalid_argument("combined_loss: no valid target pixels");
  out.valid_count = static_cast<Eigen::Index>(values.size());
  const Scalar inv_n = Scalar(1) / Scalar(values.size());
  out.value = pairwise_sum(values) * inv_n;
  out.gradient.c1 *= inv_n;
  out.gradient.c2 *= inv_n;
  out.gradient.c3 *= inv_n;
  return out;
}

template <typename Scalar>
struct MultiscaleLoss {
  Scalar value;
  std::vector<TwinSurfaceField<Scalar>> gradients;  // one per scale, already weighted
};

/// omega[0] * L_full + omega[1] * L_half + omega[2] * L_quarter. Scales with a
/// zero weight are skipped and get an all-zero gradient.
template <typename Scalar>
MultiscaleLoss<Scalar> multiscale_loss(std::span<const TwinSurfaceField<Scalar>> fields,
                                       std::span<const DepthImage<Scalar>> targets,
                                       const LossConfig& cfg) {
  if (fields.size() != targets.size() || fields.empty() || fields.size() > 3) {
    throw std::invalid_argument("multiscale_loss: need 1..3 matching scales");
  }
  MultiscaleLoss<Scalar> out{Scalar(0), {}};
  for (std::size_t s = 0; s < fields.size(); ++s) {
    const Scalar weight(cfg.omega[s]);
    if (weight == Scalar(0)) {
      out.gradients.emplace_back(fields[s].rows(), fields[s].cols());
      continue;
    }
    auto level = combined_loss(fields[s], targets[s], cfg);
    out.value += weight * level.value;
    level.gradient.c1 *= weight;
    level.gradient.c2 *= weight;
    level.gradient.c3 *= weight;
    out.gradients.push_back(std::move(level.gradient));
  }
  return out;
}

/// Single-channel losses used by the baselines.
enum class SymmetricLoss { kL1, kL2, kL1L2, kHuber };

template <typename Scalar>
LossEval<Scalar> symmetric_loss(SymmetricLoss kind, Scalar epsilon, Scalar huber_delta = Scalar(1)) {
  using std::abs;
  const Scalar sign = epsilon >= Scalar(0) ? Scalar(1) : Scalar(-1);
  switch (kind) {
    case SymmetricLoss::kL1:
      return {abs(epsilon), sign};
    case SymmetricLoss::kL2:
      return {epsilon * epsilon, Scalar(2) * epsilon};
    case SymmetricLoss::kL1L2:
      return {abs(epsilon) + epsilon * epsilon, sign + Scalar(2) * epsilon};
    case SymmetricLoss::kHuber:
      if (abs(epsilon) <= huber_delta) return {Scalar(0.5) * epsilon * epsilon, epsilon};
      return {huber_delta * (abs(epsilon) - Scalar(0.5) * huber_delta), sign * huber_delta};
  }
  throw std::invalid_argument("symmetric_loss: unknown kind");
}

}  // namespace twise
