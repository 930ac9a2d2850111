#include "twise/ambiguity.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "twise/losses.hpp"

namespace twise {

AmbiguityModel::AmbiguityModel(std::vector<double> depths, std::vector<double> probs)
    : depths_(std::move(depths)), probs_(std::move(probs)) {
  if (depths_.empty() || depths_.size() != probs_.size()) {
    throw std::invalid_argument("AmbiguityModel: depths and probs must be non-empty and equal length");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < probs_.size(); ++i) {
    if (!std::isfinite(probs_[i]) || probs_[i] < 0.0) {
      throw std::invalid_argument("AmbiguityModel: probabilities must be >= 0");
    }
    if (!std::isfinite(depths_[i])) throw std::invalid_argument("AmbiguityModel: non-finite depth");
    if (i > 0 && !(depths_[i] > depths_[i - 1])) {
      throw std::invalid_argument("AmbiguityModel: depths must be strictly increasing");
    }
    total += probs_[i];
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("AmbiguityModel: probabilities must sum to 1");
}

AmbiguityModel AmbiguityModel::binary(double d1, double d2, double p1) {
  return AmbiguityModel({d1, d2}, {p1, 1.0 - p1});
}

namespace {

double point_loss(LossKind loss, double gamma, double epsilon) {
  switch (loss) {
    case LossKind::kAle:
      return ale(epsilon, gamma).value;
    case LossKind::kRale:
      return rale(epsilon, gamma).value;
    case LossKind::kAbs:
      return std::abs(epsilon);
    case LossKind::kSq:
      return epsilon * epsilon;
  }
  throw std::invalid_argument("unknown loss kind");
}

}  // namespace

double expected_loss(const AmbiguityModel& model, LossKind loss, double gamma, double d) {
  double total = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) {
    total += model.probs()[i] * point_loss(loss, gamma, d - model.depths()[i]);
  }
  return total;
}

Minimizer minimizer(const AmbiguityModel& model, LossKind loss, double gamma) {
  if (loss == LossKind::kSq) {
    const double mean = std::inner_product(model.depths().begin(), model.depths().end(),
                                           model.probs().begin(), 0.0);
    return {mean, false};
  }
  if (loss == LossKind::kAle || loss == LossKind::kRale) {
    if (!std::isfinite(gamma) || gamma < 1.0) throw std::domain_error("minimizer: gamma must be >= 1");
  }
  std::size_t best = 0;
  double best_value = std::numeric_limits<double>::infinity();
  double second_value = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < model.size(); ++i) {
    const double v = expected_loss(model, loss, gamma, model.depths()[i]);
    if (v < best_value) {
      second_value = best_value;
      best_value = v;
      best = i;
    } else if (v < second_value) {
      second_value = v;
    }
  }
  const bool tie = std::isfinite(second_value) &&
                   std::abs(second_value - best_value) <=
                       kTieTolerance * std::max(std::abs(best_value), std::abs(second_value));
  // Among tied corners report the shallowest one.
  if (tie) {
    for (std::size_t i = 0; i < best; ++i) {
      const double v = expected_loss(model, loss, gamma, model.depths()[i]);
      if (std::abs(v - best_value) <= kTieTolerance * std::max(std::abs(v), std::abs(best_value))) {
        best = i;
        break;
      }
    }
  }
  return {model.depths()[best], tie};
}

double gamma_threshold(double p1, double p2) {
  if (!(p1 > 0.0) || !(p2 >= 0.0)) throw std::domain_error("gamma_threshold: need p1 > 0 and p2 >= 0");
  return std::sqrt(p2 / p1);
}

Side predicted_side(const AmbiguityModel& model, LossKind loss, double gamma) {
  if (!model.is_binary()) throw std::invalid_argument("predicted_side: binary model required");
  const double p1 = model.probs()[0];
  const double p2 = model.probs()[1];
  if (loss == LossKind::kAle) {
    if (p1 == 0.0) return Side::kBackground;
    const double t = gamma_threshold(p1, p2);
    if (std::abs(gamma - t) <= kTieTolerance * std::max(gamma, t)) return Side::kTie;
    return gamma > t ? Side::kForeground : Side::kBackground;
  }
  if (loss == LossKind::kRale) {
    if (p2 == 0.0) return Side::kForeground;
    const double t = gamma_threshold(p2, p1);
    if (std::abs(gamma - t) <= kTieTolerance * std::max(gamma, t)) return Side::kTie;
    return gamma > t ? Side::kBackground : Side::kForeground;
  }
  throw std::invalid_argument("predicted_side: only ALE and RALE have a gamma threshold");
}

FusionMinimizer fusion_minimizer(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw std::domain_error("fusion_minimizer: p must lie in [0, 1]");
  if (p > 0.5) return {1.0, false};
  if (p < 0.5) return {0.0, false};
  return {1.0, true};
}

}  // namespace twise
