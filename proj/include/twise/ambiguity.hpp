#pragma once

#include <cstddef>
#include <vector>

namespace twise {

enum class LossKind { kAle, kRale, kAbs, kSq };

/// Discrete depth mixture at a single pixel: depth d_i occurs with
/// probability p_i. Depths are strictly increasing, so index 0 is the
/// foreground surface.
class AmbiguityModel {
 public:
  /// Throws std::invalid_argument unless sizes match, probabilities are
  /// non-negative and sum to 1 (+-1e-12), and depths strictly increase.
  AmbiguityModel(std::vector<double> depths, std::vector<double> probs);

  static AmbiguityModel binary(double d1, double d2, double p1);

  const std::vector<double>& depths() const { return depths_; }
  const std::vector<double>& probs() const { return probs_; }
  std::size_t size() const { return depths_.size(); }
  bool is_binary() const { return depths_.size() == 2; }

 private:
  std::vector<double> depths_;
  std::vector<double> probs_;
};

/// sum_i p_i * L(d - d_i). gamma is ignored for kAbs and kSq.
double expected_loss(const AmbiguityModel& model, LossKind loss, double gamma, double d);

struct Minimizer {
  double depth;
  bool is_tie;
};

/// Relative tolerance under which two expected-loss corner values count as tied.
constexpr double kTieTolerance = 1e-12;

/// Argmin of the expected loss. Piecewise-linear losses are minimized over the
/// corner set {d_i}; kSq returns the mixture mean. On a tie the shallower
/// corner is returned and is_tie is set.
Minimizer minimizer(const AmbiguityModel& model, LossKind loss, double gamma);

/// sqrt(p2 / p1): the expected ALE is minimized at the foreground depth iff
/// gamma exceeds it. For RALE swap the arguments.
double gamma_threshold(double p1, double p2);

enum class Side { kForeground, kBackground, kTie };

/// Side selected by ALE (kAle) or RALE (kRale) on a binary model, decided
/// from the gamma threshold rather than by evaluating the expected loss.
Side predicted_side(const AmbiguityModel& model, LossKind loss, double gamma);

struct FusionMinimizer {
  double sigma;
  bool is_tie;
};

/// Minimizer over sigma of the expected fusion loss when the foreground has
/// probability p: 1 if p > 0.5, 0 if p < 0.5, tie (reported as 1) at 0.5.
FusionMinimizer fusion_minimizer(double p);

}  // namespace twise
