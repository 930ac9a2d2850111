#include "twise/losses.hpp"

#include <cmath>

namespace twise {

void LossConfig::validate() const {
  if (!std::isfinite(gamma) || gamma < 1.0) throw std::domain_error("LossConfig: gamma must be >= 1");
  for (double w : omega) {
    if (!std::isfinite(w) || w < 0.0) throw std::domain_error("LossConfig: omega must be >= 0");
  }
  if (!std::isfinite(fusion_weight) || fusion_weight < 0.0) {
    throw std::domain_error("LossConfig: fusion_weight must be >= 0");
  }
}

}  // namespace twise
