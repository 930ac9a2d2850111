#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "twise/ambiguity.hpp"
#include "twise/losses.hpp"
#include "twise/scenegen.hpp"
#include "twise/types.hpp"

namespace twise {

enum class Baseline { kTwise, kL1, kL2, kL1L2, kHuber };

std::string to_string(Baseline baseline);
Baseline baseline_from_string(const std::string& name);

/// Multi-scale weights active for iterations [begin, end).
struct ScheduleStage {
  int begin = 0;
  int end = 0;
  std::array<double, 3> omega{1.0, 0.0, 0.0};
};

struct FitConfig {
  double learning_rate = 0.05;
  int iterations = 2000;
  std::uint64_t seed = 0;
  double bandwidth = 6.0;  // pixels
  std::vector<ScheduleStage> schedule;
  Baseline baseline = Baseline::kTwise;
  double huber_delta = 1.0;

  void validate() const;

  /// Weights of the stage containing `iteration`, else `fallback`.
  std::array<double, 3> omega_at(int iteration, const std::array<double, 3>& fallback) const;
};

/// Full-res / half / quarter weights (1,1,1) -> (1,0.1,0.1) -> (1,0,0), each
/// stage lasting `stage_iterations`.
std::vector<ScheduleStage> staged_schedule(int stage_iterations);

struct StageRecord {
  int first_iteration;
  std::array<double, 3> omega;
};

struct ChannelValues {
  double c1 = 0.0;
  double c2 = 0.0;
  double sigma = 0.0;
  double fused = 0.0;
};

struct FitReport {
  Field field;  // final iterate; single-channel baselines store c1 == c2, c3 == 0
  Mask valid;   // positions with kernel support (all true for a stochastic pixel)
  std::vector<double> loss_trace;  // objective after each iteration
  std::vector<StageRecord> stages;  // where the active multi-scale weights changed
  bool converged = true;            // false if the trace left the finite range
  /// Stochastic mode: iterate average over the last tenth of the run.
  ChannelValues converged_values;

  /// Fused depth with unsupported positions set to 0 (invalid).
  DepthMap fused() const;
};

/// sigma * c1 + (1 - sigma) * c2 per pixel.
DepthMap fuse(const Field& field);

/// c2 - c1 per pixel.
DepthMap ambiguity_map(const Field& field);

/// Block-mean pooling of every channel; output is ceil(H/f) x ceil(W/f).
Field pool_field(const Field& field, int factor);

/// Full-resolution target followed by up to two valid-aware 2x reductions.
std::vector<DepthMap> build_target_pyramid(const DepthMap& target, int levels);

/// SGD on a single pixel's three channels, drawing the target from `model`
/// each step. Baselines fit one channel with the selected symmetric loss.
FitReport fit_stochastic_pixel(const AmbiguityModel& model, const LossConfig& loss,
                               const FitConfig& fit);

/// Converged stochastic-pixel channels against the binary-model predictions.
/// A channel is not judged when gamma lies within `margin` (relative) of its
/// threshold; sigma is judged only where both channels are judged, the
/// predicted surfaces differ and p1 != 0.5.
struct TheoryCheck {
  double predicted_c1 = 0.0;
  double predicted_c2 = 0.0;
  double predicted_sigma = 0.0;
  bool c1_checked = false;
  bool c1_ok = true;
  bool c2_checked = false;
  bool c2_ok = true;
  bool sigma_checked = false;
  bool sigma_ok = true;

  bool agree() const { return c1_ok && c2_ok && sigma_ok; }
};

TheoryCheck check_against_theory(const AmbiguityModel& model, double gamma, const ChannelValues& values,
                                 double margin = 0.1, double tolerance_fraction = 0.15);

/// Gaussian-kernel depth completion from the sparse samples of `scene`.
/// Each position minimises the kernel-weighted per-sample loss; full-batch
/// descent with step halving whenever a block's objective would increase.
FitReport fit_kernel_regression(const SceneSample& scene, const LossConfig& loss,
                                const FitConfig& fit);

}  // namespace twise
