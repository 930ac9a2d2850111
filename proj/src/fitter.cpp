#include "twise/fitter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace twise {

std::string to_string(Baseline baseline) {
  switch (baseline) {
    case Baseline::kTwise: return "twise";
    case Baseline::kL1: return "l1";
    case Baseline::kL2: return "l2";
    case Baseline::kL1L2: return "l1+l2";
    case Baseline::kHuber: return "huber";
  }
  return "unknown";
}

Baseline baseline_from_string(const std::string& name) {
  for (Baseline b : {Baseline::kTwise, Baseline::kL1, Baseline::kL2, Baseline::kL1L2, Baseline::kHuber}) {
    if (to_string(b) == name) return b;
  }
  if (name == "l1l2") return Baseline::kL1L2;
  throw std::invalid_argument("unknown baseline: " + name);
}

void FitConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("FitConfig: learning_rate must be > 0");
  }
  if (iterations <= 0) throw std::invalid_argument("FitConfig: iterations must be > 0");
  if (!(bandwidth > 0.0)) throw std::invalid_argument("FitConfig: bandwidth must be > 0");
  if (!(huber_delta > 0.0)) throw std::invalid_argument("FitConfig: huber_delta must be > 0");
  int previous_end = 0;
  for (const ScheduleStage& st : schedule) {
    if (st.begin < previous_end || st.end <= st.begin) {
      throw std::invalid_argument("FitConfig: schedule stages must be ordered and disjoint");
    }
    for (double w : st.omega) {
      if (!(w >= 0.0)) throw std::invalid_argument("FitConfig: schedule weights must be >= 0");
    }
    previous_end = st.end;
  }
}

std::array<double, 3> FitConfig::omega_at(int iteration, const std::array<double, 3>& fallback) const {
  for (const ScheduleStage& st : schedule) {
    if (iteration >= st.begin && iteration < st.end) return st.omega;
  }
  return fallback;
}

std::vector<ScheduleStage> staged_schedule(int stage_iterations) {
  if (stage_iterations <= 0) throw std::invalid_argument("staged_schedule: stage length must be > 0");
  const int n = stage_iterations;
  return {{0, n, {1.0, 1.0, 1.0}}, {n, 2 * n, {1.0, 0.1, 0.1}}, {2 * n, 3 * n, {1.0, 0.0, 0.0}}};
}

DepthMap FitReport::fused() const {
  DepthMap out = fuse(field);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (!valid.data()[i]) out.data()[i] = 0.0;
  }
  return out;
}

DepthMap fuse(const Field& field) {
  const DepthMap sigma = field.c3.unaryExpr([](double z) { return sigmoid(z); });
  return sigma * field.c1 + (1.0 - sigma) * field.c2;
}

DepthMap ambiguity_map(const Field& field) { return field.c2 - field.c1; }

Field pool_field(const Field& field, int factor) {
  if (factor < 1) throw std::invalid_argument("pool_field: factor must be >= 1");
  if (factor == 1) return field;
  const Eigen::Index rows = (field.rows() + factor - 1) / factor;
  const Eigen::Index cols = (field.cols() + factor - 1) / factor;
  Field out(rows, cols);
  for (int ch = 0; ch < 3; ++ch) {
    const DepthMap& src = field.channel(ch);
    DepthMap& dst = out.channel(ch);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        const Eigen::Index r0 = r * factor;
        const Eigen::Index c0 = c * factor;
        const Eigen::Index nr = std::min<Eigen::Index>(factor, field.rows() - r0);
        const Eigen::Index nc = std::min<Eigen::Index>(factor, field.cols() - c0);
        dst(r, c) = src.block(r0, c0, nr, nc).mean();
      }
    }
  }
  return out;
}

std::vector<DepthMap> build_target_pyramid(const DepthMap& target, int levels) {
  if (levels < 1 || levels > 3) throw std::invalid_argument("build_target_pyramid: levels must be 1..3");
  std::vector<DepthMap> out{target};
  if (levels >= 2) out.push_back(downsample(target, 2));
  if (levels >= 3) out.push_back(downsample(target, 4));
  return out;
}

TheoryCheck check_against_theory(const AmbiguityModel& model, double gamma, const ChannelValues& values,
                                 double margin, double tolerance_fraction) {
  if (!model.is_binary()) throw std::invalid_argument("check_against_theory: binary model required");
  const double p1 = model.probs()[0];
  const double p2 = model.probs()[1];
  if (!(p1 > 0.0 && p2 > 0.0)) throw std::invalid_argument("check_against_theory: both probabilities must be > 0");
  const double tol = tolerance_fraction * (model.depths()[1] - model.depths()[0]);
  auto near = [&](double threshold) { return std::abs(gamma - threshold) < margin * threshold; };

  TheoryCheck out;
  out.predicted_c1 = minimizer(model, LossKind::kAle, gamma).depth;
  out.predicted_c2 = minimizer(model, LossKind::kRale, gamma).depth;
  const FusionMinimizer fm = fusion_minimizer(p1);
  out.predicted_sigma = fm.sigma;

  out.c1_checked = !near(gamma_threshold(p1, p2));
  out.c2_checked = !near(gamma_threshold(p2, p1));
  if (out.c1_checked) out.c1_ok = std::abs(values.c1 - out.predicted_c1) < tol;
  if (out.c2_checked) out.c2_ok = std::abs(values.c2 - out.predicted_c2) < tol;
  // With coincident surfaces the fusion loss does not depend on sigma.
  out.sigma_checked = out.c1_checked && out.c2_checked && !fm.is_tie && out.predicted_c1 != out.predicted_c2;
  if (out.sigma_checked) out.sigma_ok = fm.sigma > 0.5 ? values.sigma > 0.5 : values.sigma < 0.5;
  return out;
}

namespace {

SymmetricLoss symmetric_kind(Baseline b) {
  switch (b) {
    case Baseline::kL1: return SymmetricLoss::kL1;
    case Baseline::kL2: return SymmetricLoss::kL2;
    case Baseline::kL1L2: return SymmetricLoss::kL1L2;
    case Baseline::kHuber: return SymmetricLoss::kHuber;
    case Baseline::kTwise: break;
  }
  throw std::invalid_argument("symmetric_kind: TWISE has no single-channel loss");
}

bool finite(const Field& f) { return f.c1.allFinite() && f.c2.allFinite() && f.c3.allFinite(); }

}  // namespace

FitReport fit_stochastic_pixel(const AmbiguityModel& model, const LossConfig& loss,
                               const FitConfig& fit) {
  loss.validate();
  fit.validate();
  const bool twise = fit.baseline == Baseline::kTwise;
  std::mt19937_64 rng(fit.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto& depths = model.depths();
  const auto& probs = model.probs();
  auto draw = [&]() {
    const double u = unit(rng);
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < depths.size(); ++i) {
      acc += probs[i];
      if (u < acc) return depths[i];
    }
    return depths.back();
  };
  auto expected = [&](double c1, double c2, double c3) {
    double total = 0.0;
    for (std::size_t i = 0; i < depths.size(); ++i) {
      if (probs[i] == 0.0) continue;
      const double v = twise ? pixel_loss(c1, c2, c3, depths[i], loss).value
                             : symmetric_loss(symmetric_kind(fit.baseline), c1 - depths[i], fit.huber_delta).value;
      total += probs[i] * v;
    }
    return total;
  };

  const double start = draw();
  double c1 = start;
  double c2 = start;
  double c3 = 0.0;
  FitReport report;
  report.loss_trace.reserve(static_cast<std::size_t>(fit.iterations));
  report.stages.push_back({0, loss.omega});
  const int tail = std::max(1, fit.iterations / 10);
  ChannelValues avg;
  int averaged = 0;
  for (int it = 0; it < fit.iterations; ++it) {
    const double target = draw();
    if (twise) {
      const auto px = pixel_loss(c1, c2, c3, target, loss);
      c1 -= fit.learning_rate * px.grad[0];
      c2 -= fit.learning_rate * px.grad[1];
      c3 -= fit.learning_rate * px.grad[2];
    } else {
      c1 -= fit.learning_rate * symmetric_loss(symmetric_kind(fit.baseline), c1 - target, fit.huber_delta).dvalue;
      c2 = c1;
    }
    if (!std::isfinite(c1) || !std::isfinite(c2) || !std::isfinite(c3) || std::abs(c1) > 1e12 ||
        std::abs(c2) > 1e12) {
      report.converged = false;
      break;
    }
    report.loss_trace.push_back(expected(c1, c2, c3));
    if (it >= fit.iterations - tail) {
      const double sigma = twise ? sigmoid(c3) : 1.0;
      avg.c1 += c1;
      avg.c2 += c2;
      avg.sigma += sigma;
      avg.fused += sigma * c1 + (1.0 - sigma) * c2;
      ++averaged;
    }
  }
  report.field = Field(1, 1);
  report.field.c1(0, 0) = c1;
  report.field.c2(0, 0) = c2;
  report.field.c3(0, 0) = c3;
  report.valid = Mask::Constant(1, 1, true);
  if (averaged > 0) {
    avg.c1 /= averaged;
    avg.c2 /= averaged;
    avg.sigma /= averaged;
    avg.fused /= averaged;
  }
  report.converged_values = avg;
  return report;
}

namespace {

/// Gaussian neighbourhoods of every position at one scale, stored CSR-style
/// with weights normalised to sum to one.
struct Support {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<std::size_t> offsets;
  std::vector<double> depth;
  std::vector<double> weight;
  std::vector<double> distance2;
  std::vector<char> valid;
  long valid_count = 0;
};

Support build_support(const DepthMap& sparse, double bandwidth) {
  Support s;
  s.rows = sparse.rows();
  s.cols = sparse.cols();
  const double radius = 3.0 * bandwidth;
  const double radius2 = radius * radius;
  const auto reach = static_cast<Eigen::Index>(std::floor(radius));
  const double inv_two_h2 = 1.0 / (2.0 * bandwidth * bandwidth);
  s.offsets.reserve(static_cast<std::size_t>(sparse.size()) + 1);
  s.offsets.push_back(0);
  s.valid.assign(static_cast<std::size_t>(sparse.size()), 0);
  for (Eigen::Index r = 0; r < s.rows; ++r) {
    for (Eigen::Index c = 0; c < s.cols; ++c) {
      const std::size_t first = s.depth.size();
      double total = 0.0;
      for (Eigen::Index rr = std::max<Eigen::Index>(0, r - reach); rr <= std::min(s.rows - 1, r + reach); ++rr) {
        for (Eigen::Index cc = std::max<Eigen::Index>(0, c - reach); cc <= std::min(s.cols - 1, c + reach); ++cc) {
          const double d = sparse(rr, cc);
          if (!(d > 0.0)) continue;
          const double dist2 = static_cast<double>((rr - r) * (rr - r) + (cc - c) * (cc - c));
          if (dist2 > radius2) continue;
          const double w = std::exp(-dist2 * inv_two_h2);
          s.depth.push_back(d);
          s.weight.push_back(w);
          s.distance2.push_back(dist2);
          total += w;
        }
      }
      if (s.depth.size() > first) {
        for (std::size_t k = first; k < s.depth.size(); ++k) s.weight[k] /= total;
        s.valid[static_cast<std::size_t>(r * s.cols + c)] = 1;
        ++s.valid_count;
      }
      s.offsets.push_back(s.depth.size());
    }
  }
  return s;
}

enum class Part { kForeground, kBackground, kFusion, kJoint, kSingle };

class KernelProblem {
 public:
  KernelProblem(const SceneSample& scene, const LossConfig& loss, const FitConfig& fit)
      : loss_(loss), fit_(fit), rows_(scene.sparse.rows()), cols_(scene.sparse.cols()) {
    int max_scale = 0;
    auto note = [&max_scale](const std::array<double, 3>& w) {
      if (w[2] > 0.0) max_scale = std::max(max_scale, 2);
      if (w[1] > 0.0) max_scale = std::max(max_scale, 1);
    };
    note(loss.omega);
    for (const ScheduleStage& st : fit.schedule) note(st.omega);
    block_ = 1 << max_scale;
    block_rows_ = (rows_ + block_ - 1) / block_;
    block_cols_ = (cols_ + block_ - 1) / block_;
    for (int s = 0; s <= max_scale; ++s) {
      const int factor = 1 << s;
      const DepthMap sparse = s == 0 ? scene.sparse : downsample(scene.sparse, factor);
      supports_.push_back(build_support(sparse, fit.bandwidth / factor));
    }
  }

  int num_blocks() const { return static_cast<int>(block_rows_ * block_cols_); }
  const Support& fine() const { return supports_.front(); }

  int block_of(Eigen::Index r, Eigen::Index c) const {
    return static_cast<int>((r / block_) * block_cols_ + c / block_);
  }

  /// Per-block objective of `part` and its gradient (channels outside the part stay zero).
  void evaluate(const Field& field, Part part, const std::array<double, 3>& omega,
                std::vector<double>& block_values, Field* gradient) const {
    block_values.assign(static_cast<std::size_t>(num_blocks()), 0.0);
    if (gradient != nullptr) *gradient = Field(rows_, cols_);
    for (std::size_t s = 0; s < supports_.size(); ++s) {
      if (omega[s] == 0.0) continue;
      const Support& sup = supports_[s];
      if (sup.valid_count == 0) continue;
      const int factor = 1 << s;
      const Field pooled = pool_field(field, factor);
      const double scale = omega[s] / static_cast<double>(sup.valid_count);
      // Gradients are reported for N_fine * objective so that the learning
      // rate is a per-position step size.
      const double grad_scale = scale * static_cast<double>(supports_.front().valid_count);
      Field level_grad(sup.rows, sup.cols);
      for (Eigen::Index r = 0; r < sup.rows; ++r) {
        for (Eigen::Index c = 0; c < sup.cols; ++c) {
          const auto idx = static_cast<std::size_t>(r * sup.cols + c);
          if (!sup.valid[idx]) continue;
          std::array<double, 3> g{0.0, 0.0, 0.0};
          const double v = position_loss(pooled.c1(r, c), pooled.c2(r, c), pooled.c3(r, c), sup,
                                         sup.offsets[idx], sup.offsets[idx + 1], part, g);
          block_values[static_cast<std::size_t>(block_of(r * factor, c * factor))] += scale * v;
          level_grad.c1(r, c) = grad_scale * g[0];
          level_grad.c2(r, c) = grad_scale * g[1];
          level_grad.c3(r, c) = grad_scale * g[2];
        }
      }
      if (gradient == nullptr) continue;
      for (Eigen::Index r = 0; r < rows_; ++r) {
        for (Eigen::Index c = 0; c < cols_; ++c) {
          const Eigen::Index cr = r / factor;
          const Eigen::Index cc = c / factor;
          const double count = static_cast<double>(std::min<Eigen::Index>(factor, rows_ - cr * factor) *
                                                   std::min<Eigen::Index>(factor, cols_ - cc * factor));
          gradient->c1(r, c) += level_grad.c1(cr, cc) / count;
          gradient->c2(r, c) += level_grad.c2(cr, cc) / count;
          gradient->c3(r, c) += level_grad.c3(cr, cc) / count;
        }
      }
    }
  }

 private:
  double position_loss(double c1, double c2, double c3, const Support& sup, std::size_t begin,
                       std::size_t end, Part part, std::array<double, 3>& g) const {
    const double gamma = loss_.gamma;
    const double fw = loss_.fusion_weight;
    const double sigma = sigmoid(c3);
    const double dsigma = sigma * (1.0 - sigma);
    const double fused = sigma * c1 + (1.0 - sigma) * c2;
    const bool full = loss_.fusion_gradient == FusionGradient::kFull;
    double value = 0.0;
    for (std::size_t k = begin; k < end; ++k) {
      const double w = sup.weight[k];
      const double d = sup.depth[k];
      if (part == Part::kSingle) {
        const auto e = symmetric_loss(symmetric_kind(fit_.baseline), c1 - d, fit_.huber_delta);
        value += w * e.value;
        g[0] += w * e.dvalue;
        continue;
      }
      if (part == Part::kForeground || part == Part::kJoint) {
        const auto e = ale(c1 - d, gamma);
        value += w * e.value;
        g[0] += w * e.dvalue;
      }
      if (part == Part::kBackground || part == Part::kJoint) {
        const auto e = rale(c2 - d, gamma);
        value += w * e.value;
        g[1] += w * e.dvalue;
      }
      if ((part == Part::kFusion || part == Part::kJoint) && fw > 0.0) {
        const double residual = fused - d;
        const double sign = residual >= 0.0 ? 1.0 : -1.0;
        value += w * fw * residual * sign;
        g[2] += w * fw * sign * (c1 - c2) * dsigma;
        if (part == Part::kJoint && full) {
          g[0] += w * fw * sign * sigma;
          g[1] += w * fw * sign * (1.0 - sigma);
        }
      }
    }
    return value;
  }

  const LossConfig& loss_;
  const FitConfig& fit_;
  Eigen::Index rows_;
  Eigen::Index cols_;
  int block_ = 1;
  Eigen::Index block_rows_ = 1;
  Eigen::Index block_cols_ = 1;
  std::vector<Support> supports_;
};

/// Initial c1 = c2 = depth of the nearest sparse sample.
DepthMap nearest_sample_depth(const DepthMap& sparse, const Support& sup) {
  DepthMap out = DepthMap::Zero(sparse.rows(), sparse.cols());
  std::vector<Eigen::Index> samples;
  for (Eigen::Index i = 0; i < sparse.size(); ++i) {
    if (sparse.data()[i] > 0.0) samples.push_back(i);
  }
  for (Eigen::Index r = 0; r < sparse.rows(); ++r) {
    for (Eigen::Index c = 0; c < sparse.cols(); ++c) {
      const auto idx = static_cast<std::size_t>(r * sparse.cols() + c);
      double best_d2 = std::numeric_limits<double>::infinity();
      double best = 0.0;
      if (sup.valid[idx]) {
        for (std::size_t k = sup.offsets[idx]; k < sup.offsets[idx + 1]; ++k) {
          if (sup.distance2[k] < best_d2) {
            best_d2 = sup.distance2[k];
            best = sup.depth[k];
          }
        }
      } else {
        for (Eigen::Index s : samples) {
          const Eigen::Index sr = s / sparse.cols();
          const Eigen::Index sc = s % sparse.cols();
          const double d2 = static_cast<double>((sr - r) * (sr - r) + (sc - c) * (sc - c));
          if (d2 < best_d2) {
            best_d2 = d2;
            best = sparse.data()[s];
          }
        }
      }
      out(r, c) = best;
    }
  }
  return out;
}

/// One backtracking step on `channels` for objective `part`. Blocks whose
/// objective would rise keep their values and halve their step size.
/// Returns the per-block objective after the step.
std::vector<double> backtracking_step(const KernelProblem& problem, Field& field, Part part,
                                      std::initializer_list<int> channels,
                                      const std::array<double, 3>& omega, std::vector<double>& step) {
  std::vector<double> before;
  Field grad;
  problem.evaluate(field, part, omega, before, &grad);
  Field candidate = field;
  for (Eigen::Index r = 0; r < field.rows(); ++r) {
    for (Eigen::Index c = 0; c < field.cols(); ++c) {
      const double lr = step[static_cast<std::size_t>(problem.block_of(r, c))];
      for (int ch : channels) candidate.channel(ch)(r, c) -= lr * grad.channel(ch)(r, c);
    }
  }
  std::vector<double> after;
  problem.evaluate(candidate, part, omega, after, nullptr);
  std::vector<char> accept(before.size(), 0);
  for (std::size_t b = 0; b < before.size(); ++b) {
    if (after[b] <= before[b]) {
      accept[b] = 1;
    } else {
      step[b] *= 0.5;
      after[b] = before[b];
    }
  }
  for (Eigen::Index r = 0; r < field.rows(); ++r) {
    for (Eigen::Index c = 0; c < field.cols(); ++c) {
      if (!accept[static_cast<std::size_t>(problem.block_of(r, c))]) continue;
      for (int ch : channels) field.channel(ch)(r, c) = candidate.channel(ch)(r, c);
    }
  }
  return after;
}

double total(const std::vector<double>& values) { return pairwise_sum(values); }

}  // namespace

FitReport fit_kernel_regression(const SceneSample& scene, const LossConfig& loss, const FitConfig& fit) {
  loss.validate();
  fit.validate();
  const DepthMap& sparse = scene.sparse;
  if (!(sparse > 0.0).any()) throw std::invalid_argument("fit_kernel_regression: scene has no sparse samples");

  const KernelProblem problem(scene, loss, fit);
  const Support& sup = problem.fine();
  FitReport report;
  report.field = Field(sparse.rows(), sparse.cols());
  report.field.c1 = nearest_sample_depth(sparse, sup);
  report.field.c2 = report.field.c1;
  report.valid = Mask::Constant(sparse.rows(), sparse.cols(), false);
  for (Eigen::Index i = 0; i < sparse.size(); ++i) report.valid.data()[i] = sup.valid[static_cast<std::size_t>(i)] != 0;

  const bool twise = fit.baseline == Baseline::kTwise;
  const bool joint = twise && loss.fusion_gradient == FusionGradient::kFull;
  const auto blocks = static_cast<std::size_t>(problem.num_blocks());
  std::vector<double> step_fg(blocks, fit.learning_rate);
  std::vector<double> step_bg(blocks, fit.learning_rate);
  std::vector<double> step_fu(blocks, fit.learning_rate);
  report.loss_trace.reserve(static_cast<std::size_t>(fit.iterations));

  Field& field = report.field;
  for (int it = 0; it < fit.iterations; ++it) {
    const auto omega = fit.omega_at(it, loss.omega);
    if (report.stages.empty() || report.stages.back().omega != omega) report.stages.push_back({it, omega});
    double value = 0.0;
    if (!twise) {
      value = total(backtracking_step(problem, field, Part::kSingle, {0}, omega, step_fg));
      field.c2 = field.c1;
    } else if (joint) {
      value = total(backtracking_step(problem, field, Part::kJoint, {0, 1, 2}, omega, step_fg));
    } else {
      value = total(backtracking_step(problem, field, Part::kForeground, {0}, omega, step_fg));
      value += total(backtracking_step(problem, field, Part::kBackground, {1}, omega, step_bg));
      if (loss.fusion_weight > 0.0) {
        value += total(backtracking_step(problem, field, Part::kFusion, {2}, omega, step_fu));
      }
    }
    report.loss_trace.push_back(value);
    if (!std::isfinite(value) || !finite(field)) {
      report.converged = false;
      break;
    }
  }
  return report;
}

}  // namespace twise
