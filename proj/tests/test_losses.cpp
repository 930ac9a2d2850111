#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "twise/losses.hpp"

using namespace twise;

namespace {

double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-12});
  return std::abs(a - b) / scale;
}

}  // namespace

TEST(Ale, Values) {
  EXPECT_EQ(ale(0.0, 2.0).value, 0.0);
  EXPECT_EQ(ale(1.0, 2.0).value, 2.0);
  EXPECT_EQ(ale(-1.0, 2.0).value, 0.5);
  EXPECT_EQ(ale(-3.0, 1.0).value, 3.0);
}

TEST(Ale, SubgradientAtZeroIsGamma) {
  EXPECT_EQ(ale(0.0, 3.0).dvalue, 3.0);
  EXPECT_EQ(ale(-0.5, 4.0).dvalue, -0.25);
}

TEST(Rale, Values) {
  EXPECT_EQ(rale(1.0, 2.0).value, 0.5);
  EXPECT_EQ(rale(-1.0, 2.0).value, 2.0);
  EXPECT_EQ(rale(2.0, 1.0).value, 2.0);
  EXPECT_EQ(rale(0.0, 5.0).dvalue, 0.2);
}

TEST(Ale, RejectsBadArguments) {
  EXPECT_THROW(ale(1.0, 0.5), std::domain_error);
  EXPECT_THROW(rale(1.0, 0.99), std::domain_error);
  EXPECT_THROW(ale(std::nan(""), 2.0), std::domain_error);
  EXPECT_THROW(rale(std::numeric_limits<double>::infinity(), 2.0), std::domain_error);
  EXPECT_THROW(ale(1.0, std::nan("")), std::domain_error);
}

TEST(Ale, ReflectionAndGammaOne) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> eps(-50.0, 50.0);
  std::uniform_real_distribution<double> gam(1.0, 10.0);
  for (int i = 0; i < 2000; ++i) {
    const double e = eps(rng);
    const double g = gam(rng);
    EXPECT_EQ(rale(e, g).value, ale(-e, g).value);
    EXPECT_GE(ale(e, g).value, 0.0);
    EXPECT_EQ(ale(e, 1.0).value, std::abs(e));
    EXPECT_EQ(rale(e, 1.0).value, std::abs(e));
  }
}

TEST(Ale, FloatInstantiation) {
  EXPECT_FLOAT_EQ(ale(1.0f, 2.0f).value, 2.0f);
  EXPECT_FLOAT_EQ(rale(1.0f, 2.0f).value, 0.5f);
}

TEST(Sigmoid, ClampedLogit) {
  EXPECT_EQ(sigmoid(1000.0), sigmoid(kLogitClamp));
  EXPECT_LT(sigmoid(1000.0), 1.0);
  EXPECT_GT(sigmoid(-1000.0), 0.0);
  EXPECT_NEAR(sigmoid(logit(0.25)), 0.25, 1e-15);
}

TEST(Fusion, ExactBlendIsZero) {
  const auto f = fusion_loss(10.0, 20.0, logit(0.25), 17.5);
  EXPECT_NEAR(f.value, 0.0, 1e-12);
}

TEST(Fusion, HalfBlend) {
  const auto f = fusion_loss(10.0, 20.0, 0.0, 10.0);
  EXPECT_EQ(f.value, 5.0);
  // residual +5: d/dc3 = (d1 - d2) * s(1 - s)
  EXPECT_DOUBLE_EQ(f.d_c3, -10.0 * 0.25);
  EXPECT_DOUBLE_EQ(f.d_d1, 0.5);
  EXPECT_DOUBLE_EQ(f.d_d2, 0.5);
}

TEST(Fusion, DegenerateSurfaces) {
  for (double c3 : {-40.0, -3.0, 0.0, 1.7, 40.0}) {
    const auto f = fusion_loss(15.0, 15.0, c3, 15.0);
    EXPECT_EQ(f.value, 0.0);
    EXPECT_EQ(f.d_c3, 0.0);
  }
}

TEST(Fusion, RejectsNonFinite) {
  EXPECT_THROW(fusion_loss(std::nan(""), 1.0, 0.0, 1.0), std::domain_error);
  EXPECT_THROW(fusion_loss(1.0, 1.0, std::numeric_limits<double>::infinity(), 1.0), std::domain_error);
}

TEST(PixelLoss, SigmaOnlyKeepsDepthGradientsClean) {
  LossConfig cfg;
  const auto px = pixel_loss(12.0, 18.0, 0.3, 14.0, cfg);
  EXPECT_DOUBLE_EQ(px.grad[0], -0.5);  // ale slope below the target
  EXPECT_DOUBLE_EQ(px.grad[1], 0.5);   // rale slope above the target
  cfg.fusion_gradient = FusionGradient::kFull;
  const auto full = pixel_loss(12.0, 18.0, 0.3, 14.0, cfg);
  const double s = sigmoid(0.3);
  // blend 18 - 6 s = 14.55 sits above the target
  EXPECT_DOUBLE_EQ(full.grad[0], -0.5 + s);
  EXPECT_DOUBLE_EQ(full.grad[1], 0.5 + (1.0 - s));
  EXPECT_EQ(full.grad[2], px.grad[2]);
}

TEST(CombinedLoss, ZeroWhenSurfacesMatchTarget) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(5.0, 50.0), z(-5.0, 5.0);
  DepthMap target(6, 7);
  Field f(6, 7);
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    target.data()[i] = d(rng);
    f.c1.data()[i] = f.c2.data()[i] = target.data()[i];
    f.c3.data()[i] = z(rng);
  }
  // s t + (1 - s) t only equals t up to rounding
  EXPECT_NEAR(combined_loss(f, target, LossConfig{}).value, 0.0, 1e-12);
}

TEST(CombinedLoss, SingleValidPixel) {
  DepthMap target = DepthMap::Zero(2, 2);
  target(1, 0) = 10.0;
  Field f(2, 2);
  f.c1.setConstant(11.0);
  f.c2.setConstant(9.0);
  f.c3.setZero();
  // ALE(+1) = 2, RALE(-1) = 2, fused = 0.5*11 + 0.5*9 = 10 so F = 0.
  const auto l = combined_loss(f, target, LossConfig{});
  EXPECT_DOUBLE_EQ(l.value, 4.0);
  EXPECT_EQ(l.valid_count, 1);
  EXPECT_EQ(l.gradient.c1(0, 0), 0.0);
  EXPECT_EQ(l.gradient.c2(1, 1), 0.0);
}

TEST(CombinedLoss, Errors) {
  Field f(2, 2);
  EXPECT_THROW(combined_loss(f, DepthMap(DepthMap::Zero(2, 3)), LossConfig{}), std::invalid_argument);
  EXPECT_THROW(combined_loss(f, DepthMap(DepthMap::Zero(2, 2)), LossConfig{}), std::invalid_argument);
  LossConfig bad;
  bad.gamma = 0.5;
  EXPECT_THROW(combined_loss(f, DepthMap(DepthMap::Constant(2, 2, 1.0)), bad), std::domain_error);
}

TEST(CombinedLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> depth(5.0, 40.0), off(-4.0, 4.0), z(-3.0, 3.0), u(0.0, 1.0);
  const double h = 1e-4;
  for (FusionGradient mode : {FusionGradient::kFull, FusionGradient::kSigmaOnly}) {
    LossConfig cfg;
    cfg.gamma = 2.5;
    cfg.fusion_weight = 0.7;
    cfg.fusion_gradient = mode;
    DepthMap target(8, 8);
    Field f(8, 8);
    for (Eigen::Index i = 0; i < target.size(); ++i) {
      // Keep every residual at least 1e-3 away from its kink.
      for (;;) {
        target.data()[i] = u(rng) < 0.15 ? 0.0 : depth(rng);
        const double t = target.data()[i] > 0 ? target.data()[i] : 20.0;
        f.c1.data()[i] = t + off(rng);
        f.c2.data()[i] = t + off(rng);
        f.c3.data()[i] = z(rng);
        const double s = sigmoid(f.c3.data()[i]);
        const double r = s * f.c1.data()[i] + (1 - s) * f.c2.data()[i] - t;
        if (std::abs(f.c1.data()[i] - t) > 1e-3 && std::abs(f.c2.data()[i] - t) > 1e-3 && std::abs(r) > 1e-3) break;
      }
    }
    const auto base = combined_loss(f, target, cfg);
    // With a detached fusion term only the sigma channel is a true gradient
    // of the total.
    const int first = mode == FusionGradient::kFull ? 0 : 2;
    for (int ch = first; ch < 3; ++ch) {
      for (Eigen::Index i = 0; i < target.size(); ++i) {
        Field p = f, m = f;
        p.channel(ch).data()[i] += h;
        m.channel(ch).data()[i] -= h;
        const double fd = (combined_loss(p, target, cfg).value - combined_loss(m, target, cfg).value) / (2 * h);
        const double an = base.gradient.channel(ch).data()[i];
        if (target.data()[i] > 0) {
          EXPECT_LT(rel_err(an, fd), 1e-6) << "channel " << ch << " pixel " << i;
        } else {
          EXPECT_EQ(an, 0.0);
          EXPECT_EQ(fd, 0.0);
        }
      }
    }
  }
}

TEST(MultiscaleLoss, FullScaleOnlyEqualsCombined) {
  DepthMap t(4, 4);
  t << 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25;
  Field f(4, 4);
  f.c1 = t - 1.0;
  f.c2 = t + 2.0;
  f.c3.setConstant(0.4);
  std::vector<Field> fields{f, f, f};
  std::vector<DepthMap> targets{t, t + 3.0, t - 2.0};
  LossConfig cfg;
  cfg.omega = {1.0, 0.0, 0.0};
  const auto ms = multiscale_loss<double>(fields, targets, cfg);
  EXPECT_EQ(ms.value, combined_loss(f, t, cfg).value);
  EXPECT_TRUE((ms.gradients[1].c1 == 0.0).all());
}

TEST(MultiscaleLoss, WeightedSumMatchesScalarRecomputation) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(5.0, 30.0), z(-2.0, 2.0);
  std::vector<Field> fields;
  std::vector<DepthMap> targets;
  for (int s = 0; s < 3; ++s) {
    const int n = 8 >> s;
    Field f(n, n);
    DepthMap t(n, n);
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      t.data()[i] = d(rng);
      f.c1.data()[i] = d(rng);
      f.c2.data()[i] = d(rng);
      f.c3.data()[i] = z(rng);
    }
    fields.push_back(f);
    targets.push_back(t);
  }
  LossConfig cfg;
  cfg.omega = {1.0, 0.1, 0.1};
  cfg.gamma = 3.0;
  double expected = 0.0;
  for (int s = 0; s < 3; ++s) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < targets[s].size(); ++i) {
      const double t = targets[s].data()[i];
      const double e1 = fields[s].c1.data()[i] - t;
      const double e2 = fields[s].c2.data()[i] - t;
      const double sg = 1.0 / (1.0 + std::exp(-fields[s].c3.data()[i]));
      sum += (e1 >= 0 ? 3.0 * e1 : -e1 / 3.0) + (e2 >= 0 ? e2 / 3.0 : -3.0 * e2) +
             std::abs(sg * fields[s].c1.data()[i] + (1 - sg) * fields[s].c2.data()[i] - t);
    }
    expected += cfg.omega[s] * sum / static_cast<double>(targets[s].size());
  }
  EXPECT_NEAR(multiscale_loss<double>(fields, targets, cfg).value, expected, 1e-12 * expected);
}

TEST(MultiscaleLoss, ZeroResidualEverywhere) {
  std::vector<Field> fields;
  std::vector<DepthMap> targets;
  for (int n : {4, 2, 1}) {
    Field f(n, n);
    f.c1.setConstant(12.0);
    f.c2.setConstant(12.0);
    fields.push_back(f);
    targets.push_back(DepthMap::Constant(n, n, 12.0));
  }
  LossConfig cfg;
  cfg.omega = {1.0, 1.0, 1.0};
  EXPECT_EQ(multiscale_loss<double>(fields, targets, cfg).value, 0.0);
}

TEST(MultiscaleLoss, RejectsMismatchedScales) {
  std::vector<Field> fields{Field(2, 2)};
  std::vector<DepthMap> targets;
  EXPECT_THROW(multiscale_loss<double>(fields, targets, LossConfig{}), std::invalid_argument);
}

TEST(SymmetricLoss, Values) {
  EXPECT_EQ(symmetric_loss(SymmetricLoss::kL1, -2.0).value, 2.0);
  EXPECT_EQ(symmetric_loss(SymmetricLoss::kL2, -2.0).value, 4.0);
  EXPECT_EQ(symmetric_loss(SymmetricLoss::kL1L2, -2.0).value, 6.0);
  EXPECT_EQ(symmetric_loss(SymmetricLoss::kHuber, 0.5).value, 0.125);
  EXPECT_EQ(symmetric_loss(SymmetricLoss::kHuber, -3.0).value, 2.5);
  EXPECT_EQ(symmetric_loss(SymmetricLoss::kHuber, -3.0).dvalue, -1.0);
}

TEST(LossConfig, Validate) {
  LossConfig c;
  EXPECT_NO_THROW(c.validate());
  c.omega[1] = -0.1;
  EXPECT_THROW(c.validate(), std::domain_error);
}
