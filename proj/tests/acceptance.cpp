// One PASS/FAIL line per acceptance criterion; nonzero exit if any fails.
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "twise/ambiguity.hpp"
#include "twise/fitter.hpp"
#include "twise/losses.hpp"
#include "twise/metrics.hpp"
#include "twise/scenegen.hpp"

using namespace twise;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

int failures = 0;

void run_criterion(int id, const char* name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < limit_s;
  const bool pass = out.ok && in_time;
  if (!pass) ++failures;
  std::printf("%s %2d %-22s %s [%.2f s / %.0f s%s]\n", pass ? "PASS" : "FAIL", id, name, out.detail.c_str(), secs,
              limit_s, in_time ? "" : " TOO SLOW");
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rel_err(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / scale;
}

// ---------------------------------------------------------------- 1
Outcome loss_identities() {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> eps(-100.0, 100.0), gam(1.0, 10.0);
  long bad = 0;
  for (int k = 0; k < 10000; ++k) {
    const double e = eps(rng), g = gam(rng);
    const double a = ale(e, g).value, r = rale(e, g).value;
    if (r != ale(-e, g).value) ++bad;
    if (a < 0.0 || r < 0.0) ++bad;
    if (ale(e, 1.0).value != std::abs(e) || rale(e, 1.0).value != std::abs(e)) ++bad;
  }
  return {bad == 0, fmt("%ld violations in 10000 draws", bad)};
}

// ---------------------------------------------------------------- 2
Outcome gradient_oracle() {
  constexpr double h = 1e-4, kink = 1e-3, tol = 1e-6;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> eps(-20.0, 20.0), gam(1.0, 10.0), dep(2.0, 60.0), lg(-3.0, 3.0);
  double worst = 0.0;
  int points = 0;
  auto away = [&](double e) { return std::abs(e) >= kink + h; };

  while (points < 250) {  // ale / rale
    const double e = eps(rng), g = gam(rng);
    if (!away(e)) continue;
    worst = std::max(worst, rel_err(ale(e, g).dvalue, (ale(e + h, g).value - ale(e - h, g).value) / (2 * h)));
    worst = std::max(worst, rel_err(rale(e, g).dvalue, (rale(e + h, g).value - rale(e - h, g).value) / (2 * h)));
    ++points;
  }
  while (points < 500) {  // fusion
    const double a = dep(rng), b = dep(rng), c = lg(rng), t = dep(rng);
    const double s = sigmoid(c);
    if (!away(s * a + (1 - s) * b - t) || std::abs(a - b) < 0.1) continue;
    const auto f = fusion_loss(a, b, c, t);
    auto v = [&](double x, double y, double z) { return fusion_loss(x, y, z, t).value; };
    worst = std::max(worst, rel_err(f.d_c3, (v(a, b, c + h) - v(a, b, c - h)) / (2 * h)));
    worst = std::max(worst, rel_err(f.d_d1, (v(a + h, b, c) - v(a - h, b, c)) / (2 * h)));
    worst = std::max(worst, rel_err(f.d_d2, (v(a, b + h, c) - v(a, b - h, c)) / (2 * h)));
    ++points;
  }
  LossConfig cfg;
  cfg.fusion_gradient = FusionGradient::kFull;
  while (points < 1000) {  // combined loss, one random coordinate per point
    cfg.gamma = gam(rng);
    Field f(3, 3);
    DepthMap target(3, 3);
    bool ok = true;
    for (Eigen::Index i = 0; i < 9; ++i) {
      target.data()[i] = i == 4 ? 0.0 : dep(rng);
      f.c1.data()[i] = dep(rng);
      f.c2.data()[i] = dep(rng);
      f.c3.data()[i] = lg(rng);
      if (target.data()[i] > 0) {
        const double s = sigmoid(f.c3.data()[i]);
        ok = ok && away(f.c1.data()[i] - target.data()[i]) && away(f.c2.data()[i] - target.data()[i]) &&
             away(s * f.c1.data()[i] + (1 - s) * f.c2.data()[i] - target.data()[i]);
      }
    }
    if (!ok) continue;
    const auto base = combined_loss(f, target, cfg);
    const int ch = static_cast<int>(rng() % 3);
    const Eigen::Index i = static_cast<Eigen::Index>(rng() % 9);
    auto channel = [&](Field& x) -> DepthMap& { return ch == 0 ? x.c1 : ch == 1 ? x.c2 : x.c3; };
    const Field& g = base.gradient;
    const DepthMap& grad = ch == 0 ? g.c1 : ch == 1 ? g.c2 : g.c3;
    Field up = f, dn = f;
    channel(up).data()[i] += h;
    channel(dn).data()[i] -= h;
    const double num = (combined_loss(up, target, cfg).value - combined_loss(dn, target, cfg).value) / (2 * h);
    const double ana = grad.data()[i];
    if (target.data()[i] == 0.0) {
      worst = std::max(worst, std::abs(ana) + std::abs(num));
    } else {
      worst = std::max(worst, rel_err(ana, num));
    }
    ++points;
  }
  return {worst < tol, fmt("worst relative error %.2e over %d points (tol %.0e)", worst, points, tol)};
}

// ---------------------------------------------------------------- 3
Outcome corner_law() {
  constexpr double step = 1e-3;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d1d(1.0, 40.0), gapd(0.5, 10.0), pd(0.02, 0.98), gam(1.0, 10.0);
  long off_corner = 0, wrong_side = 0, skipped = 0;
  for (int k = 0; k < 1000; ++k) {
    const double d1 = d1d(rng), d2 = d1 + gapd(rng), p1 = pd(rng), g = gam(rng);
    const auto model = AmbiguityModel::binary(d1, d2, p1);
    for (LossKind kind : {LossKind::kAle, LossKind::kRale}) {
      const double lo = d1 - 1.0;
      const long n = static_cast<long>((d2 - d1 + 2.0) / step);
      double best_d = lo, best_v = expected_loss(model, kind, g, lo);
      for (long j = 1; j <= n; ++j) {
        const double d = lo + j * step;
        const double v = expected_loss(model, kind, g, d);
        if (v < best_v) best_v = v, best_d = d;
      }
      const bool near1 = std::abs(best_d - d1) <= step, near2 = std::abs(best_d - d2) <= step;
      if (!near1 && !near2) ++off_corner;
      // foreground wins iff gamma exceeds sqrt(p2/p1) for ALE, background iff it exceeds sqrt(p1/p2) for RALE
      const double thr = kind == LossKind::kAle ? std::sqrt((1 - p1) / p1) : std::sqrt(p1 / (1 - p1));
      if (std::abs(g - thr) < 0.01 * thr) {
        ++skipped;
        continue;
      }
      const bool expect_fg = kind == LossKind::kAle ? g > thr : g < thr;
      if (expect_fg ? !near1 : !near2) ++wrong_side;
      const Side side = predicted_side(model, kind, g);
      if (side != (expect_fg ? Side::kForeground : Side::kBackground)) ++wrong_side;
      if (minimizer(model, kind, g).depth != (expect_fg ? d1 : d2)) ++wrong_side;
    }
  }
  return {off_corner == 0 && wrong_side == 0,
          fmt("2000 searches: %ld off-corner, %ld wrong side, %ld within 1%% of threshold", off_corner, wrong_side,
              skipped)};
}

// ---------------------------------------------------------------- 4
Outcome fusion_law() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> dep(1.0, 60.0), pd(0.0, 1.0);
  long bad = 0;
  for (int k = 0; k < 1000; ++k) {
    const double a = dep(rng), b = dep(rng), p = pd(rng);
    double best_s = 0.0, best_v = INFINITY;
    for (int j = 0; j <= 1000; ++j) {
      const double s = j * 1e-3;
      const double blend = s * a + (1 - s) * b;
      const double v = p * std::abs(blend - a) + (1 - p) * std::abs(blend - b);
      if (v < best_v) best_v = v, best_s = s;
    }
    const auto fm = fusion_minimizer(p);
    if (fm.is_tie || std::abs(best_s - fm.sigma) > 1e-3) ++bad;
  }
  const bool tie = fusion_minimizer(0.5).is_tie;
  return {bad == 0 && tie, fmt("%ld of 1000 disagree; p=0.5 %s", bad, tie ? "flagged tie" : "NOT flagged tie")};
}

// ---------------------------------------------------------------- 5
Outcome stochastic_sweep() {
  int agree = 0, cells = 0;
  std::string misses;
  for (double p1 : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    for (double g : {1.25, 1.5, 2.0, 3.0, 5.0}) {
      const auto model = AmbiguityModel::binary(10.0, 20.0, p1);
      LossConfig loss;
      loss.gamma = g;
      FitConfig fit;
      fit.iterations = 20000;
      fit.learning_rate = 0.05;
      fit.seed = 7;
      const auto rep = fit_stochastic_pixel(model, loss, fit);
      const auto check = check_against_theory(model, g, rep.converged_values);
      ++cells;
      if (check.agree()) {
        ++agree;
      } else {
        misses += fmt(" (%.1f,%.2f)", p1, g);
      }
    }
  }
  return {agree >= 24, fmt("%d/%d cells agree (need 24)%s", agree, cells, misses.c_str())};
}

// ---------------------------------------------------------------- 6
Outcome anti_smearing() {
  SceneSpec spec;
  spec.kind = SceneKind::kStep1d;
  spec.width = 100;
  spec.height = 1;
  spec.near_depth = 10.0;
  spec.far_depth = 30.0;
  spec.edge_col = 50;
  auto scene = make_scene(spec);
  scene.sparse = regular_sample(scene, 8, 6);
  LossConfig loss;
  loss.gamma = 2.0;
  const auto edge = region_masks(scene.labels, 3).edge;
  auto run = [&](Baseline b, int& width, double& edge_mae) {
    FitConfig fit;
    fit.bandwidth = 6.0;
    fit.iterations = 2000;
    fit.learning_rate = 0.05;
    fit.baseline = b;
    const DepthMap fused = fit_kernel_regression(scene, loss, fit).fused();
    int last_lo = -1, first_hi = 100;
    for (int x = 0; x < 100; ++x) {
      if (fused(0, x) < 10.5) last_lo = x;
    }
    for (int x = 99; x >= 0; --x) {
      if (fused(0, x) > 29.5) first_hi = x;
    }
    width = first_hi - last_lo;
    edge_mae = standard_metrics(fused, scene.dense_gt, 2.0, &edge, Region::kEdge).mae;
  };
  int w_tw = 0, w_l2 = 0;
  double e_tw = 0.0, e_l2 = 0.0;
  run(Baseline::kTwise, w_tw, e_tw);
  run(Baseline::kL2, w_l2, e_l2);
  const bool ok = w_tw <= 2 && w_l2 >= 6 && e_tw < 0.5 * e_l2;
  return {ok, fmt("width TWISE %d (<=2) L2 %d (>=6); edge MAE %.3f vs %.3f m (ratio %.2f < 0.5)", w_tw, w_l2, e_tw,
                  e_l2, e_tw / e_l2)};
}

// ---------------------------------------------------------------- 7
Outcome slab_ranking() {
  const Baseline methods[] = {Baseline::kTwise, Baseline::kL2, Baseline::kL1L2};
  double mae[3] = {0, 0, 0}, tmae[3] = {0, 0, 0};
  int per_seed_wins = 0;
  constexpr int seeds = 10;
  for (int seed = 0; seed < seeds; ++seed) {
    SceneSpec spec;
    spec.kind = SceneKind::kSlab2d;
    spec.seed = static_cast<std::uint64_t>(seed);
    auto scene = make_scene(spec);
    scene.sparse = lidar_sample(scene, 16, 0);
    double m[3], t[3];
    for (int i = 0; i < 3; ++i) {
      FitConfig fit;
      fit.bandwidth = 3.0;
      fit.iterations = 200;
      fit.learning_rate = 0.05;
      fit.baseline = methods[i];
      const auto rep = fit_kernel_regression(scene, LossConfig{}, fit);
      const auto r = standard_metrics(rep.fused(), scene.dense_gt, 2.0, &rep.valid);
      m[i] = r.mae;
      t[i] = r.tmae;
      mae[i] += r.mae / seeds;
      tmae[i] += r.tmae / seeds;
    }
    if (m[0] <= m[1] && m[0] <= m[2] && t[0] <= t[1] && t[0] <= t[2]) ++per_seed_wins;
  }
  const bool ok = mae[0] <= mae[1] && mae[0] <= mae[2] && tmae[0] <= tmae[1] && tmae[0] <= tmae[2];
  return {ok, fmt("mean MAE %.3f vs L2 %.3f, L1+L2 %.3f; tMAE %.3f vs %.3f, %.3f m; %d/%d seeds ordered", mae[0],
                  mae[1], mae[2], tmae[0], tmae[1], tmae[2], per_seed_wins, seeds)};
}

// ---------------------------------------------------------------- 8
Outcome metric_identities() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> dep(1.0, 80.0), err(-15.0, 15.0), u(0.0, 1.0);
  long bad = 0;
  for (int k = 0; k < 1000; ++k) {
    DepthMap gt(6, 8), a(6, 8), b(6, 8);
    LabelMap labels(6, 8);
    for (Eigen::Index i = 0; i < gt.size(); ++i) {
      gt.data()[i] = u(rng) < 0.2 ? 0.0 : dep(rng);
      a.data()[i] = std::max(0.05, gt.data()[i] + err(rng));
      b.data()[i] = std::max(0.05, gt.data()[i] + err(rng));
      labels.data()[i] = u(rng) < 0.3 ? 1 : 0;
    }
    if ((gt > 0).count() == 0) continue;
    const auto m = standard_metrics(a, gt, 2.0);
    if (!(m.tmae <= m.mae && m.trmse <= m.rmse && m.rmse >= m.mae)) ++bad;
    const auto ab = error_diff(a, b, gt), ba = error_diff(b, a, gt);
    if (!(ab.abs_diff == -ba.abs_diff).all() || !(ab.sq_diff == -ba.sq_diff).all()) ++bad;
    const Mask valid = valid_mask(gt);
    const auto r = region_masks(labels, 3, &valid);
    if ((r.edge && r.inside).any() || !((r.edge || r.inside) == valid).all()) ++bad;
  }
  return {bad == 0, fmt("%ld violations over 1000 random pairs", bad)};
}

// ---------------------------------------------------------------- 9
Outcome sparsity_ladder() {
  std::string detail;
  bool ok = true;
  for (int r : {64, 32, 16, 8}) {
    for (int off = 0; off < 64 / r; ++off) {
      std::vector<int> expect;
      for (int i = off; i < 64; i += 64 / r) expect.push_back(i);
      if (kept_rings(r, off) != expect) ok = false;
    }
  }
  if (!ok) detail += "ring subsets wrong; ";
  for (std::uint64_t seed : {0u, 3u}) {
    SceneSpec spec;
    spec.kind = SceneKind::kComposite;
    spec.seed = seed;
    const auto scene = make_scene(spec);
    long prev = 0;
    detail += fmt("seed %d:", static_cast<int>(seed));
    for (int r : {64, 32, 16, 8}) {
      const long n = (lidar_sample(scene, r, 0) > 0).count();
      if (prev) {
        const double ratio = static_cast<double>(prev) / n;
        ok = ok && std::abs(ratio - 2.0) <= 0.3;
        detail += fmt(" %.3f", ratio);
      }
      prev = n;
    }
    detail += "; ";
  }
  return {ok, detail + "ratios within 2 +-15%"};
}

// ---------------------------------------------------------------- 10
Outcome semidense() {
  bool ok = true;
  std::string detail;
  for (SceneKind kind : {SceneKind::kSlab2d, SceneKind::kComposite}) {
    SceneSpec spec;
    spec.kind = kind;
    spec.seed = 1;
    const auto scene = make_scene(spec);
    double prev = -1.0, max_err = 0.0;
    detail += to_string(kind) + ":";
    for (double st : {0.0, 0.01, 0.02, 0.05}) {
      double mean = 0.0;
      for (int s = 0; s < 10; ++s) {
        AccumulationConfig cfg;
        cfg.sigma_trans = st;
        cfg.seed = static_cast<std::uint64_t>(s);
        const DepthMap semi = accumulate_semidense(scene, cfg);
        mean += outlier_stats(semi, scene.dense_gt, scene.spec.camera).metric_outlier_fraction / 10;
        if (st == 0.0) {
          for (Eigen::Index i = 0; i < semi.size(); ++i) {
            if (semi.data()[i] > 0) max_err = std::max(max_err, std::abs(semi.data()[i] - scene.dense_gt.data()[i]));
          }
        }
      }
      ok = ok && mean >= prev;
      prev = mean;
      detail += fmt(" %.4f", mean);
    }
    ok = ok && max_err <= 1e-6;
    detail += fmt(" (zero-noise max err %.1e m); ", max_err);
  }
  CameraIntrinsics cam;
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> v(0.5, 120.0);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const double x = v(rng);
    const double d = disparity_depth_convert(x, cam, Conversion::kDisparityToDepth);
    worst = std::max(worst, std::abs(disparity_depth_convert(d, cam, Conversion::kDepthToDisparity) - x));
    const double p = disparity_depth_convert(x, cam, Conversion::kDepthToDisparity);
    worst = std::max(worst, std::abs(disparity_depth_convert(p, cam, Conversion::kDisparityToDepth) - x));
  }
  ok = ok && worst <= 1e-12;
  return {ok, detail + fmt("involution err %.1e", worst)};
}

// ---------------------------------------------------------------- 11
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome cli_determinism() {
  const std::vector<std::string> cmds = {
      "loss-eval --gamma 3 --eps=-4:0.5:4 --fusion-depths 10,20,12 --out grid.csv",
      "synth --kind composite --seed 2 --prefix comp",
      "sparsify --kind composite --seed 2 --rows 16 --out comp_16r.pgm",
      "semidense --kind composite --seed 2 --sigma-t 0.02 --sigma-r 0.001 --noise-seed 4 --out comp_semi.pgm",
      "synth --kind step1d --width 100 --height 1 --prefix step",
      "sparsify --kind step1d --width 100 --height 1 --stride 8 --phase 6 --out step_sp.pgm",
      "fit --sparse step_sp.pgm --prefix tw",
      "fit --sparse step_sp.pgm --prefix l2 --baseline l2",
      "fit --sparse comp_16r.pgm --prefix comp_fit --iterations 60 --bandwidth 3 --staged 20",
      "loss-eval --c1 tw_c1.pgm --c2 tw_c2.pgm --sigma tw_sigma.pgm --target step_gt.pgm --out field.json",
      "metrics --pred tw_fused.pgm --gt step_gt.pgm --labels step_labels.pgm --out m.csv",
      "compare --pred-a l2_fused.pgm --pred-b tw_fused.pgm --gt step_gt.pgm --labels step_labels.pgm --prefix cmp",
      "analyze --p1 0.1,0.3,0.5,0.7,0.9 --gamma 1.5,3 --empirical --iterations 5000 --out analyze.csv",
  };
  const fs::path root = fs::temp_directory_path() / ("twise_accept_" + std::to_string(::getpid()));
  fs::remove_all(root);
  std::vector<std::map<std::string, std::string>> runs;
  std::string failed;
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = root / std::to_string(rep);
    fs::create_directories(dir);
    for (const auto& c : cmds) {
      const std::string line = "cd '" + dir.string() + "' && '" TWISE_CLI_PATH "' " + c + " >/dev/null 2>&1";
      const int st = std::system(line.c_str());
      if (!WIFEXITED(st) || WEXITSTATUS(st) != 0) failed += " [" + c.substr(0, c.find(' ')) + "]";
    }
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) files[e.path().filename().string()] = slurp(e.path());
    runs.push_back(std::move(files));
  }
  fs::remove_all(root);
  long differing = 0;
  for (const auto& [name, bytes] : runs[0]) {
    const auto it = runs[1].find(name);
    if (it == runs[1].end() || it->second != bytes) ++differing;
  }
  if (runs[0].size() != runs[1].size()) ++differing;
  const bool ok = failed.empty() && differing == 0 && runs[0].size() > cmds.size();
  return {ok, fmt("%zu commands, %zu files, %ld differ%s", cmds.size(), runs[0].size(), differing,
                  failed.empty() ? "" : ("; failed:" + failed).c_str())};
}

}  // namespace

int main() {
  run_criterion(1, "loss identities", 1, loss_identities);
  run_criterion(2, "gradient oracle", 5, gradient_oracle);
  run_criterion(3, "expected-loss corners", 30, corner_law);
  run_criterion(4, "fusion minimizer", 10, fusion_law);
  run_criterion(5, "stochastic sweep", 120, stochastic_sweep);
  run_criterion(6, "anti-smearing", 60, anti_smearing);
  run_criterion(7, "slab loss ranking", 300, slab_ranking);
  run_criterion(8, "metric identities", 5, metric_identities);
  run_criterion(9, "sparsity ladder", 5, sparsity_ladder);
  run_criterion(10, "semi-dense outliers", 120, semidense);
  run_criterion(11, "cli determinism", 60, cli_determinism);
  std::printf("%d failed\n", failures);
  return failures == 0 ? 0 : 1;
}
