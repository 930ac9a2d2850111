// twise: experiment runner for twin-surface depth completion.
//
// Every command resolves its parameters as defaults <- --config JSON <- flags,
// writes plain files (PGM, CSV, JSON) and drops a "<file>.json" sidecar next
// to each one with the resolved config, its hash, the seed and the version.

#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "twise/ambiguity.hpp"
#include "twise/config.hpp"
#include "twise/fitter.hpp"
#include "twise/losses.hpp"
#include "twise/metrics.hpp"
#include "twise/pgm.hpp"
#include "twise/scenegen.hpp"

#ifndef TWISE_VERSION
#define TWISE_VERSION "0.0.0"
#endif

namespace {

using twise::Json;

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2, kNoConvergence = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string kebab(std::string key) {
  for (char& ch : key) {
    if (ch == '_') ch = '-';
  }
  return key;
}

/// Parameters of one subcommand. Keys double as JSON config keys and, in
/// kebab case, as flag names.
class Params {
 public:
  Params(CLI::App* app, Json defaults) : app_(app), defaults_(std::move(defaults)) {
    app_->add_option("--config", config_path_, "JSON file with parameters; flags override it");
  }

  template <typename T>
  void option(const std::string& key, const std::string& help) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app_->add_option("--" + kebab(key), *value, help);
    setters_.push_back([opt, value, key](Json& j) {
      if (opt->count() > 0) j[key] = *value;
    });
  }

  void list(const std::string& key, const std::string& help) {
    auto value = std::make_shared<std::vector<double>>();
    CLI::Option* opt = app_->add_option("--" + kebab(key), *value, help)->delimiter(',');
    setters_.push_back([opt, value, key](Json& j) {
      if (opt->count() > 0) j[key] = *value;
    });
  }

  void flag(const std::string& key, const std::string& help) {
    auto value = std::make_shared<bool>(false);
    CLI::Option* opt = app_->add_flag("--" + kebab(key), *value, help);
    setters_.push_back([opt, value, key](Json& j) {
      if (opt->count() > 0) j[key] = *value;
    });
  }

  Json resolve() const {
    Json j = defaults_;
    if (!config_path_.empty()) {
      std::ifstream in(config_path_);
      if (!in) throw UsageError("cannot open config " + config_path_);
      Json file;
      try {
        file = Json::parse(in);
      } catch (const Json::exception& e) {
        throw UsageError("config " + config_path_ + ": " + e.what());
      }
      if (!file.is_object()) throw UsageError("config must be a JSON object");
      for (const auto& [key, value] : file.items()) {
        if (!defaults_.contains(key)) throw UsageError("unknown config key: " + key);
        j[key] = value;
      }
    }
    for (const auto& set : setters_) set(j);
    return j;
  }

 private:
  CLI::App* app_;
  Json defaults_;
  std::string config_path_;
  std::vector<std::function<void(Json&)>> setters_;
};

// ---- output helpers --------------------------------------------------------

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_sidecar(const std::string& file, const std::string& command, const Json& config,
                   const Json& extra = Json::object()) {
  Json s = {{"tool", "twise"},
            {"version", TWISE_VERSION},
            {"command", command},
            {"file", file},
            {"config", config},
            {"config_hash", twise::hex64(twise::config_hash(config))},
            {"seed", config.contains("seed") ? config.at("seed") : Json(0)}};
  for (const auto& [key, value] : extra.items()) s[key] = value;
  write_text(file + ".json", s.dump(2) + "\n");
}

/// CSV to `path`, or to stdout when the path is empty.
void emit(const std::string& path, const std::string& text, const std::string& command, const Json& config) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  write_text(path, text);
  write_sidecar(path, command, config);
}

std::string str(const Json& j, const char* key) { return j.at(key).get<std::string>(); }

std::string require_path(const Json& j, const char* key) {
  std::string p = str(j, key);
  if (p.empty()) throw UsageError(std::string("--") + kebab(key) + " is required");
  return p;
}

// ---- scene parameters shared by synth / sparsify / semidense ---------------

Json scene_defaults(Json extra) {
  Json j = twise::scene_spec_to_json(twise::SceneSpec{});
  for (const auto& [key, value] : extra.items()) j[key] = value;
  return j;
}

void scene_options(Params& p) {
  p.option<std::string>("kind", "step1d|flat1d|slope1d|slab2d|pole|slope2d|composite");
  p.option<int>("width", "image width");
  p.option<int>("height", "image height");
  p.option<double>("focal", "focal length in pixels");
  p.option<double>("cx", "principal point column");
  p.option<double>("cy", "principal point row");
  p.option<double>("baseline", "stereo baseline in meters");
  p.option<double>("d_max", "maximum valid depth");
  p.option<std::uint64_t>("seed", "scene seed");
  p.option<double>("near_depth", "foreground depth");
  p.option<double>("far_depth", "background depth");
  p.option<int>("edge_col", "first background column of the step scene");
  p.option<double>("slope", "slope of the slope scenes");
  p.option<int>("pole_width_px", "pole width");
  p.option<double>("camera_height", "camera height above ground");
  p.option<double>("wall_depth", "depth of the back wall");
  p.option<int>("num_boxes", "boxes in the composite scene");
}

twise::SceneSpec scene_from(const Json& j) {
  static const std::vector<std::string> keys{
      "kind", "width", "height", "focal", "cx", "cy", "baseline", "d_max", "seed", "near_depth",
      "far_depth", "edge_col", "slope", "pole_width_px", "camera_height", "wall_depth", "num_boxes"};
  Json sub = Json::object();
  for (const std::string& k : keys) sub[k] = j.at(k);
  twise::SceneSpec spec;
  try {
    twise::scene_spec_from_json(sub, spec);
    spec.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return spec;
}

// ---- loss-eval -------------------------------------------------------------

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("bad grid '" + text + "', expected start:step:stop");
    }
  }
  if (parts.size() != 3 || !(parts[1] > 0.0) || parts[2] < parts[0]) {
    throw UsageError("bad grid '" + text + "', expected start:step:stop with step > 0");
  }
  const long n = std::lround(std::floor((parts[2] - parts[0]) / parts[1] + 1e-9)) + 1;
  if (n > 10000000) throw UsageError("grid too large");
  std::vector<double> out;
  for (long i = 0; i < n; ++i) out.push_back(parts[0] + static_cast<double>(i) * parts[1]);
  return out;
}

int cmd_loss_eval(const Json& cfg) {
  const double gamma = cfg.at("gamma").get<double>();
  twise::LossConfig loss;
  loss.gamma = gamma;
  loss.fusion_weight = cfg.at("fusion_weight").get<double>();
  try {
    loss.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  const std::string target = str(cfg, "target");
  const std::string out = str(cfg, "out");

  if (target.empty()) {
    const std::vector<double> grid = parse_grid(str(cfg, "eps"));
    const std::vector<double> fd = cfg.at("fusion_depths").get<std::vector<double>>();
    if (!fd.empty() && fd.size() != 3) throw UsageError("--fusion-depths takes d1,d2,d_true");
    std::string csv = "eps,ale,rale,d_ale,d_rale";
    csv += fd.empty() ? "\n" : ",fusion,d_fusion\n";
    for (double e : grid) {
      const auto a = twise::ale(e, gamma);
      const auto r = twise::rale(e, gamma);
      csv += twise::format_double(e) + "," + twise::format_double(a.value) + "," + twise::format_double(r.value) +
             "," + twise::format_double(a.dvalue) + "," + twise::format_double(r.dvalue);
      if (!fd.empty()) {
        // eps is the fusion logit here.
        const auto f = twise::fusion_loss(fd[0], fd[1], e, fd[2]);
        csv += "," + twise::format_double(f.value) + "," + twise::format_double(f.d_c3);
      }
      csv += "\n";
    }
    emit(out, csv, "loss-eval", cfg);
    return kOk;
  }

  twise::Field field;
  field.c1 = twise::read_depth_pgm(require_path(cfg, "c1"));
  field.c2 = twise::read_depth_pgm(require_path(cfg, "c2"));
  const twise::DepthMap sigma = twise::read_pgm16(require_path(cfg, "sigma")).cast<double>() / 65535.0;
  field.c3 = sigma.unaryExpr([](double s) { return twise::logit(s); });
  const twise::DepthMap gt = twise::read_depth_pgm(target);
  if (!field.consistent()) throw std::invalid_argument("c1, c2 and sigma must have the same shape");
  const auto value = twise::combined_loss(field, gt, loss);
  Json result = {{"loss", value.value}, {"valid_count", value.valid_count}};
  emit(out, result.dump(2) + "\n", "loss-eval", cfg);
  return kOk;
}

// ---- analyze ---------------------------------------------------------------

int cmd_analyze(const Json& cfg) {
  const auto p1s = cfg.at("p1").get<std::vector<double>>();
  const auto gammas = cfg.at("gamma").get<std::vector<double>>();
  const double d1 = cfg.at("d1").get<double>();
  const double d2 = cfg.at("d2").get<double>();
  const bool empirical = cfg.at("empirical").get<bool>();
  if (p1s.empty() || gammas.empty()) throw UsageError("empty sweep");
  for (double p : p1s) {
    if (!(p > 0.0 && p < 1.0)) throw UsageError("p1 values must lie in (0, 1)");
  }
  for (double g : gammas) {
    if (!(g >= 1.0)) throw UsageError("gamma values must be >= 1");
  }
  if (!(d1 < d2)) throw UsageError("d1 must be smaller than d2");

  twise::FitConfig fit;
  fit.iterations = cfg.at("iterations").get<int>();
  fit.learning_rate = cfg.at("learning_rate").get<double>();
  fit.seed = cfg.at("seed").get<std::uint64_t>();
  try {
    fit.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  const double margin = cfg.at("margin").get<double>();

  std::string csv =
      "p1,gamma,threshold,predicted,empirical_c1,empirical_c2,empirical_sigma,predicted_c2,predicted_sigma,agree\n";
  for (double p1 : p1s) {
    for (double gamma : gammas) {
      const auto model = twise::AmbiguityModel::binary(d1, d2, p1);
      twise::ChannelValues v;
      if (empirical) {
        twise::LossConfig loss;
        loss.gamma = gamma;
        v = twise::fit_stochastic_pixel(model, loss, fit).converged_values;
      }
      const auto check = twise::check_against_theory(model, gamma, v, margin);
      auto f = twise::format_double;
      csv += f(p1) + "," + f(gamma) + "," + f(twise::gamma_threshold(p1, 1.0 - p1)) + "," + f(check.predicted_c1) + ",";
      csv += empirical ? f(v.c1) + "," + f(v.c2) + "," + f(v.sigma) : std::string(",,");
      csv += "," + f(check.predicted_c2) + "," + f(check.predicted_sigma) + ",";
      csv += empirical ? (check.agree() ? "1" : "0") : "";
      csv += "\n";
    }
  }
  emit(str(cfg, "out"), csv, "analyze", cfg);
  return kOk;
}

// ---- synth / sparsify / semidense ------------------------------------------

int cmd_synth(const Json& cfg) {
  const twise::SceneSpec spec = scene_from(cfg);
  const std::string prefix = require_path(cfg, "prefix");
  const twise::SceneSample scene = twise::make_scene(spec);
  const Json extra = {{"scene", twise::scene_spec_to_json(spec)},
                      {"valid_count", static_cast<long>((scene.dense_gt > 0.0).count())}};
  twise::write_depth_pgm(prefix + "_gt.pgm", scene.dense_gt);
  write_sidecar(prefix + "_gt.pgm", "synth", cfg, extra);
  twise::write_label_pgm(prefix + "_labels.pgm", scene.labels);
  write_sidecar(prefix + "_labels.pgm", "synth", cfg, extra);
  return kOk;
}

int cmd_sparsify(const Json& cfg) {
  const twise::SceneSpec spec = scene_from(cfg);
  const std::string out = require_path(cfg, "out");
  const int stride = cfg.at("stride").get<int>();
  const int rows = cfg.at("rows").get<int>();
  if (stride < 0) throw UsageError("stride must be >= 0");
  if (stride == 0) {
    if (spec.is_1d()) throw UsageError("1D scenes need --stride");
    try {
      twise::kept_rings(rows, cfg.at("offset").get<int>());
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  const twise::SceneSample scene = twise::make_scene(spec);
  const twise::DepthMap sparse = stride > 0 ? twise::regular_sample(scene, stride, cfg.at("phase").get<int>())
                                            : twise::lidar_sample(scene, rows, cfg.at("offset").get<int>());
  twise::write_depth_pgm(out, sparse);
  write_sidecar(out, "sparsify", cfg,
                {{"scene", twise::scene_spec_to_json(spec)},
                 {"valid_count", static_cast<long>((sparse > 0.0).count())},
                 {"outlier_stats", twise::outlier_stats_to_json(
                                       twise::outlier_stats(sparse, scene.dense_gt, spec.camera))}});
  return kOk;
}

int cmd_semidense(const Json& cfg) {
  const twise::SceneSpec spec = scene_from(cfg);
  if (spec.is_1d()) throw UsageError("semidense needs a 2D scene");
  const std::string out = require_path(cfg, "out");
  twise::AccumulationConfig acc;
  acc.frames = cfg.at("frames").get<int>();
  acc.sigma_trans = cfg.at("sigma_t").get<double>();
  acc.sigma_rot = cfg.at("sigma_r").get<double>();
  acc.rows = cfg.at("rows").get<int>();
  acc.offset = cfg.at("offset").get<int>();
  acc.seed = cfg.at("noise_seed").get<std::uint64_t>();
  acc.motion.translation.z() = cfg.at("motion_z").get<double>();
  if (acc.frames < 0 || acc.sigma_trans < 0.0 || acc.sigma_rot < 0.0) {
    throw UsageError("frames and noise levels must be >= 0");
  }
  try {
    twise::kept_rings(acc.rows, acc.offset);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const twise::SceneSample scene = twise::make_scene(spec);
  const twise::DepthMap semi = twise::accumulate_semidense(scene, acc);
  twise::write_depth_pgm(out, semi);
  write_sidecar(out, "semidense", cfg,
                {{"scene", twise::scene_spec_to_json(spec)},
                 {"valid_count", static_cast<long>((semi > 0.0).count())},
                 {"outlier_stats",
                  twise::outlier_stats_to_json(twise::outlier_stats(semi, scene.dense_gt, spec.camera))}});
  return kOk;
}

// ---- fit -------------------------------------------------------------------

int cmd_fit(const Json& cfg) {
  twise::FitConfig fit;
  twise::LossConfig loss;
  Json sub = Json::object();
  for (const char* k : {"learning_rate", "iterations", "seed", "bandwidth", "schedule", "baseline", "huber_delta",
                        "gamma", "omega", "fusion_weight"}) {
    sub[k] = cfg.at(k);
  }
  const std::string mode = str(cfg, "fusion_gradient");
  try {
    twise::fit_config_from_json(sub, fit, loss);
    const int staged = cfg.at("staged").get<int>();
    if (staged > 0) fit.schedule = twise::staged_schedule(staged);
    if (mode == "sigma") {
      loss.fusion_gradient = twise::FusionGradient::kSigmaOnly;
    } else if (mode == "full") {
      loss.fusion_gradient = twise::FusionGradient::kFull;
    } else {
      throw std::invalid_argument("fusion_gradient must be sigma or full");
    }
    fit.validate();
    loss.validate();
  } catch (const UsageError&) {
    throw;
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  const std::string prefix = require_path(cfg, "prefix");

  twise::SceneSample scene;
  scene.sparse = twise::read_depth_pgm(require_path(cfg, "sparse"));
  const twise::FitReport report = twise::fit_kernel_regression(scene, loss, fit);

  twise::DepthMap c1 = report.field.c1;
  twise::DepthMap c2 = report.field.c2;
  twise::DepthMap sigma = report.field.c3.unaryExpr([](double z) { return twise::sigmoid(z); });
  twise::DepthMap amb = twise::ambiguity_map(report.field);
  for (Eigen::Index i = 0; i < c1.size(); ++i) {
    if (report.valid.data()[i]) continue;
    c1.data()[i] = c2.data()[i] = sigma.data()[i] = amb.data()[i] = 0.0;
  }
  const double amb_scale = cfg.at("ambiguity_scale").get<double>();

  auto depth_out = [&](const std::string& name, const twise::DepthMap& d) {
    twise::write_depth_pgm(prefix + name, d);
    write_sidecar(prefix + name, "fit", cfg, {{"encoding", "depth"}, {"scale", twise::kDepthScale}});
  };
  depth_out("_fused.pgm", report.fused());
  depth_out("_c1.pgm", c1);
  depth_out("_c2.pgm", c2);
  twise::write_pgm16(prefix + "_sigma.pgm", twise::encode_scaled(sigma, 65535.0));
  write_sidecar(prefix + "_sigma.pgm", "fit", cfg, {{"encoding", "scaled"}, {"scale", 65535.0}});
  twise::write_pgm16(prefix + "_ambiguity.pgm", twise::encode_signed(amb, amb_scale));
  write_sidecar(prefix + "_ambiguity.pgm", "fit", cfg,
                {{"encoding", "signed"}, {"scale", amb_scale}, {"offset", twise::kSignedOffset}});

  std::string trace = "iteration,loss\n";
  for (std::size_t i = 0; i < report.loss_trace.size(); ++i) {
    trace += std::to_string(i) + "," + twise::format_double(report.loss_trace[i]) + "\n";
  }
  write_text(prefix + "_loss_trace.csv", trace);
  write_sidecar(prefix + "_loss_trace.csv", "fit", cfg);

  Json stages = Json::array();
  for (const auto& st : report.stages) stages.push_back({{"first_iteration", st.first_iteration}, {"omega", st.omega}});
  Json rep = {{"converged", report.converged},
              {"iterations_run", report.loss_trace.size()},
              {"final_loss", report.loss_trace.empty() ? Json(nullptr) : Json(report.loss_trace.back())},
              {"valid_positions", static_cast<long>(report.valid.count())},
              {"baseline", twise::to_string(fit.baseline)},
              {"stages", stages}};
  write_text(prefix + "_report.json", rep.dump(2) + "\n");
  write_sidecar(prefix + "_report.json", "fit", cfg);
  if (!report.converged) {
    std::cerr << "twise fit: did not converge\n";
    return kNoConvergence;
  }
  return kOk;
}

// ---- metrics / compare -----------------------------------------------------

struct Evaluation {
  twise::DepthMap gt;
  std::optional<twise::RegionMasks> regions;
};

/// Ground truth restricted to pixels every prediction covers when
/// `ignore_missing` is set, plus the edge / inside masks if labels are given.
Evaluation load_evaluation(const Json& cfg, const std::vector<const twise::DepthMap*>& preds) {
  Evaluation ev;
  ev.gt = twise::read_depth_pgm(require_path(cfg, "gt"));
  for (const twise::DepthMap* p : preds) twise::require_same_shape(*p, ev.gt, "prediction vs gt");
  if (cfg.at("ignore_missing").get<bool>()) {
    for (const twise::DepthMap* p : preds) ev.gt = ((*p) > 0.0).select(ev.gt, 0.0);
  }
  const std::string labels = str(cfg, "labels");
  if (!labels.empty()) {
    const twise::LabelMap lab = twise::read_label_pgm(labels);
    twise::require_same_shape(lab, ev.gt, "labels vs gt");
    const twise::Mask valid = twise::valid_mask(ev.gt);
    ev.regions = twise::region_masks(lab, cfg.at("edge_radius").get<int>(), &valid);
  }
  return ev;
}

std::string metrics_table(const twise::DepthMap& pred, const Evaluation& ev, double trim) {
  std::string csv = twise::metrics_csv_header() + "\n";
  csv += twise::metrics_csv_row(twise::standard_metrics(pred, ev.gt, trim)) + "\n";
  if (!ev.regions) return csv;
  for (auto [region, mask] : {std::pair{twise::Region::kEdge, &ev.regions->edge},
                              std::pair{twise::Region::kInside, &ev.regions->inside}}) {
    if (mask->count() == 0) {
      csv += twise::to_string(region) + ",0,,,,,,\n";
      continue;
    }
    csv += twise::metrics_csv_row(twise::standard_metrics(pred, ev.gt, trim, mask, region)) + "\n";
  }
  return csv;
}

double trim_of(const Json& cfg) {
  const double t = cfg.at("trim").get<double>();
  if (!(t > 0.0)) throw UsageError("trim must be > 0");
  return t;
}

int cmd_metrics(const Json& cfg) {
  const double trim = trim_of(cfg);
  const twise::DepthMap pred = twise::read_depth_pgm(require_path(cfg, "pred"));
  const Evaluation ev = load_evaluation(cfg, {&pred});
  emit(str(cfg, "out"), metrics_table(pred, ev, trim), "metrics", cfg);
  return kOk;
}

int cmd_compare(const Json& cfg) {
  const double trim = trim_of(cfg);
  twise::BinSpec bins{cfg.at("bin_width").get<double>(), cfg.at("bins").get<int>()};
  if (!(bins.bin_width > 0.0) || bins.num_bins <= 0) throw UsageError("bad histogram bins");
  const double abs_scale = cfg.at("abs_scale").get<double>();
  const double sq_scale = cfg.at("sq_scale").get<double>();
  if (!(abs_scale > 0.0) || !(sq_scale > 0.0)) throw UsageError("scales must be > 0");
  const std::string prefix = require_path(cfg, "prefix");

  const twise::DepthMap a = twise::read_depth_pgm(require_path(cfg, "pred_a"));
  const twise::DepthMap b = twise::read_depth_pgm(require_path(cfg, "pred_b"));
  twise::require_same_shape(a, b, "pred_a vs pred_b");
  const Evaluation ev = load_evaluation(cfg, {&a, &b});

  const std::string ma = metrics_table(a, ev, trim);
  const std::string mb = metrics_table(b, ev, trim);
  write_text(prefix + "_metrics_a.csv", ma);
  write_sidecar(prefix + "_metrics_a.csv", "compare", cfg);
  write_text(prefix + "_metrics_b.csv", mb);
  write_sidecar(prefix + "_metrics_b.csv", "compare", cfg);

  const twise::ErrorDiffMap diff = twise::error_diff(a, b, ev.gt);
  twise::write_pgm16(prefix + "_abs_diff.pgm", twise::encode_signed(diff.abs_diff, abs_scale));
  write_sidecar(prefix + "_abs_diff.pgm", "compare", cfg,
                {{"encoding", "signed"}, {"scale", abs_scale}, {"offset", twise::kSignedOffset}});
  twise::write_pgm16(prefix + "_sq_diff.pgm", twise::encode_signed(diff.sq_diff, sq_scale));
  write_sidecar(prefix + "_sq_diff.pgm", "compare", cfg,
                {{"encoding", "signed"}, {"scale", sq_scale}, {"offset", twise::kSignedOffset}});

  const twise::DiffHistograms h = twise::diff_histograms(diff, bins);
  for (auto [name, hist] : {std::pair{"_hist_abs_wins.csv", &h.abs_wins}, std::pair{"_hist_abs_losses.csv", &h.abs_losses},
                            std::pair{"_hist_sq_wins.csv", &h.sq_wins}, std::pair{"_hist_sq_losses.csv", &h.sq_losses}}) {
    write_text(prefix + name, twise::histogram_csv(*hist));
    write_sidecar(prefix + name, "compare", cfg);
  }
  const long valid = static_cast<long>(diff.valid.count());
  const Json counts = {{"valid_pixels", valid},
                       {"b_wins", h.win_pixels},
                       {"a_wins", h.loss_pixels},
                       {"ties", valid - h.win_pixels - h.loss_pixels}};
  write_text(prefix + "_counts.json", counts.dump(2) + "\n");
  write_sidecar(prefix + "_counts.json", "compare", cfg);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"twin-surface depth completion experiments"};
  app.set_version_flag("--version", std::string(TWISE_VERSION));
  app.require_subcommand(1);

  struct Command {
    CLI::App* app;
    std::unique_ptr<Params> params;
    int (*run)(const Json&);
  };
  std::vector<Command> commands;
  auto add = [&](const char* name, const char* help, Json defaults, int (*run)(const Json&)) -> Params& {
    CLI::App* sub = app.add_subcommand(name, help);
    commands.push_back({sub, std::make_unique<Params>(sub, std::move(defaults)), run});
    return *commands.back().params;
  };

  {
    Params& p = add("loss-eval", "ALE / RALE (and fusion) on a residual grid, or the loss of a field vs a target",
                    {{"gamma", 2.0}, {"eps", "-2:0.5:2"}, {"fusion_depths", Json::array()}, {"fusion_weight", 1.0},
                     {"c1", ""}, {"c2", ""}, {"sigma", ""}, {"target", ""}, {"out", ""}},
                    cmd_loss_eval);
    p.option<double>("gamma", "asymmetry, >= 1");
    p.option<std::string>("eps", "residual grid start:step:stop");
    p.list("fusion_depths", "d1,d2,d_true; adds fusion columns with eps as the logit");
    p.option<double>("fusion_weight", "weight of the fusion term");
    p.option<std::string>("c1", "foreground depth PGM");
    p.option<std::string>("c2", "background depth PGM");
    p.option<std::string>("sigma", "sigma PGM (x65535)");
    p.option<std::string>("target", "target depth PGM; switches to field mode");
    p.option<std::string>("out", "output file (stdout if empty)");
  }
  {
    Params& p = add("analyze", "predicted minimizers over a (p1, gamma) sweep, optionally with stochastic fits",
                    {{"p1", {0.1, 0.3, 0.5, 0.7, 0.9}},
                     {"gamma", {1.25, 1.5, 2.0, 3.0, 5.0}},
                     {"d1", 10.0},
                     {"d2", 20.0},
                     {"empirical", false},
                     {"iterations", 20000},
                     {"learning_rate", 0.05},
                     {"seed", 7},
                     {"margin", 0.1},
                     {"out", ""}},
                    cmd_analyze);
    p.list("p1", "foreground probabilities");
    p.list("gamma", "gamma values");
    p.option<double>("d1", "foreground depth");
    p.option<double>("d2", "background depth");
    p.flag("empirical", "also run the stochastic pixel fit");
    p.option<int>("iterations", "SGD iterations");
    p.option<double>("learning_rate", "SGD step");
    p.option<std::uint64_t>("seed", "sampling seed");
    p.option<double>("margin", "relative distance to a threshold below which a channel is not judged");
    p.option<std::string>("out", "output CSV (stdout if empty)");
  }
  {
    Params& p = add("synth", "dense ground truth and labels of an analytic scene", scene_defaults({{"prefix", ""}}),
                    cmd_synth);
    scene_options(p);
    p.option<std::string>("prefix", "output prefix");
  }
  {
    Params& p = add("sparsify", "LiDAR-like or regular sparse samples of a scene",
                    scene_defaults({{"rows", 64}, {"offset", 0}, {"stride", 0}, {"phase", 0}, {"out", ""}}),
                    cmd_sparsify);
    scene_options(p);
    p.option<int>("rows", "LiDAR rings kept: 0, 8, 16, 32 or 64");
    p.option<int>("offset", "first kept ring");
    p.option<int>("stride", "regular sampling stride; 0 = LiDAR");
    p.option<int>("phase", "regular sampling phase");
    p.option<std::string>("out", "output PGM");
  }
  {
    Params& p = add("semidense", "semi-dense ground truth accumulated from noisy neighbouring scans",
                    scene_defaults({{"frames", 5},
                                    {"sigma_t", 0.0},
                                    {"sigma_r", 0.0},
                                    {"rows", 64},
                                    {"offset", 0},
                                    {"noise_seed", 0},
                                    {"motion_z", 0.5},
                                    {"out", ""}}),
                    cmd_semidense);
    scene_options(p);
    p.option<int>("frames", "K: accumulate frames -K..K");
    p.option<double>("sigma_t", "registration noise, meters per axis");
    p.option<double>("sigma_r", "registration noise, radians per axis");
    p.option<int>("rows", "LiDAR rings per scan");
    p.option<int>("offset", "first kept ring");
    p.option<std::uint64_t>("noise_seed", "seed of the pose noise");
    p.option<double>("motion_z", "forward motion per frame");
    p.option<std::string>("out", "output PGM");
  }
  {
    Json defaults = twise::fit_config_to_json(twise::FitConfig{}, twise::LossConfig{});
    defaults["fusion_gradient"] = "sigma";
    defaults["staged"] = 0;
    defaults["sparse"] = "";
    defaults["prefix"] = "";
    defaults["ambiguity_scale"] = 256.0;
    Params& p = add("fit", "kernel-regression depth completion from a sparse PGM", defaults, cmd_fit);
    p.option<std::string>("sparse", "sparse depth PGM");
    p.option<std::string>("prefix", "output prefix");
    p.option<std::string>("baseline", "twise|l1|l2|l1+l2|huber");
    p.option<double>("learning_rate", "per-position step size");
    p.option<int>("iterations", "iterations");
    p.option<std::uint64_t>("seed", "seed");
    p.option<double>("bandwidth", "kernel bandwidth in pixels");
    p.option<double>("huber_delta", "Huber threshold");
    p.option<double>("gamma", "asymmetry, >= 1");
    p.list("omega", "full,half,quarter scale weights");
    p.option<double>("fusion_weight", "weight of the fusion term");
    p.option<std::string>("fusion_gradient", "sigma (fusion term only trains sigma) or full");
    p.option<int>("staged", "iterations per stage of the (1,1,1)->(1,.1,.1)->(1,0,0) schedule; 0 = off");
    p.option<double>("ambiguity_scale", "scale of the signed ambiguity PGM");
  }
  const Json eval_defaults = {{"gt", ""}, {"labels", ""}, {"trim", twise::kDefaultTrimThreshold},
                              {"edge_radius", twise::kDefaultEdgeRadius}, {"ignore_missing", false}};
  auto eval_options = [](Params& p) {
    p.option<std::string>("gt", "ground-truth depth PGM");
    p.option<std::string>("labels", "label PGM; adds edge / inside rows");
    p.option<double>("trim", "trim threshold for tMAE / tRMSE, meters");
    p.option<int>("edge_radius", "edge band radius in pixels");
    p.flag("ignore_missing", "evaluate only where every prediction is valid");
  };
  {
    Json defaults = eval_defaults;
    defaults["pred"] = "";
    defaults["out"] = "";
    Params& p = add("metrics", "MAE, RMSE, iMAE, iRMSE, tMAE, tRMSE per region", defaults, cmd_metrics);
    p.option<std::string>("pred", "predicted depth PGM");
    eval_options(p);
    p.option<std::string>("out", "output CSV (stdout if empty)");
  }
  {
    Json defaults = eval_defaults;
    for (const char* k : {"pred_a", "pred_b", "prefix"}) defaults[k] = "";
    defaults["bin_width"] = 0.5;
    defaults["bins"] = 40;
    defaults["abs_scale"] = 256.0;
    defaults["sq_scale"] = 16.0;
    Params& p = add("compare", "metrics, error-difference maps and win/loss histograms of two predictions", defaults,
                    cmd_compare);
    p.option<std::string>("pred_a", "first prediction");
    p.option<std::string>("pred_b", "second prediction; positive differences mean b is better");
    eval_options(p);
    p.option<double>("bin_width", "histogram bin width");
    p.option<int>("bins", "number of histogram bins");
    p.option<double>("abs_scale", "scale of the signed absolute-difference PGM");
    p.option<double>("sq_scale", "scale of the signed squared-difference PGM");
    p.option<std::string>("prefix", "output prefix");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  for (const Command& c : commands) {
    if (!c.app->parsed()) continue;
    Json cfg;
    try {
      cfg = c.params->resolve();
    } catch (const std::exception& e) {
      std::cerr << "twise " << c.app->get_name() << ": " << e.what() << "\n";
      return kUsage;
    }
    try {
      return c.run(cfg);
    } catch (const UsageError& e) {
      std::cerr << "twise " << c.app->get_name() << ": " << e.what() << "\n";
      return kUsage;
    } catch (const Json::exception& e) {
      std::cerr << "twise " << c.app->get_name() << ": bad parameter: " << e.what() << "\n";
      return kUsage;
    } catch (const std::exception& e) {
      std::cerr << "twise " << c.app->get_name() << ": " << e.what() << "\n";
      return kRuntime;
    }
  }
  return kUsage;
}
