#include "twise/config.hpp"

#include <charconv>
#include <cmath>
#include <set>
#include <stdexcept>

namespace twise {

namespace {

void reject_unknown(const Json& j, const std::set<std::string>& allowed, const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + ": expected a JSON object");
  for (const auto& item : j.items()) {
    if (allowed.count(item.key()) == 0) {
      throw std::invalid_argument(std::string(what) + ": unknown key '" + item.key() + "'");
    }
  }
}

template <typename T>
void read_if(const Json& j, const char* key, T& value) {
  if (j.contains(key)) value = j.at(key).get<T>();
}

Json omega_json(const std::array<double, 3>& w) { return Json::array({w[0], w[1], w[2]}); }

std::array<double, 3> omega_from(const Json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("omega must be an array of 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

Json fit_config_to_json(const FitConfig& fit, const LossConfig& loss) {
  Json schedule = Json::array();
  for (const ScheduleStage& st : fit.schedule) {
    schedule.push_back({{"begin", st.begin}, {"end", st.end}, {"omega", omega_json(st.omega)}});
  }
  return {{"learning_rate", fit.learning_rate},
          {"iterations", fit.iterations},
          {"seed", fit.seed},
          {"bandwidth", fit.bandwidth},
          {"schedule", schedule},
          {"baseline", to_string(fit.baseline)},
          {"huber_delta", fit.huber_delta},
          {"gamma", loss.gamma},
          {"omega", omega_json(loss.omega)},
          {"fusion_weight", loss.fusion_weight}};
}

void fit_config_from_json(const Json& j, FitConfig& fit, LossConfig& loss) {
  reject_unknown(j,
                 {"learning_rate", "iterations", "seed", "bandwidth", "schedule", "baseline", "huber_delta",
                  "gamma", "omega", "fusion_weight"},
                 "fit config");
  read_if(j, "learning_rate", fit.learning_rate);
  read_if(j, "iterations", fit.iterations);
  read_if(j, "seed", fit.seed);
  read_if(j, "bandwidth", fit.bandwidth);
  read_if(j, "huber_delta", fit.huber_delta);
  read_if(j, "gamma", loss.gamma);
  read_if(j, "fusion_weight", loss.fusion_weight);
  if (j.contains("baseline")) fit.baseline = baseline_from_string(j.at("baseline").get<std::string>());
  if (j.contains("omega")) loss.omega = omega_from(j.at("omega"));
  if (j.contains("schedule")) {
    fit.schedule.clear();
    for (const Json& st : j.at("schedule")) {
      reject_unknown(st, {"begin", "end", "omega"}, "schedule stage");
      fit.schedule.push_back({st.at("begin").get<int>(), st.at("end").get<int>(), omega_from(st.at("omega"))});
    }
  }
}

Json scene_spec_to_json(const SceneSpec& s) {
  return {{"kind", to_string(s.kind)},
          {"width", s.width},
          {"height", s.height},
          {"focal", s.camera.focal},
          {"cx", s.camera.cx},
          {"cy", s.camera.cy},
          {"baseline", s.camera.baseline},
          {"d_max", s.d_max},
          {"seed", s.seed},
          {"near_depth", s.near_depth},
          {"far_depth", s.far_depth},
          {"edge_col", s.edge_col},
          {"slope", s.slope},
          {"pole_width_px", s.pole_width_px},
          {"camera_height", s.camera_height},
          {"wall_depth", s.wall_depth},
          {"num_boxes", s.num_boxes}};
}

void scene_spec_from_json(const Json& j, SceneSpec& s) {
  reject_unknown(j,
                 {"kind", "width", "height", "focal", "cx", "cy", "baseline", "d_max", "seed", "near_depth",
                  "far_depth", "edge_col", "slope", "pole_width_px", "camera_height", "wall_depth", "num_boxes"},
                 "scene spec");
  if (j.contains("kind")) s.kind = scene_kind_from_string(j.at("kind").get<std::string>());
  read_if(j, "width", s.width);
  read_if(j, "height", s.height);
  read_if(j, "focal", s.camera.focal);
  read_if(j, "cx", s.camera.cx);
  read_if(j, "cy", s.camera.cy);
  read_if(j, "baseline", s.camera.baseline);
  read_if(j, "d_max", s.d_max);
  read_if(j, "seed", s.seed);
  read_if(j, "near_depth", s.near_depth);
  read_if(j, "far_depth", s.far_depth);
  read_if(j, "edge_col", s.edge_col);
  read_if(j, "slope", s.slope);
  read_if(j, "pole_width_px", s.pole_width_px);
  read_if(j, "camera_height", s.camera_height);
  read_if(j, "wall_depth", s.wall_depth);
  read_if(j, "num_boxes", s.num_boxes);
}

Json outlier_stats_to_json(const OutlierStats& st) {
  return {{"metric_outlier_fraction", st.metric_outlier_fraction},
          {"kitti_outlier_fraction", st.kitti_outlier_fraction},
          {"coverage_percent", st.coverage_percent},
          {"compared", st.compared}};
}

Json metrics_to_json(const MetricsReport& m) {
  return {{"region", to_string(m.region)},
          {"valid_count", m.valid_count},
          {"mae_mm", 1000.0 * m.mae},
          {"rmse_mm", 1000.0 * m.rmse},
          {"imae_1_per_km", m.imae},
          {"irmse_1_per_km", m.irmse},
          {"tmae_mm", 1000.0 * m.tmae},
          {"trmse_mm", 1000.0 * m.trmse}};
}

std::string metrics_csv_header() { return "region,valid_count,mae_mm,rmse_mm,imae_1_per_km,irmse_1_per_km,tmae_mm,trmse_mm"; }

std::string metrics_csv_row(const MetricsReport& m) {
  return to_string(m.region) + ',' + std::to_string(m.valid_count) + ',' + format_double(1000.0 * m.mae) + ',' +
         format_double(1000.0 * m.rmse) + ',' + format_double(m.imae) + ',' + format_double(m.irmse) + ',' +
         format_double(1000.0 * m.tmae) + ',' + format_double(1000.0 * m.trmse);
}

std::string histogram_csv(const Histogram& h) {
  std::string out = "bin_left,bin_right,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    out += format_double(h.edges[b]) + ',' + format_double(h.edges[b + 1]) + ',' + std::to_string(h.counts[b]) + '\n';
  }
  return out;
}

std::uint64_t config_hash(const Json& j) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace twise
