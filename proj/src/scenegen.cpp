#include "twise/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace twise {

namespace {

constexpr double kDegToRad = M_PI / 180.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::AlignedBox3d unbounded() {
  return Eigen::AlignedBox3d(Eigen::Vector3d::Constant(-kInf), Eigen::Vector3d::Constant(kInf));
}

/// Fronto-parallel rectangle at depth z spanning pixel columns [u0, u1) and
/// rows [v0, v1) of the reference camera. Edges sit on half-pixel lines so
/// pixel centres never straddle them.
PlanarPatch fronto_rect(const CameraIntrinsics& cam, double z, double u0, double u1, double v0,
                        double v1, int label) {
  PlanarPatch p;
  p.normal = Eigen::Vector3d::UnitZ();
  p.offset = z;
  const double x0 = (u0 - 0.5 - cam.cx) / cam.focal * z;
  const double x1 = (u1 - 0.5 - cam.cx) / cam.focal * z;
  const double y0 = (v0 - 0.5 - cam.cy) / cam.focal * z;
  const double y1 = (v1 - 0.5 - cam.cy) / cam.focal * z;
  p.bounds = Eigen::AlignedBox3d(Eigen::Vector3d(x0, y0, -kInf), Eigen::Vector3d(x1, y1, kInf));
  p.label = label;
  return p;
}

PlanarPatch plane(const Eigen::Vector3d& normal, double offset, int label) {
  return PlanarPatch{normal, offset, unbounded(), label};
}

struct Hit {
  double t = kInf;
  int primitive = -1;
};

/// Ray parameter at which the ray meets the (unbounded) plane of `p`.
double plane_parameter(const PlanarPatch& p, const Eigen::Vector3d& origin,
                       const Eigen::Vector3d& dir) {
  const double denom = p.normal.dot(dir);
  if (denom == 0.0) return kInf;
  return (p.offset - p.normal.dot(origin)) / denom;
}

Hit cast_ray(const std::vector<PlanarPatch>& prims, const Eigen::Vector3d& origin,
             const Eigen::Vector3d& dir) {
  Hit best;
  for (std::size_t i = 0; i < prims.size(); ++i) {
    const double t = plane_parameter(prims[i], origin, dir);
    if (!(t > 0.0) || !(t < best.t)) continue;
    const Eigen::Vector3d point = origin + t * dir;
    if (!prims[i].bounds.contains(point)) continue;
    best = {t, static_cast<int>(i)};
  }
  return best;
}

Eigen::Vector3d pixel_ray(const CameraIntrinsics& cam, double u, double v) {
  return Eigen::Vector3d((u - cam.cx) / cam.focal, (v - cam.cy) / cam.focal, 1.0);
}

void render_profile(SceneSample& s) {
  const SceneSpec& spec = s.spec;
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      double d = spec.near_depth;
      int label = 0;
      switch (spec.kind) {
        case SceneKind::kStep1d:
          if (c < spec.edge_col) {
            label = 1;
          } else {
            d = spec.far_depth;
          }
          break;
        case SceneKind::kSlope1d:
          d = spec.near_depth + spec.slope * c;
          break;
        default:
          break;
      }
      if (d > 0.0 && d <= spec.d_max) s.dense_gt(r, c) = d;
      s.labels(r, c) = label;
    }
  }
}

std::vector<PlanarPatch> build_primitives(const SceneSpec& spec) {
  const CameraIntrinsics& cam = spec.camera;
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&rng](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  std::vector<PlanarPatch> prims;
  const double w = spec.width;
  const double h = spec.height;
  switch (spec.kind) {
    case SceneKind::kSlab2d: {
      const double rw = std::round(uniform(0.25, 0.45) * w);
      const double rh = std::round(uniform(0.3, 0.6) * h);
      const double u0 = std::round(uniform(0.0, w - rw));
      const double v0 = std::round(uniform(0.0, h - rh));
      prims.push_back(fronto_rect(cam, spec.near_depth, u0, u0 + rw, v0, v0 + rh, 1));
      prims.push_back(plane(Eigen::Vector3d::UnitZ(), spec.far_depth, 0));
      break;
    }
    case SceneKind::kPole: {
      const double u0 = std::round(uniform(0.3, 0.7) * w);
      PlanarPatch p = fronto_rect(cam, spec.near_depth, u0, u0 + spec.pole_width_px, 0, h, 1);
      p.bounds.min().y() = -kInf;
      p.bounds.max().y() = kInf;
      prims.push_back(p);
      prims.push_back(plane(Eigen::Vector3d::UnitZ(), spec.far_depth, 0));
      break;
    }
    case SceneKind::kSlope2d:
      // z - slope * y = near_depth: depth changes smoothly with image row.
      prims.push_back(plane(Eigen::Vector3d(0.0, spec.slope, 1.0), spec.near_depth, 0));
      break;
    case SceneKind::kComposite: {
      PlanarPatch ground = plane(Eigen::Vector3d::UnitY(), spec.camera_height, 0);
      ground.bounds.max().z() = spec.wall_depth;
      prims.push_back(ground);
      prims.push_back(plane(Eigen::Vector3d::UnitZ(), spec.wall_depth, 0));
      for (int b = 0; b < spec.num_boxes; ++b) {
        const double z = uniform(8.0, 30.0);
        const double x_max = 0.8 * (0.5 * spec.width / cam.focal) * z;
        const double xc = uniform(-x_max, x_max);
        const double half_w = 0.5 * uniform(1.5, 3.0);
        const double height = uniform(1.2, 2.5);
        PlanarPatch box;
        box.normal = Eigen::Vector3d::UnitZ();
        box.offset = z;
        box.bounds = Eigen::AlignedBox3d(Eigen::Vector3d(xc - half_w, spec.camera_height - height, -kInf),
                                         Eigen::Vector3d(xc + half_w, spec.camera_height, kInf));
        box.label = b + 1;
        prims.push_back(box);
      }
      break;
    }
    default:
      break;
  }
  return prims;
}

void render_primitives(SceneSample& s) {
  const SceneSpec& spec = s.spec;
  const Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  for (int r = 0; r < spec.height; ++r) {
    for (int c = 0; c < spec.width; ++c) {
      const Hit hit = cast_ray(s.primitives, origin, pixel_ray(spec.camera, c, r));
      if (hit.primitive < 0) continue;
      // Ray z-component is 1, so t is the z-depth.
      if (hit.t > spec.d_max) continue;
      s.dense_gt(r, c) = hit.t;
      s.labels(r, c) = s.primitives[hit.primitive].label;
      s.primitive_ids(r, c) = hit.primitive;
    }
  }
}

bool to_pixel(const CameraIntrinsics& cam, const Eigen::Vector3d& p, int width, int height, int& col,
              int& row) {
  if (!(p.z() > 1e-9)) return false;
  const double u = cam.focal * p.x() / p.z() + cam.cx;
  const double v = cam.focal * p.y() / p.z() + cam.cy;
  col = static_cast<int>(std::floor(u + 0.5));
  row = static_cast<int>(std::floor(v + 0.5));
  return col >= 0 && col < width && row >= 0 && row < height;
}

/// Scans the scene from `sensor_pose` and renders every return into the
/// reference view. Each return is treated as a small patch of the plane it
/// hit; `estimate_error` is the registration error applied to that patch. A
/// return is kept only if, under exact registration, its pixel sees the same
/// primitive, so with zero error the output equals the dense ground truth.
void scan_into(const SceneSample& scene, const Eigen::Isometry3d& sensor_pose,
               const Eigen::Isometry3d& estimate_error, const std::vector<int>& rings,
               const LidarConfig& lidar, DepthMap& out) {
  const SceneSpec& spec = scene.spec;
  const CameraIntrinsics& cam = spec.camera;
  const Eigen::Matrix3d& rot_err = estimate_error.linear();
  const Eigen::Vector3d trans_err = estimate_error.translation();
  const int n_az = static_cast<int>(std::floor(lidar.azimuth_fov_deg / lidar.azimuth_step_deg + 1e-9)) + 1;
  const double elev_step = (lidar.elevation_max_deg - lidar.elevation_min_deg) / (lidar.rings - 1);
  for (int ring : rings) {
    const double elev = (lidar.elevation_max_deg - ring * elev_step) * kDegToRad;
    for (int a = 0; a < n_az; ++a) {
      const double az = (-0.5 * lidar.azimuth_fov_deg + a * lidar.azimuth_step_deg) * kDegToRad;
      const Eigen::Vector3d dir_sensor(std::cos(elev) * std::sin(az), -std::sin(elev),
                                       std::cos(elev) * std::cos(az));
      const Eigen::Vector3d origin = sensor_pose.translation();
      const Eigen::Vector3d dir = sensor_pose.linear() * dir_sensor;
      const Hit hit = cast_ray(scene.primitives, origin, dir);
      if (hit.primitive < 0) continue;
      const Eigen::Vector3d point = origin + hit.t * dir;

      int col = 0;
      int row = 0;
      if (!to_pixel(cam, point, spec.width, spec.height, col, row)) continue;
      if (scene.primitive_ids(row, col) != hit.primitive) continue;

      const Eigen::Vector3d estimated = rot_err * point + trans_err;
      if (!to_pixel(cam, estimated, spec.width, spec.height, col, row)) continue;
      if (!(scene.dense_gt(row, col) > 0.0)) continue;
      const PlanarPatch& prim = scene.primitives[hit.primitive];
      const Eigen::Vector3d normal = rot_err * prim.normal;
      const double offset = prim.offset + normal.dot(trans_err);
      const Eigen::Vector3d ray = pixel_ray(cam, col, row);
      const double denom = normal.dot(ray);
      if (denom == 0.0) continue;
      const double depth = (offset - normal.dot(Eigen::Vector3d::Zero())) / denom;
      if (!(depth > 0.0) || depth > spec.d_max) continue;
      double& cell = out(row, col);
      if (cell <= 0.0 || depth < cell) cell = depth;
    }
  }
}

void require_geometry(const SceneSample& scene, const char* what) {
  if (scene.primitives.empty()) {
    throw std::invalid_argument(std::string(what) + ": scene has no 3D geometry (1D profile scene)");
  }
}

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(focal > 0.0)) throw std::invalid_argument("CameraIntrinsics: focal must be > 0");
  if (!(baseline > 0.0)) throw std::invalid_argument("CameraIntrinsics: baseline must be > 0");
}

Eigen::Isometry3d Pose::isometry() const {
  if (!rotation.allFinite() || !translation.allFinite()) throw std::invalid_argument("Pose: non-finite");
  Eigen::Isometry3d iso = Eigen::Isometry3d::Identity();
  iso.linear() = (Eigen::AngleAxisd(rotation.z(), Eigen::Vector3d::UnitZ()) *
                  Eigen::AngleAxisd(rotation.y(), Eigen::Vector3d::UnitY()) *
                  Eigen::AngleAxisd(rotation.x(), Eigen::Vector3d::UnitX()))
                     .toRotationMatrix();
  iso.translation() = translation;
  return iso;
}

std::string to_string(SceneKind kind) {
  switch (kind) {
    case SceneKind::kStep1d: return "step1d";
    case SceneKind::kFlat1d: return "flat1d";
    case SceneKind::kSlope1d: return "slope1d";
    case SceneKind::kSlab2d: return "slab2d";
    case SceneKind::kPole: return "pole";
    case SceneKind::kSlope2d: return "slope2d";
    case SceneKind::kComposite: return "composite";
  }
  return "unknown";
}

SceneKind scene_kind_from_string(const std::string& name) {
  for (SceneKind k : {SceneKind::kStep1d, SceneKind::kFlat1d, SceneKind::kSlope1d, SceneKind::kSlab2d,
                      SceneKind::kPole, SceneKind::kSlope2d, SceneKind::kComposite}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown scene kind: " + name);
}

bool SceneSpec::is_1d() const {
  return kind == SceneKind::kStep1d || kind == SceneKind::kFlat1d || kind == SceneKind::kSlope1d;
}

void SceneSpec::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("SceneSpec: width and height must be positive");
  if (!(d_max > 0.0)) throw std::invalid_argument("SceneSpec: d_max must be positive");
  if (!(near_depth > 0.0) || !(far_depth > 0.0)) throw std::invalid_argument("SceneSpec: depths must be positive");
  if (kind == SceneKind::kPole && (pole_width_px <= 0 || pole_width_px >= width)) {
    throw std::invalid_argument("SceneSpec: pole width out of range");
  }
  if (kind == SceneKind::kComposite && (num_boxes < 0 || !(camera_height > 0.0) || !(wall_depth > 0.0))) {
    throw std::invalid_argument("SceneSpec: invalid composite parameters");
  }
  if (!is_1d()) camera.validate();
}

SceneSample make_scene(const SceneSpec& spec) {
  spec.validate();
  SceneSample s;
  s.spec = spec;
  s.dense_gt = DepthMap::Zero(spec.height, spec.width);
  s.labels = LabelMap::Zero(spec.height, spec.width);
  s.primitive_ids = DepthImage<int>::Constant(spec.height, spec.width, -1);
  s.sparse = DepthMap::Zero(spec.height, spec.width);
  if (spec.is_1d()) {
    render_profile(s);
  } else {
    s.primitives = build_primitives(spec);
    render_primitives(s);
  }
  return s;
}

std::vector<int> kept_rings(int rows, int offset, int total_rings) {
  if (rows == 0) return {};
  if (rows < 0 || total_rings % rows != 0 || (rows != 8 && rows != 16 && rows != 32 && rows != 64)) {
    throw std::invalid_argument("kept_rings: rows must be one of 0, 8, 16, 32, 64");
  }
  const int step = total_rings / rows;
  std::vector<int> out;
  for (int i = 0; i < total_rings; ++i) {
    if (((i - offset) % step + step) % step == 0) out.push_back(i);
  }
  return out;
}

DepthMap lidar_sample(const SceneSample& scene, int rows, int offset, const LidarConfig& lidar) {
  const std::vector<int> rings = kept_rings(rows, offset, lidar.rings);
  DepthMap out = DepthMap::Zero(scene.spec.height, scene.spec.width);
  if (rings.empty()) return out;
  require_geometry(scene, "lidar_sample");
  scan_into(scene, Eigen::Isometry3d::Identity(), Eigen::Isometry3d::Identity(), rings, lidar, out);
  return out;
}

DepthMap regular_sample(const SceneSample& scene, int stride, int phase) {
  if (stride <= 0) throw std::invalid_argument("regular_sample: stride must be positive");
  const bool one_d = scene.spec.is_1d();
  DepthMap out = DepthMap::Zero(scene.dense_gt.rows(), scene.dense_gt.cols());
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    if (!one_d && ((r - phase) % stride + stride) % stride != 0) continue;
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      if (((c - phase) % stride + stride) % stride != 0) continue;
      if (scene.dense_gt(r, c) > 0.0) out(r, c) = scene.dense_gt(r, c);
    }
  }
  return out;
}

DepthMap accumulate_semidense(const SceneSample& scene, const AccumulationConfig& cfg) {
  if (cfg.frames < 0) throw std::invalid_argument("accumulate_semidense: frames must be >= 0");
  if (!(cfg.sigma_rot >= 0.0) || !(cfg.sigma_trans >= 0.0)) {
    throw std::invalid_argument("accumulate_semidense: noise must be >= 0");
  }
  require_geometry(scene, "accumulate_semidense");
  const std::vector<int> rings = kept_rings(cfg.rows, cfg.offset, cfg.lidar.rings);
  DepthMap out = DepthMap::Zero(scene.spec.height, scene.spec.width);
  if (rings.empty()) return out;

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  const Eigen::Isometry3d step = cfg.motion.isometry();
  const Eigen::Isometry3d step_inv = step.inverse();

  for (int k = -cfg.frames; k <= cfg.frames; ++k) {
    Eigen::Isometry3d pose = Eigen::Isometry3d::Identity();
    for (int i = 0; i < std::abs(k); ++i) pose = pose * (k > 0 ? step : step_inv);
    Eigen::Isometry3d error = Eigen::Isometry3d::Identity();
    if (k != 0) {
      Pose noise;
      for (int a = 0; a < 3; ++a) noise.rotation[a] = cfg.sigma_rot * unit(rng);
      for (int a = 0; a < 3; ++a) noise.translation[a] = cfg.sigma_trans * unit(rng);
      error = noise.isometry();
    }
    scan_into(scene, pose, error, rings, cfg.lidar, out);
  }
  return out;
}

OutlierStats outlier_stats(const DepthMap& candidate, const DepthMap& reference,
                           const CameraIntrinsics& intr) {
  require_same_shape(candidate, reference, "outlier_stats");
  intr.validate();
  const double fb = intr.focal * intr.baseline;
  OutlierStats st;
  long metric = 0;
  long kitti = 0;
  for (Eigen::Index i = 0; i < candidate.size(); ++i) {
    const double cand = candidate.data()[i];
    if (!(cand > 0.0)) continue;
    const double ref = reference.data()[i];
    if (!(ref > 0.0)) throw std::domain_error("outlier_stats: reference depth must be positive where compared");
    ++st.compared;
    if (std::abs(cand - ref) > 1.0) ++metric;
    const double disp_ref = fb / ref;
    const double disp_err = std::abs(disp_ref - fb / cand);
    if (disp_err > 3.0 && disp_err / disp_ref > 0.05) ++kitti;
  }
  if (st.compared > 0) {
    st.metric_outlier_fraction = static_cast<double>(metric) / st.compared;
    st.kitti_outlier_fraction = static_cast<double>(kitti) / st.compared;
  }
  st.coverage_percent = candidate.size() > 0 ? 100.0 * st.compared / candidate.size() : 0.0;
  return st;
}

double disparity_depth_convert(double value, const CameraIntrinsics& intr, Conversion) {
  if (!(value > 0.0) || !std::isfinite(value)) throw std::domain_error("disparity_depth_convert: value must be > 0");
  intr.validate();
  // The mapping x -> f*b/x is its own inverse, so both directions share it.
  return intr.focal * intr.baseline / value;
}

DepthMap downsample(const DepthMap& depth, int factor) {
  if (factor != 2 && factor != 4) throw std::invalid_argument("downsample: factor must be 2 or 4");
  const Eigen::Index rows = (depth.rows() + factor - 1) / factor;
  const Eigen::Index cols = (depth.cols() + factor - 1) / factor;
  DepthMap out = DepthMap::Zero(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      double sum = 0.0;
      int n = 0;
      for (Eigen::Index fr = r * factor; fr < std::min(depth.rows(), (r + 1) * factor); ++fr) {
        for (Eigen::Index fc = c * factor; fc < std::min(depth.cols(), (c + 1) * factor); ++fc) {
          if (depth(fr, fc) > 0.0) {
            sum += depth(fr, fc);
            ++n;
          }
        }
      }
      if (n > 0) out(r, c) = sum / n;
    }
  }
  return out;
}

}  // namespace twise
