#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "twise/types.hpp"

namespace twise {

/// Pinhole intrinsics plus the stereo baseline used for disparity conversion.
struct CameraIntrinsics {
  double focal = 160.0;    // pixels
  double cx = 160.0;       // pixels
  double cy = 12.0;        // pixels
  double baseline = 2.43125;  // meters; focal * baseline = 389 px*m

  void validate() const;
};

/// Rigid motion, Euler angles applied as Rz * Ry * Rx.
struct Pose {
  Eigen::Vector3d rotation = Eigen::Vector3d::Zero();     // radians
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();  // meters

  Eigen::Isometry3d isometry() const;
};

/// Plane n.P = offset clipped to an axis-aligned box, in reference camera
/// coordinates (x right, y down, z forward).
struct PlanarPatch {
  Eigen::Vector3d normal;
  double offset = 0.0;
  Eigen::AlignedBox3d bounds;
  int label = 0;
};

enum class SceneKind { kStep1d, kFlat1d, kSlope1d, kSlab2d, kPole, kSlope2d, kComposite };

std::string to_string(SceneKind kind);
SceneKind scene_kind_from_string(const std::string& name);

struct SceneSpec {
  SceneKind kind = SceneKind::kSlab2d;
  int width = 320;
  int height = 96;
  CameraIntrinsics camera;
  double d_max = 90.0;
  std::uint64_t seed = 0;
  // Foreground / background depths (step1d, slab2d, pole); flat1d uses near_depth.
  double near_depth = 10.0;
  double far_depth = 30.0;
  // step1d: first background column.
  int edge_col = 50;
  // slope1d: depth(col) = near_depth + slope * col. slope2d: plane z = near_depth - slope * y.
  double slope = 0.1;
  int pole_width_px = 2;
  // composite
  double camera_height = 1.7;
  double wall_depth = 60.0;
  int num_boxes = 3;

  bool is_1d() const;
  void validate() const;
};

struct LidarConfig {
  int rings = 64;
  double elevation_max_deg = 2.0;
  double elevation_min_deg = -24.8;
  double azimuth_fov_deg = 90.0;
  double azimuth_step_deg = 0.2;
};

struct SceneSample {
  SceneSpec spec;
  std::vector<PlanarPatch> primitives;  // empty for 1D profile scenes
  DepthMap dense_gt;
  LabelMap labels;
  DepthImage<int> primitive_ids;  // visible primitive per pixel, -1 where none
  DepthMap sparse;
  std::optional<DepthMap> semidense;
};

/// Analytic scene with exact dense ground truth and instance labels.
SceneSample make_scene(const SceneSpec& spec);

/// Ring indices kept when thinning a 64-ring scan to `rows` rings.
std::vector<int> kept_rings(int rows, int offset, int total_rings = 64);

/// LiDAR-like structured sparse depth seen from the reference pose.
DepthMap lidar_sample(const SceneSample& scene, int rows, int offset,
                      const LidarConfig& lidar = {});

/// Every `stride`-th column (and row, for 2D scenes) starting at `phase`.
DepthMap regular_sample(const SceneSample& scene, int stride, int phase);

struct AccumulationConfig {
  int frames = 5;  // accumulates frames -K..K
  Pose motion{Eigen::Vector3d::Zero(), Eigen::Vector3d(0.0, 0.0, 0.5)};
  double sigma_rot = 0.0;    // radians, per axis
  double sigma_trans = 0.0;  // meters, per axis
  int rows = 64;
  int offset = 0;
  std::uint64_t seed = 0;
  LidarConfig lidar;
};

/// Semi-dense ground truth from 2K+1 scans registered with noisy poses and
/// merged into the reference view with a min-depth z-buffer.
DepthMap accumulate_semidense(const SceneSample& scene, const AccumulationConfig& cfg);

struct OutlierStats {
  double metric_outlier_fraction = 0.0;  // |delta d| > 1 m
  double kitti_outlier_fraction = 0.0;   // disparity error > 3 px and > 5 %
  double coverage_percent = 0.0;
  long compared = 0;
};

OutlierStats outlier_stats(const DepthMap& candidate, const DepthMap& reference,
                           const CameraIntrinsics& intr);

enum class Conversion { kDisparityToDepth, kDepthToDisparity };

/// d = f * b / disparity and its inverse. Throws std::domain_error on value <= 0.
double disparity_depth_convert(double value, const CameraIntrinsics& intr, Conversion direction);

/// Valid-aware mean pooling; a coarse pixel is valid iff any fine pixel is.
DepthMap downsample(const DepthMap& depth, int factor);

}  // namespace twise
