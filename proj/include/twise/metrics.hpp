#pragma once

#include <span>
#include <string>
#include <vector>

#include "twise/types.hpp"

namespace twise {

enum class Region { kWhole, kEdge, kInside };

std::string to_string(Region region);

/// Depth metrics over valid ground-truth pixels. Depth errors are in meters;
/// imae / irmse are in 1/km.
struct MetricsReport {
  double mae = 0.0;
  double rmse = 0.0;
  double imae = 0.0;
  double irmse = 0.0;
  double tmae = 0.0;
  double trmse = 0.0;
  long valid_count = 0;
  Region region = Region::kWhole;
};

constexpr double kDefaultTrimThreshold = 2.0;  // meters

/// All metrics over gt-valid pixels, optionally restricted to `region`.
/// Throws std::invalid_argument on shape mismatch or an empty evaluation set,
/// and std::domain_error if pred is not positive wherever gt is valid.
MetricsReport standard_metrics(const DepthMap& pred, const DepthMap& gt,
                               double trim_threshold = kDefaultTrimThreshold,
                               const Mask* region = nullptr, Region label = Region::kWhole);

struct TrimmedMetrics {
  double tmae = 0.0;
  double trmse = 0.0;
  long valid_count = 0;
};

/// Trimmed metrics only. Pixels with missing predictions count as an error of
/// exactly the trim threshold.
TrimmedMetrics trimmed_metrics(const DepthMap& pred, const DepthMap& gt, double trim_threshold,
                               const Mask* region = nullptr);

/// Absolute and squared error differences, |a - gt| - |b - gt| and
/// (a - gt)^2 - (b - gt)^2. Positive values mean pred_b is better.
struct ErrorDiffMap {
  DepthMap abs_diff;
  DepthMap sq_diff;
  Mask valid;
};

ErrorDiffMap error_diff(const DepthMap& pred_a, const DepthMap& pred_b, const DepthMap& gt);

struct BinSpec {
  double bin_width = 0.5;
  int num_bins = 40;
};

struct Histogram {
  std::vector<double> edges;  // num_bins + 1
  std::vector<long> counts;
};

/// Histograms of |A| (or |S|) split into pixels where pred_b wins (A > 0) and
/// where pred_a wins (A < 0). Magnitudes beyond the last edge go to the last bin.
struct DiffHistograms {
  Histogram abs_wins;
  Histogram abs_losses;
  Histogram sq_wins;
  Histogram sq_losses;
  long win_pixels = 0;   // A > 0
  long loss_pixels = 0;  // A < 0
  long images = 0;
  double wins_per_image = 0.0;
  double losses_per_image = 0.0;
};

DiffHistograms diff_histograms(std::span<const ErrorDiffMap> maps, const BinSpec& bins);
DiffHistograms diff_histograms(const ErrorDiffMap& map, const BinSpec& bins);

struct RegionMasks {
  Mask edge;
  Mask inside;
};

constexpr int kDefaultEdgeRadius = 3;

/// Edge pixels lie less than edge_radius pixels from a label boundary, where a
/// pixel touching a different label (8-neighbourhood) is at distance 0; i.e.
/// Chebyshev distance <= edge_radius to a differing label. Inside pixels are
/// the remaining valid pixels. With no
/// `valid` mask every pixel is treated as valid.
RegionMasks region_masks(const LabelMap& labels, int edge_radius = kDefaultEdgeRadius,
                         const Mask* valid = nullptr);

}  // namespace twise
