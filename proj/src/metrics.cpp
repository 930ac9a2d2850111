#include "twise/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace twise {

std::string to_string(Region region) {
  switch (region) {
    case Region::kWhole: return "whole";
    case Region::kEdge: return "edge";
    case Region::kInside: return "inside";
  }
  return "unknown";
}

namespace {

bool selected(const DepthMap& gt, const Mask* region, Eigen::Index i) {
  return gt.data()[i] > 0.0 && (region == nullptr || region->data()[i]);
}

}  // namespace

MetricsReport standard_metrics(const DepthMap& pred, const DepthMap& gt, double trim_threshold,
                               const Mask* region, Region label) {
  require_same_shape(pred, gt, "standard_metrics");
  if (region != nullptr) require_same_shape(*region, gt, "standard_metrics region");
  if (!(trim_threshold > 0.0)) throw std::invalid_argument("standard_metrics: trim threshold must be > 0");

  std::vector<double> abs_err, sq_err, inv_abs, inv_sq, t_abs, t_sq;
  const double t2 = trim_threshold * trim_threshold;
  for (Eigen::Index i = 0; i < gt.size(); ++i) {
    if (!selected(gt, region, i)) continue;
    const double p = pred.data()[i];
    const double g = gt.data()[i];
    if (!(p > 0.0)) throw std::domain_error("standard_metrics: prediction must be positive where gt is valid");
    const double e = p - g;
    const double ie = 1000.0 / p - 1000.0 / g;
    abs_err.push_back(std::abs(e));
    sq_err.push_back(e * e);
    inv_abs.push_back(std::abs(ie));
    inv_sq.push_back(ie * ie);
    t_abs.push_back(std::min(std::abs(e), trim_threshold));
    t_sq.push_back(std::min(e * e, t2));
  }
  if (abs_err.empty()) throw std::invalid_argument("standard_metrics: no valid pixels");
  const double n = static_cast<double>(abs_err.size());
  MetricsReport m;
  m.mae = pairwise_sum(abs_err) / n;
  m.rmse = std::sqrt(pairwise_sum(sq_err) / n);
  m.imae = pairwise_sum(inv_abs) / n;
  m.irmse = std::sqrt(pairwise_sum(inv_sq) / n);
  m.tmae = pairwise_sum(t_abs) / n;
  m.trmse = std::sqrt(pairwise_sum(t_sq) / n);
  m.valid_count = static_cast<long>(abs_err.size());
  m.region = label;
  return m;
}

TrimmedMetrics trimmed_metrics(const DepthMap& pred, const DepthMap& gt, double trim_threshold,
                               const Mask* region) {
  require_same_shape(pred, gt, "trimmed_metrics");
  if (!(trim_threshold > 0.0)) throw std::invalid_argument("trimmed_metrics: trim threshold must be > 0");
  std::vector<double> t_abs, t_sq;
  for (Eigen::Index i = 0; i < gt.size(); ++i) {
    if (!selected(gt, region, i)) continue;
    const double p = pred.data()[i];
    const double e = p > 0.0 ? std::min(std::abs(p - gt.data()[i]), trim_threshold) : trim_threshold;
    t_abs.push_back(e);
    t_sq.push_back(e * e);
  }
  if (t_abs.empty()) throw std::invalid_argument("trimmed_metrics: no valid pixels");
  const double n = static_cast<double>(t_abs.size());
  return {pairwise_sum(t_abs) / n, std::sqrt(pairwise_sum(t_sq) / n), static_cast<long>(t_abs.size())};
}

ErrorDiffMap error_diff(const DepthMap& pred_a, const DepthMap& pred_b, const DepthMap& gt) {
  require_same_shape(pred_a, gt, "error_diff");
  require_same_shape(pred_b, gt, "error_diff");
  ErrorDiffMap out{DepthMap::Zero(gt.rows(), gt.cols()), DepthMap::Zero(gt.rows(), gt.cols()),
                   valid_mask(gt)};
  for (Eigen::Index i = 0; i < gt.size(); ++i) {
    if (!out.valid.data()[i]) continue;
    const double ea = pred_a.data()[i] - gt.data()[i];
    const double eb = pred_b.data()[i] - gt.data()[i];
    out.abs_diff.data()[i] = std::abs(ea) - std::abs(eb);
    out.sq_diff.data()[i] = ea * ea - eb * eb;
  }
  return out;
}

namespace {

Histogram empty_histogram(const BinSpec& bins) {
  Histogram h;
  h.counts.assign(static_cast<std::size_t>(bins.num_bins), 0);
  h.edges.resize(static_cast<std::size_t>(bins.num_bins) + 1);
  for (int b = 0; b <= bins.num_bins; ++b) h.edges[static_cast<std::size_t>(b)] = b * bins.bin_width;
  return h;
}

void add(Histogram& h, const BinSpec& bins, double magnitude) {
  auto bin = static_cast<long>(std::floor(magnitude / bins.bin_width));
  bin = std::clamp<long>(bin, 0, bins.num_bins - 1);
  ++h.counts[static_cast<std::size_t>(bin)];
}

}  // namespace

DiffHistograms diff_histograms(std::span<const ErrorDiffMap> maps, const BinSpec& bins) {
  if (!(bins.bin_width > 0.0) || bins.num_bins <= 0) throw std::invalid_argument("diff_histograms: bad bin spec");
  if (maps.empty()) throw std::invalid_argument("diff_histograms: no maps");
  DiffHistograms out{empty_histogram(bins), empty_histogram(bins), empty_histogram(bins),
                     empty_histogram(bins)};
  long valid = 0;
  for (const ErrorDiffMap& m : maps) {
    for (Eigen::Index i = 0; i < m.valid.size(); ++i) {
      if (!m.valid.data()[i]) continue;
      ++valid;
      const double a = m.abs_diff.data()[i];
      const double s = m.sq_diff.data()[i];
      if (a > 0.0) {
        ++out.win_pixels;
        add(out.abs_wins, bins, a);
      } else if (a < 0.0) {
        ++out.loss_pixels;
        add(out.abs_losses, bins, -a);
      }
      if (s > 0.0) {
        add(out.sq_wins, bins, s);
      } else if (s < 0.0) {
        add(out.sq_losses, bins, -s);
      }
    }
  }
  if (valid == 0) throw std::invalid_argument("diff_histograms: maps have no valid pixels");
  out.images = static_cast<long>(maps.size());
  out.wins_per_image = static_cast<double>(out.win_pixels) / out.images;
  out.losses_per_image = static_cast<double>(out.loss_pixels) / out.images;
  return out;
}

DiffHistograms diff_histograms(const ErrorDiffMap& map, const BinSpec& bins) {
  return diff_histograms(std::span<const ErrorDiffMap>(&map, 1), bins);
}

RegionMasks region_masks(const LabelMap& labels, int edge_radius, const Mask* valid) {
  if (edge_radius < 0) throw std::invalid_argument("region_masks: edge radius must be >= 0");
  if (valid != nullptr) require_same_shape(*valid, labels, "region_masks");
  const Eigen::Index rows = labels.rows();
  const Eigen::Index cols = labels.cols();
  RegionMasks out{Mask::Constant(rows, cols, false), Mask::Constant(rows, cols, false)};
  // Boundary pixels (a differing neighbour) sit at distance 0 from the boundary.
  const Eigen::Index reach = edge_radius;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (valid != nullptr && !(*valid)(r, c)) continue;
      bool edge = false;
      if (edge_radius > 0) {
        for (Eigen::Index rr = std::max<Eigen::Index>(0, r - reach); !edge && rr <= std::min(rows - 1, r + reach); ++rr) {
          for (Eigen::Index cc = std::max<Eigen::Index>(0, c - reach); cc <= std::min(cols - 1, c + reach); ++cc) {
            if (labels(rr, cc) != labels(r, c)) {
              edge = true;
              break;
            }
          }
        }
      }
      (edge ? out.edge : out.inside)(r, c) = true;
    }
  }
  return out;
}

}  // namespace twise
