#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "twise/fitter.hpp"
#include "twise/losses.hpp"
#include "twise/metrics.hpp"
#include "twise/scenegen.hpp"

namespace twise {

using Json = nlohmann::json;

/// Fit configuration as a single JSON object with the keys learning_rate,
/// iterations, seed, bandwidth, schedule, baseline, huber_delta, gamma,
/// omega, fusion_weight. Missing keys keep the current values; unknown keys
/// throw std::invalid_argument.
Json fit_config_to_json(const FitConfig& fit, const LossConfig& loss);
void fit_config_from_json(const Json& j, FitConfig& fit, LossConfig& loss);

Json scene_spec_to_json(const SceneSpec& spec);
void scene_spec_from_json(const Json& j, SceneSpec& spec);

Json outlier_stats_to_json(const OutlierStats& stats);

/// Metric values in reporting units: mm for depth errors, 1/km for inverse depth.
Json metrics_to_json(const MetricsReport& m);
std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsReport& m);

std::string histogram_csv(const Histogram& h);

/// FNV-1a over the compact JSON dump; stable across runs.
std::uint64_t config_hash(const Json& j);
std::string hex64(std::uint64_t v);

/// Shortest round-trip decimal form, locale independent.
std::string format_double(double v);

}  // namespace twise
