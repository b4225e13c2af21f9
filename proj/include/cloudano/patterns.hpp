#pragma once

// Canonical pattern classification (spike, dip, gradual rise/fall,
// fluctuation) over one metric window.
//
// Every predicate is expressed relative to the window mean, which is fixed
// by reflection about the mean and scales with the samples, so
// classification is invariant to positive rescaling and reflection maps
// spike <-> dip and gradual_increase <-> gradual_decrease.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>

#include "cloudano/core.hpp"
#include "cloudano/features.hpp"

namespace cloudano {

struct PatternConfig {
  double spike_ratio = 2.0;         // peak reaches baseline + (ratio-1) window means
  double dip_ratio = 0.5;           // trough falls (1/ratio-1) window means below baseline
  double trend_slope_min = 0.3;     // |slope * (n-1)| / window mean
  double fluctuation_cv_min = 0.25;
  double baseline_fraction = 0.3;   // leading share of the window used as baseline
  double epsilon = 1e-9;            // floor for the window mean
  double jump_fraction = 0.5;       // largest single step / total excess for spike and dip

  void validate() const {
    if (!(spike_ratio > 1.0)) throw Error("pattern config: spike_ratio must exceed 1");
    if (!(dip_ratio > 0.0 && dip_ratio < 1.0)) throw Error("pattern config: dip_ratio must lie in (0,1)");
    if (!(trend_slope_min > 0.0)) throw Error("pattern config: trend_slope_min must be positive");
    if (!(fluctuation_cv_min > 0.0)) throw Error("pattern config: fluctuation_cv_min must be positive");
    if (!(baseline_fraction > 0.0 && baseline_fraction <= 0.5))
      throw Error("pattern config: baseline_fraction must lie in (0, 0.5]");
    if (!(epsilon > 0.0)) throw Error("pattern config: epsilon must be positive");
    if (!(jump_fraction > 0.0 && jump_fraction <= 1.0))
      throw Error("pattern config: jump_fraction must lie in (0, 1]");
  }

  bool operator==(const PatternConfig&) const = default;
};

inline constexpr double kMonotoneFractionMin = 0.8;
inline constexpr std::size_t kMinPatternLength = 4;

/// Intermediate quantities behind a classification, exposed for the
/// verifier trace and for tests.
struct PatternEvidence {
  std::size_t baseline_length = 0;
  double baseline_mean = 0.0;
  double window_mean = 0.0;
  double peak_excess = 0.0;    // max(post) - baseline
  double trough_excess = 0.0;  // baseline - min(post)
  double max_rise = 0.0;
  double max_drop = 0.0;
  double normalized_trend = 0.0;
  double monotone_fraction = 0.0;
  double variation = 0.0;

  bool spike = false;
  bool dip = false;
  bool gradual_increase = false;
  bool gradual_decrease = false;
  bool fluctuation = false;
};

inline std::size_t baseline_length(std::size_t n, const PatternConfig& config) {
  auto b = static_cast<std::size_t>(std::floor(static_cast<double>(n) * config.baseline_fraction));
  return std::max<std::size_t>(b, 1);
}

inline PatternEvidence evaluate_patterns(std::span<const double> values, const PatternConfig& config) {
  const std::size_t n = values.size();
  if (n < kMinPatternLength) throw Error("classify_pattern: series needs at least 4 samples");

  PatternEvidence ev;
  const auto features = extract_features(values);
  ev.window_mean = features.mean;
  ev.variation = features.variation;
  const double scale = std::max(std::abs(features.mean), config.epsilon);

  ev.baseline_length = baseline_length(n, config);
  double base_sum = 0.0;
  for (std::size_t i = 0; i < ev.baseline_length; ++i) base_sum += values[i];
  ev.baseline_mean = base_sum / static_cast<double>(ev.baseline_length);

  const auto post = values.subspan(ev.baseline_length);
  const auto [post_lo, post_hi] = std::minmax_element(post.begin(), post.end());
  ev.peak_excess = *post_hi - ev.baseline_mean;
  ev.trough_excess = ev.baseline_mean - *post_lo;

  for (std::size_t i = 1; i < n; ++i) {
    const double d = values[i] - values[i - 1];
    ev.max_rise = std::max(ev.max_rise, d);
    ev.max_drop = std::max(ev.max_drop, -d);
  }

  ev.normalized_trend = features.trend * static_cast<double>(n - 1) / scale;
  const double direction = ev.normalized_trend > 0.0 ? 1.0 : (ev.normalized_trend < 0.0 ? -1.0 : 0.0);
  std::size_t monotone = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if ((values[i] - values[i - 1]) * direction > 0.0) ++monotone;
  }
  ev.monotone_fraction = static_cast<double>(monotone) / static_cast<double>(n - 1);

  ev.spike = ev.peak_excess > 0.0 && ev.peak_excess >= (config.spike_ratio - 1.0) * scale &&
             ev.max_rise >= config.jump_fraction * ev.peak_excess;
  ev.dip = ev.trough_excess > 0.0 && ev.trough_excess >= (1.0 / config.dip_ratio - 1.0) * scale &&
           ev.max_drop >= config.jump_fraction * ev.trough_excess;
  const bool gradual = std::abs(ev.normalized_trend) >= config.trend_slope_min &&
                       ev.monotone_fraction >= kMonotoneFractionMin;
  ev.gradual_increase = gradual && ev.normalized_trend > 0.0;
  ev.gradual_decrease = gradual && ev.normalized_trend < 0.0;
  ev.fluctuation = ev.variation >= config.fluctuation_cv_min && !gradual && !ev.spike && !ev.dip;
  return ev;
}

inline std::optional<PatternType> classify_values(std::span<const double> values,
                                                  const PatternConfig& config) {
  const auto ev = evaluate_patterns(values, config);
  if (ev.spike) return PatternType::spike;
  if (ev.dip) return PatternType::dip;
  if (ev.gradual_increase) return PatternType::gradual_increase;
  if (ev.gradual_decrease) return PatternType::gradual_decrease;
  if (ev.fluctuation) return PatternType::fluctuation;
  return std::nullopt;
}

/// At most one pattern; precedence spike, dip, gradual_increase,
/// gradual_decrease, fluctuation. Throws for series shorter than 4 samples.
inline std::optional<PatternType> classify_pattern(const MetricSeries& series,
                                                   const PatternConfig& config = {}) {
  return classify_values(series.values, config);
}

/// Smallest sample index i such that the prefix ending at i classifies as a
/// pattern.
inline std::optional<std::size_t> detect_onset(const MetricSeries& series,
                                               const PatternConfig& config = {}) {
  const std::span<const double> values(series.values);
  if (values.size() < kMinPatternLength) throw Error("detect_onset: series needs at least 4 samples");
  for (std::size_t end = kMinPatternLength - 1; end < values.size(); ++end) {
    if (classify_values(values.first(end + 1), config)) return end;
  }
  return std::nullopt;
}

}  // namespace cloudano
