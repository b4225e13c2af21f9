#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>

#include "cloudano/core.hpp"

namespace cloudano {

/// Closed-form descriptors of one metric window.
///
/// std and volatility are population standard deviations (divide by n and
/// n-1 respectively, i.e. by the number of terms). skewness is the Fisher
/// moment coefficient m3 / m2^(3/2). trend is the ordinary least-squares
/// slope against sample indices 0..n-1, in value units per sample step.
struct FeatureVector {
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
  double variation = 0.0;
  double skewness = 0.0;
  double trend = 0.0;
  double volatility = 0.0;
};

inline FeatureVector extract_features(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) throw Error("extract_features: series needs at least 2 samples");

  FeatureVector f;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  f.min = *lo;
  f.max = *hi;
  if (f.min == f.max) {
    f.mean = f.min;
    return f;
  }

  const double dn = static_cast<double>(n);
  f.mean = std::clamp(std::accumulate(values.begin(), values.end(), 0.0) / dn, f.min, f.max);

  double m2 = 0.0;
  double m3 = 0.0;
  for (double v : values) {
    const double d = v - f.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= dn;
  m3 /= dn;
  f.std = std::sqrt(m2);
  f.skewness = m2 > 0.0 ? m3 / (m2 * f.std) : 0.0;
  f.variation = f.mean != 0.0 ? f.std / std::abs(f.mean) : 0.0;

  const double index_mean = (dn - 1.0) / 2.0;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double di = static_cast<double>(i) - index_mean;
    sxy += di * (values[i] - f.mean);
    sxx += di * di;
  }
  f.trend = sxy / sxx;

  const double steps = dn - 1.0;
  double diff_mean = (values[n - 1] - values[0]) / steps;
  double diff_m2 = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double d = (values[i] - values[i - 1]) - diff_mean;
    diff_m2 += d * d;
  }
  f.volatility = std::sqrt(diff_m2 / steps);
  return f;
}

inline FeatureVector extract_features(const MetricSeries& series) {
  return extract_features(std::span<const double>(series.values));
}

}  // namespace cloudano
