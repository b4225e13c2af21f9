#pragma once

// Hand-rolled generators shared by the test binaries.

#include <optional>
#include <vector>

#include "cloudano/bench_gen.hpp"
#include "cloudano/rng.hpp"

namespace cloudano::testing {

/// Arbitrary non-negative series: mixtures of flat, noisy, stepped and
/// heavy-tailed shapes over several magnitudes.
inline std::vector<double> random_series(Rng& rng, std::size_t min_len = 2, std::size_t max_len = 200) {
  const auto n = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(min_len),
                                                      static_cast<std::int64_t>(max_len)));
  const double scale = std::pow(10.0, rng.uniform(-2.0, 4.0));
  std::vector<double> v(n);
  switch (rng.between(0, 4)) {
    case 0:
      for (auto& x : v) x = scale * rng.uniform();
      break;
    case 1: {
      const double level = scale * rng.uniform(0.5, 1.0);
      for (auto& x : v) x = level * (1.0 + rng.uniform(-0.05, 0.05));
      break;
    }
    case 2: {
      const auto cut = static_cast<std::size_t>(rng.between(0, static_cast<std::int64_t>(n) - 1));
      for (std::size_t i = 0; i < n; ++i) v[i] = scale * (i < cut ? 0.2 : 1.0) + rng.uniform(0.0, scale * 0.01);
      break;
    }
    case 3:
      for (auto& x : v) x = scale * std::pow(rng.uniform(), 6.0);
      break;
    default: {
      const double level = scale * rng.uniform(0.1, 1.0);
      for (auto& x : v) x = level;
      break;
    }
  }
  return v;
}

/// A generated window with a random target pattern (or none) over a random
/// feasible range. Returns the target alongside the values.
struct GeneratedWindow {
  std::optional<PatternType> target;
  std::vector<double> values;
};

inline GeneratedWindow random_window(Rng& rng) {
  GeneratedWindow w;
  const auto choice = rng.between(0, 5);
  if (choice < 5) w.target = kPatternTypes[static_cast<std::size_t>(choice)];
  const std::size_t n = rng.chance(0.5) ? 20 : 60;
  const double span = rng.uniform(40.0, 400.0);
  const double low = rng.uniform(0.0, 0.05 * span);
  const double high = low + span;
  w.values = gen_shaped_values(w.target, {low, high}, n, rng).values;
  return w;
}

inline const ScenarioTemplate& template_by_id(const TemplateSet& set, const std::string& id) {
  for (const auto& t : set.templates)
    if (t.id == id) return t;
  throw Error("no template " + id);
}

/// One generated case from the default templates.
inline CaseRecord make_case(const std::string& template_id, Difficulty d = Difficulty::easy,
                            std::uint64_t seed = 1) {
  static const auto set = default_templates();
  static const auto rules = default_ruleset();
  Rng rng(seed);
  return gen_case(template_by_id(set, template_id), d, rng, set, rules);
}

inline MetricSeries flat_metric(MetricName name, double level, std::size_t n = 20) {
  return MetricSeries{name, name == MetricName::cpu || name == MetricName::gpu || name == MetricName::memory
                                ? "percent"
                                : "MB/s",
                      5, std::vector<double>(n, level)};
}

}  // namespace cloudano::testing
