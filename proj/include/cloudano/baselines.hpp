#pragma once

// Deterministic comparison detectors: a voting rule ensemble over metric
// features and an out-of-vocabulary log token detector. Both emit binary
// verdicts without an anomaly type.

#include <cctype>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "cloudano/core.hpp"
#include "cloudano/features.hpp"
#include "cloudano/patterns.hpp"

namespace cloudano {

// ---------------------------------------------------------------------------
// Rule ensemble

// Relative volatility (volatility / mean) that ~90% of flat windows with
// +-5% jitter stay below, at both 20 and 60 samples.
inline constexpr double kVolatilityReference = 0.05;

inline constexpr std::array<std::string_view, 5> kRuleCatalogue{
    "pattern_present", "variation", "trend", "volatility", "spike_ratio"};

struct RuleVote {
  MetricName metric = MetricName::cpu;
  std::string rule_id;
  bool fired = false;
  std::string detail;
};

/// max(1, ceil(0.34 * m)), in integer arithmetic.
inline int adaptive_vote_threshold(int metric_count) {
  if (metric_count < 0) throw Error("adaptive_vote_threshold: negative metric count");
  return std::max(1, (34 * metric_count + 99) / 100);
}

inline std::vector<RuleVote> rule_votes(const MetricSeries& series, const PatternConfig& config) {
  std::vector<RuleVote> votes;
  auto add = [&](std::string_view id, bool fired, std::string detail) {
    votes.push_back({series.name, std::string(id), fired, std::move(detail)});
  };
  if (series.values.size() < 2) {
    for (auto id : kRuleCatalogue) add(id, false, "window too short");
    return votes;
  }
  const auto f = extract_features(series);
  const double mean = std::abs(f.mean);

  if (series.values.size() >= kMinPatternLength) {
    const auto p = classify_pattern(series, config);
    add("pattern_present", p.has_value(), p ? std::string(to_string(*p)) : "none");
  } else {
    add("pattern_present", false, "window too short");
  }
  add("variation", f.variation >= config.fluctuation_cv_min, "cv=" + std::to_string(f.variation));
  const double norm_trend = mean > config.epsilon
                                ? f.trend * static_cast<double>(series.values.size() - 1) / mean
                                : 0.0;
  add("trend", std::abs(norm_trend) >= config.trend_slope_min, "normalized trend=" + std::to_string(norm_trend));
  const double rel_vol = mean > config.epsilon ? f.volatility / mean : 0.0;
  add("volatility", rel_vol >= kVolatilityReference, "relative volatility=" + std::to_string(rel_vol));
  const double ratio = mean > config.epsilon ? f.max / mean : 0.0;
  add("spike_ratio", ratio >= config.spike_ratio, "max/mean=" + std::to_string(ratio));
  return votes;
}

inline std::vector<RuleVote> rule_ensemble_votes(const CaseRecord& c, const PatternConfig& config = {}) {
  std::vector<RuleVote> out;
  for (const auto& m : c.metrics) {
    auto v = rule_votes(m, config);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

/// Anomaly iff the number of fired (metric, rule) votes reaches the
/// adaptive threshold for the case's metric count.
inline Verdict rule_ensemble_detect(const CaseRecord& c, const PatternConfig& config = {}) {
  const auto votes = rule_ensemble_votes(c, config);
  const int fired = static_cast<int>(std::count_if(votes.begin(), votes.end(), [](const RuleVote& v) { return v.fired; }));
  const int threshold = adaptive_vote_threshold(static_cast<int>(c.metrics.size()));
  return Verdict::binary_decision(fired >= threshold, std::to_string(fired) + " of " + std::to_string(votes.size()) +
                                                          " rule votes fired, threshold " +
                                                          std::to_string(threshold));
}

// ---------------------------------------------------------------------------
// Out-of-vocabulary detector

inline constexpr double kDefaultOovThreshold = 0.05;

/// Lowercase tokens split on anything but letters and digits. Digit runs
/// become '#', and long hex-like identifiers such as container ids collapse
/// to "<hex>" since they are unique per host.
inline std::vector<std::string> tokenize_log_line(std::string_view line) {
  std::vector<std::string> out;
  std::string raw;
  auto finish = [&] {
    if (raw.empty()) return;
    const bool has_digit = std::any_of(raw.begin(), raw.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
    const bool all_hex = std::all_of(raw.begin(), raw.end(), [](char ch) {
      return (ch >= '0' && ch <= '9') || (ch >= 'a' && ch <= 'f');
    });
    if (raw.size() >= 6 && has_digit && all_hex) {
      out.emplace_back("<hex>");
    } else {
      std::string token;
      bool in_digits = false;
      for (char ch : raw) {
        const bool digit = ch >= '0' && ch <= '9';
        if (!digit) token += ch;
        else if (!in_digits) token += '#';
        in_digits = digit;
      }
      out.push_back(std::move(token));
    }
    raw.clear();
  };
  for (char ch : line) {
    const auto u = static_cast<unsigned char>(ch);
    if (std::isalnum(u))
      raw += static_cast<char>(std::tolower(u));
    else
      finish();
  }
  finish();
  return out;
}

struct Vocabulary {
  std::set<std::string> tokens;
  int source_case_count = 0;

  bool contains(const std::string& t) const { return tokens.contains(t); }
};

inline Vocabulary build_vocabulary(const std::vector<CaseRecord>& corpus) {
  if (corpus.empty()) throw Error("build_vocabulary: corpus is empty");
  Vocabulary v;
  for (const auto& c : corpus) {
    for (const auto& e : c.logs)
      for (auto& t : tokenize_log_line(e.text)) v.tokens.insert(std::move(t));
  }
  v.source_case_count = static_cast<int>(corpus.size());
  if (v.tokens.empty()) throw Error("build_vocabulary: corpus has no log tokens");
  return v;
}

/// Share of the case's token occurrences that are absent from `vocab`.
inline double oov_fraction(const CaseRecord& c, const Vocabulary& vocab) {
  std::size_t total = 0, missing = 0;
  for (const auto& e : c.logs) {
    for (const auto& t : tokenize_log_line(e.text)) {
      ++total;
      if (!vocab.contains(t)) ++missing;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(missing) / static_cast<double>(total);
}

inline Verdict oov_detect(const CaseRecord& c, const Vocabulary& vocab, double threshold = kDefaultOovThreshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error("oov_detect: threshold must lie in [0,1]");
  const double frac = oov_fraction(c, vocab);
  return Verdict::binary_decision(frac > threshold, "out-of-vocabulary token share " + std::to_string(frac));
}

}  // namespace cloudano
