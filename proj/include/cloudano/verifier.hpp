#pragma once

// Symbolic verification of a typed verdict and the critic loop that feeds
// failed checks back to the decision-maker.

#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cloudano/core.hpp"
#include "cloudano/features.hpp"
#include "cloudano/patterns.hpp"
#include "cloudano/ruleset.hpp"

namespace cloudano {

struct CheckResult {
  bool passed = true;
  std::vector<std::string> failed_items;
  std::vector<std::string> matched_evidence;

  void fail(std::string item) {
    passed = false;
    failed_items.push_back(std::move(item));
  }

  bool operator==(const CheckResult&) const = default;
};

namespace detail {

inline std::string fmt_number(double v) {
  std::ostringstream out;
  out.precision(4);
  out << v;
  return out.str();
}

inline std::string pattern_label(const std::optional<PatternType>& p) {
  return p ? std::string(to_string(*p)) : std::string("none");
}

}  // namespace detail

inline CheckResult verify_metric(const std::vector<MetricSeries>& metrics, AnomalyType type,
                                 const Ruleset& ruleset) {
  const auto& spec = ruleset.at(type);
  const auto& config = ruleset.pattern_config();
  CheckResult result;
  for (const auto& p : spec.metric_predicates) {
    const std::string metric(to_string(p.metric));
    auto it = std::find_if(metrics.begin(), metrics.end(),
                           [&](const MetricSeries& m) { return m.name == p.metric; });
    if (it == metrics.end()) {
      result.fail(metric + ": metric missing, expected " + std::string(to_string(p.required_pattern)));
      continue;
    }
    if (it->values.size() < kMinPatternLength) {
      result.fail(metric + ": window too short to classify");
      continue;
    }
    const auto observed = classify_pattern(*it, config);
    if (observed != p.required_pattern) {
      result.fail(metric + ": expected " + std::string(to_string(p.required_pattern)) + ", observed " +
                  detail::pattern_label(observed));
      continue;
    }
    const auto features = extract_features(*it);
    bool aux_ok = true;
    for (const auto& a : p.aux_checks) {
      const double value = statistic_of(features, a.statistic);
      if (!compare(value, a.comparator, a.threshold)) {
        aux_ok = false;
        result.fail(metric + ": " + std::string(to_string(a.statistic)) + " " +
                    std::string(to_string(a.comparator)) + " " + detail::fmt_number(a.threshold) +
                    " failed (observed " + detail::fmt_number(value) + ")");
      }
    }
    if (aux_ok) result.matched_evidence.push_back(metric + ": " + std::string(to_string(p.required_pattern)));
  }
  return result;
}

inline CheckResult verify_log(const std::vector<LogEntry>& logs, AnomalyType type, const Ruleset& ruleset) {
  const auto& sig = ruleset.at(type).log_signature;
  CheckResult result;
  for (const auto& re : sig.must_match) {
    auto it = std::find_if(logs.begin(), logs.end(), [&](const LogEntry& e) { return re.matches(e.text); });
    if (it == logs.end())
      result.fail("log: no line matches /" + re.source() + "/");
    else
      result.matched_evidence.push_back(it->text);
  }
  for (const auto& re : sig.must_not_match) {
    auto it = std::find_if(logs.begin(), logs.end(), [&](const LogEntry& e) { return re.matches(e.text); });
    if (it != logs.end()) result.fail("log: benign explanation /" + re.source() + "/ matches '" + it->text + "'");
  }
  return result;
}

inline bool verifies_as(const CaseRecord& c, AnomalyType type, const Ruleset& ruleset) {
  return verify_log(c.logs, type, ruleset).passed && verify_metric(c.metrics, type, ruleset).passed;
}

/// First anomaly type (enum order) whose metric and log checks both pass.
inline std::optional<AnomalyType> first_verified_type(const CaseRecord& c, const Ruleset& ruleset) {
  for (auto t : kAnomalyTypes) {
    if (verifies_as(c, t, ruleset)) return t;
  }
  return std::nullopt;
}

/// What the decision-maker receives when the verifier rejects its answer.
struct RetestRequest {
  Verdict previous;
  std::vector<std::string> feedback;
  std::optional<AnomalyType> suggested_type;  // set when a normal verdict contradicts a verified type
  int attempt = 1;
};

using RetestFn = std::function<Verdict(const RetestRequest&)>;

inline constexpr int kDefaultMaxRetries = 2;

/// Validates `initial` against the ruleset and retests through `retest`
/// until the verdict is consistent or `max_retries` retests are spent.
///
/// An anomaly verdict of type t is consistent when both checks pass for t.
/// A normal verdict is consistent when no type passes both checks; otherwise
/// the first passing type (enum order) seeds the retest. Exhaustion returns
/// the last verdict with status abstained and its failed checks.
inline FinalVerdict verify_and_critic(const Verdict& initial, const CaseRecord& c, const Ruleset& ruleset,
                                      const RetestFn& retest, int max_retries = kDefaultMaxRetries) {
  if (max_retries < 0) throw Error("verify_and_critic: max_retries must be non-negative");
  Verdict current = initial;
  int retries = 0;
  for (;;) {
    std::vector<std::string> failed;
    std::optional<AnomalyType> suggested;
    if (current.is_anomaly && current.anomaly_type) {
      const auto t = *current.anomaly_type;
      auto metric = verify_metric(c.metrics, t, ruleset);
      auto log = verify_log(c.logs, t, ruleset);
      if (metric.passed && log.passed) {
        const auto status = current.same_decision(initial) ? VerdictStatus::accepted : VerdictStatus::corrected;
        return FinalVerdict{current, status, retries, {}};
      }
      const std::string prefix = std::string(to_string(t)) + " ";
      for (auto& item : metric.failed_items) failed.push_back(prefix + item);
      for (auto& item : log.failed_items) failed.push_back(prefix + item);
    } else if (current.is_anomaly) {
      failed.push_back("verdict declares an anomaly without a type");
    } else {
      suggested = first_verified_type(c, ruleset);
      if (!suggested) {
        const auto status = current.same_decision(initial) ? VerdictStatus::accepted : VerdictStatus::corrected;
        return FinalVerdict{current, status, retries, {}};
      }
      std::string item = "normal verdict contradicted: evidence satisfies the " +
                         std::string(to_string(*suggested)) + " signature";
      for (const auto& e : verify_metric(c.metrics, *suggested, ruleset).matched_evidence) item += "; " + e;
      for (const auto& e : verify_log(c.logs, *suggested, ruleset).matched_evidence) item += "; '" + e + "'";
      failed.push_back(std::move(item));
    }

    if (retries >= max_retries) return FinalVerdict{current, VerdictStatus::abstained, retries, failed};
    ++retries;
    current = retest(RetestRequest{current, failed, suggested, retries});
  }
}

}  // namespace cloudano
