#pragma once

// Shared domain types for metric windows, log lines, labels and verdicts.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cloudano {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structural problem in an input document: missing key, wrong JSON type,
/// unknown enum spelling. `field()` is a dotted path to the offending value.
class SchemaError : public Error {
 public:
  SchemaError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A well-formed value that breaks a domain invariant (unequal series
/// lengths, unsorted logs, label inconsistency).
class InvariantError : public Error {
 public:
  InvariantError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

enum class MetricName { cpu, gpu, memory, disk_io, net_in, net_out };

enum class PatternType { spike, dip, gradual_increase, gradual_decrease, fluctuation };

enum class AnomalyType {
  mine,
  oom,
  gpu_hijack,
  port_scan,
  icmp_flood_dos,
  dns_amplification,
  data_exfiltration,
  arp_spoofing,
  log_storm,
  log_growth_anomaly,
};

enum class Difficulty { easy, difficult };

enum class Possibility { low, medium, high };

enum class VerdictStatus { accepted, corrected, abstained };

template <class E>
struct EnumNames;

template <>
struct EnumNames<MetricName> {
  static constexpr std::array<std::pair<MetricName, std::string_view>, 6> values{{
      {MetricName::cpu, "cpu"},
      {MetricName::gpu, "gpu"},
      {MetricName::memory, "memory"},
      {MetricName::disk_io, "disk_io"},
      {MetricName::net_in, "net_in"},
      {MetricName::net_out, "net_out"},
  }};
};

template <>
struct EnumNames<PatternType> {
  static constexpr std::array<std::pair<PatternType, std::string_view>, 5> values{{
      {PatternType::spike, "spike"},
      {PatternType::dip, "dip"},
      {PatternType::gradual_increase, "gradual_increase"},
      {PatternType::gradual_decrease, "gradual_decrease"},
      {PatternType::fluctuation, "fluctuation"},
  }};
};

template <>
struct EnumNames<AnomalyType> {
  static constexpr std::array<std::pair<AnomalyType, std::string_view>, 10> values{{
      {AnomalyType::mine, "mine"},
      {AnomalyType::oom, "oom"},
      {AnomalyType::gpu_hijack, "gpu_hijack"},
      {AnomalyType::port_scan, "port_scan"},
      {AnomalyType::icmp_flood_dos, "icmp_flood_dos"},
      {AnomalyType::dns_amplification, "dns_amplification"},
      {AnomalyType::data_exfiltration, "data_exfiltration"},
      {AnomalyType::arp_spoofing, "arp_spoofing"},
      {AnomalyType::log_storm, "log_storm"},
      {AnomalyType::log_growth_anomaly, "log_growth_anomaly"},
  }};
};

template <>
struct EnumNames<Difficulty> {
  static constexpr std::array<std::pair<Difficulty, std::string_view>, 2> values{{
      {Difficulty::easy, "easy"},
      {Difficulty::difficult, "difficult"},
  }};
};

template <>
struct EnumNames<Possibility> {
  static constexpr std::array<std::pair<Possibility, std::string_view>, 3> values{{
      {Possibility::low, "low"},
      {Possibility::medium, "medium"},
      {Possibility::high, "high"},
  }};
};

template <>
struct EnumNames<VerdictStatus> {
  static constexpr std::array<std::pair<VerdictStatus, std::string_view>, 3> values{{
      {VerdictStatus::accepted, "accepted"},
      {VerdictStatus::corrected, "corrected"},
      {VerdictStatus::abstained, "abstained"},
  }};
};

template <class E>
constexpr std::string_view to_string(E value) {
  for (const auto& [v, name] : EnumNames<E>::values) {
    if (v == value) return name;
  }
  return "?";
}

template <class E>
constexpr std::optional<E> parse_enum(std::string_view text) {
  for (const auto& [v, name] : EnumNames<E>::values) {
    if (name == text) return v;
  }
  return std::nullopt;
}

template <class E>
constexpr auto all_values() {
  std::array<E, EnumNames<E>::values.size()> out{};
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = EnumNames<E>::values[i].first;
  return out;
}

inline constexpr auto kAnomalyTypes = all_values<AnomalyType>();
inline constexpr auto kMetricNames = all_values<MetricName>();
inline constexpr auto kPatternTypes = all_values<PatternType>();

struct MetricSeries {
  MetricName name = MetricName::cpu;
  std::string unit;
  int interval_seconds = 5;
  std::vector<double> values;

  bool operator==(const MetricSeries&) const = default;
};

struct LogEntry {
  std::int64_t timestamp = 0;
  std::string text;

  bool operator==(const LogEntry&) const = default;
};

struct CaseLabel {
  bool is_anomaly = false;
  std::optional<AnomalyType> anomaly_type;
  Difficulty difficulty = Difficulty::easy;
  std::string scenario;

  bool operator==(const CaseLabel&) const = default;
};

struct CaseRecord {
  std::string id;
  CaseLabel label;
  std::vector<MetricSeries> metrics;
  std::vector<LogEntry> logs;

  bool operator==(const CaseRecord&) const = default;

  const MetricSeries* find_metric(MetricName name) const {
    auto it = std::find_if(metrics.begin(), metrics.end(),
                           [name](const MetricSeries& m) { return m.name == name; });
    return it == metrics.end() ? nullptr : &*it;
  }
};

struct Finding {
  MetricName metric = MetricName::cpu;
  PatternType pattern = PatternType::spike;

  bool operator==(const Finding&) const = default;
};

struct DetectionHypothesis {
  bool anomaly_detected = false;
  std::vector<Finding> findings;
  std::string raw_rationale;

  bool operator==(const DetectionHypothesis&) const = default;
};

struct LogAssessment {
  Possibility possibility = Possibility::low;
  std::vector<std::string> evidence;
  std::optional<AnomalyType> candidate_type;
  std::string raw_rationale;

  bool operator==(const LogAssessment&) const = default;
};

/// Decision-maker output. Typed detectors keep is_anomaly ⇔ anomaly_type;
/// binary detectors (the baselines) set `binary` and never carry a type.
struct Verdict {
  bool is_anomaly = false;
  std::optional<AnomalyType> anomaly_type;
  std::string explanation;
  bool binary = false;

  static Verdict normal(std::string explanation) {
    return Verdict{false, std::nullopt, std::move(explanation), false};
  }
  static Verdict anomaly(AnomalyType type, std::string explanation) {
    return Verdict{true, type, std::move(explanation), false};
  }
  static Verdict binary_decision(bool is_anomaly, std::string explanation) {
    return Verdict{is_anomaly, std::nullopt, std::move(explanation), true};
  }

  /// Same decision, ignoring the prose.
  bool same_decision(const Verdict& other) const {
    return is_anomaly == other.is_anomaly && anomaly_type == other.anomaly_type;
  }

  bool operator==(const Verdict&) const = default;
};

struct FinalVerdict {
  Verdict verdict;
  VerdictStatus status = VerdictStatus::accepted;
  int retries_used = 0;
  std::vector<std::string> failed_checks;

  bool operator==(const FinalVerdict&) const = default;
};

inline bool is_percent_unit(std::string_view unit) { return unit == "percent"; }

inline void validate(const MetricSeries& series, const std::string& where) {
  if (series.values.empty()) throw InvariantError(where + ".values", "series is empty");
  if (series.interval_seconds <= 0)
    throw InvariantError(where + ".interval_seconds", "sampling interval must be positive");
  if (series.unit.empty()) throw InvariantError(where + ".unit", "unit is empty");
  const bool percent = is_percent_unit(series.unit);
  for (std::size_t i = 0; i < series.values.size(); ++i) {
    const double v = series.values[i];
    const std::string at = where + ".values[" + std::to_string(i) + "]";
    if (!std::isfinite(v)) throw InvariantError(at, "sample is not finite");
    if (v < 0.0) throw InvariantError(at, "sample is negative");
    if (percent && v > 100.0) throw InvariantError(at, "percent sample exceeds 100");
  }
}

inline void validate(const CaseLabel& label) {
  if (label.is_anomaly != label.anomaly_type.has_value())
    throw InvariantError("label", "anomaly_type must be present iff is_anomaly is true");
}

inline void validate(const CaseRecord& record) {
  if (record.id.empty()) throw InvariantError("id", "case id is empty");
  validate(record.label);
  if (record.metrics.empty()) throw InvariantError("metrics", "case has no metric series");
  const auto& first = record.metrics.front();
  for (std::size_t i = 0; i < record.metrics.size(); ++i) {
    const auto& m = record.metrics[i];
    const std::string where = "metrics[" + std::to_string(i) + "]";
    validate(m, where);
    if (m.values.size() != first.values.size())
      throw InvariantError(where + ".values", "metric series lengths differ");
    if (m.interval_seconds != first.interval_seconds)
      throw InvariantError(where + ".interval_seconds", "metric sampling intervals differ");
    for (std::size_t j = 0; j < i; ++j) {
      if (record.metrics[j].name == m.name)
        throw InvariantError(where + ".name", "duplicate metric " + std::string(to_string(m.name)));
    }
  }
  const auto span = static_cast<std::int64_t>(first.values.size() - 1) * first.interval_seconds;
  for (std::size_t i = 0; i < record.logs.size(); ++i) {
    const auto& entry = record.logs[i];
    const std::string where = "logs[" + std::to_string(i) + "]";
    if (entry.timestamp < 0 || entry.timestamp > span)
      throw InvariantError(where + ".timestamp", "timestamp outside the metric window");
    if (i > 0 && entry.timestamp < record.logs[i - 1].timestamp)
      throw InvariantError(where + ".timestamp", "log entries are not sorted by timestamp");
    if (entry.text.find_first_of("\r\n") != std::string::npos)
      throw InvariantError(where + ".text", "log line contains a newline");
  }
}

inline void validate(const DetectionHypothesis& h) {
  if (h.anomaly_detected == h.findings.empty())
    throw InvariantError("hypothesis", "anomaly_detected must hold iff findings are non-empty");
}

inline void validate(const Verdict& v) {
  if (v.binary) {
    if (v.anomaly_type) throw InvariantError("verdict", "binary verdict carries an anomaly type");
    return;
  }
  if (v.is_anomaly != v.anomaly_type.has_value())
    throw InvariantError("verdict", "anomaly_type must be present iff is_anomaly is true");
}

}  // namespace cloudano
