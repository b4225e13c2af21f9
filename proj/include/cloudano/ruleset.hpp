#pragma once

// Per-anomaly-type symbolic signatures: conjunctive metric predicates plus a
// regex log signature, and the JSON ruleset file that carries them.

#include <map>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "cloudano/case_io.hpp"
#include "cloudano/core.hpp"
#include "cloudano/patterns.hpp"

namespace cloudano {

enum class Statistic { mean, max, variation, volatility, trend };
enum class Comparator { ge, gt, le, lt };

template <>
struct EnumNames<Statistic> {
  static constexpr std::array<std::pair<Statistic, std::string_view>, 5> values{{
      {Statistic::mean, "mean"},
      {Statistic::max, "max"},
      {Statistic::variation, "variation"},
      {Statistic::volatility, "volatility"},
      {Statistic::trend, "trend"},
  }};
};

template <>
struct EnumNames<Comparator> {
  static constexpr std::array<std::pair<Comparator, std::string_view>, 4> values{{
      {Comparator::ge, ">="},
      {Comparator::gt, ">"},
      {Comparator::le, "<="},
      {Comparator::lt, "<"},
  }};
};

inline double statistic_of(const FeatureVector& f, Statistic s) {
  switch (s) {
    case Statistic::mean: return f.mean;
    case Statistic::max: return f.max;
    case Statistic::variation: return f.variation;
    case Statistic::volatility: return f.volatility;
    case Statistic::trend: return f.trend;
  }
  return 0.0;
}

inline bool compare(double lhs, Comparator c, double rhs) {
  switch (c) {
    case Comparator::ge: return lhs >= rhs;
    case Comparator::gt: return lhs > rhs;
    case Comparator::le: return lhs <= rhs;
    case Comparator::lt: return lhs < rhs;
  }
  return false;
}

struct AuxCheck {
  Statistic statistic = Statistic::max;
  Comparator comparator = Comparator::ge;
  double threshold = 0.0;

  bool operator==(const AuxCheck&) const = default;
};

struct MetricPredicate {
  MetricName metric = MetricName::cpu;
  PatternType required_pattern = PatternType::spike;
  std::vector<AuxCheck> aux_checks;

  bool operator==(const MetricPredicate&) const = default;
};

/// A compiled regex that remembers its source. A leading "(?i)" makes the
/// match case-insensitive (std::regex has no inline flags).
class LogRegex {
 public:
  explicit LogRegex(std::string source) : source_(std::move(source)) {
    std::string_view body = source_;
    auto flags = std::regex::ECMAScript | std::regex::optimize;
    if (body.starts_with("(?i)")) {
      body.remove_prefix(4);
      flags |= std::regex::icase;
    }
    if (body.empty()) throw Error("log regex is empty");
    try {
      regex_ = std::regex(std::string(body), flags);
    } catch (const std::regex_error& e) {
      throw Error("log regex '" + source_ + "' does not compile: " + e.what());
    }
  }

  const std::string& source() const { return source_; }
  bool matches(const std::string& line) const { return std::regex_search(line, regex_); }

  bool operator==(const LogRegex& other) const { return source_ == other.source_; }

 private:
  std::string source_;
  std::regex regex_;
};

struct LogSignature {
  std::vector<LogRegex> must_match;
  std::vector<LogRegex> must_not_match;

  bool operator==(const LogSignature&) const = default;
};

struct RuleSpec {
  AnomalyType anomaly_type = AnomalyType::mine;
  std::vector<MetricPredicate> metric_predicates;
  LogSignature log_signature;

  bool operator==(const RuleSpec&) const = default;
};

class Ruleset {
 public:
  Ruleset() = default;
  explicit Ruleset(std::vector<RuleSpec> specs, PatternConfig config = {})
      : config_(config) {
    config_.validate();
    for (auto& spec : specs) add(std::move(spec));
  }

  void add(RuleSpec spec) {
    const std::string name(to_string(spec.anomaly_type));
    if (spec.metric_predicates.empty())
      throw InvariantError("rules." + name + ".metric_predicates", "no metric predicates");
    if (spec.log_signature.must_match.empty())
      throw InvariantError("rules." + name + ".log_signature.must_match", "no required log patterns");
    if (find(spec.anomaly_type))
      throw InvariantError("rules." + name, "duplicate rule for anomaly type");
    specs_.push_back(std::move(spec));
  }

  /// Throws unless every anomaly type has exactly one rule.
  void require_complete() const {
    for (auto t : kAnomalyTypes) {
      if (!find(t)) throw InvariantError("rules", "no rule for anomaly type " + std::string(to_string(t)));
    }
  }

  const RuleSpec* find(AnomalyType t) const {
    for (const auto& s : specs_)
      if (s.anomaly_type == t) return &s;
    return nullptr;
  }

  const RuleSpec& at(AnomalyType t) const {
    if (const auto* s = find(t)) return *s;
    throw Error("ruleset has no rule for anomaly type " + std::string(to_string(t)));
  }

  const std::vector<RuleSpec>& specs() const { return specs_; }
  const PatternConfig& pattern_config() const { return config_; }

  bool operator==(const Ruleset&) const = default;

 private:
  std::vector<RuleSpec> specs_;
  PatternConfig config_;
};

namespace detail {

inline MetricPredicate pred(MetricName m, PatternType p, std::vector<AuxCheck> aux = {}) {
  return MetricPredicate{m, p, std::move(aux)};
}

inline LogSignature sig(std::initializer_list<const char*> must, std::initializer_list<const char*> must_not = {}) {
  LogSignature s;
  for (const char* r : must) s.must_match.emplace_back(r);
  for (const char* r : must_not) s.must_not_match.emplace_back(r);
  return s;
}

}  // namespace detail

/// The compiled-in ruleset, one signature per anomaly type. The bench
/// generator's templates are written against these patterns.
inline Ruleset default_ruleset() {
  using detail::pred;
  using detail::sig;
  using M = MetricName;
  using P = PatternType;
  using S = Statistic;
  constexpr auto ge = Comparator::ge;

  std::vector<RuleSpec> specs;
  specs.push_back({AnomalyType::mine,
                   {pred(M::cpu, P::spike, {{S::max, ge, 75.0}})},
                   sig({"xmrig", "(?i)\\bcron\\b"})});
  specs.push_back({AnomalyType::oom,
                   {pred(M::memory, P::gradual_increase, {{S::max, ge, 75.0}})},
                   sig({"(?i)oom[- _]?kill", "\\bGC\\b"})});
  specs.push_back({AnomalyType::gpu_hijack,
                   {pred(M::gpu, P::spike, {{S::max, ge, 75.0}})},
                   sig({"(?i)\\bunknown container\\b", "(?i)\\b(nvidia|cuda)"})});
  specs.push_back({AnomalyType::port_scan,
                   {pred(M::net_in, P::fluctuation, {{S::variation, ge, 0.2}})},
                   sig({"(?i)UFW BLOCK.*\\bSYN\\b", "(?i)attackalert: connect from host"},
                       {"(?i)authorized (vulnerability )?scan"})});
  specs.push_back({AnomalyType::icmp_flood_dos,
                   {pred(M::net_in, P::spike, {{S::max, ge, 200.0}})},
                   sig({"(?i)icmp echo request", "(?i)net_ratelimit|callbacks suppressed"},
                       {"(?i)\\bsmokeping\\b"})});
  specs.push_back({AnomalyType::dns_amplification,
                   {pred(M::net_out, P::spike, {{S::max, ge, 200.0}})},
                   sig({"(?i)\\bIN ANY\\b|query\\[ANY\\]", "(?i)open resolver"})});
  specs.push_back({AnomalyType::data_exfiltration,
                   {pred(M::net_out, P::gradual_increase, {{S::trend, Comparator::gt, 0.0}})},
                   sig({"\\b(scp|curl)\\b", "(?i)outbound connection to unrecognized host"})});
  specs.push_back({AnomalyType::arp_spoofing,
                   {pred(M::net_out, P::fluctuation, {{S::variation, ge, 0.2}})},
                   sig({"(?i)\\barp reply\\b", "(?i)\\b(flip flop|changed ethernet address)\\b"})});
  specs.push_back({AnomalyType::log_storm,
                   {pred(M::disk_io, P::spike, {{S::max, ge, 250.0}})},
                   sig({"(?i)\\b(crawler|spider)\\b", "(?i)from unknown address"})});
  specs.push_back({AnomalyType::log_growth_anomaly,
                   {pred(M::disk_io, P::gradual_increase, {{S::trend, Comparator::gt, 0.0}})},
                   sig({"(?i)scheduled backup", "(?i)exceeds rotation limit|not rotated"},
                       {"(?i)maintenance window"})});
  Ruleset r(std::move(specs));
  r.require_complete();
  return r;
}

// ---------------------------------------------------------------------------
// Ruleset file (JSON)

inline constexpr std::string_view kRulesetFormat = "cloudano-ruleset/1";

inline ordered_json pattern_config_to_json(const PatternConfig& c) {
  ordered_json j;
  j["spike_ratio"] = c.spike_ratio;
  j["dip_ratio"] = c.dip_ratio;
  j["trend_slope_min"] = c.trend_slope_min;
  j["fluctuation_cv_min"] = c.fluctuation_cv_min;
  j["baseline_fraction"] = c.baseline_fraction;
  j["epsilon"] = c.epsilon;
  j["jump_fraction"] = c.jump_fraction;
  return j;
}

/// Missing keys keep their compiled-in defaults.
inline PatternConfig pattern_config_from_json(const json& j) {
  PatternConfig c;
  if (!j.is_object()) throw SchemaError("pattern_config", "expected an object");
  auto read = [&](const char* key, double& field) {
    if (auto it = j.find(key); it != j.end()) {
      if (!it->is_number()) throw SchemaError(std::string("pattern_config.") + key, "expected a number");
      field = it->get<double>();
    }
  };
  read("spike_ratio", c.spike_ratio);
  read("dip_ratio", c.dip_ratio);
  read("trend_slope_min", c.trend_slope_min);
  read("fluctuation_cv_min", c.fluctuation_cv_min);
  read("baseline_fraction", c.baseline_fraction);
  read("epsilon", c.epsilon);
  read("jump_fraction", c.jump_fraction);
  c.validate();
  return c;
}

inline std::string serialize_ruleset(const Ruleset& ruleset) {
  ordered_json doc;
  doc["format"] = std::string(kRulesetFormat);
  doc["pattern_config"] = pattern_config_to_json(ruleset.pattern_config());
  ordered_json rules = ordered_json::array();
  for (const auto& spec : ruleset.specs()) {
    ordered_json rule;
    rule["anomaly_type"] = std::string(to_string(spec.anomaly_type));
    ordered_json preds = ordered_json::array();
    for (const auto& p : spec.metric_predicates) {
      ordered_json pj;
      pj["metric"] = std::string(to_string(p.metric));
      pj["pattern"] = std::string(to_string(p.required_pattern));
      ordered_json aux = ordered_json::array();
      for (const auto& a : p.aux_checks) {
        ordered_json aj;
        aj["statistic"] = std::string(to_string(a.statistic));
        aj["comparator"] = std::string(to_string(a.comparator));
        aj["threshold"] = a.threshold;
        aux.push_back(std::move(aj));
      }
      pj["aux_checks"] = std::move(aux);
      preds.push_back(std::move(pj));
    }
    rule["metric_predicates"] = std::move(preds);
    ordered_json sigj;
    sigj["must_match"] = ordered_json::array();
    for (const auto& r : spec.log_signature.must_match) sigj["must_match"].push_back(r.source());
    sigj["must_not_match"] = ordered_json::array();
    for (const auto& r : spec.log_signature.must_not_match) sigj["must_not_match"].push_back(r.source());
    rule["log_signature"] = std::move(sigj);
    rules.push_back(std::move(rule));
  }
  doc["rules"] = std::move(rules);
  return doc.dump(2) + "\n";
}

inline Ruleset parse_ruleset(std::string_view text) {
  using namespace detail;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("ruleset", std::string("malformed JSON: ") + e.what());
  }
  if (require_string(doc, "format", "") != kRulesetFormat)
    throw SchemaError("format", "unsupported ruleset format");
  PatternConfig config;
  if (auto it = doc.find("pattern_config"); it != doc.end()) config = pattern_config_from_json(*it);

  std::vector<RuleSpec> specs;
  const auto& rules = require_array(doc, "rules", "");
  for (std::size_t i = 0; i < rules.size(); ++i) {
    const std::string where = "rules[" + std::to_string(i) + "]";
    RuleSpec spec;
    spec.anomaly_type = require_enum<AnomalyType>(rules[i], "anomaly_type", where);
    const auto& preds = require_array(rules[i], "metric_predicates", where);
    for (std::size_t k = 0; k < preds.size(); ++k) {
      const std::string pw = where + ".metric_predicates[" + std::to_string(k) + "]";
      MetricPredicate p;
      p.metric = require_enum<MetricName>(preds[k], "metric", pw);
      p.required_pattern = require_enum<PatternType>(preds[k], "pattern", pw);
      if (auto it = preds[k].find("aux_checks"); it != preds[k].end()) {
        if (!it->is_array()) throw SchemaError(pw + ".aux_checks", "expected an array");
        for (std::size_t a = 0; a < it->size(); ++a) {
          const std::string aw = pw + ".aux_checks[" + std::to_string(a) + "]";
          AuxCheck check;
          check.statistic = require_enum<Statistic>((*it)[a], "statistic", aw);
          check.comparator = require_enum<Comparator>((*it)[a], "comparator", aw);
          const auto& th = require((*it)[a], "threshold", aw);
          if (!th.is_number()) throw SchemaError(aw + ".threshold", "expected a number");
          check.threshold = th.get<double>();
          p.aux_checks.push_back(check);
        }
      }
      spec.metric_predicates.push_back(std::move(p));
    }
    const auto& sigj = require(rules[i], "log_signature", where);
    auto read_patterns = [&](const char* key, std::vector<LogRegex>& out, bool required) {
      auto it = sigj.find(key);
      if (it == sigj.end()) {
        if (required) throw SchemaError(where + ".log_signature." + key, "missing field");
        return;
      }
      if (!it->is_array()) throw SchemaError(where + ".log_signature." + key, "expected an array");
      for (const auto& r : *it) {
        if (!r.is_string()) throw SchemaError(where + ".log_signature." + key, "expected regex strings");
        try {
          out.emplace_back(r.get<std::string>());
        } catch (const Error& e) {
          throw InvariantError(where + ".log_signature." + key, e.what());
        }
      }
    };
    read_patterns("must_match", spec.log_signature.must_match, true);
    read_patterns("must_not_match", spec.log_signature.must_not_match, false);
    specs.push_back(std::move(spec));
  }
  Ruleset r(std::move(specs), config);
  r.require_complete();
  return r;
}

}  // namespace cloudano
