#pragma once

// Seeded synthetic benchmark: labeled metric windows with temporally aligned
// logs, rendered from scenario templates and checked against the ruleset at
// generation time.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "cloudano/backend.hpp"
#include "cloudano/case_io.hpp"
#include "cloudano/core.hpp"
#include "cloudano/patterns.hpp"
#include "cloudano/rng.hpp"
#include "cloudano/ruleset.hpp"
#include "cloudano/templates.hpp"
#include "cloudano/verifier.hpp"

namespace cloudano {

struct GenSpec {
  std::uint64_t seed = 42;
  int anomaly_cases = 19;
  int normal_cases = 30;
  double easy_fraction = 30.0 / 49.0;
  std::size_t easy_length = 20;
  std::size_t difficult_length = 60;
  int easy_noise_min = 3;
  int easy_noise_max = 8;
  int difficult_noise_min = 20;
  int difficult_noise_max = 60;
  int interval_seconds = 5;

  void validate() const {
    if (anomaly_cases <= 0 || normal_cases <= 0) throw Error("gen spec: case counts must be positive");
    if (!(easy_fraction >= 0.0 && easy_fraction <= 1.0)) throw Error("gen spec: easy_fraction must lie in [0,1]");
    if (easy_length < kMinPatternLength || difficult_length < kMinPatternLength)
      throw Error("gen spec: window lengths must be at least 4");
    if (easy_noise_min < 0 || easy_noise_max < easy_noise_min || difficult_noise_min < 0 ||
        difficult_noise_max < difficult_noise_min)
      throw Error("gen spec: noise line ranges must satisfy 0 <= min <= max");
    if (interval_seconds <= 0) throw Error("gen spec: interval_seconds must be positive");
  }

  std::size_t length_for(Difficulty d) const { return d == Difficulty::easy ? easy_length : difficult_length; }
};

/// Numeric readings that must never leak into log text.
inline const std::regex& metric_reading_regex() {
  static const std::regex re(R"(\d+(\.\d+)?\s*(%|percent\b|[KMGT]i?B/s|[KMGT]bps))");
  return re;
}

inline bool contains_metric_reading(const std::string& line) {
  return std::regex_search(line, metric_reading_regex());
}

// ---------------------------------------------------------------------------
// Metric series

struct ShapedSeries {
  std::vector<double> values;
  std::size_t onset = 0;  // first sample of the injected shape
};

namespace detail {

inline constexpr int kMaxShapeAttempts = 256;

inline double round2(double v) { return std::round(v * 100.0) / 100.0; }

inline double jitter(double level, Rng& rng, double amount = 0.05) {
  return level * (1.0 + rng.uniform(-amount, amount));
}

/// Configs 10% looser and 10% stricter than `base` on every threshold.
inline std::vector<PatternConfig> robustness_configs(const PatternConfig& base) {
  std::vector<PatternConfig> out{base};
  for (double s : {0.9, 1.1}) {
    PatternConfig c = base;
    c.spike_ratio = 1.0 + (base.spike_ratio - 1.0) * s;
    c.dip_ratio = 1.0 / (1.0 + (1.0 / base.dip_ratio - 1.0) * s);
    c.trend_slope_min = base.trend_slope_min * s;
    c.fluctuation_cv_min = base.fluctuation_cv_min * s;
    c.jump_fraction = std::min(1.0, base.jump_fraction * s);
    out.push_back(c);
  }
  return out;
}

inline ShapedSeries draw_shape(const std::optional<PatternType>& pattern, ValueRange r, std::size_t n, Rng& rng) {
  const double L = r.low, H = r.high, S = H - L;
  const auto nd = static_cast<double>(n);
  ShapedSeries out;
  out.values.assign(n, 0.0);
  auto& v = out.values;

  if (!pattern) {
    const double level = rng.uniform(L + S / 8.0, L + S / 2.0);
    for (auto& x : v) x = jitter(level, rng);
    return out;
  }
  switch (*pattern) {
    case PatternType::spike:
    case PatternType::dip: {
      const bool up = *pattern == PatternType::spike;
      const double base = up ? rng.uniform(L + S / 16.0, L + S / 4.0) : rng.uniform(H - S / 4.0, H - S / 16.0);
      const double level = up ? rng.uniform(L + 0.85 * S, H) * (1.0 - rng.uniform(0.0, 0.05))
                              : rng.uniform(L, L + 0.1 * S);
      const auto onset = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(0.45 * nd),
                                                               static_cast<std::int64_t>(0.7 * nd)));
      const auto max_len = std::max<std::int64_t>(3, static_cast<std::int64_t>(nd / 5.0));
      const auto len = static_cast<std::size_t>(rng.between(3, max_len));
      for (std::size_t i = 0; i < n; ++i) {
        const bool inside = i >= onset && i < onset + len;
        v[i] = jitter(inside ? level : base, rng, inside ? 0.03 : 0.05);
      }
      out.onset = std::min(onset, n - 1);
      break;
    }
    case PatternType::gradual_increase:
    case PatternType::gradual_decrease: {
      const bool up = *pattern == PatternType::gradual_increase;
      double from = rng.uniform(L + S / 16.0, L + S / 4.0);
      double to = rng.uniform(H - S / 4.0, H - S / 16.0);
      if (!up) std::swap(from, to);
      const auto start = static_cast<std::size_t>(rng.between(0, static_cast<std::int64_t>(0.2 * nd)));
      const double steps = static_cast<double>(n - 1 - start);
      const double step = (to - from) / std::max(steps, 1.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (i <= start) {
          v[i] = jitter(from, rng, 0.02);
        } else {
          v[i] = from + step * static_cast<double>(i - start) + std::abs(step) * rng.uniform(-0.25, 0.25);
        }
      }
      out.onset = start;
      break;
    }
    case PatternType::fluctuation: {
      const double centre = rng.uniform(L + 0.35 * S, L + 0.6 * S);
      const auto onset = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(0.3 * nd),
                                                               static_cast<std::int64_t>(0.5 * nd)));
      bool high = rng.chance(0.5);
      for (std::size_t i = 0; i < n; ++i) {
        if (i < onset) {
          v[i] = jitter(centre, rng);
        } else {
          const double amp = rng.uniform(0.35, 0.6);
          v[i] = centre * (high ? 1.0 + amp : 1.0 - amp);
          high = !high;
        }
      }
      out.onset = onset;
      break;
    }
  }
  return out;
}

}  // namespace detail

/// Draws a window whose classification is `pattern` (or no pattern) under
/// `config` and under configs 10% looser and stricter, so small threshold
/// edits do not flip generated labels. Samples are rounded to 2 decimals and
/// clipped to the range.
inline ShapedSeries gen_shaped_values(const std::optional<PatternType>& pattern, ValueRange range,
                                      std::size_t length, Rng& rng, const PatternConfig& config = {}) {
  if (!(range.low >= 0.0 && range.low < range.high))
    throw Error("gen_metric_series: range must satisfy 0 <= low < high");
  if (length < kMinPatternLength) throw Error("gen_metric_series: length must be at least 4");
  const auto configs = detail::robustness_configs(config);
  for (int attempt = 0; attempt < detail::kMaxShapeAttempts; ++attempt) {
    auto shaped = detail::draw_shape(pattern, range, length, rng);
    for (auto& x : shaped.values) x = std::clamp(detail::round2(x), range.low, range.high);
    const bool ok = std::all_of(configs.begin(), configs.end(), [&](const PatternConfig& c) {
      return classify_values(shaped.values, c) == pattern;
    });
    if (ok) return shaped;
  }
  const std::string what = pattern ? std::string(to_string(*pattern)) : std::string("flat");
  throw Error("gen_metric_series: infeasible range [" + detail::fmt_number(range.low) + ", " +
              detail::fmt_number(range.high) + "] for " + what + " at length " + std::to_string(length));
}

inline MetricSeries gen_metric_series(PatternType pattern, ValueRange range, std::size_t length, Rng& rng,
                                      MetricName name = MetricName::cpu, std::string unit = "percent",
                                      int interval_seconds = 5) {
  if (is_percent_unit(unit) && range.high > 100.0)
    throw Error("gen_metric_series: percent range exceeds 100");
  auto shaped = gen_shaped_values(pattern, range, length, rng);
  return MetricSeries{name, std::move(unit), interval_seconds, std::move(shaped.values)};
}

// ---------------------------------------------------------------------------
// Log rendering

namespace detail {

inline std::string hex_string(Rng& rng, int digits) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  for (int i = 0; i < digits; ++i) s += kHex[rng.between(0, 15)];
  return s;
}

inline std::string public_ip(Rng& rng) {
  static const std::vector<int> first{45, 91, 103, 146, 178, 185, 193, 212};
  return std::to_string(rng.pick(first)) + "." + std::to_string(rng.between(1, 254)) + "." +
         std::to_string(rng.between(0, 254)) + "." + std::to_string(rng.between(1, 254));
}

inline std::string lan_ip(Rng& rng) {
  return "10.0." + std::to_string(rng.between(0, 3)) + "." + std::to_string(rng.between(2, 254));
}

inline std::string mac_address(Rng& rng) {
  std::string s;
  for (int i = 0; i < 6; ++i) {
    if (i) s += ':';
    s += hex_string(rng, 2);
  }
  return s;
}

inline std::string draw_slot(const std::string& name, Rng& rng) {
  using V = std::vector<std::string>;
  if (name == "pid") return std::to_string(rng.between(300, 65000));
  if (name == "port") return std::to_string(rng.between(1024, 65535));
  if (name == "port2") {
    static const V ports{"21", "22", "23", "25", "53", "80", "110", "143", "443", "445",
                         "3306", "3389", "5432", "6379", "8080", "8443"};
    return rng.pick(ports);
  }
  if (name == "n") return std::to_string(rng.between(2, 999));
  if (name == "ip" || name == "ip2") return public_ip(rng);
  if (name == "lan_ip" || name == "lan_ip2") return lan_ip(rng);
  if (name == "mac" || name == "mac2") return mac_address(rng);
  if (name == "hex") return hex_string(rng, 6);
  if (name == "cid") return hex_string(rng, 12);
  if (name == "hidden") return "." + hex_string(rng, 4);
  if (name == "svc_user") return rng.pick(V{"www-data", "postgres", "nobody", "deploy", "jenkins"});
  if (name == "user" || name == "user2")
    return rng.pick(V{"alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy"});
  if (name == "pool_domain")
    return rng.pick(V{"pool.supportxmr.com", "xmr.2miners.com", "gulf.moneroocean.stream", "pool.hashvault.pro"});
  if (name == "pool_port") return rng.pick(V{"3333", "4444", "5555", "7777", "10128", "14444"});
  if (name == "rogue_image")
    return rng.pick(V{"docker.io/tmpx/ml-runner:latest", "ghcr.io/z3r0x/trainer:v2", "docker.io/ghostgpu/worker"});
  if (name == "domain")
    return rng.pick(V{"isc.org", "ripe.net", "cdn-sync.net", "files-drop.io", "updates-mirror.com"});
  if (name == "internal_domain")
    return rng.pick(V{"db.internal", "api.internal", "cache.internal", "auth.internal"});
  if (name == "arch")
    return rng.pick(V{"dump", "db_backup", "export", "customers"}) + "-" + std::to_string(rng.between(1, 28));
  if (name == "db") return rng.pick(V{"mysql", "postgresql", "mongodb"});
  if (name == "path") return rng.pick(V{"wp-login.php", "products?page=2", "api/v1/items", "search", "sitemap.xml"});
  if (name == "crawler") return rng.pick(V{"Bytedance", "Semrush", "Petal", "Ahrefs", "MJ12"});
  if (name == "pkg") return rng.pick(V{"linux-image-generic", "openssl", "libc6", "nginx", "openssh-server"});
  if (name == "model") return rng.pick(V{"resnet50", "bert_base", "llama_ft", "unet"});
  if (name == "svc") return rng.pick(V{"orders-service", "catalog-service", "auth-service"});
  if (name == "name") return rng.pick(V{"spring_launch", "q4_promo", "summer_sale", "intro_video", "product_demo"});
  if (name == "table") return rng.pick(V{"orders", "events", "sessions", "invoices"});
  if (name == "job") return rng.pick(V{"apt-daily", "fstrim", "man-db", "motd-news"});
  throw Error("log template uses unknown slot {" + name + "}");
}

inline bool per_line_slot(const std::string& name) { return name == "pid" || name == "port2" || name == "n"; }

/// Fills {slot} placeholders. Case-wide slots are drawn on first use and
/// cached in `slots`.
inline std::string render_line(const std::string& text, std::map<std::string, std::string>& slots, Rng& rng) {
  std::string out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find('{', pos);
    if (open == std::string::npos) {
      out.append(text, pos);
      break;
    }
    const auto close = text.find('}', open);
    if (close == std::string::npos) throw Error("log template has an unterminated slot: " + text);
    out.append(text, pos, open - pos);
    const std::string name = text.substr(open + 1, close - open - 1);
    if (per_line_slot(name)) {
      out += draw_slot(name, rng);
    } else {
      auto it = slots.find(name);
      if (it == slots.end()) it = slots.emplace(name, draw_slot(name, rng)).first;
      out += it->second;
    }
    pos = close + 1;
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Cases

/// Anomaly cases must verify for their own type and no other; normal cases
/// must fail the log signature of every type. Throws naming `origin`.
inline void check_closure(const CaseRecord& c, const Ruleset& ruleset, const std::string& origin) {
  if (c.label.is_anomaly) {
    const auto type = *c.label.anomaly_type;
    const auto metric = verify_metric(c.metrics, type, ruleset);
    const auto log = verify_log(c.logs, type, ruleset);
    if (!metric.passed || !log.passed) {
      std::string why;
      for (const auto& f : metric.failed_items) why += "; " + f;
      for (const auto& f : log.failed_items) why += "; " + f;
      throw Error("closure check failed for template '" + origin + "': case does not verify as " +
                  std::string(to_string(type)) + why);
    }
    for (auto other : kAnomalyTypes) {
      if (other != type && verify_log(c.logs, other, ruleset).passed)
        throw Error("closure check failed for template '" + origin + "': logs also match " +
                    std::string(to_string(other)));
    }
  } else {
    for (auto t : kAnomalyTypes) {
      if (verify_log(c.logs, t, ruleset).passed)
        throw Error("separation check failed for template '" + origin + "': normal logs match " +
                    std::string(to_string(t)));
    }
  }
  for (const auto& e : c.logs) {
    if (contains_metric_reading(e.text))
      throw Error("template '" + origin + "' renders a metric reading into logs: " + e.text);
  }
}

inline CaseRecord gen_case(const ScenarioTemplate& tmpl, Difficulty difficulty, Rng& rng, const TemplateSet& set,
                           const Ruleset& ruleset, const GenSpec& spec = {}) {
  if (tmpl.primary.empty()) throw Error("template '" + tmpl.id + "' has no primary metric script");
  const std::size_t n = spec.length_for(difficulty);
  const auto& config = ruleset.pattern_config();

  std::vector<MetricScript> scripts = tmpl.primary;
  if (difficulty == Difficulty::difficult) {
    for (const auto& s : tmpl.secondary) {
      const bool dup = std::any_of(scripts.begin(), scripts.end(),
                                   [&](const MetricScript& p) { return p.metric == s.metric; });
      if (!dup) scripts.push_back(s);
    }
    if (scripts.size() < 2)
      throw Error("template '" + tmpl.id + "' needs a secondary metric script for difficult cases");
  }

  CaseRecord c;
  c.label.is_anomaly = tmpl.is_anomaly();
  c.label.anomaly_type = tmpl.anomaly_type;
  c.label.difficulty = difficulty;
  c.label.scenario = tmpl.scenario;

  std::size_t onset = 0;
  for (auto metric : kMetricNames) {
    const auto& defaults = set.defaults_for(metric);
    auto it = std::find_if(scripts.begin(), scripts.end(), [&](const MetricScript& s) { return s.metric == metric; });
    ShapedSeries shaped;
    try {
      shaped = it == scripts.end() ? gen_shaped_values(std::nullopt, defaults.idle, n, rng, config)
                                   : gen_shaped_values(it->pattern, it->range, n, rng, config);
    } catch (const Error& e) {
      throw Error("template '" + tmpl.id + "': " + e.what());
    }
    if (it != scripts.end() && it == scripts.begin()) onset = shaped.onset;
    c.metrics.push_back(MetricSeries{metric, defaults.unit, spec.interval_seconds, std::move(shaped.values)});
  }

  // Scripted lines cluster around the primary onset; distractors spread
  // across the whole window.
  const std::int64_t interval = spec.interval_seconds;
  const std::int64_t span = static_cast<std::int64_t>(n - 1) * interval;
  std::map<std::string, std::string> slots;
  std::vector<LogEntry> scripted;
  for (const auto& line : tmpl.log_script) {
    const auto repeats = rng.between(line.min_repeat, line.max_repeat);
    for (std::int64_t k = 0; k < repeats; ++k) scripted.push_back({0, detail::render_line(line.text, slots, rng)});
  }
  const std::int64_t first = std::max<std::int64_t>(0, static_cast<std::int64_t>(onset) * interval - 2 * interval);
  std::int64_t t = first;
  for (auto& e : scripted) {
    e.timestamp = std::min(t, span);
    t += rng.between(1, interval);
  }

  const int noise = difficulty == Difficulty::easy
                        ? static_cast<int>(rng.between(spec.easy_noise_min, spec.easy_noise_max))
                        : static_cast<int>(rng.between(spec.difficult_noise_min, spec.difficult_noise_max));
  std::vector<LogEntry> logs = scripted;
  for (int i = 0; i < noise && !set.benign_pool.empty(); ++i) {
    logs.push_back({rng.between(0, span), detail::render_line(rng.pick(set.benign_pool), slots, rng)});
  }
  std::stable_sort(logs.begin(), logs.end(),
                   [](const LogEntry& a, const LogEntry& b) { return a.timestamp < b.timestamp; });
  c.logs = std::move(logs);
  c.id = tmpl.id;

  validate(c);
  check_closure(c, ruleset, tmpl.id);
  return c;
}

// ---------------------------------------------------------------------------
// Benchmark

namespace detail {

/// Marks `easy` of `total` positions as easy, spread evenly.
inline std::vector<Difficulty> spread_difficulty(int total, int easy) {
  std::vector<Difficulty> out;
  for (int i = 0; i < total; ++i) {
    const bool e = (static_cast<long>(i + 1) * easy) / total > (static_cast<long>(i) * easy) / total;
    out.push_back(e ? Difficulty::easy : Difficulty::difficult);
  }
  return out;
}

inline std::string case_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "case_%04zu", index + 1);
  return buf;
}

}  // namespace detail

/// Requires one anomaly template per type at least and ten deceptive-normal
/// templates.
inline void check_template_coverage(const TemplateSet& set) {
  for (auto t : kAnomalyTypes) {
    const bool covered = std::any_of(set.templates.begin(), set.templates.end(),
                                     [&](const ScenarioTemplate& s) { return s.anomaly_type == t; });
    if (!covered) throw Error("templates: no anomaly template for " + std::string(to_string(t)));
  }
  const auto normals = std::count_if(set.templates.begin(), set.templates.end(),
                                     [](const ScenarioTemplate& s) { return !s.is_anomaly(); });
  if (normals < 10) throw Error("templates: need at least 10 deceptive-normal templates");
  for (auto m : kMetricNames) set.defaults_for(m);
}

inline Dataset gen_benchmark(const GenSpec& spec, const TemplateSet& set, const Ruleset& ruleset) {
  spec.validate();
  check_template_coverage(set);

  const int total = spec.anomaly_cases + spec.normal_cases;
  const int easy_anomaly = static_cast<int>(std::lround(spec.anomaly_cases * spec.easy_fraction));
  const int easy_normal = static_cast<int>(std::lround(spec.normal_cases * spec.easy_fraction));
  const auto anomaly_difficulty = detail::spread_difficulty(spec.anomaly_cases, easy_anomaly);
  const auto normal_difficulty = detail::spread_difficulty(spec.normal_cases, easy_normal);

  std::map<AnomalyType, std::vector<const ScenarioTemplate*>> by_type;
  std::vector<const ScenarioTemplate*> normals;
  for (const auto& t : set.templates) {
    if (t.anomaly_type)
      by_type[*t.anomaly_type].push_back(&t);
    else
      normals.push_back(&t);
  }
  Rng order_rng(mix_seed(spec.seed, 0x6e6f726d));
  order_rng.shuffle(normals);

  std::vector<CaseRecord> cases;
  cases.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < total; ++i) {
    const ScenarioTemplate* tmpl = nullptr;
    Difficulty difficulty;
    if (i < spec.anomaly_cases) {
      const auto type = kAnomalyTypes[static_cast<std::size_t>(i) % kAnomalyTypes.size()];
      const auto& pool = by_type.at(type);
      tmpl = pool[(static_cast<std::size_t>(i) / kAnomalyTypes.size()) % pool.size()];
      difficulty = anomaly_difficulty[static_cast<std::size_t>(i)];
    } else {
      const auto k = static_cast<std::size_t>(i - spec.anomaly_cases);
      tmpl = normals[k % normals.size()];
      difficulty = normal_difficulty[k];
    }
    Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(i)));
    cases.push_back(gen_case(*tmpl, difficulty, rng, set, ruleset, spec));
  }

  Rng shuffle_rng(mix_seed(spec.seed, 0x73687566));
  shuffle_rng.shuffle(cases);
  for (std::size_t i = 0; i < cases.size(); ++i) cases[i].id = detail::case_id(i);

  Dataset ds;
  ds.manifest = manifest_for(spec.seed, cases);
  ds.cases = std::move(cases);
  return ds;
}

// ---------------------------------------------------------------------------
// Optional log rewriting through a backend

struct AugmentResult {
  CaseRecord record;
  bool applied = false;
  std::string warning;  // set when the rewrite was rejected
};

inline constexpr std::string_view kRewriteSystemPrompt =
    "Rewrite each system log line below so it reads like a different but realistic log message of the same "
    "event. Keep process names, addresses, paths, identifiers and key phrases unchanged. Do not add metric "
    "readings. Return exactly one line per input line, in order, and nothing else.";

inline AugmentResult llm_augment_logs(const CaseRecord& original, Backend& backend, const Ruleset& ruleset) {
  AugmentResult result{original, false, {}};
  if (original.logs.empty()) return result;

  AgentPrompt prompt;
  prompt.system_text = std::string(kRewriteSystemPrompt);
  prompt.expected_schema = OutputSchema::rewrite;
  for (const auto& e : original.logs) prompt.user_text += e.text + "\n";

  const std::string reply = backend.complete(prompt);
  std::vector<std::string> lines;
  std::istringstream in(reply);
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.starts_with("```")) continue;
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    lines.push_back(line);
  }
  if (lines.size() != original.logs.size()) {
    result.warning = "rewrite returned " + std::to_string(lines.size()) + " lines for " +
                     std::to_string(original.logs.size()) + "; original kept";
    return result;
  }
  CaseRecord candidate = original;
  for (std::size_t i = 0; i < lines.size(); ++i) candidate.logs[i].text = lines[i];
  try {
    validate(candidate);
    check_closure(candidate, ruleset, candidate.id);
  } catch (const Error& e) {
    result.warning = std::string("rewrite rejected: ") + e.what() + "; original kept";
    return result;
  }
  result.record = std::move(candidate);
  result.applied = result.record != original;
  return result;
}

}  // namespace cloudano
