#pragma once

// Runs detectors over a dataset with repeats and scores ACA, ATCA and FPR
// per split. Percentages are kept as integer hundredths so summaries and
// their renderings are exact and reproducible.

#include <array>
#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cloudano/baselines.hpp"
#include "cloudano/bench_gen.hpp"
#include "cloudano/case_io.hpp"
#include "cloudano/pipeline.hpp"
#include "cloudano/rng.hpp"

namespace cloudano {

// ---------------------------------------------------------------------------
// Detectors

class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::string id() const = 0;
  /// Whether verdicts carry an anomaly type (ATCA is reported only then).
  virtual bool typed() const = 0;
  /// Must be safe to call from several threads at once.
  virtual FinalVerdict detect(const CaseRecord& c) const = 0;
};

class PipelineDetector : public Detector {
 public:
  PipelineDetector(std::string id, Backend& backend, AgentContext ctx, PipelineOptions options = {})
      : id_(std::move(id)), backend_(backend), ctx_(std::move(ctx)), options_(options) {}

  std::string id() const override { return id_; }
  bool typed() const override { return true; }
  FinalVerdict detect(const CaseRecord& c) const override {
    return run_pipeline(c, backend_, ctx_, options_).final;
  }

 private:
  std::string id_;
  Backend& backend_;
  AgentContext ctx_;
  PipelineOptions options_;
};

class RuleEnsembleDetector : public Detector {
 public:
  explicit RuleEnsembleDetector(PatternConfig config = {}) : config_(config) {}
  std::string id() const override { return "rule-ensemble"; }
  bool typed() const override { return false; }
  FinalVerdict detect(const CaseRecord& c) const override {
    return {rule_ensemble_detect(c, config_), VerdictStatus::accepted, 0, {}};
  }

 private:
  PatternConfig config_;
};

class OovDetector : public Detector {
 public:
  OovDetector(Vocabulary vocab, double threshold = kDefaultOovThreshold)
      : vocab_(std::move(vocab)), threshold_(threshold) {}
  std::string id() const override { return "oov"; }
  bool typed() const override { return false; }
  FinalVerdict detect(const CaseRecord& c) const override {
    return {oov_detect(c, vocab_, threshold_), VerdictStatus::accepted, 0, {}};
  }

 private:
  Vocabulary vocab_;
  double threshold_;
};

/// Answers the same verdict for every case.
class ConstantDetector : public Detector {
 public:
  ConstantDetector(std::string id, Verdict verdict) : id_(std::move(id)), verdict_(std::move(verdict)) {}
  std::string id() const override { return id_; }
  bool typed() const override { return !verdict_.binary; }
  FinalVerdict detect(const CaseRecord&) const override { return {verdict_, VerdictStatus::accepted, 0, {}}; }

 private:
  std::string id_;
  Verdict verdict_;
};

inline std::unique_ptr<Detector> always_anomaly_detector() {
  return std::make_unique<ConstantDetector>("always-anomaly", Verdict::anomaly(AnomalyType::mine, "always anomaly"));
}

inline std::unique_ptr<Detector> never_anomaly_detector() {
  return std::make_unique<ConstantDetector>("never-anomaly", Verdict::normal("always normal"));
}

/// Vocabulary for the OOV detector, learnt from normal cases of a benchmark
/// generated under a seed derived from (not equal to) `spec.seed`.
inline Vocabulary reference_vocabulary(const GenSpec& spec, const TemplateSet& set, const Ruleset& ruleset) {
  GenSpec ref = spec;
  ref.seed = mix_seed(spec.seed, 0x766f6361);
  const auto ds = gen_benchmark(ref, set, ruleset);
  std::vector<CaseRecord> normals;
  for (const auto& c : ds.cases)
    if (!c.label.is_anomaly) normals.push_back(c);
  return build_vocabulary(normals);
}

// ---------------------------------------------------------------------------
// Scoring

struct CaseResult {
  std::string case_id;
  FinalVerdict predicted;
  CaseLabel truth;
  bool aca_correct = false;
  bool atca_correct = false;
  std::int64_t latency_ms = 0;
  int repeat_index = 0;
  std::string error;  // non-empty when the detector threw
};

struct Correctness {
  bool aca = false;
  bool atca = false;
};

/// Abstentions count as their retained verdict unless `strict_abstain`.
inline Correctness score_verdict(const FinalVerdict& predicted, const CaseLabel& truth, bool strict_abstain = false) {
  if (strict_abstain && predicted.status == VerdictStatus::abstained) return {};
  const auto& v = predicted.verdict;
  Correctness c;
  c.aca = v.is_anomaly == truth.is_anomaly;
  c.atca = truth.is_anomaly ? (v.is_anomaly && v.anomaly_type.has_value() && v.anomaly_type == truth.anomaly_type)
                            : !v.is_anomaly;
  return c;
}

struct EvalOptions {
  int repeats = 3;
  std::uint64_t seed = 0;
  int jobs = 1;
  bool strict_abstain = false;
};

/// Every case `repeats` times; case order is reshuffled per repeat from
/// `options.seed`. Results are ordered by repeat, then by execution order.
inline std::vector<CaseResult> run_evaluation(const Dataset& dataset, const Detector& detector,
                                              const EvalOptions& options = {}) {
  if (options.repeats < 1) throw Error("run_evaluation: repeats must be at least 1");
  if (options.jobs < 1) throw Error("run_evaluation: jobs must be at least 1");
  const std::size_t n = dataset.cases.size();
  std::vector<CaseResult> results(n * static_cast<std::size_t>(options.repeats));

  for (int rep = 0; rep < options.repeats; ++rep) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(mix_seed(options.seed, static_cast<std::uint64_t>(rep)));
    rng.shuffle(order);

    const std::size_t base = static_cast<std::size_t>(rep) * n;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t k = next.fetch_add(1); k < n; k = next.fetch_add(1)) {
        const auto& c = dataset.cases[order[k]];
        CaseResult r;
        r.case_id = c.id;
        r.truth = c.label;
        r.repeat_index = rep;
        const auto start = std::chrono::steady_clock::now();
        try {
          r.predicted = detector.detect(c);
          const auto score = score_verdict(r.predicted, c.label, options.strict_abstain);
          r.aca_correct = score.aca;
          r.atca_correct = score.atca;
        } catch (const std::exception& e) {
          r.error = e.what();
        }
        r.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
                           .count();
        results[base + k] = std::move(r);
      }
    };
    const int threads = std::min<int>(options.jobs, static_cast<int>(std::max<std::size_t>(n, 1)));
    if (threads == 1) {
      worker();
    } else {
      std::vector<std::thread> pool;
      for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (auto& t : pool) t.join();
    }
  }
  return results;
}

enum class Split { anomaly, normal, easy, difficult, total };

template <>
struct EnumNames<Split> {
  static constexpr std::array<std::pair<Split, std::string_view>, 5> values{{
      {Split::anomaly, "anomaly"},
      {Split::normal, "normal"},
      {Split::easy, "easy"},
      {Split::difficult, "difficult"},
      {Split::total, "total"},
  }};
};

inline constexpr auto kSplits = all_values<Split>();

/// correct/total as hundredths of a percent, rounded half up.
inline std::int64_t percent_hundredths(std::int64_t correct, std::int64_t total) {
  if (total <= 0) throw Error("percent_hundredths: empty split");
  if (correct < 0 || correct > total) throw Error("percent_hundredths: correct count out of range");
  return (2 * correct * 10000 + total) / (2 * total);
}

inline std::string format_hundredths(std::int64_t v) {
  std::string frac = std::to_string(v % 100);
  if (frac.size() < 2) frac.insert(0, "0");
  return std::to_string(v / 100) + "." + frac;
}

struct SplitScore {
  int case_count = 0;
  std::int64_t evaluations = 0;  // case_count * repeats
  std::int64_t aca_correct = 0;
  std::int64_t atca_correct = 0;
  std::int64_t aca = 0;   // hundredths of a percent
  std::int64_t atca = 0;
};

struct EvalSummary {
  std::string detector_id;
  bool typed = true;
  int repeats = 1;
  std::uint64_t seed = 0;
  std::array<SplitScore, 5> splits{};
  std::int64_t fpr = 0;  // hundredths; 10000 - normal ACA

  const SplitScore& at(Split s) const { return splits[static_cast<std::size_t>(s)]; }
};

/// Pools correct counts over repeats (every repeat covers every case, so
/// this equals the mean of per-repeat percentages) and rounds once.
inline EvalSummary summarize(const std::vector<CaseResult>& results, const Manifest& manifest,
                             const std::string& detector_id, bool typed, int repeats, std::uint64_t seed) {
  if (results.empty()) throw Error("summarize: no results");
  if (repeats < 1) throw Error("summarize: repeats must be at least 1");
  std::map<std::string, int> seen;
  for (const auto& r : results) {
    const auto* entry = manifest.find(r.case_id);
    if (!entry) throw InvariantError("results", "case '" + r.case_id + "' is not in the manifest");
    if (entry->label.is_anomaly != r.truth.is_anomaly || entry->label.anomaly_type != r.truth.anomaly_type ||
        entry->label.difficulty != r.truth.difficulty)
      throw InvariantError("results", "label of case '" + r.case_id + "' differs from the manifest");
    ++seen[r.case_id];
  }
  for (const auto& e : manifest.cases) {
    if (seen[e.id] != repeats)
      throw InvariantError("results", "case '" + e.id + "' has " + std::to_string(seen[e.id]) + " results, expected " +
                                          std::to_string(repeats));
  }

  EvalSummary s;
  s.detector_id = detector_id;
  s.typed = typed;
  s.repeats = repeats;
  s.seed = seed;
  auto& total = s.splits[static_cast<std::size_t>(Split::total)];
  for (const auto& e : manifest.cases) {
    const Split kind = e.label.is_anomaly ? Split::anomaly : Split::normal;
    const Split level = e.label.difficulty == Difficulty::easy ? Split::easy : Split::difficult;
    for (auto sp : {kind, level}) ++s.splits[static_cast<std::size_t>(sp)].case_count;
    ++total.case_count;
  }
  for (const auto& r : results) {
    const Split kind = r.truth.is_anomaly ? Split::anomaly : Split::normal;
    const Split level = r.truth.difficulty == Difficulty::easy ? Split::easy : Split::difficult;
    for (auto sp : {kind, level, Split::total}) {
      auto& score = s.splits[static_cast<std::size_t>(sp)];
      ++score.evaluations;
      score.aca_correct += r.aca_correct ? 1 : 0;
      score.atca_correct += r.atca_correct ? 1 : 0;
    }
  }
  auto sum2 = [&](Split a, Split b, auto field) {
    return s.splits[static_cast<std::size_t>(a)].*field + s.splits[static_cast<std::size_t>(b)].*field;
  };
  for (auto field : {&SplitScore::aca_correct, &SplitScore::atca_correct, &SplitScore::evaluations}) {
    if (sum2(Split::anomaly, Split::normal, field) != total.*field ||
        sum2(Split::easy, Split::difficult, field) != total.*field)
      throw InvariantError("summary", "split totals are inconsistent");
  }
  for (auto& score : s.splits) {
    if (score.evaluations == 0) continue;
    score.aca = percent_hundredths(score.aca_correct, score.evaluations);
    score.atca = percent_hundredths(score.atca_correct, score.evaluations);
  }
  s.fpr = s.at(Split::normal).evaluations > 0 ? 10000 - s.at(Split::normal).aca : 0;
  return s;
}

// ---------------------------------------------------------------------------
// Rendering

enum class ReportFormat { table, csv };

template <>
struct EnumNames<ReportFormat> {
  static constexpr std::array<std::pair<ReportFormat, std::string_view>, 2> values{{
      {ReportFormat::table, "table"},
      {ReportFormat::csv, "csv"},
  }};
};

inline constexpr std::string_view kCsvHeader = "detector_id,split,metric,value,case_count,repeats,seed";

inline std::string emit_report(const std::vector<EvalSummary>& summaries, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::csv) {
    out << kCsvHeader << "\n";
    for (const auto& s : summaries) {
      auto row = [&](Split sp, std::string_view metric, std::int64_t value) {
        out << s.detector_id << "," << to_string(sp) << "," << metric << "," << format_hundredths(value) << ","
            << s.at(sp).case_count << "," << s.repeats << "," << s.seed << "\n";
      };
      for (auto sp : kSplits) {
        if (s.at(sp).evaluations == 0) continue;
        row(sp, "aca", s.at(sp).aca);
        if (s.typed) row(sp, "atca", s.at(sp).atca);
      }
      if (s.at(Split::normal).evaluations > 0) row(Split::normal, "fpr", s.fpr);
    }
    return out.str();
  }
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const auto& s = summaries[i];
    if (i) out << "\n";
    out << "detector: " << s.detector_id << "  repeats: " << s.repeats << "  seed: " << s.seed << "\n";
    char line[96];
    std::snprintf(line, sizeof line, "%-10s %6s %8s %8s\n", "split", "cases", "ACA", "ATCA");
    out << line;
    for (auto sp : kSplits) {
      const auto& sc = s.at(sp);
      const std::string aca = sc.evaluations ? format_hundredths(sc.aca) : "-";
      const std::string atca = sc.evaluations && s.typed ? format_hundredths(sc.atca) : "-";
      std::snprintf(line, sizeof line, "%-10s %6d %8s %8s\n", std::string(to_string(sp)).c_str(), sc.case_count,
                    aca.c_str(), atca.c_str());
      out << line;
    }
    out << "FPR: " << (s.at(Split::normal).evaluations ? format_hundredths(s.fpr) : "-") << "\n";
  }
  return out.str();
}

/// One JSON object per line; the only place latency is reported.
inline std::string case_results_jsonl(const std::vector<CaseResult>& results, const std::string& detector_id) {
  std::string out;
  for (const auto& r : results) {
    ordered_json j;
    j["detector_id"] = detector_id;
    j["repeat"] = r.repeat_index;
    j["case_id"] = r.case_id;
    j["is_anomaly"] = r.predicted.verdict.is_anomaly;
    j["anomaly_type"] = r.predicted.verdict.anomaly_type
                            ? ordered_json(std::string(to_string(*r.predicted.verdict.anomaly_type)))
                            : ordered_json(nullptr);
    j["status"] = std::string(to_string(r.predicted.status));
    j["retries_used"] = r.predicted.retries_used;
    j["aca_correct"] = r.aca_correct;
    j["atca_correct"] = r.atca_correct;
    j["latency_ms"] = r.latency_ms;
    if (!r.error.empty()) j["error"] = r.error;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace cloudano
