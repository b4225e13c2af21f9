#pragma once

// The metrics agent (fast detection), log agent and decision-maker (slow
// detection) over a text-completion backend, plus the rule-derived fallbacks
// used when a backend answer cannot be parsed after one repair.

#include <charconv>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cloudano/backend.hpp"
#include "cloudano/case_io.hpp"
#include "cloudano/core.hpp"
#include "cloudano/patterns.hpp"
#include "cloudano/ruleset.hpp"
#include "cloudano/verifier.hpp"

namespace cloudano {

// ---------------------------------------------------------------------------
// Prompt text

inline constexpr std::string_view kDefaultMetricsPrompt =
    R"(You are the metrics agent of a cloud anomaly detector. You receive a short window of system
metrics sampled at a fixed interval. Decide whether any metric shows one of these patterns:
spike (sudden sharp increase), dip (sudden sharp decrease), gradual_increase, gradual_decrease,
fluctuation (sustained high-variance oscillation).

Answer with these lines and nothing else:
anomaly_detected: true|false
findings: <metric>=<pattern>, ...   (or "none")
rationale: <one sentence>
)";

inline constexpr std::string_view kDefaultLogPrompt =
    R"(You are the log agent of a cloud anomaly detector. The metrics agent reported the findings
below. Read the system logs and judge how likely they show a real anomaly rather than a benign,
scheduled or authorized activity. Possible anomaly types: mine, oom, gpu_hijack, port_scan,
icmp_flood_dos, dns_amplification, data_exfiltration, arp_spoofing, log_storm, log_growth_anomaly.

Answer with these lines and nothing else:
possibility: low|medium|high
candidate_type: <one anomaly type or "none">
evidence: <a log line copied verbatim>   (repeat the key once per line)
rationale: <one sentence>
)";

inline constexpr std::string_view kDecidePrompt =
    R"(You are the final decision-maker of a cloud anomaly detector. Combine the metric findings and
the log assessment below into a verdict. Only report an anomaly when both perspectives agree.
Use exactly one of: mine, oom, gpu_hijack, port_scan, icmp_flood_dos, dns_amplification,
data_exfiltration, arp_spoofing, log_storm, log_growth_anomaly.

If a verifier feedback section is present, your previous answer failed the listed checks;
revise it accordingly.

Answer with these lines and nothing else:
is_anomaly: true|false
anomaly_type: <type or "none">
explanation: <one or two sentences citing the metrics and the logs>
)";

inline constexpr std::string_view kRepairPrompt =
    R"(Your previous answer could not be parsed. Reply again using only the requested "key: value"
lines, one per line, with no other text.
)";

struct PromptTemplates {
  std::string metrics_agent{kDefaultMetricsPrompt};
  std::string log_agent{kDefaultLogPrompt};
  std::string decision_maker{kDecidePrompt};
  std::string repair{kRepairPrompt};

  /// Reads <dir>/{metrics_agent,log_agent,decision_maker,repair}.txt; files
  /// that are absent keep the compiled-in text.
  static PromptTemplates load(const std::filesystem::path& dir) {
    PromptTemplates p;
    auto read = [&](const char* name, std::string& out) {
      const auto path = dir / (std::string(name) + ".txt");
      if (std::filesystem::exists(path)) out = read_text_file(path);
    };
    read("metrics_agent", p.metrics_agent);
    read("log_agent", p.log_agent);
    read("decision_maker", p.decision_maker);
    read("repair", p.repair);
    return p;
  }
};

struct AgentContext {
  Ruleset ruleset = default_ruleset();
  PromptTemplates prompts;
};

// ---------------------------------------------------------------------------
// Rendering

/// Shortest text that parses back to exactly `v`.
inline std::string format_sample(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw Error("format_sample: cannot format value");
  return std::string(buf, end);
}

inline std::string format_findings(const std::vector<Finding>& findings) {
  if (findings.empty()) return "none";
  std::string out;
  for (const auto& f : findings) {
    if (!out.empty()) out += ", ";
    out += std::string(to_string(f.metric)) + "=" + std::string(to_string(f.pattern));
  }
  return out;
}

inline std::string render_metrics_section(const std::vector<MetricSeries>& metrics) {
  std::string out = "## metrics\n";
  for (const auto& m : metrics) {
    out += std::string(to_string(m.name)) + " (" + m.unit + ", every " + std::to_string(m.interval_seconds) + "s): ";
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      if (i) out += ", ";
      out += format_sample(m.values[i]);
    }
    out += "\n";
  }
  return out;
}

inline std::string render_hypothesis_section(const DetectionHypothesis& h) {
  return "## metric hypothesis\nanomaly_detected: " + std::string(h.anomaly_detected ? "true" : "false") +
         "\nfindings: " + format_findings(h.findings) + "\n";
}

inline std::string render_logs_section(const std::vector<LogEntry>& logs) {
  std::string out = "## logs\n";
  for (const auto& e : logs) out += "[t+" + std::to_string(e.timestamp) + "s] " + e.text + "\n";
  return out;
}

inline std::string render_assessment_section(const LogAssessment& a) {
  std::string out = "## log assessment\npossibility: " + std::string(to_string(a.possibility)) + "\n";
  out += "candidate_type: " + (a.candidate_type ? std::string(to_string(*a.candidate_type)) : "none") + "\n";
  for (const auto& e : a.evidence) out += "evidence: " + e + "\n";
  return out;
}

inline AgentPrompt metrics_prompt(const std::vector<MetricSeries>& metrics, const PromptTemplates& p) {
  return {p.metrics_agent, render_metrics_section(metrics), OutputSchema::hypothesis};
}

inline AgentPrompt log_prompt(const std::vector<LogEntry>& logs, const DetectionHypothesis& h,
                              const PromptTemplates& p) {
  return {p.log_agent, render_hypothesis_section(h) + render_logs_section(logs), OutputSchema::assessment};
}

inline AgentPrompt decide_prompt(const DetectionHypothesis& h, const LogAssessment& a, const PromptTemplates& p) {
  return {p.decision_maker, render_hypothesis_section(h) + render_assessment_section(a), OutputSchema::verdict};
}

inline AgentPrompt retest_prompt(const DetectionHypothesis& h, const LogAssessment& a, const RetestRequest& req,
                                 const PromptTemplates& p) {
  auto prompt = decide_prompt(h, a, p);
  auto& u = prompt.user_text;
  u += "## previous answer\nis_anomaly: " + std::string(req.previous.is_anomaly ? "true" : "false") + "\n";
  u += "anomaly_type: " +
       (req.previous.anomaly_type ? std::string(to_string(*req.previous.anomaly_type)) : "none") + "\n";
  u += "## verifier feedback\nattempt: " + std::to_string(req.attempt) + "\n";
  if (req.previous.is_anomaly && req.previous.anomaly_type)
    u += "rejected_type: " + std::string(to_string(*req.previous.anomaly_type)) + "\n";
  if (req.suggested_type) u += "suggested_type: " + std::string(to_string(*req.suggested_type)) + "\n";
  for (const auto& item : req.feedback) u += "- " + item + "\n";
  return prompt;
}

inline AgentPrompt repair_prompt(const AgentPrompt& original, const std::string& bad_output,
                                 const PromptTemplates& p) {
  AgentPrompt out = original;
  out.user_text += "## unparseable answer\n" + bad_output + "\n## repair\n" + p.repair;
  return out;
}

// ---------------------------------------------------------------------------
// Tolerant key-value reader

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string lower(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

inline std::string strip_quotes(std::string s) {
  s = trim(s);
  while (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') || (s.front() == '`' && s.back() == '`') ||
                           (s.front() == '\'' && s.back() == '\'')))
    s = trim(s.substr(1, s.size() - 2));
  return s;
}

inline std::optional<bool> parse_bool(const std::string& raw) {
  const auto v = lower(strip_quotes(raw));
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  return std::nullopt;
}

/// Enum value from free text: exact spelling, case-insensitive, spaces and
/// hyphens read as underscores.
template <class E>
std::optional<E> parse_enum_loose(const std::string& raw) {
  auto v = lower(strip_quotes(raw));
  for (auto& ch : v)
    if (ch == ' ' || ch == '-') ch = '_';
  return parse_enum<E>(v);
}

inline bool is_none(const std::string& raw) {
  const auto v = lower(strip_quotes(raw));
  return v.empty() || v == "none" || v == "null" || v == "n/a" || v == "-";
}

}  // namespace detail

/// Case-insensitive "key: value" lines; markdown fences, bullets and bold
/// markers are ignored, repeated keys accumulate in order.
class KeyValueReply {
 public:
  explicit KeyValueReply(std::string_view text) {
    std::istringstream in{std::string(text)};
    for (std::string line; std::getline(in, line);) {
      auto t = detail::trim(line);
      if (t.starts_with("```")) continue;
      while (!t.empty() && (t.front() == '-' || t.front() == '*')) t = detail::trim(t.substr(1));
      const auto colon = t.find(':');
      if (colon == std::string::npos) continue;
      auto key = detail::lower(detail::trim(t.substr(0, colon)));
      std::erase(key, '*');
      for (auto& ch : key)
        if (ch == ' ' || ch == '-') ch = '_';
      if (key.empty()) continue;
      values_[key].push_back(detail::trim(t.substr(colon + 1)));
    }
  }

  const std::string* first(const std::string& key) const {
    auto it = values_.find(key);
    return it == values_.end() || it->second.empty() ? nullptr : &it->second.front();
  }

  std::vector<std::string> all(const std::string& key) const {
    auto it = values_.find(key);
    return it == values_.end() ? std::vector<std::string>{} : it->second;
  }

 private:
  std::map<std::string, std::vector<std::string>> values_;
};

inline std::optional<std::vector<Finding>> parse_findings(const std::string& raw) {
  std::vector<Finding> out;
  if (detail::is_none(raw)) return out;
  std::string item;
  std::istringstream in(raw);
  while (std::getline(in, item, ',')) {
    item = detail::trim(item);
    if (item.empty()) continue;
    auto sep = item.find_first_of("=:");
    if (sep == std::string::npos) sep = item.find(' ');
    if (sep == std::string::npos) return std::nullopt;
    auto metric = detail::parse_enum_loose<MetricName>(item.substr(0, sep));
    auto pattern = detail::parse_enum_loose<PatternType>(item.substr(sep + 1));
    if (!metric || !pattern) return std::nullopt;
    Finding f{*metric, *pattern};
    if (std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
  }
  return out;
}

inline std::optional<DetectionHypothesis> parse_hypothesis(std::string_view text) {
  KeyValueReply kv(text);
  const auto* detected = kv.first("anomaly_detected");
  if (!detected) return std::nullopt;
  auto flag = detail::parse_bool(*detected);
  if (!flag) return std::nullopt;
  DetectionHypothesis h;
  h.anomaly_detected = *flag;
  if (const auto* f = kv.first("findings")) {
    auto findings = parse_findings(*f);
    if (!findings) return std::nullopt;
    h.findings = std::move(*findings);
  }
  if (h.anomaly_detected == h.findings.empty()) return std::nullopt;
  if (const auto* r = kv.first("rationale")) h.raw_rationale = *r;
  return h;
}

/// Evidence lines that are not verbatim parts of the case logs are dropped.
inline std::optional<LogAssessment> parse_assessment(std::string_view text, const std::vector<LogEntry>& logs) {
  KeyValueReply kv(text);
  const auto* p = kv.first("possibility");
  if (!p) return std::nullopt;
  auto possibility = detail::parse_enum_loose<Possibility>(*p);
  if (!possibility) return std::nullopt;
  LogAssessment a;
  a.possibility = *possibility;
  if (const auto* c = kv.first("candidate_type"); c && !detail::is_none(*c)) {
    a.candidate_type = detail::parse_enum_loose<AnomalyType>(*c);
    if (!a.candidate_type) return std::nullopt;
  }
  for (auto e : kv.all("evidence")) {
    e = detail::strip_quotes(e);
    if (e.starts_with("[t+")) {
      if (auto close = e.find("] "); close != std::string::npos) e = e.substr(close + 2);
    }
    if (e.empty()) continue;
    const bool verbatim = std::any_of(logs.begin(), logs.end(),
                                      [&](const LogEntry& l) { return l.text.find(e) != std::string::npos; });
    if (verbatim && std::find(a.evidence.begin(), a.evidence.end(), e) == a.evidence.end())
      a.evidence.push_back(std::move(e));
  }
  if (const auto* r = kv.first("rationale")) a.raw_rationale = *r;
  return a;
}

inline std::optional<Verdict> parse_verdict(std::string_view text) {
  KeyValueReply kv(text);
  const auto* flag_text = kv.first("is_anomaly");
  if (!flag_text) return std::nullopt;
  auto flag = detail::parse_bool(*flag_text);
  if (!flag) return std::nullopt;
  std::optional<AnomalyType> type;
  if (const auto* t = kv.first("anomaly_type"); t && !detail::is_none(*t)) {
    type = detail::parse_enum_loose<AnomalyType>(*t);
    if (!type) return std::nullopt;
  }
  if (*flag != type.has_value()) return std::nullopt;
  std::string explanation;
  if (const auto* e = kv.first("explanation")) explanation = *e;
  return *flag ? Verdict::anomaly(*type, explanation) : Verdict::normal(explanation);
}

// ---------------------------------------------------------------------------
// Rule-derived answers (fallbacks and the symbolic pipeline)

inline constexpr std::string_view kFallbackNote = "[rule-derived fallback]";

inline DetectionHypothesis symbolic_hypothesis(const std::vector<MetricSeries>& metrics,
                                               const PatternConfig& config) {
  DetectionHypothesis h;
  for (const auto& m : metrics) {
    if (m.values.size() < kMinPatternLength) continue;
    if (auto p = classify_pattern(m, config)) h.findings.push_back({m.name, *p});
  }
  h.anomaly_detected = !h.findings.empty();
  h.raw_rationale = h.anomaly_detected ? "pattern classifier found " + format_findings(h.findings)
                                       : "pattern classifier found no pattern";
  return h;
}

/// Types whose log signature holds, in enum order.
inline std::vector<AnomalyType> log_matching_types(const std::vector<LogEntry>& logs, const Ruleset& ruleset) {
  std::vector<AnomalyType> out;
  for (auto t : kAnomalyTypes)
    if (verify_log(logs, t, ruleset).passed) out.push_back(t);
  return out;
}

inline bool findings_cover(const DetectionHypothesis& h, const RuleSpec& spec) {
  return std::all_of(spec.metric_predicates.begin(), spec.metric_predicates.end(), [&](const MetricPredicate& p) {
    return std::find(h.findings.begin(), h.findings.end(), Finding{p.metric, p.required_pattern}) !=
           h.findings.end();
  });
}

/// High iff some type's full log signature matches. The candidate is the
/// first such type whose metric patterns appear in the findings, else the
/// first such type.
inline LogAssessment symbolic_assessment(const std::vector<LogEntry>& logs, const DetectionHypothesis& h,
                                         const Ruleset& ruleset) {
  LogAssessment a;
  const auto types = log_matching_types(logs, ruleset);
  if (types.empty()) {
    a.raw_rationale = "no anomaly log signature matches";
    return a;
  }
  auto it = std::find_if(types.begin(), types.end(), [&](AnomalyType t) { return findings_cover(h, ruleset.at(t)); });
  const auto type = it != types.end() ? *it : types.front();
  a.possibility = Possibility::high;
  a.candidate_type = type;
  a.evidence = verify_log(logs, type, ruleset).matched_evidence;
  a.raw_rationale = "log signature of " + std::string(to_string(type)) + " matches";
  return a;
}

inline std::string verdict_explanation(const DetectionHypothesis& h, const LogAssessment& a,
                                       const std::optional<AnomalyType>& type) {
  std::string out = "metrics: " + format_findings(h.findings) + "; logs: " + std::string(to_string(a.possibility));
  if (!a.evidence.empty()) out += " (\"" + a.evidence.front() + "\")";
  out += type ? "; verdict " + std::string(to_string(*type)) : "; verdict normal";
  return out;
}

inline Verdict symbolic_decision(const DetectionHypothesis& h, const LogAssessment& a,
                                 const std::vector<AnomalyType>& rejected = {}) {
  if (!h.anomaly_detected) return Verdict::normal("no metric anomaly detected");
  const bool usable = a.candidate_type &&
                      std::find(rejected.begin(), rejected.end(), *a.candidate_type) == rejected.end();
  if (a.possibility == Possibility::high && usable)
    return Verdict::anomaly(*a.candidate_type, verdict_explanation(h, a, a.candidate_type));
  return Verdict::normal(verdict_explanation(h, a, std::nullopt));
}

inline Verdict symbolic_retest(const DetectionHypothesis& h, const LogAssessment& a, const RetestRequest& req) {
  if (req.suggested_type) return Verdict::anomaly(*req.suggested_type, verdict_explanation(h, a, req.suggested_type));
  std::vector<AnomalyType> rejected;
  if (req.previous.anomaly_type) rejected.push_back(*req.previous.anomaly_type);
  auto v = symbolic_decision(h, a, rejected);
  if (!h.anomaly_detected) v.explanation = verdict_explanation(h, a, std::nullopt);
  return v;
}

// ---------------------------------------------------------------------------
// Agents

/// How an agent answer was obtained.
enum class AnswerSource { backend, repaired, fallback, skipped };

template <>
struct EnumNames<AnswerSource> {
  static constexpr std::array<std::pair<AnswerSource, std::string_view>, 4> values{{
      {AnswerSource::backend, "backend"},
      {AnswerSource::repaired, "repaired"},
      {AnswerSource::fallback, "fallback"},
      {AnswerSource::skipped, "skipped"},
  }};
};

namespace detail {

/// Asks, re-asks once with a repair instruction, then gives up.
template <class T, class Parse>
std::pair<std::optional<T>, AnswerSource> ask(Backend& backend, const AgentPrompt& prompt,
                                              const PromptTemplates& p, Parse parse) {
  const std::string first = backend.complete(prompt);
  if (auto v = parse(first)) return {std::move(v), AnswerSource::backend};
  const std::string second = backend.complete(repair_prompt(prompt, first, p));
  if (auto v = parse(second)) return {std::move(v), AnswerSource::repaired};
  return {std::nullopt, AnswerSource::fallback};
}

}  // namespace detail

template <class T>
struct AgentAnswer {
  T value;
  AnswerSource source = AnswerSource::backend;
};

inline AgentAnswer<DetectionHypothesis> metrics_agent_detect(const std::vector<MetricSeries>& metrics,
                                                             Backend& backend, const AgentContext& ctx) {
  if (metrics.empty()) throw Error("metrics_agent_detect: metric window is empty");
  auto [h, source] = detail::ask<DetectionHypothesis>(backend, metrics_prompt(metrics, ctx.prompts), ctx.prompts,
                                                      [](const std::string& s) { return parse_hypothesis(s); });
  if (h) return {std::move(*h), source};
  auto fb = symbolic_hypothesis(metrics, ctx.ruleset.pattern_config());
  fb.raw_rationale = std::string(kFallbackNote) + " " + fb.raw_rationale;
  return {std::move(fb), AnswerSource::fallback};
}

inline AgentAnswer<LogAssessment> log_agent_assess(const std::vector<LogEntry>& logs, const DetectionHypothesis& h,
                                                   Backend& backend, const AgentContext& ctx) {
  if (logs.empty()) return {LogAssessment{Possibility::low, {}, std::nullopt, "no log lines"}, AnswerSource::skipped};
  auto [a, source] = detail::ask<LogAssessment>(backend, log_prompt(logs, h, ctx.prompts), ctx.prompts,
                                                [&](const std::string& s) { return parse_assessment(s, logs); });
  if (a) return {std::move(*a), source};
  auto fb = symbolic_assessment(logs, h, ctx.ruleset);
  fb.raw_rationale = std::string(kFallbackNote) + " " + fb.raw_rationale;
  return {std::move(fb), AnswerSource::fallback};
}

inline AgentAnswer<Verdict> decide(const DetectionHypothesis& h, const LogAssessment& a, Backend& backend,
                                   const AgentContext& ctx) {
  if (!h.anomaly_detected) return {Verdict::normal("no metric anomaly detected"), AnswerSource::skipped};
  auto [v, source] = detail::ask<Verdict>(backend, decide_prompt(h, a, ctx.prompts), ctx.prompts,
                                          [](const std::string& s) { return parse_verdict(s); });
  if (v) return {std::move(*v), source};
  return {symbolic_decision(h, a), AnswerSource::fallback};
}

inline AgentAnswer<Verdict> decide_retest(const DetectionHypothesis& h, const LogAssessment& a,
                                          const RetestRequest& req, Backend& backend, const AgentContext& ctx) {
  auto [v, source] = detail::ask<Verdict>(backend, retest_prompt(h, a, req, ctx.prompts), ctx.prompts,
                                          [](const std::string& s) { return parse_verdict(s); });
  if (v) return {std::move(*v), source};
  return {symbolic_retest(h, a, req), AnswerSource::fallback};
}

/// The whole detector with every agent replaced by its rule-derived answer.
inline Verdict symbolic_detect(const CaseRecord& c, const Ruleset& ruleset) {
  const auto h = symbolic_hypothesis(c.metrics, ruleset.pattern_config());
  if (!h.anomaly_detected) return Verdict::normal("no metric anomaly detected");
  const auto a = c.logs.empty() ? LogAssessment{Possibility::low, {}, std::nullopt, "no log lines"}
                                : symbolic_assessment(c.logs, h, ruleset);
  return symbolic_decision(h, a);
}

}  // namespace cloudano
