#pragma once

// SRE-facing anomaly reports rendered from a final verdict and the case
// evidence, with a per-type remediation playbook.

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cloudano/agents.hpp"
#include "cloudano/backend.hpp"
#include "cloudano/case_io.hpp"
#include "cloudano/verifier.hpp"

namespace cloudano {

struct AnomalyReport {
  std::string case_id;
  std::string status;  // accepted | corrected | abstained
  std::optional<AnomalyType> anomaly_type;
  std::string summary;
  std::vector<std::string> reasoning_chain;
  std::string root_cause;
  std::vector<std::string> remediation;
  std::vector<std::string> verifier_trace;
  std::vector<std::string> evidence;  // verbatim log lines cited
  bool unverified = false;
};

struct PlaybookEntry {
  std::string_view description;
  std::vector<std::string_view> actions;
};

inline const std::map<AnomalyType, PlaybookEntry>& remediation_playbook() {
  static const std::map<AnomalyType, PlaybookEntry> book{
      {AnomalyType::mine,
       {"crypto-mining malware",
        {"Kill the miner process and block the mining pool domain at egress",
         "Remove the malicious CRON entry and the dropped binary",
         "Rotate credentials of the account that installed the job",
         "Audit the host for other persistence mechanisms"}}},
      {AnomalyType::oom,
       {"memory exhaustion ending in an out-of-memory kill",
        {"Restart the affected service with heap headroom",
         "Capture a heap dump and locate the leaking allocation",
         "Set memory limits and alert on garbage-collection overhead"}}},
      {AnomalyType::gpu_hijack,
       {"GPU hijacking by an unregistered container",
        {"Stop and remove the unknown container",
         "Revoke the registry or runtime credentials used to launch it",
         "Restrict GPU device access to approved workloads"}}},
      {AnomalyType::port_scan,
       {"external port scan",
        {"Block the scanning source at the firewall", "Review services exposed on the probed ports",
         "Enable connection rate limiting on the edge"}}},
      {AnomalyType::icmp_flood_dos,
       {"ICMP flood denial of service",
        {"Rate-limit or drop ICMP echo requests at the edge", "Block the flooding sources upstream",
         "Engage the provider's DDoS mitigation"}}},
      {AnomalyType::dns_amplification,
       {"DNS amplification abuse",
        {"Refuse recursion and ANY queries from external clients", "Stop forwarding to open resolvers",
         "Enable response rate limiting on the DNS server"}}},
      {AnomalyType::data_exfiltration,
       {"data exfiltration to an external host",
        {"Block the destination host and isolate the machine",
         "Revoke credentials of the user who ran the transfer",
         "Determine which data left and open an incident"}}},
      {AnomalyType::arp_spoofing,
       {"ARP spoofing on the local network",
        {"Locate and disconnect the host owning the rogue MAC address",
         "Pin static ARP entries for the gateway", "Enable dynamic ARP inspection on the switch"}}},
      {AnomalyType::log_storm,
       {"log storm from crawler traffic",
        {"Block or rate-limit the crawler addresses", "Tighten log rate limiting for the web tier",
         "Add crawler rules to the web application firewall"}}},
      {AnomalyType::log_growth_anomaly,
       {"runaway log volume growth from an unrotated backup",
        {"Move backup output off the log volume", "Fix the rotation policy so archives are rotated",
         "Alert on log volume usage"}}},
  };
  return book;
}

namespace detail {

inline std::string describe_metric(const MetricSeries& m, PatternType p) {
  const auto f = extract_features(m);
  return std::string(to_string(m.name)) + " shows a " + std::string(to_string(p)) + " (min " + fmt_number(f.min) +
         ", max " + fmt_number(f.max) + ", mean " + fmt_number(f.mean) + " " + m.unit + ")";
}

/// Log lines within two sampling intervals of the earliest pattern onset.
inline std::vector<std::string> onset_aligned_lines(const CaseRecord& c, const PatternConfig& config,
                                                    std::size_t limit = 3) {
  std::optional<std::int64_t> onset;
  int interval = 5;
  for (const auto& m : c.metrics) {
    interval = m.interval_seconds;
    if (m.values.size() < kMinPatternLength) continue;
    if (auto i = detect_onset(m, config)) {
      const auto t = static_cast<std::int64_t>(*i) * m.interval_seconds;
      if (!onset || t < *onset) onset = t;
    }
  }
  std::vector<std::string> out;
  if (!onset) return out;
  for (const auto& e : c.logs) {
    if (e.timestamp + 2 * interval >= *onset && e.timestamp <= *onset + 2 * interval) out.push_back(e.text);
    if (out.size() >= limit) break;
  }
  return out;
}

}  // namespace detail

inline AnomalyReport render_report(const CaseRecord& c, const FinalVerdict& final, const Ruleset& ruleset,
                                   std::optional<DetectionHypothesis> hypothesis = std::nullopt) {
  const auto& config = ruleset.pattern_config();
  const auto h = hypothesis ? *hypothesis : symbolic_hypothesis(c.metrics, config);
  const auto& v = final.verdict;

  AnomalyReport r;
  r.case_id = c.id;
  r.status = std::string(to_string(final.status));
  r.anomaly_type = v.anomaly_type;
  r.unverified = final.status == VerdictStatus::abstained;

  for (const auto& f : h.findings) {
    if (const auto* m = c.find_metric(f.metric)) r.reasoning_chain.push_back("metric finding: " + detail::describe_metric(*m, f.pattern));
  }
  if (h.findings.empty()) r.reasoning_chain.push_back("metric finding: no canonical pattern in the window");

  if (v.is_anomaly && v.anomaly_type) {
    const auto t = *v.anomaly_type;
    const std::string name(to_string(t));
    const auto& entry = remediation_playbook().at(t);
    const auto metric = verify_metric(c.metrics, t, ruleset);
    const auto log = verify_log(c.logs, t, ruleset);
    r.evidence = log.matched_evidence;
    for (const auto& e : r.evidence) r.reasoning_chain.push_back("log evidence: \"" + e + "\"");
    r.reasoning_chain.push_back("verification: metric check " + std::string(metric.passed ? "passed" : "failed") +
                                ", log check " + std::string(log.passed ? "passed" : "failed"));
    for (const auto& e : metric.matched_evidence) r.verifier_trace.push_back("passed: " + name + " " + e);
    for (const auto& e : metric.failed_items) r.verifier_trace.push_back("failed: " + name + " " + e);
    for (const auto& re : ruleset.at(t).log_signature.must_match) {
      const bool hit = std::any_of(c.logs.begin(), c.logs.end(), [&](const LogEntry& e) { return re.matches(e.text); });
      r.verifier_trace.push_back(std::string(hit ? "passed" : "failed") + ": " + name + " log /" + re.source() + "/");
    }
    for (const auto& f : log.failed_items)
      if (f.find("benign explanation") != std::string::npos) r.verifier_trace.push_back("failed: " + name + " " + f);

    std::string evidence_text;
    if (!r.evidence.empty()) evidence_text = " Key evidence: \"" + r.evidence.front() + "\".";
    if (r.unverified) {
      r.summary = "Unverified hypothesis: " + name + " (" + std::string(entry.description) +
                  ") could not be confirmed by the symbolic verifier after " + std::to_string(final.retries_used) +
                  " retests." + evidence_text;
      r.root_cause = "unconfirmed: " + std::string(entry.description);
      r.remediation.push_back("Triage manually before acting; the failed checks are listed in the verifier trace");
    } else {
      r.summary = "Anomaly detected: " + name + " (" + std::string(entry.description) + ")." + evidence_text;
      r.root_cause = std::string(entry.description);
      if (!r.evidence.empty()) r.root_cause += ", indicated by \"" + r.evidence.front() + "\"";
    }
    for (auto a : entry.actions) r.remediation.emplace_back(a);
  } else {
    const auto context = detail::onset_aligned_lines(c, config);
    r.evidence = context;
    for (const auto& e : context) r.reasoning_chain.push_back("log context: \"" + e + "\"");
    r.reasoning_chain.push_back("verification: no anomaly type passes both metric and log checks");
    if (r.unverified) {
      r.summary = "Unverified hypothesis: the normal verdict conflicts with the symbolic verifier after " +
                  std::to_string(final.retries_used) + " retests.";
      r.root_cause = "unconfirmed";
      r.remediation.push_back("Triage manually before acting; the failed checks are listed in the verifier trace");
    } else if (h.findings.empty()) {
      r.summary = "No anomaly: all metrics stay within their normal behaviour.";
      r.root_cause = "none";
      r.remediation.push_back("No action required");
    } else {
      r.summary = "No anomaly: the " + format_findings(h.findings) +
                  " pattern is explained by benign activity in the logs.";
      if (!context.empty()) r.summary += " Benign context: \"" + context.front() + "\".";
      r.root_cause = context.empty() ? "benign activity without a matching anomaly signature"
                                     : "benign activity: \"" + context.front() + "\"";
      r.remediation.push_back("No action required; consider annotating the scheduled activity to suppress alerts");
    }
  }
  for (const auto& f : final.failed_checks) r.verifier_trace.push_back("failed: " + f);
  r.verifier_trace.push_back("status: " + r.status);
  r.verifier_trace.push_back("retries_used: " + std::to_string(final.retries_used));
  return r;
}

inline constexpr std::string_view kReportRewritePrompt =
    "Rewrite the incident summary below for an on-call engineer in clear prose. Keep every quoted log line "
    "and the anomaly type name exactly as written. Reply with the summary only.";

/// Replaces the summary with a backend rewrite when every cited log line and
/// the anomaly type name survive verbatim; otherwise keeps the template text.
/// Backend errors also keep the template text.
inline bool polish_report(AnomalyReport& report, Backend& backend) {
  std::string rewritten;
  try {
    rewritten = backend.complete({std::string(kReportRewritePrompt), report.summary, OutputSchema::rewrite});
  } catch (const Error&) {
    return false;
  }
  rewritten = detail::trim(rewritten);
  if (rewritten.empty() || rewritten.find('\n') != std::string::npos) return false;
  if (report.anomaly_type && rewritten.find(std::string(to_string(*report.anomaly_type))) == std::string::npos)
    return false;
  for (const auto& e : report.evidence) {
    if (report.summary.find(e) != std::string::npos && rewritten.find(e) == std::string::npos) return false;
  }
  report.summary = std::move(rewritten);
  return true;
}

inline std::string report_to_text(const AnomalyReport& r) {
  std::ostringstream out;
  out << "Case: " << r.case_id << "\n";
  out << "Status: " << r.status << (r.unverified ? " (unverified hypothesis)" : "") << "\n";
  out << "Anomaly type: " << (r.anomaly_type ? std::string(to_string(*r.anomaly_type)) : "none") << "\n\n";
  out << "Summary:\n  " << r.summary << "\n\nReasoning:\n";
  for (std::size_t i = 0; i < r.reasoning_chain.size(); ++i) out << "  " << i + 1 << ". " << r.reasoning_chain[i] << "\n";
  out << "\nRoot cause:\n  " << r.root_cause << "\n\nRemediation:\n";
  for (std::size_t i = 0; i < r.remediation.size(); ++i) out << "  " << i + 1 << ". " << r.remediation[i] << "\n";
  out << "\nVerifier trace:\n";
  for (const auto& t : r.verifier_trace) out << "  - " << t << "\n";
  return out.str();
}

inline ordered_json report_to_json(const AnomalyReport& r) {
  ordered_json j;
  j["case_id"] = r.case_id;
  j["status"] = r.status;
  j["unverified"] = r.unverified;
  j["anomaly_type"] = r.anomaly_type ? ordered_json(std::string(to_string(*r.anomaly_type))) : ordered_json(nullptr);
  j["summary"] = r.summary;
  j["reasoning_chain"] = r.reasoning_chain;
  j["root_cause"] = r.root_cause;
  j["remediation"] = r.remediation;
  j["evidence"] = r.evidence;
  j["verifier_trace"] = r.verifier_trace;
  return j;
}

}  // namespace cloudano
