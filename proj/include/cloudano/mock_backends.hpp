#pragma once

// Offline backends. The oracle answers every agent prompt with what the
// symbolic ruleset implies for the evidence in that prompt, never the label.

#include <atomic>
#include <deque>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "cloudano/agents.hpp"
#include "cloudano/backend.hpp"
#include "cloudano/rng.hpp"

namespace cloudano {

inline std::string render_hypothesis_reply(const DetectionHypothesis& h) {
  return "anomaly_detected: " + std::string(h.anomaly_detected ? "true" : "false") +
         "\nfindings: " + format_findings(h.findings) + "\nrationale: " + h.raw_rationale + "\n";
}

inline std::string render_assessment_reply(const LogAssessment& a) {
  std::string out = "possibility: " + std::string(to_string(a.possibility)) + "\n";
  out += "candidate_type: " + (a.candidate_type ? std::string(to_string(*a.candidate_type)) : "none") + "\n";
  for (const auto& e : a.evidence) out += "evidence: " + e + "\n";
  out += "rationale: " + a.raw_rationale + "\n";
  return out;
}

inline std::string render_verdict_reply(const Verdict& v) {
  return "is_anomaly: " + std::string(v.is_anomaly ? "true" : "false") + "\nanomaly_type: " +
         (v.anomaly_type ? std::string(to_string(*v.anomaly_type)) : "none") + "\nexplanation: " + v.explanation +
         "\n";
}

namespace detail {

/// "## name" headed sections of a rendered prompt; the first occurrence of
/// a name wins so appended repair text cannot shadow the evidence.
inline std::map<std::string, std::vector<std::string>> prompt_sections(const std::string& text) {
  std::map<std::string, std::vector<std::string>> out;
  std::vector<std::string>* current = nullptr;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    if (line.starts_with("## ")) {
      auto [it, inserted] = out.try_emplace(line.substr(3));
      current = inserted ? &it->second : nullptr;
      continue;
    }
    if (current) current->push_back(line);
  }
  return out;
}

inline std::vector<std::string> section(const std::map<std::string, std::vector<std::string>>& s,
                                        const std::string& name) {
  auto it = s.find(name);
  return it == s.end() ? std::vector<std::string>{} : it->second;
}

inline std::vector<MetricSeries> metrics_from_prompt(const std::vector<std::string>& lines) {
  std::vector<MetricSeries> out;
  for (const auto& line : lines) {
    const auto open = line.find(" (");
    const auto colon = line.find("): ");
    if (open == std::string::npos || colon == std::string::npos) continue;
    auto name = parse_enum<MetricName>(line.substr(0, open));
    if (!name) continue;
    MetricSeries m;
    m.name = *name;
    std::istringstream values(line.substr(colon + 3));
    for (std::string item; std::getline(values, item, ',');) {
      item = trim(item);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || ptr != item.data() + item.size()) throw Error("oracle: unreadable sample '" + item + "'");
      m.values.push_back(v);
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline std::vector<LogEntry> logs_from_prompt(const std::vector<std::string>& lines) {
  std::vector<LogEntry> out;
  for (const auto& line : lines) {
    if (!line.starts_with("[t+")) continue;
    const auto close = line.find("s] ");
    if (close == std::string::npos) continue;
    out.push_back({std::stoll(line.substr(3, close - 3)), line.substr(close + 3)});
  }
  return out;
}

inline std::string value_after(const std::string& line, std::string_view key) {
  return line.starts_with(key) ? line.substr(key.size()) : std::string();
}

inline DetectionHypothesis hypothesis_from_prompt(const std::vector<std::string>& lines) {
  DetectionHypothesis h;
  for (const auto& line : lines) {
    if (line.starts_with("findings: ")) {
      if (auto f = parse_findings(value_after(line, "findings: "))) h.findings = *f;
    }
  }
  h.anomaly_detected = !h.findings.empty();
  return h;
}

inline LogAssessment assessment_from_prompt(const std::vector<std::string>& lines) {
  LogAssessment a;
  for (const auto& line : lines) {
    if (line.starts_with("possibility: "))
      a.possibility = parse_enum<Possibility>(value_after(line, "possibility: ")).value_or(Possibility::low);
    else if (line.starts_with("candidate_type: "))
      a.candidate_type = parse_enum<AnomalyType>(value_after(line, "candidate_type: "));
    else if (line.starts_with("evidence: "))
      a.evidence.push_back(value_after(line, "evidence: "));
  }
  return a;
}

}  // namespace detail

class OracleBackend : public Backend {
 public:
  explicit OracleBackend(Ruleset ruleset = default_ruleset()) : ruleset_(std::move(ruleset)) {}

  std::string complete(const AgentPrompt& prompt) override {
    const auto s = detail::prompt_sections(prompt.user_text);
    switch (prompt.expected_schema) {
      case OutputSchema::hypothesis: {
        const auto metrics = detail::metrics_from_prompt(detail::section(s, "metrics"));
        return render_hypothesis_reply(symbolic_hypothesis(metrics, ruleset_.pattern_config()));
      }
      case OutputSchema::assessment: {
        const auto h = detail::hypothesis_from_prompt(detail::section(s, "metric hypothesis"));
        const auto logs = detail::logs_from_prompt(detail::section(s, "logs"));
        return render_assessment_reply(symbolic_assessment(logs, h, ruleset_));
      }
      case OutputSchema::verdict: {
        const auto h = detail::hypothesis_from_prompt(detail::section(s, "metric hypothesis"));
        const auto a = detail::assessment_from_prompt(detail::section(s, "log assessment"));
        if (!s.contains("verifier feedback")) return render_verdict_reply(symbolic_decision(h, a));
        RetestRequest req;
        for (const auto& line : detail::section(s, "verifier feedback")) {
          if (line.starts_with("suggested_type: "))
            req.suggested_type = parse_enum<AnomalyType>(detail::value_after(line, "suggested_type: "));
          else if (line.starts_with("rejected_type: "))
            if (auto t = parse_enum<AnomalyType>(detail::value_after(line, "rejected_type: ")))
              req.previous = Verdict::anomaly(*t, "");
        }
        return render_verdict_reply(symbolic_retest(h, a, req));
      }
      case OutputSchema::rewrite:
        return prompt.user_text;
    }
    return {};
  }

  const Ruleset& ruleset() const { return ruleset_; }

 private:
  Ruleset ruleset_;
};

/// Oracle whose first-pass decisions are corrupted on a fixed share of
/// prompts: an anomaly answer gets a different type, a normal answer gets a
/// random type. Retests are answered correctly.
class NoisyBackend : public Backend {
 public:
  explicit NoisyBackend(double corrupt_rate = 0.3, std::uint64_t seed = 0, Ruleset ruleset = default_ruleset())
      : oracle_(std::move(ruleset)), rate_(corrupt_rate), seed_(seed) {
    if (!(rate_ >= 0.0 && rate_ <= 1.0)) throw Error("noisy backend: corrupt rate must lie in [0,1]");
  }

  std::string complete(const AgentPrompt& prompt) override {
    std::string reply = oracle_.complete(prompt);
    if (prompt.expected_schema != OutputSchema::verdict) return reply;
    if (prompt.user_text.find("## verifier feedback") != std::string::npos) return reply;
    const std::uint64_t h = mix_seed(seed_, stable_hash(prompt.user_text));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    if (u >= rate_) return reply;
    auto v = parse_verdict(reply);
    if (!v) return reply;
    const std::size_t n = kAnomalyTypes.size();
    const std::size_t r = static_cast<std::size_t>(mix_seed(h, 1) % n);
    AnomalyType corrupted;
    if (v->anomaly_type) {
      const auto current = static_cast<std::size_t>(*v->anomaly_type);
      corrupted = kAnomalyTypes[(current + 1 + r % (n - 1)) % n];
    } else {
      corrupted = kAnomalyTypes[r];
    }
    return render_verdict_reply(Verdict::anomaly(corrupted, "the evidence points to " +
                                                                std::string(to_string(corrupted))));
  }

 private:
  OracleBackend oracle_;
  double rate_;
  std::uint64_t seed_;
};

class ConstantBackend : public Backend {
 public:
  explicit ConstantBackend(std::string reply) : reply_(std::move(reply)) {}
  std::string complete(const AgentPrompt&) override { return reply_; }

 private:
  std::string reply_;
};

class GarbageBackend : public Backend {
 public:
  std::string complete(const AgentPrompt&) override { return "¯\\_(ツ)_/¯ I am not sure what you mean."; }
};

class EchoBackend : public Backend {
 public:
  std::string complete(const AgentPrompt& prompt) override { return prompt.user_text; }
};

/// Replays scripted replies in order, repeating the last one, and keeps
/// every prompt it saw.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {
    if (replies_.empty()) throw Error("scripted backend needs at least one reply");
  }

  std::string complete(const AgentPrompt& prompt) override {
    std::lock_guard lock(mutex_);
    prompts_.push_back(prompt);
    const auto i = std::min(next_++, replies_.size() - 1);
    return replies_[i];
  }

  std::vector<AgentPrompt> prompts() const {
    std::lock_guard lock(mutex_);
    return prompts_;
  }

 private:
  std::vector<std::string> replies_;
  std::size_t next_ = 0;
  mutable std::mutex mutex_;
  std::vector<AgentPrompt> prompts_;
};

/// Counts calls per output schema and forwards them.
class CountingBackend : public Backend {
 public:
  explicit CountingBackend(Backend& inner) : inner_(inner) {}

  std::string complete(const AgentPrompt& prompt) override {
    counts_[static_cast<std::size_t>(prompt.expected_schema)].fetch_add(1);
    return inner_.complete(prompt);
  }

  int calls(OutputSchema s) const { return counts_[static_cast<std::size_t>(s)].load(); }
  int total() const {
    int sum = 0;
    for (const auto& c : counts_) sum += c.load();
    return sum;
  }

 private:
  Backend& inner_;
  std::array<std::atomic<int>, 4> counts_{};
};

}  // namespace cloudano
