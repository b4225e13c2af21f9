#pragma once

// Fast detection, event-driven slow detection, and the symbolic verifier
// wired into one detector.

#include <optional>
#include <string>

#include "cloudano/agents.hpp"
#include "cloudano/verifier.hpp"

namespace cloudano {

struct PipelineOptions {
  bool use_verifier = true;
  int max_retries = kDefaultMaxRetries;
};

struct PipelineResult {
  DetectionHypothesis hypothesis;
  AnswerSource hypothesis_source = AnswerSource::backend;
  std::optional<LogAssessment> assessment;  // absent when fast detection saw nothing
  AnswerSource assessment_source = AnswerSource::skipped;
  Verdict initial;
  AnswerSource decision_source = AnswerSource::skipped;
  FinalVerdict final;
};

inline PipelineResult run_pipeline(const CaseRecord& c, Backend& backend, const AgentContext& ctx,
                                   const PipelineOptions& options = {}) {
  PipelineResult r;
  auto h = metrics_agent_detect(c.metrics, backend, ctx);
  r.hypothesis = std::move(h.value);
  r.hypothesis_source = h.source;

  LogAssessment assessment{Possibility::low, {}, std::nullopt, "slow detection not triggered"};
  if (r.hypothesis.anomaly_detected) {
    auto a = log_agent_assess(c.logs, r.hypothesis, backend, ctx);
    assessment = a.value;
    r.assessment = std::move(a.value);
    r.assessment_source = a.source;
  }
  auto d = decide(r.hypothesis, assessment, backend, ctx);
  r.initial = std::move(d.value);
  r.decision_source = d.source;

  if (!options.use_verifier) {
    r.final = FinalVerdict{r.initial, VerdictStatus::accepted, 0, {}};
    return r;
  }
  RetestFn retest = [&](const RetestRequest& req) {
    return decide_retest(r.hypothesis, assessment, req, backend, ctx).value;
  };
  r.final = verify_and_critic(r.initial, c, ctx.ruleset, retest, options.max_retries);
  return r;
}

}  // namespace cloudano
