#pragma once

// Command-line front end. cli_main is kept in a header so tests can drive
// every subcommand in-process.

#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cloudano/bench_gen.hpp"
#include "cloudano/harness.hpp"
#include "cloudano/http_backend.hpp"
#include "cloudano/mock_backends.hpp"
#include "cloudano/pipeline.hpp"
#include "cloudano/report.hpp"
#include "cloudano/ruleset.hpp"

namespace cloudano {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitBackend = 4;

namespace cli {

struct BackendFlags {
  std::string kind = "mock";  // mock | noisy | real
  double noise_rate = 0.3;
  std::uint64_t noise_seed = 0;
  BackendConfig config;
};

inline void add_backend_flags(CLI::App* cmd, BackendFlags& f) {
  cmd->add_option("--backend", f.kind, "mock (rule-derived oracle), noisy (oracle with corrupted decisions) or real")
      ->check(CLI::IsMember({"mock", "noisy", "real"}))
      ->capture_default_str();
  cmd->add_option("--noise-rate", f.noise_rate, "share of corrupted decisions for --backend noisy")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--noise-seed", f.noise_seed, "seed for --backend noisy")->capture_default_str();
  cmd->add_option("--endpoint", f.config.endpoint_url, "chat-completion endpoint URL")->capture_default_str();
  cmd->add_option("--model", f.config.model_name, "model name")->capture_default_str();
  cmd->add_option("--api-key-env", f.config.api_key_env, "environment variable holding the API key")
      ->capture_default_str();
  cmd->add_option("--timeout", f.config.timeout_seconds, "request timeout in seconds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--max-attempts", f.config.max_attempts, "attempts per request")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--temperature", f.config.temperature, "sampling temperature (vendor default when omitted)")
      ->check(CLI::NonNegativeNumber);
}

inline std::unique_ptr<Backend> make_backend(const BackendFlags& f, const Ruleset& ruleset) {
  if (f.kind == "mock") return std::make_unique<OracleBackend>(ruleset);
  if (f.kind == "noisy") return std::make_unique<NoisyBackend>(f.noise_rate, f.noise_seed, ruleset);
  return std::make_unique<HttpBackend>(f.config);
}

inline Ruleset load_ruleset(const std::string& path) {
  return path.empty() ? default_ruleset() : parse_ruleset(read_text_file(path));
}

inline AgentContext load_context(const std::string& ruleset_path, const std::string& prompts_dir) {
  AgentContext ctx;
  ctx.ruleset = load_ruleset(ruleset_path);
  if (!prompts_dir.empty()) ctx.prompts = PromptTemplates::load(prompts_dir);
  return ctx;
}

/// A single case file or every case of a dataset directory.
inline std::vector<CaseRecord> load_cases(const std::string& case_path, const std::string& dataset_dir) {
  if (!case_path.empty()) return {load_case(case_path)};
  return read_dataset(dataset_dir).cases;
}

inline void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-")
    out << text;
  else
    write_text_file(path, text);
}

inline ordered_json final_verdict_json(const std::string& case_id, const PipelineResult& r) {
  ordered_json j;
  j["case_id"] = case_id;
  j["is_anomaly"] = r.final.verdict.is_anomaly;
  j["anomaly_type"] = r.final.verdict.anomaly_type
                          ? ordered_json(std::string(to_string(*r.final.verdict.anomaly_type)))
                          : ordered_json(nullptr);
  j["status"] = std::string(to_string(r.final.status));
  j["retries_used"] = r.final.retries_used;
  j["failed_checks"] = r.final.failed_checks;
  j["findings"] = format_findings(r.hypothesis.findings);
  j["possibility"] = r.assessment ? ordered_json(std::string(to_string(r.assessment->possibility)))
                                  : ordered_json(nullptr);
  j["explanation"] = r.final.verdict.explanation;
  return j;
}

inline ordered_json check_json(const CheckResult& c) {
  ordered_json j;
  j["passed"] = c.passed;
  j["failed_items"] = c.failed_items;
  j["matched_evidence"] = c.matched_evidence;
  return j;
}

}  // namespace cli

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Neuro-symbolic anomaly detection over metric windows and system logs", "cloudano"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a labeled benchmark dataset");
  GenSpec spec;
  std::string gen_out, templates_path, dump_templates;
  bool augment = false;
  cli::BackendFlags gen_backend;
  gen->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output directory");
  gen->add_option("--anomaly-cases", spec.anomaly_cases, "number of anomaly cases")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen->add_option("--normal-cases", spec.normal_cases, "number of normal cases")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen->add_option("--easy-fraction", spec.easy_fraction, "share of easy cases")
      ->check(CLI::Range(0.0, 1.0));
  gen->add_option("--templates", templates_path, "scenario template file (default: built-in templates)")
      ->check(CLI::ExistingFile);
  gen->add_option("--dump-templates", dump_templates, "write the built-in templates to this file and exit");
  gen->add_flag("--augment-logs", augment, "rewrite log phrasing through the backend");
  cli::add_backend_flags(gen, gen_backend);

  // detect
  auto* detect = app.add_subcommand("detect", "Run the detector on one case or a dataset");
  std::string case_path, dataset_dir, ruleset_path, prompts_dir, detect_out;
  bool no_verifier = false;
  int max_retries = kDefaultMaxRetries;
  cli::BackendFlags detect_backend;
  auto* detect_case = detect->add_option("--case", case_path, "case file")->check(CLI::ExistingFile);
  auto* detect_ds = detect->add_option("--dataset", dataset_dir, "dataset directory")->check(CLI::ExistingDirectory);
  detect_case->excludes(detect_ds);
  detect->add_flag("--no-verifier", no_verifier, "skip the symbolic verifier and critic loop");
  detect->add_option("--max-retries", max_retries, "critic loop retest budget")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  detect->add_option("--ruleset", ruleset_path, "ruleset file (default: built-in)")->check(CLI::ExistingFile);
  detect->add_option("--prompts", prompts_dir, "directory of prompt templates")->check(CLI::ExistingDirectory);
  detect->add_option("--out", detect_out, "write JSON lines here instead of stdout");
  cli::add_backend_flags(detect, detect_backend);

  // verify
  auto* verify = app.add_subcommand("verify", "Check a case against the rule signature of one or all types");
  std::string verify_case, verify_type, verify_ruleset;
  verify->add_option("--case", verify_case, "case file")->required()->check(CLI::ExistingFile);
  verify->add_option("--type", verify_type, "anomaly type (default: all types)");
  verify->add_option("--ruleset", verify_ruleset, "ruleset file (default: built-in)")->check(CLI::ExistingFile);

  // eval
  auto* eval = app.add_subcommand("eval", "Score detectors on a dataset");
  std::string eval_ds, eval_ruleset, eval_prompts, eval_out, eval_case_results, eval_format = "table";
  std::vector<std::string> detectors;
  EvalOptions eval_options;
  std::uint64_t gen_seed = 42;
  cli::BackendFlags eval_backend;
  eval->add_option("--dataset", eval_ds, "dataset directory (default: generate one from --gen-seed)")
      ->check(CLI::ExistingDirectory);
  eval->add_option("--gen-seed", gen_seed, "seed for the generated dataset when --dataset is absent")
      ->capture_default_str();
  eval->add_option("--detector", detectors,
                   "cloudano, cloudano-no-verifier, rule-ensemble, oov, always-anomaly, never-anomaly (repeatable)")
      ->check(CLI::IsMember(
          {"cloudano", "cloudano-no-verifier", "rule-ensemble", "oov", "always-anomaly", "never-anomaly"}));
  eval->add_option("--repeats", eval_options.repeats, "evaluation repeats")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  eval->add_option("--seed", eval_options.seed, "seed for per-repeat case order")->capture_default_str();
  eval->add_option("--jobs", eval_options.jobs, "concurrent cases")->check(CLI::PositiveNumber)->capture_default_str();
  eval->add_flag("--strict-abstain", eval_options.strict_abstain, "score abstentions as wrong");
  eval->add_option("--format", eval_format, "table or csv")
      ->check(CLI::IsMember({"table", "csv"}))
      ->capture_default_str();
  eval->add_option("--out", eval_out, "write the summary here instead of stdout");
  eval->add_option("--case-results", eval_case_results, "write per-case results (with latency) as JSON lines");
  eval->add_option("--ruleset", eval_ruleset, "ruleset file (default: built-in)")->check(CLI::ExistingFile);
  eval->add_option("--prompts", eval_prompts, "directory of prompt templates")->check(CLI::ExistingDirectory);
  eval->add_option("--max-retries", max_retries, "critic loop retest budget")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cli::add_backend_flags(eval, eval_backend);

  // report
  auto* report = app.add_subcommand("report", "Render anomaly reports");
  std::string report_case, report_ds, report_ruleset, report_prompts, report_out, report_format = "text";
  bool polish = false;
  cli::BackendFlags report_backend;
  auto* report_case_opt = report->add_option("--case", report_case, "case file")->check(CLI::ExistingFile);
  auto* report_ds_opt = report->add_option("--dataset", report_ds, "dataset directory")->check(CLI::ExistingDirectory);
  report_case_opt->excludes(report_ds_opt);
  report->add_option("--format", report_format, "text or json")
      ->check(CLI::IsMember({"text", "json"}))
      ->capture_default_str();
  report->add_flag("--polish", polish, "let the backend rewrite the summary prose");
  report->add_option("--ruleset", report_ruleset, "ruleset file (default: built-in)")->check(CLI::ExistingFile);
  report->add_option("--prompts", report_prompts, "directory of prompt templates")->check(CLI::ExistingDirectory);
  report->add_option("--out", report_out, "write reports here instead of stdout");
  cli::add_backend_flags(report, report_backend);

  // export-ruleset
  auto* export_rules = app.add_subcommand("export-ruleset", "Write the built-in ruleset file");
  std::string export_out;
  export_rules->add_option("--out", export_out, "output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (gen->parsed()) {
      if (!dump_templates.empty()) {
        write_text_file(dump_templates, template_set_to_json(default_templates()).dump(2) + "\n");
        return kExitOk;
      }
      if (gen_out.empty()) {
        err << "error: gen needs --out\n";
        return kExitUsage;
      }
      const auto set = templates_path.empty() ? default_templates() : parse_template_set(read_text_file(templates_path));
      const auto ruleset = default_ruleset();
      auto ds = gen_benchmark(spec, set, ruleset);
      if (augment) {
        auto backend = cli::make_backend(gen_backend, ruleset);
        for (auto& c : ds.cases) {
          auto r = llm_augment_logs(c, *backend, ruleset);
          if (!r.warning.empty()) err << "warning: " << c.id << ": " << r.warning << "\n";
          c = std::move(r.record);
        }
      }
      write_dataset(gen_out, ds);
      const auto counts = ds.manifest.counts();
      out << "wrote " << counts.total << " cases (" << counts.anomaly << " anomaly, " << counts.normal << " normal; "
          << counts.easy << " easy, " << counts.difficult << " difficult) to " << gen_out << "\n";
      return kExitOk;
    }

    if (detect->parsed()) {
      if (case_path.empty() && dataset_dir.empty()) {
        err << "error: detect needs --case or --dataset\n";
        return kExitUsage;
      }
      const auto ctx = cli::load_context(ruleset_path, prompts_dir);
      const auto cases = cli::load_cases(case_path, dataset_dir);
      auto backend = cli::make_backend(detect_backend, ctx.ruleset);
      const PipelineOptions options{!no_verifier, max_retries};
      std::string text;
      for (const auto& c : cases) text += cli::final_verdict_json(c.id, run_pipeline(c, *backend, ctx, options)).dump() + "\n";
      cli::write_output(detect_out, text, out);
      return kExitOk;
    }

    if (verify->parsed()) {
      const auto ruleset = cli::load_ruleset(verify_ruleset);
      const auto c = load_case(verify_case);
      std::vector<AnomalyType> types;
      if (verify_type.empty()) {
        types.assign(kAnomalyTypes.begin(), kAnomalyTypes.end());
      } else {
        auto t = parse_enum<AnomalyType>(verify_type);
        if (!t) {
          err << "error: unknown anomaly type '" << verify_type << "'\n";
          return kExitUsage;
        }
        types.push_back(*t);
      }
      for (auto t : types) {
        ordered_json j;
        j["case_id"] = c.id;
        j["anomaly_type"] = std::string(to_string(t));
        const auto metric = verify_metric(c.metrics, t, ruleset);
        const auto log = verify_log(c.logs, t, ruleset);
        j["passed"] = metric.passed && log.passed;
        j["metric"] = cli::check_json(metric);
        j["log"] = cli::check_json(log);
        out << j.dump() << "\n";
      }
      return kExitOk;
    }

    if (eval->parsed()) {
      if (detectors.empty()) detectors = {"cloudano"};
      const auto ctx = cli::load_context(eval_ruleset, eval_prompts);
      GenSpec eval_spec;
      eval_spec.seed = gen_seed;
      const Dataset ds = eval_ds.empty() ? gen_benchmark(eval_spec, default_templates(), ctx.ruleset)
                                         : read_dataset(eval_ds);
      if (!eval_ds.empty()) eval_spec.seed = ds.manifest.seed;
      std::unique_ptr<Backend> backend;
      std::vector<EvalSummary> summaries;
      std::string case_lines;
      for (const auto& id : detectors) {
        std::unique_ptr<Detector> detector;
        if (id == "cloudano" || id == "cloudano-no-verifier") {
          if (!backend) backend = cli::make_backend(eval_backend, ctx.ruleset);
          detector = std::make_unique<PipelineDetector>(id, *backend, ctx,
                                                        PipelineOptions{id == "cloudano", max_retries});
        } else if (id == "rule-ensemble") {
          detector = std::make_unique<RuleEnsembleDetector>(ctx.ruleset.pattern_config());
        } else if (id == "oov") {
          detector = std::make_unique<OovDetector>(reference_vocabulary(eval_spec, default_templates(), ctx.ruleset));
        } else if (id == "always-anomaly") {
          detector = always_anomaly_detector();
        } else {
          detector = never_anomaly_detector();
        }
        const auto results = run_evaluation(ds, *detector, eval_options);
        for (const auto& r : results) {
          if (!r.error.empty()) err << "warning: " << id << " failed on " << r.case_id << ": " << r.error << "\n";
        }
        summaries.push_back(summarize(results, ds.manifest, detector->id(), detector->typed(), eval_options.repeats,
                                      eval_options.seed));
        if (!eval_case_results.empty()) case_lines += case_results_jsonl(results, detector->id());
      }
      cli::write_output(eval_out, emit_report(summaries, *parse_enum<ReportFormat>(eval_format)), out);
      if (!eval_case_results.empty()) write_text_file(eval_case_results, case_lines);
      return kExitOk;
    }

    if (report->parsed()) {
      if (report_case.empty() && report_ds.empty()) {
        err << "error: report needs --case or --dataset\n";
        return kExitUsage;
      }
      const auto ctx = cli::load_context(report_ruleset, report_prompts);
      const auto cases = cli::load_cases(report_case, report_ds);
      auto backend = cli::make_backend(report_backend, ctx.ruleset);
      std::string text;
      ordered_json docs = ordered_json::array();
      for (const auto& c : cases) {
        const auto r = run_pipeline(c, *backend, ctx);
        auto rep = render_report(c, r.final, ctx.ruleset, r.hypothesis);
        if (polish) polish_report(rep, *backend);
        if (report_format == "json")
          docs.push_back(report_to_json(rep));
        else
          text += (text.empty() ? "" : "\n") + report_to_text(rep);
      }
      if (report_format == "json") text = (cases.size() == 1 ? docs[0] : docs).dump(2) + "\n";
      cli::write_output(report_out, text, out);
      return kExitOk;
    }

    if (export_rules->parsed()) {
      cli::write_output(export_out, serialize_ruleset(default_ruleset()), out);
      return kExitOk;
    }
  } catch (const BackendError& e) {
    err << "error: backend: " << e.what() << "\n";
    return kExitBackend;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace cloudano
