#pragma once

// Case documents (one JSON object per case) and dataset directories
// (case files plus manifest.json).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cloudano/core.hpp"
#include "json.hpp"

namespace cloudano {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace detail {

inline const json& require(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw SchemaError(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw SchemaError(where.empty() ? key : where + "." + key, "missing field");
  return *it;
}

inline std::string join_path(const std::string& where, const char* key) {
  return where.empty() ? std::string(key) : where + "." + key;
}

inline std::string require_string(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_string()) throw SchemaError(join_path(where, key), "expected a string");
  return v.get<std::string>();
}

inline bool require_bool(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_boolean()) throw SchemaError(join_path(where, key), "expected a boolean");
  return v.get<bool>();
}

inline std::int64_t require_int(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_number_integer()) throw SchemaError(join_path(where, key), "expected an integer");
  return v.get<std::int64_t>();
}

inline const json& require_array(const json& obj, const char* key, const std::string& where) {
  const auto& v = require(obj, key, where);
  if (!v.is_array()) throw SchemaError(join_path(where, key), "expected an array");
  return v;
}

template <class E>
E require_enum(const json& obj, const char* key, const std::string& where) {
  const auto path = join_path(where, key);
  const auto text = require_string(obj, key, where);
  auto parsed = parse_enum<E>(text);
  if (!parsed) throw SchemaError(path, "unknown value '" + text + "'");
  return *parsed;
}

}  // namespace detail

inline CaseLabel parse_label(const json& doc) {
  using namespace detail;
  CaseLabel label;
  label.is_anomaly = require_bool(doc, "is_anomaly", "label");
  const auto& type = require(doc, "anomaly_type", "label");
  if (!type.is_null()) {
    if (!type.is_string()) throw SchemaError("label.anomaly_type", "expected a string or null");
    auto parsed = parse_enum<AnomalyType>(type.get<std::string>());
    if (!parsed)
      throw SchemaError("label.anomaly_type", "unknown anomaly type '" + type.get<std::string>() + "'");
    label.anomaly_type = parsed;
  }
  label.difficulty = require_enum<Difficulty>(doc, "difficulty", "label");
  label.scenario = require_string(doc, "scenario", "label");
  return label;
}

inline CaseRecord parse_case_json(const json& doc) {
  using namespace detail;
  if (!doc.is_object()) throw SchemaError("document", "expected a JSON object");
  CaseRecord record;
  record.id = require_string(doc, "id", "");
  record.label = parse_label(require(doc, "label", ""));

  const auto& metrics = require_array(doc, "metrics", "");
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const std::string where = "metrics[" + std::to_string(i) + "]";
    const auto& m = metrics[i];
    MetricSeries series;
    series.name = require_enum<MetricName>(m, "name", where);
    series.unit = require_string(m, "unit", where);
    const auto interval = require_int(m, "interval_seconds", where);
    if (interval <= 0 || interval > 86400)
      throw SchemaError(where + ".interval_seconds", "expected a positive number of seconds");
    series.interval_seconds = static_cast<int>(interval);
    const auto& values = require_array(m, "values", where);
    series.values.reserve(values.size());
    for (std::size_t j = 0; j < values.size(); ++j) {
      if (!values[j].is_number())
        throw SchemaError(where + ".values[" + std::to_string(j) + "]", "expected a number");
      series.values.push_back(values[j].get<double>());
    }
    record.metrics.push_back(std::move(series));
  }

  const auto& logs = require_array(doc, "logs", "");
  for (std::size_t i = 0; i < logs.size(); ++i) {
    const std::string where = "logs[" + std::to_string(i) + "]";
    LogEntry entry;
    entry.timestamp = require_int(logs[i], "timestamp", where);
    entry.text = require_string(logs[i], "text", where);
    record.logs.push_back(std::move(entry));
  }

  validate(record);
  return record;
}

/// Parses one case document. Throws SchemaError for structural problems and
/// InvariantError for domain-rule violations; both name the offending field.
inline CaseRecord parse_case(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document);
  } catch (const json::parse_error& e) {
    throw SchemaError("document", std::string("malformed JSON: ") + e.what());
  }
  return parse_case_json(doc);
}

inline ordered_json case_to_json(const CaseRecord& record) {
  ordered_json doc;
  doc["id"] = record.id;
  ordered_json label;
  label["is_anomaly"] = record.label.is_anomaly;
  if (record.label.anomaly_type)
    label["anomaly_type"] = std::string(to_string(*record.label.anomaly_type));
  else
    label["anomaly_type"] = nullptr;
  label["difficulty"] = std::string(to_string(record.label.difficulty));
  label["scenario"] = record.label.scenario;
  doc["label"] = std::move(label);

  ordered_json metrics = ordered_json::array();
  for (const auto& m : record.metrics) {
    ordered_json series;
    series["name"] = std::string(to_string(m.name));
    series["unit"] = m.unit;
    series["interval_seconds"] = m.interval_seconds;
    series["values"] = m.values;
    metrics.push_back(std::move(series));
  }
  doc["metrics"] = std::move(metrics);

  ordered_json logs = ordered_json::array();
  for (const auto& entry : record.logs) {
    ordered_json line;
    line["timestamp"] = entry.timestamp;
    line["text"] = entry.text;
    logs.push_back(std::move(line));
  }
  doc["logs"] = std::move(logs);
  return doc;
}

inline std::string serialize_case(const CaseRecord& record) {
  return case_to_json(record).dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Datasets

struct ManifestEntry {
  std::string id;
  std::string file;
  CaseLabel label;

  bool operator==(const ManifestEntry&) const = default;
};

struct SplitCounts {
  int total = 0;
  int anomaly = 0;
  int normal = 0;
  int easy = 0;
  int difficult = 0;
  std::map<AnomalyType, int> per_type;

  bool operator==(const SplitCounts&) const = default;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> cases;

  SplitCounts counts() const {
    SplitCounts c;
    for (const auto& e : cases) {
      ++c.total;
      (e.label.is_anomaly ? c.anomaly : c.normal) += 1;
      (e.label.difficulty == Difficulty::easy ? c.easy : c.difficult) += 1;
      if (e.label.anomaly_type) ++c.per_type[*e.label.anomaly_type];
    }
    return c;
  }

  const ManifestEntry* find(std::string_view id) const {
    for (const auto& e : cases)
      if (e.id == id) return &e;
    return nullptr;
  }

  bool operator==(const Manifest&) const = default;
};

struct Dataset {
  Manifest manifest;
  std::vector<CaseRecord> cases;
};

inline constexpr std::string_view kManifestFormat = "cloudano-dataset/1";

inline Manifest manifest_for(std::uint64_t seed, const std::vector<CaseRecord>& cases) {
  Manifest m;
  m.seed = seed;
  for (const auto& c : cases) m.cases.push_back({c.id, c.id + ".json", c.label});
  return m;
}

inline std::string serialize_manifest(const Manifest& manifest) {
  const auto counts = manifest.counts();
  ordered_json doc;
  doc["format"] = std::string(kManifestFormat);
  doc["seed"] = manifest.seed;
  ordered_json c;
  c["total"] = counts.total;
  c["anomaly"] = counts.anomaly;
  c["normal"] = counts.normal;
  c["easy"] = counts.easy;
  c["difficult"] = counts.difficult;
  doc["counts"] = std::move(c);
  ordered_json per_type;
  for (auto t : kAnomalyTypes) {
    auto it = counts.per_type.find(t);
    per_type[std::string(to_string(t))] = it == counts.per_type.end() ? 0 : it->second;
  }
  doc["per_type"] = std::move(per_type);
  ordered_json entries = ordered_json::array();
  for (const auto& e : manifest.cases) {
    ordered_json entry;
    entry["id"] = e.id;
    entry["file"] = e.file;
    entry["is_anomaly"] = e.label.is_anomaly;
    if (e.label.anomaly_type)
      entry["anomaly_type"] = std::string(to_string(*e.label.anomaly_type));
    else
      entry["anomaly_type"] = nullptr;
    entry["difficulty"] = std::string(to_string(e.label.difficulty));
    entries.push_back(std::move(entry));
  }
  doc["cases"] = std::move(entries);
  return doc.dump(2) + "\n";
}

inline Manifest parse_manifest(std::string_view text) {
  using namespace detail;
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError("manifest", std::string("malformed JSON: ") + e.what());
  }
  if (require_string(doc, "format", "") != kManifestFormat)
    throw SchemaError("format", "unsupported manifest format");
  Manifest m;
  const auto& seed = require(doc, "seed", "");
  if (!seed.is_number_unsigned() && !seed.is_number_integer())
    throw SchemaError("seed", "expected an integer");
  m.seed = seed.get<std::uint64_t>();
  const auto& cases = require_array(doc, "cases", "");
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const std::string where = "cases[" + std::to_string(i) + "]";
    ManifestEntry e;
    e.id = require_string(cases[i], "id", where);
    e.file = require_string(cases[i], "file", where);
    e.label.is_anomaly = require_bool(cases[i], "is_anomaly", where);
    const auto& type = require(cases[i], "anomaly_type", where);
    if (!type.is_null()) {
      auto parsed = type.is_string() ? parse_enum<AnomalyType>(type.get<std::string>()) : std::nullopt;
      if (!parsed) throw SchemaError(where + ".anomaly_type", "unknown anomaly type");
      e.label.anomaly_type = parsed;
    }
    e.label.difficulty = require_enum<Difficulty>(cases[i], "difficulty", where);
    if (e.label.is_anomaly != e.label.anomaly_type.has_value())
      throw InvariantError(where, "anomaly_type must be present iff is_anomaly is true");
    if (m.find(e.id)) throw InvariantError(where + ".id", "duplicate case id '" + e.id + "'");
    m.cases.push_back(std::move(e));
  }
  const auto counts = m.counts();
  const auto& declared = require(doc, "counts", "");
  const std::pair<const char*, int> expected[] = {{"total", counts.total},
                                                  {"anomaly", counts.anomaly},
                                                  {"normal", counts.normal},
                                                  {"easy", counts.easy},
                                                  {"difficult", counts.difficult}};
  for (const auto& [key, value] : expected) {
    if (require_int(declared, key, "counts") != value)
      throw InvariantError(std::string("counts.") + key, "declared count does not match case list");
  }
  return m;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline CaseRecord load_case(const std::filesystem::path& path) {
  return parse_case(read_text_file(path));
}

inline void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir);
  for (const auto& c : dataset.cases) {
    const auto* entry = dataset.manifest.find(c.id);
    if (!entry) throw InvariantError("manifest", "case '" + c.id + "' missing from manifest");
    write_text_file(dir / entry->file, serialize_case(c));
  }
  write_text_file(dir / "manifest.json", serialize_manifest(dataset.manifest));
}

/// Loads a dataset directory; every manifest entry must resolve to a case
/// file whose id and label agree with the manifest.
inline Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.manifest = parse_manifest(read_text_file(dir / "manifest.json"));
  for (auto& entry : ds.manifest.cases) {
    auto record = load_case(dir / entry.file);
    if (record.id != entry.id)
      throw InvariantError("manifest", "file " + entry.file + " holds case '" + record.id + "'");
    if (record.label.is_anomaly != entry.label.is_anomaly ||
        record.label.anomaly_type != entry.label.anomaly_type ||
        record.label.difficulty != entry.label.difficulty)
      throw InvariantError("manifest", "label of case '" + entry.id + "' disagrees with its file");
    entry.label.scenario = record.label.scenario;  // not stored in the manifest
    ds.cases.push_back(std::move(record));
  }
  return ds;
}

}  // namespace cloudano
