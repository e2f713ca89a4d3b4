#include "trialx/session.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "trialx/dsl/spec.hpp"
#include "trialx/error.hpp"
#include "trialx/text.hpp"

namespace trialx {

using nlohmann::json;

std::string_view to_string(RecordKind k) {
  switch (k) {
    case RecordKind::criterion_adjust: return "criterion_adjust";
    case RecordKind::lasso_select: return "lasso_select";
    case RecordKind::axis_change: return "axis_change";
  }
  return "criterion_adjust";
}

RecordKind parse_record_kind(std::string_view s) {
  if (s == "criterion_adjust") return RecordKind::criterion_adjust;
  if (s == "lasso_select") return RecordKind::lasso_select;
  if (s == "axis_change") return RecordKind::axis_change;
  throw ValidationError("unknown record kind '" + std::string(s) + "'");
}

Stage& Session::stage(int stage_id) {
  for (auto& s : stages) {
    if (s.stage_id == stage_id) return s;
  }
  throw ValidationError("unknown stage " + std::to_string(stage_id));
}

const Stage& Session::stage(int stage_id) const { return const_cast<Session*>(this)->stage(stage_id); }

namespace {

void check_meta(const StageMeta& meta) {
  if (meta.importance < 1 || meta.importance > 5)
    throw ValidationError("importance must be between 1 and 5, got " + std::to_string(meta.importance));
}

std::int64_t now_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

json num(const std::optional<double>& v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

std::optional<double> opt_num(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

json metrics_json(const MetricValues& m) {
  return {{"n", num(m.n_patients)},
          {"diversity", num(m.diversity)},
          {"hr", num(m.hr)},
          {"kidney_rr", num(m.kidney_rr)},
          {"liver_rr", num(m.liver_rr)}};
}

MetricValues metrics_from_json(const json& j) {
  MetricValues m;
  m.n_patients = opt_num(j, "n");
  m.diversity = opt_num(j, "diversity");
  m.hr = opt_num(j, "hr");
  m.kidney_rr = opt_num(j, "kidney_rr");
  m.liver_rr = opt_num(j, "liver_rr");
  return m;
}

std::optional<double> literal_number(const dsl::Literal& v) {
  if (const auto* d = std::get_if<double>(&v.value)) return *d;
  if (const auto* b = std::get_if<bool>(&v.value)) return *b ? 1.0 : 0.0;
  return std::nullopt;
}

}  // namespace

int create_stage(Session& session, StageMeta meta) {
  check_meta(meta);
  int id = 1;
  for (const auto& s : session.stages) id = std::max(id, s.stage_id + 1);
  session.stages.push_back(Stage{id, std::move(meta), {}});
  session.current_stage = id;
  return id;
}

void update_stage(Session& session, int stage_id, StageMeta meta) {
  check_meta(meta);
  session.stage(stage_id).meta = std::move(meta);
}

MetricValues metric_means(const ResultsTable& results, const std::vector<CandidateId>& selected) {
  const char* names[] = {"n", "diversity", "hr", "kidney_rr", "liver_rr"};
  std::optional<double> MetricValues::*fields[] = {&MetricValues::n_patients, &MetricValues::diversity,
                                                   &MetricValues::hr, &MetricValues::kidney_rr,
                                                   &MetricValues::liver_rr};
  MetricValues out;
  for (std::size_t k = 0; k < 5; ++k) {
    double sum = 0.0;
    std::size_t n = 0;
    for (CandidateId id : selected) {
      const auto& row = results.row(id);
      if (!row.ok()) continue;
      if (auto v = metric_value(row, names[k]); v && std::isfinite(*v)) {
        sum += *v;
        ++n;
      }
    }
    if (n > 0) out.*fields[k] = sum / static_cast<double>(n);
  }
  return out;
}

int append_record(Session& session, int stage_id, ExplorationRecord record, const ResultsTable& results) {
  if (!session.spec_hash.empty() && session.spec_hash != results.spec_hash)
    throw ValidationError("session spec hash " + session.spec_hash + " does not match results " + results.spec_hash);
  Stage& stage = session.stage(stage_id);
  for (CandidateId id : record.selected) {
    if (id < 0 || static_cast<std::size_t>(id) >= results.rows.size())
      throw ValidationError("candidate " + std::to_string(id) + " is outside the grid");
  }
  if (!is_metric_name(record.axes.x) || !is_metric_name(record.axes.y))
    throw ValidationError("axes must name outcome metrics");
  record.metric_means = metric_means(results, record.selected);
  if (record.timestamp == 0) record.timestamp = now_ms();
  if (!stage.records.empty()) record.timestamp = std::max(record.timestamp, stage.records.back().timestamp);
  int id = 1;
  for (const auto& s : session.stages) {
    for (const auto& r : s.records) id = std::max(id, r.record_id + 1);
  }
  record.record_id = id;
  stage.records.push_back(std::move(record));
  return id;
}

MatrixData matrix_data(const Stage& stage, const std::vector<dsl::AdjustableParam>& adjustables) {
  if (stage.records.empty()) throw ValidationError("stage " + std::to_string(stage.stage_id) + " has no records");
  MatrixData m;
  for (const auto& r : stage.records) m.record_ids.push_back(r.record_id);
  for (const auto& a : adjustables) {
    MatrixRow row{a.name, a.role, {}};
    for (const auto& r : stage.records) {
      const auto it = r.constraints.find(a.name);
      double sum = 0.0;
      std::size_t n = 0;
      auto add = [&](const dsl::Literal& v) {
        if (auto x = literal_number(v)) {
          sum += *x;
          ++n;
        }
      };
      if (it == r.constraints.end()) {
        for (const auto& v : a.values) add(v);
      } else {
        for (const auto& v : it->second) add(v);
      }
      row.values.push_back(n > 0 ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt);
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

json to_json(const ExplorationRecord& r) {
  json j{{"record_id", r.record_id},
         {"kind", to_string(r.kind)},
         {"constraints", to_json(r.constraints)},
         {"selected", r.selected},
         {"axes", {{"x", r.axes.x}, {"y", r.axes.y}}},
         {"viewport", nullptr},
         {"metric_means", metrics_json(r.metric_means)},
         {"timestamp", r.timestamp}};
  if (r.viewport) {
    j["viewport"] = {{"x_min", r.viewport->x_min},
                     {"x_max", r.viewport->x_max},
                     {"y_min", r.viewport->y_min},
                     {"y_max", r.viewport->y_max}};
  }
  return j;
}

ExplorationRecord record_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("record must be a JSON object");
  ExplorationRecord r;
  try {
    r.record_id = j.value("record_id", 0);
    r.kind = parse_record_kind(j.value("kind", std::string("criterion_adjust")));
    if (j.contains("constraints")) r.constraints = constraints_from_json(j.at("constraints"));
    r.selected = j.value("selected", std::vector<CandidateId>{});
    if (j.contains("axes")) {
      r.axes.x = j.at("axes").value("x", r.axes.x);
      r.axes.y = j.at("axes").value("y", r.axes.y);
    }
    if (j.contains("viewport") && !j.at("viewport").is_null()) {
      const auto& v = j.at("viewport");
      r.viewport = Viewport{v.at("x_min").get<double>(), v.at("x_max").get<double>(), v.at("y_min").get<double>(),
                            v.at("y_max").get<double>()};
    }
    if (j.contains("metric_means")) r.metric_means = metrics_from_json(j.at("metric_means"));
    r.timestamp = j.value("timestamp", std::int64_t{0});
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed record: ") + e.what());
  }
  return r;
}

json to_json(const StageMeta& m) {
  return {{"importance", m.importance}, {"keywords", m.keywords}, {"description", m.description}};
}

StageMeta stage_meta_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("stage metadata must be a JSON object");
  StageMeta m;
  try {
    m.importance = j.value("importance", m.importance);
    m.keywords = j.value("keywords", m.keywords);
    m.description = j.value("description", m.description);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed stage metadata: ") + e.what());
  }
  check_meta(m);
  return m;
}

json to_json(const Stage& s) {
  json records = json::array();
  for (const auto& r : s.records) records.push_back(to_json(r));
  json j = to_json(s.meta);
  j["stage_id"] = s.stage_id;
  j["records"] = records;
  return j;
}

json to_json(const Session& s) {
  json stages = json::array();
  for (const auto& st : s.stages) stages.push_back(to_json(st));
  return {{"schema_version", kSessionSchemaVersion},
          {"session_id", s.session_id},
          {"spec_hash", s.spec_hash},
          {"current_stage", s.current_stage ? json(*s.current_stage) : json(nullptr)},
          {"stages", stages}};
}

json to_json(const MatrixData& m) {
  json rows = json::array();
  for (const auto& r : m.rows) {
    json values = json::array();
    for (const auto& v : r.values) values.push_back(num(v));
    rows.push_back({{"adjustable", r.adjustable}, {"role", r.role}, {"values", values}});
  }
  return {{"record_ids", m.record_ids}, {"rows", rows}};
}

Session session_from_json(const json& j) {
  if (!j.is_object() || !j.contains("schema_version")) throw CorruptFileError("session document has no schema_version");
  if (!j.at("schema_version").is_number_integer()) throw CorruptFileError("session schema_version is not an integer");
  const int version = j.at("schema_version").get<int>();
  if (version != kSessionSchemaVersion)
    throw VersionError("session schema_version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kSessionSchemaVersion) + ")");
  Session s;
  try {
    s.session_id = j.at("session_id").get<std::string>();
    s.spec_hash = j.at("spec_hash").get<std::string>();
    if (!j.at("current_stage").is_null()) s.current_stage = j.at("current_stage").get<int>();
    for (const auto& st : j.at("stages")) {
      Stage stage;
      stage.stage_id = st.at("stage_id").get<int>();
      stage.meta = stage_meta_from_json(st);
      for (const auto& r : st.at("records")) stage.records.push_back(record_from_json(r));
      s.stages.push_back(std::move(stage));
    }
  } catch (const json::exception& e) {
    throw CorruptFileError(std::string("malformed session: ") + e.what());
  } catch (const ValidationError& e) {
    throw CorruptFileError(std::string("malformed session: ") + e.what());
  }
  return s;
}

void save_session(const Session& session, const std::filesystem::path& path) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write " + tmp);
    out << to_json(session).dump(2) << '\n';
    if (!out) throw Error("cannot write " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Session load_session(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw CorruptFileError(path.string() + ": " + e.what());
  }
  return session_from_json(j);
}

std::string session_report(const Session& session, const ResultsTable* results) {
  auto cell = [](const std::optional<double>& v) { return v ? text::format_double(*v) : std::string("-"); };
  std::ostringstream out;
  out << "# Exploration session " << session.session_id << "\n\n";
  out << "Spec hash: `" << session.spec_hash << "`\n";
  if (results) out << "Candidates in grid: " << results->rows.size() << "\n";
  out << "Stages: " << session.stages.size() << "\n";
  for (const auto& st : session.stages) {
    out << "\n## Stage " << st.stage_id << "\n\n";
    out << "- Importance: " << st.meta.importance << "\n";
    out << "- Keywords: ";
    for (std::size_t i = 0; i < st.meta.keywords.size(); ++i) out << (i ? ", " : "") << st.meta.keywords[i];
    out << "\n";
    if (!st.meta.description.empty()) out << "- Description: " << st.meta.description << "\n";
    out << "\n";
    if (st.records.empty()) {
      out << "No records.\n";
      continue;
    }
    out << "| record | kind | selected | n | diversity | hr | kidney_rr | liver_rr |\n";
    out << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : st.records) {
      const auto& m = r.metric_means;
      out << "| " << r.record_id << " | " << to_string(r.kind) << " | " << r.selected.size() << " | "
          << cell(m.n_patients) << " | " << cell(m.diversity) << " | " << cell(m.hr) << " | " << cell(m.kidney_rr)
          << " | " << cell(m.liver_rr) << " |\n";
    }
  }
  return out.str();
}

}  // namespace trialx
