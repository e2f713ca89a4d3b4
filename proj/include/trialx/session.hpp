#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "trialx/engine.hpp"
#include "trialx/grid.hpp"
#include "trialx/temporal.hpp"

namespace trialx {

inline constexpr int kSessionSchemaVersion = 1;

enum class RecordKind { criterion_adjust, lasso_select, axis_change };
std::string_view to_string(RecordKind k);
RecordKind parse_record_kind(std::string_view s);

/// Scatter-plot state of a thumbnail; re-rendered by the client.
struct Axes {
  std::string x = "hr";
  std::string y = "n";
  bool operator==(const Axes&) const = default;
};

struct Viewport {
  double x_min = 0.0;
  double x_max = 0.0;
  double y_min = 0.0;
  double y_max = 0.0;
  bool operator==(const Viewport&) const = default;
};

struct ExplorationRecord {
  int record_id = 0;
  RecordKind kind = RecordKind::criterion_adjust;
  Constraints constraints;
  std::vector<CandidateId> selected;
  Axes axes;
  std::optional<Viewport> viewport;
  /// Means over the non-degenerate selected candidates; set by append_record.
  MetricValues metric_means;
  /// Milliseconds since the Unix epoch.
  std::int64_t timestamp = 0;
  bool operator==(const ExplorationRecord&) const = default;
};

struct StageMeta {
  int importance = 3;  // 1-5
  std::vector<std::string> keywords;
  std::string description;
  bool operator==(const StageMeta&) const = default;
};

struct Stage {
  int stage_id = 0;
  StageMeta meta;
  std::vector<ExplorationRecord> records;
  bool operator==(const Stage&) const = default;
};

struct Session {
  std::string session_id;
  std::string spec_hash;
  std::vector<Stage> stages;
  std::optional<int> current_stage;
  bool operator==(const Session&) const = default;

  Stage& stage(int stage_id);
  const Stage& stage(int stage_id) const;
};

/// Appends a stage, makes it current and returns its id (1, 2, ...).
/// Throws ValidationError when importance is outside 1-5.
int create_stage(Session& session, StageMeta meta);

/// Replace the metadata of an existing stage.
void update_stage(Session& session, int stage_id, StageMeta meta);

/// Mean of each metric over the selected candidates, skipping degenerate
/// ones and absent values.
MetricValues metric_means(const ResultsTable& results, const std::vector<CandidateId>& selected);

/// Stores `record` under `stage_id`, assigning its id and recomputing the
/// metric means from `results` (client-supplied means are ignored). A zero
/// timestamp is replaced by the current time; timestamps are kept
/// non-decreasing within the stage. Throws ValidationError on an unknown
/// stage, an id outside the grid or a spec hash mismatch.
int append_record(Session& session, int stage_id, ExplorationRecord record, const ResultsTable& results);

/// One matrix row per adjustable; one column per record of the stage.
struct MatrixRow {
  std::string adjustable;
  std::string role;
  std::vector<std::optional<double>> values;  // per record
};

struct MatrixData {
  std::vector<int> record_ids;
  std::vector<MatrixRow> rows;
};

/// Cell value is the mean of the values the record's constraints permit
/// (booleans count as 0/1); an unconstrained adjustable uses its full value
/// set. Throws ValidationError for an empty stage.
MatrixData matrix_data(const Stage& stage, const std::vector<dsl::AdjustableParam>& adjustables);

nlohmann::json to_json(const ExplorationRecord& r);
ExplorationRecord record_from_json(const nlohmann::json& j);
nlohmann::json to_json(const StageMeta& m);
StageMeta stage_meta_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Stage& s);
nlohmann::json to_json(const Session& s);
nlohmann::json to_json(const MatrixData& m);
/// Throws VersionError or CorruptFileError.
Session session_from_json(const nlohmann::json& j);

void save_session(const Session& session, const std::filesystem::path& path);
Session load_session(const std::filesystem::path& path);

/// Markdown export: per-stage importance, keywords, description and the
/// metric trend across its records.
std::string session_report(const Session& session, const ResultsTable* results = nullptr);

}  // namespace trialx
