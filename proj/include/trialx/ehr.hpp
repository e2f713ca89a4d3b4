#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace trialx {

/// Hours since admission. Admission is hour 0; pre-admission history is negative.
using Hours = double;

inline constexpr Hours kHoursPerDay = 24.0;
inline constexpr Hours kHoursPerMonth = 30.0 * kHoursPerDay;

enum class Gender { male, female };
enum class EventKind { diagnosis, procedure, medication, device };
enum class Status { in_hospital, discharged, died };

std::string_view to_string(Gender g);
std::string_view to_string(EventKind k);
std::string_view to_string(Status s);
std::optional<Gender> parse_gender(std::string_view s);
std::optional<EventKind> parse_event_kind(std::string_view s);

struct ClinicalEvent {
  EventKind kind = EventKind::diagnosis;
  std::string code;
  Hours start = 0.0;
  std::optional<Hours> end;  // absent: point event

  bool operator==(const ClinicalEvent&) const = default;
};

struct LabPoint {
  Hours time = 0.0;
  double value = 0.0;

  bool operator==(const LabPoint&) const = default;
};

/// Time-ordered observations of one indicator for one patient.
struct LabSeries {
  std::string indicator;
  std::vector<LabPoint> points;  // strictly increasing time

  bool operator==(const LabSeries&) const = default;
};

struct ReferenceRange {
  std::string indicator;
  double lower = 0.0;
  double upper = 0.0;

  double midpoint() const { return 0.5 * (lower + upper); }
  bool abnormal(double v) const { return v < lower || v > upper; }

  bool operator==(const ReferenceRange&) const = default;
};

struct PatientRecord {
  std::string patient_id;
  int age = 0;
  Gender gender = Gender::male;
  std::string race;
  std::optional<double> height_m;
  std::optional<double> weight_kg;
  std::optional<Hours> discharge;
  std::optional<Hours> death;
  std::vector<ClinicalEvent> events;
  std::map<std::string, LabSeries> labs;

  /// Death governs when both terminators are present.
  Status status() const;
  /// Time the stay ended (death or discharge), absent while in hospital.
  std::optional<Hours> terminator() const;
  const LabSeries* lab(std::string_view indicator) const;

  bool operator==(const PatientRecord&) const = default;
};

/// Numeric attribute lookup used by predicates, matching and covariates.
/// Known names: age, bmi, height, weight, gender_code (male 0, female 1).
/// Returns nullopt when an ingredient is missing; throws ValidationError for
/// an unknown name.
std::optional<double> derived_attribute(const PatientRecord& p, std::string_view name);
bool is_numeric_attribute(std::string_view name);

/// Immutable, id-sorted patient collection plus the lab dictionary.
class PatientStore {
 public:
  PatientStore() = default;
  /// Validates every record and the dictionary; throws IngestError with
  /// file "<memory>" when an invariant does not hold.
  PatientStore(std::vector<PatientRecord> patients, std::map<std::string, ReferenceRange> ranges,
               std::vector<std::string> confounders);

  const std::vector<PatientRecord>& patients() const noexcept { return patients_; }
  std::size_t size() const noexcept { return patients_.size(); }
  const PatientRecord* find(std::string_view id) const;
  /// Position of `id` in the sorted patient list.
  std::optional<std::size_t> index_of(std::string_view id) const;

  const std::map<std::string, ReferenceRange>& ranges() const noexcept { return ranges_; }
  const ReferenceRange& range(std::string_view indicator) const;
  const std::vector<std::string>& confounders() const noexcept { return confounders_; }

  /// Replace the SCr/AST bounds or the confounder list without re-ingesting.
  PatientStore with_dictionary(std::map<std::string, ReferenceRange> ranges,
                               std::vector<std::string> confounders) const;

  bool operator==(const PatientStore& o) const {
    return patients_ == o.patients_ && ranges_ == o.ranges_ && confounders_ == o.confounders_;
  }

 private:
  std::vector<PatientRecord> patients_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::string, ReferenceRange> ranges_;
  std::vector<std::string> confounders_;
};

struct LoadReport {
  std::size_t patients = 0;
  std::size_t events = 0;
  std::size_t lab_points = 0;
};

/// Read the four-file CSV/JSON layout. Every rejection is an IngestError
/// that names the file and line.
PatientStore load_store(const std::filesystem::path& patients_file,
                        const std::filesystem::path& events_file,
                        const std::filesystem::path& labs_file,
                        const std::filesystem::path& dictionary_file,
                        LoadReport* report = nullptr);

/// Same, using the conventional file names inside `dir`.
PatientStore load_store_dir(const std::filesystem::path& dir, LoadReport* report = nullptr);

/// Writes patients.csv, events.csv, labs.csv and dictionary.json into `dir`.
void save_store_dir(const PatientStore& store, const std::filesystem::path& dir);

}  // namespace trialx
