#include "trialx/ehr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "trialx/error.hpp"
#include "trialx/text.hpp"

namespace trialx {

namespace {

constexpr std::string_view kMemory = "<memory>";

const std::vector<std::string_view> kPatientHeader = {
    "patient_id", "age", "gender", "race", "height_m", "weight_kg", "discharge_h", "death_h"};
const std::vector<std::string_view> kEventHeader = {"patient_id", "kind", "code", "start_h",
                                                    "end_h"};
const std::vector<std::string_view> kLabHeader = {"patient_id", "indicator", "time_h", "value"};

// Returns an empty string when the record is valid, else the reason.
std::string check_record(const PatientRecord& p) {
  if (p.patient_id.empty()) return "empty patient_id";
  if (p.age < 0) return "negative age";
  if (p.height_m && !(*p.height_m > 0.0)) return "height must be positive";
  if (p.weight_kg && !(*p.weight_kg > 0.0)) return "weight must be positive";
  if (p.discharge && !(std::isfinite(*p.discharge) && *p.discharge >= 0.0))
    return "discharge time must be a non-negative number";
  if (p.death && !(std::isfinite(*p.death) && *p.death >= 0.0))
    return "death time must be a non-negative number";
  if (p.death && p.discharge && *p.death > *p.discharge) return "death after discharge";
  const auto term = p.terminator();
  for (const auto& e : p.events) {
    if (!std::isfinite(e.start)) return "event start is not finite";
    if (e.end && !(*e.end >= e.start)) return "event " + e.code + " ends before it starts";
    if (term && e.start > *term) return "event " + e.code + " after end of stay";
  }
  for (const auto& [name, series] : p.labs) {
    Hours prev = -1.0;
    bool first = true;
    for (const auto& pt : series.points) {
      if (!std::isfinite(pt.value)) return "non-finite " + name + " value";
      if (!(pt.time >= 0.0)) return "negative " + name + " time";
      if (term && pt.time > *term) return name + " observation after end of stay";
      if (!first && !(pt.time > prev)) return "non-monotone " + name + " times";
      prev = pt.time;
      first = false;
    }
  }
  return {};
}

void check_dictionary(const std::map<std::string, ReferenceRange>& ranges, std::string_view file) {
  for (const auto& [name, r] : ranges) {
    if (!(r.lower < r.upper))
      throw IngestError(std::string(file), 0, "reference range for " + name + " has lower >= upper");
  }
  for (const char* required : {"SCr", "AST"}) {
    if (!ranges.count(required))
      throw IngestError(std::string(file), 0,
                        std::string("missing reference range for ") + required);
  }
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError(path.string(), 0, "cannot open file");
  return in;
}

void expect_header(std::istream& in, const std::filesystem::path& path,
                   const std::vector<std::string_view>& header) {
  std::string line;
  if (!std::getline(in, line)) throw IngestError(path.string(), 1, "missing header");
  auto cols = text::split_csv(line);
  bool ok = cols.size() == header.size();
  for (std::size_t i = 0; ok && i < cols.size(); ++i) ok = text::trim(cols[i]) == header[i];
  if (!ok) throw IngestError(path.string(), 1, "unexpected header: " + line);
}

std::optional<double> optional_number(const std::string& field, const std::filesystem::path& path,
                                      std::size_t line, std::string_view column) {
  if (text::trim(field).empty()) return std::nullopt;
  auto v = text::parse_double(field);
  if (!v || !std::isfinite(*v))
    throw IngestError(path.string(), line, "bad number in " + std::string(column) + ": " + field);
  return v;
}

double required_number(const std::string& field, const std::filesystem::path& path,
                       std::size_t line, std::string_view column) {
  auto v = optional_number(field, path, line, column);
  if (!v) throw IngestError(path.string(), line, "missing " + std::string(column));
  return *v;
}

std::string opt_field(const std::optional<double>& v) {
  return v ? text::format_double(*v) : std::string();
}

}  // namespace

std::string_view to_string(Gender g) { return g == Gender::male ? "male" : "female"; }

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::diagnosis: return "diagnosis";
    case EventKind::procedure: return "procedure";
    case EventKind::medication: return "medication";
    case EventKind::device: return "device";
  }
  return "diagnosis";
}

std::string_view to_string(Status s) {
  switch (s) {
    case Status::in_hospital: return "in_hospital";
    case Status::discharged: return "discharged";
    case Status::died: return "died";
  }
  return "in_hospital";
}

std::optional<Gender> parse_gender(std::string_view s) {
  if (s == "male" || s == "M" || s == "m") return Gender::male;
  if (s == "female" || s == "F" || s == "f") return Gender::female;
  return std::nullopt;
}

std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (auto k : {EventKind::diagnosis, EventKind::procedure, EventKind::medication,
                 EventKind::device}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

Status PatientRecord::status() const {
  if (death) return Status::died;
  if (discharge) return Status::discharged;
  return Status::in_hospital;
}

std::optional<Hours> PatientRecord::terminator() const {
  if (death) return death;
  return discharge;
}

const LabSeries* PatientRecord::lab(std::string_view indicator) const {
  auto it = labs.find(std::string(indicator));
  return it == labs.end() ? nullptr : &it->second;
}

bool is_numeric_attribute(std::string_view name) {
  return name == "age" || name == "bmi" || name == "height" || name == "weight" ||
         name == "gender_code";
}

std::optional<double> derived_attribute(const PatientRecord& p, std::string_view name) {
  if (name == "age") return static_cast<double>(p.age);
  if (name == "gender_code") return p.gender == Gender::female ? 1.0 : 0.0;
  if (name == "height") return p.height_m;
  if (name == "weight") return p.weight_kg;
  if (name == "bmi") {
    if (!p.height_m || !p.weight_kg) return std::nullopt;
    return *p.weight_kg / (*p.height_m * *p.height_m);
  }
  throw ValidationError("unknown attribute: " + std::string(name));
}

PatientStore::PatientStore(std::vector<PatientRecord> patients,
                           std::map<std::string, ReferenceRange> ranges,
                           std::vector<std::string> confounders)
    : patients_(std::move(patients)), ranges_(std::move(ranges)), confounders_(std::move(confounders)) {
  std::sort(patients_.begin(), patients_.end(),
            [](const auto& a, const auto& b) { return a.patient_id < b.patient_id; });
  index_.reserve(patients_.size());
  for (std::size_t i = 0; i < patients_.size(); ++i) {
    const auto& p = patients_[i];
    if (!index_.emplace(p.patient_id, i).second)
      throw IngestError(std::string(kMemory), 0, "duplicate patient_id " + p.patient_id);
    if (auto why = check_record(p); !why.empty())
      throw IngestError(std::string(kMemory), 0, "patient " + p.patient_id + ": " + why);
  }
  for (auto& [name, r] : ranges_) r.indicator = name;
  check_dictionary(ranges_, kMemory);
}

const PatientRecord* PatientStore::find(std::string_view id) const {
  auto i = index_of(id);
  return i ? &patients_[*i] : nullptr;
}

std::optional<std::size_t> PatientStore::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const ReferenceRange& PatientStore::range(std::string_view indicator) const {
  auto it = ranges_.find(std::string(indicator));
  if (it == ranges_.end())
    throw ValidationError("no reference range for " + std::string(indicator));
  return it->second;
}

PatientStore PatientStore::with_dictionary(std::map<std::string, ReferenceRange> ranges,
                                           std::vector<std::string> confounders) const {
  PatientStore copy = *this;
  for (auto& [name, r] : ranges) r.indicator = name;
  check_dictionary(ranges, kMemory);
  copy.ranges_ = std::move(ranges);
  copy.confounders_ = std::move(confounders);
  return copy;
}

PatientStore load_store(const std::filesystem::path& patients_file,
                        const std::filesystem::path& events_file,
                        const std::filesystem::path& labs_file,
                        const std::filesystem::path& dictionary_file, LoadReport* report) {
  LoadReport counts;
  std::vector<PatientRecord> patients;
  std::unordered_map<std::string, std::size_t> index;

  {
    auto in = open_input(patients_file);
    expect_header(in, patients_file, kPatientHeader);
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      auto f = text::split_csv(line);
      if (f.size() != kPatientHeader.size())
        throw IngestError(patients_file.string(), lineno, "expected 8 columns");
      PatientRecord p;
      p.patient_id = std::string(text::trim(f[0]));
      if (p.patient_id.empty()) throw IngestError(patients_file.string(), lineno, "empty patient_id");
      auto age = text::parse_int(f[1]);
      if (!age || *age < 0) throw IngestError(patients_file.string(), lineno, "bad age: " + f[1]);
      p.age = static_cast<int>(*age);
      auto g = parse_gender(text::trim(f[2]));
      if (!g) throw IngestError(patients_file.string(), lineno, "bad gender: " + f[2]);
      p.gender = *g;
      p.race = std::string(text::trim(f[3]));
      p.height_m = optional_number(f[4], patients_file, lineno, "height_m");
      p.weight_kg = optional_number(f[5], patients_file, lineno, "weight_kg");
      p.discharge = optional_number(f[6], patients_file, lineno, "discharge_h");
      p.death = optional_number(f[7], patients_file, lineno, "death_h");
      if (!index.emplace(p.patient_id, patients.size()).second)
        throw IngestError(patients_file.string(), lineno, "duplicate patient_id " + p.patient_id);
      if (auto why = check_record(p); !why.empty())
        throw IngestError(patients_file.string(), lineno, why);
      patients.push_back(std::move(p));
    }
  }

  auto lookup = [&](const std::string& id, const std::filesystem::path& file,
                    std::size_t lineno) -> PatientRecord& {
    auto it = index.find(id);
    if (it == index.end())
      throw IngestError(file.string(), lineno, "unknown patient_id " + id);
    return patients[it->second];
  };

  {
    auto in = open_input(events_file);
    expect_header(in, events_file, kEventHeader);
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      auto f = text::split_csv(line);
      if (f.size() != kEventHeader.size())
        throw IngestError(events_file.string(), lineno, "expected 5 columns");
      auto& p = lookup(std::string(text::trim(f[0])), events_file, lineno);
      ClinicalEvent e;
      auto kind = parse_event_kind(text::trim(f[1]));
      if (!kind) throw IngestError(events_file.string(), lineno, "bad event kind: " + f[1]);
      e.kind = *kind;
      e.code = std::string(text::trim(f[2]));
      if (e.code.empty()) throw IngestError(events_file.string(), lineno, "empty event code");
      e.start = required_number(f[3], events_file, lineno, "start_h");
      e.end = optional_number(f[4], events_file, lineno, "end_h");
      p.events.push_back(std::move(e));
      if (auto why = check_record(p); !why.empty())
        throw IngestError(events_file.string(), lineno, why);
      ++counts.events;
    }
  }

  {
    auto in = open_input(labs_file);
    expect_header(in, labs_file, kLabHeader);
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (text::trim(line).empty()) continue;
      auto f = text::split_csv(line);
      if (f.size() != kLabHeader.size())
        throw IngestError(labs_file.string(), lineno, "expected 4 columns");
      auto& p = lookup(std::string(text::trim(f[0])), labs_file, lineno);
      std::string indicator(text::trim(f[1]));
      if (indicator.empty()) throw IngestError(labs_file.string(), lineno, "empty indicator");
      LabPoint pt{required_number(f[2], labs_file, lineno, "time_h"),
                  required_number(f[3], labs_file, lineno, "value")};
      auto& series = p.labs[indicator];
      series.indicator = indicator;
      if (!series.points.empty() && !(pt.time > series.points.back().time))
        throw IngestError(labs_file.string(), lineno,
                          "non-monotone " + indicator + " times for " + p.patient_id);
      if (pt.time < 0.0) throw IngestError(labs_file.string(), lineno, "negative lab time");
      if (auto term = p.terminator(); term && pt.time > *term)
        throw IngestError(labs_file.string(), lineno, "lab observation after end of stay");
      series.points.push_back(pt);
      ++counts.lab_points;
    }
  }

  std::map<std::string, ReferenceRange> ranges;
  std::vector<std::string> confounders;
  {
    auto in = open_input(dictionary_file);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
      for (const auto& [name, bounds] : doc.at("ranges").items()) {
        if (!bounds.is_array() || bounds.size() != 2)
          throw IngestError(dictionary_file.string(), 0, "range for " + name + " must be [lo, hi]");
        ranges[name] = ReferenceRange{name, bounds[0].get<double>(), bounds[1].get<double>()};
      }
      if (doc.contains("confounders"))
        confounders = doc.at("confounders").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw IngestError(dictionary_file.string(), 0, e.what());
    }
    check_dictionary(ranges, dictionary_file.string());
  }

  counts.patients = patients.size();
  if (report) *report = counts;
  return PatientStore(std::move(patients), std::move(ranges), std::move(confounders));
}

PatientStore load_store_dir(const std::filesystem::path& dir, LoadReport* report) {
  return load_store(dir / "patients.csv", dir / "events.csv", dir / "labs.csv",
                    dir / "dictionary.json", report);
}

void save_store_dir(const PatientStore& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream patients(dir / "patients.csv");
  std::ofstream events(dir / "events.csv");
  std::ofstream labs(dir / "labs.csv");
  patients << "patient_id,age,gender,race,height_m,weight_kg,discharge_h,death_h\n";
  events << "patient_id,kind,code,start_h,end_h\n";
  labs << "patient_id,indicator,time_h,value\n";
  for (const auto& p : store.patients()) {
    const auto id = text::csv_field(p.patient_id);
    patients << id << ',' << p.age << ',' << to_string(p.gender) << ',' << text::csv_field(p.race)
             << ',' << opt_field(p.height_m) << ',' << opt_field(p.weight_kg) << ','
             << opt_field(p.discharge) << ',' << opt_field(p.death) << '\n';
    for (const auto& e : p.events) {
      events << id << ',' << to_string(e.kind) << ',' << text::csv_field(e.code) << ','
             << text::format_double(e.start) << ',' << opt_field(e.end) << '\n';
    }
    for (const auto& [name, series] : p.labs) {
      for (const auto& pt : series.points) {
        labs << id << ',' << text::csv_field(name) << ',' << text::format_double(pt.time) << ','
             << text::format_double(pt.value) << '\n';
      }
    }
  }
  nlohmann::ordered_json dict;
  dict["ranges"] = nlohmann::ordered_json::object();
  for (const auto& [name, r] : store.ranges()) dict["ranges"][name] = {r.lower, r.upper};
  dict["confounders"] = store.confounders();
  std::ofstream(dir / "dictionary.json") << dict.dump(2) << '\n';
  if (!patients || !events || !labs)
    throw Error("failed writing store to " + dir.string());
}

}  // namespace trialx
