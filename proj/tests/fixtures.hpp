#pragma once

#include <unistd.h>

#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "trialx/ehr.hpp"

namespace fixtures {

inline trialx::PatientRecord patient(const std::string& id, int age, trialx::Gender gender = trialx::Gender::male,
                                     std::string race = "white") {
  trialx::PatientRecord p;
  p.patient_id = id;
  p.age = age;
  p.gender = gender;
  p.race = std::move(race);
  return p;
}

inline std::map<std::string, trialx::ReferenceRange> default_ranges() {
  return {{"SCr", {"SCr", 0.6, 1.3}}, {"AST", {"AST", 8.0, 40.0}}};
}

inline trialx::PatientStore store(std::vector<trialx::PatientRecord> patients,
                                  std::vector<std::string> confounders = {"age", "gender_code", "race"}) {
  return trialx::PatientStore(std::move(patients), default_ranges(), std::move(confounders));
}

inline void add_event(trialx::PatientRecord& p, const std::string& code, trialx::Hours start,
                      trialx::EventKind kind = trialx::EventKind::diagnosis) {
  p.events.push_back({kind, code, start, std::nullopt});
}

inline void add_lab(trialx::PatientRecord& p, const std::string& indicator, trialx::Hours t, double v) {
  auto& s = p.labs[indicator];
  s.indicator = indicator;
  s.points.push_back({t, v});
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("trialx_test_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
