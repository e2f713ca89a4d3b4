#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "trialx/dsl/ast.hpp"
#include "trialx/engine.hpp"

namespace trialx::api {

enum class JobState { queued, running, done, failed };
std::string_view to_string(JobState s);

/// One grid evaluation. Fields other than the atomics are written before
/// the job becomes visible or under JobManager's lock.
struct Job {
  std::string id;
  std::string spec_hash;
  std::shared_ptr<const Engine> engine;
  std::atomic<JobState> state{JobState::queued};
  std::atomic<std::size_t> completed{0};
  std::size_t total = 0;
  bool cache_hit = false;
  std::string error;
  std::shared_ptr<const ResultsTable> results;
  /// Full per-candidate results when computed in this process; empty after
  /// a cache hit (profiles are then recomputed on demand).
  std::shared_ptr<const std::vector<CandidateResult>> details;
};

struct JobOptions {
  unsigned threads = 1;
  /// Where results documents are cached; empty disables the disk cache.
  std::filesystem::path cache_dir;
};

/// Runs evaluations in background threads and keeps finished results.
class JobManager {
 public:
  JobManager(const PatientStore& store, EngineConfig config, JobOptions options);
  ~JobManager();
  JobManager(const JobManager&) = delete;
  JobManager& operator=(const JobManager&) = delete;

  const EngineConfig& config() const noexcept { return config_; }

  /// Validates the grid size synchronously (GridTooLargeError) and queues
  /// the sweep. A cached result completes the job immediately.
  std::shared_ptr<Job> submit(const dsl::CriterionSpec& spec);

  std::shared_ptr<Job> find(const std::string& id) const;
  /// Most recent finished results for a spec hash, from memory or disk.
  std::shared_ptr<const ResultsTable> results_for(const std::string& spec_hash) const;
  /// Block until the job leaves queued/running.
  void wait(const Job& job) const;

  std::string cache_key(const std::string& spec_hash) const;

 private:
  std::optional<ResultsTable> load_cached(const std::string& key) const;
  void store_cached(const std::string& key, const ResultsTable& results) const;
  void run(std::shared_ptr<Job> job);

  const PatientStore* store_;
  EngineConfig config_;
  JobOptions options_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Job>> jobs_;
  std::map<std::string, std::shared_ptr<const ResultsTable>> by_hash_;
  std::vector<std::thread> workers_;
  std::atomic<bool> cancel_{false};
  std::size_t next_id_ = 1;
};

}  // namespace trialx::api
