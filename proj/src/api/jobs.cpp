#include "trialx/api/jobs.hpp"

#include <chrono>
#include <fstream>

#include <nlohmann/json.hpp>

#include "trialx/dsl/spec.hpp"
#include "trialx/error.hpp"
#include "trialx/text.hpp"

namespace trialx::api {

std::string_view to_string(JobState s) {
  switch (s) {
    case JobState::queued: return "queued";
    case JobState::running: return "running";
    case JobState::done: return "done";
    case JobState::failed: return "failed";
  }
  return "failed";
}

JobManager::JobManager(const PatientStore& store, EngineConfig config, JobOptions options)
    : store_(&store), config_(std::move(config)), options_(std::move(options)) {
  if (!options_.cache_dir.empty()) std::filesystem::create_directories(options_.cache_dir);
}

JobManager::~JobManager() {
  cancel_ = true;
  for (auto& t : workers_) {
    if (t.joinable()) t.join();
  }
}

std::string JobManager::cache_key(const std::string& spec_hash) const {
  const std::string config = to_json(config_).dump();
  return spec_hash + "-" + text::fnv1a_hex(std::string(kEngineVersion) + "\n" + config);
}

std::optional<ResultsTable> JobManager::load_cached(const std::string& key) const {
  if (options_.cache_dir.empty()) return std::nullopt;
  const auto path = options_.cache_dir / (key + ".json");
  if (!std::filesystem::exists(path)) return std::nullopt;
  try {
    return read_results_json(path);
  } catch (const Error&) {
    return std::nullopt;  // unreadable cache entries are recomputed
  }
}

void JobManager::store_cached(const std::string& key, const ResultsTable& results) const {
  if (options_.cache_dir.empty()) return;
  const auto path = options_.cache_dir / (key + ".json");
  const auto tmp = options_.cache_dir / (key + ".json.tmp");
  write_results_json(results, tmp);
  std::filesystem::rename(tmp, path);
}

std::shared_ptr<Job> JobManager::submit(const dsl::CriterionSpec& spec) {
  auto engine = std::make_shared<const Engine>(*store_, spec, config_);  // throws GridTooLargeError
  auto job = std::make_shared<Job>();
  job->spec_hash = dsl::spec_hash(spec);
  job->engine = engine;
  job->total = engine->grid().size();

  const auto key = cache_key(job->spec_hash);
  std::shared_ptr<const ResultsTable> cached;
  {
    std::lock_guard lock(mutex_);
    job->id = "j" + std::to_string(next_id_++);
    if (auto it = by_hash_.find(key); it != by_hash_.end()) cached = it->second;
  }
  if (!cached) {
    if (auto table = load_cached(key)) cached = std::make_shared<const ResultsTable>(std::move(*table));
  }
  std::lock_guard lock(mutex_);
  jobs_[job->id] = job;
  if (cached) {
    job->results = cached;
    job->cache_hit = true;
    job->completed = job->total;
    job->state = JobState::done;
    by_hash_[key] = cached;
    return job;
  }
  workers_.emplace_back([this, job] { run(job); });
  return job;
}

void JobManager::run(std::shared_ptr<Job> job) {
  job->state = JobState::running;
  try {
    SweepOptions sweep;
    sweep.threads = options_.threads;
    sweep.cancel = &cancel_;
    sweep.progress = [&job](std::size_t done, std::size_t) {
      // progress is monotone: only ever raise the counter
      std::size_t cur = job->completed.load();
      while (cur < done && !job->completed.compare_exchange_weak(cur, done)) {
      }
    };
    auto details = std::make_shared<const std::vector<CandidateResult>>(evaluate_grid(*job->engine, sweep));
    auto results = std::make_shared<const ResultsTable>(make_results_table(*job->engine, *details));
    const auto key = cache_key(job->spec_hash);
    try {
      store_cached(key, *results);
    } catch (const std::exception&) {
      // a failing cache write must not fail the job
    }
    std::lock_guard lock(mutex_);
    job->details = details;
    job->results = results;
    by_hash_[key] = results;
    job->completed = job->total;
    job->state = JobState::done;
  } catch (const std::exception& e) {
    std::lock_guard lock(mutex_);
    job->error = e.what();
    job->state = JobState::failed;
  }
}

std::shared_ptr<Job> JobManager::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = jobs_.find(id);
  return it == jobs_.end() ? nullptr : it->second;
}

std::shared_ptr<const ResultsTable> JobManager::results_for(const std::string& spec_hash) const {
  const auto key = cache_key(spec_hash);
  {
    std::lock_guard lock(mutex_);
    if (auto it = by_hash_.find(key); it != by_hash_.end()) return it->second;
  }
  if (auto table = load_cached(key)) return std::make_shared<const ResultsTable>(std::move(*table));
  return nullptr;
}

void JobManager::wait(const Job& job) const {
  while (job.state == JobState::queued || job.state == JobState::running)
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
}

}  // namespace trialx::api
