#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "trialx/api/jobs.hpp"
#include "trialx/session.hpp"

namespace httplib {
class Server;
}

namespace trialx::api {

struct ServiceOptions {
  unsigned threads = 1;
  std::filesystem::path cache_dir;    // empty: no result cache
  std::filesystem::path session_dir;  // empty: sessions live in memory only
  std::string cors_origin = "*";
};

struct Request {
  std::string method;
  std::string path;
  std::multimap<std::string, std::string> query;
  std::string body;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// HTTP-independent request router. Error bodies are
/// {"code", "message", "location"?}.
class Service {
 public:
  Service(const PatientStore& store, EngineConfig config, ServiceOptions options);

  Response handle(const Request& request);

  JobManager& jobs() noexcept { return jobs_; }
  const ServiceOptions& options() const noexcept { return options_; }

 private:
  struct SessionSlot {
    std::mutex mutex;  // serializes mutations of one session
    Session session;
  };

  nlohmann::json post_spec(const nlohmann::json& body);
  Response post_evaluate(const nlohmann::json& body);
  nlohmann::json job_status(const std::string& id);
  nlohmann::json candidates(const std::string& grid, const nlohmann::json& query);
  nlohmann::json ticks(const std::string& grid, const nlohmann::json& query);
  nlohmann::json profile(const std::string& grid, const std::string& cid);
  nlohmann::json compare(const nlohmann::json& body);

  Response create_session(const nlohmann::json& body);
  nlohmann::json list_sessions();
  std::shared_ptr<SessionSlot> slot(const std::string& id);
  void persist(const Session& s) const;

  std::shared_ptr<Job> done_job(const std::string& grid);
  CandidateResult candidate_detail(const Job& job, CandidateId id) const;

  const PatientStore* store_;
  ServiceOptions options_;
  JobManager jobs_;
  std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<SessionSlot>> sessions_;
  std::size_t next_session_ = 1;
};

/// Route every request of `server` through `service`, with CORS headers.
void mount(Service& service, httplib::Server& server);

/// Bind the router to a cpp-httplib server and block serving requests.
/// Returns false when the socket cannot be bound.
bool serve(Service& service, const std::string& host, int port);

}  // namespace trialx::api
