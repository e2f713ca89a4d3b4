#include "trialx/api/service.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <httplib.h>

#include "trialx/dsl/spec.hpp"
#include "trialx/error.hpp"

namespace trialx::api {

using nlohmann::json;

namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
  json location = nullptr;
  json extra = json::object();
};

[[noreturn]] void fail(int status, std::string code, std::string message) {
  throw HttpError{status, std::move(code), std::move(message)};
}

Response json_response(int status, const json& body) { return {status, "application/json", body.dump()}; }

Response error_response(const HttpError& e) {
  json body{{"code", e.code}, {"message", e.message}};
  if (!e.location.is_null()) body["location"] = e.location;
  for (const auto& [k, v] : e.extra.items()) body[k] = v;
  return json_response(e.status, body);
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    const auto j = path.find('/', i);
    const auto part = path.substr(i, j == std::string::npos ? std::string::npos : j - i);
    if (!part.empty()) parts.push_back(part);
    if (j == std::string::npos) break;
    i = j + 1;
  }
  return parts;
}

json parse_body(const std::string& body) {
  if (body.empty()) return json::object();
  try {
    auto j = json::parse(body);
    if (!j.is_object()) fail(400, "bad_request", "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    fail(400, "bad_request", std::string("invalid JSON body: ") + e.what());
  }
}

/// Query parameters as a JSON object; values that parse as JSON are parsed.
json query_json(const std::multimap<std::string, std::string>& query) {
  json j = json::object();
  for (const auto& [k, v] : query) {
    try {
      j[k] = json::parse(v);
    } catch (const json::parse_error&) {
      j[k] = v;
    }
  }
  return j;
}

CandidateId parse_candidate(const std::string& s) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used);
    if (used == s.size()) return static_cast<CandidateId>(v);
  } catch (const std::exception&) {
  }
  fail(400, "bad_request", "invalid candidate id '" + s + "'");
}

int parse_int_segment(const std::string& s, const char* what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  fail(400, "bad_request", std::string("invalid ") + what + " '" + s + "'");
}

std::string spec_text(const json& body) {
  if (!body.contains("text") || !body.at("text").is_string())
    fail(400, "bad_request", "body must contain the criteria as a string field 'text'");
  return body.at("text").get<std::string>();
}

dsl::CriterionSpec parse_or_422(const std::string& text) {
  try {
    return dsl::parse_spec(text);
  } catch (const SpecError& e) {
    HttpError err{422, "spec_error", e.message()};
    err.location = {{"line", e.line()}, {"column", e.column()}};
    throw err;
  }
}

/// Scatter-plot region: rectangle or lasso polygon over two metrics.
struct Region {
  std::string x, y;
  std::optional<std::array<double, 4>> rect;  // x_min, x_max, y_min, y_max
  std::vector<std::pair<double, double>> polygon;

  bool contains(double px, double py) const {
    if (rect) return px >= (*rect)[0] && px <= (*rect)[1] && py >= (*rect)[2] && py <= (*rect)[3];
    bool inside = false;
    for (std::size_t i = 0, j = polygon.size() - 1; i < polygon.size(); j = i++) {
      const auto [xi, yi] = polygon[i];
      const auto [xj, yj] = polygon[j];
      if ((yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi) inside = !inside;
    }
    return inside;
  }
};

Region parse_region(const json& j) {
  if (!j.is_object()) fail(400, "bad_request", "region must be an object");
  Region r;
  try {
    r.x = j.at("x").get<std::string>();
    r.y = j.at("y").get<std::string>();
    if (j.contains("polygon")) {
      for (const auto& p : j.at("polygon")) r.polygon.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      if (r.polygon.size() < 3) fail(400, "bad_request", "region polygon needs at least 3 points");
    } else {
      r.rect = std::array<double, 4>{j.at("x_min").get<double>(), j.at("x_max").get<double>(),
                                     j.at("y_min").get<double>(), j.at("y_max").get<double>()};
    }
  } catch (const json::exception& e) {
    fail(400, "bad_request", std::string("malformed region: ") + e.what());
  }
  if (!is_metric_name(r.x) || !is_metric_name(r.y)) fail(400, "bad_request", "region axes must be outcome metrics");
  return r;
}

}  // namespace

Service::Service(const PatientStore& store, EngineConfig config, ServiceOptions options)
    : store_(&store), options_(options), jobs_(store, std::move(config), JobOptions{options.threads, options.cache_dir}) {
  if (options_.session_dir.empty()) return;
  std::filesystem::create_directories(options_.session_dir);
  for (const auto& entry : std::filesystem::directory_iterator(options_.session_dir)) {
    if (entry.path().extension() != ".json") continue;
    auto s = std::make_shared<SessionSlot>();
    s->session = load_session(entry.path());
    sessions_[s->session.session_id] = s;
    if (s->session.session_id.size() > 1 && s->session.session_id[0] == 's') {
      try {
        next_session_ = std::max(next_session_, std::stoul(s->session.session_id.substr(1)) + 1);
      } catch (const std::exception&) {
      }
    }
  }
}

json Service::post_spec(const json& body) {
  const auto spec = parse_or_422(spec_text(body));
  json adj = json::array();
  for (const auto& a : spec.adjustables) {
    json values = json::array();
    for (const auto& v : a.values) values.push_back(dsl::to_json(v));
    adj.push_back({{"name", a.name}, {"values", values}, {"unit", a.unit ? json(*a.unit) : json(nullptr)}, {"role", a.role}});
  }
  return {{"spec_hash", dsl::spec_hash(spec)},
          {"canonical", dsl::serialize_spec(spec)},
          {"grid_size", grid_size(spec.adjustables)},
          {"max_grid", jobs_.config().max_grid},
          {"adjustables", adj},
          {"spec", dsl::to_json(spec)}};
}

Response Service::post_evaluate(const json& body) {
  const auto spec = parse_or_422(spec_text(body));
  std::shared_ptr<Job> job;
  try {
    job = jobs_.submit(spec);
  } catch (const GridTooLargeError& e) {
    HttpError err{413, "grid_too_large", e.what()};
    err.extra = {{"size", e.size()}, {"limit", e.limit()}};
    throw err;
  }
  return json_response(202, {{"job_id", job->id},
                             {"grid_id", job->id},
                             {"spec_hash", job->spec_hash},
                             {"state", to_string(job->state.load())},
                             {"cache_hit", job->cache_hit},
                             {"total", job->total}});
}

json Service::job_status(const std::string& id) {
  auto job = jobs_.find(id);
  if (!job) fail(404, "not_found", "no job " + id);
  json j{{"job_id", job->id},
         {"spec_hash", job->spec_hash},
         {"state", to_string(job->state.load())},
         {"completed", job->completed.load()},
         {"total", job->total},
         {"cache_hit", job->cache_hit}};
  if (job->state == JobState::failed) j["error"] = job->error;
  return j;
}

std::shared_ptr<Job> Service::done_job(const std::string& grid) {
  auto job = jobs_.find(grid);
  if (!job) fail(404, "not_found", "no grid " + grid);
  if (job->state == JobState::failed) fail(409, "job_failed", "evaluation of grid " + grid + " failed: " + job->error);
  if (job->state != JobState::done) fail(409, "not_ready", "grid " + grid + " is still being evaluated");
  return job;
}

json Service::candidates(const std::string& grid, const json& query) {
  auto job = done_job(grid);
  const auto& results = *job->results;
  Constraints constraints;
  std::vector<CandidateId> ids;
  try {
    if (query.contains("constraints")) constraints = constraints_from_json(query.at("constraints"));
    ids = job->engine->grid().filter(constraints);
  } catch (const ValidationError& e) {
    fail(400, "bad_constraints", e.what());
  }
  std::optional<Region> region;
  if (query.contains("region") && !query.at("region").is_null()) region = parse_region(query.at("region"));
  const bool include_degenerate = query.value("include_degenerate", !region.has_value());

  json out = json::array();
  for (CandidateId id : ids) {
    const auto& row = results.row(id);
    if (!row.ok() && (!include_degenerate || region)) continue;
    if (region) {
      const auto x = metric_value(row, region->x);
      const auto y = metric_value(row, region->y);
      if (!x || !y || !region->contains(*x, *y)) continue;
    }
    out.push_back(outcome_json(row));
  }
  return {{"grid_id", grid}, {"count", out.size()}, {"candidates", out}};
}

json Service::ticks(const std::string& grid, const json& query) {
  auto job = done_job(grid);
  const auto& g = job->engine->grid();
  Constraints constraints;
  json out = json::array();
  try {
    if (query.contains("constraints")) constraints = constraints_from_json(query.at("constraints"));
    for (const auto& a : g.adjustables()) {
      if (query.contains("name") && query.at("name") != a.name) continue;
      json values = json::array();
      for (const auto& v : a.values) values.push_back(dsl::to_json(v));
      out.push_back({{"name", a.name}, {"role", a.role}, {"values", values}, {"counts", g.tick_counts(a.name, constraints)}});
    }
    g.filter(constraints);  // rejects unknown names and values
  } catch (const ValidationError& e) {
    fail(400, "bad_constraints", e.what());
  }
  if (query.contains("name") && out.empty()) fail(404, "not_found", "no adjustable " + query.at("name").dump());
  return {{"grid_id", grid}, {"ticks", out}};
}

CandidateResult Service::candidate_detail(const Job& job, CandidateId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= job.total)
    fail(404, "not_found", "candidate " + std::to_string(id) + " is outside the grid");
  if (job.details) return (*job.details)[static_cast<std::size_t>(id)];
  return job.engine->evaluate(id);
}

json Service::profile(const std::string& grid, const std::string& cid) {
  auto job = done_job(grid);
  const auto id = parse_candidate(cid);
  const auto detail = candidate_detail(*job, id);
  TemporalProfile p;
  p.candidate_id = id;
  if (detail.profile) p = *detail.profile;
  json j = to_json(p);
  j["outcome"] = outcome_json(job->results->row(id));
  return j;
}

json Service::compare(const json& body) {
  if (!body.contains("grid_id") || !body.at("grid_id").is_string()) fail(400, "bad_request", "missing grid_id");
  auto job = done_job(body.at("grid_id").get<std::string>());
  auto group = [&](const char* key) {
    if (!body.contains(key) || !body.at(key).is_array() || body.at(key).empty())
      fail(400, "bad_request", std::string(key) + " must be a nonempty array of candidate ids");
    std::vector<TemporalProfile> profiles;
    std::vector<MetricValues> metrics;
    for (const auto& v : body.at(key)) {
      if (!v.is_number_integer()) fail(400, "bad_request", std::string(key) + " must hold integer ids");
      const auto id = v.get<CandidateId>();
      const auto detail = candidate_detail(*job, id);
      TemporalProfile p;
      p.candidate_id = id;
      if (detail.profile) p = *detail.profile;
      profiles.push_back(std::move(p));
      const auto& row = job->results->row(id);
      metrics.push_back(row.ok() ? row.metric_values() : MetricValues{});
    }
    return to_json(aggregate_group(profiles, metrics));
  };
  return {{"group_a", group("group_a")}, {"group_b", group("group_b")}};
}

void Service::persist(const Session& s) const {
  if (options_.session_dir.empty()) return;
  save_session(s, options_.session_dir / (s.session_id + ".json"));
}

Response Service::create_session(const json& body) {
  std::string hash;
  if (body.contains("grid_id")) {
    hash = done_job(body.at("grid_id").get<std::string>())->spec_hash;
  } else if (body.contains("spec_hash") && body.at("spec_hash").is_string()) {
    hash = body.at("spec_hash").get<std::string>();
    if (!jobs_.results_for(hash)) fail(404, "not_found", "no evaluated results for spec hash " + hash);
  } else {
    fail(400, "bad_request", "a session needs a grid_id or spec_hash");
  }
  auto s = std::make_shared<SessionSlot>();
  s->session.spec_hash = hash;
  {
    std::lock_guard lock(sessions_mutex_);
    s->session.session_id = "s" + std::to_string(next_session_++);
    sessions_[s->session.session_id] = s;
  }
  std::lock_guard lock(s->mutex);
  persist(s->session);
  return json_response(201, to_json(s->session));
}

json Service::list_sessions() {
  std::lock_guard lock(sessions_mutex_);
  json out = json::array();
  for (const auto& [id, s] : sessions_) {
    std::lock_guard slock(s->mutex);
    out.push_back({{"session_id", id}, {"spec_hash", s->session.spec_hash}, {"stages", s->session.stages.size()}});
  }
  return {{"sessions", out}};
}

std::shared_ptr<Service::SessionSlot> Service::slot(const std::string& id) {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) fail(404, "not_found", "no session " + id);
  return it->second;
}

Response Service::handle(const Request& req) {
  try {
    const auto parts = split_path(req.path);
    const auto& m = req.method;
    const auto n = parts.size();
    if (n == 0 || parts[0] != "api") fail(404, "not_found", "no route " + req.path);
    auto is = [&](std::initializer_list<const char*> pattern) {
      if (pattern.size() != n) return false;
      std::size_t i = 0;
      for (const char* p : pattern) {
        if (std::string_view(p) != "*" && parts[i] != p) return false;
        ++i;
      }
      return true;
    };

    if (m == "GET" && is({"api", "health"})) return json_response(200, {{"status", "ok"}, {"patients", store_->size()}});
    if (m == "POST" && is({"api", "spec"})) return json_response(200, post_spec(parse_body(req.body)));
    if (m == "POST" && is({"api", "grid", "evaluate"})) return post_evaluate(parse_body(req.body));
    if (m == "GET" && is({"api", "jobs", "*"})) return json_response(200, job_status(parts[2]));
    if (m == "GET" && is({"api", "grid", "*"})) {
      auto j = job_status(parts[2]);
      j["manifest"] = jobs_.find(parts[2])->engine->grid().manifest();
      return json_response(200, j);
    }
    if (m == "GET" && is({"api", "grid", "*", "results"}))
      return json_response(200, to_json(*done_job(parts[2])->results));
    if (m == "GET" && is({"api", "grid", "*", "results.csv"}))
      return {200, "text/csv", results_csv(*done_job(parts[2])->results)};
    if ((m == "GET" || m == "POST") && is({"api", "grid", "*", "candidates"})) {
      const auto q = m == "GET" ? query_json(req.query) : parse_body(req.body);
      return json_response(200, candidates(parts[2], q));
    }
    if ((m == "GET" || m == "POST") && is({"api", "grid", "*", "ticks"})) {
      const auto q = m == "GET" ? query_json(req.query) : parse_body(req.body);
      return json_response(200, ticks(parts[2], q));
    }
    if (m == "GET" && is({"api", "candidates", "*", "*", "profile"})) return json_response(200, profile(parts[2], parts[3]));
    if (m == "POST" && is({"api", "groups", "compare"})) return json_response(200, compare(parse_body(req.body)));

    if (n >= 2 && parts[1] == "sessions") {
      if (m == "POST" && n == 2) return create_session(parse_body(req.body));
      if (m == "GET" && n == 2) return json_response(200, list_sessions());
      if (n < 3) fail(405, "method_not_allowed", m + " " + req.path);
      auto s = slot(parts[2]);
      std::lock_guard lock(s->mutex);
      Session& session = s->session;
      auto results = [&] {
        auto r = jobs_.results_for(session.spec_hash);
        if (!r) fail(409, "not_ready", "no evaluated results for the session's spec hash");
        return r;
      };
      if (n == 3) {
        if (m == "GET") return json_response(200, to_json(session));
        if (m == "PATCH") {
          const auto body = parse_body(req.body);
          if (body.contains("current_stage")) {
            const int id = body.at("current_stage").get<int>();
            try {
              session.stage(id);
            } catch (const ValidationError& e) {
              fail(404, "not_found", e.what());
            }
            session.current_stage = id;
          }
          persist(session);
          return json_response(200, to_json(session));
        }
      }
      if (n >= 4 && parts[3] == "report" && m == "GET" && n == 4) {
        auto r = jobs_.results_for(session.spec_hash);
        return {200, "text/markdown", session_report(session, r.get())};
      }
      if (n >= 4 && parts[3] == "stages") {
        if (n == 4 && m == "POST") {
          const int id = create_stage(session, stage_meta_from_json(parse_body(req.body)));
          persist(session);
          return json_response(201, to_json(session.stage(id)));
        }
        if (n == 4 && m == "GET") {
          json out = json::array();
          for (const auto& st : session.stages) out.push_back(to_json(st));
          return json_response(200, {{"stages", out}});
        }
        if (n >= 5) {
          const int sid = parse_int_segment(parts[4], "stage id");
          Stage* stage = nullptr;
          try {
            stage = &session.stage(sid);
          } catch (const ValidationError& e) {
            fail(404, "not_found", e.what());
          }
          if (n == 5 && m == "GET") return json_response(200, to_json(*stage));
          if (n == 5 && m == "PATCH") {
            auto merged = to_json(stage->meta);
            merged.update(parse_body(req.body));
            update_stage(session, sid, stage_meta_from_json(merged));
            persist(session);
            return json_response(200, to_json(*stage));
          }
          if (n == 6 && parts[5] == "records" && m == "POST") {
            const auto r = results();
            append_record(session, sid, record_from_json(parse_body(req.body)), *r);
            persist(session);
            return json_response(201, to_json(stage->records.back()));
          }
          if (n == 6 && parts[5] == "records" && m == "GET") {
            json out = json::array();
            for (const auto& r : stage->records) out.push_back(to_json(r));
            return json_response(200, {{"records", out}});
          }
          if (n == 6 && parts[5] == "matrix" && m == "GET")
            return json_response(200, to_json(matrix_data(*stage, results()->adjustables)));
        }
      }
    }
    fail(404, "not_found", "no route " + m + " " + req.path);
  } catch (const HttpError& e) {
    return error_response(e);
  } catch (const ValidationError& e) {
    return error_response({422, "validation_error", e.what()});
  } catch (const std::exception& e) {
    return error_response({500, "internal_error", e.what()});
  }
}

void mount(Service& service, httplib::Server& server) {
  const std::string origin = service.options().cors_origin;
  server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                              {"Access-Control-Allow-Methods", "GET, POST, PATCH, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
  auto bridge = [&service](const httplib::Request& req, httplib::Response& res) {
    Request r{req.method, req.path, {}, req.body};
    for (const auto& [k, v] : req.params) r.query.emplace(k, v);
    const auto out = service.handle(r);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
  };
  server.Get(".*", bridge);
  server.Post(".*", bridge);
  server.Patch(".*", bridge);
  server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
}

bool serve(Service& service, const std::string& host, int port) {
  httplib::Server server;
  mount(service, server);
  return server.listen(host, port);
}

}  // namespace trialx::api
