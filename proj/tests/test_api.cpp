#include <doctest.h>

#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "trialx/api/service.hpp"
#include "trialx/synthetic.hpp"

// after the project headers: <resolv.h> defines a _res macro that breaks Eigen
#include <httplib.h>

using namespace trialx;
using nlohmann::json;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const PatientStore& api_store() {
  static const PatientStore store = [] {
    SyntheticConfig c;
    c.n_patients = 1200;
    c.true_log_hr = -0.4;
    return generate_synthetic(c, 21);
  }();
  return store;
}

struct Client {
  api::Service& service;

  api::Response raw(const std::string& method, const std::string& path, const json& body = nullptr,
                    std::multimap<std::string, std::string> query = {}) {
    return service.handle({method, path, std::move(query), body.is_null() ? "" : body.dump()});
  }
  json call(const std::string& method, const std::string& path, int expected, const json& body = nullptr,
            std::multimap<std::string, std::string> query = {}) {
    const auto r = raw(method, path, body, std::move(query));
    INFO(method << " " << path << " -> " << r.body);
    CHECK(r.status == expected);
    return r.content_type == "application/json" ? json::parse(r.body) : json(r.body);
  }
  std::string evaluate(const std::string& spec_text) {
    const auto j = call("POST", "/api/grid/evaluate", 202, {{"text", spec_text}});
    const auto job = service.jobs().find(j.at("job_id").get<std::string>());
    service.jobs().wait(*job);
    return j.at("grid_id");
  }
};

}  // namespace

TEST_CASE("spec endpoint summarizes or locates errors") {
  api::Service service(api_store(), {}, {});
  Client c{service};
  CHECK(c.call("GET", "/api/health", 200)["status"] == "ok");

  auto j = c.call("POST", "/api/spec", 200, {{"text", slurp(TRIALX_SOURCE_DIR "/specs/case2.tcl")}});
  CHECK(j["adjustables"].size() == 5);
  CHECK(j["grid_size"] == 216);

  j = c.call("POST", "/api/spec", 422, {{"text", "INTERVENTION: x\nINCLUDE a: age > 1\nINCLUDE b: age >>\n"}});
  CHECK(j["code"] == "spec_error");
  CHECK(j["location"]["line"] == 3);

  j = c.call("POST", "/api/spec", 422, {{"text", "INTERVENTION: x\nINCLUDE a: age > $x\n"}});
  CHECK(j["message"].get<std::string>().find("$x") != std::string::npos);

  c.call("POST", "/api/spec", 400, {{"nope", 1}});
  CHECK(c.raw("POST", "/api/spec").status == 400);
  CHECK(service.handle({"POST", "/api/spec", {}, "{not json"}).status == 400);
  c.call("GET", "/api/nothing", 404);
}

TEST_CASE("evaluation jobs, caching and grid queries") {
  const auto cache = fixtures::temp_dir("api_cache");
  api::Service service(api_store(), {}, {2, cache, {}, "*"});
  Client c{service};
  const auto spec = slurp(TRIALX_SOURCE_DIR "/specs/case1.tcl");
  const auto grid = c.evaluate(spec);

  auto status = c.call("GET", "/api/jobs/" + grid, 200);
  CHECK(status["state"] == "done");
  CHECK(status["completed"] == 24);
  CHECK(status["cache_hit"] == false);

  const auto results = c.call("GET", "/api/grid/" + grid + "/results", 200);
  CHECK(results["candidates"].size() == 24);
  const auto csv = c.raw("GET", "/api/grid/" + grid + "/results.csv");
  CHECK(csv.content_type == "text/csv");
  CHECK(std::count(csv.body.begin(), csv.body.end(), '\n') == 25);
  CHECK(c.call("GET", "/api/grid/" + grid, 200).contains("manifest"));

  SUBCASE("repeat submission is a cache hit with identical results") {
    const auto again = c.call("POST", "/api/grid/evaluate", 202, {{"text", spec}});
    CHECK(again["cache_hit"] == true);
    CHECK(again["grid_id"] != grid);
    CHECK(c.call("GET", "/api/grid/" + again["grid_id"].get<std::string>() + "/results", 200) == results);

    // a fresh service finds it on disk
    api::Service other(api_store(), {}, {1, cache, {}, "*"});
    Client c2{other};
    const auto disk = c2.call("POST", "/api/grid/evaluate", 202, {{"text", spec}});
    CHECK(disk["cache_hit"] == true);
    const auto id = disk["grid_id"].get<std::string>();
    CHECK(c2.call("GET", "/api/grid/" + id + "/results", 200) == results);
    // profiles are recomputed after a disk hit
    const auto p1 = c.call("GET", "/api/candidates/" + grid + "/3/profile", 200);
    const auto p2 = c2.call("GET", "/api/candidates/" + id + "/3/profile", 200);
    CHECK(p1 == p2);
  }

  SUBCASE("region queries re-filter the results table") {
    json below = {{"x", "hr"}, {"y", "n"}, {"x_min", 0}, {"x_max", 1.0}, {"y_min", 0}, {"y_max", 1e9}};
    const auto j = c.call("POST", "/api/grid/" + grid + "/candidates", 200, {{"region", below}});
    std::set<long long> expected, got;
    for (const auto& r : results["candidates"]) {
      if (r["status"] == "ok" && r["hr"].get<double>() <= 1.0) expected.insert(r["candidate_id"].get<long long>());
    }
    for (const auto& r : j["candidates"]) got.insert(r["candidate_id"].get<long long>());
    CHECK(got == expected);

    json everything = {{"x", "hr"}, {"y", "n"}, {"x_min", -1e9}, {"x_max", 1e9}, {"y_min", -1e9}, {"y_max", 1e9}};
    std::size_t ok = 0;
    for (const auto& r : results["candidates"]) ok += r["status"] == "ok";
    CHECK(c.call("POST", "/api/grid/" + grid + "/candidates", 200, {{"region", everything}})["count"] == ok);

    json tri = {{"x", "hr"}, {"y", "n"}, {"polygon", {{-1e6, -1e6}, {1e6, -1e6}, {0, 1e6}}}};
    CHECK(c.call("POST", "/api/grid/" + grid + "/candidates", 200, {{"region", tri}})["count"].get<std::size_t>() <= ok);

    c.call("POST", "/api/grid/" + grid + "/candidates", 400, {{"region", {{"x", "color"}, {"y", "n"}}}});
  }

  SUBCASE("constraints and ticks") {
    const auto j = c.call("GET", "/api/grid/" + grid + "/candidates", 200, nullptr,
                          {{"constraints", R"({"age_min": [65], "ventilated": [true]})"}});
    CHECK(j["count"] == 4);
    for (const auto& r : j["candidates"]) {
      CHECK(r["bindings"]["age_min"] == 65);
      CHECK(r["bindings"]["ventilated"] == true);
    }
    const auto conflicting = c.call("POST", "/api/grid/" + grid + "/candidates", 200,
                                    {{"constraints", {{"age_min", json::array()}}}});
    CHECK(conflicting["count"] == 0);
    c.call("POST", "/api/grid/" + grid + "/candidates", 400, {{"constraints", {{"age_min", {19}}}}});

    const auto t = c.call("GET", "/api/grid/" + grid + "/ticks", 200);
    REQUIRE(t["ticks"].size() == 4);
    for (const auto& tick : t["ticks"]) {
      std::size_t sum = 0;
      for (const auto& n : tick["counts"]) sum += n.get<std::size_t>();
      CHECK(sum == 24);
    }
    c.call("GET", "/api/grid/" + grid + "/ticks", 404, nullptr, {{"name", "nope"}});
  }

  SUBCASE("profiles and group comparison") {
    const auto p = c.call("GET", "/api/candidates/" + grid + "/0/profile", 200);
    CHECK(p["candidate_id"] == 0);
    CHECK(p.contains("treated"));
    c.call("GET", "/api/candidates/" + grid + "/99/profile", 404);
    c.call("GET", "/api/candidates/" + grid + "/abc/profile", 400);

    const auto g = c.call("POST", "/api/groups/compare", 200, {{"grid_id", grid}, {"group_a", {0, 1}}, {"group_b", {2, 3, 4}}});
    CHECK(g["group_a"]["members"].size() == 2);
    CHECK(g["group_b"]["members"].size() == 3);
    c.call("POST", "/api/groups/compare", 400, {{"grid_id", grid}, {"group_a", json::array()}, {"group_b", {1}}});
  }

  std::filesystem::remove_all(cache);
}

TEST_CASE("oversized grids are refused with their size") {
  api::Service service(api_store(), [] {
    EngineConfig e;
    e.max_grid = 10;
    return e;
  }(), {});
  Client c{service};
  const auto j = c.call("POST", "/api/grid/evaluate", 413, {{"text", slurp(TRIALX_SOURCE_DIR "/specs/case1.tcl")}});
  CHECK(j["code"] == "grid_too_large");
  CHECK(j["size"] == 24);
  CHECK(j["limit"] == 10);
  c.call("GET", "/api/jobs/j77", 404);
  c.call("GET", "/api/grid/j77/results", 404);
}

TEST_CASE("session lifecycle over the API") {
  const auto dir = fixtures::temp_dir("api_sessions");
  std::string sid;
  json saved;
  {
    api::Service service(api_store(), {}, {1, {}, dir, "*"});
    Client c{service};
    const auto grid = c.evaluate(slurp(TRIALX_SOURCE_DIR "/specs/case1.tcl"));
    c.call("POST", "/api/sessions", 400, json::object());
    c.call("POST", "/api/sessions", 404, {{"spec_hash", "feedface"}});
    const auto s = c.call("POST", "/api/sessions", 201, {{"grid_id", grid}});
    sid = s["session_id"];

    const auto st = c.call("POST", "/api/sessions/" + sid + "/stages", 201,
                           {{"importance", 4}, {"keywords", {"ventilation"}}, {"description", "first look"}});
    CHECK(st["stage_id"] == 1);
    c.call("POST", "/api/sessions/" + sid + "/stages", 422, {{"importance", 9}});

    const auto rec = c.call("POST", "/api/sessions/" + sid + "/stages/1/records", 201,
                            {{"kind", "lasso_select"},
                             {"constraints", {{"age_min", {65}}}},
                             {"selected", {16, 17, 18}},
                             {"axes", {{"x", "hr"}, {"y", "n"}}}});
    CHECK(rec["record_id"] == 1);
    c.call("POST", "/api/sessions/" + sid + "/stages/1/records", 422, {{"selected", {500}}});
    c.call("POST", "/api/sessions/" + sid + "/stages/1/records", 201, {{"constraints", {{"age_min", {18, 40}}}}});

    const auto m = c.call("GET", "/api/sessions/" + sid + "/stages/1/matrix", 200);
    CHECK(m.dump().find("65") != std::string::npos);

    c.call("PATCH", "/api/sessions/" + sid + "/stages/1", 200, {{"description", "edited"}});
    c.call("PATCH", "/api/sessions/" + sid, 404, {{"current_stage", 5}});
    c.call("GET", "/api/sessions/" + sid + "/stages/2", 404);
    const auto report = c.raw("GET", "/api/sessions/" + sid + "/report");
    CHECK(report.content_type == "text/markdown");
    CHECK(report.body.find("edited") != std::string::npos);
    CHECK(c.call("GET", "/api/sessions", 200)["sessions"].size() == 1);
    saved = c.call("GET", "/api/sessions/" + sid, 200);
  }
  // a new service reloads the session from disk
  api::Service service(api_store(), {}, {1, {}, dir, "*"});
  Client c{service};
  CHECK(c.call("GET", "/api/sessions/" + sid, 200) == saved);
  std::filesystem::remove_all(dir);
}

TEST_CASE("HTTP transport serves the router with CORS headers") {
  api::Service service(api_store(), {}, {1, {}, {}, "http://localhost:5173"});
  httplib::Server server;
  api::mount(service, server);
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  httplib::Client client("127.0.0.1", port);
  auto r = client.Get("/api/health");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Access-Control-Allow-Origin") == "http://localhost:5173");

  r = client.Options("/api/spec");
  REQUIRE(r);
  CHECK(r->status == 204);
  CHECK(r->get_header_value("Access-Control-Allow-Methods").find("PATCH") != std::string::npos);

  r = client.Post("/api/spec", R"({"text": "INTERVENTION: x\nINCLUDE a: age >"})", "application/json");
  REQUIRE(r);
  CHECK(r->status == 422);
  CHECK(json::parse(r->body)["location"]["line"] == 2);

  server.stop();
  t.join();
}
