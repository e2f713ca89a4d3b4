#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "trialx/api/service.hpp"
#include "trialx/dsl/spec.hpp"
#include "trialx/engine.hpp"
#include "trialx/error.hpp"
#include "trialx/session.hpp"
#include "trialx/synthetic.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw trialx::Error("cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw trialx::Error("cannot write " + path);
  out << content;
  if (!out) throw trialx::Error("cannot write " + path);
}

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw trialx::ValidationError(path + ": " + e.what());
  }
}

trialx::dsl::CriterionSpec read_spec(const std::string& path) { return trialx::dsl::parse_spec(read_file(path)); }

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eligibility-criteria candidate explorer"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::uint64_t seed = 1;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic EHR cohort");
  simulate->add_option("--config", config_path, "Generator config (JSON)")->check(CLI::ExistingFile);
  simulate->add_option("--seed", seed, "Random seed");
  simulate->add_option("--out", out_dir, "Output directory")->required();

  std::string spec_path;
  std::size_t max_grid = trialx::kDefaultMaxGrid;
  auto* validate = app.add_subcommand("validate", "Parse and validate criteria; print the grid size");
  validate->add_option("--spec", spec_path, "Criteria file")->required();
  validate->add_option("--max-grid", max_grid, "Largest grid accepted");

  std::string data_dir, results_path, csv_path, engine_config_path;
  unsigned threads = 1;
  int horizon_days = 0;
  bool progress = false;
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate every criterion candidate");
  evaluate->add_option("--data", data_dir, "Store directory")->required();
  evaluate->add_option("--spec", spec_path, "Criteria file")->required();
  evaluate->add_option("--out", results_path, "Results JSON")->required();
  evaluate->add_option("--csv", csv_path, "Also write CSV");
  evaluate->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  evaluate->add_option("--horizon-days", horizon_days, "Outcome horizon in days")->check(CLI::PositiveNumber);
  evaluate->add_option("--config", engine_config_path, "Engine config (JSON)")->check(CLI::ExistingFile);
  evaluate->add_option("--max-grid", max_grid, "Largest grid accepted");
  evaluate->add_flag("--progress", progress, "Report progress on stderr");

  std::string session_path, report_path;
  auto* report = app.add_subcommand("report", "Export a session's stage history as Markdown");
  report->add_option("--results", results_path, "Results JSON")->required();
  report->add_option("--session", session_path, "Session JSON")->required();
  report->add_option("--out", report_path, "Markdown output")->required();

  std::string host = env_or("TRIALX_HOST", "127.0.0.1");
  int port = std::atoi(env_or("TRIALX_PORT", "8080").c_str());
  std::string cache_dir = env_or("TRIALX_CACHE_DIR", "");
  std::string session_dir = env_or("TRIALX_SESSION_DIR", "");
  std::string cors_origin = env_or("TRIALX_CORS_ORIGIN", "*");
  auto* serve = app.add_subcommand("serve", "Start the HTTP API");
  serve->add_option("--data", data_dir, "Store directory")->required();
  serve->add_option("--port", port, "Port (env TRIALX_PORT)");
  serve->add_option("--host", host, "Bind address (env TRIALX_HOST)");
  serve->add_option("--cache-dir", cache_dir, "Results cache directory (env TRIALX_CACHE_DIR)");
  serve->add_option("--session-dir", session_dir, "Session directory (env TRIALX_SESSION_DIR)");
  serve->add_option("--cors-origin", cors_origin, "Allowed CORS origin (env TRIALX_CORS_ORIGIN)");
  serve->add_option("--threads", threads, "Worker threads per job")->check(CLI::PositiveNumber);
  serve->add_option("--config", engine_config_path, "Engine config (JSON)")->check(CLI::ExistingFile);
  serve->add_option("--horizon-days", horizon_days, "Outcome horizon in days")->check(CLI::PositiveNumber);
  serve->add_option("--max-grid", max_grid, "Largest grid accepted");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  auto engine_config = [&] {
    trialx::EngineConfig c;
    if (!engine_config_path.empty()) c = trialx::engine_config_from_json(read_json(engine_config_path));
    if (horizon_days > 0) c.horizon_days = horizon_days;
    if (max_grid != trialx::kDefaultMaxGrid) c.max_grid = max_grid;
    return c;
  };

  try {
    if (*simulate) {
      trialx::SyntheticConfig config;
      if (!config_path.empty()) config = trialx::synthetic_config_from_json(read_json(config_path));
      const auto store = trialx::generate_synthetic(config, seed);
      trialx::save_store_dir(store, out_dir);
      std::cout << "wrote " << store.size() << " patients to " << out_dir << "\n";
    } else if (*validate) {
      const auto spec = read_spec(spec_path);
      const auto size = trialx::grid_size(spec.adjustables);
      std::cout << "adjustables: " << spec.adjustables.size() << "\n";
      std::cout << "grid size: " << size << "\n";
      if (size > max_grid) {
        std::cerr << "error: grid size " << size << " exceeds the limit " << max_grid << "\n";
        return kExitValidation;
      }
    } else if (*evaluate) {
      trialx::LoadReport load;
      const auto store = trialx::load_store_dir(data_dir, &load);
      const trialx::Engine engine(store, read_spec(spec_path), engine_config());
      trialx::SweepOptions sweep;
      sweep.threads = threads;
      if (progress) {
        sweep.progress = [](std::size_t done, std::size_t total) {
          static std::mutex m;
          std::lock_guard lock(m);
          std::cerr << "\r" << done << "/" << total << std::flush;
          if (done == total) std::cerr << "\n";
        };
      }
      const auto results = trialx::evaluate_grid(engine, sweep);
      const auto table = trialx::make_results_table(engine, results);
      trialx::write_results_json(table, results_path);
      if (!csv_path.empty()) write_file(csv_path, trialx::results_csv(table));
      std::size_t ok = 0;
      for (const auto& r : table.rows) ok += r.ok() ? 1 : 0;
      std::cout << table.rows.size() << " candidates (" << ok << " ok, " << table.rows.size() - ok
                << " degenerate) over " << store.size() << " patients\n";
    } else if (*report) {
      const auto table = trialx::read_results_json(results_path);
      const auto session = trialx::load_session(session_path);
      if (session.spec_hash != table.spec_hash) {
        std::cerr << "error: session spec hash " << session.spec_hash << " does not match results "
                  << table.spec_hash << "\n";
        return kExitValidation;
      }
      write_file(report_path, trialx::session_report(session, &table));
    } else if (*serve) {
      const auto store = trialx::load_store_dir(data_dir);
      trialx::api::ServiceOptions options;
      options.threads = threads;
      options.cache_dir = cache_dir;
      options.session_dir = session_dir;
      options.cors_origin = cors_origin;
      trialx::api::Service service(store, engine_config(), options);
      std::cout << "serving " << store.size() << " patients on http://" << host << ":" << port << "\n" << std::flush;
      if (!trialx::api::serve(service, host, port)) {
        std::cerr << "error: cannot listen on " << host << ":" << port << "\n";
        return kExitRuntime;
      }
    }
  } catch (const trialx::SpecError& e) {
    std::cerr << "error: " << spec_path << ":" << e.what() << "\n";
    return kExitValidation;
  } catch (const trialx::IngestError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const trialx::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const trialx::GridTooLargeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const trialx::CorruptFileError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const trialx::VersionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
