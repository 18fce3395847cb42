// Command-line front end: run one experiment, compare several, or run the
// built-in self checks.
//
//   gossipgrad run --config configs/barg_spirals.ini [--out metrics.csv]
//   gossipgrad compare --configs a.ini b.ini ...
//   gossipgrad selftest
//
// Log verbosity comes from GOSSIPGRAD_LOG (trace, debug, info, warn, error, off).
// Exit codes: 0 success, 2 invalid configuration, 3 numeric or invariant abort.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "gossipgrad/errors.hpp"
#include "gossipgrad/harness.hpp"
#include "gossipgrad/selftest.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAbort = 3;

void configure_logging() {
  spdlog::set_pattern("[%l] %v");
  const char* level = std::getenv("GOSSIPGRAD_LOG");
  spdlog::set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
}

int guarded(auto&& body) {
  try {
    return body();
  } catch (const gossipgrad::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const gossipgrad::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kExitAbort;
  } catch (const gossipgrad::InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << '\n';
    return kExitAbort;
  } catch (const gossipgrad::ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << '\n';
    return kExitAbort;
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Gossip vs all-reduce data-parallel SGD on a simulated cluster"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  auto* run_cmd = app.add_subcommand("run", "Train one configuration and emit per-step CSV metrics");
  run_cmd->add_option("--config", config_path, "Run config file")->required();
  run_cmd->add_option("--out", out_path, "CSV output path (overrides the config's output key)");

  std::vector<std::string> compare_paths;
  auto* compare_cmd = app.add_subcommand("compare", "Run several configs and report speedup vs the first");
  compare_cmd->add_option("--configs", compare_paths, "Run config files")->required()->expected(1, -1);

  auto* selftest_cmd = app.add_subcommand("selftest", "Oracle-equivalence and diffusion checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (*run_cmd) {
    return guarded([&] {
      auto config = gossipgrad::load_config(config_path);
      if (!out_path.empty()) config.output = out_path;
      const auto metrics = gossipgrad::run(config);
      if (config.output.empty()) std::cout << gossipgrad::to_csv(metrics);
      std::cerr << gossipgrad::summary_line(metrics.summary) << '\n';
      return 0;
    });
  }

  if (*compare_cmd) {
    return guarded([&] {
      std::vector<gossipgrad::RunConfig> configs;
      for (const auto& path : compare_paths) {
        configs.push_back(gossipgrad::load_config(path));
        configs.back().output.clear();
      }
      std::cout << gossipgrad::comparison_table(gossipgrad::compare(configs, compare_paths));
      return 0;
    });
  }

  if (*selftest_cmd) {
    bool ok = true;
    for (const auto& r : gossipgrad::run_selftest()) {
      std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << "  " << r.detail << '\n';
      ok = ok && r.passed;
    }
    return ok ? 0 : 1;
  }
  return 0;
}
