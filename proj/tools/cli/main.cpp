#include <cstdlib>
#include <iostream>
#include <string>

#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "commands.hpp"
#include "gestimate/rng.hpp"

namespace {

bool setup_logging() {
  auto logger = spdlog::stderr_logger_st("gestimate");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("GESTIMATE_LOG");
  std::string level = env ? env : "info";
  if (level == "error")
    spdlog::set_level(spdlog::level::err);
  else if (level == "info")
    spdlog::set_level(spdlog::level::info);
  else if (level == "debug")
    spdlog::set_level(spdlog::level::debug);
  else {
    std::cerr << "GESTIMATE_LOG must be one of error, info, debug (got '" << level << "')\n";
    return false;
  }
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  if (!setup_logging()) return 2;

  CLI::App app{"gestimate: structural nested models and G-estimation"};
  app.require_subcommand(1, 1);
  std::string config;
  int jobs = gestimate::default_jobs();
  std::uint64_t seed = 0;
  std::string out;

  const char* commands[][2] = {{"fit", "estimate a blip model on a panel"},
                               {"simulate", "generate a scenario panel with its truth record"},
                               {"benchmark", "Monte Carlo comparison of estimators on a scenario"},
                               {"sensitivity", "G-estimates over a grid of unmeasured-confounding tilts"},
                               {"predict", "mean outcome under treatment regimes"}};
  CLI::Option* seed_opt = nullptr;
  std::vector<CLI::App*> subs;
  for (auto& c : commands) {
    auto* sub = app.add_subcommand(c[0], c[1]);
    sub->add_option("--config", config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    auto* so = sub->add_option("--seed", seed, "root random seed (overrides the config)");
    sub->add_option("--out", out, "output directory (overrides the config)");
    sub->callback([so, &seed_opt] { seed_opt = so; });
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  gestimate::cli::CommandOptions opts;
  opts.jobs = jobs;
  if (seed_opt && seed_opt->count()) opts.seed = seed;
  if (!out.empty()) opts.output_dir = out;
  for (auto* sub : subs)
    if (sub->parsed()) return gestimate::cli::run_command(sub->get_name(), config, opts);
  return 2;
}
