#include <CLI11.hpp>

#include <longbio/pipeline.hpp>

#include <algorithm>
#include <iostream>
#include <string>
#include <vector>

namespace {

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic long-context biography benchmark pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "pipeline config JSON")->required();
  std::optional<uint64_t> seed;
  app.add_option("--seed", seed, "override the config seed");
  std::vector<long> budgets;
  app.add_option("--budget", budgets, "replace the budget list")->delimiter(',');
  std::vector<std::string> tasks;
  app.add_option("--task", tasks, "restrict to these configured tasks")->delimiter(',');
  std::optional<std::string> endpoint;
  app.add_option("--endpoint", endpoint, "override endpoint.url");
  bool dry_run = false;
  app.add_flag("--dry-run", dry_run, "run: export request bodies instead of posting");

  app.add_subcommand("generate", "build suites from the config");
  app.add_subcommand("run", "post suites to the endpoint, resumably");
  app.add_subcommand("score", "score run logs against their suites");
  app.add_subcommand("report", "aggregate score logs into CSV tables");

  CLI11_PARSE(app, argc, argv);

  longbio::Overrides overrides;
  overrides.seed = seed;
  overrides.budgets = budgets;
  overrides.tasks = tasks;
  overrides.endpoint_url = endpoint;
  overrides.dry_run = dry_run;

  try {
    longbio::PipelineConfig config = longbio::load_config(config_path);
    const std::string command = app.get_subcommands().front()->get_name();
    return longbio::run_pipeline(command, std::move(config), overrides, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
}
