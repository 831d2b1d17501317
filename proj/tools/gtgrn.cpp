#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gtgrn/cli/config.hpp"
#include "gtgrn/cli/pipeline.hpp"
#include "gtgrn/numcore/allocator.hpp"

namespace {

// One line per command so shell pipelines can pick out the headline numbers.
void print_summary(const std::string& command, const nlohmann::json& report) {
  std::cout << command << ": report " << report["artifacts"]["report"].get<std::string>() << '\n';
  const auto& results = report["results"];
  if (results.contains("metrics")) {
    const auto& m = results["metrics"];
    std::cout << "test auroc " << m["test"]["auroc"].get<double>() << " auprc " << m["test"]["auprc"].get<double>()
              << " | pearson auroc " << m["pearson_test"]["auroc"].get<double>() << '\n';
  }
  if (results.contains("ablation")) {
    for (const auto& row : results["ablation"])
      std::cout << row["feature_set"].get<std::string>() << " auroc " << row["auroc"].get<double>() << '\n';
  }
  if (results.contains("grid")) {
    const auto& s = results["grid"]["summary"]["test_auroc"];
    std::cout << "grid test auroc min " << s["min"].get<double>() << " median " << s["median"].get<double>()
              << " max " << s["max"].get<double>() << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  gtgrn::numcore::tune_allocator();

  CLI::App app{"Graph-transformer gene regulatory network inference"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> jobs;
  std::vector<std::string> overrides;
  bool dump_config = false;
  app.add_option("--config", config_path, "INI or JSON config file (a run report is accepted)")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed of the model-side stages");
  app.add_option("--out", out, "Output directory");
  app.add_option("--jobs", jobs, "Concurrent jobs (ensemble, walks, ablation and grid cells)")
      ->check(CLI::PositiveNumber);
  app.add_option("--set", overrides, "Override one key: section.key=value (repeatable)");
  app.add_flag("--dump-config", dump_config, "Print the resolved config as JSON and exit");
  app.fallthrough();

  for (const std::string& name : gtgrn::cli::command_names()) app.add_subcommand(name, "Run stage " + name);

  CLI11_PARSE(app, argc, argv);

  try {
    gtgrn::cli::PipelineConfig config;
    if (!config_path.empty()) gtgrn::cli::apply_file(config, config_path);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw gtgrn::ParseError("--set expects section.key=value, got '" + kv + "'");
      gtgrn::cli::set_value(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) config.seeds.master = *seed;
    if (out) config.paths.out = *out;
    if (jobs) config.jobs = *jobs;
    gtgrn::cli::validate(config);

    if (dump_config) {
      std::cout << gtgrn::cli::config_to_json(config).dump(2) << '\n';
      return 0;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    const nlohmann::json report = gtgrn::cli::run_command(command, config);
    print_summary(command, report);
  } catch (const std::exception& e) {
    std::cerr << "gtgrn: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
