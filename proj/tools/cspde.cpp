#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cspde/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Small-noise experiments for SDEs with interaction driven by common noise"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_dir;
  std::size_t workers = 1;
  bool strict = false;
  std::optional<std::uint64_t> seed_override;

  app.add_option("--config", config_path, "JSON run configuration")->required();
  app.add_option("--out", out_dir, "output directory (overrides output.dir)");
  app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--strict", strict, "exit 3 when the command's assertions fail");
  app.add_option("--seed-override", seed_override, "replace noise.seed");

  for (const auto& name : cspde::command_names()) app.add_subcommand(name, "run the " + name + " command");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    auto cfg = cspde::load_config(config_path);
    if (!out_dir.empty()) cfg.output_dir = out_dir;
    if (seed_override) cfg.seed = *seed_override;
    const auto res = cspde::run_command(command, cfg, {workers});
    std::cout << command << ": " << (res.passed ? "assertions passed" : "assertions failed") << " -> "
              << cfg.output_dir << '\n';
    if (strict && !res.passed) return 3;
    return 0;
  } catch (const cspde::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const cspde::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
