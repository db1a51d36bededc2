// ============================================================================
// cpns_cli.cpp -- command-line front end: dist | ber-curve | sweep |
//                 simulate | compare
// ============================================================================
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "cpns/app.hpp"

int main(int argc, char** argv) {
  using cpns::app::Command;
  CLI::App cli{"Count distributions, detectors and BER for a diffusion link with a compound Poisson noise source"};
  cli.set_version_flag("--version", cpns::app::version());
  cli.require_subcommand(1, 1);

  cpns::app::RunSpec spec;
  const std::map<std::string, std::pair<Command, std::string>> commands{
      {"dist", {Command::dist, "Noise count distribution(s) for the configured model(s)"}},
      {"ber-curve", {Command::ber_curve, "BER of the single-threshold detector over a threshold range"}},
      {"sweep", {Command::sweep, "Optimal BER while one parameter is varied"}},
      {"simulate", {Command::simulate, "Particle-based or count-level Monte Carlo BER"}},
      {"compare", {Command::compare, "Analysis, simulation and homogeneous Poisson baseline"}}};
  std::map<CLI::App*, Command> lookup;
  for (const auto& [name, info] : commands) {
    CLI::App* sub = cli.add_subcommand(name, info.second);
    sub->add_option("--config", spec.config_path, "Configuration file (INI)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", spec.output_path, "Output file, .csv or .json")->required();
    sub->add_option("--seed", spec.seed, "Master random seed");
    sub->add_option("--set", spec.overrides, "Override section.key=value (repeatable)");
    sub->add_option("--threads", spec.threads, "Worker threads for simulations")->check(CLI::Range(1u, 1024u));
    lookup[sub] = info.first;
  }

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? 0 : cpns::app::kExitConfig;
  }
  for (const auto& [sub, cmd] : lookup)
    if (sub->parsed()) spec.command = cmd;
  return cpns::app::run(spec, std::cerr);
}
