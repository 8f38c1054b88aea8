// Command-line front end: simulate, estimate, mc, constants, lan.
#include "nsync/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Two-stage quasi-likelihood estimation under nonsynchronous sampling"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "nsync 1.0.0");

  nsync::CommandOptions opts;
  std::uint64_t seed = 0;
  int workers = 0;
  std::string out, scheme, increments;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config, "JSON configuration file")->required();
    sub->add_option("--seed", seed, "override run.seed");
    sub->add_option("--workers", workers, "override run.workers")->check(CLI::PositiveNumber);
    sub->add_option("--out", out, "output directory (default: output.dir or ./out)");
  };

  common(app.add_subcommand("simulate", "draw one scheme and one path"));
  auto* est = app.add_subcommand("estimate", "two-stage estimate from scheme and increment files");
  common(est);
  est->add_option("--scheme", scheme, "scheme file (default <out>/scheme.txt)");
  est->add_option("--increments", increments, "increments file (default <out>/increments.txt)");
  common(app.add_subcommand("mc", "Monte Carlo study"));
  common(app.add_subcommand("constants", "estimate scheme constants"));
  common(app.add_subcommand("lan", "log-likelihood ratio experiment"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed")) opts.seed = seed;
  if (sub->count("--workers")) opts.workers = workers;
  if (!out.empty()) opts.out = out;
  if (!scheme.empty()) opts.scheme = scheme;
  if (!increments.empty()) opts.increments = increments;
  return nsync::run_command(sub->get_name(), opts);
}
