// Experiment runner: executes single training runs, parameter sweeps, the
// low-rank recovery study, and the gradient-inversion (DLG) study from a JSON
// config, writing per-run CSV metric traces and a summary JSON.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fedsim/config.hpp"
#include "fedsim/errors.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;
  int parallel = 1;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "JSON experiment config")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", opts.out_dir, "output directory for CSV traces");
  cmd->add_option("--seed", opts.seed, "override the config's seed list");
  cmd->add_option("--parallel", opts.parallel,
                  "worker threads (clients within a run, or runs of a sweep)")
      ->check(CLI::PositiveNumber);
}

int dispatch(const std::string& mode, const CommonOpts& opts) {
  try {
    const fedsim::RunManifest manifest =
        fedsim::parse_config(opts.config_path, mode, opts.seed, opts.out_dir);
    return fedsim::run_manifest(manifest, opts.parallel);
  } catch (const fedsim::ConfigError& e) {
    std::cerr << "config error";
    if (!e.field().empty()) std::cerr << " [" << e.field() << "]";
    std::cerr << ": " << e.what() << "\n";
    return 2;
  } catch (const fedsim::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated optimization experiment runner"};
  app.require_subcommand(1);

  CommonOpts train_opts, lrme_opts, dlg_opts, sweep_opts;
  CLI::App* train = app.add_subcommand(
      "train", "single training run(s) on a classification or regression task");
  add_common(train, train_opts);
  CLI::App* lrme = app.add_subcommand(
      "lrme", "low-rank matrix recovery study (trace regression)");
  add_common(lrme, lrme_opts);
  CLI::App* dlg = app.add_subcommand(
      "dlg", "gradient-inversion attack study on a victim client");
  add_common(dlg, dlg_opts);
  CLI::App* sweep = app.add_subcommand(
      "sweep", "cartesian sweep over T, S, M, c_percent, algorithm");
  add_common(sweep, sweep_opts);

  CLI11_PARSE(app, argc, argv);

  if (train->parsed()) return dispatch("train", train_opts);
  if (lrme->parsed()) return dispatch("lrme", lrme_opts);
  if (dlg->parsed()) return dispatch("dlg", dlg_opts);
  if (sweep->parsed()) return dispatch("sweep", sweep_opts);
  return 2;
}
