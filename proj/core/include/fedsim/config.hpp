#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/attacks.hpp"
#include "fedsim/engine.hpp"

namespace fedsim {

/// One resolved run of the experiment engine.
struct RunPlan {
  ExperimentConfig config;
  std::uint64_t seed = 1;
  std::string run_id;  // hash of the canonical config + seed
  std::string label;   // human-readable tag used in file names and summaries
};

/// Resolved gradient-inversion study (the `dlg` subcommand).
struct DlgPlan {
  ExperimentConfig config;       // victim training run
  DlgConfig attack;
  std::string algorithm_label;   // includes the pseudo-algorithm "dsgd"
  std::size_t attack_round = 5;
  std::size_t victim = 0;
  std::uint64_t seed = 1;
  std::string run_id;
};

struct RunManifest {
  std::string config_path;
  std::string out_dir;
  std::vector<RunPlan> runs;
  std::optional<DlgPlan> dlg;
};

/// Parse and validate a JSON experiment config. `mode` is one of "train",
/// "lrme", "dlg", "sweep". Unknown keys and out-of-range values raise
/// ConfigError naming the field. Sweeps expand to the cartesian product of
/// the swept fields times the seed list.
RunManifest parse_config(const std::string& path, const std::string& mode,
                         std::optional<std::uint64_t> seed_override,
                         const std::string& out_dir);

/// Execute every run in the manifest, writing one CSV trace per run plus a
/// summary JSON. Returns the process exit code (0 = all runs completed).
/// With parallel > 1, a sweep executes that many runs concurrently; a single
/// run uses the threads inside the engine instead. Output bytes are
/// identical either way.
int run_manifest(const RunManifest& manifest, int parallel = 1);

/// Canonical JSON form of a config; parse(serialize(c)) == c and the string
/// is byte-stable, so it is the hashing base for run ids.
std::string canonical_config_json(const ExperimentConfig& cfg);

/// Strict single-config (de)serialization used by parse_config.
ExperimentConfig experiment_config_from_json_text(const std::string& text);

/// 16-hex-digit FNV-1a id of (canonical config, seed).
std::string compute_run_id(const ExperimentConfig& cfg, std::uint64_t seed);

/// Fixed-format metric trace CSV (6 significant digits, '\n' endings).
std::string trace_to_csv(const MetricsTrace& trace);

}  // namespace fedsim
