#pragma once

#include <cstdint>
#include <vector>

#include "fedsim/engine.hpp"
#include "fedsim/models.hpp"
#include "fedsim/numerics.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class DlgTarget { RawGradient, AveragedDelta };

struct DlgConfig {
  std::size_t attack_steps = 100;
  double eta_d = 1e-3;
  double init_scale = 1.0;  // stddev of the Gaussian dummy-data init
  DlgTarget target_kind = DlgTarget::AveragedDelta;
};

struct DlgResult {
  std::vector<std::vector<double>> recovered;  // reconstructed sample features
  std::vector<double> objective_trace;         // gradient-match objective
  std::vector<double> error_trace;             // ||D_hat - D||_F per iteration
};

/// Gradient-inversion attack: gradient descent on
/// ||grad f(x; D_dummy) - observed||^2 over the dummy features for exactly
/// attack_steps iterations. Labels are assumed known; `true_data` is read
/// only to fill the reported error trace, never inside the optimization.
/// The matching objective's gradient is analytic for binary logistic
/// regression and falls back to central finite differences otherwise.
DlgResult dlg_attack(const LossModel& model, const ParamVector& x,
                     const ParamVector& observed, const LocalDataset& true_data,
                     const DlgConfig& cfg, Rng& rng);

/// One victim round as seen on the wire.
struct ExposedRound {
  ParamVector x_broadcast;
  ParamVector x_after;        // victim's local model after its T steps
  double eta = 0.0;
  std::size_t local_steps = 0;
  ParamVector raw_gradient;   // full local gradient at the broadcast model
};

/// What an eavesdropper observes: the transmitted local gradient for
/// gradient-sharing algorithms (distributed SGD, MimeSVRG), or the averaged
/// per-step movement (x - x_i^+) / (eta T) for delta-sharing algorithms
/// (FedAvg, SCAFFOLD, LoSAC).
ParamVector expose_observed(DlgTarget target, const ExposedRound& round);

/// Run `attack_round` rounds of the configured experiment and capture the
/// victim client's round artifacts. The victim must participate in the
/// attack round (use S = N for the wiretap study).
ExposedRound run_exposure(const ExperimentConfig& cfg, std::uint64_t seed,
                          std::size_t attack_round, std::size_t victim);

}  // namespace fedsim
