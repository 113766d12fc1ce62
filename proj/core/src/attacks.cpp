#include "fedsim/attacks.hpp"

#include <algorithm>
#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim {

namespace {

// ||grad f(x; dummy) - observed||^2 and the residual e = grad - observed
double match_objective(const LossModel& model, const ParamVector& x,
                       const LocalDataset& dummy, const ParamVector& observed,
                       ParamVector& residual) {
  residual = model.full_gradient(x, dummy);
  residual -= observed;
  return dot(residual, residual);
}

// Analytic d(objective)/d(dummy features) for binary logistic regression:
// grad f = (1/n) sum_k r_k d_k with r_k = sigmoid(x.d_k) - y_k, so
// dG/dd_k = (2/n) (r_k e + sigmoid'(x.d_k) (e.d_k) x).
void logistic_feature_gradient(const ParamVector& x, const LocalDataset& dummy,
                               const ParamVector& residual,
                               std::vector<std::vector<double>>& out) {
  const std::size_t n = dummy.size();
  const std::size_t d = x.size();
  for (std::size_t k = 0; k < n; ++k) {
    const auto& dk = dummy.features[k];
    double z = 0.0, ed = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      z += x[i] * dk[i];
      ed += residual[i] * dk[i];
    }
    const double p = 1.0 / (1.0 + std::exp(-z));
    const double r = p - dummy.labels[k];
    const double sp = p * (1.0 - p);
    const double f = 2.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < d; ++i) {
      out[k][i] = f * (r * residual[i] + sp * ed * x[i]);
    }
  }
}

// Central finite differences on the matching objective, for models without
// an analytic path. Only sensible on small instances.
void fd_feature_gradient(const LossModel& model, const ParamVector& x,
                         LocalDataset& dummy, const ParamVector& observed,
                         std::vector<std::vector<double>>& out) {
  constexpr double h = 1e-6;
  ParamVector scratch;
  for (std::size_t k = 0; k < dummy.size(); ++k) {
    for (std::size_t i = 0; i < dummy.features[k].size(); ++i) {
      const double saved = dummy.features[k][i];
      dummy.features[k][i] = saved + h;
      const double up = match_objective(model, x, dummy, observed, scratch);
      dummy.features[k][i] = saved - h;
      const double dn = match_objective(model, x, dummy, observed, scratch);
      dummy.features[k][i] = saved;
      out[k][i] = (up - dn) / (2.0 * h);
    }
  }
}

}  // namespace

DlgResult dlg_attack(const LossModel& model, const ParamVector& x,
                     const ParamVector& observed, const LocalDataset& true_data,
                     const DlgConfig& cfg, Rng& rng) {
  if (x.size() != model.param_size()) {
    throw InvalidInput("dlg_attack: model parameter dimension mismatch");
  }
  if (observed.size() != model.param_size()) {
    throw InvalidInput("dlg_attack: observed quantity shape mismatch");
  }
  if (cfg.attack_steps < 1) throw InvalidInput("dlg_attack: need >= 1 step");
  if (!(cfg.eta_d > 0.0)) throw InvalidInput("dlg_attack: eta_d must be positive");
  if (true_data.size() == 0) throw InvalidInput("dlg_attack: empty target data");

  const std::size_t n = true_data.size();
  const std::size_t fdim = model.feature_size();

  LocalDataset dummy;
  dummy.labels = true_data.labels;  // labels are assumed known to the attacker
  dummy.features.assign(n, std::vector<double>(fdim, 0.0));
  for (auto& row : dummy.features) {
    for (double& v : row) v = cfg.init_scale * rng.normal();
  }
  dummy.set_blocks(1);

  const bool analytic = dynamic_cast<const BinaryLogistic*>(&model) != nullptr;

  DlgResult out;
  out.objective_trace.reserve(cfg.attack_steps);
  out.error_trace.reserve(cfg.attack_steps);
  std::vector<std::vector<double>> grad(n, std::vector<double>(fdim, 0.0));
  ParamVector residual;

  for (std::size_t step = 0; step < cfg.attack_steps; ++step) {
    const double obj = match_objective(model, x, dummy, observed, residual);
    out.objective_trace.push_back(obj);
    if (analytic) {
      logistic_feature_gradient(x, dummy, residual, grad);
    } else {
      fd_feature_gradient(model, x, dummy, observed, grad);
    }
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < fdim; ++i) {
        dummy.features[k][i] -= cfg.eta_d * grad[k][i];
      }
    }
    // reconstruction error against the true samples (reporting only)
    double err = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t i = 0; i < fdim; ++i) {
        const double dv = dummy.features[k][i] - true_data.features[k][i];
        err += dv * dv;
      }
    }
    out.error_trace.push_back(std::sqrt(err));
  }
  out.recovered = std::move(dummy.features);
  return out;
}

ParamVector expose_observed(DlgTarget target, const ExposedRound& round) {
  if (target == DlgTarget::RawGradient) return round.raw_gradient;
  if (round.local_steps == 0 || round.eta <= 0.0) {
    throw InvalidInput("expose_observed: averaged delta needs eta > 0, T >= 1");
  }
  ParamVector avg = round.x_broadcast;
  avg -= round.x_after;
  avg *= 1.0 / (round.eta * static_cast<double>(round.local_steps));
  return avg;
}

ExposedRound run_exposure(const ExperimentConfig& cfg, std::uint64_t seed,
                          std::size_t attack_round, std::size_t victim) {
  if (attack_round < 1) throw InvalidInput("run_exposure: attack_round >= 1");
  if (victim >= cfg.n_clients) throw InvalidInput("run_exposure: bad victim");

  Simulation sim(cfg, seed);
  for (std::size_t r = 1; r < attack_round; ++r) sim.run_round();
  ExposedRound out;
  out.x_broadcast = sim.server().x;
  out.raw_gradient =
      sim.model().full_gradient(out.x_broadcast, sim.data().clients[victim]);
  sim.run_round();
  const auto& parts = sim.last_participants();
  if (std::find(parts.begin(), parts.end(), victim) == parts.end()) {
    throw InvalidInput(
        "run_exposure: victim did not participate in the attack round "
        "(use S = N)");
  }
  out.x_after = sim.clients()[victim].x;
  out.eta = cfg.algo.eta;
  out.local_steps = cfg.algo.local_steps;
  return out;
}

}  // namespace fedsim
