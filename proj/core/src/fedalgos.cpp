#include "fedsim/fedalgos.hpp"

#include <cassert>
#include <cmath>
#include <string>

#include "fedsim/errors.hpp"

namespace fedsim {

const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::FedAvg: return "fedavg";
    case Algorithm::FedSaga: return "fedsaga";
    case Algorithm::LoSac: return "losac";
    case Algorithm::LoSacProx: return "losac_prox";
    case Algorithm::Scaffold: return "scaffold";
    case Algorithm::ScaffoldProx: return "scaffold_prox";
    case Algorithm::MimeSvrg: return "mimesvrg";
    case Algorithm::FedCm: return "fedcm";
    case Algorithm::FedAdmm: return "fedadmm";
  }
  return "?";
}

Algorithm algorithm_from_name(std::string_view name) {
  for (Algorithm a :
       {Algorithm::FedAvg, Algorithm::FedSaga, Algorithm::LoSac,
        Algorithm::LoSacProx, Algorithm::Scaffold, Algorithm::ScaffoldProx,
        Algorithm::MimeSvrg, Algorithm::FedCm, Algorithm::FedAdmm}) {
    if (name == algorithm_name(a)) return a;
  }
  throw ConfigError("algorithm", "unknown algorithm '" + std::string(name) + "'");
}

bool algorithm_is_prox(Algorithm a) {
  return a == Algorithm::LoSacProx || a == Algorithm::ScaffoldProx ||
         a == Algorithm::FedAdmm;
}

namespace {

void ensure_finite(const ParamVector& v, std::size_t step, const char* what) {
  if (!v.finite()) {
    throw NumericalDivergence(std::string(what) + " became non-finite", step);
  }
}

void check_shapes(const ClientState& state, const ServerState& server,
                  const LossModel& model) {
  if (server.x.size() != model.param_size()) {
    throw InvalidInput("broadcast model dimension mismatch");
  }
  if (!state.x.empty() && state.x.size() != model.param_size()) {
    throw InvalidInput("client model dimension mismatch");
  }
}

// prox_{eta lambda Psi} applied in place; Psi picked by the model kind
void apply_prox(ParamVector& x, const LossModel& model, double tau) {
  if (tau == 0.0) return;  // prox of the zero function is the identity
  if (model.prox_kind() == LossModel::ProxKind::Nuclear) {
    const std::size_t side = model.matrix_side();
    x = flat_from_matrix(prox_nuclear(matrix_from_flat(x, side, side), tau));
  } else {
    x = prox_l1(x, tau);
  }
}

#ifndef NDEBUG
// Bookkeeping identity: after a LoSAC round the local phi must equal the
// broadcast phi plus the client's own y-table change scaled by 1/(N M).
void assert_phi_bookkeeping(const ClientState& state, const ServerState& server,
                            const std::vector<ParamVector>& y_at_entry,
                            std::size_t n_clients) {
  const double nm =
      static_cast<double>(n_clients) * static_cast<double>(y_at_entry.size());
  double err = 0.0, scale = 1.0;
  for (std::size_t k = 0; k < state.phi.size(); ++k) {
    double expected = server.phi[k];
    for (std::size_t j = 0; j < y_at_entry.size(); ++j) {
      expected += (state.y_table[j][k] - y_at_entry[j][k]) / nm;
    }
    err = std::max(err, std::abs(state.phi[k] - expected));
    scale = std::max(scale, std::abs(expected));
  }
  assert(err <= 1e-9 * scale && "LoSAC phi bookkeeping identity violated");
}
#endif

LocalRoundResult losac_round_impl(ClientState& state, const ServerState& server,
                                  const LossModel& model,
                                  const LocalDataset& data,
                                  const AlgorithmConfig& cfg,
                                  std::size_t n_clients, Rng& rng, bool prox) {
  check_shapes(state, server, model);
  const std::size_t m = data.num_blocks();
  if (state.y_table.size() != m) {
    throw InvalidInput("LoSAC client has wrong y-table size");
  }
  if (server.phi.size() != model.param_size()) {
    throw InvalidInput("broadcast phi dimension mismatch");
  }
  state.x = server.x;
  state.phi = server.phi;
#ifndef NDEBUG
  const std::vector<ParamVector> y_at_entry = state.y_table;
#endif

  LocalRoundResult out;
  out.directions.reserve(cfg.local_steps);
  const double nm = static_cast<double>(n_clients) * static_cast<double>(m);
  for (std::size_t t = 0; t < cfg.local_steps; ++t) {
    const std::size_t j = rng.uniform_index(m);
    ParamVector g = model.block_gradient(state.x, data, j);  // at x_i^-
    ParamVector dir = state.phi;
    dir -= state.y_table[j];
    dir += g;
    axpy(-cfg.eta, dir, state.x);
    if (prox) apply_prox(state.x, model, cfg.eta * cfg.lambda);
    ensure_finite(state.x, t, "local model");
    for (std::size_t k = 0; k < state.phi.size(); ++k) {
      state.phi[k] += (g[k] - state.y_table[j][k]) / nm;
    }
    state.y_table[j] = std::move(g);
    out.directions.push_back(std::move(dir));
  }

#ifndef NDEBUG
  assert_phi_bookkeeping(state, server, y_at_entry, n_clients);
#endif
  out.delta.dx = state.x - server.x;
  out.delta.dphi = state.phi - server.phi;
  return out;
}

}  // namespace

ClientState client_init(Algorithm alg, const LossModel& model,
                        const LocalDataset& data, const ParamVector& x0,
                        bool warm_start) {
  if (x0.size() != model.param_size()) {
    throw InvalidInput("client_init: x0 dimension mismatch");
  }
  const std::size_t m = data.num_blocks();
  if (m == 0) throw InvalidInput("client_init: dataset has no blocks");

  ClientState s;
  s.x = x0;
  switch (alg) {
    case Algorithm::LoSac:
    case Algorithm::LoSacProx:
      s.y_table.assign(m, ParamVector(model.param_size()));
      s.phi = ParamVector(model.param_size());
      if (warm_start) {
        for (std::size_t j = 0; j < m; ++j) {
          s.y_table[j] = model.block_gradient(x0, data, j);
        }
      }
      break;
    case Algorithm::FedSaga:
      s.y_table.assign(m, ParamVector(model.param_size()));
      s.phi_tilde = ParamVector(model.param_size());
      if (warm_start) {
        for (std::size_t j = 0; j < m; ++j) {
          s.y_table[j] = model.block_gradient(x0, data, j);
          axpy(1.0 / static_cast<double>(m), s.y_table[j], s.phi_tilde);
        }
      }
      break;
    case Algorithm::Scaffold:
    case Algorithm::ScaffoldProx:
      s.c = ParamVector(model.param_size());
      if (warm_start) s.c = model.full_gradient(x0, data);
      break;
    case Algorithm::FedAdmm:
      s.pi = ParamVector(model.param_size());
      break;
    case Algorithm::FedAvg:
    case Algorithm::MimeSvrg:
    case Algorithm::FedCm:
      break;
  }
  return s;
}

ServerState server_init(Algorithm alg, const LossModel& model,
                        const ParamVector& x0,
                        const std::vector<ClientState>& clients,
                        bool warm_start) {
  if (x0.size() != model.param_size()) {
    throw InvalidInput("server_init: x0 dimension mismatch");
  }
  ServerState s;
  s.x = x0;
  switch (alg) {
    case Algorithm::LoSac:
    case Algorithm::LoSacProx:
      s.phi = ParamVector(model.param_size());
      if (warm_start) {
        // mean-form full delayed gradient at x0 from the warm client tables
        const double n = static_cast<double>(clients.size());
        for (const auto& c : clients) {
          const double m = static_cast<double>(c.y_table.size());
          for (const auto& y : c.y_table) axpy(1.0 / (n * m), y, s.phi);
        }
      }
      break;
    case Algorithm::Scaffold:
    case Algorithm::ScaffoldProx:
      s.c = ParamVector(model.param_size());
      if (warm_start) {
        for (const auto& c : clients) {
          axpy(1.0 / static_cast<double>(clients.size()), c.c, s.c);
        }
      }
      break;
    case Algorithm::FedCm:
      s.momentum = ParamVector(model.param_size());
      break;
    case Algorithm::FedAvg:
    case Algorithm::FedSaga:
    case Algorithm::MimeSvrg:
    case Algorithm::FedAdmm:
      break;
  }
  return s;
}

LocalRoundResult losac_local_round(ClientState& state, const ServerState& server,
                                   const LossModel& model,
                                   const LocalDataset& data,
                                   const AlgorithmConfig& cfg,
                                   std::size_t n_clients, Rng& rng) {
  return losac_round_impl(state, server, model, data, cfg, n_clients, rng,
                          /*prox=*/false);
}

LocalRoundResult losac_prox_local_round(ClientState& state,
                                        const ServerState& server,
                                        const LossModel& model,
                                        const LocalDataset& data,
                                        const AlgorithmConfig& cfg,
                                        std::size_t n_clients, Rng& rng) {
  return losac_round_impl(state, server, model, data, cfg, n_clients, rng,
                          /*prox=*/true);
}

void losac_server_aggregate(ServerState& server,
                            const std::vector<ClientDelta>& deltas,
                            std::size_t n_clients, std::size_t participants,
                            const AlgorithmConfig& cfg) {
  if (deltas.empty()) throw InvalidInput("aggregate: empty delta set");
  if (deltas.size() != participants) {
    throw InvalidInput("aggregate: delta count disagrees with participants");
  }
  const double x_factor =
      cfg.aggregate_by_s ? 1.0 / static_cast<double>(participants)
                         : 1.0 / static_cast<double>(n_clients);
  const double phi_factor =
      static_cast<double>(n_clients) / static_cast<double>(participants);
  for (const auto& d : deltas) {
    axpy(x_factor, d.dx, server.x);
    axpy(phi_factor, d.dphi, server.phi);
  }
  ensure_finite(server.x, 0, "aggregated model");
  ensure_finite(server.phi, 0, "aggregated phi");
}

LocalRoundResult fedsaga_local_round(ClientState& state,
                                     const ServerState& server,
                                     const LossModel& model,
                                     const LocalDataset& data,
                                     const AlgorithmConfig& cfg, Rng& rng) {
  check_shapes(state, server, model);
  const std::size_t m = data.num_blocks();
  if (state.y_table.size() != m) {
    throw InvalidInput("FedSaga client has wrong y-table size");
  }
  state.x = server.x;

  LocalRoundResult out;
  out.directions.reserve(cfg.local_steps);
  for (std::size_t t = 0; t < cfg.local_steps; ++t) {
    const std::size_t j = rng.uniform_index(m);
    ParamVector g = model.block_gradient(state.x, data, j);
    ParamVector dir = g;
    dir -= state.y_table[j];
    dir += state.phi_tilde;
    axpy(-cfg.eta, dir, state.x);
    ensure_finite(state.x, t, "local model");
    for (std::size_t k = 0; k < state.phi_tilde.size(); ++k) {
      state.phi_tilde[k] += (g[k] - state.y_table[j][k]) / static_cast<double>(m);
    }
    state.y_table[j] = std::move(g);
    out.directions.push_back(std::move(dir));
  }
  out.delta.dx = state.x - server.x;  // dphi intentionally absent
  return out;
}

void fedsaga_server_aggregate(ServerState& server,
                              const std::vector<ClientDelta>& deltas,
                              std::size_t n_clients,
                              const AlgorithmConfig& cfg) {
  if (deltas.empty()) throw InvalidInput("aggregate: empty delta set");
  const double x_factor =
      cfg.aggregate_by_s ? 1.0 / static_cast<double>(deltas.size())
                         : 1.0 / static_cast<double>(n_clients);
  for (const auto& d : deltas) axpy(x_factor, d.dx, server.x);
  ensure_finite(server.x, 0, "aggregated model");
}

LocalRoundResult fedavg_local_round(ClientState& state, const ServerState& server,
                                    const LossModel& model,
                                    const LocalDataset& data,
                                    const AlgorithmConfig& cfg, Rng& rng) {
  check_shapes(state, server, model);
  const std::size_t m = data.num_blocks();
  state.x = server.x;
  LocalRoundResult out;
  out.directions.reserve(cfg.local_steps);
  for (std::size_t t = 0; t < cfg.local_steps; ++t) {
    const std::size_t j = rng.uniform_index(m);
    ParamVector dir = model.block_gradient(state.x, data, j);
    axpy(-cfg.eta, dir, state.x);
    ensure_finite(state.x, t, "local model");
    out.directions.push_back(std::move(dir));
  }
  out.delta.dx = state.x - server.x;
  return out;
}

void fedavg_server_aggregate(ServerState& server,
                             const std::vector<ClientDelta>& deltas,
                             std::size_t participants) {
  if (deltas.empty()) throw InvalidInput("aggregate: empty delta set");
  const double f = 1.0 / static_cast<double>(participants);
  for (const auto& d : deltas) axpy(f, d.dx, server.x);
  ensure_finite(server.x, 0, "aggregated model");
}

LocalRoundResult scaffold_local_round(ClientState& state,
                                      const ServerState& server,
                                      const LossModel& model,
                                      const LocalDataset& data,
                                      const AlgorithmConfig& cfg, Rng& rng,
                                      bool prox) {
  check_shapes(state, server, model);
  const std::size_t m = data.num_blocks();
  if (server.c.size() != model.param_size()) {
    throw InvalidInput("broadcast control variate dimension mismatch");
  }
  state.x = server.x;
  LocalRoundResult out;
  out.directions.reserve(cfg.local_steps);
  for (std::size_t t = 0; t < cfg.local_steps; ++t) {
    const std::size_t j = rng.uniform_index(m);
    ParamVector dir = model.block_gradient(state.x, data, j);
    dir -= state.c;
    dir += server.c;
    axpy(-cfg.eta, dir, state.x);
    if (prox) apply_prox(state.x, model, cfg.eta * cfg.lambda);
    ensure_finite(state.x, t, "local model");
    out.directions.push_back(std::move(dir));
  }
  out.delta.dx = state.x - server.x;
  if (cfg.local_steps > 0) {
    // Option II control-variate refresh: c_i^+ = c_i - c + (x - x_i^+)/(T eta)
    ParamVector c_new = state.c;
    c_new -= server.c;
    const double f = 1.0 / (static_cast<double>(cfg.local_steps) * cfg.eta);
    axpy(-f, out.delta.dx, c_new);
    out.delta.dc = c_new - state.c;
    state.c = std::move(c_new);
  } else {
    out.delta.dc = ParamVector(model.param_size());
  }
  return out;
}

void scaffold_server_aggregate(ServerState& server,
                               const std::vector<ClientDelta>& deltas,
                               std::size_t n_clients, std::size_t participants) {
  if (deltas.empty()) throw InvalidInput("aggregate: empty delta set");
  const double fx = 1.0 / static_cast<double>(participants);
  const double fc = 1.0 / static_cast<double>(n_clients);
  for (const auto& d : deltas) {
    axpy(fx, d.dx, server.x);
    axpy(fc, d.dc, server.c);
  }
  ensure_finite(server.x, 0, "aggregated model");
}

LocalRoundResult mime_svrg_local_round(ClientState& state,
                                       const ServerState& server,
                                       const ParamVector& anchor_grad,
                                       const LossModel& model,
                                       const LocalDataset& data,
                                       const AlgorithmConfig& cfg, Rng& rng) {
  check_shapes(state, server, model);
  const std::size_t m = data.num_blocks();
  if (anchor_grad.size() != model.param_size()) {
    throw InvalidInput("anchor gradient dimension mismatch");
  }
  state.x = server.x;
  // block gradients at the round anchor, computed lazily
  std::vector<ParamVector> anchor_block(m);
  LocalRoundResult out;
  out.directions.reserve(cfg.local_steps);
  for (std::size_t t = 0; t < cfg.local_steps; ++t) {
    const std::size_t j = rng.uniform_index(m);
    if (anchor_block[j].empty()) {
      anchor_block[j] = model.block_gradient(server.x, data, j);
    }
    ParamVector dir = model.block_gradient(state.x, data, j);
    dir -= anchor_block[j];
    dir += anchor_grad;
    axpy(-cfg.eta, dir, state.x);
    ensure_finite(state.x, t, "local model");
    out.directions.push_back(std::move(dir));
  }
  out.delta.dx = state.x - server.x;
  return out;
}

LocalRoundResult fedcm_local_round(ClientState& state, const ServerState& server,
                                   const LossModel& model,
                                   const LocalDataset& data,
                                   const AlgorithmConfig& cfg, Rng& rng) {
  check_shapes(state, server, model);
  const std::size_t m = data.num_blocks();
  if (server.momentum.size() != model.param_size()) {
    throw InvalidInput("broadcast momentum dimension mismatch");
  }
  state.x = server.x;
  const double a = cfg.alpha_momentum;
  LocalRoundResult out;
  out.directions.reserve(cfg.local_steps);
  for (std::size_t t = 0; t < cfg.local_steps; ++t) {
    const std::size_t j = rng.uniform_index(m);
    ParamVector dir = model.block_gradient(state.x, data, j);
    dir *= a;
    axpy(1.0 - a, server.momentum, dir);
    axpy(-cfg.eta, dir, state.x);
    ensure_finite(state.x, t, "local model");
    out.directions.push_back(std::move(dir));
  }
  out.delta.dx = state.x - server.x;
  return out;
}

void fedcm_server_aggregate(ServerState& server,
                            const std::vector<ClientDelta>& deltas,
                            std::size_t participants,
                            const AlgorithmConfig& cfg) {
  if (deltas.empty()) throw InvalidInput("aggregate: empty delta set");
  const ParamVector x_old = server.x;
  fedavg_server_aggregate(server, deltas, participants);
  if (cfg.local_steps > 0) {
    const double f = 1.0 / (cfg.eta * static_cast<double>(cfg.local_steps));
    server.momentum = x_old - server.x;
    server.momentum *= f;
  }
}

void fedadmm_local_round(ClientState& state, const ParamVector& z,
                         const LossModel& model, const LocalDataset& data,
                         const AlgorithmConfig& cfg, std::size_t n_clients,
                         Rng& rng) {
  if (z.size() != model.param_size()) {
    throw InvalidInput("broadcast consensus dimension mismatch");
  }
  const std::size_t m = data.num_blocks();
  const double denom = 1.0 + cfg.rho * cfg.eta_local;
  const double grad_scale = 1.0 / static_cast<double>(n_clients);
  for (std::size_t t = 0; t < cfg.local_steps; ++t) {
    const std::size_t j = rng.uniform_index(m);
    const ParamVector g = model.block_gradient(state.x, data, j);
    for (std::size_t k = 0; k < state.x.size(); ++k) {
      state.x[k] = (cfg.rho * cfg.eta_local * z[k] - cfg.eta_local * state.pi[k] +
                    state.x[k] - cfg.eta_local * grad_scale * g[k]) /
                   denom;
    }
    ensure_finite(state.x, t, "local model");
    for (std::size_t k = 0; k < state.pi.size(); ++k) {
      state.pi[k] += cfg.rho * (state.x[k] - z[k]);
    }
    ensure_finite(state.pi, t, "multiplier");
  }
}

void fedadmm_server_update(ServerState& server,
                           const std::vector<ClientState>& clients,
                           const LossModel& model, const AlgorithmConfig& cfg,
                           std::size_t n_clients) {
  const std::size_t side = model.matrix_side();
  if (side == 0) throw InvalidInput("FedADMM requires a matrix model");
  // last-known contributions pi_i + rho X_i, ascending client order
  ParamVector sum(server.x.size());
  for (const auto& c : clients) {
    axpy(1.0, c.pi, sum);
    axpy(cfg.rho, c.x, sum);
  }
  const double n_rho = static_cast<double>(n_clients) * cfg.rho;
  for (std::size_t it = 0; it < cfg.prox_steps; ++it) {
    ParamVector inner = server.x;
    for (std::size_t k = 0; k < inner.size(); ++k) {
      inner[k] -= cfg.eta_global * (n_rho * server.x[k] - sum[k]);
    }
    server.x = flat_from_matrix(prox_nuclear(matrix_from_flat(inner, side, side),
                                             cfg.lambda * cfg.eta_global));
    ensure_finite(server.x, it, "consensus");
  }
}

LocalRoundResult run_local_round(Algorithm alg, ClientState& state,
                                 const ServerState& server,
                                 const ParamVector* mime_anchor,
                                 const LossModel& model,
                                 const LocalDataset& data,
                                 const AlgorithmConfig& cfg,
                                 std::size_t n_clients, Rng& rng) {
  switch (alg) {
    case Algorithm::FedAvg:
      return fedavg_local_round(state, server, model, data, cfg, rng);
    case Algorithm::FedSaga:
      return fedsaga_local_round(state, server, model, data, cfg, rng);
    case Algorithm::LoSac:
      return losac_local_round(state, server, model, data, cfg, n_clients, rng);
    case Algorithm::LoSacProx:
      return losac_prox_local_round(state, server, model, data, cfg, n_clients,
                                    rng);
    case Algorithm::Scaffold:
      return scaffold_local_round(state, server, model, data, cfg, rng, false);
    case Algorithm::ScaffoldProx:
      return scaffold_local_round(state, server, model, data, cfg, rng, true);
    case Algorithm::MimeSvrg:
      if (mime_anchor == nullptr) {
        throw InvalidInput("MimeSVRG round requires the anchor gradient");
      }
      return mime_svrg_local_round(state, server, *mime_anchor, model, data, cfg,
                                   rng);
    case Algorithm::FedCm:
      return fedcm_local_round(state, server, model, data, cfg, rng);
    case Algorithm::FedAdmm:
      throw InvalidInput("FedADMM rounds are driven via fedadmm_* entry points");
  }
  throw InvalidInput("unknown algorithm");
}

void run_server_aggregate(Algorithm alg, ServerState& server,
                          const std::vector<ClientDelta>& deltas,
                          std::size_t n_clients, std::size_t participants,
                          const AlgorithmConfig& cfg) {
  switch (alg) {
    case Algorithm::FedAvg:
    case Algorithm::MimeSvrg:
      fedavg_server_aggregate(server, deltas, participants);
      return;
    case Algorithm::FedSaga:
      fedsaga_server_aggregate(server, deltas, n_clients, cfg);
      return;
    case Algorithm::LoSac:
    case Algorithm::LoSacProx:
      losac_server_aggregate(server, deltas, n_clients, participants, cfg);
      return;
    case Algorithm::Scaffold:
    case Algorithm::ScaffoldProx:
      scaffold_server_aggregate(server, deltas, n_clients, participants);
      return;
    case Algorithm::FedCm:
      fedcm_server_aggregate(server, deltas, participants, cfg);
      return;
    case Algorithm::FedAdmm:
      throw InvalidInput("FedADMM rounds are driven via fedadmm_* entry points");
  }
}

}  // namespace fedsim
