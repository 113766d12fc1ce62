#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "fedsim/models.hpp"
#include "fedsim/numerics.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class Algorithm {
  FedAvg,
  FedSaga,
  LoSac,
  LoSacProx,
  Scaffold,
  ScaffoldProx,
  MimeSvrg,
  FedCm,
  FedAdmm,
};

const char* algorithm_name(Algorithm a);
Algorithm algorithm_from_name(std::string_view name);  // throws ConfigError
bool algorithm_is_prox(Algorithm a);

struct AlgorithmConfig {
  double eta = 1e-4;           // local step size
  std::size_t local_steps = 5; // T
  std::size_t blocks = 5;      // M, the per-client gradient-table size
  double lambda = 0.0;         // nonsmooth regularizer weight (prox variants)
  // FedADMM
  double rho = 5.0;
  double eta_local = 1e-4;
  double eta_global = 1e-4;
  std::size_t prox_steps = 20;
  // FedCM momentum mixing weight
  double alpha_momentum = 0.1;
  // Aggregate the model delta by 1/S instead of the written 1/N (sensitivity
  // study knob; off by default).
  bool aggregate_by_s = false;
};

/// Per-client persistent optimizer state. Fields not used by the selected
/// algorithm stay empty. The delayed-gradient table y_table stores one block
/// gradient per block; delayed models are never materialized.
struct ClientState {
  ParamVector x;                      // local model (X_i for FedADMM)
  std::vector<ParamVector> y_table;   // LoSAC / FedSaga stored block gradients
  ParamVector phi;                    // LoSAC delayed global gradient (mean form)
  ParamVector phi_tilde;              // FedSaga delayed local gradient (mean form)
  ParamVector c;                      // SCAFFOLD control variate
  ParamVector pi;                     // FedADMM multiplier
};

struct ServerState {
  ParamVector x;         // global model; consensus Z for FedADMM
  ParamVector phi;       // LoSAC global delayed full gradient (mean form)
  ParamVector c;         // SCAFFOLD server control variate
  ParamVector momentum;  // FedCM server direction
};

/// What a client transmits after its local round. Unused parts stay empty.
struct ClientDelta {
  ParamVector dx;
  ParamVector dphi;
  ParamVector dc;
};

struct LocalRoundResult {
  ClientDelta delta;
  /// Search direction of every local step (the vector multiplying eta),
  /// recorded for the variance diagnostics.
  std::vector<ParamVector> directions;
};

/// Fresh client state. Cold start zeroes every table; warm start fills the
/// gradient table at x0 (and the SCAFFOLD control variate with the full
/// local gradient).
ClientState client_init(Algorithm alg, const LossModel& model,
                        const LocalDataset& data, const ParamVector& x0,
                        bool warm_start);

/// Fresh server state; with warm_start the LoSAC phi is assembled from the
/// clients' warm tables (the mean-form full delayed gradient at x0).
ServerState server_init(Algorithm alg, const LossModel& model,
                        const ParamVector& x0,
                        const std::vector<ClientState>& clients,
                        bool warm_start);

// --- LoSAC -----------------------------------------------------------------

/// One LoSAC local round: set (x_i, phi_i) from the broadcast, then T steps of
///   x_i   <- x_i - eta (phi_i - y_{i,j} + g_{i,j}(x_i))
///   phi_i <- phi_i + (g_{i,j}(x_i^-) - y_{i,j}) / (N M)
///   y_{i,j} <- g_{i,j}(x_i^-)
/// with j sampled uniformly per step and x_i^- the pre-update local model.
/// Returns (x_i - x, phi_i - phi) plus the recorded step directions.
LocalRoundResult losac_local_round(ClientState& state, const ServerState& server,
                                   const LossModel& model,
                                   const LocalDataset& data,
                                   const AlgorithmConfig& cfg,
                                   std::size_t n_clients, Rng& rng);

/// LoSAC local round with each model update wrapped in prox_{eta lambda Psi};
/// Psi is the elementwise l1 norm for vector models and the nuclear norm for
/// matrix models.
LocalRoundResult losac_prox_local_round(ClientState& state,
                                        const ServerState& server,
                                        const LossModel& model,
                                        const LocalDataset& data,
                                        const AlgorithmConfig& cfg,
                                        std::size_t n_clients, Rng& rng);

/// x <- x + (1/N) sum dx ; phi <- phi + (N/S) sum dphi, ascending client order.
void losac_server_aggregate(ServerState& server,
                            const std::vector<ClientDelta>& deltas,
                            std::size_t n_clients, std::size_t participants,
                            const AlgorithmConfig& cfg);

// --- FedSaga ---------------------------------------------------------------

/// Like LoSAC but the direction uses only the local delayed gradient
/// phi_tilde_i, updated by (g - y_{i,j}) / M; only dx is transmitted.
LocalRoundResult fedsaga_local_round(ClientState& state,
                                     const ServerState& server,
                                     const LossModel& model,
                                     const LocalDataset& data,
                                     const AlgorithmConfig& cfg, Rng& rng);

void fedsaga_server_aggregate(ServerState& server,
                              const std::vector<ClientDelta>& deltas,
                              std::size_t n_clients,
                              const AlgorithmConfig& cfg);

// --- FedAvg ----------------------------------------------------------------

LocalRoundResult fedavg_local_round(ClientState& state, const ServerState& server,
                                    const LossModel& model,
                                    const LocalDataset& data,
                                    const AlgorithmConfig& cfg, Rng& rng);

void fedavg_server_aggregate(ServerState& server,
                             const std::vector<ClientDelta>& deltas,
                             std::size_t participants);

// --- SCAFFOLD --------------------------------------------------------------

/// Control-variate local steps x_i <- x_i - eta (g - c_i + c), then
/// c_i^+ = c_i - c + (x - x_i^+)/(T eta). With `prox` the model update is
/// wrapped like losac_prox_local_round.
LocalRoundResult scaffold_local_round(ClientState& state,
                                      const ServerState& server,
                                      const LossModel& model,
                                      const LocalDataset& data,
                                      const AlgorithmConfig& cfg, Rng& rng,
                                      bool prox);

/// x <- x + (1/S) sum dx ; c <- c + (1/N) sum dc.
void scaffold_server_aggregate(ServerState& server,
                               const std::vector<ClientDelta>& deltas,
                               std::size_t n_clients, std::size_t participants);

// --- MimeSVRG ---------------------------------------------------------------

/// SVRG steps against a per-round anchor: direction
/// g_{i,j}(x_i) - g_{i,j}(x^r) + anchor_grad, where anchor_grad is the
/// average of the participants' full local gradients at the broadcast model.
LocalRoundResult mime_svrg_local_round(ClientState& state,
                                       const ServerState& server,
                                       const ParamVector& anchor_grad,
                                       const LossModel& model,
                                       const LocalDataset& data,
                                       const AlgorithmConfig& cfg, Rng& rng);

// --- FedCM -----------------------------------------------------------------

/// Momentum-mixed local steps x_i <- x_i - eta (alpha g + (1-alpha) Delta).
LocalRoundResult fedcm_local_round(ClientState& state, const ServerState& server,
                                   const LossModel& model,
                                   const LocalDataset& data,
                                   const AlgorithmConfig& cfg, Rng& rng);

/// FedAvg-style x update, then the server direction is refreshed from the
/// round movement: momentum <- (x_old - x_new) / (eta T).
void fedcm_server_aggregate(ServerState& server,
                            const std::vector<ClientDelta>& deltas,
                            std::size_t participants,
                            const AlgorithmConfig& cfg);

// --- FedADMM ---------------------------------------------------------------

/// Consensus-ADMM local round against the broadcast Z (fixed for the round):
///   X_i <- (rho eta_l Z - eta_l pi_i + X_i - eta_l grad_i(X_i)) / (1 + rho eta_l)
///   pi_i <- pi_i + rho (X_i - Z)
/// where grad_i is the block gradient of f_i / N (the consensus form absorbs
/// the 1/N of the global objective into the local functions).
void fedadmm_local_round(ClientState& state, const ParamVector& z,
                         const LossModel& model, const LocalDataset& data,
                         const AlgorithmConfig& cfg, std::size_t n_clients,
                         Rng& rng);

/// Server consensus update: `prox_steps` iterations of
///   Z <- prox_{lambda eta_g ||.||_*}(Z - eta_g (N rho Z - sum_i (pi_i + rho X_i)))
/// with the contribution sum taken over every client's last-known state.
void fedadmm_server_update(ServerState& server,
                           const std::vector<ClientState>& clients,
                           const LossModel& model, const AlgorithmConfig& cfg,
                           std::size_t n_clients);

// --- dispatch helpers (FedADMM is driven separately by the engine) ---------

LocalRoundResult run_local_round(Algorithm alg, ClientState& state,
                                 const ServerState& server,
                                 const ParamVector* mime_anchor,
                                 const LossModel& model,
                                 const LocalDataset& data,
                                 const AlgorithmConfig& cfg,
                                 std::size_t n_clients, Rng& rng);

void run_server_aggregate(Algorithm alg, ServerState& server,
                          const std::vector<ClientDelta>& deltas,
                          std::size_t n_clients, std::size_t participants,
                          const AlgorithmConfig& cfg);

}  // namespace fedsim
