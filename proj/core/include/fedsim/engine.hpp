#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/fedalgos.hpp"
#include "fedsim/models.hpp"

namespace fedsim {

enum class ModelKind {
  BinaryLogistic,
  MultinomialLogistic,
  TwoLayerMlp,
  LeastSquares,
  TraceRegression,
};

enum class DataKind { SyntheticLogistic, Lrme, Idx, Csv };

struct ModelSpec {
  ModelKind kind = ModelKind::MultinomialLogistic;
  std::size_t classes = 10;
  std::size_t hidden = 200;
  double mu_reg = 0.0;
};

struct DataSpec {
  DataKind kind = DataKind::SyntheticLogistic;
  // synthetic logistic
  std::size_t dim = 50;
  std::size_t classes = 10;
  std::size_t samples = 2000;
  std::size_t test_samples = 1000;
  double separation = 3.0;
  // low-rank matrix estimation
  std::size_t rank = 4;
  std::size_t samples_per_client = 25;
  double noise_sigma = 0.1;
  // file-backed datasets
  std::string train_images, train_labels, test_images, test_labels;  // idx
  std::string train_path, test_path, label_column;                   // csv
};

struct ExperimentConfig {
  Algorithm algorithm = Algorithm::LoSac;
  std::size_t n_clients = 100;    // N
  std::size_t participants = 10;  // S
  std::size_t rounds = 100;       // R
  AlgorithmConfig algo;           // eta, T, M, prox and baseline knobs
  ModelSpec model;
  DataSpec data;
  PartitionScheme partition = PartitionScheme::Iid;
  std::optional<double> c_percent;
  std::vector<std::uint64_t> seeds{1};
  std::size_t eval_every = 0;  // 0: 1 for matrix recovery, 5 otherwise
  std::optional<double> accuracy_target;
  bool warm_start = false;
};

struct MetricRecord {
  std::size_t round = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  double dir_variance = 0.0;
  double recovery_err = 0.0;
  double recovered_rank = 0.0;
  double wall_seconds = 0.0;  // reporting only, never part of determinism
};

struct MetricsTrace {
  std::vector<MetricRecord> records;
};

struct RunResult {
  MetricsTrace trace;
  ParamVector x_final;
  ParamVector phi_final;  // empty unless the algorithm keeps a server phi
};

/// Uniform sample of `participants` distinct clients, ascending.
std::vector<std::size_t> sample_clients(std::size_t n_clients,
                                        std::size_t participants, Rng& rng);

/// Mean squared deviation from the mean direction (trace of the empirical
/// covariance). Needs at least two directions.
double direction_variance(const std::vector<ParamVector>& directions);

/// First evaluated round whose test accuracy reaches `target`, if any.
std::optional<std::size_t> rounds_to_target(const MetricsTrace& trace,
                                            double target_accuracy);

/// One full federated simulation owning the model, data, and all optimizer
/// state. Client work within a round may run on several threads; results are
/// identical for every thread count (fixed aggregation order, per-(round,
/// client) random streams).
class Simulation {
 public:
  Simulation(const ExperimentConfig& cfg, std::uint64_t seed);
  ~Simulation();

  void run_round(int threads = 1);
  MetricRecord evaluate() const;  // pure read of the current state

  std::size_t completed_rounds() const { return round_; }
  const ServerState& server() const { return server_; }
  const std::vector<ClientState>& clients() const { return clients_; }
  const LossModel& model() const { return *model_; }
  const FederatedDataset& data() const { return data_; }
  const std::optional<LrmeGroundTruth>& ground_truth() const { return truth_; }
  const std::vector<std::size_t>& last_participants() const {
    return last_participants_;
  }
  /// Per-participant step directions from the most recent round.
  const std::vector<std::vector<ParamVector>>& last_directions() const {
    return last_directions_;
  }
  const ExperimentConfig& config() const { return cfg_; }

 private:
  const ParamVector& current_estimate() const { return server_.x; }

  ExperimentConfig cfg_;
  std::uint64_t seed_;
  std::unique_ptr<LossModel> model_;
  FederatedDataset data_;
  std::optional<LrmeGroundTruth> truth_;
  ServerState server_;
  std::vector<ClientState> clients_;
  std::size_t round_ = 0;
  std::vector<std::size_t> last_participants_;
  std::vector<std::vector<ParamVector>> last_directions_;
};

/// Run R rounds with metrics every eval_every rounds (plus the initial
/// evaluation at round 0 and the final round).
RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                         int threads = 1);

/// Resolved evaluation cadence for a config (1 for matrix recovery, 5
/// otherwise, unless set explicitly).
std::size_t resolved_eval_every(const ExperimentConfig& cfg);

}  // namespace fedsim
