#include "fedsim/engine.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <thread>

#include "fedsim/errors.hpp"

namespace fedsim {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// fixed sub-stream labels under (seed, 0, *); rounds use (seed, r>=1, *)
constexpr std::uint64_t kDataStream = 1;
constexpr std::uint64_t kPartitionStream = 2;
constexpr std::uint64_t kInitStream = 3;

// Run f(0..count-1) on up to `threads` workers. Tasks must be independent;
// exceptions are collected and the lowest-index one is rethrown.
template <typename F>
void parallel_for(std::size_t count, int threads, F&& f) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) f(i);
    return;
  }
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          f(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::unique_ptr<LossModel> make_model(const ExperimentConfig& cfg,
                                      std::size_t feature_dim) {
  const auto& m = cfg.model;
  switch (m.kind) {
    case ModelKind::BinaryLogistic:
      return std::make_unique<BinaryLogistic>(feature_dim, m.mu_reg);
    case ModelKind::MultinomialLogistic:
      return std::make_unique<MultinomialLogistic>(feature_dim, m.classes,
                                                   m.mu_reg);
    case ModelKind::TwoLayerMlp:
      return std::make_unique<TwoLayerMlp>(feature_dim, m.classes, m.hidden,
                                           m.mu_reg);
    case ModelKind::LeastSquares:
      return std::make_unique<LeastSquares>(feature_dim, m.mu_reg);
    case ModelKind::TraceRegression: {
      const auto side =
          static_cast<std::size_t>(std::llround(std::sqrt(double(feature_dim))));
      if (side * side != feature_dim) {
        throw InvalidInput("trace regression features must be square matrices");
      }
      return std::make_unique<TraceRegression>(side, m.mu_reg);
    }
  }
  throw InvalidInput("unknown model kind");
}

}  // namespace

std::vector<std::size_t> sample_clients(std::size_t n_clients,
                                        std::size_t participants, Rng& rng) {
  if (participants < 1) throw InvalidInput("sample_clients: S must be >= 1");
  if (participants > n_clients) {
    throw InvalidInput("sample_clients: S exceeds N");
  }
  return rng.sample_without_replacement(n_clients, participants);
}

double direction_variance(const std::vector<ParamVector>& directions) {
  if (directions.size() < 2) {
    throw InvalidInput("direction_variance: need at least two directions");
  }
  const std::size_t d = directions.front().size();
  ParamVector mean(d);
  for (const auto& dir : directions) mean += dir;
  mean *= 1.0 / static_cast<double>(directions.size());
  double total = 0.0;
  for (const auto& dir : directions) {
    for (std::size_t k = 0; k < d; ++k) {
      const double dev = dir[k] - mean[k];
      total += dev * dev;
    }
  }
  return total / static_cast<double>(directions.size());
}

std::optional<std::size_t> rounds_to_target(const MetricsTrace& trace,
                                            double target_accuracy) {
  for (const auto& rec : trace.records) {
    if (std::isfinite(rec.test_acc) && rec.test_acc >= target_accuracy) {
      return rec.round;
    }
  }
  return std::nullopt;
}

std::size_t resolved_eval_every(const ExperimentConfig& cfg) {
  if (cfg.eval_every > 0) return cfg.eval_every;
  return cfg.model.kind == ModelKind::TraceRegression ? 1 : 5;
}

Simulation::~Simulation() = default;

Simulation::Simulation(const ExperimentConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), seed_(seed) {
  if (cfg.n_clients < 1) throw InvalidInput("need at least one client");
  if (cfg.participants < 1 || cfg.participants > cfg.n_clients) {
    throw InvalidInput("participants must satisfy 1 <= S <= N");
  }

  const std::uint64_t data_seed = Rng::mix(Rng::mix(seed, 0), kDataStream);
  const std::uint64_t part_seed = Rng::mix(Rng::mix(seed, 0), kPartitionStream);

  switch (cfg.data.kind) {
    case DataKind::SyntheticLogistic: {
      Dataset all = gen_logistic(cfg.data.dim, cfg.data.classes,
                                 cfg.data.samples + cfg.data.test_samples,
                                 cfg.data.separation, data_seed);
      Dataset train;
      LocalDataset test;
      for (std::size_t i = 0; i < all.size(); ++i) {
        if (i < cfg.data.samples) {
          train.features.push_back(std::move(all.features[i]));
          train.labels.push_back(all.labels[i]);
        } else {
          test.features.push_back(std::move(all.features[i]));
          test.labels.push_back(all.labels[i]);
        }
      }
      PartitionSpec spec{cfg.partition, cfg.c_percent, part_seed};
      data_ = partition(train, spec, cfg.n_clients, cfg.algo.blocks);
      if (!test.features.empty()) {
        test.set_blocks(1);
        data_.test = std::move(test);
      }
      break;
    }
    case DataKind::Lrme: {
      LrmeData lrme = gen_lrme(cfg.data.dim, cfg.data.rank,
                               cfg.data.samples_per_client, cfg.n_clients,
                               cfg.data.noise_sigma, data_seed,
                               cfg.data.test_samples);
      data_ = std::move(lrme.fed);
      truth_ = std::move(lrme.truth);
      for (auto& client : data_.clients) client.set_blocks(cfg.algo.blocks);
      break;
    }
    case DataKind::Idx: {
      Dataset train = load_idx(cfg.data.train_images, cfg.data.train_labels);
      PartitionSpec spec{cfg.partition, cfg.c_percent, part_seed};
      data_ = partition(train, spec, cfg.n_clients, cfg.algo.blocks);
      if (!cfg.data.test_images.empty()) {
        Dataset test = load_idx(cfg.data.test_images, cfg.data.test_labels);
        LocalDataset t;
        t.features = std::move(test.features);
        t.labels = std::move(test.labels);
        t.set_blocks(1);
        data_.test = std::move(t);
      }
      break;
    }
    case DataKind::Csv: {
      Dataset train = load_csv(cfg.data.train_path, cfg.data.label_column);
      PartitionSpec spec{cfg.partition, cfg.c_percent, part_seed};
      data_ = partition(train, spec, cfg.n_clients, cfg.algo.blocks);
      if (!cfg.data.test_path.empty()) {
        Dataset test = load_csv(cfg.data.test_path, cfg.data.label_column);
        LocalDataset t;
        t.features = std::move(test.features);
        t.labels = std::move(test.labels);
        t.set_blocks(1);
        data_.test = std::move(t);
      }
      break;
    }
  }

  if (data_.clients.empty() || data_.clients.front().size() == 0) {
    throw InvalidInput("empty federated dataset");
  }
  const std::size_t feature_dim = data_.clients.front().features.front().size();
  model_ = make_model(cfg, feature_dim);

  Rng init_rng = Rng::derive(Rng::mix(seed, 0), kInitStream);
  const ParamVector x0 = model_->init_params(init_rng);

  clients_.reserve(cfg.n_clients);
  for (std::size_t i = 0; i < cfg.n_clients; ++i) {
    clients_.push_back(client_init(cfg.algorithm, *model_, data_.clients[i], x0,
                                   cfg.warm_start));
  }
  server_ = server_init(cfg.algorithm, *model_, x0, clients_, cfg.warm_start);
}

void Simulation::run_round(int threads) {
  const std::size_t r = round_ + 1;  // rounds are 1-based
  Rng sampler = Rng::derive(seed_, r, 0);
  last_participants_ = sample_clients(cfg_.n_clients, cfg_.participants, sampler);
  const std::size_t s = last_participants_.size();
  last_directions_.assign(s, {});

  try {
    if (cfg_.algorithm == Algorithm::FedAdmm) {
      fedadmm_server_update(server_, clients_, *model_, cfg_.algo,
                            cfg_.n_clients);
      const ParamVector z = server_.x;  // broadcast, fixed over the round
      parallel_for(s, threads, [&](std::size_t slot) {
        const std::size_t ci = last_participants_[slot];
        Rng rng = Rng::derive(seed_, r, ci + 1);
        try {
          fedadmm_local_round(clients_[ci], z, *model_, data_.clients[ci],
                              cfg_.algo, cfg_.n_clients, rng);
        } catch (NumericalDivergence& e) {
          e.set_client(ci);
          throw;
        }
      });
    } else {
      ParamVector anchor;
      if (cfg_.algorithm == Algorithm::MimeSvrg) {
        // round anchor: average of the participants' full local gradients at
        // the broadcast model
        std::vector<ParamVector> fulls(s);
        parallel_for(s, threads, [&](std::size_t slot) {
          const std::size_t ci = last_participants_[slot];
          fulls[slot] = model_->full_gradient(server_.x, data_.clients[ci]);
        });
        anchor = ParamVector(model_->param_size());
        for (const auto& g : fulls) axpy(1.0 / static_cast<double>(s), g, anchor);
      }

      std::vector<ClientDelta> deltas(s);
      parallel_for(s, threads, [&](std::size_t slot) {
        const std::size_t ci = last_participants_[slot];
        Rng rng = Rng::derive(seed_, r, ci + 1);
        try {
          LocalRoundResult res = run_local_round(
              cfg_.algorithm, clients_[ci], server_,
              anchor.empty() ? nullptr : &anchor, *model_, data_.clients[ci],
              cfg_.algo, cfg_.n_clients, rng);
          deltas[slot] = std::move(res.delta);
          last_directions_[slot] = std::move(res.directions);
        } catch (NumericalDivergence& e) {
          e.set_client(ci);
          throw;
        }
      });
      run_server_aggregate(cfg_.algorithm, server_, deltas, cfg_.n_clients, s,
                           cfg_.algo);
    }
  } catch (NumericalDivergence& e) {
    e.set_round(r);
    throw;
  }
  round_ = r;
}

MetricRecord Simulation::evaluate() const {
  MetricRecord rec;
  rec.round = round_;

  const ParamVector& x = current_estimate();
  double train = 0.0;
  for (const auto& client : data_.clients) {
    train += model_->loss(x, client);
  }
  rec.train_loss = train / static_cast<double>(data_.clients.size());

  if (data_.test) {
    rec.test_loss = model_->loss(x, *data_.test);
    rec.test_acc = model_->is_classifier() ? model_->accuracy(x, *data_.test)
                                           : kNan;
  } else {
    rec.test_loss = kNan;
    rec.test_acc = kNan;
  }

  std::vector<ParamVector> dirs;
  for (const auto& per_client : last_directions_) {
    for (const auto& d : per_client) dirs.push_back(d);
  }
  rec.dir_variance = dirs.size() >= 2 ? direction_variance(dirs) : kNan;

  if (truth_) {
    const std::size_t side = truth_->dim;
    const ParamMatrix est = matrix_from_flat(x, side, side);
    rec.recovery_err = frobenius_distance(est, truth_->x_g);
    rec.recovered_rank = static_cast<double>(effective_rank(est, 1e-3));
  } else {
    rec.recovery_err = kNan;
    rec.recovered_rank = kNan;
  }
  return rec;
}

RunResult run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                         int threads) {
  const auto start = std::chrono::steady_clock::now();
  const auto elapsed = [&]() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  };

  Simulation sim(cfg, seed);
  const std::size_t cadence = resolved_eval_every(cfg);

  RunResult out;
  MetricRecord first = sim.evaluate();
  first.wall_seconds = elapsed();
  out.trace.records.push_back(first);

  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    sim.run_round(threads);
    if (r % cadence == 0 || r == cfg.rounds) {
      MetricRecord rec = sim.evaluate();
      rec.wall_seconds = elapsed();
      out.trace.records.push_back(rec);
    }
  }
  out.x_final = sim.server().x;
  out.phi_final = sim.server().phi;
  return out;
}

}  // namespace fedsim
