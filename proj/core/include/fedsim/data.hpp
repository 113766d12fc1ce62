#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/models.hpp"
#include "fedsim/numerics.hpp"

namespace fedsim {

/// Un-federated sample table produced by generators and loaders.
struct Dataset {
  std::vector<std::vector<double>> features;
  std::vector<double> labels;
  std::size_t size() const { return features.size(); }
};

enum class PartitionScheme { Iid, Sorted, Mixture };

struct PartitionSpec {
  PartitionScheme scheme = PartitionScheme::Iid;
  std::optional<double> c_percent;  // required iff scheme == Mixture
  std::uint64_t seed = 0;
};

/// Per-client datasets plus an optional held-out test set. Client datasets
/// are disjoint and their union is the source training set.
struct FederatedDataset {
  std::vector<LocalDataset> clients;
  std::optional<LocalDataset> test;
};

/// Ground truth for low-rank recovery: identity block of size rank in the
/// top-left corner, zeros elsewhere.
struct LrmeGroundTruth {
  ParamMatrix x_g;
  std::size_t rank = 0;
  std::size_t dim = 0;
};

/// Split `dataset` across `n_clients` clients with `blocks` gradient blocks
/// each. iid: seeded shuffle then even split. sorted: stable sort by label
/// then even split. mixture: the first (1-c%) of the shuffled samples are
/// split evenly, then the remaining c% are sorted by label and dealt out in
/// label order (low-index clients receive low labels), per-client counts
/// staying balanced. c = 0 reproduces iid exactly and c = 100 reproduces
/// sorted exactly for the same seed.
FederatedDataset partition(const Dataset& dataset, const PartitionSpec& spec,
                           std::size_t n_clients, std::size_t blocks);

struct LrmeData {
  FederatedDataset fed;
  LrmeGroundTruth truth;
};

/// Synthetic trace-regression instances: sample matrices with N(0.1, 1)
/// entries and observations y = <X_G, D> + N(0, noise_sigma).
LrmeData gen_lrme(std::size_t dim, std::size_t rank,
                  std::size_t samples_per_client, std::size_t n_clients,
                  double noise_sigma, std::uint64_t seed,
                  std::size_t test_samples = 0);

/// Gaussian class clusters: unit-norm class centers scaled by `separation`
/// plus standard normal noise; labels cycle through the classes.
Dataset gen_logistic(std::size_t dim, std::size_t classes, std::size_t samples,
                     double separation, std::uint64_t seed);

/// MNIST-style IDX pair (big-endian, image magic 0x00000803, label magic
/// 0x00000801). Pixel values are scaled to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// Comma-separated table; a non-numeric first row is treated as a header.
/// `label_column` is a header name or a zero-based column index.
Dataset load_csv(const std::string& path, const std::string& label_column);

}  // namespace fedsim
