// Test-only oracles, independent of the library paths they check.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedsim/models.hpp"
#include "fedsim/numerics.hpp"
#include "fedsim/rng.hpp"

namespace oracles {

using fedsim::LocalDataset;
using fedsim::LossModel;
using fedsim::ParamMatrix;
using fedsim::ParamVector;
using fedsim::Rng;

// ---------------------------------------------------------------------------
// Cyclic two-sided Jacobi eigenvalue iteration for symmetric matrices.
// Returns eigenvalues descending plus the eigenvector matrix (columns).

struct SymEigen {
  std::vector<double> values;
  ParamMatrix vectors;
};

inline SymEigen sym_eigen_jacobi(ParamMatrix s) {
  const std::size_t n = s.rows;
  ParamMatrix v = ParamMatrix::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double spq = s.at(p, q);
        const double scale = std::abs(s.at(p, p)) + std::abs(s.at(q, q));
        if (std::abs(spq) <= 1e-15 * (scale > 0 ? scale : 1.0)) continue;
        off = std::max(off, std::abs(spq));
        const double theta = (s.at(q, q) - s.at(p, p)) / (2.0 * spq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = c * t;
        for (std::size_t k = 0; k < n; ++k) {
          const double skp = s.at(k, p), skq = s.at(k, q);
          s.at(k, p) = c * skp - sn * skq;
          s.at(k, q) = sn * skp + c * skq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double spk = s.at(p, k), sqk = s.at(q, k);
          s.at(p, k) = c * spk - sn * sqk;
          s.at(q, k) = sn * spk + c * sqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v.at(k, p), vkq = v.at(k, q);
          v.at(k, p) = c * vkp - sn * vkq;
          v.at(k, q) = sn * vkp + c * vkq;
        }
      }
    }
    if (off == 0.0) break;
  }
  SymEigen out;
  out.values.resize(n);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::vector<double> diag(n);
  for (std::size_t i = 0; i < n; ++i) diag[i] = s.at(i, i);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return diag[a] > diag[b]; });
  out.vectors = ParamMatrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = diag[order[k]];
    for (std::size_t r = 0; r < n; ++r) out.vectors.at(r, k) = v.at(r, order[k]);
  }
  return out;
}

/// Singular values of A as sqrt(eig(A^T A)), descending.
inline std::vector<double> singular_values_oracle(const ParamMatrix& a) {
  const ParamMatrix ata = fedsim::mat_mul(fedsim::transpose(a), a);
  SymEigen e = sym_eigen_jacobi(ata);
  std::vector<double> out(e.values.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::sqrt(std::max(0.0, e.values[i]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subgradient descent on h(Z) = tau ||Z||_* + 1/2 ||Z - A||_F^2, run to
// small gradient norm. The nuclear-norm subgradient U V^T is assembled from
// the Jacobi eigendecomposition of Z^T Z (no dependence on fedsim::svd).
// Reliable when the minimizer keeps all singular values positive, i.e.
// sigma_min(A) > tau.

inline ParamMatrix prox_nuclear_subgradient_oracle(const ParamMatrix& a,
                                                   double tau,
                                                   double stat_tol = 1e-6,
                                                   std::size_t max_iters = 100000) {
  const std::size_t n = a.rows;
  ParamMatrix z = a;
  const double step = 0.4;
  for (std::size_t it = 0; it < max_iters; ++it) {
    const ParamMatrix ztz = fedsim::mat_mul(fedsim::transpose(z), z);
    const SymEigen e = sym_eigen_jacobi(ztz);
    // U1 V1^T = Z V1 Sigma1^{-1} V1^T over the positive singular values
    ParamMatrix scaled(n, n, 0.0);  // V1 Sigma1^{-1} V1^T
    for (std::size_t k = 0; k < n; ++k) {
      const double sigma = std::sqrt(std::max(0.0, e.values[k]));
      if (sigma <= 1e-12) continue;
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          scaled.at(i, j) += e.vectors.at(i, k) * e.vectors.at(j, k) / sigma;
        }
      }
    }
    const ParamMatrix uv = fedsim::mat_mul(z, scaled);
    ParamMatrix grad(n, n);
    double gnorm = 0.0;
    for (std::size_t i = 0; i < z.values.size(); ++i) {
      grad.values[i] = tau * uv.values[i] + (z.values[i] - a.values[i]);
      gnorm += grad.values[i] * grad.values[i];
    }
    gnorm = std::sqrt(gnorm);
    if (gnorm <= stat_tol * std::max(1.0, fedsim::frobenius_norm(a))) return z;
    for (std::size_t i = 0; i < z.values.size(); ++i) {
      z.values[i] -= step * grad.values[i];
    }
  }
  throw std::runtime_error("prox oracle did not reach stationarity");
}

// ---------------------------------------------------------------------------
// Finite differences

/// Copy of one block as a standalone dataset (single block), so the model's
/// public loss() evaluates the block-mean loss the block gradient differentiates.
inline LocalDataset block_restricted(const LocalDataset& data, std::size_t j) {
  const auto [lo, hi] = data.block_range(j);
  LocalDataset out;
  for (std::size_t i = lo; i < hi; ++i) {
    out.features.push_back(data.features[i]);
    out.labels.push_back(data.labels[i]);
  }
  out.set_blocks(1);
  return out;
}

/// Central finite differences of model.loss on `data` at `p`.
inline ParamVector fd_gradient(const LossModel& model, const ParamVector& p,
                               const LocalDataset& data, double h = 1e-6) {
  ParamVector g(p.size());
  ParamVector probe = p;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double saved = probe[k];
    probe[k] = saved + h;
    const double up = model.loss(probe, data);
    probe[k] = saved - h;
    const double dn = model.loss(probe, data);
    probe[k] = saved;
    g[k] = (up - dn) / (2.0 * h);
  }
  return g;
}

inline double rel_error(const ParamVector& got, const ParamVector& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double d = got[i] - want[i];
    num += d * d;
    den += want[i] * want[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

// ---------------------------------------------------------------------------
// Random-stream schedule search: find seeds whose first block draws follow a
// wanted schedule, so hand traces can pin the sampled block sequence without
// any test hooks in the library.

inline std::uint64_t find_seed_for_draws(std::size_t m,
                                         const std::vector<std::size_t>& wanted) {
  for (std::uint64_t seed = 0; seed < 100000; ++seed) {
    Rng rng(seed);
    bool ok = true;
    for (const std::size_t w : wanted) {
      if (rng.uniform_index(m) != w) {
        ok = false;
        break;
      }
    }
    if (ok) return seed;
  }
  throw std::runtime_error("no seed found for the wanted draw schedule");
}

/// Same, but for the engine's per-(round, client) stream derivation.
inline std::uint64_t find_master_seed_for_draws(
    std::size_t m, const std::vector<std::size_t>& wanted, std::uint64_t round,
    std::uint64_t client) {
  for (std::uint64_t seed = 0; seed < 100000; ++seed) {
    Rng rng = Rng::derive(seed, round, client + 1);
    bool ok = true;
    for (const std::size_t w : wanted) {
      if (rng.uniform_index(m) != w) {
        ok = false;
        break;
      }
    }
    if (ok) return seed;
  }
  throw std::runtime_error("no master seed found for the wanted draw schedule");
}

// ---------------------------------------------------------------------------
// misc

inline std::filesystem::path write_temp_file(const std::string& stem,
                                             const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() /
                    ("fedsim_test_" + stem);
  std::ofstream out(path, std::ios::binary);
  out << content;
  out.close();
  return path;
}

inline ParamMatrix random_matrix(std::size_t n, Rng& rng, double scale = 1.0) {
  ParamMatrix m(n, n);
  for (double& v : m.values) v = scale * rng.normal();
  return m;
}

}  // namespace oracles
