#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fedsim/errors.hpp"
#include "fedsim/numerics.hpp"
#include "fedsim/rng.hpp"
#include "support/oracles.hpp"

using namespace fedsim;

namespace {

ParamMatrix reconstruct(const SvdResult& f) {
  const std::size_t d = f.u.rows;
  ParamMatrix s(d, d, 0.0);
  for (std::size_t i = 0; i < d; ++i) s.at(i, i) = f.sigma[i];
  return mat_mul(mat_mul(f.u, s), transpose(f.v));
}

double orthogonality_defect(const ParamMatrix& q) {
  const ParamMatrix g = mat_mul(transpose(q), q);
  return frobenius_distance(g, ParamMatrix::identity(q.rows));
}

}  // namespace

TEST_CASE("svd of the identity") {
  const SvdResult f = svd(ParamMatrix::identity(3));
  for (double s : f.sigma) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("svd of a diagonal matrix") {
  ParamMatrix a(2, 2, 0.0);
  a.at(0, 0) = 3.0;
  a.at(1, 1) = 0.5;
  const SvdResult f = svd(a);
  CHECK(f.sigma[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(f.sigma[1] == doctest::Approx(0.5).epsilon(1e-12));
  // with the sign convention the factors are exactly the identity
  CHECK(frobenius_distance(f.u, ParamMatrix::identity(2)) < 1e-12);
  CHECK(frobenius_distance(f.v, ParamMatrix::identity(2)) < 1e-12);
}

TEST_CASE("svd reconstruction and factor invariants on random matrices") {
  Rng rng(7);
  for (int trial = 0; trial < 6; ++trial) {
    const ParamMatrix a = oracles::random_matrix(8, rng);
    const SvdResult f = svd(a);
    for (std::size_t k = 0; k + 1 < f.sigma.size(); ++k) {
      CHECK(f.sigma[k] >= f.sigma[k + 1]);
      CHECK(f.sigma[k] >= 0.0);
    }
    CHECK(orthogonality_defect(f.u) <= 1e-8 * 8);
    CHECK(orthogonality_defect(f.v) <= 1e-8 * 8);
    CHECK(frobenius_distance(reconstruct(f), a) <= 1e-8 * frobenius_norm(a));
  }
}

TEST_CASE("svd singular values match the eigenvalue oracle") {
  Rng rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    const ParamMatrix a = oracles::random_matrix(8, rng);
    const SvdResult f = svd(a);
    const auto want = oracles::singular_values_oracle(a);
    for (std::size_t k = 0; k < want.size(); ++k) {
      CHECK(std::abs(f.sigma[k] - want[k]) <= 1e-7 * std::max(1.0, want[k]));
    }
  }
}

TEST_CASE("svd keeps U orthogonal on rank-deficient input") {
  ParamMatrix a(6, 6, 0.0);
  a.at(0, 0) = 1.0;
  a.at(1, 1) = 1.0;  // rank 2
  const SvdResult f = svd(a);
  CHECK(f.sigma[0] == doctest::Approx(1.0));
  CHECK(f.sigma[1] == doctest::Approx(1.0));
  for (std::size_t k = 2; k < 6; ++k) CHECK(f.sigma[k] <= 1e-10);
  CHECK(orthogonality_defect(f.u) <= 1e-8 * 6);
  CHECK(frobenius_distance(reconstruct(f), a) <= 1e-8);
}

TEST_CASE("svd input validation") {
  CHECK_THROWS_AS(svd(ParamMatrix(2, 3)), InvalidInput);
  CHECK_THROWS_AS(svd(ParamMatrix(600, 600)), InvalidInput);
  ParamMatrix bad(2, 2, 0.0);
  bad.at(0, 0) = std::nan("");
  CHECK_THROWS_AS(svd(bad), InvalidInput);
}

TEST_CASE("prox_l1 scalar cases") {
  CHECK(prox_l1(ParamVector{2.5}, 1.0)[0] == doctest::Approx(1.5));
  CHECK(prox_l1(ParamVector{-0.3}, 1.0)[0] == 0.0);
  const ParamVector v{1.0, -2.0, 0.5};
  const ParamVector same = prox_l1(v, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(same[i] == v[i]);
}

TEST_CASE("prox_l1 agrees with the closed form componentwise") {
  Rng rng(3);
  for (const double tau : {0.0, 0.5, 10.0}) {
    ParamVector v(40);
    for (auto& x : v) x = rng.normal(0.0, 4.0);
    const ParamVector got = prox_l1(v, tau);
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double want =
          (v[i] > 0 ? 1.0 : -1.0) * std::max(std::abs(v[i]) - tau, 0.0);
      CHECK(got[i] == doctest::Approx(want).epsilon(1e-15));
    }
  }
}

TEST_CASE("prox_l1 rejects negative tau") {
  CHECK_THROWS_AS(prox_l1(ParamVector{1.0}, -0.1), InvalidInput);
}

TEST_CASE("prox_nuclear on a diagonal matrix soft-thresholds the diagonal") {
  ParamMatrix a(2, 2, 0.0);
  a.at(0, 0) = 3.0;
  a.at(1, 1) = 0.5;
  const ParamMatrix got = prox_nuclear(a, 1.0);
  CHECK(got.at(0, 0) == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(std::abs(got.at(1, 1)) <= 1e-10);
  CHECK(std::abs(got.at(0, 1)) <= 1e-10);
  CHECK(std::abs(got.at(1, 0)) <= 1e-10);
}

TEST_CASE("prox_nuclear with tau 0 reconstructs the input") {
  Rng rng(11);
  const ParamMatrix a = oracles::random_matrix(10, rng);
  CHECK(frobenius_distance(prox_nuclear(a, 0.0), a) <= 1e-8 * frobenius_norm(a));
}

TEST_CASE("prox_nuclear matches the subgradient-descent oracle") {
  Rng rng(5);
  const double tau = 0.1;
  for (int trial = 0; trial < 5; ++trial) {
    ParamMatrix a = oracles::random_matrix(16, rng);
    // keep the minimizer away from the nonsmooth set so the oracle converges
    const auto sv = oracles::singular_values_oracle(a);
    const double smin = sv.back();
    if (smin < 3.0 * tau) {
      const double scale = 3.0 * tau / std::max(smin, 1e-8);
      for (double& v : a.values) v *= scale;
    }
    const ParamMatrix want = oracles::prox_nuclear_subgradient_oracle(a, tau);
    const ParamMatrix got = prox_nuclear(a, tau);
    CHECK(frobenius_distance(got, want) <= 1e-4);
  }
}

TEST_CASE("prox_nuclear is non-expansive") {
  Rng rng(13);
  for (int trial = 0; trial < 8; ++trial) {
    const ParamMatrix a = oracles::random_matrix(12, rng);
    const ParamMatrix b = oracles::random_matrix(12, rng);
    const double tau = rng.uniform(0.0, 2.0);
    const double lhs = frobenius_distance(prox_nuclear(a, tau), prox_nuclear(b, tau));
    CHECK(lhs <= frobenius_distance(a, b) + 1e-10);
  }
}

TEST_CASE("effective rank counts thresholded singular values") {
  ParamMatrix a(4, 4, 0.0);
  a.at(0, 0) = 2.0;
  a.at(1, 1) = 0.5;
  a.at(2, 2) = 5e-4;
  CHECK(effective_rank(a, 1e-3) == 2);
}
