#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace fedsim {

/// Flat model parameters x ∈ R^d.
struct ParamVector {
  std::vector<double> values;

  ParamVector() = default;
  explicit ParamVector(std::size_t n, double fill = 0.0) : values(n, fill) {}
  ParamVector(std::initializer_list<double> init) : values(init) {}

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double* data() { return values.data(); }
  const double* data() const { return values.data(); }
  auto begin() { return values.begin(); }
  auto end() { return values.end(); }
  auto begin() const { return values.begin(); }
  auto end() const { return values.end(); }

  bool finite() const;

  ParamVector& operator+=(const ParamVector& o);
  ParamVector& operator-=(const ParamVector& o);
  ParamVector& operator*=(double a);
};

ParamVector operator+(ParamVector a, const ParamVector& b);
ParamVector operator-(ParamVector a, const ParamVector& b);
ParamVector operator*(double a, ParamVector v);

/// y += a * x
void axpy(double a, const ParamVector& x, ParamVector& y);
double dot(const ParamVector& a, const ParamVector& b);
double norm2(const ParamVector& v);

/// Dense matrix, row-major. Square for all low-rank-recovery uses.
struct ParamMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  ParamMatrix() = default;
  ParamMatrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}

  static ParamMatrix identity(std::size_t n);

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  std::size_t size() const { return values.size(); }
  bool finite() const;
};

ParamMatrix mat_mul(const ParamMatrix& a, const ParamMatrix& b);
ParamMatrix transpose(const ParamMatrix& a);
double frobenius_norm(const ParamMatrix& a);
double frobenius_distance(const ParamMatrix& a, const ParamMatrix& b);

/// Reinterpret flat parameters as a rows x cols matrix (copies).
ParamMatrix matrix_from_flat(const ParamVector& v, std::size_t rows,
                             std::size_t cols);
ParamVector flat_from_matrix(const ParamMatrix& m);

/// A = U diag(sigma) V^T with U, V orthogonal and sigma descending.
struct SvdResult {
  ParamMatrix u;
  std::vector<double> sigma;
  ParamMatrix v;
};

/// Full SVD of a square matrix by one-sided Jacobi rotations (sweep
/// tolerance 1e-12 on the relative off-diagonal mass). Singular vectors use
/// the sign convention that the largest-magnitude entry of each U column is
/// positive. Supported up to d = 512.
SvdResult svd(const ParamMatrix& a);

/// Elementwise soft-threshold: sign(v_k) * max(|v_k| - tau, 0).
ParamVector prox_l1(const ParamVector& v, double tau);

/// Singular-value soft-threshold: U diag(max(sigma - tau, 0)) V^T.
ParamMatrix prox_nuclear(const ParamMatrix& a, double tau);

/// Number of singular values strictly greater than `threshold`.
std::size_t effective_rank(const ParamMatrix& a, double threshold = 1e-3);

}  // namespace fedsim
