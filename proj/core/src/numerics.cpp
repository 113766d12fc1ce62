#include "fedsim/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedsim/errors.hpp"

namespace fedsim {

bool ParamVector::finite() const {
  for (double x : values) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

ParamVector& ParamVector::operator+=(const ParamVector& o) {
  for (std::size_t i = 0; i < values.size(); ++i) values[i] += o.values[i];
  return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& o) {
  for (std::size_t i = 0; i < values.size(); ++i) values[i] -= o.values[i];
  return *this;
}

ParamVector& ParamVector::operator*=(double a) {
  for (double& x : values) x *= a;
  return *this;
}

ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
ParamVector operator*(double a, ParamVector v) { return v *= a; }

void axpy(double a, const ParamVector& x, ParamVector& y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

double dot(const ParamVector& a, const ParamVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const ParamVector& v) { return std::sqrt(dot(v, v)); }

ParamMatrix ParamMatrix::identity(std::size_t n) {
  ParamMatrix m(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

bool ParamMatrix::finite() const {
  for (double x : values) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

ParamMatrix mat_mul(const ParamMatrix& a, const ParamMatrix& b) {
  if (a.cols != b.rows) throw InvalidInput("mat_mul: inner dimensions differ");
  ParamMatrix c(a.rows, b.cols, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) {
        c.at(i, j) += aik * b.at(k, j);
      }
    }
  }
  return c;
}

ParamMatrix transpose(const ParamMatrix& a) {
  ParamMatrix t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < a.cols; ++j) t.at(j, i) = a.at(i, j);
  }
  return t;
}

double frobenius_norm(const ParamMatrix& a) {
  double s = 0.0;
  for (double x : a.values) s += x * x;
  return std::sqrt(s);
}

double frobenius_distance(const ParamMatrix& a, const ParamMatrix& b) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw InvalidInput("frobenius_distance: shape mismatch");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const double d = a.values[i] - b.values[i];
    s += d * d;
  }
  return std::sqrt(s);
}

ParamMatrix matrix_from_flat(const ParamVector& v, std::size_t rows,
                             std::size_t cols) {
  if (v.size() != rows * cols) {
    throw InvalidInput("matrix_from_flat: size mismatch");
  }
  ParamMatrix m(rows, cols);
  m.values = v.values;
  return m;
}

ParamVector flat_from_matrix(const ParamMatrix& m) {
  ParamVector v;
  v.values = m.values;
  return v;
}

namespace {

// Fill U columns whose singular value is (numerically) zero with an
// orthonormal completion, so U stays orthogonal for rank-deficient inputs.
void complete_basis(ParamMatrix& u, const std::vector<bool>& is_null) {
  const std::size_t d = u.rows;
  for (std::size_t k = 0; k < d; ++k) {
    if (!is_null[k]) continue;
    double best_norm = -1.0;
    std::vector<double> best;
    for (std::size_t cand = 0; cand < d; ++cand) {
      std::vector<double> col(d, 0.0);
      col[cand] = 1.0;
      // project out every already-valid column
      for (std::size_t j = 0; j < d; ++j) {
        if (j != k && is_null[j]) continue;  // skip other not-yet-filled nulls
        if (j == k) continue;
        double proj = 0.0;
        for (std::size_t r = 0; r < d; ++r) proj += col[r] * u.at(r, j);
        for (std::size_t r = 0; r < d; ++r) col[r] -= proj * u.at(r, j);
      }
      double nrm = 0.0;
      for (double x : col) nrm += x * x;
      nrm = std::sqrt(nrm);
      if (nrm > best_norm) {
        best_norm = nrm;
        best = std::move(col);
      }
      if (best_norm > 0.5) break;  // good enough, canonical vectors suffice
    }
    for (std::size_t r = 0; r < d; ++r) u.at(r, k) = best[r] / best_norm;
  }
}

}  // namespace

SvdResult svd(const ParamMatrix& a) {
  if (a.rows != a.cols) throw InvalidInput("svd: matrix must be square");
  if (a.rows > 512) throw InvalidInput("svd: dimension exceeds supported 512");
  if (a.rows == 0) throw InvalidInput("svd: empty matrix");
  if (!a.finite()) throw InvalidInput("svd: non-finite input");

  const std::size_t d = a.rows;
  ParamMatrix w = a;  // columns are orthogonalized in place
  ParamMatrix v = ParamMatrix::identity(d);

  constexpr double kTol = 1e-12;
  constexpr int kMaxSweeps = 64;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t r = 0; r < d; ++r) {
          const double wp = w.at(r, p), wq = w.at(r, q);
          app += wp * wp;
          aqq += wq * wq;
          apq += wp * wq;
        }
        if (app == 0.0 || aqq == 0.0) continue;
        const double rel = std::abs(apq) / std::sqrt(app * aqq);
        off = std::max(off, rel);
        if (rel <= kTol) continue;
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t =
            (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (std::size_t r = 0; r < d; ++r) {
          const double wp = w.at(r, p), wq = w.at(r, q);
          w.at(r, p) = cs * wp - sn * wq;
          w.at(r, q) = sn * wp + cs * wq;
          const double vp = v.at(r, p), vq = v.at(r, q);
          v.at(r, p) = cs * vp - sn * vq;
          v.at(r, q) = sn * vp + cs * vq;
        }
      }
    }
    if (off <= kTol) break;
  }

  std::vector<double> sigma(d);
  for (std::size_t k = 0; k < d; ++k) {
    double s = 0.0;
    for (std::size_t r = 0; r < d; ++r) s += w.at(r, k) * w.at(r, k);
    sigma[k] = std::sqrt(s);
  }

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

  SvdResult out;
  out.u = ParamMatrix(d, d);
  out.v = ParamMatrix(d, d);
  out.sigma.resize(d);
  const double sigma_max = sigma[order[0]];
  const double null_tol = sigma_max * 1e-12;
  std::vector<bool> is_null(d, false);
  for (std::size_t k = 0; k < d; ++k) {
    const std::size_t src = order[k];
    out.sigma[k] = sigma[src];
    for (std::size_t r = 0; r < d; ++r) out.v.at(r, k) = v.at(r, src);
    if (sigma[src] <= null_tol) {
      is_null[k] = true;  // filled by completion below
      continue;
    }
    for (std::size_t r = 0; r < d; ++r) out.u.at(r, k) = w.at(r, src) / sigma[src];
  }
  complete_basis(out.u, is_null);

  // sign convention: largest-magnitude entry of each U column positive
  for (std::size_t k = 0; k < d; ++k) {
    std::size_t arg = 0;
    double mx = 0.0;
    for (std::size_t r = 0; r < d; ++r) {
      const double m = std::abs(out.u.at(r, k));
      if (m > mx) {
        mx = m;
        arg = r;
      }
    }
    if (out.u.at(arg, k) < 0.0) {
      for (std::size_t r = 0; r < d; ++r) {
        out.u.at(r, k) = -out.u.at(r, k);
        out.v.at(r, k) = -out.v.at(r, k);
      }
    }
  }
  return out;
}

ParamVector prox_l1(const ParamVector& v, double tau) {
  if (!(tau >= 0.0)) throw InvalidInput("prox_l1: tau must be non-negative");
  if (!v.finite()) throw InvalidInput("prox_l1: non-finite input");
  ParamVector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = v[i];
    const double mag = std::abs(x) - tau;
    out[i] = mag > 0.0 ? (x > 0.0 ? mag : -mag) : 0.0;
  }
  return out;
}

ParamMatrix prox_nuclear(const ParamMatrix& a, double tau) {
  if (!(tau >= 0.0)) throw InvalidInput("prox_nuclear: tau must be non-negative");
  const SvdResult f = svd(a);
  const std::size_t d = a.rows;
  // U diag(soft(sigma)) V^T, skipping thresholded-away components
  ParamMatrix out(d, d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double s = f.sigma[k] - tau;
    if (s <= 0.0) break;  // sigma descending
    for (std::size_t i = 0; i < d; ++i) {
      const double uis = f.u.at(i, k) * s;
      if (uis == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) {
        out.at(i, j) += uis * f.v.at(j, k);
      }
    }
  }
  return out;
}

std::size_t effective_rank(const ParamMatrix& a, double threshold) {
  const SvdResult f = svd(a);
  std::size_t rank = 0;
  for (double s : f.sigma) {
    if (s > threshold) ++rank;
  }
  return rank;
}

}  // namespace fedsim
