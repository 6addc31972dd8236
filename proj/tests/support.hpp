#pragma once

// Random generators and small helpers shared by the test binaries.

#include <cmath>
#include <random>
#include <vector>

#include "unravel/spectral.hpp"

namespace testing {

using unravel::CMatrix;
using unravel::Complex;
using unravel::CVector;

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double normal() { return gauss_(rng_); }
  double uniform(double lo = 0.0, double hi = 1.0) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  CVector vector(int m) {
    CVector v(m);
    for (int i = 0; i < m; ++i) v(i) = Complex(normal(), normal());
    return v;
  }

  CVector unit_vector(int m) {
    CVector v = vector(m);
    return v / v.norm();
  }

  // Haar-distributed unitary via QR with phase fix.
  CMatrix unitary(int m) {
    CMatrix z(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) z(i, j) = Complex(normal(), normal()) / std::sqrt(2.0);
    Eigen::HouseholderQR<CMatrix> qr(z);
    CMatrix q = qr.householderQ();
    CMatrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < m; ++j) {
      const Complex d = r(j, j);
      q.col(j) *= d / std::abs(d);
    }
    return q;
  }

  // Random rank split of m into `channels` positive parts.
  std::vector<int> ranks(int m, int channels) {
    std::vector<int> r(static_cast<std::size_t>(channels), 1);
    for (int extra = m - channels; extra > 0; --extra) ++r[static_cast<std::size_t>(integer(0, channels - 1))];
    return r;
  }

  // Spectral projectors of a randomly rotated observable with the given ranks.
  std::vector<CMatrix> projectors(int m, const std::vector<int>& ranks) {
    const CMatrix u = unitary(m);
    std::vector<CMatrix> out;
    int col = 0;
    for (int r : ranks) {
      const CMatrix block = u.middleCols(col, r);
      out.push_back(block * block.adjoint());
      col += r;
    }
    return out;
  }

  unravel::ProjectorFamily family(int m, int channels, double omega = 1.0) {
    std::vector<double> eigs;
    for (int n = 0; n < channels; ++n) eigs.push_back(n + uniform(-0.3, 0.3));
    return unravel::ProjectorFamily::validate(projectors(m, ranks(m, channels)), eigs, omega);
  }

  CMatrix density(int m) {
    CMatrix a(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) a(i, j) = Complex(normal(), normal());
    CMatrix rho = a * a.adjoint();
    return rho / rho.trace().real();
  }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> gauss_;
};

inline CVector vec2(Complex a, Complex b) {
  CVector v(2);
  v << a, b;
  return v;
}

inline CMatrix mat2(Complex a, Complex b, Complex c, Complex d) {
  CMatrix m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace testing
