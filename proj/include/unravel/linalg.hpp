#pragma once

#include <complex>

#include <Eigen/Dense>

namespace unravel {

using Complex = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using RVector = Eigen::VectorXd;
using RMatrix = Eigen::MatrixXd;

inline constexpr Complex kI{0.0, 1.0};

// Largest singular value.
double operator_norm(const CMatrix& a);

// Smallest eigenvalue of the Hermitian part of `a`.
double min_hermitian_eigenvalue(const CMatrix& a);

// Real part of <x, y> with the physics convention (antilinear in x).
inline double real_inner(const CVector& x, const CVector& y) { return x.dot(y).real(); }

}  // namespace unravel
