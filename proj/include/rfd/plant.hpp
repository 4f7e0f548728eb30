#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

#include "rfd/fir.hpp"

namespace rfd {

inline double spectral_radius(const Matrix& a) {
  if (a.rows() != a.cols())
    throw std::invalid_argument("spectral_radius: square matrix required");
  Eigen::EigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double condition_number(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s(s.size() - 1) <= 0.0)
    return std::numeric_limits<double>::infinity();
  return s(0) / (s(s.size() - 1));
}

/// Four-block generalized plant in state-space form, with the orthogonality
/// weights rho_u (control) and rho_w (measurement noise) implied by the
/// D-blocks.  P_ij = C_i (zI - A)^-1 B_j + D_ij, D_11 = D_22 = 0.
struct GeneralizedPlant {
  Matrix A, B1, B2, C1, C2, D12, D21;
  double rho_u = 0.0;
  double rho_w = 0.0;

  Eigen::Index n() const { return A.rows(); }
  Eigen::Index n_w() const { return B1.cols(); }
  Eigen::Index n_a() const { return B2.cols(); }
  Eigen::Index n_y() const { return C1.rows(); }
  Eigen::Index n_m() const { return C2.rows(); }

  void check_dimensions() const {
    if (A.rows() != A.cols()) throw std::invalid_argument("plant: A not square");
    if (B1.rows() != n() || B2.rows() != n() || C1.cols() != n() ||
        C2.cols() != n())
      throw std::invalid_argument("plant: state dimension mismatch");
    if (D12.rows() != n_y() || D12.cols() != n_a())
      throw std::invalid_argument("plant: D12 shape");
    if (D21.rows() != n_m() || D21.cols() != n_w())
      throw std::invalid_argument("plant: D21 shape");
  }

  /// Orthogonality residual: how far the D-blocks are from
  /// D12'[C1 D12] = [0 rho_u I] and D21[B1' D21'] = [0 rho_w I].
  double orthogonality_residual() const {
    double r = 0.0;
    r = std::max(r, (D12.transpose() * C1).cwiseAbs().maxCoeff());
    r = std::max(r, (D12.transpose() * D12 -
                     rho_u * Matrix::Identity(n_a(), n_a()))
                        .cwiseAbs()
                        .maxCoeff());
    r = std::max(r, (D21 * B1.transpose()).cwiseAbs().maxCoeff());
    r = std::max(r, (D21 * D21.transpose() -
                     rho_w * Matrix::Identity(n_m(), n_m()))
                        .cwiseAbs()
                        .maxCoeff());
    return r;
  }

  bool orthogonal(double tol = 1e-9) const {
    return orthogonality_residual() <= tol;
  }

  bool stable() const { return spectral_radius(A) < 1.0; }

  /// Rows of the stacked output that carry the state cost (D12 rows zero).
  std::vector<Eigen::Index> state_rows() const {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < n_y(); ++i)
      if (D12.row(i).cwiseAbs().maxCoeff() == 0.0) rows.push_back(i);
    return rows;
  }
};

/// Smallest horizon at which r^T drops below the solver tolerance, capped.
/// Used to truncate infinite-horizon reference objects.
inline int reference_horizon(double r, int cap = 500, double tol = 1e-12) {
  if (r <= 0.0) return 2;
  if (r >= 1.0) return cap;
  const double t = std::ceil(std::log(tol) / std::log(r));
  return std::max(2, std::min(cap, static_cast<int>(t)));
}

}  // namespace rfd
