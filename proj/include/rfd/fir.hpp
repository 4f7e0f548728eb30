#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace rfd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// A finite-impulse-response transfer matrix: an ordered sequence of
/// equally shaped real coefficient matrices G^(0), ..., G^(d).
/// Immutable after construction; a zero transfer matrix is a single
/// all-zero tap (empty tap lists are rejected).
class FirTransferMatrix {
 public:
  FirTransferMatrix(std::vector<Matrix> taps) : taps_(std::move(taps)) {
    if (taps_.empty())
      throw std::invalid_argument("FirTransferMatrix: needs at least one tap");
    rows_ = taps_[0].rows();
    cols_ = taps_[0].cols();
    if (rows_ == 0 || cols_ == 0)
      throw std::invalid_argument("FirTransferMatrix: empty tap shape");
    for (const auto& t : taps_) {
      if (t.rows() != rows_ || t.cols() != cols_)
        throw std::invalid_argument("FirTransferMatrix: tap shape mismatch");
      if (!t.allFinite())
        throw std::invalid_argument("FirTransferMatrix: non-finite entry");
    }
  }

  static FirTransferMatrix zero(Eigen::Index rows, Eigen::Index cols,
                                int n_taps = 1) {
    return FirTransferMatrix(
        std::vector<Matrix>(std::max(n_taps, 1), Matrix::Zero(rows, cols)));
  }

  static FirTransferMatrix identity(Eigen::Index n) {
    return FirTransferMatrix({Matrix::Identity(n, n)});
  }

  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }
  int n_taps() const { return static_cast<int>(taps_.size()); }
  int degree() const { return n_taps() - 1; }
  const Matrix& tap(int k) const { return taps_.at(k); }
  const std::vector<Matrix>& taps() const { return taps_; }

  /// Tap k, with zero-padding beyond the stored degree.
  Matrix tap_or_zero(int k) const {
    if (k < 0 || k >= n_taps()) return Matrix::Zero(rows_, cols_);
    return taps_[k];
  }

  /// Restriction to the first n taps (zero-padded if n exceeds the degree).
  FirTransferMatrix truncated(int n_keep) const {
    if (n_keep < 1) throw std::invalid_argument("truncated: need n_keep >= 1");
    std::vector<Matrix> out;
    out.reserve(n_keep);
    for (int k = 0; k < n_keep; ++k) out.push_back(tap_or_zero(k));
    return FirTransferMatrix(std::move(out));
  }

  bool is_zero(double tol = 0.0) const {
    for (const auto& t : taps_)
      if (t.cwiseAbs().maxCoeff() > tol) return false;
    return true;
  }

 private:
  std::vector<Matrix> taps_;
  Eigen::Index rows_ = 0, cols_ = 0;
};

/// Per-tap boolean support pattern plus a tail pattern that applies to
/// every tap beyond the explicitly stored ones.
struct SparsityMask {
  std::vector<BoolMatrix> per_tap;
  BoolMatrix tail;

  SparsityMask(std::vector<BoolMatrix> taps, BoolMatrix tail_mask)
      : per_tap(std::move(taps)), tail(std::move(tail_mask)) {
    for (const auto& m : per_tap)
      if (m.rows() != tail.rows() || m.cols() != tail.cols())
        throw std::invalid_argument("SparsityMask: shape mismatch");
  }

  static SparsityMask all_true(Eigen::Index rows, Eigen::Index cols) {
    return SparsityMask({}, BoolMatrix::Constant(rows, cols, true));
  }
  static SparsityMask all_false(Eigen::Index rows, Eigen::Index cols) {
    return SparsityMask({}, BoolMatrix::Constant(rows, cols, false));
  }

  Eigen::Index rows() const { return tail.rows(); }
  Eigen::Index cols() const { return tail.cols(); }

  const BoolMatrix& at(int k) const {
    if (k < 0) throw std::invalid_argument("SparsityMask: negative tap");
    return k < static_cast<int>(per_tap.size()) ? per_tap[k] : tail;
  }
};

inline double h2_norm_sq(const FirTransferMatrix& g) {
  double s = 0.0;
  for (const auto& t : g.taps()) s += t.squaredNorm();
  return s;
}

/// H2 norm of an FIR: sqrt of the summed squared Frobenius norms of its taps.
inline double h2_norm(const FirTransferMatrix& g) {
  return std::sqrt(h2_norm_sq(g));
}

/// Trace inner product summed over taps; the inner product inducing h2_norm.
inline double inner_product(const FirTransferMatrix& g,
                            const FirTransferMatrix& h) {
  if (g.rows() != h.rows() || g.cols() != h.cols())
    throw std::invalid_argument("inner_product: shape mismatch");
  double s = 0.0;
  const int n = std::min(g.n_taps(), h.n_taps());
  for (int k = 0; k < n; ++k) s += (g.tap(k).array() * h.tap(k).array()).sum();
  return s;
}

/// Cauchy-product convolution (G*H)^(k) = sum_{i+j=k} G^(i) H^(j).
inline FirTransferMatrix convolve(const FirTransferMatrix& g,
                                  const FirTransferMatrix& h) {
  if (g.cols() != h.rows())
    throw std::invalid_argument("convolve: inner dimension mismatch");
  const int d = g.degree() + h.degree();
  std::vector<Matrix> out(d + 1, Matrix::Zero(g.rows(), h.cols()));
  for (int i = 0; i <= g.degree(); ++i)
    for (int j = 0; j <= h.degree(); ++j) out[i + j] += g.tap(i) * h.tap(j);
  return FirTransferMatrix(std::move(out));
}

inline FirTransferMatrix add(const FirTransferMatrix& g,
                             const FirTransferMatrix& h, double h_scale = 1.0) {
  if (g.rows() != h.rows() || g.cols() != h.cols())
    throw std::invalid_argument("add: shape mismatch");
  const int n = std::max(g.n_taps(), h.n_taps());
  std::vector<Matrix> out;
  out.reserve(n);
  for (int k = 0; k < n; ++k)
    out.push_back(g.tap_or_zero(k) + h_scale * h.tap_or_zero(k));
  return FirTransferMatrix(std::move(out));
}

inline FirTransferMatrix scale(const FirTransferMatrix& g, double a) {
  std::vector<Matrix> out;
  out.reserve(g.n_taps());
  for (const auto& t : g.taps()) out.push_back(a * t);
  return FirTransferMatrix(std::move(out));
}

/// Entrywise projection onto a sparsity pattern; idempotent.
inline FirTransferMatrix apply_mask(const FirTransferMatrix& g,
                                    const SparsityMask& s) {
  if (g.rows() != s.rows() || g.cols() != s.cols())
    throw std::invalid_argument("apply_mask: shape mismatch");
  std::vector<Matrix> out;
  out.reserve(g.n_taps());
  for (int k = 0; k < g.n_taps(); ++k)
    out.push_back(s.at(k).cast<double>().cwiseProduct(g.tap(k)));
  return FirTransferMatrix(std::move(out));
}

}  // namespace rfd
