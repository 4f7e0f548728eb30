#pragma once

#include <optional>
#include <vector>

#include "rfd/fir.hpp"

namespace rfd {

/// How an "order v" FIR variable is laid out in coordinates.
/// The default reading is v taps indexed 0..v-1; the alternatives shift the
/// index range (1..v) or widen it to 0..v, matching the two readings of the
/// truncation notation. first_tap is the z-power of the first stored tap.
enum class TapConvention { kZeroToVMinus1, kOneToV, kZeroToV };

struct TapSpec {
  int count = 1;      // number of stored taps
  int first_tap = 0;  // z^-first_tap of stored tap 0
};

inline TapSpec tap_spec_for_order(int v, TapConvention c) {
  if (v < 1) throw std::invalid_argument("order must be >= 1");
  switch (c) {
    case TapConvention::kZeroToVMinus1: return {v, 0};
    case TapConvention::kOneToV: return {v, 1};
    case TapConvention::kZeroToV: return {v + 1, 0};
  }
  return {v, 0};
}

/// Coordinate layout of a vectorized FIR variable: tap-major, column-major
/// within each tap.  coord(j, r, c) = j*rows*cols + c*rows + r with j the
/// stored-tap index (physical tap = first_tap + j).
struct CoordLayout {
  int taps = 1;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  int first_tap = 0;

  Eigen::Index size() const { return taps * rows * cols; }
  Eigen::Index coord(int tap, Eigen::Index r, Eigen::Index c) const {
    return static_cast<Eigen::Index>(tap) * rows * cols + c * rows + r;
  }
  int tap_of(Eigen::Index coord) const {
    return static_cast<int>(coord / (rows * cols));
  }
  Eigen::Index row_of(Eigen::Index coord) const {
    return (coord % (rows * cols)) % rows;
  }
  Eigen::Index col_of(Eigen::Index coord) const {
    return (coord % (rows * cols)) / rows;
  }
  bool operator==(const CoordLayout& o) const {
    return taps == o.taps && rows == o.rows && cols == o.cols &&
           first_tap == o.first_tap;
  }
};

inline Vector vectorize(const FirTransferMatrix& g, const CoordLayout& layout) {
  if (g.rows() != layout.rows || g.cols() != layout.cols)
    throw std::invalid_argument("vectorize: shape mismatch");
  Vector v(layout.size());
  const Eigen::Index block = layout.rows * layout.cols;
  for (int k = 0; k < layout.taps; ++k) {
    Matrix t = g.tap_or_zero(k);
    v.segment(k * block, block) = Eigen::Map<const Vector>(t.data(), block);
  }
  return v;
}

inline FirTransferMatrix unvectorize(const Vector& v,
                                     const CoordLayout& layout) {
  if (v.size() != layout.size())
    throw std::invalid_argument("unvectorize: size mismatch");
  std::vector<Matrix> taps;
  taps.reserve(layout.taps);
  const Eigen::Index block = layout.rows * layout.cols;
  for (int k = 0; k < layout.taps; ++k) {
    Matrix t(layout.rows, layout.cols);
    Eigen::Map<Vector>(t.data(), block) = v.segment(k * block, block);
    taps.push_back(std::move(t));
  }
  return FirTransferMatrix(std::move(taps));
}

/// An explicit dense realization of a linear map from vectorized FIR inputs
/// (e.g. truncated Youla coefficients) to vectorized FIR outputs (truncated
/// closed-loop coefficients).  Adjoints are plain transposes.
struct ClosedLoopMap {
  Matrix mat;  // (output coords) x (input coords)
  CoordLayout input;
  CoordLayout output;
  std::vector<std::vector<Eigen::Index>> group_index;  // optional group -> coords

  ClosedLoopMap(Matrix m, CoordLayout in, CoordLayout out,
                std::vector<std::vector<Eigen::Index>> groups = {})
      : mat(std::move(m)), input(in), output(out),
        group_index(std::move(groups)) {
    if (mat.rows() != output.size() || mat.cols() != input.size())
      throw std::invalid_argument("ClosedLoopMap: matrix/layout mismatch");
    for (const auto& g : group_index)
      for (auto c : g)
        if (c < 0 || c >= input.size())
          throw std::invalid_argument("ClosedLoopMap: group coord range");
  }

  FirTransferMatrix apply(const FirTransferMatrix& u) const {
    return unvectorize(mat * vectorize(u, input), output);
  }
  FirTransferMatrix apply_adjoint(const FirTransferMatrix& y) const {
    return unvectorize(mat.transpose() * vectorize(y, output), input);
  }
};

/// Materialized matrix of U |-> truncate_t(left * U * right) on inputs laid
/// out per `in`; outputs carry taps 0..t_horizon.  One-sided maps pass a
/// single-tap identity on the unused side.
inline ClosedLoopMap materialize_map(const FirTransferMatrix& left,
                                     const FirTransferMatrix& right,
                                     int t_horizon, const TapSpec& in,
                                     double sign = 1.0) {
  if (t_horizon < 0) throw std::invalid_argument("materialize_map: t < 0");
  if (in.count < 1) throw std::invalid_argument("materialize_map: empty input");
  const int out_taps = t_horizon + 1;
  if (in.count > out_taps)
    throw std::invalid_argument("materialize_map: input order exceeds horizon");
  CoordLayout in_layout{in.count, left.cols(), right.rows(), in.first_tap};
  CoordLayout out_layout{out_taps, left.rows(), right.cols(), 0};
  Matrix m = Matrix::Zero(out_layout.size(), in_layout.size());
  // Output tap k accumulates sign * L^(i) U^(j) R^(l) over i + j' + l = k,
  // where j' = in.first_tap + j is the physical tap of stored input tap j.
  for (int j = 0; j < in.count; ++j) {
    const int jp = in.first_tap + j;
    for (int i = 0; i <= left.degree(); ++i) {
      for (int l = 0; l <= right.degree(); ++l) {
        const int k = i + jp + l;
        if (k > t_horizon) continue;
        const Matrix& L = left.tap(i);
        const Matrix& R = right.tap(l);
        // coord blocks: d(out tap k)[rr, cc] += s * L[rr, r] U[r, c] R[c, cc]
        for (Eigen::Index c = 0; c < in_layout.cols; ++c) {
          for (Eigen::Index r = 0; r < in_layout.rows; ++r) {
            const Eigen::Index col = in_layout.coord(j, r, c);
            for (Eigen::Index cc = 0; cc < out_layout.cols; ++cc) {
              const double rc = R(c, cc);
              if (rc == 0.0) continue;
              m.block(out_layout.coord(k, 0, cc), col, out_layout.rows, 1) +=
                  sign * rc * L.col(r);
            }
          }
        }
      }
    }
  }
  return ClosedLoopMap(std::move(m), in_layout, out_layout);
}

/// Selected columns of the map materialize_map would produce, without
/// forming the full matrix; used by restricted solves at long horizons.
inline Matrix materialize_columns(const FirTransferMatrix& left,
                                  const FirTransferMatrix& right,
                                  int t_horizon, const TapSpec& in, double sign,
                                  const std::vector<Eigen::Index>& coords) {
  CoordLayout in_layout{in.count, left.cols(), right.rows(), in.first_tap};
  CoordLayout out_layout{t_horizon + 1, left.rows(), right.cols(), 0};
  Matrix m = Matrix::Zero(out_layout.size(),
                          static_cast<Eigen::Index>(coords.size()));
  for (size_t ci = 0; ci < coords.size(); ++ci) {
    const Eigen::Index coord = coords[ci];
    const int j = in_layout.tap_of(coord);
    const Eigen::Index r = in_layout.row_of(coord);
    const Eigen::Index c = in_layout.col_of(coord);
    const int jp = in.first_tap + j;
    for (int i = 0; i <= left.degree(); ++i) {
      for (int l = 0; l <= right.degree(); ++l) {
        const int k = i + jp + l;
        if (k > t_horizon) continue;
        const Matrix& L = left.tap(i);
        const Matrix& R = right.tap(l);
        for (Eigen::Index cc = 0; cc < out_layout.cols; ++cc) {
          const double rc = R(c, cc);
          if (rc == 0.0) continue;
          m.block(out_layout.coord(k, 0, cc), static_cast<Eigen::Index>(ci),
                  out_layout.rows, 1) += sign * rc * L.col(r);
        }
      }
    }
  }
  return m;
}

/// Column-selected restriction of a map to the given input coordinate sets.
/// The restricted map's groups are the selected sets renumbered into the
/// compacted coordinate space.
inline ClosedLoopMap restrict_map(
    const ClosedLoopMap& map,
    const std::vector<std::vector<Eigen::Index>>& groups) {
  std::vector<Eigen::Index> cols;
  std::vector<std::vector<Eigen::Index>> new_groups;
  for (const auto& g : groups) {
    std::vector<Eigen::Index> ng;
    for (auto c : g) {
      if (c < 0 || c >= map.input.size())
        throw std::invalid_argument("restrict_map: coordinate out of range");
      ng.push_back(static_cast<Eigen::Index>(cols.size()));
      cols.push_back(c);
    }
    new_groups.push_back(std::move(ng));
  }
  Matrix m(map.mat.rows(), static_cast<Eigen::Index>(cols.size()));
  for (size_t i = 0; i < cols.size(); ++i) m.col(i) = map.mat.col(cols[i]);
  // selected coordinates form a flat single-tap layout
  CoordLayout in{1, static_cast<Eigen::Index>(cols.size()), 1, 0};
  return ClosedLoopMap(std::move(m), in, map.output, std::move(new_groups));
}

}  // namespace rfd
