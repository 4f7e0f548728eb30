#pragma once

#include "rfd/fir.hpp"

namespace rfd {
namespace detail {

inline BoolMatrix bool_mul(const BoolMatrix& a, const BoolMatrix& b) {
  BoolMatrix out = BoolMatrix::Constant(a.rows(), b.cols(), false);
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index k = 0; k < a.cols(); ++k)
      if (a(i, k))
        for (Eigen::Index j = 0; j < b.cols(); ++j)
          if (b(k, j)) out(i, j) = true;
  return out;
}

inline BoolMatrix bool_or(const BoolMatrix& a, const BoolMatrix& b) {
  return a.cwiseMax(b);
}

inline bool subset_of(const BoolMatrix& a, const BoolMatrix& b) {
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (a(i, j) && !b(i, j)) return false;
  return true;
}

// tap k of the boolean convolution of two masks, using tails beyond depth
inline BoolMatrix conv_tap(const SparsityMask& a, const SparsityMask& b,
                           int k) {
  BoolMatrix out = BoolMatrix::Constant(a.rows(), b.cols(), false);
  for (int i = 0; i <= k; ++i) out = bool_or(out, bool_mul(a.at(i), b.at(k - i)));
  return out;
}

}  // namespace detail

/// Support-level quadratic invariance: for every tap k <= depth the boolean
/// triple product supp(S) * supp(P22) * supp(S) must stay inside supp(S).
/// A finite-depth check; depth should exceed the point where the boolean
/// supports stabilize (the plant builders use 2n plus the tail masks).
inline bool is_quadratically_invariant(const SparsityMask& s,
                                       const SparsityMask& p22_support,
                                       int depth) {
  if (s.rows() != s.cols() || p22_support.rows() != p22_support.cols() ||
      s.rows() != p22_support.rows())
    throw std::invalid_argument("qi check: square shape mismatch");
  if (depth < 1) throw std::invalid_argument("qi check: depth < 1");
  // exact tap-by-tap check over the explicitly stored range
  const int kmax = std::max<int>(
      depth, static_cast<int>(2 * s.per_tap.size() + p22_support.per_tap.size()) + 1);
  for (int k = 0; k <= kmax; ++k) {
    BoolMatrix acc = BoolMatrix::Constant(s.rows(), s.cols(), false);
    for (int i = 0; i <= k; ++i) {
      BoolMatrix sp = detail::conv_tap(s, p22_support, i);
      acc = detail::bool_or(acc, detail::bool_mul(sp, s.at(k - i)));
    }
    if (!detail::subset_of(acc, s.at(k))) return false;
  }
  // beyond kmax: with all-false tails the product is identically empty past
  // the explicit degrees; otherwise use a conservative union bound — any
  // deeper product tap is contained in (union of S taps)(union of P taps)
  // (union of S taps), which must fit the tail pattern
  const bool s_fir = !s.tail.any();
  const bool p_fir = !p22_support.tail.any();
  if (s_fir && p_fir) return true;
  auto union_all = [](const SparsityMask& m) {
    BoolMatrix u = m.tail;
    for (const auto& t : m.per_tap) u = detail::bool_or(u, t);
    return u;
  };
  BoolMatrix s_any = union_all(s);
  BoolMatrix p_any = union_all(p22_support);
  BoolMatrix deep = detail::bool_mul(detail::bool_mul(s_any, p_any), s_any);
  return detail::subset_of(deep, s.tail);
}

}  // namespace rfd
