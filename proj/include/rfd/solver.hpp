#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <functional>
#include <map>
#include <optional>
#include <thread>

#include "rfd/groups.hpp"
#include "rfd/problem.hpp"

namespace rfd {

struct SolveOptions {
  double tol = 1e-8;           // subdifferential residual, dual norm
  int max_iters = 200000;
  double support_abs = 1e-8;   // support extraction floor
  double support_rel = 1e-6;   // relative to the largest group norm
  std::optional<Vector> warm_start;  // original-layout coordinates
  std::vector<double>* objective_trace = nullptr;  // accepted iterates
};

/// A fully assembled finite-dimensional regularized problem.
struct RfdProblem {
  FirTransferMatrix y;
  ClosedLoopMap map;
  std::optional<ClosedLoopMap> control_map;
  double rho = 0.0;
  double lambda = 0.0;
  std::optional<SparsityMask> mask;  // distributed constraint on U
  GroupStructure penalty;
  std::optional<std::vector<int>> support_constraint;  // architect groups

  static RfdProblem from_assembled(AssembledProblem ap, GroupStructure penalty,
                                   double rho, double lambda) {
    RfdProblem p{std::move(ap.y), std::move(ap.map), std::move(ap.control_map),
                 rho,             lambda,            std::nullopt,
                 std::move(penalty), std::nullopt};
    return p;
  }
};

struct RfdSolution {
  FirTransferMatrix u = FirTransferMatrix::zero(1, 1);
  std::vector<int> support;  // active group indices
  double objective = 0.0;
  double kkt_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;  // rank-deficient unregularized least squares
};

namespace detail {

inline int env_threads() {
  if (const char* s = std::getenv("RFD_THREADS")) {
    const int v = std::atoi(s);
    if (v > 0) return v;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}

/// Largest singular value of the implicit operator z -> M'Mz + rho R'Rz by
/// power iteration (deterministic start), to relative tolerance 1e-10.
inline double smooth_lipschitz(
    const std::function<Vector(const Vector&)>& gram_apply, Eigen::Index n) {
  if (n == 0) return 0.0;
  Vector z = Vector::Ones(n).normalized();
  double lam = 0.0;
  for (int it = 0; it < 20000; ++it) {
    Vector w = gram_apply(z);
    const double nl = w.norm();
    if (nl == 0.0) return 0.0;
    w /= nl;
    if (std::abs(nl - lam) <= 1e-10 * std::max(1.0, nl) && it > 3) {
      lam = nl;
      break;
    }
    lam = nl;
    z = w;
  }
  return lam;
}

/// Internal solver-space description: smooth term ||b - M v||^2 + rho||Rv||^2
/// with R summing lifted copies back to original coordinates (identity when
/// the penalty is a partition), plus a partition group penalty over v.
struct SolverSpace {
  Matrix m;                    // stacked smooth matrix, lifted columns
  Vector b;
  double rho = 0.0;
  std::vector<Eigen::Index> to_orig;  // lifted -> original coordinate
  Eigen::Index n_orig = 0;
  std::vector<int> copies;     // copies per original coordinate
  std::vector<std::vector<Eigen::Index>> groups;  // partition over lifted
  std::vector<double> inv_k;   // 1/k_A per group
  std::vector<Eigen::Index> free_lifted;
  std::vector<char> blocked;   // lifted coords pinned to zero

  Vector rho_gradient(const Vector& v) const {
    if (rho == 0.0) return Vector::Zero(v.size());
    Vector sums = Vector::Zero(n_orig);
    for (Eigen::Index l = 0; l < v.size(); ++l) sums(to_orig[l]) += v(l);
    Vector g(v.size());
    for (Eigen::Index l = 0; l < v.size(); ++l) g(l) = 2.0 * rho * sums(to_orig[l]);
    return g;
  }

  double rho_value(const Vector& v) const {
    if (rho == 0.0) return 0.0;
    Vector sums = Vector::Zero(n_orig);
    for (Eigen::Index l = 0; l < v.size(); ++l) sums(to_orig[l]) += v(l);
    return rho * sums.squaredNorm();
  }

  Vector recombine(const Vector& v) const {
    Vector u = Vector::Zero(n_orig);
    for (Eigen::Index l = 0; l < v.size(); ++l) u(to_orig[l]) += v(l);
    return u;
  }
};

inline std::vector<char> blocked_coordinates(const RfdProblem& p) {
  const CoordLayout& layout = p.map.input;
  std::vector<char> blocked(layout.size(), 0);
  if (p.mask) {
    for (Eigen::Index c = 0; c < layout.size(); ++c) {
      const int tap = layout.first_tap + layout.tap_of(c);
      if (!p.mask->at(tap)(layout.row_of(c), layout.col_of(c))) blocked[c] = 1;
    }
  }
  return blocked;
}

inline Matrix stacked_smooth(const RfdProblem& p) {
  const Eigen::Index rows =
      p.map.mat.rows() + (p.control_map ? p.control_map->mat.rows() : 0);
  Matrix m(rows, p.map.mat.cols());
  m.topRows(p.map.mat.rows()) = p.map.mat;
  if (p.control_map) m.bottomRows(p.control_map->mat.rows()) = p.control_map->mat;
  return m;
}

inline Vector stacked_rhs(const RfdProblem& p) {
  const Eigen::Index rows =
      p.map.mat.rows() + (p.control_map ? p.control_map->mat.rows() : 0);
  Vector b = Vector::Zero(rows);
  b.head(p.map.mat.rows()) = vectorize(p.y, p.map.output);
  return b;
}

/// Lift a (possibly latent) single penalty into solver space.
inline SolverSpace make_space(const RfdProblem& p, const GroupStructure& pen,
                              double weight_scale) {
  if (pen.layout.size() != p.map.input.size())
    throw std::invalid_argument("solver: penalty layout does not match map");
  LiftedPenalty lp = lift(pen);
  SolverSpace s;
  s.n_orig = p.map.input.size();
  s.to_orig = lp.lifted_to_orig;
  s.rho = p.rho;
  s.b = stacked_rhs(p);
  Matrix m_full = stacked_smooth(p);
  s.m.resize(m_full.rows(), lp.n_lifted);
  for (Eigen::Index l = 0; l < lp.n_lifted; ++l)
    s.m.col(l) = m_full.col(lp.lifted_to_orig[l]);
  s.copies.assign(s.n_orig, 0);
  for (auto c : s.to_orig) s.copies[c]++;
  s.groups = lp.groups;
  s.inv_k.resize(lp.weights.size());
  for (size_t i = 0; i < lp.weights.size(); ++i)
    s.inv_k[i] = weight_scale / lp.weights[i];
  s.free_lifted = lp.free_lifted;

  std::vector<char> blocked_orig = blocked_coordinates(p);
  // coordinates not covered by the penalty's atoms or free set are outside
  // its domain and must stay at zero
  std::vector<char> covered(s.n_orig, 0);
  for (auto c : s.to_orig) covered[c] = 1;
  for (Eigen::Index c = 0; c < s.n_orig; ++c)
    if (!covered[c]) blocked_orig[c] = 1;
  if (p.support_constraint) {
    std::vector<char> allowed(s.n_orig, 0);
    for (int gi : *p.support_constraint)
      for (auto c : pen.groups.at(gi)) allowed[c] = 1;
    for (auto c : pen.free_coords) allowed[c] = 1;
    for (Eigen::Index c = 0; c < s.n_orig; ++c)
      if (!allowed[c]) blocked_orig[c] = 1;
  }
  s.blocked.assign(lp.n_lifted, 0);
  for (Eigen::Index l = 0; l < lp.n_lifted; ++l)
    if (blocked_orig[s.to_orig[l]]) s.blocked[l] = 1;
  return s;
}

inline void project_blocked(const SolverSpace& s, Vector& v) {
  for (Eigen::Index l = 0; l < v.size(); ++l)
    if (s.blocked[l]) v(l) = 0.0;
}

/// Per-group block soft threshold in solver space (free copies untouched).
inline void group_shrink(const SolverSpace& s, double base_threshold,
                         Vector& v) {
  for (size_t gi = 0; gi < s.groups.size(); ++gi) {
    double nrm = 0.0;
    for (auto l : s.groups[gi]) nrm += v(l) * v(l);
    nrm = std::sqrt(nrm);
    const double thr = base_threshold * s.inv_k[gi];
    const double sc = nrm > thr ? 1.0 - thr / nrm : 0.0;
    for (auto l : s.groups[gi]) v(l) *= sc;
  }
}

inline double penalty_value(const SolverSpace& s, const Vector& v) {
  double val = 0.0;
  for (size_t gi = 0; gi < s.groups.size(); ++gi) {
    double nrm = 0.0;
    for (auto l : s.groups[gi]) nrm += v(l) * v(l);
    val += s.inv_k[gi] * std::sqrt(nrm);
  }
  return val;
}

/// Smallest-norm element of grad + 2 lambda asubdiff(Omega) at v, measured
/// in the dual norm max_g ||.||_g / w_g; blocked coordinates sit behind the
/// hard constraint and carry no residual.  With lambda = 0 this degenerates
/// to the max absolute live gradient entry.
inline double kkt_residual(const SolverSpace& s, const Vector& v,
                           const Vector& grad, double lambda) {
  double worst = 0.0;
  if (lambda <= 0.0) {
    for (Eigen::Index l = 0; l < v.size(); ++l)
      if (!s.blocked[l]) worst = std::max(worst, std::abs(grad(l)));
    return worst;
  }
  for (size_t gi = 0; gi < s.groups.size(); ++gi) {
    const double w = s.inv_k[gi];
    double nrm = 0.0;
    int live = 0;
    for (auto l : s.groups[gi])
      if (!s.blocked[l]) ++live, nrm += v(l) * v(l);
    if (live == 0) continue;
    nrm = std::sqrt(nrm);
    double dist2 = 0.0;
    if (nrm > 0.0) {
      // active group: the subgradient is the unit direction scaled by w
      for (auto l : s.groups[gi]) {
        if (s.blocked[l]) continue;
        const double r = -grad(l) / (2.0 * lambda);
        const double z = w * v(l) / nrm;
        dist2 += (r - z) * (r - z);
      }
    } else {
      // inactive: distance of -grad/(2 lambda) to the radius-w ball
      double rn = 0.0;
      for (auto l : s.groups[gi])
        if (!s.blocked[l]) rn += grad(l) * grad(l);
      rn = std::sqrt(rn) / (2.0 * lambda);
      const double excess = std::max(0.0, rn - w);
      dist2 = excess * excess;
    }
    worst = std::max(worst, 2.0 * lambda * std::sqrt(dist2) / w);
  }
  for (auto l : s.free_lifted)
    if (!s.blocked[l]) worst = std::max(worst, std::abs(grad(l)));
  return worst;
}

}  // namespace detail

/// Accelerated proximal gradient with monotone restart on the (possibly
/// lifted) composite objective
///   ||b - M v||^2 + rho ||Rv||^2 + 2 lambda sum_g ||v_g|| / k_g,
/// with coordinate projection onto the distributed constraint and the
/// architect support constraint when present.  Deterministic.
inline RfdSolution solve_rfd(const RfdProblem& p, const SolveOptions& opts = {}) {
  p.penalty.validate();
  if (p.penalty.kind == GroupKind::kJointMax)
    throw std::invalid_argument("solve_rfd: max-form penalties not optimized");
  if (p.penalty.kind == GroupKind::kJointSum)
    throw std::invalid_argument("solve_rfd: joint penalties use solve_rfd_joint");
  detail::SolverSpace s = detail::make_space(p, p.penalty, 1.0);
  const Eigen::Index n = s.m.cols();

  auto gram = [&](const Vector& z) -> Vector {
    Vector w = s.m.transpose() * (s.m * z);
    if (s.rho > 0.0) {
      Vector sums = Vector::Zero(s.n_orig);
      for (Eigen::Index l = 0; l < n; ++l) sums(s.to_orig[l]) += z(l);
      for (Eigen::Index l = 0; l < n; ++l) w(l) += s.rho * sums(s.to_orig[l]);
    }
    return w;
  };
  const double lip = 2.0 * detail::smooth_lipschitz(gram, n);
  const double step = lip > 0.0 ? 1.0 / lip : 1.0;

  auto grad = [&](const Vector& v) -> Vector {
    Vector g = 2.0 * (s.m.transpose() * (s.m * v - s.b));
    if (s.rho > 0.0) g += s.rho_gradient(v);
    return g;
  };
  auto objective = [&](const Vector& v) -> double {
    return (s.b - s.m * v).squaredNorm() + s.rho_value(v) +
           2.0 * p.lambda * detail::penalty_value(s, v);
  };
  auto prox_step = [&](Vector v) -> Vector {
    detail::project_blocked(s, v);
    if (p.lambda > 0.0) detail::group_shrink(s, 2.0 * p.lambda * step, v);
    return v;
  };

  Vector x = Vector::Zero(n);
  if (opts.warm_start && opts.warm_start->size() == s.n_orig) {
    // distribute a warm start evenly over copies
    for (Eigen::Index l = 0; l < n; ++l)
      x(l) = (*opts.warm_start)(s.to_orig[l]) / s.copies[s.to_orig[l]];
  }
  x = prox_step(x);
  Vector ym = x;
  double tk = 1.0;
  double fx = objective(x);
  int iters = 0;
  bool converged = false;
  double kkt = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iters; ++it) {
    iters = it + 1;
    Vector xn = prox_step(ym - step * grad(ym));
    double fn = objective(xn);
    if (fn > fx + 1e-14 * std::max(1.0, std::abs(fx))) {
      // momentum overshoot: restart from the last iterate (monotone step)
      tk = 1.0;
      xn = prox_step(x - step * grad(x));
      fn = objective(xn);
    }
    const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
    ym = xn + ((tk - 1.0) / tn) * (xn - x);
    const double dx = (xn - x).norm();
    x = xn;
    fx = fn;
    tk = tn;
    if (opts.objective_trace) opts.objective_trace->push_back(fx);
    if (it % 10 == 9 || dx == 0.0) {
      kkt = detail::kkt_residual(s, x, grad(x), p.lambda);
      if (kkt < opts.tol) {
        converged = true;
        break;
      }
    }
  }
  if (!converged) kkt = detail::kkt_residual(s, x, grad(x), p.lambda);

  RfdSolution sol;
  sol.u = unvectorize(s.recombine(x), p.map.input);
  sol.iterations = iters;
  sol.converged = converged;
  sol.kkt_residual = kkt;
  sol.objective = objective(x);
  // support extraction on the original structure's group norms
  Vector u_orig = s.recombine(x);
  std::vector<double> norms(p.penalty.groups.size(), 0.0);
  double largest = 0.0;
  for (size_t gi = 0; gi < p.penalty.groups.size(); ++gi) {
    norms[gi] = detail::group_norm(u_orig, p.penalty.groups[gi]);
    largest = std::max(largest, norms[gi]);
  }
  const double thr = std::max(opts.support_abs, opts.support_rel * largest);
  for (size_t gi = 0; gi < norms.size(); ++gi)
    if (norms[gi] > thr) sol.support.push_back(static_cast<int>(gi));
  return sol;
}

/// Architect variant: the same objective restricted to the given groups.
inline RfdSolution solve_architect(const RfdProblem& p,
                                   const std::vector<int>& support_groups,
                                   const SolveOptions& opts = {}) {
  RfdProblem q = p;
  q.support_constraint = support_groups;
  return solve_rfd(q, opts);
}

namespace detail {

/// Alternating-projection distance from d to A + B where A, B are the
/// scaled subdifferentials of two partition penalties at u.  Exact sets per
/// group: a singleton when the group is active, a norm ball otherwise.
inline double minkowski_distance(
    const Vector& d, const Vector& u, const SolverSpace& s1,
    const SolverSpace& s2, double scale1, double scale2,
    const std::vector<char>& blocked, int iters = 200) {
  // blocked coordinates sit behind the hard constraint, whose normal cone
  // absorbs any gradient component there: they carry no subgradient budget.
  // groups are treated as active only above a small norm threshold; below
  // it the solution is a rounding-level perturbation of an exactly sparse
  // point and the ball subdifferential applies
  const double active_tol = 1e-7 * std::max(1.0, u.cwiseAbs().maxCoeff());
  auto project = [&](const SolverSpace& s, double sc, const Vector& target,
                     Vector& z) {
    z.setZero();
    for (size_t gi = 0; gi < s.groups.size(); ++gi) {
      const double radius = sc * s.inv_k[gi];
      double un = 0.0;
      for (auto l : s.groups[gi]) {
        const auto c = s.to_orig[l];
        if (!blocked[c]) un += u(c) * u(c);
      }
      un = std::sqrt(un);
      if (un > active_tol) {
        for (auto l : s.groups[gi]) {
          const auto c = s.to_orig[l];
          if (!blocked[c]) z(c) = radius * u(c) / un;
        }
      } else {
        double tn = 0.0;
        for (auto l : s.groups[gi]) {
          const auto c = s.to_orig[l];
          if (!blocked[c]) tn += target(c) * target(c);
        }
        tn = std::sqrt(tn);
        const double f = tn > radius ? radius / tn : 1.0;
        for (auto l : s.groups[gi]) {
          const auto c = s.to_orig[l];
          if (!blocked[c]) z(c) = f * target(c);
        }
      }
    }
  };
  Vector a = Vector::Zero(d.size()), b = Vector::Zero(d.size());
  for (int it = 0; it < iters; ++it) {
    project(s1, scale1, d - b, a);
    project(s2, scale2, d - a, b);
  }
  double dist2 = 0.0;
  for (Eigen::Index c = 0; c < d.size(); ++c)
    if (!blocked[c]) {
      const double r = d(c) - a(c) - b(c);
      dist2 += r * r;
    }
  return std::sqrt(dist2);
}

}  // namespace detail

/// Davis-Yin three-operator splitting for the weighted-sum penalty
///   2 lambda [ (1-theta) Omega_comm(U) + theta Omega_act(U) ].
/// Each constituent is lifted to its own copy block; the smooth term acts on
/// the average of the recombined blocks and a closed-form per-coordinate
/// projection enforces that the blocks agree.
inline RfdSolution solve_rfd_joint(const RfdProblem& p,
                                   const SolveOptions& opts = {}) {
  p.penalty.validate();
  if (p.penalty.kind != GroupKind::kJointSum)
    throw std::invalid_argument("solve_rfd_joint: joint_sum penalty required");
  if (p.support_constraint)
    throw std::invalid_argument("solve_rfd_joint: architect mode unsupported");
  const GroupStructure& comm = p.penalty.components[0];
  const GroupStructure& act = p.penalty.components[1];
  detail::SolverSpace s1 = detail::make_space(p, comm, 1.0 - p.penalty.theta);
  detail::SolverSpace s2 = detail::make_space(p, act, p.penalty.theta);
  const Eigen::Index n_orig = s1.n_orig;
  // a coordinate blocked for either constituent is blocked globally
  std::vector<char> blocked_orig(n_orig, 1);
  {
    std::vector<char> b1(n_orig, 0), b2(n_orig, 0);
    for (Eigen::Index l = 0; l < static_cast<Eigen::Index>(s1.to_orig.size()); ++l)
      if (s1.blocked[l]) b1[s1.to_orig[l]] = 1;
    for (Eigen::Index l = 0; l < static_cast<Eigen::Index>(s2.to_orig.size()); ++l)
      if (s2.blocked[l]) b2[s2.to_orig[l]] = 1;
    std::vector<char> cover1(n_orig, 0), cover2(n_orig, 0);
    for (auto c : s1.to_orig) cover1[c] = 1;
    for (auto c : s2.to_orig) cover2[c] = 1;
    for (Eigen::Index c = 0; c < n_orig; ++c)
      blocked_orig[c] = (!cover1[c] || !cover2[c] || b1[c] || b2[c]) ? 1 : 0;
  }
  for (Eigen::Index l = 0; l < static_cast<Eigen::Index>(s1.to_orig.size()); ++l)
    if (blocked_orig[s1.to_orig[l]]) s1.blocked[l] = 1;
  for (Eigen::Index l = 0; l < static_cast<Eigen::Index>(s2.to_orig.size()); ++l)
    if (blocked_orig[s2.to_orig[l]]) s2.blocked[l] = 1;

  const Eigen::Index n1 = s1.m.cols(), n2 = s2.m.cols();
  Matrix m_full = detail::stacked_smooth(p);
  Vector b = detail::stacked_rhs(p);

  auto average = [&](const Vector& v) -> Vector {
    Vector u = Vector::Zero(n_orig);
    for (Eigen::Index l = 0; l < n1; ++l) u(s1.to_orig[l]) += v(l);
    for (Eigen::Index l = 0; l < n2; ++l) u(s2.to_orig[l]) += v(n1 + l);
    return 0.5 * u;
  };
  auto spread = [&](const Vector& u) -> Vector {
    Vector g(n1 + n2);
    for (Eigen::Index l = 0; l < n1; ++l) g(l) = 0.5 * u(s1.to_orig[l]);
    for (Eigen::Index l = 0; l < n2; ++l) g(n1 + l) = 0.5 * u(s2.to_orig[l]);
    return g;
  };
  auto grad_f = [&](const Vector& v) -> Vector {
    Vector u = average(v);
    Vector gu = 2.0 * (m_full.transpose() * (m_full * u - b));
    if (p.rho > 0.0) gu += 2.0 * p.rho * u;
    return spread(gu);
  };
  auto gram = [&](const Vector& v) -> Vector {
    Vector u = average(v);
    Vector gu = m_full.transpose() * (m_full * u) + p.rho * u;
    return spread(gu);
  };
  const double lip = 2.0 * detail::smooth_lipschitz(gram, n1 + n2);
  const double gamma = lip > 0.0 ? 1.0 / lip : 1.0;

  auto prox_g1 = [&](Vector v) -> Vector {
    Vector v1 = v.head(n1), v2 = v.tail(n2);
    detail::project_blocked(s1, v1);
    detail::project_blocked(s2, v2);
    if (p.lambda > 0.0) {
      detail::group_shrink(s1, gamma * 2.0 * p.lambda, v1);
      detail::group_shrink(s2, gamma * 2.0 * p.lambda, v2);
    }
    v.head(n1) = v1;
    v.tail(n2) = v2;
    return v;
  };
  // copies per original coordinate in each block, for the coupling projection
  std::vector<int> c1(n_orig, 0), c2(n_orig, 0);
  for (auto c : s1.to_orig) c1[c]++;
  for (auto c : s2.to_orig) c2[c]++;
  auto prox_g2 = [&](Vector v) -> Vector {
    Vector sum1 = Vector::Zero(n_orig), sum2 = Vector::Zero(n_orig);
    for (Eigen::Index l = 0; l < n1; ++l)
      if (!blocked_orig[s1.to_orig[l]]) sum1(s1.to_orig[l]) += v(l);
    for (Eigen::Index l = 0; l < n2; ++l)
      if (!blocked_orig[s2.to_orig[l]]) sum2(s2.to_orig[l]) += v(n1 + l);
    Vector shift = Vector::Zero(n_orig);
    for (Eigen::Index c = 0; c < n_orig; ++c)
      if (!blocked_orig[c] && c1[c] + c2[c] > 0)
        shift(c) = (sum1(c) - sum2(c)) / (c1[c] + c2[c]);
    for (Eigen::Index l = 0; l < n1; ++l) {
      const auto c = s1.to_orig[l];
      v(l) = blocked_orig[c] ? 0.0 : v(l) - shift(c);
    }
    for (Eigen::Index l = 0; l < n2; ++l) {
      const auto c = s2.to_orig[l];
      v(n1 + l) = blocked_orig[c] ? 0.0 : v(n1 + l) + shift(c);
    }
    return v;
  };

  Vector z = Vector::Zero(n1 + n2);
  if (opts.warm_start && opts.warm_start->size() == n_orig) {
    for (Eigen::Index l = 0; l < n1; ++l)
      z(l) = (*opts.warm_start)(s1.to_orig[l]) / std::max(1, c1[s1.to_orig[l]]);
    for (Eigen::Index l = 0; l < n2; ++l)
      z(n1 + l) =
          (*opts.warm_start)(s2.to_orig[l]) / std::max(1, c2[s2.to_orig[l]]);
  }
  // exact subdifferential arithmetic is available when both constituents
  // are partitions (overlap-free atoms); otherwise fall back to the
  // splitting's fixed-point residual as the convergence measure
  const bool exact_kkt = comm.is_partition() && act.is_partition();
  auto joint_kkt = [&](const Vector& v1_sharp) -> double {
    Vector uu = average(v1_sharp);
    Vector gu = 2.0 * (m_full.transpose() * (m_full * uu - b));
    if (p.rho > 0.0) gu += 2.0 * p.rho * uu;
    return detail::minkowski_distance(-gu, uu, s1, s2, 2.0 * p.lambda,
                                      2.0 * p.lambda, blocked_orig);
  };

  Vector u1 = z, u2 = z;
  int iters = 0;
  bool converged = false;
  double kkt = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opts.max_iters; ++it) {
    iters = it + 1;
    u1 = prox_g1(z);
    u2 = prox_g2(2.0 * u1 - z - gamma * grad_f(u1));
    Vector dz = u2 - u1;
    z += dz;
    if (it % 50 == 49) {
      if (exact_kkt) {
        kkt = joint_kkt(u1);
        if (kkt < opts.tol) {
          converged = true;
          break;
        }
      } else if (dz.norm() <= 1e-13 + opts.tol * gamma *
                                         std::max(1.0, u1.norm())) {
        converged = true;
        break;
      }
    }
  }
  // the g1 prox output carries the exact zeros; its blocks agree with the
  // coupled iterate at convergence
  Vector uu = average(u1);
  RfdSolution sol;
  sol.u = unvectorize(uu, p.map.input);
  sol.iterations = iters;
  sol.converged = converged;
  sol.kkt_residual = exact_kkt ? joint_kkt(u1) : (u2 - u1).norm() / gamma;
  sol.objective = (b - m_full * uu).squaredNorm() + p.rho * uu.squaredNorm() +
                  2.0 * p.lambda *
                      ((1.0 - p.penalty.theta) * eval_norm(sol.u, comm) +
                       p.penalty.theta * eval_norm(sol.u, act));
  // support over the concatenated (comm, act) group lists
  {
    Vector v1 = u1.head(n1), v2 = u1.tail(n2);
    double largest = 0.0;
    std::vector<double> norms;
    for (const auto& g : s1.groups) {
      double nn = 0.0;
      for (auto l : g) nn += v1(l) * v1(l);
      norms.push_back(std::sqrt(nn));
      largest = std::max(largest, norms.back());
    }
    for (const auto& g : s2.groups) {
      double nn = 0.0;
      for (auto l : g) nn += v2(l) * v2(l);
      norms.push_back(std::sqrt(nn));
      largest = std::max(largest, norms.back());
    }
    const double thr = std::max(opts.support_abs, opts.support_rel * largest);
    for (size_t gi = 0; gi < norms.size(); ++gi)
      if (norms[gi] > thr) sol.support.push_back(static_cast<int>(gi));
  }
  return sol;
}

/// Concatenated group tags for joint penalties, aligned with the support
/// indices emitted by solve_rfd_joint.
inline std::vector<GroupTag> flat_group_tags(const GroupStructure& g) {
  if (g.kind != GroupKind::kJointSum && g.kind != GroupKind::kJointMax)
    return g.tags;
  std::vector<GroupTag> tags = g.components[0].tags;
  tags.insert(tags.end(), g.components[1].tags.begin(),
              g.components[1].tags.end());
  return tags;
}

inline RfdSolution solve_dispatch(const RfdProblem& p,
                                  const SolveOptions& opts = {}) {
  return p.penalty.kind == GroupKind::kJointSum ? solve_rfd_joint(p, opts)
                                                : solve_rfd(p, opts);
}

namespace detail {

/// Allowed coordinate set of an architecture: for each penalty component,
/// its free subspace plus the selected groups; outside coordinates are off.
inline std::vector<char> architecture_coords(const GroupStructure& pen,
                                             const std::vector<int>& support,
                                             Eigen::Index n) {
  auto single = [&](const GroupStructure& g,
                    const std::vector<int>& sel) -> std::vector<char> {
    std::vector<char> ok(n, 0);
    for (auto c : g.free_coords) ok[c] = 1;
    for (int gi : sel)
      for (auto c : g.groups.at(gi)) ok[c] = 1;
    return ok;
  };
  if (pen.kind == GroupKind::kJointSum || pen.kind == GroupKind::kJointMax) {
    const auto n0 = static_cast<int>(pen.components[0].groups.size());
    std::vector<int> sel0, sel1;
    for (int gi : support)
      (gi < n0 ? sel0 : sel1).push_back(gi < n0 ? gi : gi - n0);
    auto a = single(pen.components[0], sel0);
    auto b = single(pen.components[1], sel1);
    for (Eigen::Index c = 0; c < n; ++c) a[c] = a[c] && b[c];
    return a;
  }
  return single(pen, support);
}

}  // namespace detail

/// Exact least squares of the smooth objective restricted to an
/// architecture's coordinates: direct normal equations (LLT) with the ridge,
/// or a rank-revealing minimum-norm solve with a degeneracy flag when
/// rho = 0 leaves the restricted map rank deficient.
inline RfdSolution restricted_least_squares(const RfdProblem& p,
                                            const std::vector<int>& support) {
  std::vector<char> allowed = detail::architecture_coords(
      p.penalty, support, p.map.input.size());
  std::vector<char> blocked = detail::blocked_coordinates(p);
  std::vector<Eigen::Index> coords;
  for (Eigen::Index c = 0; c < p.map.input.size(); ++c)
    if (allowed[c] && !blocked[c]) coords.push_back(c);
  Matrix m_full = detail::stacked_smooth(p);
  Vector b = detail::stacked_rhs(p);
  Matrix ms(m_full.rows(), static_cast<Eigen::Index>(coords.size()));
  for (size_t i = 0; i < coords.size(); ++i) ms.col(i) = m_full.col(coords[i]);

  RfdSolution sol;
  Vector x;
  if (coords.empty()) {
    x = Vector::Zero(0);
  } else if (p.rho > 0.0) {
    Matrix gram = ms.transpose() * ms;
    gram.diagonal().array() += p.rho;
    x = gram.llt().solve(ms.transpose() * b);
  } else {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(ms);
    x = cod.solve(b);
    sol.degenerate = cod.rank() < static_cast<Eigen::Index>(coords.size());
  }
  Vector u = Vector::Zero(p.map.input.size());
  for (size_t i = 0; i < coords.size(); ++i) u(coords[i]) = x(i);
  sol.u = unvectorize(u, p.map.input);
  sol.converged = true;
  sol.objective = (b - ms * x).squaredNorm() + p.rho * x.squaredNorm();
  sol.kkt_residual =
      coords.empty()
          ? 0.0
          : (2.0 * (ms.transpose() * (ms * x - b)) + 2.0 * p.rho * x)
                .cwiseAbs()
                .maxCoeff();
  sol.support = support;
  return sol;
}

/// Tap-uniform support pattern of an architecture: the union of the selected
/// groups' (row, col) footprints, intersected across joint components.
/// Exact for actuator / sensor / submatrix atoms, whose masks do not vary
/// with the tap index; link atoms need a graph re-derivation instead.
inline SparsityMask architecture_pattern(const GroupStructure& pen,
                                         const std::vector<int>& support) {
  std::vector<char> allowed =
      detail::architecture_coords(pen, support, pen.layout.size());
  BoolMatrix pat = BoolMatrix::Constant(pen.layout.rows, pen.layout.cols, false);
  for (Eigen::Index c = 0; c < pen.layout.size(); ++c)
    if (allowed[c]) pat(pen.layout.row_of(c), pen.layout.col_of(c)) = true;
  return SparsityMask({}, pat);
}

struct LongHorizonSolution {
  FirTransferMatrix u = FirTransferMatrix::zero(1, 1);
  double objective = 0.0;   // smooth cost including the ridge
  double h2 = 0.0;          // sqrt(objective): closed-loop H2 at this horizon
  bool degenerate = false;
};

/// Least squares of ||Y - L(U)||^2 (+ control cost) + rho ||U||^2 over all
/// coordinates the evaluation mask allows, at long horizons.  One-sided
/// models decouple across variable columns: each column is solved against
/// the shared block-Toeplitz operator, with factorizations reused across
/// columns that share an allowed-row set.
inline LongHorizonSolution long_horizon_restricted_ls(
    const ModelMatchingModel& model, double rho, const SparsityMask& eval_mask,
    int order_taps, int first_tap, int t_out) {
  const Eigen::Index nu = model.u_rows(), ncols = model.u_cols();
  LongHorizonSolution out;
  if (model.one_sided()) {
    Matrix bop = model.column_operator(t_out, TapSpec{order_taps, first_tap});
    FirTransferMatrix y = model.open_loop(t_out);
    const Eigen::Index ny = model.y_rows();
    Matrix ystack(static_cast<Eigen::Index>(t_out + 1) * ny, ncols);
    for (int k = 0; k <= t_out; ++k) ystack.middleRows(k * ny, ny) = y.tap(k);
    std::vector<Matrix> utaps(order_taps, Matrix::Zero(nu, ncols));
    double obj = 0.0;
    bool degenerate = false;
    std::map<std::vector<Eigen::Index>, std::vector<Eigen::Index>> by_set;
    for (Eigen::Index c = 0; c < ncols; ++c) {
      std::vector<Eigen::Index> bcols;
      for (int j = 0; j < order_taps; ++j)
        for (Eigen::Index r = 0; r < nu; ++r)
          if (eval_mask.at(first_tap + j)(r, c)) bcols.push_back(j * nu + r);
      by_set[bcols].push_back(c);
    }
    for (const auto& [bcols, cols] : by_set) {
      if (bcols.empty()) {
        for (auto c : cols) obj += ystack.col(c).squaredNorm();
        continue;
      }
      Matrix bs(bop.rows(), static_cast<Eigen::Index>(bcols.size()));
      for (size_t i = 0; i < bcols.size(); ++i) bs.col(i) = bop.col(bcols[i]);
      Matrix rhs(bs.cols(), static_cast<Eigen::Index>(cols.size()));
      for (size_t i = 0; i < cols.size(); ++i)
        rhs.col(i) = bs.transpose() * ystack.col(cols[i]);
      Matrix x;
      if (rho > 0.0) {
        Matrix gram = bs.transpose() * bs;
        gram.diagonal().array() += rho;
        x = gram.llt().solve(rhs);
      } else {
        Eigen::CompleteOrthogonalDecomposition<Matrix> cod(bs);
        x.resize(bs.cols(), cols.size());
        for (size_t i = 0; i < cols.size(); ++i)
          x.col(i) = cod.solve(ystack.col(cols[i]));
        degenerate = degenerate || cod.rank() < bs.cols();
      }
      for (size_t i = 0; i < cols.size(); ++i) {
        const Eigen::Index c = cols[i];
        obj += (ystack.col(c) - bs * x.col(i)).squaredNorm() +
               rho * x.col(i).squaredNorm();
        for (size_t bi = 0; bi < bcols.size(); ++bi) {
          const int j = static_cast<int>(bcols[bi] / nu);
          const Eigen::Index r = bcols[bi] % nu;
          utaps[j](r, c) = x(bi, i);
        }
      }
    }
    out.u = FirTransferMatrix(std::move(utaps));
    out.objective = obj;
    out.h2 = std::sqrt(std::max(0.0, obj));
    out.degenerate = degenerate;
    return out;
  }
  // two-sided: restricted columns of the stacked smooth operator
  CoordLayout layout{order_taps, nu, ncols, first_tap};
  std::vector<Eigen::Index> coords;
  for (Eigen::Index c = 0; c < layout.size(); ++c) {
    const int tap = first_tap + layout.tap_of(c);
    if (eval_mask.at(tap)(layout.row_of(c), layout.col_of(c))) coords.push_back(c);
  }
  auto [ms, b] = model.smooth_columns(t_out, TapSpec{order_taps, first_tap},
                                      coords);
  Vector x;
  bool degenerate = false;
  if (coords.empty()) {
    x = Vector::Zero(0);
  } else if (rho > 0.0) {
    Matrix gram = ms.transpose() * ms;
    gram.diagonal().array() += rho;
    x = gram.llt().solve(ms.transpose() * b);
  } else {
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(ms);
    x = cod.solve(b);
    degenerate = cod.rank() < static_cast<Eigen::Index>(coords.size());
  }
  Vector u = Vector::Zero(layout.size());
  for (size_t i = 0; i < coords.size(); ++i) u(coords[i]) = x(i);
  out.u = unvectorize(u, layout);
  out.objective = (b - ms * x).squaredNorm() + rho * x.squaredNorm();
  out.h2 = std::sqrt(std::max(0.0, out.objective));
  out.degenerate = degenerate;
  return out;
}

struct OracleEntry {
  std::vector<int> rows;
  double objective = 0.0;
};

struct OracleResult {
  std::vector<int> best_rows;
  double best_objective = 0.0;
  FirTransferMatrix best_u = FirTransferMatrix::zero(1, 1);
  std::vector<OracleEntry> ranking;  // ascending objective, lexicographic ties
};

/// Exhaustive enumeration of actuation schemes with at most s rows, each
/// scored by the restricted least squares at the reference horizon.  Ties
/// break to the lexicographically smallest support.  Chunks run in parallel
/// (RFD_THREADS) with a deterministic merge.
inline OracleResult brute_force_oracle(const ModelMatchingModel& model,
                                       double rho, int s, int t_ref, int t_out,
                                       unsigned long long cap = 1000000ull) {
  if (!model.one_sided())
    throw std::invalid_argument("brute_force_oracle: one-sided models only");
  const int n = static_cast<int>(model.u_rows());
  if (s < 1 || s > n) throw std::invalid_argument("brute_force_oracle: bad s");
  if (detail::subset_count(n, s) > cap)
    throw EnumerationCapError("brute_force_oracle: enumeration above cap");
  std::vector<std::vector<int>> subsets;
  detail::enumerate_subsets(n, s, [&](const std::vector<int>& sub) {
    subsets.push_back(sub);
  });

  Matrix bop = model.column_operator(t_out, TapSpec{t_ref, 0});
  FirTransferMatrix y = model.open_loop(t_out);
  const Eigen::Index ny = model.y_rows(), nu = model.u_rows();
  const Eigen::Index ncols = model.u_cols();
  Matrix ystack(static_cast<Eigen::Index>(t_out + 1) * ny, ncols);
  for (int k = 0; k <= t_out; ++k) ystack.middleRows(k * ny, ny) = y.tap(k);

  auto solve_subset = [&](const std::vector<int>& rows) -> double {
    std::vector<Eigen::Index> bcols;
    for (int j = 0; j < t_ref; ++j)
      for (int r : rows) bcols.push_back(static_cast<Eigen::Index>(j) * nu + r);
    Matrix bs(bop.rows(), static_cast<Eigen::Index>(bcols.size()));
    for (size_t i = 0; i < bcols.size(); ++i) bs.col(i) = bop.col(bcols[i]);
    Matrix gram = bs.transpose() * bs;
    gram.diagonal().array() += std::max(rho, 1e-13);
    Matrix x = gram.llt().solve(bs.transpose() * ystack);
    return (ystack - bs * x).squaredNorm() + rho * x.squaredNorm();
  };

  std::vector<double> objectives(subsets.size());
  const int threads = std::min<int>(detail::env_threads(),
                                    static_cast<int>(subsets.size()));
  if (threads > 1) {
    std::vector<std::thread> pool;
    std::atomic<size_t> next{0};
    for (int ti = 0; ti < threads; ++ti)
      pool.emplace_back([&]() {
        for (size_t i = next.fetch_add(1); i < subsets.size();
             i = next.fetch_add(1))
          objectives[i] = solve_subset(subsets[i]);
      });
    for (auto& th : pool) th.join();
  } else {
    for (size_t i = 0; i < subsets.size(); ++i)
      objectives[i] = solve_subset(subsets[i]);
  }

  OracleResult res;
  res.ranking.reserve(subsets.size());
  for (size_t i = 0; i < subsets.size(); ++i)
    res.ranking.push_back({subsets[i], objectives[i]});
  std::stable_sort(res.ranking.begin(), res.ranking.end(),
                   [](const OracleEntry& a, const OracleEntry& b) {
                     const double scale = 1.0 + std::min(std::abs(a.objective),
                                                         std::abs(b.objective));
                     if (std::abs(a.objective - b.objective) > 1e-12 * scale)
                       return a.objective < b.objective;
                     return a.rows < b.rows;
                   });
  res.best_rows = res.ranking.front().rows;
  res.best_objective = res.ranking.front().objective;
  // reference controller on the winning support
  BoolMatrix pat = BoolMatrix::Constant(nu, ncols, false);
  for (int r : res.best_rows) pat.row(r).setConstant(true);
  auto sol = long_horizon_restricted_ls(model, rho, SparsityMask({}, pat),
                                        t_ref, 0, t_out);
  res.best_u = sol.u;
  return res;
}

struct TwoStepResult {
  RfdSolution design;              // step 1: regularized architecture solve
  std::vector<int> architecture;   // active groups
  LongHorizonSolution control;     // step 2: debiased restricted solve
};

/// Evaluation-horizon settings for the step-2 solve: horizons plus the rule
/// turning a selected group set into an allowed support pattern (link atoms
/// override the default tap-uniform rule with a graph re-derivation).
struct EvalSpec {
  int order_taps = 0;
  int first_tap = 0;
  int t_out = 0;
  double rho = 0.0;  // original control weight, not the design rho
  std::function<SparsityMask(const std::vector<int>&)> mask_for;
};

inline EvalSpec default_eval_spec(const ModelMatchingModel& model,
                                  const GroupStructure& pen, int cap = 500) {
  EvalSpec e;
  e.order_taps = reference_horizon(model.decay_rate(), cap);
  e.first_tap = 0;
  e.t_out = e.order_taps + reference_horizon(model.decay_rate(), cap) / 2;
  e.rho = model.rho_u();
  GroupStructure pen_copy = pen;
  e.mask_for = [pen_copy](const std::vector<int>& support) {
    return architecture_pattern(pen_copy, support);
  };
  return e;
}

/// Architecture design then optimal control law design: a regularized solve
/// picks the active groups, then an unregularized restricted least squares
/// at the evaluation horizon debiases the control law.
inline TwoStepResult two_step(const RfdProblem& p,
                              const ModelMatchingModel& model,
                              const EvalSpec& eval,
                              const SolveOptions& opts = {}) {
  TwoStepResult r;
  r.design = solve_dispatch(p, opts);
  r.architecture = r.design.support;
  SparsityMask mask = eval.mask_for(r.architecture);
  r.control = long_horizon_restricted_ls(model, eval.rho, mask,
                                         eval.order_taps, eval.first_tap,
                                         eval.t_out);
  return r;
}

struct SweepRow {
  double lambda = 0.0;
  std::vector<int> support;
  int n_actuators = 0;
  int n_sensors = 0;
  int n_links = 0;
  double closed_loop_h2 = 0.0;
  double relative_degradation_pct = 0.0;
  double objective = 0.0;
  double kkt_residual = 0.0;
  bool converged = false;
};

/// Architecture resource counts of a solution: rows and columns whose
/// coordinates are active, plus selected link atoms.
inline void count_resources(const RfdSolution& sol, const GroupStructure& pen,
                            SweepRow& row) {
  const CoordLayout& layout = pen.layout;
  Vector u = vectorize(sol.u, layout);
  std::vector<char> row_on(layout.rows, 0), col_on(layout.cols, 0);
  const double tol = 1e-9 * std::max(1.0, u.cwiseAbs().maxCoeff());
  for (Eigen::Index c = 0; c < layout.size(); ++c)
    if (std::abs(u(c)) > tol) {
      row_on[layout.row_of(c)] = 1;
      col_on[layout.col_of(c)] = 1;
    }
  row.n_actuators = static_cast<int>(
      std::count(row_on.begin(), row_on.end(), char(1)));
  row.n_sensors = static_cast<int>(
      std::count(col_on.begin(), col_on.end(), char(1)));
  row.n_links = 0;
  auto tags = flat_group_tags(pen);
  for (int gi : sol.support)
    if (gi < static_cast<int>(tags.size()) &&
        tags[gi].kind == GroupTag::kLink)
      ++row.n_links;
}

/// Descending-lambda sweep with warm starts; each row reports the selected
/// architecture, its debiased closed-loop norm at the evaluation horizon and
/// the degradation against the full architecture.
inline std::vector<SweepRow> lambda_sweep(const RfdProblem& p_template,
                                          const ModelMatchingModel& model,
                                          std::vector<double> grid,
                                          const EvalSpec& eval,
                                          const SolveOptions& opts = {}) {
  if (grid.empty()) throw std::invalid_argument("lambda_sweep: empty grid");
  std::sort(grid.begin(), grid.end(), std::greater<double>());
  // full-architecture baseline
  std::vector<int> all_groups;
  {
    const size_t n =
        p_template.penalty.kind == GroupKind::kJointSum
            ? p_template.penalty.components[0].groups.size() +
                  p_template.penalty.components[1].groups.size()
            : p_template.penalty.groups.size();
    for (size_t gi = 0; gi < n; ++gi) all_groups.push_back(static_cast<int>(gi));
  }
  LongHorizonSolution full = long_horizon_restricted_ls(
      model, eval.rho, eval.mask_for(all_groups), eval.order_taps,
      eval.first_tap, eval.t_out);

  std::vector<SweepRow> rows;
  SolveOptions o = opts;
  for (double lam : grid) {
    RfdProblem p = p_template;
    p.lambda = lam;
    RfdSolution sol = solve_dispatch(p, o);
    o.warm_start = vectorize(sol.u, p.map.input);
    SweepRow row;
    row.lambda = lam;
    row.support = sol.support;
    row.objective = sol.objective;
    row.kkt_residual = sol.kkt_residual;
    row.converged = sol.converged;
    count_resources(sol, p.penalty, row);
    LongHorizonSolution ctrl = long_horizon_restricted_ls(
        model, eval.rho, eval.mask_for(sol.support), eval.order_taps,
        eval.first_tap, eval.t_out);
    row.closed_loop_h2 = ctrl.h2;
    row.relative_degradation_pct =
        full.h2 > 0.0 ? 100.0 * (ctrl.h2 - full.h2) / full.h2 : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

struct KktCertificateResult {
  double z_on = 0.0;
  double z_off = 0.0;
  bool strictly_feasible = false;
};

/// Dual certificate for an architect solution: the scaled residual
/// back-projection Z = L'(Y - L(U))/lambda - rho U/lambda must have unit
/// dual norm on the active support groups and strictly sub-unit dual norm
/// off support for the unconstrained problem to share the solution.
inline KktCertificateResult kkt_certificate(const RfdSolution& sol,
                                            const RfdProblem& p,
                                            const std::vector<int>& a_star) {
  if (!(p.lambda > 0.0))
    throw std::invalid_argument("kkt_certificate: lambda must be positive");
  if (p.penalty.kind != GroupKind::kActuator &&
      p.penalty.kind != GroupKind::kSensor)
    throw std::invalid_argument("kkt_certificate: partition penalties only");
  Matrix m = detail::stacked_smooth(p);
  Vector b = detail::stacked_rhs(p);
  Vector u = vectorize(sol.u, p.map.input);
  Vector z = (m.transpose() * (b - m * u) - p.rho * u) / p.lambda;
  std::vector<char> in_star(p.penalty.groups.size(), 0);
  for (int gi : a_star) in_star.at(gi) = 1;
  KktCertificateResult r;
  for (size_t gi = 0; gi < p.penalty.groups.size(); ++gi) {
    const double nrm =
        p.penalty.weights[gi] * detail::group_norm(z, p.penalty.groups[gi]);
    if (in_star[gi])
      r.z_on = std::max(r.z_on, nrm);
    else
      r.z_off = std::max(r.z_off, nrm);
  }
  r.strictly_feasible = r.z_off < 1.0 - 1e-9;
  return r;
}

}  // namespace rfd
