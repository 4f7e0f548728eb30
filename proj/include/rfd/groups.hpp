#pragma once

#include <algorithm>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "rfd/linear_map.hpp"

namespace rfd {

/// Combinatorial guards (atom enumeration, oracle subsets) throw this so
/// callers can map it to the documented exit code.
struct EnumerationCapError : std::runtime_error {
  explicit EnumerationCapError(const std::string& what)
      : std::runtime_error(what) {}
};

enum class GroupKind {
  kActuator,        // one group per row, partition
  kSensor,          // one group per column, partition
  kActuatorSensor,  // submatrix atoms, may overlap (latent)
  kComm,            // link atoms + an unpenalized base subspace (latent)
  kJointSum,        // (1-theta) * comm + theta * actuator-ish
  kJointMax         // max form; evaluation only
};

/// What a group stands for, used when counting architecture resources.
struct GroupTag {
  enum Kind { kRow, kCol, kEntrySet, kLink, kGeneric } kind = kGeneric;
  int id = -1;  // row index / col index / link index
};

/// Atomic decomposition of a Youla coordinate space: a list of atom
/// coordinate sets with normalization weights k_A.  Partition kinds cover
/// every coordinate exactly once; latent kinds may overlap and may leave a
/// designated free (unpenalized) subspace; anything outside atoms + free is
/// outside the penalty's domain.
struct GroupStructure {
  GroupKind kind = GroupKind::kActuator;
  CoordLayout layout;
  std::vector<std::vector<Eigen::Index>> groups;
  std::vector<double> weights;  // k_A > 0; the norm weights each term 1/k_A
  std::vector<GroupTag> tags;
  std::vector<Eigen::Index> free_coords;  // unpenalized subspace (comm base)
  double theta = 0.0;                     // joint kinds only
  std::vector<GroupStructure> components;  // joint kinds: exactly two

  void validate() const {
    if (kind == GroupKind::kJointSum || kind == GroupKind::kJointMax) {
      if (components.size() != 2)
        throw std::invalid_argument("joint penalty needs two components");
      if (theta < 0.0 || theta > 1.0)
        throw std::invalid_argument("theta must lie in [0,1]");
      for (const auto& c : components) c.validate();
      return;
    }
    if (groups.size() != weights.size())
      throw std::invalid_argument("groups/weights size mismatch");
    for (double w : weights)
      if (!(w > 0.0)) throw std::invalid_argument("weights must be positive");
    for (const auto& g : groups)
      for (auto c : g)
        if (c < 0 || c >= layout.size())
          throw std::invalid_argument("group coordinate out of range");
    if ((kind == GroupKind::kActuator || kind == GroupKind::kSensor) &&
        !is_partition())
      throw std::invalid_argument("partition kind with overlapping atoms");
  }

  bool is_partition() const {
    std::vector<char> seen(layout.size(), 0);
    for (const auto& g : groups)
      for (auto c : g) {
        if (seen[c]) return false;
        seen[c] = 1;
      }
    for (auto c : free_coords)
      if (seen[c]) return false;
    return true;
  }

  bool covers_all() const {
    std::vector<char> seen(layout.size(), 0);
    for (const auto& g : groups)
      for (auto c : g) seen[c] = 1;
    for (auto c : free_coords) seen[c] = 1;
    return std::all_of(seen.begin(), seen.end(), [](char x) { return x != 0; });
  }
};

/// One group per row of the variable: the actuator norm's atoms.
inline GroupStructure actuator_structure(const CoordLayout& layout) {
  GroupStructure g;
  g.kind = GroupKind::kActuator;
  g.layout = layout;
  for (Eigen::Index r = 0; r < layout.rows; ++r) {
    std::vector<Eigen::Index> coords;
    for (int j = 0; j < layout.taps; ++j)
      for (Eigen::Index c = 0; c < layout.cols; ++c)
        coords.push_back(layout.coord(j, r, c));
    g.groups.push_back(std::move(coords));
    g.weights.push_back(1.0);
    g.tags.push_back({GroupTag::kRow, static_cast<int>(r)});
  }
  return g;
}

/// One group per column: the sensor norm's atoms.
inline GroupStructure sensor_structure(const CoordLayout& layout) {
  GroupStructure g;
  g.kind = GroupKind::kSensor;
  g.layout = layout;
  for (Eigen::Index c = 0; c < layout.cols; ++c) {
    std::vector<Eigen::Index> coords;
    for (int j = 0; j < layout.taps; ++j)
      for (Eigen::Index r = 0; r < layout.rows; ++r)
        coords.push_back(layout.coord(j, r, c));
    g.groups.push_back(std::move(coords));
    g.weights.push_back(1.0);
    g.tags.push_back({GroupTag::kCol, static_cast<int>(c)});
  }
  return g;
}

namespace detail {

inline double group_norm(const Vector& u, const std::vector<Eigen::Index>& g) {
  double s = 0.0;
  for (auto c : g) s += u(c) * u(c);
  return std::sqrt(s);
}

inline unsigned long long subset_count(int n, int kmax) {
  // sum_{i=1..kmax} C(n, i), saturating
  unsigned long long total = 0;
  for (int i = 1; i <= kmax; ++i) {
    unsigned long long c = 1;
    for (int j = 0; j < i; ++j) {
      c = c * (n - j) / (j + 1);
      if (c > (1ull << 62)) return c;
    }
    total += c;
    if (total > (1ull << 62)) return total;
  }
  return total;
}

inline void enumerate_subsets(int n, int kmax,
                              const std::function<void(const std::vector<int>&)>& f) {
  std::vector<int> cur;
  std::function<void(int)> rec = [&](int start) {
    if (!cur.empty()) f(cur);
    if (static_cast<int>(cur.size()) == kmax) return;
    for (int i = start; i < n; ++i) {
      cur.push_back(i);
      rec(i + 1);
      cur.pop_back();
    }
  };
  rec(0);
}

}  // namespace detail

/// Submatrix atoms with at most k_a nonzero rows and k_s nonzero columns,
/// weighted by (card(A) + 0.1)^(-1/2) where card(A) counts the scalar
/// entries of the supporting submatrix.  Atoms of different sizes nest; the
/// +0.1 offset is what makes one larger atom preferable to several smaller
/// ones.
inline GroupStructure build_actuator_sensor_atoms(
    const CoordLayout& layout, int k_a, int k_s,
    unsigned long long atom_cap = 1000000ull) {
  const int n_a = static_cast<int>(layout.rows);
  const int n_s = static_cast<int>(layout.cols);
  if (k_a < 1 || k_a > n_a || k_s < 1 || k_s > n_s)
    throw std::invalid_argument("actuator_sensor atoms: bad k_a/k_s");
  const unsigned long long count =
      detail::subset_count(n_a, k_a) * detail::subset_count(n_s, k_s);
  if (count > atom_cap)
    throw EnumerationCapError(
        "actuator_sensor atoms: atom count " + std::to_string(count) +
        " exceeds cap " + std::to_string(atom_cap));
  GroupStructure g;
  g.kind = GroupKind::kActuatorSensor;
  g.layout = layout;
  int tag_id = 0;
  std::vector<std::vector<int>> row_subsets, col_subsets;
  detail::enumerate_subsets(n_a, k_a,
                            [&](const std::vector<int>& s) { row_subsets.push_back(s); });
  detail::enumerate_subsets(n_s, k_s,
                            [&](const std::vector<int>& s) { col_subsets.push_back(s); });
  for (const auto& rs : row_subsets) {
    for (const auto& cs : col_subsets) {
      std::vector<Eigen::Index> coords;
      for (int j = 0; j < layout.taps; ++j)
        for (int r : rs)
          for (int c : cs) coords.push_back(layout.coord(j, r, c));
      g.groups.push_back(std::move(coords));
      const double card = static_cast<double>(rs.size() * cs.size());
      g.weights.push_back(1.0 / std::sqrt(card + 0.1));
      g.tags.push_back({GroupTag::kEntrySet, tag_id++});
    }
  }
  return g;
}

/// The coordinate subspaces unlocked by adding communication links to a base
/// graph: the mask for link l at tap k is supp((Gamma+l)^(k-1)) minus
/// supp(Gamma^(k-1)), with tap 0 empty (controllers are strictly proper
/// under the delay rule).
struct CommAtomDerivation {
  SparsityMask base;                                  // supp(Gamma^(k-1))
  std::vector<SparsityMask> atoms;                    // one per link
  std::vector<std::vector<std::pair<int, int>>> links;  // (to i, from j) edges
};

inline CommAtomDerivation derive_comm_atoms(
    const BoolMatrix& gamma,
    const std::vector<std::vector<std::pair<int, int>>>& links, int depth) {
  const Eigen::Index n = gamma.rows();
  if (gamma.cols() != n)
    throw std::invalid_argument("derive_comm_atoms: adjacency not square");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!gamma(i, i))
      throw std::invalid_argument("derive_comm_atoms: diagonal must be true");
  if (depth < 1) throw std::invalid_argument("derive_comm_atoms: depth < 1");
  for (const auto& link : links)
    for (auto [i, j] : link) {
      if (i < 0 || j < 0 || i >= n || j >= n)
        throw std::invalid_argument("derive_comm_atoms: link out of range");
      if (gamma(i, j))
        throw std::invalid_argument("derive_comm_atoms: link already present");
    }
  auto powers = [&](const BoolMatrix& g) {
    // supp(g^k) for k = 0..depth-1 (reachability within k hops)
    std::vector<BoolMatrix> p;
    p.push_back(BoolMatrix::Identity(n, n));
    for (int k = 1; k < depth; ++k) {
      BoolMatrix next = BoolMatrix::Constant(n, n, false);
      const BoolMatrix& prev = p.back();
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index m = 0; m < n; ++m)
          if (prev(i, m))
            for (Eigen::Index j = 0; j < n; ++j)
              if (g(m, j)) next(i, j) = true;
      p.push_back(next);
    }
    return p;
  };
  auto base_pows = powers(gamma);
  auto mask_from = [&](const std::vector<BoolMatrix>& pows) {
    std::vector<BoolMatrix> taps;
    taps.push_back(BoolMatrix::Constant(n, n, false));  // tap 0
    for (int k = 1; k <= depth; ++k) taps.push_back(pows[k - 1]);
    return SparsityMask(std::move(taps), pows[depth - 1]);
  };
  CommAtomDerivation out{mask_from(base_pows), {}, links};
  for (const auto& link : links) {
    BoolMatrix g2 = gamma;
    for (auto [i, j] : link) g2(i, j) = true;
    auto pows = powers(g2);
    std::vector<BoolMatrix> taps;
    taps.push_back(BoolMatrix::Constant(n, n, false));
    for (int k = 1; k <= depth; ++k) {
      BoolMatrix diff = BoolMatrix::Constant(n, n, false);
      for (Eigen::Index r = 0; r < n; ++r)
        for (Eigen::Index c = 0; c < n; ++c)
          diff(r, c) = pows[k - 1](r, c) && !base_pows[k - 1](r, c);
      taps.push_back(diff);
    }
    BoolMatrix tail = taps.back();
    out.atoms.emplace_back(std::move(taps), std::move(tail));
  }
  return out;
}

/// Comm-link group structure over a variable layout: one latent atom per
/// link from its derived mask, the base subspace left unpenalized, and all
/// normalization constants k_A = 1.
inline GroupStructure comm_structure(const CoordLayout& layout,
                                     const CommAtomDerivation& derivation) {
  GroupStructure g;
  g.kind = GroupKind::kComm;
  g.layout = layout;
  auto coords_of = [&](const SparsityMask& m) {
    std::vector<Eigen::Index> coords;
    for (int j = 0; j < layout.taps; ++j) {
      const BoolMatrix& tap = m.at(layout.first_tap + j);
      for (Eigen::Index c = 0; c < layout.cols; ++c)
        for (Eigen::Index r = 0; r < layout.rows; ++r)
          if (tap(r, c)) coords.push_back(layout.coord(j, r, c));
    }
    return coords;
  };
  g.free_coords = coords_of(derivation.base);
  for (size_t l = 0; l < derivation.atoms.size(); ++l) {
    g.groups.push_back(coords_of(derivation.atoms[l]));
    g.weights.push_back(1.0);
    g.tags.push_back({GroupTag::kLink, static_cast<int>(l)});
  }
  return g;
}

inline GroupStructure joint_sum(GroupStructure comm_part,
                                GroupStructure act_part, double theta) {
  GroupStructure g;
  g.kind = GroupKind::kJointSum;
  g.layout = act_part.layout;
  g.theta = theta;
  g.components.push_back(std::move(comm_part));
  g.components.push_back(std::move(act_part));
  g.validate();
  return g;
}

inline GroupStructure joint_max(GroupStructure comm_part,
                                GroupStructure act_part, double theta) {
  GroupStructure g = joint_sum(std::move(comm_part), std::move(act_part), theta);
  g.kind = GroupKind::kJointMax;
  return g;
}

/// Lifted reformulation of a latent structure: every atom gets its own copy
/// of its coordinates, the penalty becomes a partition group norm over the
/// copies, and the recombination map sums copies back onto the original
/// coordinates.  Free coordinates get a single unpenalized copy.
struct LiftedPenalty {
  Eigen::Index n_lifted = 0;
  std::vector<Eigen::Index> lifted_to_orig;  // recombination: U = sum copies
  std::vector<std::vector<Eigen::Index>> groups;  // over lifted coords
  std::vector<double> weights;
  std::vector<GroupTag> tags;
  std::vector<Eigen::Index> free_lifted;  // lifted indices of free copies

  Vector recombine(const Vector& v, Eigen::Index n_orig) const {
    Vector u = Vector::Zero(n_orig);
    for (Eigen::Index l = 0; l < n_lifted; ++l) u(lifted_to_orig[l]) += v(l);
    return u;
  }
};

inline LiftedPenalty lift(const GroupStructure& g) {
  if (g.kind == GroupKind::kJointSum || g.kind == GroupKind::kJointMax)
    throw std::invalid_argument("lift: joint kinds are lifted per component");
  LiftedPenalty lp;
  for (size_t gi = 0; gi < g.groups.size(); ++gi) {
    std::vector<Eigen::Index> lifted;
    for (auto c : g.groups[gi]) {
      lp.lifted_to_orig.push_back(c);
      lifted.push_back(lp.n_lifted++);
    }
    lp.groups.push_back(std::move(lifted));
    lp.weights.push_back(g.weights[gi]);
    lp.tags.push_back(gi < g.tags.size() ? g.tags[gi] : GroupTag{});
  }
  for (auto c : g.free_coords) {
    lp.lifted_to_orig.push_back(c);
    lp.free_lifted.push_back(lp.n_lifted++);
  }
  return lp;
}

namespace detail {

/// Exact minimizer of sum_g w_g ||V_g|| subject to the copies summing to u,
/// by ADMM with a closed-form projection onto the consensus constraint.
/// Returns the optimal value, or +inf when u has support outside the atoms'
/// span.  Used for evaluating latent norms; the solver itself works on the
/// lifted separable form instead.
inline double latent_norm_admm(const Vector& u, const GroupStructure& g,
                               double tol = 1e-10, int max_iter = 50000) {
  LiftedPenalty lp = lift(g);
  const Eigen::Index n = g.layout.size();
  std::vector<int> copies(n, 0);
  for (auto c : lp.lifted_to_orig) copies[c]++;
  for (Eigen::Index c = 0; c < n; ++c)
    if (copies[c] == 0 && std::abs(u(c)) > 1e-13)
      return std::numeric_limits<double>::infinity();
  // normalized weights: norm contribution is ||V_g|| / k_g
  std::vector<double> w(lp.weights.size());
  for (size_t i = 0; i < w.size(); ++i) w[i] = 1.0 / lp.weights[i];

  Vector v = Vector::Zero(lp.n_lifted);   // penalized variable
  Vector z = Vector::Zero(lp.n_lifted);   // consensus variable
  Vector dual = Vector::Zero(lp.n_lifted);
  const double mu = 1.0;
  auto project = [&](Vector x) {
    // projection onto { z : sum of copies of coord c equals u(c) }
    Vector sums = Vector::Zero(n);
    for (Eigen::Index l = 0; l < lp.n_lifted; ++l) sums(lp.lifted_to_orig[l]) += x(l);
    for (Eigen::Index l = 0; l < lp.n_lifted; ++l) {
      const Eigen::Index c = lp.lifted_to_orig[l];
      x(l) += (u(c) - sums(c)) / copies[c];
    }
    return x;
  };
  auto objective_at = [&](const Vector& x) {
    double obj = 0.0;
    for (size_t gi = 0; gi < lp.groups.size(); ++gi) {
      double nrm = 0.0;
      for (auto l : lp.groups[gi]) nrm += x(l) * x(l);
      obj += w[gi] * std::sqrt(nrm);
    }
    return obj;
  };
  for (int it = 0; it < max_iter; ++it) {
    // v-update: group shrinkage of (z - dual)
    Vector target = z - dual;
    for (size_t gi = 0; gi < lp.groups.size(); ++gi) {
      double nrm = 0.0;
      for (auto l : lp.groups[gi]) nrm += target(l) * target(l);
      nrm = std::sqrt(nrm);
      const double scalef =
          nrm > 0 ? std::max(0.0, 1.0 - w[gi] / (mu * nrm)) : 0.0;
      for (auto l : lp.groups[gi]) v(l) = scalef * target(l);
    }
    for (auto l : lp.free_lifted) v(l) = target(l);
    Vector z_prev = z;
    z = project(v + dual);
    dual += v - z;
    // standard ADMM stopping on the primal and dual residuals
    const double primal = (v - z).norm();
    const double dual_res = mu * (z - z_prev).norm();
    const double scale = std::max({1.0, v.norm(), z.norm()});
    if (primal < tol * scale && dual_res < tol * scale)
      return objective_at(z);
  }
  return objective_at(z);
}

}  // namespace detail

/// Atomic-norm value of a variable under a group structure.  Partition
/// kinds sum weighted group norms; latent kinds solve the convex
/// decomposition program (a coordinate projection when the atoms are
/// disjoint); joint kinds combine their two components.  Returns +inf when
/// the variable is not in the span of the atoms (plus free subspace).
inline double eval_norm(const FirTransferMatrix& u, const GroupStructure& g) {
  g.validate();
  if (g.kind == GroupKind::kJointSum)
    return (1.0 - g.theta) * eval_norm(u, g.components[0]) +
           g.theta * eval_norm(u, g.components[1]);
  if (g.kind == GroupKind::kJointMax)
    return std::max((1.0 - g.theta) * eval_norm(u, g.components[0]),
                    g.theta * eval_norm(u, g.components[1]));
  Vector x = vectorize(u, g.layout);
  if (g.is_partition()) {
    if (!g.covers_all()) {
      // coordinates outside atoms + free must vanish
      std::vector<char> covered(g.layout.size(), 0);
      for (const auto& grp : g.groups)
        for (auto c : grp) covered[c] = 1;
      for (auto c : g.free_coords) covered[c] = 1;
      for (Eigen::Index c = 0; c < x.size(); ++c)
        if (!covered[c] && std::abs(x(c)) > 1e-13)
          return std::numeric_limits<double>::infinity();
    }
    double s = 0.0;
    for (size_t gi = 0; gi < g.groups.size(); ++gi)
      s += detail::group_norm(x, g.groups[gi]) / g.weights[gi];
    return s;
  }
  return detail::latent_norm_admm(x, g);
}

/// Dual norm, defined for the partition kinds used by the recovery
/// analysis: max over atoms of the weighted group norm.
inline double eval_dual_norm(const FirTransferMatrix& v,
                             const GroupStructure& g) {
  if (g.kind != GroupKind::kActuator && g.kind != GroupKind::kSensor)
    throw std::invalid_argument("eval_dual_norm: partition kinds only");
  Vector x = vectorize(v, g.layout);
  double m = 0.0;
  for (size_t gi = 0; gi < g.groups.size(); ++gi)
    m = std::max(m, g.weights[gi] * detail::group_norm(x, g.groups[gi]));
  return m;
}

/// Proximal map of threshold * Omega for partition structures: per-group
/// block soft threshold, free coordinates passed through.
inline FirTransferMatrix prox(const FirTransferMatrix& u,
                              const GroupStructure& g, double threshold) {
  if (!(threshold > 0.0)) throw std::invalid_argument("prox: threshold <= 0");
  if (g.kind == GroupKind::kJointSum || g.kind == GroupKind::kJointMax)
    throw std::invalid_argument("prox: joint kinds need splitting");
  if (!g.is_partition())
    throw std::invalid_argument("prox: latent kind must be lifted first");
  Vector x = vectorize(u, g.layout);
  for (size_t gi = 0; gi < g.groups.size(); ++gi) {
    const double nrm = detail::group_norm(x, g.groups[gi]);
    const double thr = threshold / g.weights[gi];
    const double scalef = nrm > thr ? 1.0 - thr / nrm : 0.0;
    for (auto c : g.groups[gi]) x(c) *= scalef;
  }
  return unvectorize(x, g.layout);
}

}  // namespace rfd
