#pragma once

#include <optional>

#include "rfd/solver.hpp"

namespace rfd {

/// All recovery quantities for one candidate architecture at one
/// (horizon, order) pair, with enough echoed inputs to reproduce every
/// field.  Gains are reported as exact-when-available (alpha below the
/// mixing time) with the conservative bounds used for every verdict.
struct RecoveryCertificate {
  int t = 0;
  TapSpec order;
  double rho = 0.0;
  std::vector<int> m_star;  // group indices of the candidate architecture

  int tau = 0;
  bool tau_saturated = false;
  std::optional<double> alpha_exact;  // only valid for t <= tau
  double gamma = 0.0;                 // lower bound on alpha - rho
  double beta_upper = 0.0;
  double nu_upper = 0.0;  // beta_upper / (rho + gamma)

  double noise_in = 0.0;   // dual norm of the in-support back-projection
  double noise_out = 0.0;  // same, off support
  double eta = 0.0;        // noise_in + noise_out
  std::vector<double> snr;  // per m_star group
  double mu = 0.0;          // smallest in-support group norm of U*^{<=v}
  double dual_u_star_v = 0.0;

  double lambda_sufficient = 0.0;
  std::vector<double> lambda_group_upper;  // per m_star group
  std::optional<std::pair<double, double>> lambda_interval;
  double lambda_used = 0.0;
  double error_bound = 0.0;

  struct Verdicts {
    bool assumption1 = false;
    bool theorem2_support = false;
    bool theorem2_per_group = false;
    bool corollary1 = false;
    bool theorem3 = false;
  } verdicts;

  FirTransferMatrix w_t = FirTransferMatrix::zero(1, 1);
  FirTransferMatrix t_tail = FirTransferMatrix::zero(1, 1);
  FirTransferMatrix u_star_v = FirTransferMatrix::zero(1, 1);
};

/// Largest horizon at which the closed-loop effects of the architecture's
/// distinct actuators stay mutually orthogonal: all pairwise cross-Grams of
/// the restricted maps below tol.  Saturates at the cap.
struct MixingTime {
  int tau = 0;
  bool saturated = false;
};

inline MixingTime mixing_time(const ModelMatchingModel& model,
                              const std::vector<int>& m_star_rows,
                              const TapSpec& order, double tol = 1e-9,
                              int cap = 200) {
  if (m_star_rows.empty())
    throw std::invalid_argument("mixing_time: empty architecture");
  const Eigen::Index nu = model.u_rows(), ny = model.y_rows();
  Matrix bop = model.column_operator(cap, order);
  // cumulative per-pair Grams over output taps; horizon t uses taps 0..t
  const size_t npairs = m_star_rows.size() * m_star_rows.size();
  std::vector<Matrix> grams(npairs,
                            Matrix::Zero(order.count, order.count));
  auto cols_of = [&](int r) {
    std::vector<Eigen::Index> cols;
    for (int j = 0; j < order.count; ++j)
      cols.push_back(static_cast<Eigen::Index>(j) * nu + r);
    return cols;
  };
  std::vector<std::vector<Eigen::Index>> cols;
  for (int r : m_star_rows) cols.push_back(cols_of(r));
  MixingTime result;
  for (int t = 0; t <= cap; ++t) {
    // add output tap t's block rows
    for (size_t a = 0; a < cols.size(); ++a) {
      for (size_t b = 0; b < cols.size(); ++b) {
        Matrix ra(ny, order.count), rb(ny, order.count);
        for (int j = 0; j < order.count; ++j) {
          ra.col(j) = bop.block(t * ny, cols[a][j], ny, 1);
          rb.col(j) = bop.block(t * ny, cols[b][j], ny, 1);
        }
        grams[a * cols.size() + b] += ra.transpose() * rb;
      }
    }
    if (t < 1) continue;
    bool ortho = true;
    for (size_t a = 0; a < cols.size() && ortho; ++a)
      for (size_t b = 0; b < cols.size() && ortho; ++b)
        if (a != b &&
            grams[a * cols.size() + b].cwiseAbs().maxCoeff() > tol)
          ortho = false;
    if (ortho) result.tau = t;
  }
  result.saturated = result.tau == cap;
  return result;
}

namespace detail {

/// Pairwise extreme singular values of the group-restricted map Grams.
struct GroupGrams {
  std::vector<std::vector<double>> sigma_max;  // [a][b]
  std::vector<double> sigma_min;               // diagonal blocks
};

inline GroupGrams group_grams(const ClosedLoopMap& map,
                              const GroupStructure& pen) {
  const size_t n = pen.groups.size();
  GroupGrams g;
  g.sigma_max.assign(n, std::vector<double>(n, 0.0));
  g.sigma_min.assign(n, 0.0);
  std::vector<Matrix> blocks(n);
  for (size_t a = 0; a < n; ++a) {
    blocks[a].resize(map.mat.rows(),
                     static_cast<Eigen::Index>(pen.groups[a].size()));
    for (size_t i = 0; i < pen.groups[a].size(); ++i)
      blocks[a].col(i) = map.mat.col(pen.groups[a][i]);
  }
  for (size_t a = 0; a < n; ++a) {
    for (size_t b = a; b < n; ++b) {
      Matrix gram = blocks[a].transpose() * blocks[b];
      Eigen::JacobiSVD<Matrix> svd(gram);
      const auto& s = svd.singularValues();
      const double smax = s.size() ? s(0) : 0.0;
      g.sigma_max[a][b] = g.sigma_max[b][a] = smax;
      if (a == b) g.sigma_min[a] = s.size() ? s(s.size() - 1) : 0.0;
    }
  }
  return g;
}

}  // namespace detail

/// Exact minimum restricted gain below the mixing time:
/// rho + min over architecture groups of sigma_min of the group Gram.
inline double alpha_exact_small_t(const ClosedLoopMap& map,
                                  const GroupStructure& pen,
                                  const std::vector<int>& m_star, double rho) {
  if (m_star.empty())
    throw std::invalid_argument("alpha_exact_small_t: empty architecture");
  detail::GroupGrams g = detail::group_grams(map, pen);
  double mn = std::numeric_limits<double>::infinity();
  for (int a : m_star) mn = std::min(mn, g.sigma_min[a]);
  return rho + mn;
}

/// Lower bound on the restricted injectivity gain by exact subset
/// enumeration: min over nonempty subsets of the architecture of the best
/// diagonally-dominant margin.  Exponential in |m_star|; capped.
inline double gamma_lower(const detail::GroupGrams& g,
                          const std::vector<int>& m_star,
                          int enumeration_cap = 15) {
  if (static_cast<int>(m_star.size()) > enumeration_cap)
    throw EnumerationCapError("gamma_lower: architecture above subset cap");
  double best = std::numeric_limits<double>::infinity();
  const size_t n = m_star.size();
  for (unsigned long long bits = 1; bits < (1ull << n); ++bits) {
    double margin = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i) {
      if (!(bits & (1ull << i))) continue;
      double v = g.sigma_min[m_star[i]];
      for (size_t j = 0; j < n; ++j)
        if (j != i && (bits & (1ull << j)))
          v -= g.sigma_max[m_star[i]][m_star[j]];
      margin = std::max(margin, v);
    }
    best = std::min(best, margin);
  }
  return best;
}

/// Upper bound on the cross-coherence gain: max over out-of-architecture
/// groups of the summed cross-Gram spectral norms against the architecture.
inline double beta_upper(const detail::GroupGrams& g,
                         const std::vector<int>& m_star, size_t n_groups) {
  std::vector<char> in(n_groups, 0);
  for (int a : m_star) in.at(a) = 1;
  double best = 0.0;
  for (size_t a = 0; a < n_groups; ++a) {
    if (in[a]) continue;
    double sum = 0.0;
    for (int b : m_star) sum += g.sigma_max[a][b];
    best = std::max(best, sum);
  }
  return best;
}

struct RfdNoise {
  double in = 0.0;
  double out = 0.0;
  double eta = 0.0;
};

/// RFD noise level: the residual-plus-tail FIR back-projected through the
/// map's adjoint, measured in the dual norm on and off the architecture.
inline RfdNoise rfd_noise(const ClosedLoopMap& map, const GroupStructure& pen,
                          const std::vector<int>& m_star,
                          const FirTransferMatrix& w_t,
                          const FirTransferMatrix& t_tail) {
  FirTransferMatrix g = map.apply_adjoint(add(w_t, t_tail));
  Vector x = vectorize(g, map.input);
  std::vector<char> in(pen.groups.size(), 0);
  for (int a : m_star) in.at(a) = 1;
  RfdNoise n;
  for (size_t gi = 0; gi < pen.groups.size(); ++gi) {
    const double v = pen.weights[gi] * detail::group_norm(x, pen.groups[gi]);
    if (in[gi])
      n.in = std::max(n.in, v);
    else
      n.out = std::max(n.out, v);
  }
  n.eta = n.in + n.out;
  return n;
}

/// Per-group signal-to-noise ratios of a truncated reference controller.
inline std::vector<double> snr_values(const FirTransferMatrix& u_star_v,
                                      const GroupStructure& pen,
                                      const std::vector<int>& m_star,
                                      double eta) {
  Vector x = vectorize(u_star_v, pen.layout);
  std::vector<double> out;
  for (int a : m_star) {
    const double nrm = detail::group_norm(x, pen.groups.at(a));
    if (eta > 0.0)
      out.push_back(nrm / eta);
    else
      out.push_back(nrm > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  }
  return out;
}

struct LambdaThresholds {
  double sufficient = 0.0;
  std::vector<double> group_upper;
  std::optional<std::pair<double, double>> interval;
  double error_bound = 0.0;
};

/// Regularization-weight thresholds: the sufficient lower threshold for
/// support containment, per-group upper limits for each architecture group
/// to stay active, the open interval on which the support is recovered
/// exactly, and the dual-norm error bound at the chosen weight.
inline LambdaThresholds lambda_thresholds(double nu, double noise_in,
                                          double noise_out, double rho,
                                          double dual_u_star_v,
                                          double alpha_eff,
                                          const std::vector<double>& mu_groups,
                                          double mu, double lambda_used) {
  LambdaThresholds t;
  t.sufficient = nu / (1.0 - nu) * (noise_in + rho * dual_u_star_v) +
                 noise_out / (1.0 - nu);
  for (double m : mu_groups)
    t.group_upper.push_back(alpha_eff * m - noise_in - rho * dual_u_star_v);
  const double hi = alpha_eff * mu - noise_in - rho * dual_u_star_v;
  if (hi > t.sufficient)
    t.interval = std::make_pair(t.sufficient, hi);
  t.error_bound =
      (lambda_used + noise_in + rho * dual_u_star_v) / alpha_eff;
  return t;
}

/// SNR sufficient condition at rho = 0 with the regularization weight at its
/// threshold (infinitesimal excess): every architecture group must clear
/// 1 / (gamma - beta).
inline bool theorem3_check(const std::vector<double>& snr, double gamma,
                           double beta) {
  if (!(gamma > beta)) return false;
  const double thr = 1.0 / (gamma - beta);
  for (double s : snr)
    if (!(s > thr)) return false;
  return true;
}

/// Assembles the full certificate for a candidate architecture.  The
/// reference controller defaults to the restricted least squares on the
/// architecture at the reference horizon with the model's own control
/// weight; certification itself runs at the given rho (typically 0).
inline RecoveryCertificate build_certificate(
    const ModelMatchingModel& model, const std::vector<int>& m_star_rows,
    int t, const TapSpec& order, double rho,
    std::optional<double> lambda = std::nullopt,
    std::optional<FirTransferMatrix> u_star_ref = std::nullopt,
    std::optional<int> t_ref_override = std::nullopt, int mixing_cap = 200) {
  RecoveryCertificate cert;
  cert.t = t;
  cert.order = order;
  cert.rho = rho;
  cert.m_star = m_star_rows;

  const int t_ref = t_ref_override
                        ? *t_ref_override
                        : reference_horizon(model.decay_rate());
  const int t_out = t_ref + reference_horizon(model.decay_rate()) / 2;
  FirTransferMatrix u_star = FirTransferMatrix::zero(1, 1);
  if (u_star_ref) {
    u_star = *u_star_ref;
  } else {
    BoolMatrix pat =
        BoolMatrix::Constant(model.u_rows(), model.u_cols(), false);
    for (int r : m_star_rows) pat.row(r).setConstant(true);
    u_star = long_horizon_restricted_ls(model, model.rho_u(),
                                        SparsityMask({}, pat), t_ref, 0, t_out)
                 .u;
  }

  cert.w_t = closed_loop_response(u_star, model, t);
  auto [u_v, tail] = truncate_and_tail(u_star, model, t, order);
  cert.u_star_v = u_v;
  cert.t_tail = tail;

  AssembledProblem ap = model.assemble(t, order);
  GroupStructure pen = actuator_structure(ap.map.input);
  MixingTime mt = mixing_time(model, m_star_rows, order, 1e-9, mixing_cap);
  cert.tau = mt.tau;
  cert.tau_saturated = mt.saturated;

  detail::GroupGrams grams = detail::group_grams(ap.map, pen);
  cert.gamma = gamma_lower(grams, m_star_rows);
  cert.beta_upper = beta_upper(grams, m_star_rows, pen.groups.size());
  if (t <= cert.tau)
    cert.alpha_exact = alpha_exact_small_t(ap.map, pen, m_star_rows, rho);
  const double alpha_eff = rho + cert.gamma;
  cert.nu_upper = alpha_eff > 0.0
                      ? cert.beta_upper / alpha_eff
                      : std::numeric_limits<double>::infinity();

  RfdNoise noise = rfd_noise(ap.map, pen, m_star_rows, cert.w_t, cert.t_tail);
  cert.noise_in = noise.in;
  cert.noise_out = noise.out;
  cert.eta = noise.eta;

  Vector uv = vectorize(u_v, pen.layout);
  std::vector<double> mu_groups;
  cert.mu = std::numeric_limits<double>::infinity();
  for (int a : m_star_rows) {
    mu_groups.push_back(detail::group_norm(uv, pen.groups.at(a)));
    cert.mu = std::min(cert.mu, mu_groups.back());
  }
  cert.dual_u_star_v = eval_dual_norm(u_v, pen);
  cert.snr = snr_values(u_v, pen, m_star_rows, cert.eta);

  const bool identifiable = cert.nu_upper < 1.0 && alpha_eff > 0.0;
  cert.verdicts.assumption1 = identifiable;
  if (identifiable) {
    LambdaThresholds thr = lambda_thresholds(
        cert.nu_upper, cert.noise_in, cert.noise_out, rho, cert.dual_u_star_v,
        alpha_eff, mu_groups, cert.mu, 0.0);
    cert.lambda_sufficient = thr.sufficient;
    cert.lambda_group_upper = thr.group_upper;
    cert.lambda_interval = thr.interval;
    cert.lambda_used = lambda ? *lambda : thr.sufficient;
    cert.error_bound =
        (cert.lambda_used + cert.noise_in + rho * cert.dual_u_star_v) /
        alpha_eff;
    const double eps = 1e-12 * (1.0 + cert.lambda_sufficient);
    cert.verdicts.theorem2_support =
        cert.lambda_used >= cert.lambda_sufficient - eps;
    cert.verdicts.theorem2_per_group = cert.verdicts.theorem2_support;
    for (double up : cert.lambda_group_upper)
      if (!(cert.lambda_used < up)) cert.verdicts.theorem2_per_group = false;
    cert.verdicts.corollary1 = cert.lambda_interval.has_value();
  } else {
    // thresholds reported with false verdicts rather than an error
    cert.lambda_sufficient = std::numeric_limits<double>::infinity();
    cert.lambda_used = lambda ? *lambda : 0.0;
    cert.error_bound = std::numeric_limits<double>::infinity();
  }
  cert.verdicts.theorem3 =
      rho == 0.0 && theorem3_check(cert.snr, cert.gamma, cert.beta_upper);
  return cert;
}

}  // namespace rfd
