#pragma once

#include <optional>
#include <utility>

#include "rfd/linear_map.hpp"
#include "rfd/plant.hpp"

namespace rfd {

enum class ProblemSetting { kBasicLqr, kStateFeedback, kOutputFeedback };

/// Fully assembled finite-dimensional model-matching data at one
/// (horizon, order) pair: open-loop response Y^{<=t} and the dense map from
/// order-v Youla coefficients to the truncated closed-loop coefficients.
/// The objective downstream is uniformly
///   || Y - L(U) ||^2 + || F(U) ||^2 + rho ||U||^2 + 2 lambda Omega(U),
/// each builder absorbing its sign convention into L.
struct AssembledProblem {
  FirTransferMatrix y;
  ClosedLoopMap map;
  std::optional<ClosedLoopMap> control_map;  // output-feedback control cost
  ProblemSetting setting = ProblemSetting::kBasicLqr;
  int horizon_t = 0;
  TapSpec order;
  double rho_u = 0.0;
};

namespace detail {

inline std::vector<Matrix> matrix_powers(const Matrix& a, int count) {
  std::vector<Matrix> p;
  p.reserve(std::max(count, 1));
  p.push_back(Matrix::Identity(a.rows(), a.cols()));
  for (int k = 1; k < count; ++k) p.push_back(p.back() * a);
  return p;
}

inline FirTransferMatrix resolvent_fir(const Matrix& c,
                                       const std::vector<Matrix>& powers,
                                       const Matrix& b, int t, int delay) {
  std::vector<Matrix> taps;
  for (int k = 0; k <= t; ++k) {
    if (k < delay)
      taps.push_back(Matrix::Zero(c.rows(), b.cols()));
    else
      taps.push_back(c * powers[k - delay] * b);
  }
  return FirTransferMatrix(std::move(taps));
}

}  // namespace detail

/// A plant/setting pair that can assemble model-matching data at any
/// horizon and order.  One-sided settings (basic LQR, state feedback) also
/// expose the per-column block-Toeplitz operator used by the long-horizon
/// least-squares paths, where the map acts identically on every column of
/// the variable.
class ModelMatchingModel {
 public:
  /// Basic LQR regulation of an initial state xi:
  /// Y^(k) = C A^k xi, kernel taps H^(k) = C A^(k-1) B from k = 1, and the
  /// map is L = -(H * .) so the closed loop is Y - L(U) = Y + H*U.
  static ModelMatchingModel basic_lqr(const Matrix& a, const Matrix& b,
                                      const Matrix& c, const Vector& xi,
                                      double rho_u) {
    if (a.rows() != a.cols() || b.rows() != a.rows() || c.cols() != a.rows() ||
        xi.size() != a.rows())
      throw std::invalid_argument("basic_lqr: dimension mismatch");
    ModelMatchingModel m;
    m.setting_ = ProblemSetting::kBasicLqr;
    m.a_ = a;
    m.b_ = b;
    m.c_ = c;
    m.y_rhs_ = xi;
    m.rho_u_ = rho_u;
    m.sign_ = -1.0;
    m.y_delay_ = 0;  // Y^(k) = C A^k xi from k = 0
    m.h_delay_ = 1;  // H^(k) = C A^(k-1) B from k = 1
    return m;
  }

  /// H2 state feedback.  Requires the state-feedback pattern (C2 = I,
  /// D21 = 0), invertible B1 and stable A.  Both the open loop and the map
  /// carry the same two-tap leading delay,
  ///   Y^(k) = C1s A^(k-2) B1,  H^(k) = C1s A^(k-2) B2   (k >= 2),
  /// with C1s the state block of C1: in the transformed Youla coordinates
  /// the first controllable output tap sits alongside the first disturbance
  /// tap, the frame in which the recovery thresholds are computed.
  static ModelMatchingModel state_feedback(const GeneralizedPlant& p) {
    p.check_dimensions();
    if (!p.orthogonal())
      throw std::invalid_argument("state_feedback: orthogonality violated");
    if (p.C2.rows() != p.n() ||
        !(p.C2 - Matrix::Identity(p.n(), p.n())).isZero(1e-12))
      throw std::invalid_argument("state_feedback: requires C2 = I");
    if (p.D21.size() > 0 && p.D21.cwiseAbs().maxCoeff() > 1e-12)
      throw std::invalid_argument("state_feedback: requires D21 = 0");
    if (p.B1.rows() != p.B1.cols())
      throw std::invalid_argument("state_feedback: B1 must be square");
    if (condition_number(p.B1) > 1e12)
      throw std::invalid_argument("state_feedback: B1 numerically singular");
    if (!p.stable())
      throw std::invalid_argument("state_feedback: A must be stable");
    ModelMatchingModel m;
    m.setting_ = ProblemSetting::kStateFeedback;
    m.a_ = p.A;
    m.b_ = p.B2;
    auto srows = p.state_rows();
    Matrix c1s(static_cast<Eigen::Index>(srows.size()), p.n());
    for (size_t i = 0; i < srows.size(); ++i) c1s.row(i) = p.C1.row(srows[i]);
    m.c_ = c1s;
    m.y_rhs_ = p.B1;
    m.rho_u_ = p.rho_u;
    m.sign_ = 1.0;
    m.y_delay_ = 2;
    m.h_delay_ = 2;
    m.plant_ = p;
    return m;
  }

  /// Output feedback per the four-block decomposition: Y is the state/
  /// disturbance block of P11, the map is the two-sided state product
  /// P12s U P21s, and the control-cost map stacks
  /// [P12s U D21; D12 U P21s; D12 U D21].
  static ModelMatchingModel output_feedback(const GeneralizedPlant& p) {
    p.check_dimensions();
    if (!p.stable())
      throw std::invalid_argument("output_feedback: A must be stable");
    ModelMatchingModel m;
    m.setting_ = ProblemSetting::kOutputFeedback;
    m.a_ = p.A;
    m.b_ = p.B2;
    auto srows = p.state_rows();
    Matrix c1s(static_cast<Eigen::Index>(srows.size()), p.n());
    for (size_t i = 0; i < srows.size(); ++i) c1s.row(i) = p.C1.row(srows[i]);
    m.c_ = c1s;
    m.y_rhs_ = p.B1;
    m.rho_u_ = p.rho_u;
    m.sign_ = 1.0;
    m.y_delay_ = 1;
    m.h_delay_ = 1;
    m.plant_ = p;
    return m;
  }

  ProblemSetting setting() const { return setting_; }
  bool one_sided() const { return setting_ != ProblemSetting::kOutputFeedback; }
  double rho_u() const { return rho_u_; }
  double map_sign() const { return sign_; }
  Eigen::Index u_rows() const { return b_.cols(); }
  Eigen::Index u_cols() const {
    if (setting_ == ProblemSetting::kBasicLqr) return 1;
    if (setting_ == ProblemSetting::kStateFeedback) return y_rhs_.cols();
    return plant_->n_m();
  }
  Eigen::Index y_rows() const { return c_.rows(); }
  Eigen::Index y_cols() const { return y_rhs_.cols(); }
  double decay_rate() const { return spectral_radius(a_); }
  const std::optional<GeneralizedPlant>& plant() const { return plant_; }

  /// Open-loop response taps 0..t (state component).
  FirTransferMatrix open_loop(int t) const {
    auto pw = detail::matrix_powers(a_, t + 1);
    return detail::resolvent_fir(c_, pw, y_rhs_, t, y_delay_);
  }

  /// Taps of the one-sided convolution kernel H (signless) to degree t.
  FirTransferMatrix kernel(int t) const {
    if (!one_sided())
      throw std::logic_error("kernel: two-sided setting");
    auto pw = detail::matrix_powers(a_, t + 1);
    return detail::resolvent_fir(c_, pw, b_, t, h_delay_);
  }

  /// Per-column operator of the one-sided map: stacked output taps 0..t by
  /// stacked stored input taps, sign included.  The full map is this block
  /// acting independently on every column of the variable.
  Matrix column_operator(int t, const TapSpec& order) const {
    FirTransferMatrix h = kernel(t);
    const Eigen::Index ny = y_rows(), nu = u_rows();
    Matrix m = Matrix::Zero((t + 1) * ny, order.count * nu);
    for (int j = 0; j < order.count; ++j) {
      const int jp = order.first_tap + j;
      for (int k = jp; k <= t; ++k)
        m.block(k * ny, j * nu, ny, nu) = sign_ * h.tap(k - jp);
    }
    return m;
  }

  /// Dense materialized problem at (t, order).
  AssembledProblem assemble(int t, const TapSpec& order) const {
    if (one_sided()) {
      FirTransferMatrix h = kernel(t);
      ClosedLoopMap map = materialize_map(
          h, FirTransferMatrix::identity(u_cols()), t, order, sign_);
      return AssembledProblem{open_loop(t), std::move(map), std::nullopt,
                              setting_, t, order, rho_u_};
    }
    const GeneralizedPlant& p = *plant_;
    auto pw = detail::matrix_powers(a_, t + 1);
    FirTransferMatrix p12s = detail::resolvent_fir(c_, pw, b_, t, 1);
    FirTransferMatrix p21s = detail::resolvent_fir(p.C2, pw, p.B1, t, 1);
    ClosedLoopMap map = materialize_map(p12s, p21s, t, order, 1.0);
    FirTransferMatrix d12({p.D12});
    FirTransferMatrix d21({p.D21});
    ClosedLoopMap f1 = materialize_map(p12s, d21, t, order, 1.0);
    ClosedLoopMap f2 = materialize_map(d12, p21s, t, order, 1.0);
    const int t3 = std::min(t, order.first_tap + order.count - 1);
    ClosedLoopMap f3 = materialize_map(d12, d21, t3, order, 1.0);
    Matrix fmat(f1.mat.rows() + f2.mat.rows() + f3.mat.rows(), f1.mat.cols());
    fmat << f1.mat, f2.mat, f3.mat;
    CoordLayout fout{1, fmat.rows(), 1, 0};
    ClosedLoopMap control(std::move(fmat), f1.input, fout);
    return AssembledProblem{open_loop(t), std::move(map), std::move(control),
                            setting_, t, order, rho_u_};
  }

  AssembledProblem assemble(int t, int v, TapConvention conv) const {
    return assemble(t, tap_spec_for_order(v, conv));
  }

  /// Selected columns of the stacked smooth operator [map; control_map] at
  /// (t, order), plus the matching right-hand side; the restricted solves at
  /// evaluation horizons work on these columns directly.
  std::pair<Matrix, Vector> smooth_columns(
      int t, const TapSpec& order,
      const std::vector<Eigen::Index>& coords) const {
    if (one_sided()) {
      FirTransferMatrix h = kernel(t);
      Matrix m = materialize_columns(h, FirTransferMatrix::identity(u_cols()),
                                     t, order, sign_, coords);
      CoordLayout out{t + 1, y_rows(), y_cols(), 0};
      return {std::move(m), vectorize(open_loop(t), out)};
    }
    const GeneralizedPlant& p = *plant_;
    auto pw = detail::matrix_powers(a_, t + 1);
    FirTransferMatrix p12s = detail::resolvent_fir(c_, pw, b_, t, 1);
    FirTransferMatrix p21s = detail::resolvent_fir(p.C2, pw, p.B1, t, 1);
    FirTransferMatrix d12({p.D12});
    FirTransferMatrix d21({p.D21});
    Matrix m0 = materialize_columns(p12s, p21s, t, order, 1.0, coords);
    Matrix m1 = materialize_columns(p12s, d21, t, order, 1.0, coords);
    Matrix m2 = materialize_columns(d12, p21s, t, order, 1.0, coords);
    const int t3 = std::min(t, order.first_tap + order.count - 1);
    Matrix m3 = materialize_columns(d12, d21, t3, order, 1.0, coords);
    Matrix m(m0.rows() + m1.rows() + m2.rows() + m3.rows(),
             static_cast<Eigen::Index>(coords.size()));
    m << m0, m1, m2, m3;
    CoordLayout out{t + 1, y_rows(), y_cols(), 0};
    Vector b = Vector::Zero(m.rows());
    b.head(m0.rows()) = vectorize(open_loop(t), out);
    return {std::move(m), std::move(b)};
  }

  /// Applies the horizon-t map to a full-window FIR variable (stored taps
  /// starting at first_tap), without materializing in the one-sided case.
  FirTransferMatrix apply_window(const FirTransferMatrix& u, int t,
                                 int first_tap) const {
    const int window = u.n_taps();
    if (one_sided()) {
      Matrix block = column_operator(t, TapSpec{window, first_tap});
      const Eigen::Index ny = y_rows(), nu = u_rows();
      Matrix ustack(window * nu, u.cols());
      for (int j = 0; j < window; ++j)
        ustack.middleRows(j * nu, nu) = u.tap(j);
      Matrix out = block * ustack;
      std::vector<Matrix> taps;
      for (int k = 0; k <= t; ++k)
        taps.push_back(out.middleRows(k * ny, ny));
      return FirTransferMatrix(std::move(taps));
    }
    AssembledProblem ap = assemble(t, TapSpec{window, first_tap});
    return ap.map.apply(u);
  }

 private:
  ProblemSetting setting_ = ProblemSetting::kBasicLqr;
  Matrix a_, b_, c_, y_rhs_;
  std::optional<GeneralizedPlant> plant_;
  double rho_u_ = 0.0, sign_ = 1.0;
  int y_delay_ = 0, h_delay_ = 1;
};

inline AssembledProblem build_basic_lqr(
    const Matrix& a, const Matrix& b, const Matrix& c, const Vector& xi,
    double rho_u, int t, int v,
    TapConvention conv = TapConvention::kZeroToVMinus1) {
  return ModelMatchingModel::basic_lqr(a, b, c, xi, rho_u).assemble(t, v, conv);
}

inline AssembledProblem build_state_feedback(
    const GeneralizedPlant& p, int t, int v,
    TapConvention conv = TapConvention::kZeroToVMinus1) {
  return ModelMatchingModel::state_feedback(p).assemble(t, v, conv);
}

inline AssembledProblem build_output_feedback(
    const GeneralizedPlant& p, int t, int v,
    TapConvention conv = TapConvention::kZeroToVMinus1) {
  return ModelMatchingModel::output_feedback(p).assemble(t, v, conv);
}

/// Order-v truncation of a reference controller plus the tail term at
/// horizon t: the contribution of the coefficients the order-v window
/// discards, entering the finite-order model as extra noise,
/// T^{<=t,v} = L^{<=t,t}(U*^{<=v} - U*^{<=t}).
inline std::pair<FirTransferMatrix, FirTransferMatrix> truncate_and_tail(
    const FirTransferMatrix& u_star, const ModelMatchingModel& model, int t,
    const TapSpec& order) {
  const int window = std::max(t, order.count);
  if (u_star.n_taps() < window)
    throw std::invalid_argument("truncate_and_tail: reference too short");
  FirTransferMatrix u_v = u_star.truncated(order.count);
  FirTransferMatrix diff =
      add(u_v.truncated(window), u_star.truncated(window), -1.0);
  FirTransferMatrix tail = model.apply_window(diff, t, order.first_tap);
  return {std::move(u_v), std::move(tail)};
}

/// Closed-loop state response of a reference controller at horizon t,
/// W^{<=t} = Y^{<=t} - L^{<=t,.}(U*).
inline FirTransferMatrix closed_loop_response(const FirTransferMatrix& u_star,
                                              const ModelMatchingModel& model,
                                              int t, int first_tap = 0) {
  FirTransferMatrix lu = model.apply_window(u_star, t, first_tap);
  return add(model.open_loop(t), lu, -1.0);
}

/// Controller impulse response K = (I + U P22)^-1 U to the given horizon by
/// recursive FIR deconvolution.  For the state-feedback setting the variable
/// is first pulled back through the invertible parameterization factor.
inline FirTransferMatrix recover_controller(const FirTransferMatrix& u,
                                            const GeneralizedPlant& p,
                                            int horizon,
                                            ProblemSetting setting) {
  if (horizon + 1 < u.n_taps())
    throw std::invalid_argument("recover_controller: horizon below degree");
  auto pw = detail::matrix_powers(p.A, horizon + 1);
  FirTransferMatrix v = u;
  if (setting == ProblemSetting::kStateFeedback) {
    if (condition_number(p.B1) > 1e12)
      throw std::invalid_argument("recover_controller: singular leading tap");
    // right-multiply by the inverse parameterization factor, a two-tap FIR
    Matrix b1inv = p.B1.inverse();
    std::vector<Matrix> taps;
    for (int k = 0; k < u.n_taps() + 1; ++k)
      taps.push_back(u.tap_or_zero(k) * b1inv -
                     u.tap_or_zero(k - 1) * b1inv * p.A);
    v = FirTransferMatrix(std::move(taps));
  }
  // P22 = C2 (zI - A)^-1 B2, strictly proper
  std::vector<Matrix> p22taps;
  p22taps.push_back(Matrix::Zero(p.n_m(), p.n_a()));
  for (int k = 1; k <= horizon; ++k) p22taps.push_back(p.C2 * pw[k - 1] * p.B2);
  FirTransferMatrix p22(std::move(p22taps));
  FirTransferMatrix g = convolve(v, p22);
  // K solves (I + U P22) * K = V tap by tap
  const Eigen::Index na = v.rows();
  Matrix g0 = Matrix::Identity(na, na) + g.tap(0);
  if (condition_number(g0) > 1e12)
    throw std::invalid_argument("recover_controller: singular leading tap");
  Matrix g0inv = g0.inverse();
  std::vector<Matrix> k_taps;
  for (int k = 0; k <= horizon; ++k) {
    Matrix rhs = v.tap_or_zero(k);
    for (int j = 1; j <= std::min(k, g.degree()); ++j)
      rhs -= g.tap(j) * k_taps[k - j];
    k_taps.push_back(g0inv * rhs);
  }
  return FirTransferMatrix(std::move(k_taps));
}

}  // namespace rfd
