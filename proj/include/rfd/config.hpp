#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "rfd/builtin.hpp"
#include "rfd/linear_map.hpp"
#include "rfd/plant.hpp"

namespace rfd {

using Json = nlohmann::json;

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class PenaltyKind {
  kActuator,
  kSensor,
  kActuatorSensor,
  kComm,
  kActSnsComm  // joint sum of the two
};

/// Parsed run configuration.  Plant source is exactly one of a builtin name
/// or inline matrices; supports and node ids are one-indexed externally.
struct RunConfig {
  int schema_version = 1;

  // plant
  std::optional<std::string> builtin;  // "chain10" | "network11"
  std::uint64_t seed = 0;
  std::optional<Json> matrices;  // inline state-space data

  // problem
  std::string setting = "state-feedback";
  int horizon_t = 4;
  int order_v = 1;
  double rho = 0.0;
  std::optional<double> rho_u_override;
  std::vector<double> lambdas;  // normalized to a sorted grid
  TapConvention convention = TapConvention::kZeroToVMinus1;

  // penalty
  PenaltyKind penalty = PenaltyKind::kActuator;
  double theta = 0.75;
  int k_a = 1, k_s = 1;
  std::optional<Json> comm_graph;  // {"adjacency": [[..]], "added_links": [[i,j]..]}
  bool subspace_from_comm = false;

  // outputs
  std::string out_dir = ".";
  std::string format = "both";  // json | csv | both

  // certification
  bool certify_enabled = false;
  std::optional<std::vector<int>> m_star;  // one-indexed rows
  std::optional<int> t_ref;
  std::optional<double> cert_lambda;
  int cert_s = 2;  // oracle sparsity when m_star is not supplied

  // step-2 evaluation horizons (defaults follow the decay rule, capped)
  std::optional<int> eval_order;
  std::optional<int> eval_t_out;

  // solver knobs
  double solver_tol = 1e-8;
  int solver_max_iters = 200000;
};

namespace detail {

inline Matrix parse_matrix(const Json& j, const std::string& name) {
  if (!j.is_array() || j.empty() || !j[0].is_array())
    throw ConfigError("matrices." + name + ": expected a nested array");
  const size_t rows = j.size(), cols = j[0].size();
  Matrix m(rows, cols);
  for (size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols)
      throw ConfigError("matrices." + name + ": ragged rows");
    for (size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

inline Json emit_matrix(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

inline TapConvention parse_convention(const std::string& s) {
  if (s == "v-taps-from-0") return TapConvention::kZeroToVMinus1;
  if (s == "v-taps-from-1") return TapConvention::kOneToV;
  if (s == "v-plus-1-taps") return TapConvention::kZeroToV;
  throw ConfigError("problem.tap_convention: unknown value '" + s + "'");
}

inline std::string convention_name(TapConvention c) {
  switch (c) {
    case TapConvention::kZeroToVMinus1: return "v-taps-from-0";
    case TapConvention::kOneToV: return "v-taps-from-1";
    case TapConvention::kZeroToV: return "v-plus-1-taps";
  }
  return "v-taps-from-0";
}

inline PenaltyKind parse_penalty(const std::string& s) {
  if (s == "actuator") return PenaltyKind::kActuator;
  if (s == "sensor") return PenaltyKind::kSensor;
  if (s == "actuator-sensor") return PenaltyKind::kActuatorSensor;
  if (s == "comm") return PenaltyKind::kComm;
  if (s == "act-sns-comm") return PenaltyKind::kActSnsComm;
  throw ConfigError("penalty.kind: unknown value '" + s + "'");
}

inline std::string penalty_name(PenaltyKind k) {
  switch (k) {
    case PenaltyKind::kActuator: return "actuator";
    case PenaltyKind::kSensor: return "sensor";
    case PenaltyKind::kActuatorSensor: return "actuator-sensor";
    case PenaltyKind::kComm: return "comm";
    case PenaltyKind::kActSnsComm: return "act-sns-comm";
  }
  return "actuator";
}

}  // namespace detail

inline RunConfig parse_config(const Json& j) {
  RunConfig c;
  if (j.contains("schema_version"))
    c.schema_version = j["schema_version"].get<int>();
  if (c.schema_version != 1)
    throw ConfigError("schema_version: only version 1 is supported");

  if (!j.contains("plant")) throw ConfigError("plant: missing");
  const Json& pj = j["plant"];
  const bool has_builtin = pj.contains("builtin");
  const bool has_matrices = pj.contains("matrices");
  if (has_builtin == has_matrices)
    throw ConfigError("plant: exactly one of builtin/matrices required");
  if (has_builtin) {
    c.builtin = pj["builtin"].get<std::string>();
    if (*c.builtin != "chain10" && *c.builtin != "network11")
      throw ConfigError("plant.builtin: unknown plant '" + *c.builtin + "'");
    if (pj.contains("seed")) c.seed = pj["seed"].get<std::uint64_t>();
  } else {
    c.matrices = pj["matrices"];
  }

  if (j.contains("problem")) {
    const Json& q = j["problem"];
    if (q.contains("setting")) c.setting = q["setting"].get<std::string>();
    if (c.setting != "basic-lqr" && c.setting != "state-feedback" &&
        c.setting != "output-feedback")
      throw ConfigError("problem.setting: unknown value '" + c.setting + "'");
    if (q.contains("horizon_t")) c.horizon_t = q["horizon_t"].get<int>();
    if (q.contains("order_v")) c.order_v = q["order_v"].get<int>();
    if (c.horizon_t < 1 || c.order_v < 1 || c.order_v > c.horizon_t)
      throw ConfigError("problem: need 1 <= order_v <= horizon_t");
    if (q.contains("rho")) c.rho = q["rho"].get<double>();
    if (c.rho < 0.0) throw ConfigError("problem.rho: negative");
    if (q.contains("rho_u")) c.rho_u_override = q["rho_u"].get<double>();
    if (q.contains("lambda")) {
      if (q["lambda"].is_array())
        c.lambdas = q["lambda"].get<std::vector<double>>();
      else
        c.lambdas = {q["lambda"].get<double>()};
    }
    for (double l : c.lambdas)
      if (l < 0.0) throw ConfigError("problem.lambda: negative entry");
    std::sort(c.lambdas.begin(), c.lambdas.end(), std::greater<double>());
    if (q.contains("tap_convention"))
      c.convention =
          detail::parse_convention(q["tap_convention"].get<std::string>());
  }

  if (j.contains("penalty")) {
    const Json& q = j["penalty"];
    if (q.contains("kind"))
      c.penalty = detail::parse_penalty(q["kind"].get<std::string>());
    if (q.contains("theta")) c.theta = q["theta"].get<double>();
    if (c.theta < 0.0 || c.theta > 1.0)
      throw ConfigError("penalty.theta: must lie in [0,1]");
    if (q.contains("k_a")) c.k_a = q["k_a"].get<int>();
    if (q.contains("k_s")) c.k_s = q["k_s"].get<int>();
    if (q.contains("comm")) c.comm_graph = q["comm"];
  }
  if (j.contains("subspace") && !j["subspace"].is_null()) {
    const Json& q = j["subspace"];
    if (q.contains("from_comm_graph"))
      c.subspace_from_comm = q["from_comm_graph"].get<bool>();
  }

  if (j.contains("outputs")) {
    const Json& q = j["outputs"];
    if (q.contains("dir")) c.out_dir = q["dir"].get<std::string>();
    if (q.contains("format")) c.format = q["format"].get<std::string>();
    if (c.format != "json" && c.format != "csv" && c.format != "both")
      throw ConfigError("outputs.format: json, csv or both");
  }

  if (j.contains("certification")) {
    const Json& q = j["certification"];
    if (q.contains("enabled")) c.certify_enabled = q["enabled"].get<bool>();
    if (q.contains("m_star") && !q["m_star"].is_null())
      c.m_star = q["m_star"].get<std::vector<int>>();
    if (q.contains("t_ref") && !q["t_ref"].is_null())
      c.t_ref = q["t_ref"].get<int>();
    if (q.contains("lambda") && !q["lambda"].is_null())
      c.cert_lambda = q["lambda"].get<double>();
    if (q.contains("s")) c.cert_s = q["s"].get<int>();
  }

  if (j.contains("eval")) {
    const Json& q = j["eval"];
    if (q.contains("order_taps") && !q["order_taps"].is_null())
      c.eval_order = q["order_taps"].get<int>();
    if (q.contains("t_out") && !q["t_out"].is_null())
      c.eval_t_out = q["t_out"].get<int>();
  }
  if (j.contains("solver")) {
    const Json& q = j["solver"];
    if (q.contains("tol")) c.solver_tol = q["tol"].get<double>();
    if (q.contains("max_iters")) c.solver_max_iters = q["max_iters"].get<int>();
    if (c.solver_tol <= 0.0 || c.solver_max_iters < 1)
      throw ConfigError("solver: tol must be positive, max_iters >= 1");
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  Json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_config(j);
}

inline Json emit_config(const RunConfig& c) {
  Json j;
  j["schema_version"] = c.schema_version;
  if (c.builtin) {
    j["plant"]["builtin"] = *c.builtin;
    j["plant"]["seed"] = c.seed;
  } else if (c.matrices) {
    j["plant"]["matrices"] = *c.matrices;
  }
  j["problem"] = {{"setting", c.setting},
                  {"horizon_t", c.horizon_t},
                  {"order_v", c.order_v},
                  {"rho", c.rho},
                  {"lambda", c.lambdas},
                  {"tap_convention", detail::convention_name(c.convention)}};
  if (c.rho_u_override) j["problem"]["rho_u"] = *c.rho_u_override;
  j["penalty"] = {{"kind", detail::penalty_name(c.penalty)},
                  {"theta", c.theta},
                  {"k_a", c.k_a},
                  {"k_s", c.k_s}};
  if (c.comm_graph) j["penalty"]["comm"] = *c.comm_graph;
  j["subspace"] = {{"from_comm_graph", c.subspace_from_comm}};
  j["outputs"] = {{"dir", c.out_dir}, {"format", c.format}};
  j["certification"] = {{"enabled", c.certify_enabled}, {"s", c.cert_s}};
  if (c.m_star) j["certification"]["m_star"] = *c.m_star;
  if (c.t_ref) j["certification"]["t_ref"] = *c.t_ref;
  if (c.cert_lambda) j["certification"]["lambda"] = *c.cert_lambda;
  if (c.eval_order || c.eval_t_out) {
    j["eval"] = Json::object();
    if (c.eval_order) j["eval"]["order_taps"] = *c.eval_order;
    if (c.eval_t_out) j["eval"]["t_out"] = *c.eval_t_out;
  }
  j["solver"] = {{"tol", c.solver_tol}, {"max_iters", c.solver_max_iters}};
  return j;
}

}  // namespace rfd
