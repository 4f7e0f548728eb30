#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>

#include "rfd/certify.hpp"
#include "rfd/config.hpp"

namespace rfd {

/// One tradeoff row per regularization weight plus optional certificate
/// blocks; serialized to JSON (full precision) and CSV (12 significant
/// digits) with identical numeric content.
struct Report {
  Json provenance;
  std::vector<SweepRow> rows;
  std::vector<Json> certificates;
  std::optional<Json> oracle;
};

namespace detail {

inline std::string csv_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline std::string support_label(const std::vector<int>& support) {
  std::string s;
  for (size_t i = 0; i < support.size(); ++i) {
    if (i) s += "|";
    s += std::to_string(support[i] + 1);  // one-indexed externally
  }
  return s.empty() ? "-" : s;
}

inline double sanitize(double v) {
  // JSON has no inf/nan literals; report a large sentinel instead
  if (std::isnan(v)) return -1.0;
  if (std::isinf(v)) return v > 0 ? 1e308 : -1e308;
  return v;
}

}  // namespace detail

inline Json sweep_row_json(const SweepRow& r) {
  Json j;
  j["lambda"] = r.lambda;
  Json sup = Json::array();
  for (int g : r.support) sup.push_back(g + 1);
  j["support"] = sup;
  j["support_label"] = detail::support_label(r.support);
  j["n_actuators"] = r.n_actuators;
  j["n_sensors"] = r.n_sensors;
  j["n_links"] = r.n_links;
  j["closed_loop_h2"] = r.closed_loop_h2;
  j["relative_degradation_pct"] = r.relative_degradation_pct;
  j["objective"] = r.objective;
  j["kkt_residual"] = r.kkt_residual;
  j["converged"] = r.converged;
  return j;
}

inline Json certificate_json(const RecoveryCertificate& c) {
  Json j;
  j["t"] = c.t;
  j["order_taps"] = c.order.count;
  j["first_tap"] = c.order.first_tap;
  j["rho"] = c.rho;
  Json ms = Json::array();
  for (int g : c.m_star) ms.push_back(g + 1);
  j["m_star"] = ms;
  j["tau"] = c.tau;
  j["tau_saturated"] = c.tau_saturated;
  if (c.alpha_exact) j["alpha_exact"] = *c.alpha_exact;
  j["gamma"] = c.gamma;
  j["beta_upper"] = c.beta_upper;
  j["nu_upper"] = detail::sanitize(c.nu_upper);
  j["noise_in"] = c.noise_in;
  j["noise_out"] = c.noise_out;
  j["eta"] = c.eta;
  Json snr = Json::array();
  for (double s : c.snr) snr.push_back(detail::sanitize(s));
  j["snr"] = snr;
  j["mu"] = c.mu;
  j["lambda_sufficient"] = detail::sanitize(c.lambda_sufficient);
  Json uppers = Json::array();
  for (double u : c.lambda_group_upper) uppers.push_back(u);
  j["lambda_group_upper"] = uppers;
  if (c.lambda_interval) {
    j["lambda_interval"] = {c.lambda_interval->first,
                            c.lambda_interval->second};
  } else {
    j["lambda_interval"] = nullptr;
  }
  j["lambda_used"] = c.lambda_used;
  j["error_bound"] = detail::sanitize(c.error_bound);
  j["verdicts"] = {{"assumption1", c.verdicts.assumption1},
                   {"theorem2_support", c.verdicts.theorem2_support},
                   {"theorem2_per_group", c.verdicts.theorem2_per_group},
                   {"corollary1", c.verdicts.corollary1},
                   {"theorem3", c.verdicts.theorem3}};
  return j;
}

inline Json report_json(const Report& r) {
  Json j;
  j["provenance"] = r.provenance;
  Json rows = Json::array();
  for (const auto& row : r.rows) rows.push_back(sweep_row_json(row));
  j["rows"] = rows;
  if (!r.certificates.empty()) j["certificates"] = r.certificates;
  if (r.oracle) j["oracle"] = *r.oracle;
  return j;
}

inline std::string report_csv(const Report& r) {
  std::ostringstream out;
  out << "lambda,support,n_actuators,n_sensors,n_links,closed_loop_h2,"
         "relative_degradation_pct,objective,kkt_residual,converged\n";
  for (const auto& row : r.rows) {
    out << detail::csv_double(row.lambda) << ','
        << detail::support_label(row.support) << ',' << row.n_actuators << ','
        << row.n_sensors << ',' << row.n_links << ','
        << detail::csv_double(row.closed_loop_h2) << ','
        << detail::csv_double(row.relative_degradation_pct) << ','
        << detail::csv_double(row.objective) << ','
        << detail::csv_double(row.kkt_residual) << ','
        << (row.converged ? "true" : "false") << '\n';
  }
  return out.str();
}

inline void write_report(const Report& r, const std::string& dir,
                         const std::string& stem, const std::string& format) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  if (format == "json" || format == "both") {
    std::ofstream out(fs::path(dir) / (stem + ".json"));
    out << report_json(r).dump(2) << "\n";
  }
  if (format == "csv" || format == "both") {
    std::ofstream out(fs::path(dir) / (stem + ".csv"));
    out << report_csv(r);
  }
}

}  // namespace rfd
