// Command-line front end: architecture/control-law co-design, recovery
// certification, the enumeration oracle and the built-in demo systems.

#include <CLI11.hpp>

#include "rfd/instance.hpp"
#include "rfd/log.hpp"

namespace {

using namespace rfd;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitUnconverged = 3;
constexpr int kExitCap = 4;

int cmd_design(const std::string& config_path, const std::string& out_override,
               const std::string& format_override, bool allow_unconverged) {
  RunConfig cfg = load_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (!format_override.empty()) cfg.format = format_override;
  if (cfg.lambdas.empty())
    throw ConfigError("problem.lambda: design needs at least one weight");
  Instance inst(cfg);

  RfdProblem p = inst.problem(0.0);
  EvalSpec eval = inst.eval_spec(p.penalty);
  SolveOptions opts;
  opts.tol = cfg.solver_tol;
  opts.max_iters = cfg.solver_max_iters;
  log_info("design: %zu lambdas, t=%d, order=%d taps", cfg.lambdas.size(),
           cfg.horizon_t, inst.order().count);
  std::vector<SweepRow> rows =
      lambda_sweep(p, inst.model(), cfg.lambdas, eval, opts);

  Report rep;
  rep.provenance = provenance_json(inst);
  rep.rows = rows;
  write_report(rep, cfg.out_dir, "design", cfg.format);

  bool all_ok = true;
  for (const auto& r : rows) {
    std::printf("lambda=%-10.6g support=%-18s act=%2d sns=%2d links=%d "
                "h2=%.8g degradation=%.4g%% %s\n",
                r.lambda, detail::support_label(r.support).c_str(),
                r.n_actuators, r.n_sensors, r.n_links, r.closed_loop_h2,
                r.relative_degradation_pct,
                r.converged ? "" : "UNCONVERGED");
    all_ok = all_ok && r.converged;
  }
  if (!all_ok && !allow_unconverged) return kExitUnconverged;
  return kExitOk;
}

int cmd_certify(const std::string& config_path, std::vector<int> t_list,
                std::vector<int> v_list, const std::string& out_override,
                const std::string& format_override) {
  RunConfig cfg = load_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (!format_override.empty()) cfg.format = format_override;
  Instance inst(cfg);
  if (!inst.model().one_sided() || cfg.penalty != PenaltyKind::kActuator)
    throw ConfigError(
        "certification covers actuator-norm problems on one-sided settings");
  if (t_list.empty()) t_list = {cfg.horizon_t};
  if (v_list.empty()) v_list = {cfg.order_v};

  std::vector<int> rows;  // zero-indexed architecture
  if (cfg.m_star) {
    for (int r : *cfg.m_star) rows.push_back(r - 1);
  } else {
    const int t_ref = cfg.t_ref ? *cfg.t_ref
                                : reference_horizon(inst.model().decay_rate());
    auto oracle = brute_force_oracle(
        inst.model(), inst.rho_u(), cfg.cert_s, t_ref,
        t_ref + reference_horizon(inst.model().decay_rate()) / 2);
    rows = oracle.best_rows;
  }

  Report rep;
  rep.provenance = provenance_json(inst);
  std::ostringstream csv;
  csv << "t,v,tau,gamma,beta_upper,nu_upper,eta,lambda_sufficient,"
         "lambda_lo,lambda_hi,error_bound,assumption1,theorem2_support,"
         "theorem2_per_group,corollary1,theorem3\n";
  for (int t : t_list) {
    for (int v : v_list) {
      TapSpec order = tap_spec_for_order(v, cfg.convention);
      RecoveryCertificate cert = build_certificate(
          inst.model(), rows, t, order, cfg.rho, cfg.cert_lambda, std::nullopt,
          cfg.t_ref);
      rep.certificates.push_back(certificate_json(cert));
      std::string interval = "empty";
      if (cert.lambda_interval) {
        interval = "(" + detail::csv_double(cert.lambda_interval->first) +
                   ", " + detail::csv_double(cert.lambda_interval->second) +
                   ")";
      }
      std::printf(
          "t=%d v=%d: tau=%d gamma=%.6g beta<=%.6g eta=%.6g lambda'=%.6g "
          "Lambda=%s bound=%.6g A1=%d T2=%d T2g=%d C1=%d T3=%d\n",
          t, v, cert.tau, cert.gamma, cert.beta_upper, cert.eta,
          cert.lambda_sufficient, interval.c_str(), cert.error_bound,
          (int)cert.verdicts.assumption1, (int)cert.verdicts.theorem2_support,
          (int)cert.verdicts.theorem2_per_group, (int)cert.verdicts.corollary1,
          (int)cert.verdicts.theorem3);
      csv << t << ',' << v << ',' << cert.tau << ','
          << detail::csv_double(cert.gamma) << ','
          << detail::csv_double(cert.beta_upper) << ','
          << detail::csv_double(cert.nu_upper) << ','
          << detail::csv_double(cert.eta) << ','
          << detail::csv_double(cert.lambda_sufficient) << ','
          << (cert.lambda_interval
                  ? detail::csv_double(cert.lambda_interval->first)
                  : "")
          << ','
          << (cert.lambda_interval
                  ? detail::csv_double(cert.lambda_interval->second)
                  : "")
          << ',' << detail::csv_double(cert.error_bound) << ','
          << cert.verdicts.assumption1 << ',' << cert.verdicts.theorem2_support
          << ',' << cert.verdicts.theorem2_per_group << ','
          << cert.verdicts.corollary1 << ',' << cert.verdicts.theorem3 << '\n';
    }
  }
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  if (cfg.format == "json" || cfg.format == "both") {
    std::ofstream out(fs::path(cfg.out_dir) / "certify.json");
    out << report_json(rep).dump(2) << "\n";
  }
  if (cfg.format == "csv" || cfg.format == "both") {
    std::ofstream out(fs::path(cfg.out_dir) / "certify.csv");
    out << csv.str();
  }
  return kExitOk;
}

int cmd_oracle(const std::string& config_path, int s,
               const std::string& out_override,
               const std::string& format_override) {
  RunConfig cfg = load_config(config_path);
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (!format_override.empty()) cfg.format = format_override;
  Instance inst(cfg);
  const int t_ref = cfg.t_ref ? *cfg.t_ref
                              : reference_horizon(inst.model().decay_rate());
  const int t_out = t_ref + reference_horizon(inst.model().decay_rate()) / 2;
  log_info("oracle: s=%d t_ref=%d", s, t_ref);
  OracleResult res =
      brute_force_oracle(inst.model(), inst.rho_u(), s, t_ref, t_out);

  Report rep;
  rep.provenance = provenance_json(inst);
  Json oracle;
  oracle["s"] = s;
  oracle["t_ref"] = t_ref;
  Json best = Json::array();
  for (int r : res.best_rows) best.push_back(r + 1);
  oracle["best_support"] = best;
  oracle["best_objective"] = res.best_objective;
  oracle["best_h2"] = std::sqrt(std::max(0.0, res.best_objective));
  Json ranking = Json::array();
  for (const auto& e : res.ranking) {
    Json row;
    Json sup = Json::array();
    for (int r : e.rows) sup.push_back(r + 1);
    row["support"] = sup;
    row["objective"] = e.objective;
    ranking.push_back(row);
  }
  oracle["ranking"] = ranking;
  rep.oracle = oracle;

  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  if (cfg.format == "json" || cfg.format == "both") {
    std::ofstream out(fs::path(cfg.out_dir) / "oracle.json");
    out << report_json(rep).dump(2) << "\n";
  }
  if (cfg.format == "csv" || cfg.format == "both") {
    std::ofstream out(fs::path(cfg.out_dir) / "oracle.csv");
    out << "rank,support,objective\n";
    for (size_t i = 0; i < res.ranking.size(); ++i)
      out << i + 1 << ','
          << detail::support_label(res.ranking[i].rows) << ','
          << detail::csv_double(res.ranking[i].objective) << '\n';
  }
  std::printf("best support:");
  for (int r : res.best_rows) std::printf(" %d", r + 1);
  std::printf("  objective=%.10g\n", res.best_objective);
  return kExitOk;
}

int cmd_demo(const std::string& name, std::uint64_t seed,
             const std::string& out_dir) {
  Json cfg;
  cfg["schema_version"] = 1;
  if (name == "chain10") {
    GeneralizedPlant p = build_chain10();
    cfg["plant"] = {{"builtin", "chain10"}, {"seed", seed}};
    cfg["problem"] = {{"setting", "state-feedback"},
                      {"horizon_t", 4},
                      {"order_v", 1},
                      {"rho", 0.0},
                      {"lambda", {3.0, 2.4505, 2.0119, 1.5, 1.0, 0.5}},
                      {"tap_convention", "v-taps-from-0"}};
    cfg["penalty"] = {{"kind", "actuator"}};
    cfg["certification"] = {{"enabled", true}, {"s", 2}};
    std::printf("chain10: spectral radius %.6f, control weight %.2f\n",
                spectral_radius(p.A), p.rho_u);
  } else if (name == "network11") {
    Network11 net = build_network11(seed);
    cfg["plant"] = {{"builtin", "network11"}, {"seed", seed}};
    cfg["problem"] = {{"setting", "output-feedback"},
                      {"horizon_t", 6},
                      {"order_v", 3},
                      {"rho", 0.0},
                      {"lambda", {2000.0, 800.0, 400.0, 200.0, 80.0, 20.0}},
                      {"tap_convention", "v-taps-from-0"}};
    cfg["penalty"] = {{"kind", "act-sns-comm"},
                      {"theta", 0.75},
                      {"k_a", 1},
                      {"k_s", 1}};
    cfg["subspace"] = {{"from_comm_graph", true}};
    cfg["eval"] = {{"order_taps", 10}, {"t_out", 20}};
    cfg["solver"] = {{"tol", 1e-7}, {"max_iters", 60000}};
    std::printf("network11 (seed %llu): spectral radius %.12f\n",
                static_cast<unsigned long long>(seed),
                spectral_radius(net.plant.A));
    std::printf("design space: %llu architectures (11 actuators, 11 sensors, "
                "7 links)\n",
                static_cast<unsigned long long>(net.design_space));
  } else {
    throw ConfigError("demo: unknown builtin '" + name + "'");
  }
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string path = (fs::path(out_dir) / (name + ".json")).string();
  std::ofstream out(path);
  out << cfg.dump(2) << "\n";
  std::printf("wrote %s\n", path.c_str());
  return kExitOk;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rfd: controller architecture/control-law co-design via "
               "atomic-norm regularized H2 model matching"};
  app.require_subcommand(1);

  std::string config_path, out_dir, format, t_arg, v_arg, demo_name;
  bool allow_unconverged = false;
  int s = 2;
  std::uint64_t seed = 1;

  auto* design = app.add_subcommand("design", "two-step co-design sweep");
  design->add_option("--config", config_path, "config JSON")->required();
  design->add_option("--out", out_dir, "output directory");
  design->add_option("--format", format, "json|csv|both");
  design->add_flag("--allow-unconverged", allow_unconverged,
                   "exit 0 even when a solve does not converge");

  auto* certify = app.add_subcommand("certify", "recovery certificates");
  certify->add_option("--config", config_path, "config JSON")->required();
  certify->add_option("--t", t_arg, "horizon list, e.g. 2,3,4,5");
  certify->add_option("--v", v_arg, "order list, e.g. 1");
  certify->add_option("--out", out_dir, "output directory");
  certify->add_option("--format", format, "json|csv|both");

  auto* oracle = app.add_subcommand("oracle", "exhaustive architecture search");
  oracle->add_option("--config", config_path, "config JSON")->required();
  oracle->add_option("--s", s, "actuation sparsity budget")->required();
  oracle->add_option("--out", out_dir, "output directory");
  oracle->add_option("--format", format, "json|csv|both");

  auto* demo = app.add_subcommand("demo", "emit a built-in demo config");
  demo->add_option("name", demo_name, "chain10|network11")->required();
  demo->add_option("--seed", seed, "random seed (network11)");
  demo->add_option("--out", out_dir, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(design))
      return cmd_design(config_path, out_dir, format, allow_unconverged);
    if (app.got_subcommand(certify))
      return cmd_certify(config_path, parse_int_list(t_arg),
                         parse_int_list(v_arg), out_dir, format);
    if (app.got_subcommand(oracle))
      return cmd_oracle(config_path, s, out_dir, format);
    if (app.got_subcommand(demo))
      return cmd_demo(demo_name, seed, out_dir.empty() ? "." : out_dir);
  } catch (const rfd::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const rfd::EnumerationCapError& e) {
    std::fprintf(stderr, "enumeration cap: %s\n", e.what());
    return kExitCap;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitOk;
}
