#pragma once

#include "rfd/certify.hpp"
#include "rfd/config.hpp"
#include "rfd/report.hpp"

namespace rfd {

/// Everything a command needs, assembled from a configuration: the model,
/// the penalty factory at any (t, order), the distributed constraint and the
/// evaluation-horizon rule (including the graph re-derivation for link
/// atoms).
class Instance {
 public:
  explicit Instance(const RunConfig& cfg) : cfg_(cfg) {
    if (cfg.builtin) {
      if (*cfg.builtin == "chain10") {
        plant_ = build_chain10();
      } else {
        Network11 net = build_network11(cfg.seed);
        plant_ = net.plant;
        adjacency_ = net.base_adjacency;
        links_ = net.candidate_links;
        design_space_ = net.design_space;
      }
    } else {
      load_matrices(*cfg.matrices);
    }
    if (cfg.comm_graph) load_comm_graph(*cfg.comm_graph);
    if (needs_comm() && !adjacency_)
      throw ConfigError("penalty.comm: comm graph required for this penalty");

    if (cfg.setting == "basic-lqr") {
      if (!xi_) throw ConfigError("plant.matrices.xi required for basic-lqr");
      model_ = ModelMatchingModel::basic_lqr(plant_.A, plant_.B2,
                                             plant_.C1, *xi_, plant_.rho_u);
    } else if (cfg.setting == "state-feedback") {
      model_ = ModelMatchingModel::state_feedback(plant_);
    } else {
      model_ = ModelMatchingModel::output_feedback(plant_);
    }
  }

  const RunConfig& config() const { return cfg_; }
  const GeneralizedPlant& plant() const { return plant_; }
  const ModelMatchingModel& model() const { return *model_; }
  unsigned long long design_space() const { return design_space_; }
  double rho_u() const {
    return cfg_.rho_u_override ? *cfg_.rho_u_override : plant_.rho_u;
  }

  TapSpec order() const {
    return tap_spec_for_order(cfg_.order_v, cfg_.convention);
  }

  GroupStructure penalty_at(const CoordLayout& layout) const {
    switch (cfg_.penalty) {
      case PenaltyKind::kActuator:
        return actuator_structure(layout);
      case PenaltyKind::kSensor:
        return sensor_structure(layout);
      case PenaltyKind::kActuatorSensor:
        return build_actuator_sensor_atoms(layout, cfg_.k_a, cfg_.k_s);
      case PenaltyKind::kComm:
        return comm_structure(layout, derive(layout.taps + layout.first_tap));
      case PenaltyKind::kActSnsComm:
        return joint_sum(
            comm_structure(layout, derive(layout.taps + layout.first_tap)),
            build_actuator_sensor_atoms(layout, cfg_.k_a, cfg_.k_s),
            cfg_.theta);
    }
    return actuator_structure(layout);
  }

  /// Distributed constraint mask when requested: the base communication
  /// subspace plus every purchasable atom.
  std::optional<SparsityMask> subspace_mask(int depth) const {
    if (!cfg_.subspace_from_comm) return std::nullopt;
    CommAtomDerivation d = derive(depth);
    std::vector<BoolMatrix> taps;
    for (int k = 0; k <= depth; ++k) {
      BoolMatrix m = d.base.at(k);
      for (const auto& atom : d.atoms) m = m.cwiseMax(atom.at(k));
      taps.push_back(m);
    }
    BoolMatrix tail = d.base.tail;
    for (const auto& atom : d.atoms) tail = tail.cwiseMax(atom.tail);
    return SparsityMask(std::move(taps), std::move(tail));
  }

  RfdProblem problem(double lambda) const {
    AssembledProblem ap = model().assemble(cfg_.horizon_t, order());
    GroupStructure pen = penalty_at(ap.map.input);
    RfdProblem p = RfdProblem::from_assembled(std::move(ap), std::move(pen),
                                              cfg_.rho, lambda);
    p.mask = subspace_mask(cfg_.horizon_t);
    return p;
  }

  /// Step-2 evaluation horizons: the decay rule for one-sided models, a
  /// bounded surrogate for two-sided ones, both overridable from the config.
  EvalSpec eval_spec(const GroupStructure& pen) const {
    EvalSpec e;
    const double r = model().decay_rate();
    if (model().one_sided()) {
      e.order_taps = cfg_.eval_order ? *cfg_.eval_order : reference_horizon(r);
      e.t_out = cfg_.eval_t_out
                    ? *cfg_.eval_t_out
                    : e.order_taps + reference_horizon(r) / 2;
    } else {
      e.order_taps = cfg_.eval_order ? *cfg_.eval_order
                                     : std::min(reference_horizon(r), 12);
      e.t_out = cfg_.eval_t_out ? *cfg_.eval_t_out : 2 * e.order_taps;
    }
    e.first_tap = order().first_tap;
    e.rho = rho_u();
    const bool has_links = cfg_.penalty == PenaltyKind::kComm ||
                           cfg_.penalty == PenaltyKind::kActSnsComm;
    GroupStructure pen_copy = pen;
    if (!has_links) {
      e.mask_for = [pen_copy](const std::vector<int>& support) {
        return architecture_pattern(pen_copy, support);
      };
      return e;
    }
    // selected links change the communication graph: re-derive the support
    // rule on the augmented graph, then intersect with the entry pattern
    BoolMatrix gamma = *adjacency_;
    auto links = links_;
    const int depth = e.first_tap + e.order_taps;
    auto tags = flat_group_tags(pen);
    e.mask_for = [pen_copy, gamma, links, depth,
                  tags](const std::vector<int>& support) {
      BoolMatrix g2 = gamma;
      for (int gi : support)
        if (gi < static_cast<int>(tags.size()) &&
            tags[gi].kind == GroupTag::kLink)
          for (auto [i, j] : links[tags[gi].id]) g2(i, j) = true;
      CommAtomDerivation d = derive_comm_atoms(g2, {}, depth);
      SparsityMask comm_mask = d.base;
      if (pen_copy.kind == GroupKind::kJointSum) {
        SparsityMask entries = architecture_pattern(pen_copy, support);
        std::vector<BoolMatrix> taps;
        for (int k = 0; k <= depth; ++k)
          taps.push_back(comm_mask.at(k).cwiseProduct(entries.at(k)));
        return SparsityMask(std::move(taps),
                            comm_mask.tail.cwiseProduct(entries.tail));
      }
      return comm_mask;
    };
    return e;
  }

  CommAtomDerivation derive(int depth) const {
    if (!adjacency_) throw ConfigError("comm penalty without a graph");
    return derive_comm_atoms(*adjacency_, links_, std::max(depth, 2));
  }

  const std::optional<BoolMatrix>& adjacency() const { return adjacency_; }
  const std::vector<std::vector<std::pair<int, int>>>& links() const {
    return links_;
  }

 private:
  bool needs_comm() const {
    return cfg_.penalty == PenaltyKind::kComm ||
           cfg_.penalty == PenaltyKind::kActSnsComm ||
           cfg_.subspace_from_comm;
  }

  void load_matrices(const Json& m) {
    auto get = [&](const char* name) -> Matrix {
      if (!m.contains(name))
        throw ConfigError(std::string("plant.matrices.") + name + ": missing");
      return detail::parse_matrix(m[name], name);
    };
    plant_.A = get("A");
    if (cfg_.setting == "basic-lqr") {
      plant_.B2 = get("B");
      plant_.C1 = get("C");
      Matrix xi = get("xi");
      xi_ = Vector(xi.reshaped());
      plant_.B1 = Matrix::Identity(plant_.A.rows(), plant_.A.rows());
      plant_.C2 = Matrix::Identity(plant_.A.rows(), plant_.A.rows());
      plant_.D12 = Matrix::Zero(plant_.C1.rows(), plant_.B2.cols());
      plant_.D21 = Matrix::Zero(plant_.C2.rows(), plant_.B1.cols());
      plant_.rho_u = m.value("rho_u", 0.0);
      return;
    }
    plant_.B1 = get("B1");
    plant_.B2 = get("B2");
    plant_.C1 = get("C1");
    plant_.C2 = get("C2");
    plant_.D12 = get("D12");
    plant_.D21 = get("D21");
    plant_.rho_u = m.value("rho_u", 0.0);
    plant_.rho_w = m.value("rho_w", 0.0);
    plant_.check_dimensions();
  }

  void load_comm_graph(const Json& g) {
    if (g.contains("adjacency")) {
      Matrix a = detail::parse_matrix(g["adjacency"], "comm.adjacency");
      BoolMatrix b(a.rows(), a.cols());
      for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) b(i, j) = a(i, j) != 0.0;
      adjacency_ = b;
    }
    if (g.contains("added_links")) {
      links_.clear();
      for (const auto& l : g["added_links"]) {
        // one-indexed [to, from] pairs, or a list of such pairs per link
        std::vector<std::pair<int, int>> edges;
        if (l.empty()) throw ConfigError("comm.added_links: empty link");
        if (l[0].is_array()) {
          for (const auto& e : l)
            edges.emplace_back(e[0].get<int>() - 1, e[1].get<int>() - 1);
        } else {
          edges.emplace_back(l[0].get<int>() - 1, l[1].get<int>() - 1);
        }
        links_.push_back(std::move(edges));
      }
    }
  }

  RunConfig cfg_;
  GeneralizedPlant plant_;
  std::optional<Vector> xi_;
  std::optional<ModelMatchingModel> model_;
  std::optional<BoolMatrix> adjacency_;
  std::vector<std::vector<std::pair<int, int>>> links_;
  unsigned long long design_space_ = 0;
};

/// Provenance block shared by every report.
inline Json provenance_json(const Instance& inst) {
  Json j;
  j["tool"] = "rfd";
  j["report_version"] = 1;
  j["config"] = emit_config(inst.config());
  if (inst.design_space() > 0) j["design_space"] = inst.design_space();
  return j;
}

}  // namespace rfd
