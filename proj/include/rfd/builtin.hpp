#pragma once

#include <random>

#include "rfd/groups.hpp"
#include "rfd/plant.hpp"

namespace rfd {

/// Ten-node unidirectional chain with strong disturbances entering at nodes
/// 1, 5 and 9 (one-indexed): A = I/2 + Z/2, B2 = C1 = I, control weight 0.1.
/// The stacked output blocks realize the orthogonality pattern exactly.
inline GeneralizedPlant build_chain10() {
  const int n = 10;
  GeneralizedPlant p;
  p.A = 0.5 * Matrix::Identity(n, n);
  for (int i = 0; i + 1 < n; ++i) p.A(i + 1, i) += 0.5;
  p.B2 = Matrix::Identity(n, n);
  p.B1 = 0.1 * Matrix::Identity(n, n);
  p.B1(0, 0) += 1.1;
  p.B1(4, 4) += 1.1;
  p.B1(8, 8) += 0.7;
  p.rho_u = 0.1;
  p.rho_w = 0.0;
  p.C1 = Matrix::Zero(2 * n, n);
  p.C1.topRows(n) = Matrix::Identity(n, n);
  p.D12 = Matrix::Zero(2 * n, n);
  p.D12.bottomRows(n) = std::sqrt(p.rho_u) * Matrix::Identity(n, n);
  p.C2 = Matrix::Identity(n, n);
  p.D21 = Matrix::Zero(n, n);
  return p;
}

/// Eleven-subsystem network demo.  The topology is read off the published
/// figure and is a documented approximation: solid edges carry both the
/// physical coupling and the existing communication links, dashed edges are
/// the seven purchasable additions.  A is random on the solid support,
/// rescaled to spectral radius 0.999; identical seeds give bit-identical
/// plants.
struct Network11 {
  GeneralizedPlant plant;
  BoolMatrix base_adjacency;  // solid edges + self loops
  std::vector<std::vector<std::pair<int, int>>> candidate_links;
  unsigned long long design_space = 0;  // 2^(11+11+7) - 1
};

inline const std::vector<std::pair<int, int>>& network11_solid_edges() {
  static const std::vector<std::pair<int, int>> edges = {
      {0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5},  {5, 6}, {6, 7},
      {7, 8}, {8, 9}, {9, 10}, {2, 6}, {1, 8}, {4, 10}};
  return edges;
}

inline const std::vector<std::pair<int, int>>& network11_dashed_edges() {
  static const std::vector<std::pair<int, int>> edges = {
      {0, 4}, {0, 8}, {1, 5}, {3, 7}, {2, 9}, {5, 10}, {6, 9}};
  return edges;
}

inline Network11 build_network11(std::uint64_t seed) {
  const int n = 11;
  Network11 net;
  net.base_adjacency = BoolMatrix::Constant(n, n, false);
  for (int i = 0; i < n; ++i) net.base_adjacency(i, i) = true;
  for (auto [a, b] : network11_solid_edges()) {
    net.base_adjacency(a, b) = true;
    net.base_adjacency(b, a) = true;
  }
  for (auto [a, b] : network11_dashed_edges())
    net.candidate_links.push_back({{a, b}, {b, a}});
  net.design_space = (1ull << (11 + 11 + 7)) - 1;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix a = Matrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (net.base_adjacency(i, j)) a(i, j) = dist(rng);
  a *= 0.999 / spectral_radius(a);

  GeneralizedPlant& p = net.plant;
  p.A = a;
  p.B2 = Matrix::Identity(n, n);
  p.C2 = Matrix::Identity(n, n);
  // C1 C1' = 100 I on the state block, D12'D12 = 25 I, orthogonal stacking
  p.C1 = Matrix::Zero(2 * n, n);
  p.C1.topRows(n) = 10.0 * Matrix::Identity(n, n);
  p.D12 = Matrix::Zero(2 * n, n);
  p.D12.bottomRows(n) = 5.0 * Matrix::Identity(n, n);
  p.rho_u = 25.0;
  // B1 B1' = I on the process block, D21 D21' = 0.01 I on the noise block
  p.B1 = Matrix::Zero(n, 2 * n);
  p.B1.leftCols(n) = Matrix::Identity(n, n);
  p.D21 = Matrix::Zero(n, 2 * n);
  p.D21.rightCols(n) = 0.1 * Matrix::Identity(n, n);
  p.rho_w = 0.01;
  return net;
}

}  // namespace rfd
