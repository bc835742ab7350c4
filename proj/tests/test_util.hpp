#pragma once

#include <cstdint>
#include <random>

#include "mbssl/graph.hpp"
#include "mbssl/tensor.hpp"

namespace mbssl::testing {

inline Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor t(Shape{rows, cols});
  for (double& v : t.values()) v = dist(rng);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

// Each (user, item, behavior) edge present independently with probability density.
inline MultiBehaviorGraph random_graph(std::size_t users, std::size_t items, std::size_t behaviors, double density,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution keep(density);
  std::vector<std::vector<Edge>> edges(behaviors);
  for (std::size_t k = 0; k < behaviors; ++k) {
    for (std::uint32_t u = 0; u < users; ++u) {
      for (std::uint32_t i = 0; i < items; ++i) {
        if (keep(rng)) edges[k].push_back({u, i});
      }
    }
  }
  return MultiBehaviorGraph(users, items, behaviors, std::move(edges));
}

}  // namespace mbssl::testing
