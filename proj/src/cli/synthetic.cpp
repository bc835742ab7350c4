#include "mbssl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "mbssl/rng.hpp"

namespace mbssl {

MultiBehaviorGraph generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t U = spec.users, I = spec.items, D = spec.latent_dim;

  // Factors scaled so <p, q> has unit variance.
  Rng factor_rng = make_rng(spec.seed, "synthetic-factors");
  std::normal_distribution<double> normal(0.0, 1.0);
  const double scale = 1.0 / std::pow(static_cast<double>(D), 0.25);
  std::vector<double> p(U * D), q(I * D);
  for (double& v : p) v = normal(factor_rng) * scale;
  for (double& v : q) v = normal(factor_rng) * scale;

  // Lognormal activity spreads the first-behavior degrees around density * |I|.
  std::vector<double> activity(U);
  for (double& a : activity) a = std::exp(0.5 * normal(factor_rng));
  const double total_activity = std::accumulate(activity.begin(), activity.end(), 0.0);
  const double expected_edges = spec.density * static_cast<double>(U) * static_cast<double>(I);

  std::vector<std::vector<Edge>> edges(spec.behaviors);
  Rng pick_rng = make_rng(spec.seed, "synthetic-edges");
  std::vector<std::pair<double, std::uint32_t>> keys(I);
  for (std::size_t u = 0; u < U; ++u) {
    const auto want = static_cast<std::size_t>(std::llround(expected_edges * activity[u] / total_activity));
    const std::size_t degree = std::clamp<std::size_t>(want, 1, I);
    // Gumbel top-k samples without replacement proportionally to exp(logit).
    for (std::size_t i = 0; i < I; ++i) {
      double dot = 0.0;
      for (std::size_t m = 0; m < D; ++m) dot += p[u * D + m] * q[i * D + m];
      double r = uniform01(pick_rng);
      while (r == 0.0) r = uniform01(pick_rng);
      keys[i] = {spec.sharpness * dot - std::log(-std::log(r)), static_cast<std::uint32_t>(i)};
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(degree), keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
    for (std::size_t j = 0; j < degree; ++j) edges[0].push_back({static_cast<std::uint32_t>(u), keys[j].second});
  }
  std::sort(edges[0].begin(), edges[0].end());

  Rng cascade_rng = make_rng(spec.seed, "synthetic-cascade");
  for (std::size_t k = 1; k < spec.behaviors; ++k) {
    const double keep = spec.cascade_at(k - 1);
    for (const Edge& e : edges[k - 1]) {
      if (uniform01(cascade_rng) < keep) edges[k].push_back(e);
    }
  }
  for (std::size_t k = 0; k < spec.behaviors; ++k) {
    if (edges[k].empty()) {
      throw DataError("synthetic behavior " + std::to_string(k + 1) + " has no edges; raise density or cascade");
    }
  }
  MultiBehaviorGraph graph(U, I, spec.behaviors, std::move(edges));
  if (spec.noise > 0.0 && spec.behaviors > 1) graph = inject_noise(graph, spec.noise, derive_seed(spec.seed, "synthetic-noise"));
  return graph;
}

}  // namespace mbssl
