#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "mbssl/eval.hpp"
#include "test_util.hpp"

using namespace mbssl;
using mbssl::testing::random_graph;
using mbssl::testing::random_matrix;

namespace {

// One behavior, d = 1, unit user and behavior embeddings: item scores are the item values.
EmbeddingSnapshot scalar_snapshot(std::size_t users, const std::vector<double>& item_values) {
  EmbeddingSnapshot s;
  s.users = {Tensor::matrix(users, 1, 1.0)};
  s.items = {Tensor::matrix(item_values.size(), 1, item_values)};
  s.behaviors = Tensor::matrix(1, 1, 1.0);
  return s;
}

SplitDataset split_of(std::size_t users, std::size_t items, std::vector<Edge> train_target,
                      std::vector<TestPair> test) {
  return SplitDataset{MultiBehaviorGraph(users, items, 1, {std::move(train_target)}), std::move(test)};
}

// Position of the held-out item after a full sort of the candidates.
std::size_t rank_by_sorting(const EmbeddingSnapshot& snap, const SplitDataset& split, const TestPair& p) {
  const std::size_t K = snap.users.size();
  const Tensor& U = snap.users[K - 1];
  const Tensor& I = snap.items[K - 1];
  std::vector<std::pair<double, std::size_t>> candidates;
  for (std::size_t i = 0; i < I.rows(); ++i) {
    if (split.train.has_edge(K - 1, p.user, i)) continue;
    double s = 0.0;
    for (std::size_t m = 0; m < U.cols(); ++m) s += snap.behaviors(K - 1, m) * U(p.user, m) * I(i, m);
    candidates.push_back({-s, i});
  }
  std::sort(candidates.begin(), candidates.end());
  for (std::size_t r = 0; r < candidates.size(); ++r) {
    if (candidates[r].second == p.item) return r + 1;
  }
  return 0;
}

}  // namespace

TEST_CASE("rank examples") {
  SUBCASE("strictly highest is rank 1") {
    auto snap = scalar_snapshot(1, {0.1, 0.9, 0.3});
    CHECK(rank_heldout(snap, split_of(1, 3, {}, {{0, 1}}), {0, 1}) == 1);
  }
  SUBCASE("five candidates, held-out third best") {
    auto snap = scalar_snapshot(1, {0.9, 0.8, 0.7, 0.6, 0.5});
    CHECK(rank_heldout(snap, split_of(1, 5, {}, {{0, 2}}), {0, 2}) == 3);
  }
  SUBCASE("ties go to the smaller item index") {
    auto snap = scalar_snapshot(1, {0.5, 0.5, 0.5, 0.5});
    CHECK(rank_heldout(snap, split_of(1, 4, {}, {{0, 0}}), {0, 0}) == 1);
    CHECK(rank_heldout(snap, split_of(1, 4, {}, {{0, 2}}), {0, 2}) == 3);
  }
  SUBCASE("training positives are excluded from the candidates") {
    auto snap = scalar_snapshot(1, {0.9, 0.8, 0.7, 0.6, 0.5});
    CHECK(rank_heldout(snap, split_of(1, 5, {{0, 0}, {0, 1}}, {{0, 2}}), {0, 2}) == 1);
  }
  SUBCASE("a held-out training positive is an error") {
    auto snap = scalar_snapshot(1, {0.9, 0.8});
    CHECK_THROWS_AS(rank_heldout(snap, split_of(1, 2, {{0, 1}}, {}), {0, 1}), std::invalid_argument);
  }
}

TEST_CASE("metric fixtures") {
  CutoffMetrics m = metrics({1}, 10);
  CHECK(m.recall == 1.0);
  CHECK(m.ndcg == 1.0);
  m = metrics({3}, 10);
  CHECK(m.recall == 1.0);
  CHECK(std::abs(m.ndcg - 0.5) < 1e-15);
  m = metrics({11}, 10);
  CHECK(m.recall == 0.0);
  CHECK(m.ndcg == 0.0);
  m = metrics({1, 3, 11, 20}, 10);
  CHECK(std::abs(m.recall - 0.5) < 1e-15);
  CHECK(std::abs(m.ndcg - 0.375) < 1e-15);
  CHECK_THROWS_AS(metrics({1}, 0), std::invalid_argument);
}

TEST_CASE("ranks agree with a full sort and respect bounds on random instances") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t users = 6, items = 15, K = 2, d = 3;
    const auto graph = random_graph(users, items, K, 0.3, 900 + trial);
    SplitDataset split;
    try {
      split = leave_one_out_split(graph, trial);
    } catch (const DataError&) {
      continue;
    }
    EmbeddingSnapshot snap;
    for (std::size_t k = 0; k < K; ++k) {
      snap.users.push_back(random_matrix(users, d, rng));
      // Coarse values create exact score ties.
      Tensor items_t = random_matrix(items, d, rng);
      if (trial % 2) {
        for (double& v : items_t.values()) v = std::round(v * 2.0) / 2.0;
      }
      snap.items.push_back(items_t);
    }
    snap.behaviors = trial % 2 ? Tensor::matrix(K, d, 1.0) : random_matrix(K, d, rng);
    if (trial % 2) {
      for (double& v : snap.users.back().values()) v = std::round(v * 2.0) / 2.0;
    }
    const auto report = evaluate(snap, split);
    for (const auto& [user, rank] : report.ranks) {
      const TestPair pair{user, [&] {
                            for (const auto& p : split.test) {
                              if (p.user == user) return p.item;
                            }
                            return 0u;
                          }()};
      CHECK(rank == rank_by_sorting(snap, split, pair));
      CHECK(rank >= 1);
      CHECK(rank <= items - split.train.adjacency(K - 1).user_degree(user));
    }
    for (std::size_t c = 0; c < report.cutoffs.size(); ++c) {
      CHECK(report.values[c].ndcg <= report.values[c].recall);
      CHECK(report.values[c].recall <= 1.0);
    }
    const auto again = evaluate(snap, split);
    CHECK(again.ranks == report.ranks);
  }
}

TEST_CASE("sparsity buckets") {
  // Users 0..3 with 1, 2, 4, 6 training target items and held-out ranks 1, 3, 11, 60.
  std::vector<Edge> train;
  const std::vector<std::size_t> degree{1, 2, 4, 6};
  for (std::uint32_t u = 0; u < 4; ++u) {
    for (std::uint32_t i = 0; i < degree[u]; ++i) train.push_back({u, 10 + i});
  }
  SplitDataset split = split_of(4, 20, train, {{0, 0}, {1, 0}, {2, 0}, {3, 0}});
  EvalReport report;
  report.cutoffs = {50};
  report.ranks = {{0, 1}, {1, 3}, {2, 11}, {3, 60}};
  report.values = {metrics(report.rank_values(), 50)};

  SUBCASE("a single bucket reproduces the global mean") {
    const auto b = sparsity_buckets(split, report, {});
    REQUIRE(b.size() == 1);
    CHECK(b[0].count == 4);
    CHECK(std::abs(b[0].mean_ndcg - report.at(50).ndcg) < 1e-15);
  }
  SUBCASE("boundaries (2, 5) give three buckets") {
    const auto b = sparsity_buckets(split, report, {2, 5});
    REQUIRE(b.size() == 3);
    CHECK(b[0].count == 1);
    CHECK(b[1].count == 2);
    CHECK(b[2].count == 1);
    CHECK(b[0].mean_ndcg == 1.0);
    CHECK(std::abs(b[1].mean_ndcg - (0.5 + 1.0 / std::log2(12.0)) / 2.0) < 1e-15);
    CHECK(b[2].mean_ndcg == 0.0);
    CHECK(b[0].lo == 0);
    CHECK(b[0].hi == 2);
    CHECK(b[2].lo == 5);
  }
  SUBCASE("boundaries must increase") {
    CHECK_THROWS_AS(sparsity_buckets(split, report, {3, 3}), std::invalid_argument);
  }
  SUBCASE("quintile defaults partition the users") {
    const auto bounds = quintile_boundaries(split);
    CHECK(std::is_sorted(bounds.begin(), bounds.end()));
    std::size_t total = 0;
    for (const auto& b : sparsity_buckets(split, report, bounds)) total += b.count;
    CHECK(total == 4);
  }
}

TEST_CASE("noise robustness protocol") {
  const auto graph = random_graph(10, 20, 2, 0.2, 4);
  const std::size_t clean_edges = graph.total_edges();
  int calls = 0;
  TrainAndScore fake = [&](const MultiBehaviorGraph& g, std::uint64_t) {
    ++calls;
    return g.total_edges() == clean_edges ? 0.5 : 0.4;
  };
  CHECK(noise_robustness_run(graph, {}, fake, {1}).empty());
  CHECK(calls == 0);

  const auto rows = noise_robustness_run(graph, {0.0, 0.3}, fake, {1, 2, 3});
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].decline_pct == 0.0);
  CHECK(std::abs(rows[1].decline_pct - 20.0) < 1e-12);
  CHECK(rows[1].per_seed.size() == 3);
  CHECK(calls == 6);
  CHECK_THROWS(noise_robustness_run(graph, {0.3}, fake, {}));
}

TEST_CASE("report CSV headers") {
  const auto dir = std::filesystem::temp_directory_path();
  EvalReport report;
  report.cutoffs = {10, 50};
  report.values = {{0.25, 0.125}, {0.5, 0.2}};
  write_report_csv(dir / "mbssl_report.csv", report);
  write_buckets_csv(dir / "mbssl_buckets.csv", {{0, 3, 2, 0.5}, {3, std::numeric_limits<std::size_t>::max(), 1, 0}});
  write_noise_csv(dir / "mbssl_noise.csv", {{0.3, 12.5, {}}});
  auto lines = [](const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  };
  CHECK(lines(dir / "mbssl_report.csv") ==
        std::vector<std::string>{"cutoff,recall,ndcg", "10,0.250000,0.125000", "50,0.500000,0.200000"});
  CHECK(lines(dir / "mbssl_buckets.csv") ==
        std::vector<std::string>{"bucket_lo,bucket_hi,count,mean_ndcg", "0,3,2,0.500000", "3,inf,1,0.000000"});
  CHECK(lines(dir / "mbssl_noise.csv") == std::vector<std::string>{"noise_ratio,decline_pct", "0.300000,12.500000"});
}
