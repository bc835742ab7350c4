#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "mbssl/graph.hpp"

using namespace mbssl;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
  const fs::path path = fs::temp_directory_path() / ("mbssl_graph_" + name);
  std::ofstream(path) << content;
  return path;
}

MultiBehaviorGraph random_graph(std::size_t users, std::size_t items, std::size_t behaviors, double density,
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

}  // namespace

TEST_CASE("loading counts users, items and edges per behavior") {
  auto path = write_temp("basic.tsv", "a\tx\t1\na\ty\t1\na\ty\t2\n");
  auto ds = load_interactions(path, 2);
  CHECK(ds.graph.num_users() == 1);
  CHECK(ds.graph.num_items() == 2);
  CHECK(ds.graph.edges(0).size() == 2);
  CHECK(ds.graph.edges(1).size() == 1);
  CHECK(ds.items.token(0) == "x");
  CHECK(ds.items.at("y") == 1);
}

TEST_CASE("duplicate lines count once") {
  auto path = write_temp("dup.tsv", "a\tx\t1\na\tx\t1\nb\tx\t2\n");
  auto ds = load_interactions(path, 2);
  CHECK(ds.graph.edges(0).size() == 1);
}

TEST_CASE("loader errors") {
  SUBCASE("behavior out of range names the line") {
    auto path = write_temp("range.tsv", "a\tx\t1\na\ty\t5\n");
    try {
      load_interactions(path, 2);
      FAIL("expected throw");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }
  SUBCASE("malformed line") {
    auto path = write_temp("bad.tsv", "a\tx\t1\na x 1\n");
    CHECK_THROWS_WITH_AS(load_interactions(path, 2), doctest::Contains(":2:"), DataError);
  }
  SUBCASE("non-numeric behavior") {
    auto path = write_temp("nan.tsv", "a\tx\tview\n");
    CHECK_THROWS_AS(load_interactions(path, 2), DataError);
  }
  SUBCASE("empty file") {
    auto path = write_temp("empty.tsv", "");
    CHECK_THROWS_AS(load_interactions(path, 2), DataError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_interactions("/nonexistent/x.tsv", 2), DataError); }
}

TEST_CASE("id maps round trip through files") {
  auto path = write_temp("ids.tsv", "bob\tx\t1\nalice\ty\t2\nbob\ty\t2\n");
  auto ds = load_interactions(path, 2);
  const fs::path map_path = fs::temp_directory_path() / "mbssl_graph_users.map";
  write_id_map(map_path, ds.users);
  auto back = read_id_map(map_path);
  CHECK(back.tokens() == ds.users.tokens());

  const fs::path copy = fs::temp_directory_path() / "mbssl_graph_copy.tsv";
  write_interactions(copy, ds.graph, &ds.users, &ds.items);
  CHECK(load_interactions(copy, 2).graph == ds.graph);
}

TEST_CASE("neighbor lists are transpose consistent") {
  auto g = random_graph(12, 15, 3, 0.3, 1);
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& adj = g.adjacency(k);
    for (std::size_t u = 0; u < 12; ++u) {
      for (std::size_t i = 0; i < 15; ++i) {
        auto un = adj.user_neighbors(u);
        auto in = adj.item_neighbors(i);
        const bool forward = std::find(un.begin(), un.end(), i) != un.end();
        const bool backward = std::find(in.begin(), in.end(), u) != in.end();
        CHECK(forward == backward);
        CHECK(forward == g.has_edge(k, u, i));
      }
    }
  }
}

TEST_CASE("out-of-range edges are rejected") {
  CHECK_THROWS_AS(MultiBehaviorGraph(2, 2, 1, {{{0, 2}}}), DataError);
}

TEST_CASE("leave-one-out split") {
  SUBCASE("single purchase becomes the test item") {
    MultiBehaviorGraph g(1, 3, 2, {{{0, 0}, {0, 1}}, {{0, 2}}});
    auto split = leave_one_out_split(g, 5);
    REQUIRE(split.test.size() == 1);
    CHECK(split.test[0] == TestPair{0, 2});
    CHECK(split.train.edges(1).empty());
    CHECK(split.train.edges(0) == g.edges(0));
  }
  SUBCASE("determinism and soundness") {
    auto g = random_graph(100, 40, 2, 0.05, 2);
    auto a = leave_one_out_split(g, 17);
    auto b = leave_one_out_split(g, 17);
    CHECK(a.test == b.test);
    CHECK(a.train == b.train);

    std::size_t eligible = 0;
    for (std::size_t u = 0; u < 100; ++u) {
      bool any = false;
      for (const Edge& e : g.edges(1)) any = any || e.user == u;
      eligible += any ? 1 : 0;
    }
    CHECK(a.test.size() == eligible);

    std::set<Edge> train(a.train.edges(1).begin(), a.train.edges(1).end());
    std::set<Edge> all(g.edges(1).begin(), g.edges(1).end());
    for (const auto& t : a.test) {
      const Edge e{t.user, t.item};
      CHECK_FALSE(train.contains(e));
      train.insert(e);
    }
    CHECK(train == all);
    CHECK(a.train.edges(0) == g.edges(0));
  }
  SUBCASE("no target edges") {
    MultiBehaviorGraph g(2, 2, 2, {{{0, 0}}, {}});
    CHECK_THROWS_AS(leave_one_out_split(g, 1), DataError);
  }
}

TEST_CASE("edge dropout") {
  auto g = random_graph(100, 100, 2, 0.5, 3);
  SUBCASE("ratio zero keeps everything") {
    auto v = edge_dropout(g, 0.0, 1);
    CHECK(v.kept == g.edges(1));
  }
  SUBCASE("binomial count at one half") {
    std::vector<std::vector<Edge>> edges(1);
    for (std::uint32_t u = 0; u < 100; ++u) {
      for (std::uint32_t i = 0; i < 100; ++i) edges[0].push_back({u, i});
    }
    MultiBehaviorGraph full(100, 100, 1, edges);
    // sd = 50, so [4800, 5200] is a 4-sigma window.
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto v = edge_dropout(full, 0.5, seed);
      CHECK(v.kept.size() >= 4800);
      CHECK(v.kept.size() <= 5200);
    }
  }
  SUBCASE("seeded and a subset of the target edges") {
    auto a = edge_dropout(g, 0.3, 9, 1);
    auto b = edge_dropout(g, 0.3, 9, 1);
    auto c = edge_dropout(g, 0.3, 10, 2);
    CHECK(a.kept == b.kept);
    CHECK(a.kept != c.kept);
    std::set<Edge> all(g.edges(1).begin(), g.edges(1).end());
    for (const Edge& e : c.kept) CHECK(all.contains(e));
    CHECK(c.adjacency.user_offsets().size() == g.num_users() + 1);
    CHECK(c.adjacency.item_offsets().size() == g.num_items() + 1);
  }
  SUBCASE("ratio one is rejected") { CHECK_THROWS_AS(edge_dropout(g, 1.0, 1), std::invalid_argument); }
}

TEST_CASE("noise injection") {
  std::vector<std::vector<Edge>> edges(2);
  for (std::uint32_t n = 0; n < 100; ++n) edges[0].push_back({n % 20, n / 20});
  edges[1] = {{0, 0}, {1, 1}};
  MultiBehaviorGraph g(20, 30, 2, edges);
  auto noisy = inject_noise(g, 0.1, 4);
  CHECK(noisy.edges(0).size() == 110);
  CHECK(noisy.edges(1) == g.edges(1));
  std::set<Edge> original(g.edges(0).begin(), g.edges(0).end());
  std::size_t overlap = 0;
  for (const Edge& e : noisy.edges(0)) overlap += original.contains(e) ? 1 : 0;
  CHECK(overlap == 100);
  CHECK(inject_noise(g, 0.1, 4) == noisy);

  SUBCASE("dense graph rejects the request") {
    std::vector<std::vector<Edge>> dense(2);
    for (std::uint32_t u = 0; u < 3; ++u) {
      for (std::uint32_t i = 0; i < 3; ++i) dense[0].push_back({u, i});
    }
    dense[0].pop_back();
    dense[1] = {{0, 0}};
    MultiBehaviorGraph d(3, 3, 2, dense);
    CHECK_THROWS_AS(inject_noise(d, 0.5, 1), DataError);
    CHECK(inject_noise(d, 0.125, 1).edges(0).size() == 9);
  }
  SUBCASE("invalid ratio") { CHECK_THROWS_AS(inject_noise(g, 0.0, 1), std::invalid_argument); }
}
