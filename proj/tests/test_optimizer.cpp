#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "mbssl/optimizer.hpp"
#include "test_util.hpp"

using namespace mbssl;
using mbssl::testing::random_matrix;

namespace {

NamedGradients vec(std::vector<double> v) { return {{"w", Tensor::vector(std::move(v))}}; }

std::vector<double> values(const Tensor& t) { return {t.values().begin(), t.values().end()}; }
std::vector<double> values(const NamedGradients& g) { return values(g.at("w")); }

NamedGradients random_grads(std::mt19937_64& rng, double scale = 1.0) {
  NamedGradients g;
  g["a"] = random_matrix(3, 4, rng, -scale, scale);
  g["b"] = random_matrix(1, 5, rng, -scale, scale);
  g["c"] = random_matrix(2, 2, rng, -scale, scale);
  return g;
}

double cosine(const NamedGradients& a, const NamedGradients& b) { return dot(a, b) / (norm(a) * norm(b)); }

bool bitwise_equal(const NamedGradients& a, const NamedGradients& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [n, t] : a) {
    const auto& u = b.at(n);
    if (t.size() != u.size()) return false;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (std::memcmp(t.values().data() + i, u.values().data() + i, sizeof(double)) != 0) return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("projection examples") {
  auto none = project_if_conflicting(vec({1, 1}), vec({0, 1}), Granularity::per_tensor);
  CHECK_FALSE(none.applied);
  CHECK(values(none.gradients) == std::vector<double>{1, 1});

  auto conflict = project_if_conflicting(vec({1, -1}), vec({0, 1}), Granularity::per_tensor);
  CHECK(conflict.applied);
  CHECK(values(conflict.gradients) == std::vector<double>{1, 0});

  auto opposite = project_if_conflicting(vec({-2, -3}), vec({2, 3}), Granularity::per_tensor);
  CHECK(norm(opposite.gradients) < 1e-15);

  auto zero_target = project_if_conflicting(vec({1, -1}), vec({0, 0}), Granularity::per_tensor);
  CHECK(zero_target.skipped_units == 1);
  CHECK(values(zero_target.gradients) == std::vector<double>{1, -1});
}

TEST_CASE("projection removes the conflicting component in every random trial") {
  std::mt19937_64 rng(42);
  int conflicting = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const auto tar = random_grads(rng);
    const auto aux = random_grads(rng, 3.0);
    const auto granularity = trial % 2 ? Granularity::global : Granularity::per_tensor;
    const auto r = project_if_conflicting(aux, tar, granularity);
    if (granularity == Granularity::global) {
      if (dot(aux, tar) < 0.0) {
        ++conflicting;
        CHECK(r.applied);
        CHECK(std::abs(dot(r.gradients, tar)) < 1e-9);
      } else {
        CHECK(bitwise_equal(r.gradients, aux));
      }
    } else {
      for (const auto& [name, t] : tar) {
        const double before = squared_norm(t) > 0 ? dot({{name, aux.at(name)}}, {{name, t}}) : 0.0;
        const double after = dot({{name, r.gradients.at(name)}}, {{name, t}});
        if (before < 0.0) {
          ++conflicting;
          CHECK(std::abs(after) < 1e-9);
        } else {
          CHECK(after == before);
        }
      }
    }
  }
  CHECK(conflicting > 1000);
}

TEST_CASE("magnitude balancing examples") {
  auto full = balance_magnitude(vec({3, 4}), vec({0, 2.5}), 1.0, Granularity::per_tensor);
  CHECK(std::abs(values(full)[0] - 1.5) < 1e-15);
  CHECK(std::abs(values(full)[1] - 2.0) < 1e-15);
  auto none = balance_magnitude(vec({3, 4}), vec({0, 2.5}), 0.0, Granularity::per_tensor);
  CHECK(values(none) == std::vector<double>{3, 4});
  auto half = balance_magnitude(vec({3, 4}), vec({0, 2.5}), 0.5, Granularity::per_tensor);
  CHECK(std::abs(values(half)[0] - 2.25) < 1e-15);
  CHECK(std::abs(values(half)[1] - 3.0) < 1e-15);
  CHECK(std::abs(norm(half) - 3.75) < 1e-12);
  auto zero = balance_magnitude(vec({0, 0}), vec({0, 2.5}), 0.5, Granularity::per_tensor);
  CHECK(values(zero) == std::vector<double>{0, 0});
}

TEST_CASE("balancing obeys the norm law and keeps direction") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 10000; ++trial) {
    const auto tar = random_grads(rng, 0.1 + 4 * unit(rng));
    const auto aux = random_grads(rng, 0.1 + 4 * unit(rng));
    const double r = unit(rng);
    const auto out = balance_magnitude(aux, tar, r, Granularity::global);
    CHECK(std::abs(norm(out) - (r * norm(tar) + (1 - r) * norm(aux))) < 1e-9);
    CHECK(std::abs(cosine(out, aux) - 1.0) < 1e-12);
    const auto per = balance_magnitude(aux, tar, r, Granularity::per_tensor);
    for (const auto& [name, t] : tar) {
      const double expected = r * std::sqrt(squared_norm(t)) + (1 - r) * std::sqrt(squared_norm(aux.at(name)));
      CHECK(std::abs(std::sqrt(squared_norm(per.at(name))) - expected) < 1e-9);
    }
  }
}

TEST_CASE("hmg combination") {
  OptimizerConfig cfg;
  cfg.relax = 1.0;

  SUBCASE("worked example: project then rescale") {
    TaskGradients g{vec({0, 1}), {"aux"}, {vec({2, -2})}, {}};
    StepDiagnostics diag;
    const auto combined = combine_gradients(g, cfg, &diag);
    CHECK(std::abs(values(combined)[0] - 1.0) < 1e-15);
    CHECK(std::abs(values(combined)[1] - 1.0) < 1e-15);
    REQUIRE(diag.auxiliaries.size() == 1);
    CHECK(diag.auxiliaries[0].conflict);
    CHECK(diag.auxiliaries[0].projected);
    CHECK(std::abs(diag.auxiliaries[0].post_norm - 1.0) < 1e-15);
  }
  SUBCASE("small auxiliaries pass through untouched") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial) {
      const auto tar = random_grads(rng, 5.0);
      TaskGradients g{tar, {"x", "y"}, {random_grads(rng, 0.01), random_grads(rng, 0.01)}, {}};
      StepDiagnostics diag;
      const auto combined = combine_gradients(g, cfg, &diag);
      NamedGradients plain = tar;
      accumulate(plain, g.auxiliaries[0]);
      accumulate(plain, g.auxiliaries[1]);
      CHECK(bitwise_equal(combined, plain));
      for (const auto& rec : diag.auxiliaries) {
        CHECK_FALSE(rec.projected);
        CHECK(rec.post_norm == rec.pre_norm);
      }
    }
  }
  SUBCASE("r = 0 without conflicts is a plain sum") {
    cfg.relax = 0.0;
    TaskGradients g{vec({1, 1}), {"aux"}, {vec({5, 7})}, {}};
    CHECK(values(combine_gradients(g, cfg)) == std::vector<double>{6, 8});
  }
  SUBCASE("gated units either pass bitwise or end non-conflicting") {
    std::mt19937_64 rng(17);
    cfg.relax = 0.5;
    for (int trial = 0; trial < 2000; ++trial) {
      const auto tar = random_grads(rng, 1.0);
      const auto aux = random_grads(rng, 1.5);
      TaskGradients g{tar, {"aux"}, {aux}, {}};
      const auto combined = combine_gradients(g, cfg);
      for (const auto& [name, t] : tar) {
        Tensor manipulated = combined.at(name);
        const Tensor& tt = t;
        for (std::size_t i = 0; i < manipulated.size(); ++i) manipulated[i] -= tt[i];
        const bool gated = squared_norm(aux.at(name)) > squared_norm(t);
        if (gated) {
          CHECK(dot({{name, manipulated}}, {{name, t}}) >= -1e-9);
        } else {
          CHECK(mbssl::testing::max_abs_diff(manipulated, aux.at(name)) < 1e-15);
        }
      }
    }
  }
}

TEST_CASE("strategies") {
  OptimizerConfig cfg;
  cfg.relax = 1.0;
  const auto tar = vec({0, 1});

  SUBCASE("A leaves non-conflicting auxiliaries alone") {
    cfg.strategy = Strategy::strategy_a;
    TaskGradients g{tar, {"aux"}, {vec({0.1, 5})}, {}};
    CHECK(values(combine_gradients(g, cfg)) == std::vector<double>{0.1, 6});
  }
  SUBCASE("A projects small conflicting auxiliaries") {
    cfg.strategy = Strategy::strategy_a;
    TaskGradients g{tar, {"aux"}, {vec({0.1, -0.2})}, {}};
    CHECK(values(combine_gradients(g, cfg)) == std::vector<double>{0.1, 1});
  }
  SUBCASE("B at r = 1 equalizes every auxiliary norm to the target norm") {
    cfg.strategy = Strategy::strategy_b;
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 100; ++trial) {
      const auto t = random_grads(rng);
      TaskGradients g{t, {"x", "y"}, {random_grads(rng, 0.01), random_grads(rng, 10.0)}, {}};
      cfg.granularity = Granularity::global;
      StepDiagnostics diag;
      combine_gradients(g, cfg, &diag);
      for (const auto& rec : diag.auxiliaries) CHECK(std::abs(rec.post_norm - norm(t)) < 1e-9);
    }
  }
  SUBCASE("C is project-all then balance-all") {
    cfg.strategy = Strategy::strategy_c;
    cfg.relax = 0.5;
    const auto aux = vec({0.3, -0.4});
    TaskGradients g{tar, {"aux"}, {aux}, {}};
    const auto projected = project_if_conflicting(aux, tar, Granularity::per_tensor).gradients;
    const auto balanced = balance_magnitude(projected, tar, 0.5, Granularity::per_tensor);
    // (0.3, 0) rescaled by 0.5 * 1 / 0.3 + 0.5 -> (0.65, 0)
    CHECK(std::abs(values(balanced)[0] - 0.65) < 1e-15);
    const auto combined = combine_gradients(g, cfg);
    CHECK(std::abs(values(combined)[0] - 0.65) < 1e-15);
    CHECK(std::abs(values(combined)[1] - 1.0) < 1e-15);
  }
  SUBCASE("fixed weights scale auxiliaries") {
    cfg.strategy = Strategy::fixed_weights;
    TaskGradients g{tar, {"x", "y"}, {vec({1, 0}), vec({0, 4})}, {2.0, 0.5}};
    CHECK(values(combine_gradients(g, cfg)) == std::vector<double>{2, 3});
  }
}

TEST_CASE("shared-parameter filter leaves other tensors as a plain sum") {
  OptimizerConfig cfg;
  cfg.relax = 1.0;
  cfg.shared = [](const std::string& n) { return n == "a"; };
  NamedGradients tar{{"a", Tensor::vector({0, 1})}, {"b", Tensor::vector({0, 1})}};
  NamedGradients aux{{"a", Tensor::vector({2, -2})}, {"b", Tensor::vector({2, -2})}};
  TaskGradients g{tar, {"aux"}, {aux}, {}};
  const auto combined = combine_gradients(g, cfg);
  CHECK(values(combined.at("a")) == std::vector<double>{1, 1});
  CHECK(values(combined.at("b")) == std::vector<double>{2, -1});
}

TEST_CASE("adaptive-moment update") {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.1;

  SUBCASE("first step moves each coordinate by about the learning rate") {
    ParameterStore ps;
    ps.add("w", Tensor::vector({1.0, -2.0, 0.5}));
    AdamState adam;
    adam.update(ps, {{"w", Tensor::vector({0.3, -4.0, 0.0})}}, cfg);
    const auto& w = ps.get("w");
    CHECK(std::abs(w[0] - (1.0 - 0.1 * 0.3 / (0.3 + 1e-8))) < 1e-12);
    CHECK(std::abs(w[1] - (-2.0 + 0.1 * 4.0 / (4.0 + 1e-8))) < 1e-12);
    CHECK(w[2] == 0.5);
  }
  SUBCASE("zero gradient keeps parameters and decays moments") {
    ParameterStore ps;
    ps.add("w", Tensor::vector({1.0}));
    AdamState adam;
    adam.update(ps, {{"w", Tensor::vector({1.0})}}, cfg);
    const double after_first = ps.get("w")[0];
    const double m1 = (*adam.first_moment("w"))[0];
    const double v1 = (*adam.second_moment("w"))[0];
    ps.get("w")[0] = 5.0;
    adam.update(ps, {}, cfg);
    CHECK((*adam.first_moment("w"))[0] == doctest::Approx(0.9 * m1));
    CHECK((*adam.second_moment("w"))[0] == doctest::Approx(0.999 * v1));
    CHECK(after_first < 1.0);

    ParameterStore fresh;
    fresh.add("w", Tensor::vector({2.0}));
    AdamState idle;
    idle.update(fresh, {}, cfg);
    CHECK(fresh.get("w")[0] == 2.0);
  }
  SUBCASE("convex quadratic loss decreases monotonically after warm-up") {
    ParameterStore ps;
    ps.add("w", Tensor::vector({3.0, -2.0, 1.5}));
    const std::vector<double> scale{1.0, 4.0, 0.5};
    auto loss = [&] {
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i) s += 0.5 * scale[i] * ps.get("w")[i] * ps.get("w")[i];
      return s;
    };
    AdamState adam;
    cfg.learning_rate = 0.01;
    double prev = loss();
    for (int step = 1; step <= 100; ++step) {
      Tensor g(Shape{3});
      for (std::size_t i = 0; i < 3; ++i) g[i] = scale[i] * ps.get("w")[i];
      adam.update(ps, {{"w", g}}, cfg);
      const double now = loss();
      if (step > 5) CHECK(now < prev);
      prev = now;
    }
  }
}

TEST_CASE("config validation and names") {
  OptimizerConfig cfg;
  cfg.relax = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.relax = 0.5;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  for (auto s : {Strategy::hmg, Strategy::strategy_a, Strategy::strategy_b, Strategy::strategy_c,
                 Strategy::fixed_weights}) {
    CHECK(parse_strategy(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_strategy("sgd"), std::invalid_argument);
  CHECK(parse_granularity("global-flatten") == Granularity::global);
}

TEST_CASE("diagnostics log recounts conflict proportions") {
  std::mt19937_64 rng(23);
  DiagnosticsLog log;
  OptimizerConfig cfg;
  std::map<std::size_t, std::pair<int, int>> recount;
  for (std::size_t epoch = 1; epoch <= 3; ++epoch) {
    for (std::size_t step = 0; step < 10; ++step) {
      TaskGradients g{random_grads(rng), {"x", "y", "z"}, {random_grads(rng), random_grads(rng), random_grads(rng)},
                      {}};
      StepDiagnostics diag;
      combine_gradients(g, cfg, &diag);
      log.record(epoch, step, diag);
      for (const auto& rec : diag.auxiliaries) {
        recount[epoch].first += rec.conflict;
        recount[epoch].second += 1;
      }
    }
  }
  for (const auto& [epoch, counts] : recount) {
    const double p = log.conflict_proportion(epoch);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(p == static_cast<double>(counts.first) / counts.second);
  }
  CHECK(log.conflict_proportion(99) == 0.0);

  const auto dir = std::filesystem::temp_directory_path();
  log.write_steps(dir / "mbssl_diag_steps.csv");
  log.write_epochs(dir / "mbssl_diag_epochs.csv");
  std::ifstream steps(dir / "mbssl_diag_steps.csv");
  std::string header;
  std::getline(steps, header);
  CHECK(header == "epoch,step,aux_name,conflict,pre_norm,post_norm,projected");
  std::size_t lines = 0;
  for (std::string line; std::getline(steps, line);) ++lines;
  CHECK(lines == 90);
  std::ifstream epochs(dir / "mbssl_diag_epochs.csv");
  std::getline(epochs, header);
  CHECK(header == "epoch,conflict_proportion");
}
