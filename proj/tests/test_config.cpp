#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "mbssl/config.hpp"

using namespace mbssl;

TEST_CASE("defaults") {
  RunConfig c;
  CHECK(c.dim == 64);
  CHECK(c.layers == 4);
  CHECK(c.learning_rate == 0.001);
  CHECK(c.embedding_dropout == 0.3);
  CHECK(c.edge_dropout == 0.5);
  CHECK(c.swing_alpha == 0.5);
  CHECK(c.temperature == 0.2);
  CHECK(c.negative_weight == std::vector<double>{0.1});
  CHECK(c.synthetic.users == 300);
  CHECK(c.synthetic.items == 500);
  CHECK(c.synthetic.behaviors == 3);
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("text round trip") {
  RunConfig c;
  c.dim = 16;
  c.temperature = 0.1 + 0.2;  // not exactly representable in short decimal
  c.lambda = {0.25, 0.25, 0.5};
  c.cutoffs = {5, 20};
  c.disable_cdm = true;
  c.strategy = "strategy-b";
  c.synthetic.cascade = {0.7, 0.4};
  const RunConfig back = parse_config_text(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.temperature == c.temperature);
  CHECK(back.lambda == c.lambda);
  CHECK(back.cutoffs == c.cutoffs);
  CHECK(back.disable_cdm);
  CHECK(back.synthetic.cascade == c.synthetic.cascade);

  const auto path = std::filesystem::temp_directory_path() / "mbssl_config_roundtrip.txt";
  save_config(path, c);
  CHECK(load_config(path).to_text() == c.to_text());
}

TEST_CASE("parsing") {
  SUBCASE("comments, blanks and whitespace") {
    const RunConfig c = parse_config_text("# header\n\n  dim = 8   # trailing\nepochs=3\n");
    CHECK(c.dim == 8);
    CHECK(c.epochs == 3);
  }
  SUBCASE("unknown key lists the valid keys") {
    try {
      parse_config_text("dim = 8\nbogus = 1\n", "c.cfg");
      FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("c.cfg:2") != std::string::npos);
      CHECK(msg.find("bogus") != std::string::npos);
      CHECK(msg.find("temperature") != std::string::npos);
    }
  }
  SUBCASE("malformed values") {
    CHECK_THROWS_AS(parse_config_text("dim = eight"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("dim = -1"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("temperature = 0.2x"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("disable_cdm = maybe"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_text("just words"), std::invalid_argument);
  }
  SUBCASE("a dataset path requires num_behaviors") {
    const RunConfig c = parse_config_text("dataset = data.tsv\n");
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    CHECK_NOTHROW(parse_config_text("dataset = data.tsv\nnum_behaviors = 3\n").validate());
  }
  SUBCASE("range checks") {
    CHECK_THROWS(parse_config_text("temperature = 0").validate());
    CHECK_THROWS(parse_config_text("edge_dropout = 1").validate());
    CHECK_THROWS(parse_config_text("shared_parameters = some").validate());
    CHECK_THROWS(parse_config_text("synthetic_density = 0").validate());
    CHECK_THROWS(parse_config_text("synthetic_cascade = 0.5, 0.5, 0.5").validate());
  }
}

TEST_CASE("overrides") {
  RunConfig c;
  apply_override(c, "epochs=7");
  apply_override(c, " cutoffs = 1,2,3 ");
  CHECK(c.epochs == 7);
  CHECK(c.cutoffs == std::vector<std::size_t>{1, 2, 3});
  CHECK(c.get("epochs") == "7");
  CHECK_THROWS_AS(apply_override(c, "epochs"), std::invalid_argument);
  CHECK_THROWS_AS(apply_override(c, "nope=1"), std::invalid_argument);
  CHECK(RunConfig::keys().front() == "dataset");
}

TEST_CASE("synthetic spec files use short keys") {
  const SyntheticSpec s = parse_synthetic_spec("users = 20\nitems = 30\nbehaviors = 2\ncascade = 1\nseed = 9\n");
  CHECK(s.users == 20);
  CHECK(s.items == 30);
  CHECK(s.behaviors == 2);
  CHECK(s.cascade == std::vector<double>{1.0});
  CHECK(s.seed == 9);
  CHECK_THROWS_AS(parse_synthetic_spec("dim = 3\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_synthetic_spec("density = 2\n"), std::invalid_argument);
}
