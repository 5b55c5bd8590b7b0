#include <gtest/gtest.h>

#include <string>

#include "vlift/config.hpp"

using namespace vlift;
using nlohmann::json;

namespace {

const std::string kScenarios = VLIFT_SOURCE_DIR "/scenarios/";

json base() {
  return json::parse(R"({
    "schema_version": 1,
    "kernel": {"variant": "discrete", "nodes": [1.0], "weights": [1.0]},
    "space": {"A": [[-1.0]]},
    "problem": {"g": [[1.0]], "lambda": 0.5, "controls": {"lo": [-1.0], "hi": [1.0]}}
  })");
}

}  // namespace

TEST(Config, ShippedScenariosLoad) {
  for (const char* name : {"demo", "constant_psi", "zero", "fractional"}) {
    const auto c = load_config(kScenarios + name + ".json");
    EXPECT_EQ(c.name, name);
    const auto s = config_space(c);
    const auto p = config_problem(c);
    EXPECT_EQ(s.dim(), c.dim());
    EXPECT_NO_THROW(config_initial_state(c, s));
    EXPECT_EQ(config_hash(c.source).size(), 16u);
  }
  const auto demo = load_config(kScenarios + "demo.json");
  EXPECT_EQ(config_space(demo).nodes(), 4);
  EXPECT_TRUE(static_cast<bool>(config_problem(demo).exact_argmin));
  EXPECT_EQ(demo.bsde.features, FeatureSet::OutputConvolution);
}

TEST(Config, DefaultsAndInitialState) {
  const auto c = parse_config(base());
  EXPECT_EQ(c.f, "zero");
  EXPECT_EQ(c.scheme.dt, SchemeConfig{}.dt);
  EXPECT_EQ(c.controls.resolution, 101);
  EXPECT_EQ(c.seed, 0u);
  const auto s = config_space(c);
  EXPECT_EQ(config_initial_state(c, s).norm(), 0.0);

  auto j = base();
  j["history"] = {{"variant", "exponential_decay"}, {"c", {2.0}}, {"omega", 1.0}};
  const auto h = parse_config(j);
  const auto x = config_initial_state(h, config_space(h));
  // ∫₀^∞ e^{−t}·2e^{−t} dt = 1 for the single unit node.
  EXPECT_NEAR(x(0, 0), 1.0, 1e-14);
}

TEST(Config, HashTracksContent) {
  const auto a = base();
  auto b = base();
  EXPECT_EQ(config_hash(a), config_hash(b));
  b["seed"] = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, RejectsUnknownKeysEverywhere) {
  auto top = base();
  top["extra"] = 1;
  EXPECT_THROW(parse_config(top), ConfigError);
  auto prob = base();
  prob["problem"]["mu"] = 1;
  EXPECT_THROW(parse_config(prob), ConfigError);
  auto ctl = base();
  ctl["problem"]["controls"]["step"] = 0.1;
  EXPECT_THROW(parse_config(ctl), ConfigError);
  auto ker = base();
  ker["kernel"]["beta"] = 0.5;
  EXPECT_THROW(parse_config(ker), ConfigError);
  auto bsde = base();
  bsde["bsde"] = {{"horizon", 2.0}, {"order", 3}};
  EXPECT_THROW(parse_config(bsde), ConfigError);
  EXPECT_THROW(load_config(VLIFT_SOURCE_DIR "/tests/data/bad_config.json"), ConfigError);
}

TEST(Config, RejectsInconsistentValues) {
  auto noversion = base();
  noversion.erase("schema_version");
  EXPECT_THROW(parse_config(noversion), ConfigError);
  auto version = base();
  version["schema_version"] = 2;
  EXPECT_THROW(parse_config(version), ConfigError);
  auto steps = base();
  steps["scheme"] = {{"dt", 0.03}, {"T", 1.0}};
  EXPECT_THROW(parse_config(steps), ConfigError);
  auto frac = base();
  frac["kernel"] = {{"variant", "fractional"}, {"beta", 0.4}};
  EXPECT_THROW(parse_config(frac), ConfigError);
  auto shape = base();
  shape["space"]["A"] = {{-1.0, 0.0}};
  EXPECT_THROW(parse_config(shape), ConfigError);
  auto paths = base();
  paths["control"] = {{"paths", 0}};
  EXPECT_THROW(parse_config(paths), ConfigError);
  auto type = base();
  type["seed"] = "seven";
  EXPECT_THROW(parse_config(type), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Config, RegistryErrorsAreConfigErrors) {
  auto drift = base();
  drift["problem"]["f"] = "cubic(1)";
  EXPECT_THROW(config_problem(parse_config(drift)), ConfigError);
  auto args = base();
  args["problem"]["ell"] = "bounded_quadratic()";
  EXPECT_THROW(config_problem(parse_config(args)), ConfigError);
  auto lam = base();
  lam["problem"]["lambda"] = -1.0;
  EXPECT_THROW(config_problem(parse_config(lam)), ConfigError);
  // Total mass 1 equals the eigenvalue of A: the output map is undefined.
  auto singular = base();
  singular["space"]["A"] = {{1.0}};
  EXPECT_THROW(config_space(parse_config(singular)), ConfigError);
}
