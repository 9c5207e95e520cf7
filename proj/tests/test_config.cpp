#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include <json.hpp>

#include "fbsde/config.hpp"

using namespace fbsde;
using nlohmann::json;

namespace {

json full_doc() {
    return json::parse(R"({
      "utility": {"family": "softplus_blend", "lo": 1.0, "hi": 8.0,
                  "sharpness": 12.0, "center": 0.78},
      "market": {
        "dim_n": 1, "dim_d1": 1, "dim_d2": 1,
        "mu": [[{"kind": "constant", "value": 0.05}]],
        "sigma": [[{"kind": "constant", "value": 0.2}], []],
        "theta": [[{"kind": "constant", "value": 0.6}], []],
        "terminal": [
          {"kind": "sine", "arg": -1, "amplitude": 0.5, "frequency": 1.0},
          {"kind": "sine", "arg": 0, "amplitude": 0.3, "frequency": 1.0}
        ],
        "sup_h": 0.8
      },
      "fbsde": {"form": "p", "epsilon": "auto"},
      "grid": {
        "horizon": 1.0, "time_steps": 50,
        "x_axis": {"lo": -6.2, "hi": 7.2, "points": 269},
        "xtilde_axes": [{"lo": -4.0, "hi": 4.0, "points": 21}],
        "x0": 0.5, "xtilde0": [0.2],
        "sup_vol_x": 1.0, "sup_vol_xtilde": [0.4],
        "quadrature_nodes": 8
      },
      "simulate": {"n_paths": 10000, "n_steps": 200, "seed": 1, "csv_paths": 100},
      "verify": ["martingale", "gradient_band"],
      "output": "out_sine"
    })");
}

}  // namespace

TEST_CASE("full document round trip") {
    const RunConfig rc = parse_config(full_doc());
    CHECK(rc.utility.family == KappaFamily::SoftplusBlend);
    CHECK(rc.utility.hi == 8.0);
    CHECK(rc.market->dim_n() == 1);
    CHECK(rc.market->dim_d() == 2);
    CHECK(rc.market->sup_h() == 0.8);
    CHECK(rc.market->lip_h_x() == 0.5);
    CHECK(rc.form == SystemForm::PForm);
    CHECK(rc.epsilon_auto);
    CHECK(rc.grid.time_steps == 50);
    CHECK(rc.grid.x_axis.count == 269);
    CHECK(rc.grid.xtilde_axes.size() == 1);
    CHECK(rc.grid.x0 == 0.5);
    CHECK(rc.grid.xtilde0 == std::vector<double>{0.2});
    CHECK(rc.quad_nodes == 8);
    CHECK(rc.has_simulate);
    CHECK(rc.sim.n_paths == 10000);
    CHECK(rc.sim.n_steps == 200);
    CHECK(rc.sim.seed == 1);
    CHECK(rc.csv_paths == 100);
    CHECK(rc.checks == std::vector<std::string>{"martingale", "gradient_band"});
    CHECK(rc.corrupt_field_shift == 0.0);
    CHECK(rc.output_dir == "out_sine");
}

TEST_CASE("defaults for optional sections") {
    json d = full_doc();
    d.erase("simulate");
    d.erase("verify");
    d.erase("output");
    const RunConfig rc = parse_config(d);
    CHECK_FALSE(rc.has_simulate);
    CHECK(rc.checks.empty());
    CHECK(rc.output_dir == "out");

    json d2 = full_doc();
    d2["simulate"].erase("n_steps");
    d2["simulate"].erase("csv_paths");
    const RunConfig rc2 = parse_config(d2);
    CHECK(rc2.sim.n_steps == 50);  // falls back to grid.time_steps
    CHECK(rc2.csv_paths == 100);

    json d3 = full_doc();
    d3["grid"].erase("quadrature_nodes");
    CHECK(parse_config(d3).quad_nodes == 8);
}

TEST_CASE("explicit epsilon") {
    json d = full_doc();
    d["fbsde"]["epsilon"] = 0.25;
    const RunConfig rc = parse_config(d);
    CHECK_FALSE(rc.epsilon_auto);
    CHECK(rc.epsilon == 0.25);

    d["fbsde"]["epsilon"] = -1.0;
    CHECK_THROWS_AS(parse_config(d), ConfigError);
    d["fbsde"]["epsilon"] = "default";
    CHECK_THROWS_AS(parse_config(d), ConfigError);
    d["fbsde"]["form"] = "q";
    CHECK_THROWS_AS(parse_config(d), ConfigError);
}

TEST_CASE("unknown keys rejected at every level") {
    auto reject = [](json d) { CHECK_THROWS_AS(parse_config(d), ConfigError); };
    json d = full_doc();
    d["extra"] = 1;
    reject(d);
    d = full_doc();
    d["utility"]["extra"] = 1;
    reject(d);
    d = full_doc();
    d["market"]["extra"] = 1;
    reject(d);
    d = full_doc();
    d["fbsde"]["extra"] = 1;
    reject(d);
    d = full_doc();
    d["grid"]["extra"] = 1;
    reject(d);
    d = full_doc();
    d["grid"]["x_axis"]["extra"] = 1;
    reject(d);
    d = full_doc();
    d["simulate"]["extra"] = 1;
    reject(d);
    d = full_doc();
    d["market"]["terminal"][0]["extra"] = 1;
    reject(d);
}

TEST_CASE("missing required keys named in the message") {
    json d = full_doc();
    d["grid"].erase("sup_vol_x");
    CHECK_THROWS_WITH(parse_config(d),
                      Catch::Matchers::ContainsSubstring("sup_vol_x"));
    d = full_doc();
    d["utility"].erase("family");
    CHECK_THROWS_WITH(parse_config(d), Catch::Matchers::ContainsSubstring("family"));
    d = full_doc();
    d.erase("market");
    CHECK_THROWS_WITH(parse_config(d), Catch::Matchers::ContainsSubstring("market"));
    d = full_doc();
    d["grid"].erase("xtilde_axes");  // sup_vol_xtilde without axes is fine to keep
    d["grid"].erase("xtilde0");
    d["grid"].erase("sup_vol_xtilde");
    CHECK(parse_config(d).grid.xtilde_axes.empty());
}

TEST_CASE("type errors rejected") {
    json d = full_doc();
    d["grid"]["time_steps"] = 2.5;
    CHECK_THROWS_WITH(parse_config(d), Catch::Matchers::ContainsSubstring("integer"));
    d = full_doc();
    d["grid"]["horizon"] = "one";
    CHECK_THROWS_AS(parse_config(d), ConfigError);
    d = full_doc();
    d["simulate"]["seed"] = -4;
    CHECK_THROWS_WITH(parse_config(d), Catch::Matchers::ContainsSubstring("non-negative"));
    d = full_doc();
    d["verify"] = "martingale";
    CHECK_THROWS_AS(parse_config(d), ConfigError);
}

TEST_CASE("term grammar") {
    json d = full_doc();
    d["market"]["mu"] = json::parse(
        R"([[{"kind": "linear", "arg": 0, "slope": 0.1},
             {"kind": "sine", "arg": 0, "amplitude": 0.2, "frequency": 2.0, "phase": 0.5}]])");
    const RunConfig rc = parse_config(d);
    const auto& mu = rc.market->params().mu[0];
    REQUIRE(mu.terms.size() == 2);
    CHECK(mu.terms[0].kind == TermSpec::Kind::Linear);
    CHECK(mu.terms[1].phase == 0.5);

    d["market"]["mu"] = json::parse(R"([[{"kind": "sine", "arg": 0, "amplitude": 0.2}]])");
    CHECK_THROWS_WITH(parse_config(d), Catch::Matchers::ContainsSubstring("frequency"));
    d["market"]["mu"] = json::parse(R"([[{"kind": "cubic", "arg": 0}]])");
    CHECK_THROWS_AS(parse_config(d), ConfigError);
    // x-argument is only legal in the terminal coefficient
    d["market"]["mu"] = json::parse(R"([[{"kind": "linear", "arg": -1, "slope": 0.1}]])");
    CHECK_THROWS_AS(parse_config(d), ConfigError);
}

TEST_CASE("semantic validation propagates") {
    json d = full_doc();
    d["market"]["sigma"] = json::parse(R"([[{"kind": "constant", "value": 0.2}]])");
    CHECK_THROWS_AS(parse_config(d), ConfigError);  // needs N x d entries
    d = full_doc();
    d["utility"] = json::parse(R"({"family": "linear", "gamma": -2.0})");
    CHECK_THROWS_AS(parse_config(d), InvalidFamilyParams);
    d = full_doc();
    d["utility"] =
        json::parse(R"({"family": "softplus_blend", "lo": 3.0, "hi": 1.0,
                        "sharpness": 12.0, "center": 0.0})");
    CHECK_THROWS_AS(parse_config(d), InvalidFamilyParams);
}

TEST_CASE("verify list validation") {
    json d = full_doc();
    d["verify"] = json::array({"martingale", "martingale", "closed_form"});
    const RunConfig rc = parse_config(d);
    CHECK(rc.checks == std::vector<std::string>{"martingale", "closed_form"});
    d["verify"] = json::array({"spectral"});
    CHECK_THROWS_WITH(parse_config(d), Catch::Matchers::ContainsSubstring("spectral"));
}

TEST_CASE("corrupt shift knob") {
    json d = full_doc();
    d["corrupt_field_shift"] = 0.05;
    CHECK(parse_config(d).corrupt_field_shift == 0.05);
}

TEST_CASE("file loading") {
    CHECK_THROWS_WITH(load_config("/nonexistent/path.json"),
                      Catch::Matchers::ContainsSubstring("cannot open"));
    const auto p = std::filesystem::temp_directory_path() / "fbsde_cfg_broken.json";
    { std::ofstream(p) << "{ nope"; }
    CHECK_THROWS_WITH(load_config(p.string()),
                      Catch::Matchers::ContainsSubstring("not valid JSON"));
    { std::ofstream(p) << full_doc().dump(); }
    CHECK(load_config(p.string()).market->dim_d() == 2);
    std::filesystem::remove(p);
}
