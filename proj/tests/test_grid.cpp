#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fbsde/grid.hpp"

using namespace fbsde;

namespace {

GridSpec basic_spec() {
    GridSpec s;
    s.horizon = 1.0;
    s.time_steps = 100;
    s.x_axis = {-5.0, 5.0, 201};
    s.xtilde_axes = {{-1.0, 1.0, 3}};
    s.sup_vol_x = 0.8;
    return s;
}

}  // namespace

TEST_CASE("hermite table moments") {
    for (int m : {2, 4, 8, 12}) {
        auto gh = gauss_hermite(m);
        REQUIRE(gh.points.size() == static_cast<size_t>(m));
        double sum = 0.0;
        for (double w : gh.weights) sum += w;
        CHECK(sum == Catch::Approx(1.0).margin(1e-15));
        auto moment = [&](int k) {
            double s = 0.0;
            for (int i = 0; i < m; ++i) s += gh.weights[i] * std::pow(gh.points[i], k);
            return s;
        };
        CHECK(std::abs(moment(1)) < 1e-14);
        CHECK(std::abs(moment(3)) < 1e-14);
        CHECK(std::abs(moment(5)) < 1e-13);
        CHECK(moment(2) == Catch::Approx(1.0).epsilon(1e-12));
        if (m >= 4) CHECK(moment(4) == Catch::Approx(3.0).epsilon(1e-12));
        if (m >= 8) CHECK(moment(6) == Catch::Approx(15.0).epsilon(1e-11));
    }
    CHECK_THROWS_AS(gauss_hermite(1), ConfigError);
}

TEST_CASE("grid construction and margin rule") {
    auto g = build_grid(basic_spec(), 8);
    CHECK(g.nodes() == 3 * 201);
    CHECK(g.dt() == Catch::Approx(0.01));
    CHECK(g.x_axis().step() == Catch::Approx(0.05));

    auto tight = basic_spec();
    tight.x_axis = {0.0, 0.1, 11};
    tight.sup_vol_x = 1.0;
    CHECK_THROWS_AS(build_grid(tight, 8), DomainTooSmall);

    auto offcenter = basic_spec();
    offcenter.x0 = 4.9;  // right margin collapses
    CHECK_THROWS_AS(build_grid(offcenter, 8), DomainTooSmall);

    auto coarse = basic_spec();
    coarse.x_axis.count = 2;
    CHECK_THROWS_AS(build_grid(coarse, 8), ConfigError);

    auto degenerate = basic_spec();
    degenerate.x_axis.hi = degenerate.x_axis.lo;
    CHECK_THROWS_AS(build_grid(degenerate, 8), ConfigError);
}

TEST_CASE("node indexing round trip") {
    GridSpec s = basic_spec();
    s.xtilde_axes = {{-1.0, 1.0, 3}, {-2.0, 2.0, 5}};
    s.x_axis = {-5.0, 5.0, 7};
    auto g = build_grid(s, 4);
    REQUIRE(g.nodes() == 3 * 5 * 7);
    double xt[2], x;
    long node = 0;
    for (int i0 = 0; i0 < 3; ++i0)
        for (int i1 = 0; i1 < 5; ++i1)
            for (int ix = 0; ix < 7; ++ix, ++node) {
                int ixt[2] = {i0, i1};
                REQUIRE(g.node_index(ixt, ix) == node);
                g.node_coords(node, xt, x);
                CHECK(xt[0] == g.xtilde_axes()[0].coord(i0));
                CHECK(xt[1] == g.xtilde_axes()[1].coord(i1));
                CHECK(x == g.x_axis().coord(ix));
            }
}
