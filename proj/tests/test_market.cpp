#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fbsde/market.hpp"

using namespace fbsde;

namespace {

MarketSpec two_asset(double theta0 = 0.3, double theta1 = 0.7) {
    MarketParams p;
    p.dim_n = 1;
    p.dim_d1 = 1;
    p.dim_d2 = 1;
    p.theta = {CoefficientFn::constant(theta0), CoefficientFn::constant(theta1)};
    return MarketSpec(p);
}

}  // namespace

TEST_CASE("theta split projections") {
    auto m = two_asset();
    double xt[1] = {0.0};
    auto [p1, p2] = split_theta(m, 0.0, xt);
    CHECK(p1 == std::vector<double>{0.3, 0.0});
    CHECK(p2 == std::vector<double>{0.0, 0.7});

    MarketParams q;
    q.dim_n = 1;
    q.dim_d1 = 2;
    q.dim_d2 = 0;
    q.theta = {CoefficientFn::constant(0.1), CoefficientFn::constant(-0.2)};
    auto [a, b] = split_theta(MarketSpec(q), 0.0, xt);
    CHECK(b == std::vector<double>{0.0, 0.0});
    CHECK(a == std::vector<double>{0.1, -0.2});
}

TEST_CASE("projection algebra on random vectors") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    const int d1 = 2, d2 = 3, d = d1 + d2;
    double v[d], a[d], b[d], aa[d], ab[d];
    for (int trial = 0; trial < 50; ++trial) {
        for (double& x : v) x = u(rng);
        project_tradable(v, a, d1, d2);
        project_untradable(v, b, d1, d2);
        double n2 = 0.0;
        for (int i = 0; i < d; ++i) {
            CHECK(a[i] + b[i] == v[i]);
            n2 += a[i] * a[i] + b[i] * b[i];
        }
        CHECK(n2 == Catch::Approx(dot(v, v, d)));
        project_tradable(a, aa, d1, d2);
        project_untradable(a, ab, d1, d2);
        for (int i = 0; i < d; ++i) {
            CHECK(aa[i] == a[i]);
            CHECK(ab[i] == 0.0);
        }
    }
}

TEST_CASE("c2 audit accepts the bounded sine terminal") {
    MarketParams p;
    p.dim_n = 1;
    p.dim_d1 = 1;
    p.dim_d2 = 1;
    p.theta = {CoefficientFn::constant(0.3), CoefficientFn::constant(0.0)};
    p.terminal.terms = {TermSpec::sine(-1, 0.5, 1.0)};
    MarketSpec m(p);
    CHECK(m.lip_h_x() == 0.5);
    CHECK(m.sup_h() == 0.5);
    auto rep = validate_c2(m, 512, 3);
    INFO((rep.first_failure() ? rep.first_failure()->name : std::string()));
    CHECK(rep.passed());
}

TEST_CASE("c2 audit rejects unit terminal slope") {
    MarketParams p;
    p.dim_n = 1;
    p.dim_d1 = 1;
    p.dim_d2 = 0;
    p.theta = {CoefficientFn::constant(0.0)};
    p.terminal.terms = {TermSpec::linear(-1, 1.0)};
    p.sup_h = 1e9;  // boundedness is not the point of this case
    MarketSpec m(p);
    CHECK(m.lip_h_x() == 1.0);
    auto rep = validate_c2(m, 128, 5);
    CHECK_FALSE(rep.passed());
    REQUIRE(rep.first_failure() != nullptr);
    CHECK(rep.first_failure()->name == "terminal_x_gate");
}

TEST_CASE("constant theta has zero probed lipschitz ratio") {
    auto m = two_asset();
    auto rep = validate_c2(m, 64, 9);
    CHECK(rep.passed());
    for (const auto& c : rep.checks)
        if (c.name == "lip_theta_probed") CHECK(c.observed == 0.0);
}

TEST_CASE("probed ratios stay under catalogue declarations") {
    MarketParams p;
    p.dim_n = 2;
    p.dim_d1 = 1;
    p.dim_d2 = 1;
    p.mu = {CoefficientFn{{TermSpec::constant(0.1), TermSpec::linear(0, -0.4)}},
            CoefficientFn{{TermSpec::sine(1, 0.3, 2.0)}}};
    p.sigma = {CoefficientFn::constant(0.5), CoefficientFn{{TermSpec::sine(0, 0.2, 1.0)}},
               CoefficientFn::constant(0.0), CoefficientFn::constant(0.4)};
    p.theta = {CoefficientFn{{TermSpec::sine(0, 0.25, 1.5)}}, CoefficientFn::constant(0.0)};
    p.terminal.terms = {TermSpec::sine(-1, 0.5, 1.0), TermSpec::sine(0, 0.2, 1.0)};
    MarketSpec m(p);
    auto rep = validate_c2(m, 1024, 17);
    INFO((rep.first_failure() ? rep.first_failure()->name : std::string()));
    CHECK(rep.passed());
    CHECK(m.depends_on_xtilde());
    CHECK_FALSE(two_asset().depends_on_xtilde());
}

TEST_CASE("market shape validation") {
    MarketParams p;
    p.dim_n = 0;
    CHECK_THROWS_AS(MarketSpec(p), ConfigError);
    p.dim_n = 1;
    p.dim_d1 = 0;
    CHECK_THROWS_AS(MarketSpec(p), ConfigError);
    p.dim_d1 = 1;
    p.theta = {CoefficientFn::constant(0.1), CoefficientFn::constant(0.2)};  // d = 1
    CHECK_THROWS_AS(MarketSpec(p), ConfigError);
    p.theta.clear();
    p.mu = {CoefficientFn{{TermSpec::linear(3, 1.0)}}};  // arg out of range
    CHECK_THROWS_AS(MarketSpec(p), ConfigError);
}
