#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fbsde/assembly.hpp"

using namespace fbsde;

namespace {

std::shared_ptr<const MarketSpec> market_2d(double theta0, double theta1) {
    MarketParams p;
    p.dim_n = 1;
    p.dim_d1 = 1;
    p.dim_d2 = 1;
    p.theta = {CoefficientFn::constant(theta0), CoefficientFn::constant(theta1)};
    p.terminal.terms = {TermSpec::sine(-1, 0.5, 1.0), TermSpec::linear(0, 1.0)};
    p.sup_h = 1e9;
    return std::make_shared<MarketSpec>(p);
}

}  // namespace

TEST_CASE("driver values for the linear family") {
    auto k = KappaModel::linear(2.0);
    auto m = market_2d(0.3, 0.0);
    auto cp = assemble_p_form(k, m, 1.0);
    auto cb = assemble_b_form(k, m, 1.0);
    double xc[1] = {0.0}, z0[2] = {0.0, 0.0};
    for (double p : {-1.0, 0.0, 2.0}) {
        CHECK(cp.driver(0.3, xc, p, z0) == Catch::Approx(-0.0225).margin(1e-15));
        CHECK(cb.driver(0.3, xc, p, z0) == Catch::Approx(-0.0225).margin(1e-15));
    }
    // z-part of the BForm driver: 0.5 * |pi2 z|^2 * kappa'
    double z[2] = {0.0, 0.4};
    CHECK(cb.driver(0.0, xc, 0.0, z) - cb.driver(0.0, xc, 0.0, z0) ==
          Catch::Approx(0.16).margin(1e-15));
}

TEST_CASE("zero market price of risk collapses both forms") {
    auto k = KappaModel::linear(2.0);
    auto m = market_2d(0.0, 0.0);
    auto cp = assemble_p_form(k, m, 1.0);
    auto cb = assemble_b_form(k, m, 1.0);
    double xc[1] = {0.4}, z0[2] = {0.0, 0.0}, vol[2];
    CHECK(cp.driver(0.1, xc, 0.7, z0) == 0.0);
    cp.x_vol(0.1, xc, 0.7, z0, vol);
    CHECK(vol[0] == 0.0);
    CHECK(vol[1] == 0.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 100; ++i) {
        double p = u(rng), z[2] = {u(rng), u(rng)}, x[1] = {u(rng)};
        CHECK(cp.driver(0.2, x, p, z) == cb.driver(0.2, x, p, z));
        CHECK(cp.x_drift(0.2, x, p, z) == cb.x_drift(0.2, x, p, z));
        double vp[2], vb[2];
        cp.x_vol(0.2, x, p, z, vp);
        cb.x_vol(0.2, x, p, z, vb);
        CHECK(vp[0] == vb[0]);
        CHECK(vp[1] == vb[1]);
        double mp[1], mb[1];
        cp.xtilde_drift(0.2, x, mp);
        cb.xtilde_drift(0.2, x, mb);
        CHECK(mp[0] == mb[0]);
    }
}

TEST_CASE("terminal map applies the epsilon scale") {
    auto k = KappaModel::linear(2.0);
    auto c = assemble_p_form(k, market_2d(0.3, 0.0), 0.5);
    double xc[1] = {2.0};
    for (double x : {-1.0, 0.0, 0.7})
        CHECK(c.terminal(xc, x) == Catch::Approx(0.5 * std::sin(x) + 1.0).margin(1e-15));
}

TEST_CASE("wealth vol keeps the untradable slots at zero") {
    auto k = KappaModel::softplus_blend(1.0, 2.0, 1.0, 0.0);
    auto c = assemble_p_form(k, market_2d(0.3, 0.7), 1.0);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    double vol[2];
    for (int i = 0; i < 200; ++i) {
        double z[2] = {u(rng), u(rng)}, x[1] = {u(rng)}, p = u(rng);
        c.x_vol(0.0, x, p, z, vol);
        CHECK(vol[1] == 0.0);
        CHECK(vol[0] == -(0.3 * c.utility().phi(p) + z[0]));
        // PForm wealth drift is vol dotted into pi1 theta
        CHECK(c.x_drift(0.0, x, p, z) == vol[0] * 0.3);
    }
    auto cb = assemble_b_form(k, market_2d(0.3, 0.7), 1.0);
    CHECK(cb.x_drift(0.0, vol, 0.1, vol) == 0.0);
}

TEST_CASE("form reconciliation residual is the traded z term") {
    auto k = KappaModel::softplus_blend(1.0, 2.0, 1.0, 0.0);
    auto m = market_2d(0.3, 0.7);
    auto cp = assemble_p_form(k, m, 1.0);
    auto cb = assemble_b_form(k, m, 1.0);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    for (int i = 0; i < 1000; ++i) {
        double p = u(rng), z[2] = {u(rng), u(rng)}, x[1] = {u(rng)};
        double residual = cp.driver(0.1, x, p, z) - cb.driver(0.1, x, p, z) - z[0] * 0.3;
        CHECK(residual == Catch::Approx(0.0).margin(1e-13));
    }
}

TEST_CASE("driver growth and monotonicity") {
    auto k = KappaModel::softplus_blend(1.0, 2.0, 1.0, 0.0);
    auto m = market_2d(0.3, 0.7);
    auto c = assemble_p_form(k, m, 1.0);
    double growth_c = m->sup_theta() + k.kappa_prime_sup();
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(-4.0, 4.0);
    double x[1] = {0.0}, z0[2] = {0.0, 0.0};
    for (int i = 0; i < 500; ++i) {
        double p = u(rng), z[2] = {u(rng), u(rng)};
        double zn = std::sqrt(z[0] * z[0] + z[1] * z[1]);
        CHECK(std::abs(c.driver(0.0, x, p, z) - c.driver(0.0, x, p, z0)) <=
              growth_c * (zn + zn * zn) + 1e-12);
        double h = 1e-6;
        double slope = (c.driver(0.0, x, p + h, z) - c.driver(0.0, x, p - h, z)) / (2.0 * h);
        CHECK(slope >= -1e-8);
    }
}

TEST_CASE("epsilon rescale preserves the underlying problem") {
    auto k = KappaModel::softplus_blend(1.0, 2.0, 1.0, 0.0);
    MarketParams mp;
    mp.dim_n = 1;
    mp.dim_d1 = 1;
    mp.dim_d2 = 1;
    mp.mu = {CoefficientFn{{TermSpec::sine(0, 0.2, 1.0)}}};
    mp.sigma = {CoefficientFn::constant(0.5), CoefficientFn::constant(0.1)};
    mp.theta = {CoefficientFn{{TermSpec::constant(0.3), TermSpec::sine(0, 0.1, 1.0)}},
                CoefficientFn::constant(0.0)};
    mp.terminal.terms = {TermSpec::sine(-1, 0.5, 1.0), TermSpec::sine(0, 0.3, 1.0)};
    auto m = std::make_shared<MarketSpec>(mp);

    auto c1 = assemble_p_form(k, m, 1.0);
    auto same = rescale_epsilon(c1, 1.0);
    auto c2 = rescale_epsilon(c1, 0.5);
    CHECK(c2.epsilon() == 0.5);
    CHECK(c2.form() == SystemForm::PForm);

    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < 200; ++i) {
        double xc[1] = {u(rng)}, x = u(rng);
        CHECK(same.terminal(xc, x) == c1.terminal(xc, x));
        // terminal at the rescaled state matches: both equal H(eps1 * xc, x)
        double xc2[1] = {xc[0] * (1.0 / 0.5)};
        CHECK(c2.terminal(xc2, x) == Catch::Approx(c1.terminal(xc, x)).margin(1e-14));
    }

    // BForm xtilde drift subtracts the traded risk premium row by row
    auto cb = assemble_b_form(k, m, 0.5);
    double xc[1] = {0.8}, out[1];
    cb.xtilde_drift(0.2, xc, out);
    double xt = 0.5 * 0.8;
    double theta0 = 0.3 + 0.1 * std::sin(xt);
    double expected = (0.2 * std::sin(xt) - 0.5 * theta0) / 0.5;
    CHECK(out[0] == Catch::Approx(expected).margin(1e-14));

    CHECK_THROWS_AS(rescale_epsilon(c1, 0.0), ConfigError);
    CHECK_THROWS_AS(assemble_p_form(k, m, -1.0), ConfigError);
}

TEST_CASE("default epsilon follows the terminal headroom rule") {
    auto flat = market_2d(0.3, 0.0);
    MarketParams mp = flat->params();
    mp.lip_h_x = mp.lip_h_xtilde = mp.sup_h = -1.0;  // rederive from the catalogue
    mp.terminal.terms = {TermSpec::sine(-1, 0.5, 1.0)};
    CHECK(default_epsilon(MarketSpec(mp)) == 1.0);
    mp.terminal.terms = {TermSpec::sine(-1, 0.5, 1.0), TermSpec::sine(0, 0.2, 1.0)};
    CHECK(default_epsilon(MarketSpec(mp)) == Catch::Approx(0.25).margin(1e-15));
}
