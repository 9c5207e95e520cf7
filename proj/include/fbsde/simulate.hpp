#pragma once

#include <cmath>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "fbsde/assembly.hpp"
#include "fbsde/field.hpp"
#include "fbsde/rng.hpp"
#include "fbsde/threads.hpp"

namespace fbsde {

struct FixedPointFailure : Error {
    using Error::Error;
};

struct NonFiniteState : Error {
    using Error::Error;
};

struct SimulateOptions {
    long n_paths = 1000;
    int n_steps = 100;
    uint64_t seed = 1;
    int workers = 1;
    double fp_tol = 1e-10;
    int fp_max = 50;
};

// struct-of-arrays ensemble; point index = path * (n_steps + 1) + step,
// vector-valued columns store components contiguously per point
struct PathEnsemble {
    int dim_n = 0, dim_d = 0, dim_d1 = 0;
    long n_paths = 0;
    int n_steps = 0;
    double dt = 0.0;
    double horizon = 0.0;
    uint64_t seed = 0;
    SystemForm measure = SystemForm::PForm;

    std::vector<double> xcheck;   // n_points * dim_n
    std::vector<double> x;        // n_points
    std::vector<double> y;        // n_points
    std::vector<double> z;        // n_points * dim_d
    std::vector<double> pi;      // n_points * dim_d
    std::vector<double> marginal; // n_points
    std::vector<double> theta1;   // n_points * dim_d

    long n_points() const { return n_paths * (n_steps + 1); }
    long point(long path, int step) const { return path * (n_steps + 1) + step; }
    double time_of(int step) const { return step == n_steps ? horizon : step * dt; }
};

// pi* = -pi1(theta) phi(x + y) - pi1(z); the untraded block is flat zero
inline void optimal_strategy(const UtilityEvaluator& u, const double* theta1, int d1, int d,
                             double p, const double* z, double* out) {
    const double phi_p = u.phi(p);
    for (int i = 0; i < d1; ++i) out[i] = -(theta1[i] * phi_p + z[i]);
    for (int i = d1; i < d; ++i) out[i] = 0.0;
}

inline std::vector<double> optimal_strategy(const KappaModel& model, const std::vector<double>& theta,
                                            int d1, double p, const std::vector<double>& z,
                                            const QuadratureOptions& opt = {}) {
    const int d = static_cast<int>(theta.size());
    if (d1 < 0 || d1 > d) throw ConfigError("optimal_strategy: tradable block exceeds dimension");
    if (z.size() != theta.size()) throw ConfigError("optimal_strategy: z and theta sizes differ");
    const double phi_p = phi(model, p, opt);
    std::vector<double> out(d, 0.0);
    for (int i = 0; i < d1; ++i) out[i] = -(theta[i] * phi_p + z[i]);
    return out;
}

namespace detail {

struct PathState {
    double xt[kMaxDim];
    double x;
    double z[kMaxDim];
};

}  // namespace detail

// forward Euler-Maruyama through the decoupling field: at each point z solves
// z_i = sum_j du/dxcheck_j sigma_ji + du/dx vol_i(z), seeded from the previous step
inline PathEnsemble simulate(const DecouplingField& f, const FbsdeCoefficients& c,
                             const std::vector<double>& xcheck0, double x0,
                             const SimulateOptions& opt = {}) {
    const MarketSpec& m = c.market();
    const int n = m.dim_n(), d = m.dim_d(), d1 = m.dim_d1();
    if (static_cast<int>(xcheck0.size()) != n)
        throw ConfigError("simulate: initial xcheck dimension mismatch");
    if (opt.n_paths < 1 || opt.n_steps < 1)
        throw ConfigError("simulate: need at least one path and one step");
    if (f.first_retained() != 0)
        throw ConfigError("simulate: field is not retained back to the initial time");

    PathEnsemble e;
    e.dim_n = n;
    e.dim_d = d;
    e.dim_d1 = d1;
    e.n_paths = opt.n_paths;
    e.n_steps = opt.n_steps;
    e.horizon = f.grid().horizon();
    e.dt = e.horizon / opt.n_steps;
    e.seed = opt.seed;
    e.measure = c.form();
    const long pts = e.n_points();
    e.xcheck.resize(pts * n);
    e.x.resize(pts);
    e.y.resize(pts);
    e.z.resize(pts * d);
    e.pi.resize(pts * d);
    e.marginal.resize(pts);
    e.theta1.resize(pts * d);

    const UtilityEvaluator& uev = c.utility();
    const CounterRng rng(opt.seed);
    const double dt = e.dt;
    const double sqdt = std::sqrt(dt);
    std::string error;
    std::mutex error_mu;

    parallel_chunks(opt.n_paths, opt.workers, [&](long lo, long hi) {
        detail::PathState s;
        NodeCoeffs nc;
        double gxt[kMaxDim], base[kMaxDim], vol[kMaxDim], znew[kMaxDim], dw[kMaxDim];
        for (long path = lo; path < hi; ++path) {
            for (int j = 0; j < n; ++j) s.xt[j] = xcheck0[j];
            s.x = x0;
            for (int i = 0; i < d; ++i) s.z[i] = 0.0;
            for (int k = 0; k <= opt.n_steps; ++k) {
                const double t = e.time_of(k);
                const double yv = f.evaluate(t, s.xt, s.x);
                const double p = s.x + yv;
                const double phi_p = uev.phi(p);
                c.at_node(t, s.xt, nc);
                double gx = 0.0;
                f.gradient(t, s.xt, s.x, gxt, &gx);
                for (int i = 0; i < d; ++i) {
                    double acc = 0.0;
                    for (int j = 0; j < n; ++j) acc += gxt[j] * nc.sig_xt[j * d + i];
                    base[i] = acc;
                }
                double delta = 0.0;
                bool settled = false;
                for (int it = 0; it < opt.fp_max; ++it) {
                    c.x_vol_at(nc, phi_p, s.z, vol);
                    delta = 0.0;
                    for (int i = 0; i < d; ++i) {
                        znew[i] = base[i] + gx * vol[i];
                        delta = std::max(delta, std::abs(znew[i] - s.z[i]));
                    }
                    for (int i = 0; i < d; ++i) s.z[i] = znew[i];
                    if (delta < opt.fp_tol) {
                        settled = true;
                        break;
                    }
                }
                if (!settled) {
                    std::lock_guard<std::mutex> lk(error_mu);
                    if (error.empty())
                        error = "z fixed point stalled at path " + std::to_string(path) +
                                " step " + std::to_string(k) + " (delta " + format_double(delta) + ")";
                    return;
                }
                c.x_vol_at(nc, phi_p, s.z, vol);

                const long pt = e.point(path, k);
                for (int j = 0; j < n; ++j) e.xcheck[pt * n + j] = s.xt[j];
                e.x[pt] = s.x;
                e.y[pt] = yv;
                for (int i = 0; i < d; ++i) e.z[pt * d + i] = s.z[i];
                for (int i = 0; i < d; ++i) e.pi[pt * d + i] = vol[i];
                e.marginal[pt] = uev.marginal(p);
                for (int i = 0; i < d; ++i) e.theta1[pt * d + i] = nc.theta1[i];

                if (k == opt.n_steps) break;
                for (int i = 0; i < d; ++i) dw[i] = sqdt * rng.normal(path, k, i);
                const double drift = c.x_drift_at(nc, vol);
                s.x += drift * dt + dot(vol, dw, d);
                for (int j = 0; j < n; ++j)
                    s.xt[j] += nc.mu_xt[j] * dt + dot(nc.sig_xt + j * d, dw, d);
                bool finite = std::isfinite(s.x);
                for (int j = 0; j < n; ++j) finite = finite && std::isfinite(s.xt[j]);
                if (!finite) {
                    std::lock_guard<std::mutex> lk(error_mu);
                    if (error.empty())
                        error = "state left the finite range at path " + std::to_string(path) +
                                " step " + std::to_string(k + 1);
                    return;
                }
            }
        }
    });

    if (!error.empty()) {
        if (error.rfind("state", 0) == 0) throw NonFiniteState(error);
        throw FixedPointFailure(error);
    }
    return e;
}

struct WealthReport {
    double max_abs = 0.0;
    double mean_abs = 0.0;
};

// replay the Brownian increments and compare each recorded X increment with
// pi*' (dW + pi1(theta) dt), the self-financing wealth identity
inline WealthReport wealth_consistency(const PathEnsemble& e) {
    if (e.measure != SystemForm::PForm)
        throw ConfigError("wealth_consistency: ensemble must be simulated in the P form");
    const CounterRng rng(e.seed);
    const int d = e.dim_d;
    const double sqdt = std::sqrt(e.dt);
    WealthReport r;
    double sum = 0.0;
    long count = 0;
    std::vector<double> dw(d);
    for (long path = 0; path < e.n_paths; ++path) {
        for (int k = 0; k < e.n_steps; ++k) {
            for (int i = 0; i < d; ++i) dw[i] = sqdt * rng.normal(path, k, i);
            const long pt = e.point(path, k);
            double implied = 0.0;
            for (int i = 0; i < d; ++i)
                implied += e.pi[pt * d + i] * (dw[i] + e.theta1[pt * d + i] * e.dt);
            const double resid = (e.x[pt + 1] - e.x[pt]) - implied;
            r.max_abs = std::max(r.max_abs, std::abs(resid));
            sum += std::abs(resid);
            ++count;
        }
    }
    r.mean_abs = count > 0 ? sum / count : 0.0;
    return r;
}

}  // namespace fbsde
