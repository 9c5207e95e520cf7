#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fbsde/simulate.hpp"
#include "fbsde/solver.hpp"

namespace fbsde {

// closed form for constant risk premium, exponential utility and flat
// terminal liability: the backward equation decouples and Z vanishes
struct OracleSpec {
    double gamma = 2.0;
    std::vector<double> theta;
    int d1 = 0;
    double h = 0.0;
    double T = 1.0;
};

struct OraclePoint {
    double y = 0.0;
    std::vector<double> pi;
};

inline OraclePoint exponential_oracle(const OracleSpec& o, double t) {
    if (!(o.gamma > 0.0)) throw ConfigError("oracle needs positive risk aversion");
    if (!(o.T > 0.0)) throw ConfigError("oracle needs a positive horizon");
    if (t < 0.0 || t > o.T) throw ConfigError("oracle time outside [0, T]");
    if (o.d1 < 0 || o.d1 > static_cast<int>(o.theta.size()))
        throw ConfigError("oracle tradable block exceeds dimension");
    double t1_sq = 0.0;
    for (int i = 0; i < o.d1; ++i) t1_sq += o.theta[i] * o.theta[i];
    OraclePoint r;
    r.y = o.h + (o.T - t) * t1_sq / (2.0 * o.gamma);
    r.pi.assign(o.theta.size(), 0.0);
    for (int i = 0; i < o.d1; ++i) r.pi[i] = o.theta[i] / o.gamma;
    return r;
}

// ---------------------------------------------------------------------------

struct LadderPoint {
    int step = 0;
    double t = 0.0;
    double mean = 0.0;
    double se = 0.0;
    double z = 0.0;
};

struct MartingaleOptions {
    int ladder_points = 5;
};

struct MartingaleReport {
    double reference = 0.0;
    std::vector<LadderPoint> ladder;
    double max_abs_z = 0.0;
    double recon_max_rel = 0.0;
    double recon_mean_rel = 0.0;
    std::string note;

    bool within(double bound) const { return max_abs_z <= bound; }
};

// sample means of the marginal utility along a time ladder against its
// starting value, plus the per-path stochastic-exponential reconstruction
// driven by alpha = pi2(Z) / phi(X + Y) - pi1(theta)
inline MartingaleReport martingale_diagnostic(const PathEnsemble& e, const UtilityEvaluator& u,
                                              const MartingaleOptions& opt = {}) {
    if (e.measure != SystemForm::PForm)
        throw ConfigError("martingale diagnostic expects an ensemble under the original measure");
    if (e.n_paths < 2) throw ConfigError("martingale diagnostic needs at least two paths");
    if (opt.ladder_points < 1 || opt.ladder_points > e.n_steps)
        throw ConfigError("ladder does not fit the step count");

    MartingaleReport r;
    r.reference = e.marginal[e.point(0, 0)];
    r.note = "each ladder point tested at 3 standard errors; no multiple-testing correction";

    for (int i = 1; i <= opt.ladder_points; ++i) {
        const int step = static_cast<int>(
            std::lround(static_cast<double>(i) * e.n_steps / opt.ladder_points));
        double sum = 0.0, sumsq = 0.0;
        for (long path = 0; path < e.n_paths; ++path) {
            const double m = e.marginal[e.point(path, step)];
            sum += m;
            sumsq += m * m;
        }
        LadderPoint p;
        p.step = step;
        p.t = e.time_of(step);
        p.mean = sum / e.n_paths;
        const double var =
            std::max(0.0, (sumsq - e.n_paths * p.mean * p.mean) / (e.n_paths - 1));
        p.se = std::sqrt(var / e.n_paths);
        const double dev = p.mean - r.reference;
        // deviations below the rounding resolution of the reference are not
        // evidence; without the floor a constant ensemble scores noise/noise
        const double floor = 64.0 * std::numeric_limits<double>::epsilon() *
                             std::abs(r.reference);
        p.z = std::abs(dev) <= floor ? 0.0 : dev / p.se;
        r.max_abs_z = std::max(r.max_abs_z, std::abs(p.z));
        r.ladder.push_back(p);
    }

    // Euler product M_{k+1} = M_k (1 + alpha' dW) versus the recorded values
    const CounterRng rng(e.seed);
    const int d = e.dim_d, d1 = e.dim_d1;
    const double sqdt = std::sqrt(e.dt);
    double worst = 0.0, acc = 0.0;
    long count = 0;
    for (long path = 0; path < e.n_paths; ++path) {
        double recon = e.marginal[e.point(path, 0)];
        for (int k = 0; k < e.n_steps; ++k) {
            const long pt = e.point(path, k);
            const double p = e.x[pt] + e.y[pt];
            const double inv_phi = 1.0 / u.phi(p);
            double incr = 0.0;
            for (int i = 0; i < d; ++i) {
                const double alpha = i < d1 ? -e.theta1[pt * d + i]
                                            : inv_phi * e.z[pt * d + i];
                incr += alpha * sqdt * rng.normal(path, k, i);
            }
            recon *= 1.0 + incr;
            const double direct = e.marginal[pt + 1];
            const double rel = std::abs(recon - direct) / std::abs(direct);
            worst = std::max(worst, rel);
            acc += rel;
            ++count;
        }
    }
    r.recon_max_rel = worst;
    r.recon_mean_rel = count > 0 ? acc / count : 0.0;
    return r;
}

inline MartingaleReport martingale_diagnostic(const PathEnsemble& e, const KappaModel& model,
                                              const MartingaleOptions& opt = {}) {
    AssemblyOptions ao;
    UtilityEvaluator u(model, ao.p_lo, ao.p_hi, ao.p_step);
    return martingale_diagnostic(e, u, opt);
}

// copy of the field with every retained slice shifted by a constant; breaks
// the decoupling property on purpose (negative control for the diagnostic)
inline DecouplingField shift_field(const DecouplingField& f, double delta) {
    DecouplingField g = f;
    for (int k = g.first_retained(); k <= g.grid().steps(); ++k)
        for (double& v : g.values(k)) v += delta;
    return g;
}

// price the recorded states of an ensemble through a different field without
// re-simulating: paths and controls stay frozen, valuations are replaced.
// Re-simulating under a corrupted field would let the dynamics adapt to it
// and hide the corruption from the diagnostic; revaluation keeps the recorded
// paths as the ground truth the valuations must stay consistent with.
inline PathEnsemble revalue(const PathEnsemble& e, const DecouplingField& f,
                            const UtilityEvaluator& uev) {
    PathEnsemble out = e;
    for (long path = 0; path < e.n_paths; ++path) {
        for (long k = 0; k <= e.n_steps; ++k) {
            const long pt = out.point(path, k);
            out.y[pt] = f.evaluate(out.time_of(k), &out.xcheck[pt * out.dim_n], out.x[pt]);
            out.marginal[pt] = uev.marginal(out.x[pt] + out.y[pt]);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------

struct ScaleAgreementReport {
    SolveStatus status_a = SolveStatus::Converged;
    SolveStatus status_b = SolveStatus::Converged;
    double max_abs_diff = std::numeric_limits<double>::quiet_NaN();
    long nodes_compared = 0;
};

// solves the same problem at two diffusion scales; the second grid is the
// first with the exogenous axes stretched by eps_a / eps_b, so initial-slice
// values must agree node for node up to discretization error
inline ScaleAgreementReport epsilon_equivalence_check(const KappaModel& model,
                                                      std::shared_ptr<const MarketSpec> m,
                                                      double eps_a, double eps_b,
                                                      const GridSpec& gspec, int quad_nodes,
                                                      const SolverOptions& sopt = {}) {
    auto ca = assemble_p_form(model, m, eps_a);
    auto grid_a = std::make_shared<Grid>(gspec, quad_nodes);
    auto [fa, ra] = solve_backward(ca, grid_a, sopt);

    const double ratio = eps_a / eps_b;
    GridSpec scaled = gspec;
    for (auto& a : scaled.xtilde_axes) {
        a.lo *= ratio;
        a.hi *= ratio;
    }
    for (auto& v : scaled.xtilde0) v *= ratio;
    for (auto& v : scaled.sup_vol_xtilde) v *= ratio;
    auto cb = assemble_p_form(model, m, eps_b);
    auto grid_b = std::make_shared<Grid>(scaled, quad_nodes);
    auto [fb, rb] = solve_backward(cb, grid_b, sopt);

    ScaleAgreementReport rep;
    rep.status_a = ra.status;
    rep.status_b = rb.status;
    if (ra.status != SolveStatus::Converged || rb.status != SolveStatus::Converged) return rep;

    const int n = grid_a->dim_n();
    double worst = 0.0;
    double xt[kMaxDim], sxt[kMaxDim], x;
    for (long node = 0; node < grid_a->nodes(); ++node) {
        grid_a->node_coords(node, xt, x);
        for (int j = 0; j < n; ++j) sxt[j] = ratio * xt[j];
        const double diff = fa.values(0)[node] - fb.value_at(0, sxt, x);
        worst = std::max(worst, std::abs(diff));
        ++rep.nodes_compared;
    }
    rep.max_abs_diff = worst;
    return rep;
}

// ---------------------------------------------------------------------------

struct GradientBandReport {
    double max_grad_x = 0.0;
    double min_grad_x = 0.0;
    double upper_bound = 0.0;
    double lower_margin = 0.0;  // distance of the minimum above -1
    bool upper_ok = false;
    bool lower_ok = false;
    int worst_upper_step = -1;
    long worst_upper_node = -1;
    int worst_lower_step = -1;
    long worst_lower_node = -1;
};

// every retained slice must keep du/dx below the terminal Lipschitz constant
// (plus discretization slack) and uniformly above -1
inline GradientBandReport gradient_bound_check(const DecouplingField& f, const MarketSpec& m,
                                               double tol_disc = 0.02,
                                               double required_margin = 0.01) {
    GradientBandReport r;
    r.upper_bound = m.lip_h_x() + tol_disc;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (int k = f.first_retained(); k <= f.grid().steps(); ++k) {
        const auto& g = f.grad_x(k);
        for (long node = 0; node < static_cast<long>(g.size()); ++node) {
            if (g[node] > hi) {
                hi = g[node];
                r.worst_upper_step = k;
                r.worst_upper_node = node;
            }
            if (g[node] < lo) {
                lo = g[node];
                r.worst_lower_step = k;
                r.worst_lower_node = node;
            }
        }
    }
    r.max_grad_x = hi;
    r.min_grad_x = lo;
    r.lower_margin = lo - (-1.0);
    r.upper_ok = hi <= r.upper_bound;
    r.lower_ok = r.lower_margin >= required_margin;
    return r;
}

// ---------------------------------------------------------------------------

struct FormAgreementReport {
    SolveStatus status_p = SolveStatus::Converged;
    SolveStatus status_b = SolveStatus::Converged;
    double max_abs_diff = std::numeric_limits<double>::quiet_NaN();
};

// the drift-absorbing rewrite must reproduce the original solve at time zero
inline FormAgreementReport form_equivalence_check(const KappaModel& model,
                                                  std::shared_ptr<const MarketSpec> m, double eps,
                                                  const GridSpec& gspec, int quad_nodes,
                                                  const SolverOptions& sopt = {}) {
    auto grid = std::make_shared<Grid>(gspec, quad_nodes);
    auto cp = assemble_p_form(model, m, eps);
    auto cb = assemble_b_form(model, m, eps);
    auto [fp, rp] = solve_backward(cp, grid, sopt);
    auto [fb, rb] = solve_backward(cb, grid, sopt);

    FormAgreementReport rep;
    rep.status_p = rp.status;
    rep.status_b = rb.status;
    if (rp.status != SolveStatus::Converged || rb.status != SolveStatus::Converged) return rep;

    double worst = 0.0;
    const auto& vp = fp.values(0);
    const auto& vb = fb.values(0);
    for (size_t i = 0; i < vp.size(); ++i) worst = std::max(worst, std::abs(vp[i] - vb[i]));
    rep.max_abs_diff = worst;
    return rep;
}

}  // namespace fbsde
