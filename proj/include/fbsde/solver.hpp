#pragma once

#include <chrono>
#include <limits>

#include "fbsde/assembly.hpp"
#include "fbsde/field.hpp"
#include "fbsde/threads.hpp"

namespace fbsde {

struct SolverOptions {
    double fp_tol = 1e-10;
    int fp_max = 50;
    double delta_sing = 0.01;  // abort once max|du/dx| >= 1 - delta_sing
    int workers = 1;
    int max_dim_n = 3;
};

enum class SolveStatus { Converged, SingularityDetected, FixedPointFailure };

struct SolveReport {
    SolveStatus status = SolveStatus::Converged;
    double failure_time = std::numeric_limits<double>::quiet_NaN();
    long failure_node = -1;
    std::vector<long> iteration_histogram;  // index = iterations to converge
    double median_iterations = 0.0;
    double max_lip_x = 0.0;
    double max_lip_xtilde = 0.0;
    double min_grad_x = 0.0;
    double wall_seconds = 0.0;
    long nodes_processed = 0;
    int first_retained = 0;
};

inline const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Converged: return "converged";
        case SolveStatus::SingularityDetected: return "singularity_detected";
        case SolveStatus::FixedPointFailure: return "fixed_point_failure";
    }
    return "unknown";
}

// backward induction with a per-node fixed point coupling z into the wealth
// volatility; expectation over a tensor Gauss-Hermite stencil against the
// interpolated step-(k+1) slice
inline std::pair<DecouplingField, SolveReport> solve_backward(const FbsdeCoefficients& c,
                                                              std::shared_ptr<const Grid> grid,
                                                              const SolverOptions& opts = {}) {
    const auto t_start = std::chrono::steady_clock::now();
    const Grid& g = *grid;
    const MarketSpec& m = c.market();
    const int n = g.dim_n(), d = m.dim_d(), d1 = m.dim_d1();
    if (n != m.dim_n()) throw ConfigError("grid and market state dimensions disagree");
    if (n > opts.max_dim_n) throw ConfigError("state dimension exceeds the solver cap");

    const int mq = static_cast<int>(g.quad().points.size());
    long q_count = 1;
    for (int i = 0; i < d; ++i) {
        q_count *= mq;
        if (q_count > 2'000'000) throw ConfigError("quadrature tensor too large");
    }
    const long nodes = g.nodes();
    const double dt = g.dt();
    const double sqdt = std::sqrt(dt);

    std::vector<double> qw(q_count);
    std::vector<double> qdw(static_cast<size_t>(q_count) * d);
    for (long q = 0; q < q_count; ++q) {
        long rem = q;
        double w = 1.0;
        for (int i = 0; i < d; ++i) {
            int idx = static_cast<int>(rem % mq);
            rem /= mq;
            w *= g.quad().weights[idx];
            qdw[q * d + i] = sqdt * g.quad().points[idx];
        }
        qw[q] = w;
    }

    DecouplingField field(grid);
    SolveReport rep;
    rep.iteration_histogram.assign(opts.fp_max + 1, 0);

    const int steps = g.steps();
    field.values(steps).resize(nodes);
    {
        double xt[kMaxDim], x;
        for (long node = 0; node < nodes; ++node) {
            g.node_coords(node, xt, x);
            field.values(steps)[node] = c.terminal(xt, x);
        }
    }
    estimate_gradient(field, steps);
    field.set_first_retained(steps);

    auto finish = [&](SolveReport& r) {
        r.first_retained = field.first_retained();
        double maxx = 0.0, maxxt = 0.0, ming = 0.0;
        for (int k = r.first_retained; k <= steps; ++k) {
            maxx = std::max(maxx, field.lip_x(k));
            maxxt = std::max(maxxt, field.lip_xtilde(k));
            for (double gx : field.grad_x(k)) ming = std::min(ming, gx);
        }
        r.max_lip_x = maxx;
        r.max_lip_xtilde = maxxt;
        r.min_grad_x = ming;
        long total = 0;
        for (long cnt : r.iteration_histogram) total += cnt;
        if (total > 0) {
            long half = (total + 1) / 2, cum = 0;
            for (size_t i = 0; i < r.iteration_histogram.size(); ++i) {
                cum += r.iteration_histogram[i];
                if (cum >= half) {
                    r.median_iterations = static_cast<double>(i);
                    break;
                }
            }
        }
        r.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };

    if (field.lip_x(steps) >= 1.0 - opts.delta_sing) {
        rep.status = SolveStatus::SingularityDetected;
        rep.failure_time = g.horizon();
        finish(rep);
        return {std::move(field), rep};
    }

    std::vector<double> z_prev(static_cast<size_t>(nodes) * d, 0.0);
    std::vector<double> z_cur(static_cast<size_t>(nodes) * d, 0.0);
    std::vector<int> iters(nodes, 0);
    std::vector<signed char> failed(nodes, 0);
    const UtilityEvaluator& ev = c.utility();

    for (int k = steps - 1; k >= 0; --k) {
        const double t = g.time(k);
        field.values(k).resize(nodes);
        double* vk = field.values(k).data();

        parallel_chunks(nodes, opts.workers, [&](long b, long e) {
            std::vector<double> xtp(static_cast<size_t>(q_count) * n);
            double xt[kMaxDim], x;
            NodeCoeffs nc;
            for (long node = b; node < e; ++node) {
                g.node_coords(node, xt, x);
                c.at_node(t, xt, nc);
                for (long q = 0; q < q_count; ++q) {
                    const double* dw = &qdw[q * d];
                    for (int j = 0; j < n; ++j)
                        xtp[q * n + j] = xt[j] + nc.mu_xt[j] * dt + dot(nc.sig_xt + j * d, dw, d);
                }
                double z[kMaxDim];
                for (int i = 0; i < d; ++i) z[i] = z_prev[node * d + i];
                double y = field.values(k + 1)[node];

                int it = 0;
                bool ok = false;
                while (it < opts.fp_max) {
                    ++it;
                    const double phi_p = ev.phi(x + y);
                    double vol[kMaxDim];
                    c.x_vol_at(nc, phi_p, z, vol);
                    const double xbase = x + c.x_drift_at(nc, vol) * dt;

                    double ey = 0.0, ez[kMaxDim] = {0.0};
                    for (long q = 0; q < q_count; ++q) {
                        const double* dw = &qdw[q * d];
                        const double xq = xbase + dot(vol, dw, d1);
                        const double uq = field.value_at(k + 1, &xtp[q * n], xq);
                        const double wu = qw[q] * uq;
                        ey += wu;
                        for (int i = 0; i < d; ++i) ez[i] += wu * dw[i];
                    }
                    double dz = 0.0;
                    for (int i = 0; i < d; ++i) {
                        const double znew = ez[i] / dt;
                        dz = std::max(dz, std::abs(znew - z[i]));
                        z[i] = znew;
                    }

                    // implicit y: one Newton step (driver is monotone in p,
                    // so 1 + df/dp * dt stays away from zero), then polish
                    double ynew = y;
                    {
                        const double p0 = x + ynew;
                        const double f0 = c.driver_at(nc, p0, z);
                        const double h = 1e-6;
                        const double dfdp =
                            (c.driver_at(nc, p0 + h, z) - c.driver_at(nc, p0 - h, z)) / (2.0 * h);
                        ynew -= (ynew + f0 * dt - ey) / (1.0 + dfdp * dt);
                        for (int pol = 0; pol < 3; ++pol) {
                            const double next = ey - c.driver_at(nc, x + ynew, z) * dt;
                            const double change = std::abs(next - ynew);
                            ynew = next;
                            if (change < 0.1 * opts.fp_tol) break;
                        }
                    }
                    const double dy = std::abs(ynew - y);
                    y = ynew;
                    if (std::max(dz, dy) < opts.fp_tol) {
                        ok = true;
                        break;
                    }
                }
                iters[node] = it;
                failed[node] = ok ? 0 : 1;
                vk[node] = y;
                for (int i = 0; i < d; ++i) z_cur[node * d + i] = z[i];
            }
        });
        rep.nodes_processed += nodes;

        long bad = -1;
        for (long node = 0; node < nodes && bad < 0; ++node)
            if (failed[node]) bad = node;
        if (bad >= 0) {
            rep.status = SolveStatus::FixedPointFailure;
            rep.failure_time = t;
            rep.failure_node = bad;
            break;
        }
        for (long node = 0; node < nodes; ++node) ++rep.iteration_histogram[iters[node]];

        estimate_gradient(field, k);
        if (field.lip_x(k) < 1.0) field.set_first_retained(k);
        if (field.lip_x(k) >= 1.0 - opts.delta_sing) {
            rep.status = SolveStatus::SingularityDetected;
            rep.failure_time = t;
            break;
        }
        std::swap(z_prev, z_cur);
    }

    finish(rep);
    return {std::move(field), rep};
}

}  // namespace fbsde
