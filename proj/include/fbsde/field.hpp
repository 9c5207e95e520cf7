#pragma once

#include <algorithm>
#include <memory>

#include "fbsde/grid.hpp"

namespace fbsde {

// u(t_k, xcheck, x) on the tensor grid, plus difference-quotient gradients
// per axis and the per-step Lipschitz history in x
class DecouplingField {
  public:
    explicit DecouplingField(std::shared_ptr<const Grid> grid)
        : grid_(std::move(grid)),
          values_(grid_->steps() + 1),
          grad_x_(grid_->steps() + 1),
          grad_xt_(grid_->steps() + 1),
          lip_x_(grid_->steps() + 1, 0.0),
          lip_xt_(grid_->steps() + 1, 0.0),
          first_retained_(grid_->steps() + 1) {}

    const Grid& grid() const { return *grid_; }
    std::shared_ptr<const Grid> grid_ptr() const { return grid_; }

    std::vector<double>& values(int k) { return values_[k]; }
    const std::vector<double>& values(int k) const { return values_[k]; }
    std::vector<double>& grad_x(int k) { return grad_x_[k]; }
    const std::vector<double>& grad_x(int k) const { return grad_x_[k]; }
    // layout: dim * nodes + node
    std::vector<double>& grad_xtilde(int k) { return grad_xt_[k]; }
    const std::vector<double>& grad_xtilde(int k) const { return grad_xt_[k]; }

    double lip_x(int k) const { return lip_x_[k]; }
    double lip_xtilde(int k) const { return lip_xt_[k]; }
    void set_lip(int k, double lx, double lxt) {
        lip_x_[k] = lx;
        lip_xt_[k] = lxt;
    }

    int first_retained() const { return first_retained_; }
    void set_first_retained(int k) { first_retained_ = k; }

    // spatial interpolation at step k: multilinear inside the box, linear
    // extrapolation with the boundary gradient outside (keeps the global
    // Lipschitz bound, never overshoots inside)
    double value_at(int k, const double* xcheck, double x) const {
        AxisPos pos[kMaxAxes];
        int na = locate(xcheck, x, pos);
        double v = corner_sum(values_[k].data(), pos, na);
        for (int a = 0; a < na; ++a) {
            if (pos[a].over == 0.0) continue;
            const double* gsrc = a + 1 < na ? grad_xt_[k].data() + static_cast<size_t>(a) * grid_->nodes()
                                            : grad_x_[k].data();
            v += pos[a].over * corner_sum(gsrc, pos, na);
        }
        return v;
    }

    // gradient interpolation (clamped outside the box)
    void gradient_at(int k, const double* xcheck, double x, double* gxt, double* gx) const {
        AxisPos pos[kMaxAxes];
        int na = locate(xcheck, x, pos);
        for (int j = 0; j + 1 < na; ++j)
            gxt[j] = corner_sum(grad_xt_[k].data() + static_cast<size_t>(j) * grid_->nodes(), pos, na);
        *gx = corner_sum(grad_x_[k].data(), pos, na);
    }

    // linear in time between adjacent stored steps, clamped to the retained
    // range
    double evaluate(double t, const double* xcheck, double x) const {
        int k0, k1;
        double w;
        time_weights(t, k0, k1, w);
        double v0 = value_at(k0, xcheck, x);
        if (k1 == k0) return v0;
        return (1.0 - w) * v0 + w * value_at(k1, xcheck, x);
    }

    void gradient(double t, const double* xcheck, double x, double* gxt, double* gx) const {
        int k0, k1;
        double w;
        time_weights(t, k0, k1, w);
        double g0xt[kMaxAxes], g0x;
        gradient_at(k0, xcheck, x, g0xt, &g0x);
        if (k1 == k0) {
            for (int j = 0; j < grid_->dim_n(); ++j) gxt[j] = g0xt[j];
            *gx = g0x;
            return;
        }
        double g1xt[kMaxAxes], g1x;
        gradient_at(k1, xcheck, x, g1xt, &g1x);
        for (int j = 0; j < grid_->dim_n(); ++j) gxt[j] = (1.0 - w) * g0xt[j] + w * g1xt[j];
        *gx = (1.0 - w) * g0x + w * g1x;
    }

  private:
    static constexpr int kMaxAxes = 4;  // N <= 3 plus the wealth axis

    struct AxisPos {
        long base;    // flat offset of the lower corner along this axis
        long stride;
        double w1;    // weight of the upper corner
        double over;  // signed overhang outside the box, 0 inside
    };

    int locate(const double* xcheck, double x, AxisPos* pos) const {
        const int n = grid_->dim_n();
        for (int j = 0; j < n; ++j)
            fill_axis(grid_->xtilde_axes()[j], xcheck[j], grid_->stride_xtilde(j), pos[j]);
        fill_axis(grid_->x_axis(), x, 1, pos[n]);
        return n + 1;
    }

    static void fill_axis(const Axis& a, double q, long stride, AxisPos& p) {
        p.stride = stride;
        double u = (q - a.lo) / a.step();
        if (u <= 0.0) {
            p.base = 0;
            p.w1 = 0.0;
            p.over = q - a.lo;
        } else if (u >= a.count - 1) {
            p.base = static_cast<long>(a.count - 2) * stride;
            p.w1 = 1.0;
            p.over = q - a.hi;
        } else {
            long i = static_cast<long>(u);
            if (i > a.count - 2) i = a.count - 2;
            p.base = i * stride;
            p.w1 = u - i;
            p.over = 0.0;
        }
    }

    double corner_sum(const double* src, const AxisPos* pos, int na) const {
        double acc = 0.0;
        const int corners = 1 << na;
        for (int mask = 0; mask < corners; ++mask) {
            double w = 1.0;
            long idx = 0;
            for (int a = 0; a < na; ++a) {
                const AxisPos& p = pos[a];
                if (mask & (1 << a)) {
                    w *= p.w1;
                    idx += p.base + p.stride;
                } else {
                    w *= 1.0 - p.w1;
                    idx += p.base;
                }
            }
            if (w != 0.0) acc += w * src[idx];
        }
        return acc;
    }

    void time_weights(double t, int& k0, int& k1, double& w) const {
        const double dt = grid_->dt();
        double u = t / dt;
        int lo = first_retained_;
        if (u <= lo) {
            k0 = k1 = lo;
            w = 0.0;
            return;
        }
        if (u >= grid_->steps()) {
            k0 = k1 = grid_->steps();
            w = 0.0;
            return;
        }
        k0 = static_cast<int>(u);
        k1 = k0 + 1;
        w = u - k0;
        if (k0 < lo) {
            k0 = k1 = lo;
            w = 0.0;
        }
    }

    std::shared_ptr<const Grid> grid_;
    std::vector<std::vector<double>> values_;
    std::vector<std::vector<double>> grad_x_;
    std::vector<std::vector<double>> grad_xt_;
    std::vector<double> lip_x_, lip_xt_;
    int first_retained_;
};

inline double evaluate_field(const DecouplingField& f, double t, const double* xcheck, double x) {
    return f.evaluate(t, xcheck, x);
}

// central differences in the interior, one-sided at the ends; records the
// per-step max |du/dx| and max |du/dxtilde| into the field history
inline void estimate_gradient(DecouplingField& f, int k) {
    const Grid& g = f.grid();
    const long nodes = g.nodes();
    const int n = g.dim_n();
    f.grad_x(k).assign(nodes, 0.0);
    f.grad_xtilde(k).assign(static_cast<size_t>(std::max(n, 1)) * nodes, 0.0);
    const std::vector<double>& v = f.values(k);

    auto sweep = [&](long stride, int count, double step, double* out) {
        double max_abs = 0.0;
        for (long node = 0; node < nodes; ++node) {
            long pos = (node / stride) % count;
            double d;
            if (pos == 0)
                d = (v[node + stride] - v[node]) / step;
            else if (pos == count - 1)
                d = (v[node] - v[node - stride]) / step;
            else
                d = (v[node + stride] - v[node - stride]) / (2.0 * step);
            out[node] = d;
            max_abs = std::max(max_abs, std::abs(d));
        }
        return max_abs;
    };

    double lx = sweep(1, g.x_axis().count, g.x_axis().step(), f.grad_x(k).data());
    double lxt = 0.0;
    for (int j = 0; j < n; ++j) {
        const Axis& a = g.xtilde_axes()[j];
        lxt = std::max(lxt, sweep(g.stride_xtilde(j), a.count, a.step(),
                                  f.grad_xtilde(k).data() + static_cast<size_t>(j) * nodes));
    }
    f.set_lip(k, lx, lxt);
}

}  // namespace fbsde
