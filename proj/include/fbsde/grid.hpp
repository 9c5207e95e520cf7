#pragma once

#include <cmath>
#include <memory>

#include "fbsde/common.hpp"

namespace fbsde {

struct Axis {
    double lo = 0.0;
    double hi = 0.0;
    int count = 0;

    double step() const { return count > 1 ? (hi - lo) / (count - 1) : 0.0; }
    double coord(int i) const { return lo + i * step(); }
};

// nodes and weights rescaled for a standard normal: E g(xi) = sum w g(point)
struct GaussHermite {
    std::vector<double> points;
    std::vector<double> weights;
};

// roots of the physicists' Hermite polynomial by Newton on the orthonormal
// recurrence, then mirrored so the table is exactly symmetric
inline GaussHermite gauss_hermite(int m) {
    if (m < 2) throw ConfigError("quadrature needs at least 2 nodes");
    std::vector<double> root(m, 0.0), wt(m, 0.0);
    const int half = (m + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < half; ++i) {
        if (i == 0) {
            z = std::sqrt(2.0 * m + 1.0) - 1.85575 * std::pow(2.0 * m + 1.0, -1.0 / 6.0);
        } else if (i == 1) {
            z -= 1.14 * std::pow(m, 0.426) / z;
        } else if (i == 2) {
            z = 1.86 * z - 0.86 * root[0];
        } else if (i == 3) {
            z = 1.91 * z - 0.91 * root[1];
        } else {
            z = 2.0 * z - root[i - 2];
        }
        double pp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p1 = 0.7511255444649425;  // pi^(-1/4)
            double p2 = 0.0;
            for (int j = 0; j < m; ++j) {
                double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 - std::sqrt(double(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * m) * p2;
            double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        root[i] = z;                 // descending positive roots
        wt[i] = 2.0 / (pp * pp);
    }
    GaussHermite gh;
    gh.points.resize(m);
    gh.weights.resize(m);
    const double sqrt2 = std::sqrt(2.0);
    for (int i = 0; i < half; ++i) {
        gh.points[m - 1 - i] = sqrt2 * root[i];
        gh.points[i] = -sqrt2 * root[i];
        gh.weights[i] = gh.weights[m - 1 - i] = wt[i];
    }
    if (m % 2 == 1) gh.points[half - 1] = 0.0;
    double sum = 0.0;
    for (double w : gh.weights) sum += w;
    for (double& w : gh.weights) w /= sum;
    return gh;
}

struct GridSpec {
    double horizon = 1.0;
    int time_steps = 100;  // K, so K+1 stored slices
    Axis x_axis;
    std::vector<Axis> xtilde_axes;
    // margin rule inputs: initial state and per-axis vol scale
    double x0 = 0.0;
    std::vector<double> xtilde0;
    double sup_vol_x = 0.0;
    std::vector<double> sup_vol_xtilde;
};

class Grid {
  public:
    Grid(GridSpec spec, int quad_nodes) : spec_(std::move(spec)) {
        if (spec_.time_steps < 1) throw ConfigError("need at least one time step");
        if (!(spec_.horizon > 0.0)) throw ConfigError("horizon must be positive");
        auto check_axis = [](const Axis& a, const char* what) {
            if (a.count < 3) throw ConfigError(std::string(what) + " axis needs >= 3 nodes");
            if (!(a.hi > a.lo)) throw ConfigError(std::string(what) + " axis bounds must increase");
        };
        check_axis(spec_.x_axis, "x");
        for (const auto& a : spec_.xtilde_axes) check_axis(a, "xtilde");
        if (spec_.xtilde0.empty()) spec_.xtilde0.assign(spec_.xtilde_axes.size(), 0.0);
        if (spec_.sup_vol_xtilde.empty())
            spec_.sup_vol_xtilde.assign(spec_.xtilde_axes.size(), 0.0);

        const double root_t = std::sqrt(spec_.horizon);
        auto check_margin = [root_t](const Axis& a, double start, double vol, const char* what) {
            double need = 6.0 * vol * root_t;
            if (start - a.lo < need || a.hi - start < need)
                throw DomainTooSmall(std::string(what) +
                                     " axis margin below 6 sup|vol| sqrt(T): need " +
                                     format_double(need));
            if (start < a.lo || start > a.hi)
                throw DomainTooSmall(std::string(what) + " axis must contain the initial state");
        };
        check_margin(spec_.x_axis, spec_.x0, spec_.sup_vol_x, "x");
        for (size_t j = 0; j < spec_.xtilde_axes.size(); ++j)
            check_margin(spec_.xtilde_axes[j], spec_.xtilde0[j], spec_.sup_vol_xtilde[j],
                         "xtilde");

        quad_ = gauss_hermite(quad_nodes);

        strides_.assign(spec_.xtilde_axes.size() + 1, 0);
        long s = 1;
        strides_.back() = 1;  // x innermost
        s = spec_.x_axis.count;
        for (int j = static_cast<int>(spec_.xtilde_axes.size()) - 1; j >= 0; --j) {
            strides_[j] = s;
            s *= spec_.xtilde_axes[j].count;
        }
        nodes_ = s;
    }

    double horizon() const { return spec_.horizon; }
    int steps() const { return spec_.time_steps; }
    double dt() const { return spec_.horizon / spec_.time_steps; }
    double time(int k) const { return k * dt(); }
    const Axis& x_axis() const { return spec_.x_axis; }
    const std::vector<Axis>& xtilde_axes() const { return spec_.xtilde_axes; }
    int dim_n() const { return static_cast<int>(spec_.xtilde_axes.size()); }
    const GaussHermite& quad() const { return quad_; }
    const GridSpec& spec() const { return spec_; }

    long nodes() const { return nodes_; }
    long stride_xtilde(int j) const { return strides_[j]; }

    long node_index(const int* ixt, int ix) const {
        long idx = ix;
        for (int j = 0; j < dim_n(); ++j) idx += strides_[j] * ixt[j];
        return idx;
    }

    void node_coords(long node, double* xt, double& x) const {
        for (int j = 0; j < dim_n(); ++j) {
            long i = node / strides_[j];
            node -= i * strides_[j];
            xt[j] = spec_.xtilde_axes[j].coord(static_cast<int>(i));
        }
        x = spec_.x_axis.coord(static_cast<int>(node));
    }

  private:
    GridSpec spec_;
    GaussHermite quad_;
    std::vector<long> strides_;
    long nodes_ = 0;
};

inline Grid build_grid(const GridSpec& spec, int quad_nodes) { return Grid(spec, quad_nodes); }

}  // namespace fbsde
