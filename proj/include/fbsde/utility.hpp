#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "fbsde/common.hpp"

namespace fbsde {

enum class KappaFamily { Linear, SoftplusBlend, Tabulated };

struct KappaParams {
    KappaFamily family = KappaFamily::Linear;
    // Linear: kappa(x) = gamma*x + offset
    double gamma = 1.0;
    double offset = 0.0;
    // SoftplusBlend: kappa'(x) = lo + (hi-lo)*logistic(sharpness*(x-center))
    double lo = 1.0;
    double hi = 2.0;
    double sharpness = 1.0;
    double center = 0.0;
    // Tabulated: natural cubic spline through (knots_x, knots_k)
    std::vector<double> knots_x;
    std::vector<double> knots_k;
};

namespace detail {

// stable log(1+e^t)
inline double softplus(double t) {
    if (t > 30.0) return t + std::log1p(std::exp(-t));
    return std::log1p(std::exp(t));
}

// softplus(u + dv) - softplus(u) with absolute error near machine epsilon
// even when |u| is large
inline double softplus_diff(double u, double dv) {
    double v = u + dv;
    if (u >= 0.0 && v >= 0.0)
        return dv + (std::log1p(std::exp(-v)) - std::log1p(std::exp(-u)));
    if (u <= 0.0 && v <= 0.0) return std::log1p(std::exp(v)) - std::log1p(std::exp(u));
    return softplus(v) - softplus(u);
}

inline double logistic(double t) {
    if (t >= 0.0) {
        double e = std::exp(-t);
        return 1.0 / (1.0 + e);
    }
    double e = std::exp(t);
    return e / (1.0 + e);
}

// natural cubic spline data: second derivatives at knots
struct Spline {
    std::vector<double> x, y, m;  // m[i] = y''(x[i]), m front/back = 0

    void build() {
        const int n = static_cast<int>(x.size());
        m.assign(n, 0.0);
        if (n < 3) return;
        std::vector<double> diag(n, 0.0), rhs(n, 0.0), sub(n, 0.0), sup(n, 0.0);
        for (int i = 1; i + 1 < n; ++i) {
            double hl = x[i] - x[i - 1];
            double hr = x[i + 1] - x[i];
            sub[i] = hl / 6.0;
            diag[i] = (hl + hr) / 3.0;
            sup[i] = hr / 6.0;
            rhs[i] = (y[i + 1] - y[i]) / hr - (y[i] - y[i - 1]) / hl;
        }
        // Thomas sweep on interior rows, natural ends stay zero
        for (int i = 2; i + 1 < n; ++i) {
            double w = sub[i] / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        for (int i = n - 2; i >= 1; --i) {
            double t = rhs[i];
            if (i + 2 < n) t -= sup[i] * m[i + 1];
            m[i] = t / diag[i];
        }
    }

    int piece(double xq) const {
        int n = static_cast<int>(x.size());
        auto it = std::upper_bound(x.begin(), x.end(), xq);
        int i = static_cast<int>(it - x.begin()) - 1;
        return std::clamp(i, 0, n - 2);
    }

    double eval(double xq) const {
        int n = static_cast<int>(x.size());
        if (xq <= x.front()) return y.front() + deriv_at_knot(0) * (xq - x.front());
        if (xq >= x.back()) return y.back() + deriv_at_knot(n - 1) * (xq - x.back());
        int i = piece(xq);
        double h = x[i + 1] - x[i];
        double a = (x[i + 1] - xq) / h, b = (xq - x[i]) / h;
        return a * y[i] + b * y[i + 1] +
               ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0;
    }

    double deriv(double xq) const {
        int n = static_cast<int>(x.size());
        if (xq <= x.front()) return deriv_at_knot(0);
        if (xq >= x.back()) return deriv_at_knot(n - 1);
        int i = piece(xq);
        double h = x[i + 1] - x[i];
        double a = (x[i + 1] - xq) / h, b = (xq - x[i]) / h;
        return (y[i + 1] - y[i]) / h -
               (3.0 * a * a - 1.0) * h * m[i] / 6.0 + (3.0 * b * b - 1.0) * h * m[i + 1] / 6.0;
    }

    double second(double xq) const {
        if (xq <= x.front() || xq >= x.back()) return 0.0;
        int i = piece(xq);
        double h = x[i + 1] - x[i];
        double a = (x[i + 1] - xq) / h, b = (xq - x[i]) / h;
        return a * m[i] + b * m[i + 1];
    }

    double deriv_at_knot(int i) const {
        int n = static_cast<int>(x.size());
        if (i + 1 < n) {
            double h = x[i + 1] - x[i];
            return (y[i + 1] - y[i]) / h - h * (2.0 * m[i] + m[i + 1]) / 6.0;
        }
        double h = x[i] - x[i - 1];
        return (y[i] - y[i - 1]) / h + h * (m[i - 1] + 2.0 * m[i]) / 6.0;
    }

    // range of the piecewise quadratic derivative (candidates: knot slopes
    // plus the stationary point inside a piece where the second derivative
    // crosses zero)
    void deriv_range(double& lo, double& hi) const {
        int n = static_cast<int>(x.size());
        lo = std::numeric_limits<double>::infinity();
        hi = -lo;
        for (int i = 0; i < n; ++i) {
            double d = deriv_at_knot(i);
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        for (int i = 0; i + 1 < n; ++i) {
            if ((m[i] > 0.0) == (m[i + 1] > 0.0)) continue;
            double denom = m[i] - m[i + 1];
            if (denom == 0.0) continue;
            double s = m[i] / denom;  // fraction of the piece
            if (s <= 0.0 || s >= 1.0) continue;
            double xq = x[i] + s * (x[i + 1] - x[i]);
            double d = deriv(xq);
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
    }
};

}  // namespace detail

// risk curvature kappa with U'(x) = int_x^inf exp(-kappa(y)) dy
class KappaModel {
  public:
    static KappaModel linear(double gamma, double offset = 0.0) {
        KappaParams p;
        p.family = KappaFamily::Linear;
        p.gamma = gamma;
        p.offset = offset;
        return KappaModel(p);
    }

    static KappaModel softplus_blend(double lo, double hi, double sharpness, double center) {
        KappaParams p;
        p.family = KappaFamily::SoftplusBlend;
        p.lo = lo;
        p.hi = hi;
        p.sharpness = sharpness;
        p.center = center;
        return KappaModel(p);
    }

    static KappaModel tabulated(std::vector<double> xs, std::vector<double> ks) {
        KappaParams p;
        p.family = KappaFamily::Tabulated;
        p.knots_x = std::move(xs);
        p.knots_k = std::move(ks);
        return KappaModel(p);
    }

    explicit KappaModel(const KappaParams& p) : params_(p) {
        switch (p.family) {
            case KappaFamily::Linear:
                if (!(p.gamma > 0.0) || !std::isfinite(p.gamma) || !std::isfinite(p.offset))
                    throw InvalidFamilyParams("linear kappa needs gamma > 0");
                prime_inf_ = prime_sup_ = p.gamma;
                second_sup_ = 0.0;
                second_min_ = 0.0;
                break;
            case KappaFamily::SoftplusBlend:
                if (!(p.lo > 0.0) || !(p.hi >= p.lo) || !(p.sharpness > 0.0) ||
                    !std::isfinite(p.center) || !std::isfinite(p.hi))
                    throw InvalidFamilyParams("softplus blend needs 0 < lo <= hi, sharpness > 0");
                prime_inf_ = p.lo;
                prime_sup_ = p.hi;
                second_sup_ = p.sharpness * (p.hi - p.lo) / 4.0;
                second_min_ = 0.0;
                break;
            case KappaFamily::Tabulated: {
                const auto& xs = p.knots_x;
                const auto& ks = p.knots_k;
                if (xs.size() < 2 || xs.size() != ks.size())
                    throw InvalidFamilyParams("tabulated kappa needs >= 2 matching knots");
                for (size_t i = 0; i < xs.size(); ++i) {
                    if (!std::isfinite(xs[i]) || !std::isfinite(ks[i]))
                        throw InvalidFamilyParams("tabulated kappa knots must be finite");
                    if (i > 0 && !(xs[i] > xs[i - 1]))
                        throw InvalidFamilyParams("tabulated kappa knots must increase strictly");
                }
                spline_.x = xs;
                spline_.y = ks;
                spline_.build();
                spline_.deriv_range(prime_inf_, prime_sup_);
                second_sup_ = 0.0;
                second_min_ = 0.0;
                for (double mi : spline_.m) {
                    second_sup_ = std::max(second_sup_, mi);
                    second_min_ = std::min(second_min_, mi);
                }
                break;
            }
        }
    }

    KappaFamily family() const { return params_.family; }
    const KappaParams& params() const { return params_; }
    bool is_linear() const { return params_.family == KappaFamily::Linear; }

    double kappa(double x) const {
        switch (params_.family) {
            case KappaFamily::Linear:
                return params_.gamma * x + params_.offset;
            case KappaFamily::SoftplusBlend:
                return params_.lo * x +
                       (params_.hi - params_.lo) / params_.sharpness *
                           detail::softplus(params_.sharpness * (x - params_.center));
            case KappaFamily::Tabulated:
                return spline_.eval(x);
        }
        return 0.0;
    }

    // kappa(x + t) - kappa(x) without subtracting two large values; the
    // exponent of the tail integrand needs absolute accuracy near machine
    // epsilon even where kappa itself is ~1e2
    double kappa_diff(double x, double t) const {
        switch (params_.family) {
            case KappaFamily::Linear:
                return params_.gamma * t;
            case KappaFamily::SoftplusBlend:
                return params_.lo * t +
                       (params_.hi - params_.lo) / params_.sharpness *
                           detail::softplus_diff(params_.sharpness * (x - params_.center),
                                                 params_.sharpness * t);
            case KappaFamily::Tabulated: {
                double y = x + t;
                int n = static_cast<int>(spline_.x.size());
                if (x <= spline_.x.front() && y <= spline_.x.front())
                    return spline_.deriv_at_knot(0) * t;
                if (x >= spline_.x.back() && y >= spline_.x.back())
                    return spline_.deriv_at_knot(n - 1) * t;
                return spline_.eval(y) - spline_.eval(x);
            }
        }
        return 0.0;
    }

    double kappa_prime(double x) const {
        switch (params_.family) {
            case KappaFamily::Linear:
                return params_.gamma;
            case KappaFamily::SoftplusBlend:
                return params_.lo + (params_.hi - params_.lo) *
                                        detail::logistic(params_.sharpness * (x - params_.center));
            case KappaFamily::Tabulated:
                return spline_.deriv(x);
        }
        return 0.0;
    }

    // evaluation clamps at zero; the raw value is kept for validation
    double kappa_second(double x) const { return std::max(0.0, kappa_second_raw(x)); }

    double kappa_second_raw(double x) const {
        switch (params_.family) {
            case KappaFamily::Linear:
                return 0.0;
            case KappaFamily::SoftplusBlend: {
                double s = detail::logistic(params_.sharpness * (x - params_.center));
                return params_.sharpness * (params_.hi - params_.lo) * s * (1.0 - s);
            }
            case KappaFamily::Tabulated:
                return spline_.second(x);
        }
        return 0.0;
    }

    double kappa_prime_inf() const { return prime_inf_; }
    double kappa_prime_sup() const { return prime_sup_; }
    double kappa_second_sup() const { return second_sup_; }
    double kappa_second_min() const { return second_min_; }

  private:
    KappaParams params_;
    detail::Spline spline_;
    double prime_inf_ = 0.0;
    double prime_sup_ = 0.0;
    double second_sup_ = 0.0;
    double second_min_ = 0.0;
};

inline KappaModel make_kappa(const KappaParams& p) { return KappaModel(p); }

struct QuadratureOptions {
    double tail_tol = 1e-12;  // truncation mass bound exp(-a M)/a
    double rel_tol = 1e-13;
    int max_panels = 20000;
};

namespace detail {

// 16 point Gauss-Legendre on [-1, 1], positive half
inline constexpr double kGlNode[8] = {
    0.0950125098376374, 0.2816035507792589, 0.4580167776572274, 0.6178762444026438,
    0.7554044083550030, 0.8656312023878318, 0.9445750230732326, 0.9894009349916499};
inline constexpr double kGlWeight[8] = {
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};

template <class F>
double gl16(const F& f, double lo, double hi) {
    double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
    double s = 0.0;
    for (int i = 0; i < 8; ++i) {
        double d = h * kGlNode[i];
        s += kGlWeight[i] * (f(c - d) + f(c + d));
    }
    return s * h;
}

template <class F>
double adaptive_gl(const F& f, double lo, double hi, double tol, int* budget) {
    double whole = gl16(f, lo, hi);
    struct Seg {
        double lo, hi, est, tol;
    };
    std::vector<Seg> stack{{lo, hi, whole, tol}};
    double total = 0.0;
    while (!stack.empty()) {
        Seg s = stack.back();
        stack.pop_back();
        if (--(*budget) < 0)
            throw QuadratureNonConvergence("adaptive quadrature panel budget exhausted");
        double mid = 0.5 * (s.lo + s.hi);
        double left = gl16(f, s.lo, mid);
        double right = gl16(f, mid, s.hi);
        double two = left + right;
        // repeated tolerance halving can undershoot the rounding noise of the
        // panel sums themselves; accept once the estimate is noise-limited
        double noise = 8.0 * std::numeric_limits<double>::epsilon() *
                       (std::abs(left) + std::abs(right));
        if (std::abs(two - s.est) <= std::max(s.tol, noise) ||
            (s.hi - s.lo) < 1e-14 * (hi - lo)) {
            total += two;
        } else {
            stack.push_back({s.lo, mid, left, 0.5 * s.tol});
            stack.push_back({mid, s.hi, right, 0.5 * s.tol});
        }
    }
    return total;
}

// int_0^M exp(-(kappa(x+s) - kappa(x))) ds, the shifted integrand keeps the
// exponent near zero at the left end regardless of x
inline double tail_integral(const KappaModel& k, double x, const QuadratureOptions& opt) {
    const double a = k.kappa_prime_inf();
    const double m = std::max(1.0, std::log(1.0 / (a * opt.tail_tol)) / a);
    auto f = [&](double s) { return std::exp(-k.kappa_diff(x, s)); };
    int budget = opt.max_panels;
    // the integral is at least exp(-b)/b of unit size, an absolute anchor
    // keeps the tolerance meaningful before the first estimate exists
    double scale = 1.0 / k.kappa_prime_sup();
    return adaptive_gl(f, 0.0, m, opt.rel_tol * scale, &budget);
}

}  // namespace detail

// phi = U'/U'' = -int_x^inf exp(-(kappa(y)-kappa(x))) dy, in [-1/a, -1/b]
inline double phi(const KappaModel& k, double x, const QuadratureOptions& opt = {}) {
    if (k.is_linear()) return -1.0 / k.params().gamma;
    return -detail::tail_integral(k, x, opt);
}

// U'(p) = int_p^inf exp(-kappa(y)) dy
inline double marginal_utility(const KappaModel& k, double p, const QuadratureOptions& opt = {}) {
    if (k.is_linear()) return std::exp(-k.kappa(p)) / k.params().gamma;
    return detail::tail_integral(k, p, opt) * std::exp(-k.kappa(p));
}

struct Quotients {
    double phi = 0.0;             // U'/U''
    double neg_kappa_prime = 0.0; // U'''/U''
    double drift_coeff = 0.0;     // phi * (1 + kappa'*phi/2)
};

inline Quotients quotients(const KappaModel& k, double p, const QuadratureOptions& opt = {}) {
    Quotients q;
    q.phi = phi(k, p, opt);
    double kp = k.kappa_prime(p);
    q.neg_kappa_prime = -kp;
    q.drift_coeff = q.phi * (1.0 + 0.5 * kp * q.phi);
    return q;
}

inline ValidationReport validate_c1(const KappaModel& k) {
    ValidationReport rep;
    const double a = k.kappa_prime_inf();
    const double b = k.kappa_prime_sup();
    rep.checks.push_back({"kappa_prime_inf_positive", a > 0.0, a, 0.0,
                          "inf kappa' must be strictly positive"});
    rep.checks.push_back({"kappa_prime_sup_finite", std::isfinite(b) && b >= a, b, a,
                          "sup kappa' must be finite and >= inf"});
    bool convex = k.kappa_second_min() >= -1e-10;
    rep.checks.push_back({"kappa_second_nonnegative", convex, k.kappa_second_min(), 0.0,
                          "raw kappa'' must not dip negative"});
    bool second_ok = std::isfinite(k.kappa_second_sup());
    rep.checks.push_back({"kappa_second_sup_finite", second_ok, k.kappa_second_sup(), 0.0,
                          "sup kappa'' must be finite"});
    if (rep.passed()) {
        // spot check the quotient band once structure is sound
        double worst = 0.0;
        bool ok = true;
        for (double p : {-2.0, -0.5, 0.0, 0.5, 2.0}) {
            double v = phi(k, p);
            double slack = 1e-9 * (1.0 / a);
            if (v < -1.0 / a - slack || v > -1.0 / b + slack) ok = false;
            worst = std::min(worst, v);
        }
        rep.checks.push_back({"phi_band", ok, worst, -1.0 / a,
                              "phi must stay inside [-1/inf kappa', -1/sup kappa']"});
    }
    return rep;
}

// cubic Hermite table of phi over a p-range; node derivatives use the exact
// identity phi' = 1 + kappa' * phi, so no differencing enters the table
class UtilityEvaluator {
  public:
    explicit UtilityEvaluator(KappaModel model, double p_lo = -40.0, double p_hi = 40.0,
                              double step = 1.0 / 256.0)
        : model_(std::move(model)), lo_(p_lo), hi_(p_hi) {
        if (model_.is_linear()) {
            count_ = 0;
            step_ = step;
            return;
        }
        count_ = static_cast<int>(std::ceil((hi_ - lo_) / step)) + 1;
        step_ = (hi_ - lo_) / (count_ - 1);
        values_.resize(count_);
        derivs_.resize(count_);
        QuadratureOptions opt;
        for (int i = 0; i < count_; ++i) {
            double p = lo_ + i * step_;
            double v = fbsde::phi(model_, p, opt);
            values_[i] = v;
            derivs_[i] = 1.0 + model_.kappa_prime(p) * v;
        }
    }

    const KappaModel& model() const { return model_; }
    double p_lo() const { return lo_; }
    double p_hi() const { return hi_; }

    double phi(double p) const {
        if (model_.is_linear()) return -1.0 / model_.params().gamma;
        double v;
        if (p <= lo_) {
            v = values_.front() + derivs_.front() * (p - lo_);
        } else if (p >= hi_) {
            v = values_.back() + derivs_.back() * (p - hi_);
        } else {
            double u = (p - lo_) / step_;
            int i = std::min(static_cast<int>(u), count_ - 2);
            double t = u - i;
            double t2 = t * t, t3 = t2 * t;
            v = (2.0 * t3 - 3.0 * t2 + 1.0) * values_[i] + (t3 - 2.0 * t2 + t) * step_ * derivs_[i] +
                (-2.0 * t3 + 3.0 * t2) * values_[i + 1] + (t3 - t2) * step_ * derivs_[i + 1];
        }
        return std::clamp(v, -1.0 / model_.kappa_prime_inf(), -1.0 / model_.kappa_prime_sup());
    }

    double kappa_prime(double p) const { return model_.kappa_prime(p); }
    double kappa_second(double p) const { return model_.kappa_second(p); }

    double drift_coeff(double p) const {
        double v = phi(p);
        return v * (1.0 + 0.5 * model_.kappa_prime(p) * v);
    }

    // U'(p) = -phi(p) * exp(-kappa(p))
    double marginal(double p) const { return -phi(p) * std::exp(-model_.kappa(p)); }

  private:
    KappaModel model_;
    double lo_, hi_, step_;
    int count_ = 0;
    std::vector<double> values_, derivs_;
};

}  // namespace fbsde
