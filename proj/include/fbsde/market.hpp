#pragma once

#include <cmath>
#include <random>
#include <utility>

#include "fbsde/common.hpp"

namespace fbsde {

// one additive univariate term of a catalogue coefficient; arg indexes the
// x-tilde coordinate, arg = -1 means the terminal wealth argument x
struct TermSpec {
    enum class Kind { Constant, Linear, Sine };
    Kind kind = Kind::Constant;
    int arg = 0;
    double value = 0.0;      // Constant
    double slope = 0.0;      // Linear
    double amplitude = 0.0;  // Sine
    double frequency = 0.0;
    double phase = 0.0;

    static TermSpec constant(double v) {
        TermSpec t;
        t.kind = Kind::Constant;
        t.value = v;
        return t;
    }
    static TermSpec linear(int arg, double slope) {
        TermSpec t;
        t.kind = Kind::Linear;
        t.arg = arg;
        t.slope = slope;
        return t;
    }
    static TermSpec sine(int arg, double amplitude, double frequency, double phase = 0.0) {
        TermSpec t;
        t.kind = Kind::Sine;
        t.arg = arg;
        t.amplitude = amplitude;
        t.frequency = frequency;
        t.phase = phase;
        return t;
    }

    double eval(double u) const {
        switch (kind) {
            case Kind::Constant: return value;
            case Kind::Linear: return slope * u;
            case Kind::Sine: return amplitude * std::sin(frequency * u + phase);
        }
        return 0.0;
    }

    double lipschitz() const {
        switch (kind) {
            case Kind::Constant: return 0.0;
            case Kind::Linear: return std::abs(slope);
            case Kind::Sine: return std::abs(amplitude * frequency);
        }
        return 0.0;
    }

    double sup_abs() const {
        switch (kind) {
            case Kind::Constant: return std::abs(value);
            case Kind::Linear:
                return slope == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
            case Kind::Sine: return std::abs(amplitude);
        }
        return 0.0;
    }
};

// sum of catalogue terms; x is passed separately for the terminal map
struct CoefficientFn {
    std::vector<TermSpec> terms;

    static CoefficientFn constant(double v) {
        CoefficientFn f;
        if (v != 0.0) f.terms.push_back(TermSpec::constant(v));
        return f;
    }

    double eval(const double* xt, double x = 0.0) const {
        double s = 0.0;
        for (const auto& t : terms) s += t.eval(t.arg < 0 ? x : xt[t.arg]);
        return s;
    }

    double lipschitz_coord(int arg) const {
        double s = 0.0;
        for (const auto& t : terms)
            if (t.arg == arg && t.kind != TermSpec::Kind::Constant) s += t.lipschitz();
        return s;
    }

    double lipschitz_xtilde(int dim_n) const {
        double s = 0.0;
        for (int j = 0; j < dim_n; ++j) {
            double l = lipschitz_coord(j);
            s += l * l;
        }
        return std::sqrt(s);
    }

    double sup_abs() const {
        double s = 0.0;
        for (const auto& t : terms) s += t.sup_abs();
        return s;
    }
};

struct MarketParams {
    int dim_n = 1;
    int dim_d1 = 1;
    int dim_d2 = 0;
    std::vector<CoefficientFn> mu;     // size N
    std::vector<CoefficientFn> sigma;  // size N*d, row major N x d
    std::vector<CoefficientFn> theta;  // size d
    CoefficientFn terminal;            // terms over x-tilde coords and arg -1 for x
    // declared metadata; negative means derive from the catalogue
    double lip_h_x = -1.0;
    double lip_h_xtilde = -1.0;
    double lip_theta = -1.0;
    double lip_mu = -1.0;
    double lip_sigma = -1.0;
    double sup_theta = -1.0;
    double sup_h = -1.0;
    double sup_sigma = -1.0;
};

class MarketSpec {
  public:
    explicit MarketSpec(MarketParams p) : p_(std::move(p)) {
        const int n = p_.dim_n, d = dim_d();
        if (n < 1) throw ConfigError("market needs dim_n >= 1");
        if (p_.dim_d1 < 1 || p_.dim_d2 < 0) throw ConfigError("market needs d1 >= 1, d2 >= 0");
        if (p_.mu.empty()) p_.mu.assign(n, CoefficientFn{});
        if (p_.sigma.empty()) p_.sigma.assign(static_cast<size_t>(n) * d, CoefficientFn{});
        if (p_.theta.empty()) p_.theta.assign(d, CoefficientFn{});
        if (static_cast<int>(p_.mu.size()) != n) throw ConfigError("mu needs N components");
        if (static_cast<int>(p_.sigma.size()) != n * d)
            throw ConfigError("sigma needs N x d components");
        if (static_cast<int>(p_.theta.size()) != d) throw ConfigError("theta needs d components");
        auto check_args = [n](const CoefficientFn& f, bool allow_x) {
            for (const auto& t : f.terms) {
                if (t.arg < (allow_x ? -1 : 0) || t.arg >= n)
                    throw ConfigError("coefficient term argument out of range");
            }
        };
        for (const auto& f : p_.mu) check_args(f, false);
        for (const auto& f : p_.sigma) check_args(f, false);
        for (const auto& f : p_.theta) check_args(f, false);
        check_args(p_.terminal, true);

        if (p_.lip_h_x < 0.0) {
            p_.lip_h_x = 0.0;
            for (const auto& t : p_.terminal.terms)
                if (t.arg == -1) p_.lip_h_x += t.lipschitz();
        }
        if (p_.lip_h_xtilde < 0.0) p_.lip_h_xtilde = p_.terminal.lipschitz_xtilde(n);
        auto derive_lip = [n](const std::vector<CoefficientFn>& fs) {
            double s = 0.0;
            for (const auto& f : fs)
                for (int j = 0; j < n; ++j) {
                    double l = f.lipschitz_coord(j);
                    s += l * l;
                }
            return std::sqrt(s);
        };
        if (p_.lip_theta < 0.0) p_.lip_theta = derive_lip(p_.theta);
        if (p_.lip_mu < 0.0) p_.lip_mu = derive_lip(p_.mu);
        if (p_.lip_sigma < 0.0) p_.lip_sigma = derive_lip(p_.sigma);
        auto derive_sup = [](const std::vector<CoefficientFn>& fs) {
            double s = 0.0;
            for (const auto& f : fs) {
                double v = f.sup_abs();
                s += v * v;
            }
            return std::sqrt(s);
        };
        if (p_.sup_theta < 0.0) p_.sup_theta = derive_sup(p_.theta);
        if (p_.sup_sigma < 0.0) p_.sup_sigma = derive_sup(p_.sigma);
        if (p_.sup_h < 0.0) p_.sup_h = p_.terminal.sup_abs();
    }

    int dim_n() const { return p_.dim_n; }
    int dim_d1() const { return p_.dim_d1; }
    int dim_d2() const { return p_.dim_d2; }
    int dim_d() const { return p_.dim_d1 + p_.dim_d2; }

    void eval_mu(double /*t*/, const double* xt, double* out) const {
        for (int j = 0; j < p_.dim_n; ++j) out[j] = p_.mu[j].eval(xt);
    }

    // row major N x d
    void eval_sigma(double /*t*/, const double* xt, double* out) const {
        const int nd = p_.dim_n * dim_d();
        for (int k = 0; k < nd; ++k) out[k] = p_.sigma[k].eval(xt);
    }

    void eval_theta(double /*t*/, const double* xt, double* out) const {
        for (int i = 0; i < dim_d(); ++i) out[i] = p_.theta[i].eval(xt);
    }

    double eval_terminal(const double* xt, double x) const { return p_.terminal.eval(xt, x); }

    double lip_h_x() const { return p_.lip_h_x; }
    double lip_h_xtilde() const { return p_.lip_h_xtilde; }
    double lip_theta() const { return p_.lip_theta; }
    double lip_mu() const { return p_.lip_mu; }
    double lip_sigma() const { return p_.lip_sigma; }
    double sup_theta() const { return p_.sup_theta; }
    double sup_h() const { return p_.sup_h; }
    double sup_sigma() const { return p_.sup_sigma; }
    const MarketParams& params() const { return p_; }

    bool theta_is_zero() const {
        for (const auto& f : p_.theta)
            if (f.sup_abs() != 0.0) return false;
        return true;
    }

    bool depends_on_xtilde() const {
        auto nonconst = [](const std::vector<CoefficientFn>& fs) {
            for (const auto& f : fs)
                for (const auto& t : f.terms)
                    if (t.kind != TermSpec::Kind::Constant) return true;
            return false;
        };
        if (nonconst(p_.mu) || nonconst(p_.sigma) || nonconst(p_.theta)) return true;
        for (const auto& t : p_.terminal.terms)
            if (t.arg >= 0 && t.kind != TermSpec::Kind::Constant) return true;
        return false;
    }

  private:
    MarketParams p_;
};

// pi1 zeroes the last d2 slots, pi2 the first d1
inline void project_tradable(const double* v, double* out, int d1, int d2) {
    for (int i = 0; i < d1; ++i) out[i] = v[i];
    for (int i = d1; i < d1 + d2; ++i) out[i] = 0.0;
}

inline void project_untradable(const double* v, double* out, int d1, int d2) {
    for (int i = 0; i < d1; ++i) out[i] = 0.0;
    for (int i = d1; i < d1 + d2; ++i) out[i] = v[i];
}

inline std::pair<std::vector<double>, std::vector<double>> split_theta(const MarketSpec& m,
                                                                       double t,
                                                                       const double* xt) {
    const int d = m.dim_d();
    std::vector<double> theta(d), p1(d), p2(d);
    m.eval_theta(t, xt, theta.data());
    project_tradable(theta.data(), p1.data(), m.dim_d1(), m.dim_d2());
    project_untradable(theta.data(), p2.data(), m.dim_d1(), m.dim_d2());
    return {std::move(p1), std::move(p2)};
}

// randomized audit of the declared (C2) metadata; the hard gate lip_h_x < 1
// is checked unconditionally
inline ValidationReport validate_c2(const MarketSpec& m, int probes = 256, uint64_t seed = 1) {
    ValidationReport rep;
    const int n = m.dim_n(), d = m.dim_d();
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> box(-10.0, 10.0);
    std::uniform_real_distribution<double> tdist(0.0, 1.0);
    std::uniform_real_distribution<double> scale(1e-4, 1.0);

    const double tol = 1e-8;
    double worst_hx = 0.0, worst_hxt = 0.0, worst_th = 0.0, worst_mu = 0.0, worst_sg = 0.0;
    double sup_th = 0.0, sup_h = 0.0, sup_sg = 0.0;
    bool finite = true;

    std::vector<double> u(n), v(n), fu(std::max({n, d, n * d})), fv(fu.size());
    for (int k = 0; k < std::max(1, probes); ++k) {
        double t = tdist(rng);
        for (int j = 0; j < n; ++j) u[j] = box(rng);
        // mix far pairs with short offsets so local slopes are sampled too
        double eps = scale(rng);
        for (int j = 0; j < n; ++j) v[j] = (k % 2 == 0) ? box(rng) : u[j] + eps * box(rng) / 10.0;
        double du = 0.0;
        for (int j = 0; j < n; ++j) du += (u[j] - v[j]) * (u[j] - v[j]);
        du = std::sqrt(du);
        double xa = box(rng), xb = box(rng);

        m.eval_theta(t, u.data(), fu.data());
        m.eval_theta(t, v.data(), fv.data());
        for (int i = 0; i < d; ++i)
            if (!std::isfinite(fu[i])) finite = false;
        sup_th = std::max(sup_th, norm2(fu.data(), d));
        if (du > 0.0) {
            double r = 0.0;
            for (int i = 0; i < d; ++i) r += (fu[i] - fv[i]) * (fu[i] - fv[i]);
            worst_th = std::max(worst_th, std::sqrt(r) / du);
        }

        m.eval_mu(t, u.data(), fu.data());
        m.eval_mu(t, v.data(), fv.data());
        for (int j = 0; j < n; ++j)
            if (!std::isfinite(fu[j])) finite = false;
        if (du > 0.0) {
            double r = 0.0;
            for (int j = 0; j < n; ++j) r += (fu[j] - fv[j]) * (fu[j] - fv[j]);
            worst_mu = std::max(worst_mu, std::sqrt(r) / du);
        }

        m.eval_sigma(t, u.data(), fu.data());
        m.eval_sigma(t, v.data(), fv.data());
        for (int j = 0; j < n * d; ++j)
            if (!std::isfinite(fu[j])) finite = false;
        sup_sg = std::max(sup_sg, norm2(fu.data(), n * d));
        if (du > 0.0) {
            double r = 0.0;
            for (int j = 0; j < n * d; ++j) r += (fu[j] - fv[j]) * (fu[j] - fv[j]);
            worst_sg = std::max(worst_sg, std::sqrt(r) / du);
        }

        double ha = m.eval_terminal(u.data(), xa);
        double hb = m.eval_terminal(u.data(), xb);
        if (!std::isfinite(ha) || !std::isfinite(hb)) finite = false;
        sup_h = std::max({sup_h, std::abs(ha), std::abs(hb)});
        if (xa != xb) worst_hx = std::max(worst_hx, std::abs(ha - hb) / std::abs(xa - xb));
        double hc = m.eval_terminal(v.data(), xa);
        if (du > 0.0) worst_hxt = std::max(worst_hxt, std::abs(ha - hc) / du);
    }

    auto le = [tol](double observed, double declared) {
        return observed <= declared * (1.0 + tol) + 1e-12;
    };
    rep.checks.push_back({"terminal_x_gate", m.lip_h_x() < 1.0, m.lip_h_x(), 1.0,
                          "lip_h_x must be strictly below one"});
    rep.checks.push_back({"finite_evaluations", finite, finite ? 0.0 : 1.0, 0.0,
                          "all coefficient evaluations must be finite"});
    rep.checks.push_back({"lip_h_x_probed", le(worst_hx, m.lip_h_x()), worst_hx, m.lip_h_x(), ""});
    rep.checks.push_back(
        {"lip_h_xtilde_probed", le(worst_hxt, m.lip_h_xtilde()), worst_hxt, m.lip_h_xtilde(), ""});
    rep.checks.push_back({"lip_theta_probed", le(worst_th, m.lip_theta()), worst_th, m.lip_theta(), ""});
    rep.checks.push_back({"lip_mu_probed", le(worst_mu, m.lip_mu()), worst_mu, m.lip_mu(), ""});
    rep.checks.push_back(
        {"lip_sigma_probed", le(worst_sg, m.lip_sigma()), worst_sg, m.lip_sigma(), ""});
    rep.checks.push_back({"sup_theta_probed", le(sup_th, m.sup_theta()), sup_th, m.sup_theta(), ""});
    rep.checks.push_back({"sup_h_probed", le(sup_h, m.sup_h()), sup_h, m.sup_h(), ""});
    rep.checks.push_back(
        {"sup_sigma_probed", le(sup_sg, m.sup_sigma()), sup_sg, m.sup_sigma(), ""});
    return rep;
}

}  // namespace fbsde
