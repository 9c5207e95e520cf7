#pragma once

#include <memory>

#include "fbsde/market.hpp"
#include "fbsde/utility.hpp"

namespace fbsde {

enum class SystemForm { PForm, BForm };

// stack buffers sized for the largest supported system
inline constexpr int kMaxDim = 8;

struct AssemblyOptions {
    double p_lo = -40.0;   // quotient table range for x + y
    double p_hi = 40.0;
    double p_step = 1.0 / 256.0;
};

// frozen per-node slice: everything at (t, xcheck) that is independent of
// the backward pair (p, z); lets the fixed point iterate without
// re-evaluating market coefficients
struct NodeCoeffs {
    int dim_n = 0, d1 = 0, d2 = 0;
    double theta1[kMaxDim];                 // pi1 theta at (t, eps*xcheck)
    double theta1_sq = 0.0;
    double mu_xt[kMaxDim];                  // scaled drift of xcheck
    double sig_xt[kMaxDim * kMaxDim];       // scaled vol of xcheck, N x d
};

class FbsdeCoefficients {
  public:
    FbsdeCoefficients(SystemForm form, double epsilon,
                      std::shared_ptr<const UtilityEvaluator> utility,
                      std::shared_ptr<const MarketSpec> market)
        : form_(form), eps_(epsilon), u_(std::move(utility)), m_(std::move(market)) {
        if (!(eps_ > 0.0) || !std::isfinite(eps_))
            throw ConfigError("epsilon must be positive and finite");
        if (m_->dim_n() > kMaxDim || m_->dim_d() > kMaxDim)
            throw ConfigError("state or noise dimension exceeds supported maximum");
    }

    SystemForm form() const { return form_; }
    double epsilon() const { return eps_; }
    const UtilityEvaluator& utility() const { return *u_; }
    const MarketSpec& market() const { return *m_; }
    std::shared_ptr<const UtilityEvaluator> utility_ptr() const { return u_; }
    std::shared_ptr<const MarketSpec> market_ptr() const { return m_; }

    void at_node(double t, const double* xcheck, NodeCoeffs& nc) const {
        const int n = m_->dim_n(), d = m_->dim_d(), d1 = m_->dim_d1();
        nc.dim_n = n;
        nc.d1 = d1;
        nc.d2 = m_->dim_d2();
        double xt[kMaxDim];
        for (int j = 0; j < n; ++j) xt[j] = eps_ * xcheck[j];
        double theta[kMaxDim];
        m_->eval_theta(t, xt, theta);
        for (int i = 0; i < d; ++i) nc.theta1[i] = i < d1 ? theta[i] : 0.0;
        nc.theta1_sq = dot(nc.theta1, nc.theta1, d1);
        m_->eval_mu(t, xt, nc.mu_xt);
        m_->eval_sigma(t, xt, nc.sig_xt);
        const double inv_eps = 1.0 / eps_;
        for (int j = 0; j < n; ++j) {
            double* row = nc.sig_xt + static_cast<size_t>(j) * d;
            if (form_ == SystemForm::BForm)
                nc.mu_xt[j] -= dot(row, nc.theta1, d);
            nc.mu_xt[j] *= inv_eps;
            for (int i = 0; i < d; ++i) row[i] *= inv_eps;
        }
    }

    // vol of x: -(pi1 theta * phi(p) + pi1 z), zeros in the last d2 slots
    void x_vol_at(const NodeCoeffs& nc, double phi_p, const double* z, double* out) const {
        for (int i = 0; i < nc.d1; ++i) out[i] = -(nc.theta1[i] * phi_p + z[i]);
        for (int i = nc.d1; i < nc.d1 + nc.d2; ++i) out[i] = 0.0;
    }

    double x_drift_at(const NodeCoeffs& nc, const double* x_vol) const {
        if (form_ == SystemForm::BForm) return 0.0;
        return dot(x_vol, nc.theta1, nc.d1);
    }

    double driver_at(const NodeCoeffs& nc, double p, const double* z) const {
        double z2_sq = 0.0;
        const int d = nc.d1 + nc.d2;
        for (int i = nc.d1; i < d; ++i) z2_sq += z[i] * z[i];
        double base = nc.theta1_sq * u_->drift_coeff(p) + 0.5 * z2_sq * u_->kappa_prime(p);
        if (form_ == SystemForm::PForm) base += dot(z, nc.theta1, nc.d1);
        return base;
    }

    // convenience entry points mirroring the slice methods
    void xtilde_drift(double t, const double* xcheck, double* out) const {
        NodeCoeffs nc;
        at_node(t, xcheck, nc);
        for (int j = 0; j < nc.dim_n; ++j) out[j] = nc.mu_xt[j];
    }

    void xtilde_vol(double t, const double* xcheck, double* out) const {
        NodeCoeffs nc;
        at_node(t, xcheck, nc);
        for (int k = 0; k < nc.dim_n * (nc.d1 + nc.d2); ++k) out[k] = nc.sig_xt[k];
    }

    void x_vol(double t, const double* xcheck, double p, const double* z, double* out) const {
        NodeCoeffs nc;
        at_node(t, xcheck, nc);
        x_vol_at(nc, u_->phi(p), z, out);
    }

    double x_drift(double t, const double* xcheck, double p, const double* z) const {
        NodeCoeffs nc;
        at_node(t, xcheck, nc);
        double vol[kMaxDim];
        x_vol_at(nc, u_->phi(p), z, vol);
        return x_drift_at(nc, vol);
    }

    double driver(double t, const double* xcheck, double p, const double* z) const {
        NodeCoeffs nc;
        at_node(t, xcheck, nc);
        return driver_at(nc, p, z);
    }

    double terminal(const double* xcheck, double x) const {
        double xt[kMaxDim];
        for (int j = 0; j < m_->dim_n(); ++j) xt[j] = eps_ * xcheck[j];
        return m_->eval_terminal(xt, x);
    }

  private:
    SystemForm form_;
    double eps_;
    std::shared_ptr<const UtilityEvaluator> u_;
    std::shared_ptr<const MarketSpec> m_;
};

inline FbsdeCoefficients assemble_p_form(const KappaModel& u, std::shared_ptr<const MarketSpec> m,
                                         double epsilon, const AssemblyOptions& opt = {}) {
    auto ev = std::make_shared<UtilityEvaluator>(u, opt.p_lo, opt.p_hi, opt.p_step);
    return FbsdeCoefficients(SystemForm::PForm, epsilon, std::move(ev), std::move(m));
}

inline FbsdeCoefficients assemble_b_form(const KappaModel& u, std::shared_ptr<const MarketSpec> m,
                                         double epsilon, const AssemblyOptions& opt = {}) {
    auto ev = std::make_shared<UtilityEvaluator>(u, opt.p_lo, opt.p_hi, opt.p_step);
    return FbsdeCoefficients(SystemForm::BForm, epsilon, std::move(ev), std::move(m));
}

// same problem at a new scale; solutions map by xcheck' = (eps/eps') xcheck
// with x, y, z unchanged
inline FbsdeCoefficients rescale_epsilon(const FbsdeCoefficients& c, double eps_new) {
    return FbsdeCoefficients(c.form(), eps_new, c.utility_ptr(), c.market_ptr());
}

// keeps the scaled terminal x-tilde Lipschitz constant at or below a tenth
// of the headroom left by the x gate
inline double default_epsilon(const MarketSpec& m) {
    if (m.lip_h_xtilde() <= 0.0) return 1.0;
    return std::min(1.0, 0.1 * (1.0 - m.lip_h_x()) / m.lip_h_xtilde());
}

}  // namespace fbsde
