#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>

#include "fbsde/config.hpp"
#include "fbsde/solver.hpp"
#include "fbsde/verify.hpp"

namespace fbsde {

enum class Command { Solve, Simulate, Verify, All };

inline Command parse_command(const std::string& s) {
    if (s == "solve") return Command::Solve;
    if (s == "simulate") return Command::Simulate;
    if (s == "verify") return Command::Verify;
    if (s == "all") return Command::All;
    throw ConfigError("unknown command '" + s + "' (expected solve, simulate, verify, or all)");
}

inline const char* to_string(Command c) {
    switch (c) {
        case Command::Solve: return "solve";
        case Command::Simulate: return "simulate";
        case Command::Verify: return "verify";
        case Command::All: return "all";
    }
    return "unknown";
}

struct RunOptions {
    int workers = 1;
    std::string out_dir;  // overrides the config's output directory when set
};

// process exit codes; 1 is reserved for unexpected internal errors
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitGate = 3;
inline constexpr int kExitNumerical = 4;
inline constexpr int kExitVerification = 5;

namespace runner_detail {

using nlohmann::json;

inline void write_text(const std::filesystem::path& p, const std::string& body) {
    std::ofstream f(p, std::ios::binary);
    if (!f) throw Error("cannot write " + p.string());
    f << body;
    if (!f) throw Error("write failed for " + p.string());
}

inline json axis_json(const Axis& a) {
    return json{{"lo", a.lo}, {"hi", a.hi}, {"points", a.count}};
}

inline json report_json(const ValidationReport& r) {
    json arr = json::array();
    for (const auto& c : r.checks)
        arr.push_back(json{{"name", c.name},
                           {"pass", c.pass},
                           {"observed", c.observed},
                           {"bound", c.bound},
                           {"detail", c.detail}});
    return arr;
}

inline json solver_json(const SolveReport& r) {
    json j{{"status", to_string(r.status)},
           {"first_retained", r.first_retained},
           {"max_lip_x", r.max_lip_x},
           {"max_lip_xtilde", r.max_lip_xtilde},
           {"min_grad_x", r.min_grad_x},
           {"median_iterations", r.median_iterations},
           {"nodes_processed", r.nodes_processed}};
    if (r.status != SolveStatus::Converged) {
        j["failure_time"] = r.failure_time;
        j["failure_node"] = r.failure_node;
    }
    return j;
}

inline json field_json(const DecouplingField& f, double eps, bool eps_auto, SystemForm form) {
    const Grid& g = f.grid();
    json j;
    j["epsilon"] = eps;
    j["epsilon_auto"] = eps_auto;
    j["form"] = form == SystemForm::PForm ? "p" : "b";
    j["horizon"] = g.horizon();
    j["time_steps"] = g.steps();
    j["first_retained"] = f.first_retained();
    j["x_axis"] = axis_json(g.x_axis());
    json axes = json::array();
    for (const auto& a : g.xtilde_axes()) axes.push_back(axis_json(a));
    j["xtilde_axes"] = axes;
    // per retained step, aligned with "values"; node index runs x fastest
    json lx = json::array(), lxt = json::array(), vals = json::array();
    for (int k = f.first_retained(); k <= g.steps(); ++k) {
        lx.push_back(f.lip_x(k));
        lxt.push_back(f.lip_xtilde(k));
        vals.push_back(json(f.values(k)));
    }
    j["lip_x"] = lx;
    j["lip_xtilde"] = lxt;
    j["values"] = vals;
    return j;
}

inline std::string csv_field_slice(const DecouplingField& f) {
    const Grid& g = f.grid();
    const int k = f.first_retained();
    const int n = g.dim_n();
    std::ostringstream s;
    for (int j = 0; j < n; ++j) s << "xtilde_" << j << ",";
    s << "x,u,du_dx\n";
    double xt[kMaxDim], x;
    const auto& v = f.values(k);
    const auto& gx = f.grad_x(k);
    for (long node = 0; node < g.nodes(); ++node) {
        g.node_coords(node, xt, x);
        for (int j = 0; j < n; ++j) s << format_double(xt[j]) << ",";
        s << format_double(x) << "," << format_double(v[node]) << ","
          << format_double(gx[node]) << "\n";
    }
    return s.str();
}

inline std::string csv_ensemble(const PathEnsemble& e, long max_paths) {
    std::ostringstream s;
    s << "path,step,t";
    for (int j = 0; j < e.dim_n; ++j) s << ",xtilde_" << j;
    s << ",x,y";
    for (int i = 0; i < e.dim_d; ++i) s << ",z_" << i;
    for (int i = 0; i < e.dim_d; ++i) s << ",pi_" << i;
    s << ",marginal\n";
    const long paths = std::min(e.n_paths, max_paths);
    for (long path = 0; path < paths; ++path) {
        for (int k = 0; k <= e.n_steps; ++k) {
            const long pt = e.point(path, k);
            s << path << "," << k << "," << format_double(e.time_of(k));
            for (int j = 0; j < e.dim_n; ++j)
                s << "," << format_double(e.xcheck[pt * e.dim_n + j]);
            s << "," << format_double(e.x[pt]) << "," << format_double(e.y[pt]);
            for (int i = 0; i < e.dim_d; ++i)
                s << "," << format_double(e.z[pt * e.dim_d + i]);
            for (int i = 0; i < e.dim_d; ++i)
                s << "," << format_double(e.pi[pt * e.dim_d + i]);
            s << "," << format_double(e.marginal[pt]) << "\n";
        }
    }
    return s.str();
}

struct CheckOutcome {
    std::string name;
    bool pass = false;
    json detail;
    std::string line;  // one summary line for stdout
};

inline const char* kappa_family_name(KappaFamily f) {
    switch (f) {
        case KappaFamily::Linear: return "linear";
        case KappaFamily::SoftplusBlend: return "softplus_blend";
        case KappaFamily::Tabulated: return "tabulated";
    }
    return "unknown";
}

}  // namespace runner_detail

// orchestrates one command end to end; all numeric output (stdout and files)
// is a pure function of config + command, timing goes to err only
inline int run(Command cmd, const std::string& config_path, const RunOptions& ropt,
               std::ostream& out, std::ostream& err) {
    namespace fs = std::filesystem;
    using runner_detail::json;
    using Clock = std::chrono::steady_clock;

    RunConfig rc;
    try {
        rc = load_config(config_path);
    } catch (const Error& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    }

    try {
        // stage plan; incompatible requests are config errors, caught below
        const bool want_verify = cmd == Command::Verify || cmd == Command::All;
        const bool emit_field = cmd == Command::Solve || cmd == Command::All;
        const bool emit_ensemble = cmd == Command::Simulate || cmd == Command::All;
        if (cmd == Command::Simulate && !rc.has_simulate)
            throw ConfigError("simulate requested but config has no simulate section");
        if (cmd == Command::Verify && rc.checks.empty())
            throw ConfigError("verify requested but config lists no checks");
        const bool need_checks = want_verify && !rc.checks.empty();
        auto has_check = [&](const char* name) {
            return need_checks &&
                   std::find(rc.checks.begin(), rc.checks.end(), name) != rc.checks.end();
        };
        if (has_check("martingale")) {
            if (!rc.has_simulate)
                throw ConfigError("martingale check needs a simulate section");
            if (rc.form != SystemForm::PForm)
                throw ConfigError("martingale check needs the original-measure form \"p\"");
        }
        if (has_check("closed_form")) {
            if (rc.utility.family != KappaFamily::Linear || rc.market->lip_theta() != 0.0 ||
                rc.market->lip_h_x() != 0.0 || rc.market->lip_h_xtilde() != 0.0)
                throw ConfigError(
                    "closed_form check needs a linear kappa, constant theta, and "
                    "state-independent terminal");
        }
        const bool run_simulate = (emit_ensemble && rc.has_simulate) || has_check("martingale");

        const fs::path out_dir = ropt.out_dir.empty() ? fs::path(rc.output_dir)
                                                      : fs::path(ropt.out_dir);
        try {
            fs::create_directories(out_dir);
        } catch (const fs::filesystem_error& e) {
            throw ConfigError(std::string("cannot create output directory: ") + e.what());
        }

        KappaModel model(rc.utility);
        const auto c1 = validate_c1(model);
        const auto c2 = validate_c2(*rc.market);

        json meta;
        meta["command"] = to_string(cmd);
        meta["config_file"] = fs::path(config_path).filename().string();
        meta["utility_family"] = runner_detail::kappa_family_name(rc.utility.family);
        meta["dims"] = json{{"n", rc.market->dim_n()},
                            {"d1", rc.market->dim_d1()},
                            {"d2", rc.market->dim_d2()}};
        meta["grid"] = json{{"horizon", rc.grid.horizon},
                            {"time_steps", rc.grid.time_steps},
                            {"x_points", rc.grid.x_axis.count},
                            {"quadrature_nodes", rc.quad_nodes}};
        json xtp = json::array();
        for (const auto& a : rc.grid.xtilde_axes) xtp.push_back(a.count);
        meta["grid"]["xtilde_points"] = xtp;
        meta["gates"] = json{{"c1", runner_detail::report_json(c1)},
                             {"c2", runner_detail::report_json(c2)},
                             {"pass", c1.passed() && c2.passed()}};

        std::ostringstream sum;
        sum << "config      " << meta["config_file"].get<std::string>() << "\n";
        sum << "command     " << to_string(cmd) << "\n";

        auto flush_meta = [&](const std::vector<std::string>& artifacts) {
            json named = json::array();
            for (const auto& a : artifacts) named.push_back(a);
            named.push_back("run_meta.json");
            meta["artifacts"] = named;
            runner_detail::write_text(out_dir / "run_meta.json", meta.dump(2) + "\n");
        };

        if (!c1.passed() || !c2.passed()) {
            const CheckResult* f = c1.passed() ? c2.first_failure() : c1.first_failure();
            const char* gate = c1.passed() ? "(C2)" : "(C1)";
            flush_meta({});
            sum << "gates       " << gate << " FAILED at " << f->name << ": " << f->detail
                << " (observed " << format_double(f->observed) << ", bound "
                << format_double(f->bound) << ")\n";
            out << sum.str();
            err << "gate failure: " << gate << " " << f->name << ": " << f->detail << "\n";
            return kExitGate;
        }
        sum << "gates       (C1) pass  (C2) pass\n";

        const double eps = rc.epsilon_auto ? default_epsilon(*rc.market) : rc.epsilon;
        meta["epsilon"] = eps;
        meta["epsilon_auto"] = rc.epsilon_auto;
        sum << "form        " << (rc.form == SystemForm::PForm ? "p" : "b") << "  epsilon "
            << format_double(eps) << (rc.epsilon_auto ? " (auto)" : "") << "\n";
        sum << "grid        K=" << rc.grid.time_steps << "  x " << rc.grid.x_axis.count
            << " nodes  xtilde [";
        for (size_t j = 0; j < rc.grid.xtilde_axes.size(); ++j)
            sum << (j ? " " : "") << rc.grid.xtilde_axes[j].count;
        sum << "]  quad " << rc.quad_nodes << "\n";

        const FbsdeCoefficients coeffs =
            rc.form == SystemForm::PForm ? assemble_p_form(model, rc.market, eps)
                                         : assemble_b_form(model, rc.market, eps);
        auto grid = std::make_shared<Grid>(rc.grid, rc.quad_nodes);

        SolverOptions sopt;
        sopt.workers = ropt.workers;

        const auto t0 = Clock::now();
        auto [field, srep] = solve_backward(coeffs, grid, sopt);
        const double solve_s = std::chrono::duration<double>(Clock::now() - t0).count();
        err << "timing: solve " << solve_s << "s\n";
        meta["solver"] = runner_detail::solver_json(srep);

        if (srep.status != SolveStatus::Converged) {
            flush_meta({});
            sum << "solve       " << to_string(srep.status) << " at t="
                << format_double(srep.failure_time) << " node " << srep.failure_node << "\n";
            out << sum.str();
            err << "solver failure: " << to_string(srep.status) << "\n";
            return kExitNumerical;
        }
        sum << "solve       converged  nodes " << srep.nodes_processed << "  median iters "
            << format_double(srep.median_iterations) << "\n";
        sum << "field       max du/dx lip " << format_double(srep.max_lip_x)
            << "  max du/dxtilde lip " << format_double(srep.max_lip_xtilde) << "  min du/dx "
            << format_double(srep.min_grad_x) << "\n";

        std::vector<std::string> artifacts;
        if (emit_field) {
            runner_detail::write_text(
                out_dir / "field.json",
                runner_detail::field_json(field, eps, rc.epsilon_auto, rc.form).dump(2) + "\n");
            runner_detail::write_text(out_dir / "field_slice_t0.csv",
                                      runner_detail::csv_field_slice(field));
            artifacts.push_back("field.json");
            artifacts.push_back("field_slice_t0.csv");
        }

        PathEnsemble ensemble;
        if (run_simulate) {
            SimulateOptions so = rc.sim;
            so.workers = ropt.workers;
            const auto t1 = Clock::now();
            ensemble = simulate(field, coeffs, rc.grid.xtilde0, rc.grid.x0, so);
            err << "timing: simulate "
                << std::chrono::duration<double>(Clock::now() - t1).count() << "s\n";
            meta["simulate"] = json{{"n_paths", so.n_paths},
                                    {"n_steps", so.n_steps},
                                    {"seed", so.seed}};
            sum << "simulate    " << so.n_paths << " paths x " << so.n_steps << " steps  seed "
                << so.seed << "\n";
            if (emit_ensemble) {
                runner_detail::write_text(out_dir / "ensemble.csv",
                                          runner_detail::csv_ensemble(ensemble, rc.csv_paths));
                artifacts.push_back("ensemble.csv");
            }
        }

        bool verify_pass = true;
        if (need_checks) {
            const double dt = rc.grid.horizon / rc.grid.time_steps;
            const double dx = rc.grid.x_axis.step();
            const double disc_tol = 5.0 * (dt + dx * dx);
            std::vector<runner_detail::CheckOutcome> outcomes;

            // negative control: hand verification a shifted field while the
            // recorded paths stay honest
            const DecouplingField* vf = &field;
            const PathEnsemble* ve = &ensemble;
            std::optional<DecouplingField> corrupted_field;
            std::optional<PathEnsemble> corrupted_ens;
            if (rc.corrupt_field_shift != 0.0) {
                meta["corrupt_field_shift"] = rc.corrupt_field_shift;
                corrupted_field.emplace(shift_field(field, rc.corrupt_field_shift));
                vf = &*corrupted_field;
                if (run_simulate) {
                    corrupted_ens.emplace(revalue(ensemble, *corrupted_field, coeffs.utility()));
                    ve = &*corrupted_ens;
                }
            }

            for (const std::string& name : rc.checks) {
                runner_detail::CheckOutcome oc;
                oc.name = name;
                std::ostringstream line;
                if (name == "closed_form") {
                    OracleSpec os;
                    os.gamma = rc.utility.gamma;
                    os.d1 = rc.market->dim_d1();
                    os.T = rc.grid.horizon;
                    std::vector<double> xt0(rc.market->dim_n(), 0.0);
                    std::vector<double> th(rc.market->dim_d(), 0.0);
                    rc.market->eval_theta(0.0, xt0.data(), th.data());
                    os.theta = th;
                    os.h = rc.market->eval_terminal(xt0.data(), 0.0);
                    const double y0 = exponential_oracle(os, 0.0).y;
                    const double denom = std::max(std::abs(y0), 1.0);
                    double worst = 0.0;
                    for (double v : vf->values(0))
                        worst = std::max(worst, std::abs(v - y0) / denom);
                    const double tol = 1e-3;
                    oc.pass = worst <= tol;
                    oc.detail = json{{"oracle_y0", y0},
                                     {"max_rel_err", worst},
                                     {"tol", tol},
                                     {"nodes", static_cast<long>(vf->values(0).size())}};
                    line << "max rel err " << format_double(worst) << " (tol "
                         << format_double(tol) << ")";
                } else if (name == "martingale") {
                    MartingaleOptions mo;
                    const auto base = martingale_diagnostic(*ve, coeffs.utility(), mo);
                    const double delta = 0.05;
                    const auto corrupted = martingale_diagnostic(
                        revalue(*ve, shift_field(*vf, delta), coeffs.utility()),
                        coeffs.utility(), mo);
                    const double bound = 3.0;
                    oc.pass = base.within(bound) && corrupted.max_abs_z > bound;
                    json ladder = json::array();
                    for (const auto& p : base.ladder)
                        ladder.push_back(json{{"step", p.step},
                                              {"t", p.t},
                                              {"mean", p.mean},
                                              {"se", p.se},
                                              {"z", p.z}});
                    oc.detail = json{{"max_abs_z", base.max_abs_z},
                                     {"z_bound", bound},
                                     {"recon_max_rel", base.recon_max_rel},
                                     {"recon_mean_rel", base.recon_mean_rel},
                                     {"reference", base.reference},
                                     {"ladder", ladder},
                                     {"corruption_delta", delta},
                                     {"corrupted_max_abs_z", corrupted.max_abs_z},
                                     {"note", base.note}};
                    line << "max|z| " << format_double(base.max_abs_z) << " (bound 3)  corrupted "
                         << format_double(corrupted.max_abs_z) << " (must exceed 3)";
                } else if (name == "gradient_band") {
                    const auto r = gradient_bound_check(*vf, *rc.market);
                    oc.pass = r.upper_ok && r.lower_ok;
                    oc.detail = json{{"max_grad_x", r.max_grad_x},
                                     {"min_grad_x", r.min_grad_x},
                                     {"upper_bound", r.upper_bound},
                                     {"lower_margin", r.lower_margin}};
                    line << "du/dx in [" << format_double(r.min_grad_x) << ", "
                         << format_double(r.max_grad_x) << "]  bound "
                         << format_double(r.upper_bound) << "  lower margin "
                         << format_double(r.lower_margin);
                } else if (name == "epsilon_scaling") {
                    const auto r = epsilon_equivalence_check(model, rc.market, eps, 0.5 * eps,
                                                             rc.grid, rc.quad_nodes, sopt);
                    oc.pass = r.status_a == SolveStatus::Converged &&
                              r.status_b == SolveStatus::Converged &&
                              r.max_abs_diff <= disc_tol;
                    oc.detail = json{{"eps_a", eps},
                                     {"eps_b", 0.5 * eps},
                                     {"max_abs_diff", r.max_abs_diff},
                                     {"tol", disc_tol},
                                     {"nodes", r.nodes_compared}};
                    line << "max diff " << format_double(r.max_abs_diff) << " (tol "
                         << format_double(disc_tol) << ")";
                } else if (name == "form_equivalence") {
                    const auto r =
                        form_equivalence_check(model, rc.market, eps, rc.grid, rc.quad_nodes, sopt);
                    const bool theta_zero = rc.market->sup_theta() == 0.0;
                    const double tol = theta_zero ? 0.0 : disc_tol;
                    oc.pass = r.status_p == SolveStatus::Converged &&
                              r.status_b == SolveStatus::Converged && r.max_abs_diff <= tol;
                    oc.detail = json{{"max_abs_diff", r.max_abs_diff},
                                     {"tol", tol},
                                     {"theta_zero", theta_zero}};
                    line << "max diff " << format_double(r.max_abs_diff) << " (tol "
                         << format_double(tol) << ")";
                }
                oc.line = line.str();
                verify_pass = verify_pass && oc.pass;
                outcomes.push_back(std::move(oc));
            }

            json vj;
            json checks = json::array();
            bool first = true;
            for (const auto& oc : outcomes) {
                json cj = oc.detail;
                cj["name"] = oc.name;
                cj["pass"] = oc.pass;
                checks.push_back(cj);
                sum << (first ? "verify      " : "            ") << oc.name;
                for (size_t pad = oc.name.size(); pad < 17; ++pad) sum << ' ';
                sum << (oc.pass ? "PASS  " : "FAIL  ") << oc.line << "\n";
                first = false;
            }
            vj["checks"] = checks;
            vj["pass"] = verify_pass;
            vj["epsilon"] = eps;
            vj["epsilon_auto"] = rc.epsilon_auto;
            if (rc.corrupt_field_shift != 0.0)
                vj["corrupt_field_shift"] = rc.corrupt_field_shift;
            runner_detail::write_text(out_dir / "verification.json", vj.dump(2) + "\n");
            artifacts.push_back("verification.json");
        }

        flush_meta(artifacts);
        sum << "overall     " << (verify_pass ? "PASS" : "FAIL") << "\n";
        sum << "artifacts   ";
        for (const auto& a : meta["artifacts"])
            sum << (out_dir / a.get<std::string>()).string() << "  ";
        sum << "\n";
        out << sum.str();
        return verify_pass ? kExitOk : kExitVerification;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const InvalidFamilyParams& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DomainTooSmall& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const QuadratureNonConvergence& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const FixedPointFailure& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const NonFiniteState& e) {
        err << "numerical failure: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace fbsde
