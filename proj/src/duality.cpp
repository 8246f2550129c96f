#include "ezdual/duality.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ezdual/simd/kernels.hpp"
#include "parallel.hpp"
#include "pde_stepper.hpp"

namespace ezdual {

namespace {

double safe_exp(double x) { return std::exp(std::min(x, 700.0)); }

}  // namespace

// --- OptimalPolicy -----------------------------------------------------------

OptimalPolicy::OptimalPolicy(const ValueSurface& vs, const MarketModel& m,
                             const EpsteinZinPreference& p, double w0)
    : vs_(&vs), m_(&m), p_(&p), w0_(w0) {
    if (!(w0 > 0.0)) throw DomainError("extract_policy: w0 must be > 0");
    y_star_ = std::pow(w0, -p.gamma()) * std::exp(vs.value(0.0, m.x0()));
}

const NodeCoefficients& OptimalPolicy::node(double x) const {
    // exact coefficient evaluation with a per-thread one-slot memo; constant
    // models hit it every step
    thread_local const OptimalPolicy* owner = nullptr;
    thread_local double key = std::numeric_limits<double>::quiet_NaN();
    thread_local NodeCoefficients nc;
    if (owner != this || !(key == x)) {
        nc = eval_node(*m_, *p_, x);
        owner = this;
        key = x;
    }
    return nc;
}

double OptimalPolicy::loading_z(double t, double x) const {
    return vs_->gradient(t, x) * m_->state_diffusion(x);
}

double OptimalPolicy::consumption_proportion(double t, double x) const {
    const double y = vs_->value(t, x);
    return std::pow(p_->delta(), p_->psi()) * safe_exp(-p_->psi() / p_->theta() * y);
}

void OptimalPolicy::eval(double t, double x, Eigen::Ref<Eigen::VectorXd> pi,
                         double& cbar) const {
    const NodeCoefficients& nc = node(x);
    const double z = vs_->gradient(t, x) * nc.a;
    pi = nc.SigmaInv * (nc.mu + nc.sigma * nc.rho * z) / p_->gamma();
    cbar = consumption_proportion(t, x);
}

void OptimalPolicy::eval(double t, double x, double& xi,
                         Eigen::Ref<Eigen::VectorXd> eta) const {
    const NodeCoefficients& nc = node(x);
    const double z = vs_->gradient(t, x) * nc.a;
    const Eigen::VectorXd lever = nc.SigmaInv * (nc.mu + nc.sigma * nc.rho * z);
    xi = z - lever.dot(nc.sigma * nc.rho);
    eta = -(nc.sigma * nc.rho_perp).transpose() * lever;
}

void OptimalPolicy::q_loadings(double t, double x, double& L,
                               Eigen::Ref<Eigen::VectorXd> Lperp) const {
    const NodeCoefficients& nc = node(x);
    const double z = vs_->gradient(t, x) * nc.a;
    const double one_minus_gamma = 1.0 - p_->gamma();
    const Eigen::VectorXd pi =
        nc.SigmaInv * (nc.mu + nc.sigma * nc.rho * z) / p_->gamma();
    L = one_minus_gamma * pi.dot(nc.sigma * nc.rho) + z;
    Lperp = one_minus_gamma * nc.rho_perp.transpose() * (nc.sigma.transpose() * pi);
}

OptimalPolicy extract_policy(const ValueSurface& vs, const MarketModel& m,
                             const EpsteinZinPreference& p, double w0) {
    OptimalPolicy pol(vs, m, p, w0);

    // deflator drift constraint at every surface node
    const int n = m.num_assets();
    Eigen::VectorXd eta(n);
    for (int j = 0; j < vs.nodes(); ++j) {
        const double x = vs.x[j];
        const NodeCoefficients nc = eval_node(m, p, x);
        for (int i = 0; i <= vs.time_steps(); ++i) {
            double xi = 0.0;
            pol.eval(vs.t[i], x, xi, eta);
            const Eigen::VectorXd resid =
                nc.mu + nc.sigma * nc.rho * xi + nc.sigma * nc.rho_perp * eta;
            if (resid.cwiseAbs().maxCoeff() > 1e-10 * (1.0 + nc.mu.cwiseAbs().maxCoeff())) {
                std::ostringstream os;
                os << "extract_policy: deflator drift constraint violated at t="
                   << vs.t[i] << ", x=" << x << " (residual "
                   << resid.cwiseAbs().maxCoeff() << ")";
                throw SolverError(os.str());
            }
        }
    }
    return pol;
}

// --- evaluate_feedback --------------------------------------------------------

ValueSurface evaluate_feedback(const MarketModel& m, const EpsteinZinPreference& p,
                               const PolicyEval& policy, double T,
                               const SolverScheme& scheme) {
    if (p.regime() != Regime::GammaLT1 && p.regime() != Regime::BothGT1)
        throw DomainError("evaluate_feedback: regime must be (i) or (ii), got " +
                          regime_name(p.regime()));

    const auto grid = m.default_grid(scheme.space_nodes);
    const DerivedCoefficients dc = derive_coefficients(m, p, grid);
    const int nodes = static_cast<int>(grid.size());
    const int n = m.num_assets();

    const double g = p.gamma();
    const double th = p.theta();
    const double one_minus_gamma = 1.0 - g;
    const double dth = p.delta() * th;
    const double cpow = 1.0 - 1.0 / p.psi();

    detail::StepperProblem prob;
    prob.x = grid;
    prob.T = T;
    prob.a.resize(nodes);
    prob.b.resize(nodes);
    for (int j = 0; j < nodes; ++j) {
        prob.a[j] = dc.node[j].a;
        prob.b[j] = dc.node[j].b;
    }

    prob.generator = [&, T](double t) {
        detail::GeneratorSlice slice;
        slice.zlin.resize(nodes);
        slice.zquad.assign(nodes, 1.0);
        auto consump_coef = std::make_shared<std::vector<double>>(nodes);
        auto constant_part = std::make_shared<std::vector<double>>(nodes);
        Eigen::VectorXd pi(n);
        for (int j = 0; j < nodes; ++j) {
            const NodeCoefficients& nc = dc.node[j];
            double cbar = 0.0;
            policy.eval(t, grid[j], pi, cbar);
            if (!pi.allFinite() || !std::isfinite(cbar) || cbar < 0.0) {
                std::ostringstream os;
                os << "evaluate_feedback: bad control at t=" << t << ", x=" << grid[j];
                throw SolverError(os.str());
            }
            slice.zlin[j] = one_minus_gamma * pi.dot(nc.sigma * nc.rho);
            const double quad_pi = (nc.sigma.transpose() * pi).squaredNorm();
            (*constant_part)[j] = one_minus_gamma * nc.r - dth +
                                  one_minus_gamma * (pi.dot(nc.mu) - 0.5 * g * quad_pi) -
                                  one_minus_gamma * cbar;
            (*consump_coef)[j] =
                cbar > 0.0
                    ? one_minus_gamma * p.delta() * std::pow(cbar, cpow) / cpow
                    : 0.0;
        }
        slice.rest = [consump_coef, constant_part, th](int j, double u) {
            return (*constant_part)[j] + (*consump_coef)[j] * safe_exp(-u / th);
        };
        return slice;
    };

    ValueSurface vs = detail::run_backward(prob, scheme, "evaluate_feedback");
    vs.meta.h_max = dc.h_max;
    vs.meta.h_min = dc.h_min;
    return vs;
}

// --- verify_duality -----------------------------------------------------------

namespace {

ValueSurface solve_for(const MarketModel& m, const EpsteinZinPreference& p, double T,
                       const SolverScheme& scheme) {
    if (m.kind() == MarketKind::Constant)
        return solve_constant(p, dynamic_cast<const ConstantMarket&>(m), T, scheme);
    return solve_pde(p, m, T, scheme);
}

struct PathDiagnostics {
    std::vector<double> q_T;         // martingale factor at T per path
    std::vector<double> mart;        // D W + sum D c dt per path
    double gradient_residual = 0.0;  // sup rel error of the deflator identity
};

PathDiagnostics run_path_diagnostics(const MarketModel& m,
                                     const EpsteinZinPreference& p,
                                     const OptimalPolicy& pol, const ValueSurface& vs,
                                     const PathBundle& b, const WealthPath& wp,
                                     const DeflatorPath& dp, int threads) {
    const int N = b.num_paths;
    const int K = b.grid.steps;
    const int n = b.num_assets;
    const double dt = b.grid.dt();
    const double w0 = wp.w0;
    const double g = p.gamma();

    PathDiagnostics diag;
    diag.q_T.resize(N);
    diag.mart.resize(N);
    std::vector<double> grad_sup(N, 0.0);

    detail::parallel_for(N, threads, [&](int lo, int hi) {
        Eigen::VectorXd Lperp(n);
        for (int pth = lo; pth < hi; ++pth) {
            double logq = 0.0;
            double mart = 0.0;
            double grad_int = 0.0;  // integral of f_u along the path
            double sup = 0.0;
            for (int i = 0; i < K; ++i) {
                const double t = b.grid.t[i];
                const double x = m.clamp_state(b.x(i, pth));
                const double w = wp.wv(i, pth);
                const double c = wp.cv(i, pth);
                const double d = dp.dv(i, pth);
                const double y = vs.value(t, x);

                // utility-gradient identity at the node
                const double ustar = bequest_U(p, w) * std::exp(y);
                const double d_hat = std::pow(w0, g) * std::exp(-vs.value(0.0, m.x0())) *
                                     std::exp(grad_int) * aggregator_fc(p, c, ustar);
                sup = std::max(sup, std::fabs(d_hat - d) / d);

                mart += d * c * dt;
                grad_int += -aggregator_fu(p, c, ustar) * dt;

                double L = 0.0;
                pol.q_loadings(t, x, L, Lperp);
                double dlogq = (-0.5 * (L * L + Lperp.squaredNorm())) * dt +
                               L * b.dw(i, pth);
                for (int j = 0; j < n; ++j) dlogq += Lperp[j] * b.dwp(i, j, pth);
                logq += dlogq;
            }
            mart += dp.dv(K, pth) * wp.wv(K, pth);
            diag.q_T[pth] = std::exp(logq);
            diag.mart[pth] = mart;
            grad_sup[pth] = sup;
        }
    });
    diag.gradient_residual = simd::active().max_abs(grad_sup.data(), N);
    return diag;
}

}  // namespace

DualityReport verify_duality(const MarketModel& m, const EpsteinZinPreference& p,
                             double w0, int num_paths, int steps, double T,
                             std::uint64_t seed, const SolverScheme& scheme_in,
                             const LsmcOptions& lsmc, VerifyArtifacts* keep) {
    SolverScheme scheme = scheme_in;
    scheme.time_steps = steps;  // valuation shares the simulation grid

    ValueSurface vs = solve_for(m, p, T, scheme);
    const OptimalPolicy pol = extract_policy(vs, m, p, w0);

    PathBundle bundle = simulate_state(m, num_paths, steps, T, seed, lsmc.threads);
    WealthPath wealth = simulate_wealth(bundle, m, pol, w0, lsmc.threads);
    DeflatorPath deflator = simulate_deflator(bundle, m, pol, lsmc.threads);

    RecursiveValue primal = evaluate_sdu(bundle, wealth, p, lsmc);
    RecursiveValue dual = evaluate_sdd(bundle, deflator, pol.y_star(), p, lsmc);

    DualityReport rep;
    rep.num_paths = num_paths;
    rep.dt = bundle.grid.dt();
    rep.w0 = w0;
    rep.y0 = vs.value(0.0, m.x0());
    rep.y_star = pol.y_star();
    rep.primal = primal.estimate;
    rep.primal_se = primal.standard_error;
    rep.dual_v0 = dual.estimate;
    rep.dual_se = dual.standard_error;
    rep.dual_total = dual.estimate + w0 * pol.y_star();
    rep.analytic = std::pow(w0, 1.0 - p.gamma()) * std::exp(rep.y0) / (1.0 - p.gamma());
    rep.gap = rep.primal - rep.dual_total;
    rep.gap_se = std::sqrt(rep.primal_se * rep.primal_se + rep.dual_se * rep.dual_se);

    const PathDiagnostics diag =
        run_path_diagnostics(m, p, pol, vs, bundle, wealth, deflator, lsmc.threads);
    rep.q_mean = simd::mean(diag.q_T.data(), diag.q_T.size());
    rep.q_se = std::sqrt(simd::variance(diag.q_T.data(), diag.q_T.size()) / num_paths);
    rep.mart_mean = simd::mean(diag.mart.data(), diag.mart.size());
    rep.mart_se = std::sqrt(simd::variance(diag.mart.data(), diag.mart.size()) / num_paths);
    rep.martingale_residual = std::fabs(rep.mart_mean - w0) / w0;
    rep.gradient_residual = diag.gradient_residual;

    // Lagrange scan: the dual estimator is exactly homogeneous of degree
    // (gamma-1)/gamma in y, so the 21-point scan uses the scaling law.
    {
        const int points = 21;
        const double expo = (p.gamma() - 1.0) / p.gamma();
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < points; ++i) {
            const double y = pol.y_star() * std::exp(std::log(0.5) +
                                                     std::log(4.0) * i / (points - 1));
            const double val = std::pow(y / pol.y_star(), expo) * dual.estimate + w0 * y;
            if (val < best) {
                best = val;
                rep.lagrange_argmin = i;
            }
        }
        rep.flag_lagrange = std::abs(rep.lagrange_argmin - (points - 1) / 2) <= 1;
    }

    rep.flag_gap = std::fabs(rep.gap) <= 3.0 * rep.gap_se;
    rep.flag_primal = std::fabs(rep.primal - rep.analytic) <= 3.0 * rep.primal_se;
    rep.flag_dual = std::fabs(rep.dual_total - rep.analytic) <= 3.0 * rep.dual_se;
    rep.flag_martingale = std::fabs(rep.mart_mean - w0) <= 3.0 * rep.mart_se;
    rep.flag_q = std::fabs(rep.q_mean - 1.0) <= 3.0 * rep.q_se;
    rep.flag_gradient = rep.gradient_residual <= 5.0 * rep.dt;

    if (keep) {
        keep->vs = std::move(vs);
        keep->bundle = std::move(bundle);
        keep->wealth = std::move(wealth);
        keep->deflator = std::move(deflator);
        keep->primal = std::move(primal);
        keep->dual = std::move(dual);
    }
    return rep;
}

// --- pathwise identities --------------------------------------------------------

IdentityReport pathwise_identities(const MarketModel& m, const EpsteinZinPreference& p,
                                   const OptimalPolicy& policy, const ValueSurface& vs,
                                   const PathBundle& b, int threads) {
    const int N = b.num_paths;
    const int K = b.grid.steps;
    const int n = b.num_assets;
    const double dt = b.grid.dt();
    const double w0 = policy.w0();
    const double g = p.gamma();
    const double th = p.theta();
    const double ps = p.psi();
    const double dpsi = std::pow(p.delta(), ps);

    const WealthPath wp = simulate_wealth(b, m, policy, w0, threads);
    const DeflatorPath dp = simulate_deflator(b, m, policy, threads);

    std::vector<double> sup_w(N, 0.0), sup_d(N, 0.0), sup_r(N, 0.0);
    const double y0 = vs.value(0.0, m.x0());

    detail::parallel_for(N, threads, [&](int lo, int hi) {
        Eigen::VectorXd Lperp(n);
        for (int pth = lo; pth < hi; ++pth) {
            double logq = 0.0;
            double int_full = 0.0;  // integral of delta^psi theta e^{-psi Y/theta} - delta theta
            double int_exp = 0.0;   // integral of e^{-psi Y/theta}
            double sw = 0.0, sd = 0.0, sr = 0.0;
            for (int i = 0; i <= K; ++i) {
                const double t = b.grid.t[i];
                const double x = m.clamp_state(b.x(i, pth));
                const double y = vs.value(t, x);
                const double w = wp.wv(i, pth);
                const double d = dp.dv(i, pth);

                const double lhs_w = (1.0 - g) * std::log(w) + y;
                const double rhs_w_noq = (1.0 - g) * std::log(w0) + y0 - int_full;
                const double lhs_d = (g - 1.0) / g * std::log(d) + y / g;
                const double rhs_d_noq =
                    y0 / g - th / (g * ps) * dpsi * int_exp + p.delta() * th / g * t;

                sw = std::max(sw, std::fabs(std::expm1(lhs_w - rhs_w_noq - logq)));
                sd = std::max(sd, std::fabs(std::expm1(lhs_d - rhs_d_noq - logq)));
                sr = std::max(sr, std::fabs(std::expm1(lhs_w - rhs_w_noq -
                                                       (lhs_d - rhs_d_noq))));
                if (i == K) break;

                const double e = safe_exp(-ps / th * y);
                int_full += (dpsi * th * e - p.delta() * th) * dt;
                int_exp += e * dt;

                double L = 0.0;
                policy.q_loadings(t, x, L, Lperp);
                double dlogq = -0.5 * (L * L + Lperp.squaredNorm()) * dt +
                               L * b.dw(i, pth);
                for (int j = 0; j < n; ++j) dlogq += Lperp[j] * b.dwp(i, j, pth);
                logq += dlogq;
            }
            sup_w[pth] = sw;
            sup_d[pth] = sd;
            sup_r[pth] = sr;
        }
    });

    IdentityReport rep;
    rep.sup_rel_wealth = simd::active().max_abs(sup_w.data(), N);
    rep.sup_rel_deflator = simd::active().max_abs(sup_d.data(), N);
    rep.sup_rel_ratio = simd::active().max_abs(sup_r.data(), N);
    return rep;
}

}  // namespace ezdual
