#include "ezdual/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ezdual/rng.hpp"
#include "ezdual/simd/kernels.hpp"
#include "pde_stepper.hpp"

namespace ezdual {

namespace {

int locate(const std::vector<double>& g, double v, double& frac) {
    const int m = static_cast<int>(g.size());
    if (m == 1 || v <= g.front()) {
        frac = 0.0;
        return 0;
    }
    if (v >= g.back()) {
        frac = 1.0;
        return m - 2;
    }
    int lo = 0, hi = m - 1;
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        (g[mid] <= v ? lo : hi) = mid;
    }
    frac = (v - g[lo]) / (g[lo + 1] - g[lo]);
    return lo;
}

double bilinear(const std::vector<double>& tg, const std::vector<double>& xg,
                const std::vector<double>& tab, double t, double x) {
    const int m = static_cast<int>(xg.size());
    double ft, fx;
    const int i = locate(tg, t, ft);
    const int j = locate(xg, x, fx);
    auto val = [&](int ii, int jj) { return tab[static_cast<std::size_t>(ii) * m + jj]; };
    if (m == 1) return (1.0 - ft) * val(i, 0) + ft * val(std::min(i + 1, static_cast<int>(tg.size()) - 1), 0);
    const int i1 = std::min(i + 1, static_cast<int>(tg.size()) - 1);
    const double v0 = (1.0 - fx) * val(i, j) + fx * val(i, j + 1);
    const double v1 = (1.0 - fx) * val(i1, j) + fx * val(i1, j + 1);
    return (1.0 - ft) * v0 + ft * v1;
}

// regime bound on Y used for the exponential truncation cap
double clamp_level(const EpsteinZinPreference& p, double h_max, double h_min, double T) {
    if (p.theta() < 0.0) return std::max(h_max - p.delta() * p.theta(), 0.0) * T;
    return -std::max(-(h_min - p.delta() * p.theta()), 0.0) * T;
}

}  // namespace

double ValueSurface::value(double ti, double xi) const { return bilinear(t, x, Y, ti, xi); }

double ValueSurface::gradient(double ti, double xi) const {
    return bilinear(t, x, Yx, ti, xi);
}

double hamiltonian(const EpsteinZinPreference& p, const NodeCoefficients& nc, double y,
                   double z, const ExpClamp* clamp) {
    const double th = p.theta();
    const double d = p.delta();
    double e = std::exp(-p.psi() / th * y);
    if (clamp && e > clamp->cap) {
        e = clamp->cap;
        clamp->activated = true;
    }
    return 0.5 * z * nc.M * z + nc.zlin * z + th * std::pow(d, p.psi()) / p.psi() * e +
           nc.h - d * th;
}

ValueSurface solve_constant(const EpsteinZinPreference& p, const ConstantMarket& m,
                            double T, const SolverScheme& scheme) {
    if (p.regime() != Regime::GammaLT1 && p.regime() != Regime::BothGT1)
        throw DomainError("solve_constant: regime must be (i) gamma<1,gamma*psi>1 or "
                          "(ii) gamma,psi>1, got " + regime_name(p.regime()));
    const NodeCoefficients nc = eval_node(m, p, m.x0());

    const double th = p.theta();
    const double alpha = std::pow(p.delta(), p.psi());
    const double beta = (p.psi() / th) * (nc.h - p.delta() * th);

    const int K = std::max(scheme.time_steps, 1);
    ValueSurface vs;
    vs.x = {m.x0()};
    vs.t.resize(K + 1);
    vs.Y.resize(K + 1);
    vs.Yx.assign(K + 1, 0.0);
    for (int i = 0; i <= K; ++i) {
        const double tau = T - T * i / K;  // time to horizon
        vs.t[i] = T * i / K;
        // v(tau) = e^{beta tau} + alpha tau expm1(beta tau)/(beta tau)
        const double bt = beta * tau;
        const double em1_over = std::fabs(bt) < 1e-12 ? 1.0 : std::expm1(bt) / bt;
        const double v = std::exp(bt) + alpha * tau * em1_over;
        vs.Y[i] = th / p.psi() * std::log(v);
    }
    vs.Y[K] = 0.0;
    vs.meta.scheme = "constant-closed-form";
    vs.meta.dt = T / K;
    vs.meta.h_max = nc.h;
    vs.meta.h_min = nc.h;
    return vs;
}

ValueSurface solve_pde(const EpsteinZinPreference& p, const MarketModel& m, double T,
                       const SolverScheme& scheme) {
    if (p.regime() != Regime::GammaLT1 && p.regime() != Regime::BothGT1)
        throw DomainError("solve_pde: regime must be (i) or (ii), got " +
                          regime_name(p.regime()));
    if (!scheme.override_model_checks) {
        CheckReport chk;
        bool has_check = false;
        if (const auto* hm = dynamic_cast<const HestonMarket*>(&m)) {
            chk = check_heston(hm->params(), p);
            has_check = true;
        } else if (const auto* km = dynamic_cast<const KimOmbergMarket*>(&m)) {
            chk = check_kim_omberg(km->params(), p);
            has_check = true;
        }
        if (has_check && !(chk.applicable && chk.accepted)) {
            std::string why;
            for (const auto& it : chk.items)
                if (!it.pass) why += (why.empty() ? "" : "; ") + it.name;
            throw DomainError("solve_pde: model parameter checks failed (" + why +
                              "); set override_model_checks to proceed anyway");
        }
    }

    const auto grid = m.default_grid(scheme.space_nodes);
    const DerivedCoefficients dc = derive_coefficients(m, p, grid);
    const int nodes = static_cast<int>(grid.size());

    const double th = p.theta();
    const double d = p.delta();
    const double exp_coef = th * std::pow(d, p.psi()) / p.psi();
    const double dth = d * th;
    ExpClamp clamp{std::exp(-p.psi() / th * clamp_level(p, dc.h_max, dc.h_min, T))};

    detail::StepperProblem prob;
    prob.x = grid;
    prob.T = T;
    prob.a.resize(nodes);
    prob.b.resize(nodes);
    detail::GeneratorSlice slice;
    slice.zlin.resize(nodes);
    slice.zquad.resize(nodes);
    for (int j = 0; j < nodes; ++j) {
        prob.a[j] = dc.node[j].a;
        prob.b[j] = dc.node[j].b;
        slice.zlin[j] = dc.node[j].zlin;
        slice.zquad[j] = dc.node[j].M;
    }
    slice.rest = [&, exp_coef, dth](int j, double u) {
        double e = std::exp(-p.psi() / th * u);
        if (e > clamp.cap) {
            e = clamp.cap;
            clamp.activated = true;
        }
        return exp_coef * e + dc.node[j].h - dth;
    };
    prob.generator = [&slice](double) { return slice; };

    const bool upper_regime = th < 0.0;
    prob.bound_check = [&, upper_regime](double t, const std::vector<double>& u) {
        const double tau = T - t;
        std::ostringstream os;
        if (upper_regime) {
            const double bound = (dc.h_max - dth) * tau;
            for (std::size_t j = 0; j < u.size(); ++j)
                if (u[j] > bound + 1e-3) {
                    os << "value " << u[j] << " exceeded its regime upper bound "
                       << bound << " at t=" << t << ", x=" << grid[j];
                    return os.str();
                }
        } else {
            const double bound = (dc.h_min - dth) * tau;
            for (std::size_t j = 0; j < u.size(); ++j)
                if (u[j] < bound - 1e-3) {
                    os << "value " << u[j] << " fell below its regime lower bound "
                       << bound << " at t=" << t << ", x=" << grid[j];
                    return os.str();
                }
        }
        return std::string();
    };

    ValueSurface vs = detail::run_backward(prob, scheme, "solve_pde");
    vs.meta.h_max = dc.h_max;
    vs.meta.h_min = dc.h_min;
    vs.meta.clamp_activated = clamp.activated;
    return vs;
}

BoundReport verify_y_bounds(const ValueSurface& vs, const MarketModel& m,
                            const EpsteinZinPreference& p, int mc_paths,
                            std::uint64_t seed) {
    if (p.regime() != Regime::BothGT1)
        throw DomainError("verify_y_bounds: bound check is stated for gamma, psi > 1");

    const double T = vs.t.back();
    const int K = vs.time_steps();
    const double dt = T / K;
    const double dth = p.delta() * p.theta();
    const double h_max = vs.meta.h_max;

    // Tabulate h, a, and the measure-changed drift b + a*zlin on the solver
    // grid; path stepping interpolates instead of re-deriving coefficients.
    const int nodes = vs.nodes();
    std::vector<double> hx(nodes), ax(nodes), bbar(nodes);
    for (int j = 0; j < nodes; ++j) {
        const auto nc = eval_node(m, p, vs.x[j]);
        hx[j] = nc.h;
        ax[j] = nc.a;
        bbar[j] = nc.b + nc.a * nc.zlin;
    }
    auto lerp = [&](const std::vector<double>& tab, double xv) {
        double f;
        const int j = locate(vs.x, xv, f);
        return nodes == 1 ? tab[0] : (1.0 - f) * tab[j] + f * tab[j + 1];
    };

    const double sdt = std::sqrt(dt);
    std::vector<double> integrals(mc_paths);
    for (int pth = 0; pth < mc_paths; ++pth) {
        RngStream rng(seed, static_cast<std::uint64_t>(pth));
        double x = m.x0();
        double acc = 0.0;
        double h_prev = lerp(hx, m.clamp_state(x));
        for (int i = 0; i < K; ++i) {
            const double xc = m.clamp_state(x);
            x += lerp(bbar, xc) * dt + lerp(ax, xc) * sdt * rng.next_normal();
            const double h_next = lerp(hx, m.clamp_state(x));
            acc += 0.5 * (h_prev + h_next) * dt;
            h_prev = h_next;
        }
        integrals[pth] = acc;
    }
    const double mean_I = simd::mean(integrals.data(), integrals.size());
    const double se_I =
        std::sqrt(simd::variance(integrals.data(), integrals.size()) / mc_paths);

    BoundReport rep;
    rep.paths = mc_paths;
    rep.y0 = vs.value(0.0, m.x0());
    rep.upper = (h_max - dth) * T;
    const double expo = (p.delta() * p.psi() - p.psi() / p.theta() * h_max) * T;
    rep.lower = mean_I - dth * T +
                p.theta() * std::pow(p.delta(), p.psi()) / p.psi() * std::exp(expo) * T;
    rep.lower_se = se_I;
    rep.within = (rep.lower - 3.0 * rep.lower_se <= rep.y0) &&
                 (rep.y0 <= rep.upper + 1e-8);
    return rep;
}

}  // namespace ezdual
