#include "ezdual/preferences.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "ezdual/rng.hpp"

namespace ezdual {

namespace {

constexpr double kCrraTol = 1e-12;  // tolerance on gamma*psi - 1

// Power with a strictly positive base; every fractional power in this module
// is guarded so negative bases can never reach std::pow.
inline double pow_pos(double base, double expo) {
    return std::pow(base, expo);
}

}  // namespace

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::GammaLT1: return "gamma<1, gamma*psi>1";
        case Regime::BothGT1: return "gamma>1, psi>1";
        case Regime::Crra: return "CRRA (gamma*psi=1)";
        case Regime::Unsupported: return "unsupported";
    }
    return "?";
}

EpsteinZinPreference::EpsteinZinPreference(double delta, double gamma, double psi)
    : delta_(delta), gamma_(gamma), psi_(psi) {
    if (!(delta > 0.0)) throw DomainError("preference: delta must be > 0");
    if (!(gamma > 0.0) || gamma == 1.0)
        throw DomainError("preference: gamma must be > 0 and != 1");
    if (!(psi > 0.0) || psi == 1.0)
        throw DomainError("preference: psi must be > 0 and != 1");

    theta_ = (1.0 - gamma) / (1.0 - 1.0 / psi);

    if (std::fabs(gamma * psi - 1.0) <= kCrraTol) {
        regime_ = Regime::Crra;
    } else if (gamma < 1.0 && gamma * psi > 1.0) {
        regime_ = Regime::GammaLT1;
        if (!(theta_ > 0.0 && theta_ < 1.0))
            throw DomainError("preference: expected 0 < theta < 1 in regime gamma<1");
    } else if (gamma > 1.0 && psi > 1.0) {
        regime_ = Regime::BothGT1;
        if (!(theta_ < 0.0))
            throw DomainError("preference: expected theta < 0 in regime gamma,psi>1");
    } else {
        regime_ = Regime::Unsupported;
    }
}

double aggregator_f(const EpsteinZinPreference& p, double c, double u) {
    if (!(c > 0.0)) throw DomainError("aggregator_f: consumption must be > 0");
    const double su = (1.0 - p.gamma()) * u;
    if (!(su > 0.0)) throw DomainError("aggregator_f: (1-gamma)u must be > 0");
    const double th = p.theta();
    const double cpow = pow_pos(c, 1.0 - 1.0 / p.psi()) / (1.0 - 1.0 / p.psi());
    if (p.regime() == Regime::Crra)
        return p.delta() * cpow - p.delta() * u;  // theta = 1, value power drops out
    return p.delta() * cpow * pow_pos(su, 1.0 - 1.0 / th) - p.delta() * th * u;
}

double aggregator_fu(const EpsteinZinPreference& p, double c, double u) {
    if (!(c > 0.0)) throw DomainError("aggregator_fu: consumption must be > 0");
    const double su = (1.0 - p.gamma()) * u;
    if (!(su > 0.0)) throw DomainError("aggregator_fu: (1-gamma)u must be > 0");
    if (p.regime() == Regime::Crra) return p.delta();
    const double th = p.theta();
    return p.delta() * (1.0 - th) * pow_pos(c, 1.0 - 1.0 / p.psi()) *
               pow_pos(su, -1.0 / th) +
           p.delta() * th;
}

double aggregator_fc(const EpsteinZinPreference& p, double c, double u) {
    if (!(c > 0.0)) throw DomainError("aggregator_fc: consumption must be > 0");
    const double su = (1.0 - p.gamma()) * u;
    if (!(su > 0.0)) throw DomainError("aggregator_fc: (1-gamma)u must be > 0");
    const double expo = p.regime() == Regime::Crra ? 0.0 : 1.0 - 1.0 / p.theta();
    return p.delta() * pow_pos(c, -1.0 / p.psi()) * pow_pos(su, expo);
}

double felicity_F(const EpsteinZinPreference& p, double c, double nu) {
    if (!(c > 0.0)) throw DomainError("felicity_F: consumption must be > 0");
    if (p.regime() == Regime::Crra)
        throw DomainError("felicity_F: undefined at theta = 1 (CRRA)");
    const double th = p.theta();
    const double base = (p.delta() * th - nu) / (th - 1.0);
    if (!(base > 0.0))
        throw DomainError("felicity_F: requires (delta*theta - nu)/(theta-1) > 0");
    return pow_pos(p.delta(), th) * pow_pos(c, 1.0 - p.gamma()) / (1.0 - p.gamma()) *
           pow_pos(base, 1.0 - th);
}

double bequest_U(const EpsteinZinPreference& p, double c) {
    if (!(c > 0.0)) throw DomainError("bequest_U: consumption must be > 0");
    return pow_pos(c, 1.0 - p.gamma()) / (1.0 - p.gamma());
}

double conjugate_V(const EpsteinZinPreference& p, double d) {
    if (!(d > 0.0)) throw DomainError("conjugate_V: density must be > 0");
    const double g = p.gamma();
    return g / (1.0 - g) * pow_pos(d, (g - 1.0) / g);
}

double dual_G(const EpsteinZinPreference& p, double d, double nu) {
    if (!(d > 0.0)) throw DomainError("dual_G: density must be > 0");
    if (p.regime() == Regime::Crra)
        throw DomainError("dual_G: undefined at theta = 1 (CRRA)");
    const double th = p.theta();
    const double g = p.gamma();
    const double base = (p.delta() * th - nu) / (th - 1.0);
    if (!(base > 0.0))
        throw DomainError("dual_G: requires (delta*theta - nu)/(theta-1) > 0");
    return pow_pos(p.delta(), th / g) * g / (1.0 - g) * pow_pos(d, (g - 1.0) / g) *
           pow_pos(base, (1.0 - th) / g);
}

double dual_g(const EpsteinZinPreference& p, double d, double v) {
    if (!(d > 0.0)) throw DomainError("dual_g: density must be > 0");
    const double sv = (1.0 - p.gamma()) * v;
    if (!(sv > 0.0)) throw DomainError("dual_g: (1-gamma)v must be > 0");
    const double ps = p.psi();
    const double dpow = pow_pos(p.delta(), ps) * pow_pos(d, 1.0 - ps) / (ps - 1.0);
    if (p.regime() == Regime::Crra) return dpow - p.delta() * v;  // exponent is 0
    const double expo = 1.0 - p.gamma() * ps / p.theta();
    return dpow * pow_pos(sv, expo) - p.delta() * p.theta() * v;
}

double dual_gv(const EpsteinZinPreference& p, double d, double v) {
    if (!(d > 0.0)) throw DomainError("dual_gv: density must be > 0");
    const double sv = (1.0 - p.gamma()) * v;
    if (!(sv > 0.0)) throw DomainError("dual_gv: (1-gamma)v must be > 0");
    if (p.regime() == Regime::Crra) return p.delta();
    const double th = p.theta();
    const double ps = p.psi();
    return pow_pos(p.delta(), ps) * (1.0 - th) * pow_pos(d, 1.0 - ps) *
               pow_pos(sv, -p.gamma() * ps / th) +
           p.delta() * th;
}

// ---------------------------------------------------------------------------
// Conjugacy scan
// ---------------------------------------------------------------------------

namespace {

// Maximize a smooth unimodal-enough function over a log-spaced grid in the
// scan coordinate, then refine the bracketing interval by golden section.
double grid_golden_max(const std::function<double(double)>& value,
                       const std::function<double(double)>& coord, double s_lo,
                       double s_hi, int grid_points) {
    double best = -std::numeric_limits<double>::infinity();
    int best_i = 0;
    const double ds = (s_hi - s_lo) / (grid_points - 1);
    for (int i = 0; i < grid_points; ++i) {
        const double f = value(coord(s_lo + i * ds));
        if (f > best) {
            best = f;
            best_i = i;
        }
    }
    double a = s_lo + std::max(0, best_i - 1) * ds;
    double b = s_lo + std::min(grid_points - 1, best_i + 1) * ds;
    const double invphi = 0.6180339887498948482;
    double c1 = b - invphi * (b - a);
    double c2 = a + invphi * (b - a);
    double f1 = value(coord(c1));
    double f2 = value(coord(c2));
    for (int it = 0; it < 90; ++it) {
        if (f1 < f2) {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + invphi * (b - a);
            f2 = value(coord(c2));
        } else {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - invphi * (b - a);
            f1 = value(coord(c1));
        }
    }
    return std::max({best, f1, f2});
}

double rel_err(double got, double want) {
    return std::fabs(got - want) / (1.0 + std::fabs(want));
}

}  // namespace

double TransformResiduals::max() const {
    return std::max({f_from_F, V_from_U, G_from_F, g_from_G});
}

TransformResiduals conjugacy_residuals(const EpsteinZinPreference& p, int samples,
                                       std::uint64_t seed) {
    if (p.regime() != Regime::GammaLT1 && p.regime() != Regime::BothGT1)
        throw DomainError("conjugacy_residuals: regime must be gamma<1,gamma*psi>1 "
                          "or gamma,psi>1 (conjugate chain needs gamma*psi > 1)");

    RngStream rng(seed, 0x7472616E73ULL);
    const double sgn = p.utility_sign();
    const double floor = p.nu_floor();
    const double lg_lo = std::log(0.1), lg_hi = std::log(10.0);
    auto draw_log = [&](double lo, double hi) {
        return std::exp(lo + (hi - lo) * rng.next_uniform());
    };

    // scan coordinates: nu = floor + e^s, scalars = e^s
    auto nu_of = [&](double s) { return floor + std::exp(s); };
    auto exp_of = [](double s) { return std::exp(s); };
    const double s_nu_lo = std::log(1e-8), s_nu_hi = std::log(1e3);
    const double s_x_lo = std::log(1e-7), s_x_hi = std::log(1e7);

    TransformResiduals r{0.0, 0.0, 0.0, 0.0, samples};
    for (int k = 0; k < samples; ++k) {
        const double c = draw_log(lg_lo, lg_hi);
        const double d = draw_log(lg_lo, lg_hi);
        const double u = sgn * draw_log(lg_lo, lg_hi);
        const double v = sgn * draw_log(lg_lo, lg_hi);
        const double nu = floor + p.delta() * draw_log(std::log(0.2), std::log(20.0));

        // f(c,u) = sup_nu (F(c,nu) - nu u)
        const double f_rec = grid_golden_max(
            [&](double n) { return felicity_F(p, c, n) - n * u; }, nu_of, s_nu_lo,
            s_nu_hi, 200);
        r.f_from_F = std::max(r.f_from_F, rel_err(f_rec, aggregator_f(p, c, u)));

        // V_T(d) = sup_c (U_T(c) - d c)
        const double V_rec = grid_golden_max(
            [&](double cc) { return bequest_U(p, cc) - d * cc; }, exp_of, s_x_lo,
            s_x_hi, 240);
        r.V_from_U = std::max(r.V_from_U, rel_err(V_rec, conjugate_V(p, d)));

        // G(d,nu) = sup_c (F(c,nu) - d c)
        const double G_rec = grid_golden_max(
            [&](double cc) { return felicity_F(p, cc, nu) - d * cc; }, exp_of, s_x_lo,
            s_x_hi, 240);
        r.G_from_F = std::max(r.G_from_F, rel_err(G_rec, dual_G(p, d, nu)));

        // g(d,v) = sup_nu (G(d,nu) - nu v)
        const double g_rec = grid_golden_max(
            [&](double n) { return dual_G(p, d, n) - n * v; }, nu_of, s_nu_lo,
            s_nu_hi, 200);
        r.g_from_G = std::max(r.g_from_G, rel_err(g_rec, dual_g(p, d, v)));
    }
    return r;
}

}  // namespace ezdual
