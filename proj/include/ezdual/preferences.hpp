#pragma once

#include <cstdint>
#include <string>

#include "ezdual/errors.hpp"

namespace ezdual {

// Parameter regimes for the recursive-utility duality machinery. The regime
// drives every formula branch downstream:
//   GammaLT1 : 0 < gamma < 1 and gamma*psi > 1   (then 0 < theta < 1)
//   BothGT1  : gamma > 1 and psi > 1             (then theta < 0)
//   Crra     : gamma*psi = 1, recursion collapses to time-additive utility
//   Unsupported : everything else (duality results do not apply)
enum class Regime { GammaLT1, BothGT1, Crra, Unsupported };

std::string regime_name(Regime r);

// Epstein-Zin preference parameters: discount rate delta, relative risk
// aversion gamma, elasticity of intertemporal substitution psi, and the
// derived composite theta = (1-gamma)/(1-1/psi).
class EpsteinZinPreference {
public:
    EpsteinZinPreference(double delta, double gamma, double psi);

    double delta() const { return delta_; }
    double gamma() const { return gamma_; }
    double psi() const { return psi_; }
    double theta() const { return theta_; }
    Regime regime() const { return regime_; }

    // Sign s with s*u >= 0 for every admissible utility value u.
    double utility_sign() const { return gamma_ < 1.0 ? 1.0 : -1.0; }
    bool admits_utility(double u) const { return (1.0 - gamma_) * u > 0.0; }

    // Lower edge of the admissible discount-rate class {nu >= delta*theta}.
    // The closed forms need nu strictly above it; the boundary point is a
    // domain error.
    double nu_floor() const { return delta_ * theta_; }

private:
    double delta_, gamma_, psi_, theta_;
    Regime regime_;
};

// Sign constraint of the admissible utility class, as a standalone value.
struct UtilitySign {
    double sign;  // +1 if gamma < 1, -1 if gamma > 1

    static UtilitySign of(const EpsteinZinPreference& p) { return {p.utility_sign()}; }
    bool admits(double u) const { return sign * u >= 0.0; }
};

// Aggregator f(c,u) = delta c^{1-1/psi}/(1-1/psi) ((1-gamma)u)^{1-1/theta}
//                     - delta theta u.
// Preconditions: c > 0 and (1-gamma)u > 0.
double aggregator_f(const EpsteinZinPreference& p, double c, double u);

// -f_u(c,u) = delta (1-theta) c^{1-1/psi} ((1-gamma)u)^{-1/theta}
//             + delta theta; the candidate discount rate generated by (c,u).
double aggregator_fu(const EpsteinZinPreference& p, double c, double u);

// f_c(c,u) = delta c^{-1/psi} ((1-gamma)u)^{1-1/theta}; consumption gradient
// of the aggregator, used by the deflator identity checks.
double aggregator_fc(const EpsteinZinPreference& p, double c, double u);

// Felicity F(c,nu) = delta^theta c^{1-gamma}/(1-gamma)
//                    ((delta theta - nu)/(theta-1))^{1-theta},
// the conjugate of f in its utility argument. Needs
// (delta theta - nu)/(theta - 1) > 0, i.e. nu > delta*theta in both
// supported regimes.
double felicity_F(const EpsteinZinPreference& p, double c, double nu);

// Bequest utility U_T(c) = c^{1-gamma}/(1-gamma), c > 0.
double bequest_U(const EpsteinZinPreference& p, double c);

// Conjugate bequest V_T(d) = gamma/(1-gamma) d^{(gamma-1)/gamma}, d > 0.
double conjugate_V(const EpsteinZinPreference& p, double d);

// G(d,nu) = delta^{theta/gamma} gamma/(1-gamma) d^{(gamma-1)/gamma}
//           ((delta theta - nu)/(theta-1))^{(1-theta)/gamma},
// the conjugate of F in consumption.
double dual_G(const EpsteinZinPreference& p, double d, double nu);

// Dual generator g(d,v) = delta^psi d^{1-psi}/(psi-1)
//                         ((1-gamma)v)^{1-gamma psi/theta} - delta theta v,
// for (1-gamma)v > 0. In the CRRA limit (gamma*psi = 1) the value power
// drops out and g reduces to the time-additive form.
double dual_g(const EpsteinZinPreference& p, double d, double v);

// -g_v(d,v) = delta^psi (1-theta) d^{1-psi} ((1-gamma)v)^{-gamma psi/theta}
//             + delta theta.
double dual_gv(const EpsteinZinPreference& p, double d, double v);

// --- Conjugacy scan (used by the `transforms` CLI command) ---------------

struct TransformResiduals {
    double f_from_F;   // max relative |f - sup_nu (F - nu u)|
    double V_from_U;   // max relative |V_T - sup_c (U_T - d c)|
    double G_from_F;   // max relative |G - sup_c (F - d c)|
    double g_from_G;   // max relative |g - sup_nu (G - nu v)|
    int samples;

    double max() const;
    bool pass(double tol = 1e-5) const { return max() <= tol; }
};

// Recovers each closed form from its conjugate by grid scan plus
// golden-section refinement, over `samples` random argument tuples.
TransformResiduals conjugacy_residuals(const EpsteinZinPreference& p, int samples,
                                       std::uint64_t seed);

}  // namespace ezdual
