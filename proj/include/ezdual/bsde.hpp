#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ezdual/market.hpp"
#include "ezdual/preferences.hpp"

namespace ezdual {

struct SolverScheme {
    int time_steps = 200;
    int space_nodes = 400;
    double fixed_point_tol = 1e-10;
    int max_fixed_point_iters = 50;
    // proceed even when the model's parameter checker rejects
    bool override_model_checks = false;
};

// Backward value surface Y(t,x) with its spatial gradient. On the grid,
// Z(t,x) = Yx(t,x) * a(x) is the martingale loading with respect to the
// state noise.
struct ValueSurface {
    std::vector<double> t;  // time nodes, t[0]=0 .. t[K]=T
    std::vector<double> x;  // state nodes
    std::vector<double> Y;   // (K+1) x nodes, row-major in time
    std::vector<double> Yx;  // same layout

    struct Meta {
        std::string scheme;
        double dt = 0.0;
        double h_max = 0.0;
        double h_min = 0.0;
        int fixed_point_max_iters = 0;
        bool clamp_activated = false;
    } meta;

    int time_steps() const { return static_cast<int>(t.size()) - 1; }
    int nodes() const { return static_cast<int>(x.size()); }
    double at(int i, int j) const { return Y[static_cast<std::size_t>(i) * x.size() + j]; }
    double grad_at(int i, int j) const {
        return Yx[static_cast<std::size_t>(i) * x.size() + j];
    }

    // bilinear interpolation, clamped to the grid box
    double value(double ti, double xi) const;
    double gradient(double ti, double xi) const;
};

// Saturation guard for the exponential zero-order term. `cap` is the value
// of exp(-psi y / theta) at the regime bound for y; transients beyond it are
// clamped and flagged.
struct ExpClamp {
    double cap = 0.0;
    mutable bool activated = false;
};

// Driver H(y,z) = 1/2 z M z' + zlin z + theta delta^psi/psi e^{-psi y/theta}
//                 + h - delta theta, at one tabulated node.
double hamiltonian(const EpsteinZinPreference& p, const NodeCoefficients& nc, double y,
                   double z, const ExpClamp* clamp = nullptr);

// Closed-form solution for constant coefficients, where the backward
// equation reduces to a scalar ODE: with v = e^{psi Y/theta},
// v' = -delta^psi - (psi/theta)(h - delta theta) v, v(T) = 1.
ValueSurface solve_constant(const EpsteinZinPreference& p, const ConstantMarket& m,
                            double T, const SolverScheme& scheme = {});

// Implicit-explicit finite differences for the semilinear backward PDE
//   u_t + 1/2 a^2 u_xx + (b + a zlin) u_x + 1/2 a M a u_x^2
//       + theta delta^psi/psi e^{-psi u/theta} + h - delta theta = 0,
// with u(T,.) = 0. Diffusion/drift implicit, gradient-quadratic and
// zero-order terms explicit with within-step fixed-point refinement.
ValueSurface solve_pde(const EpsteinZinPreference& p, const MarketModel& m, double T,
                       const SolverScheme& scheme = {});

struct BoundReport {
    double y0 = 0.0;          // solved Y(0, x0)
    double upper = 0.0;       // (h_max - delta theta) T
    double lower = 0.0;       // Monte Carlo lower-bound estimate
    double lower_se = 0.0;    // standard error of the MC term
    bool within = false;      // lower - 3 se <= y0 <= upper + tol
    int paths = 0;
};

// Monte Carlo check of the two-sided bound on Y(0, x0). The lower bound
// integrates h along the state simulated under the measure-changed drift
// b + (1-gamma)/gamma a rho' sigma' Sigma^{-1} mu.
BoundReport verify_y_bounds(const ValueSurface& vs, const MarketModel& m,
                            const EpsteinZinPreference& p, int mc_paths,
                            std::uint64_t seed);

}  // namespace ezdual
