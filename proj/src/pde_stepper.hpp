#pragma once

// Internal one-factor IMEX backward stepper shared by the optimal-value
// solve and the feedback-policy evaluation. Both must discretize
// identically (same gradient stencil, same implicit/explicit split, same
// fixed point) so that the feedback solve at the extracted optimal policy
// reproduces the optimal surface node-for-node.

#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "ezdual/bsde.hpp"
#include "ezdual/errors.hpp"

namespace ezdual::detail {

// Driver pieces at one node: H(y,z) = 1/2 zquad z^2 + zlin z + rest(y).
// zlin feeds the implicit drift (z = a u_x); zquad and rest stay explicit.
struct GeneratorSlice {
    std::vector<double> zlin;   // per node
    std::vector<double> zquad;  // per node
    // rest(t, node, y) -> zero-order value; may clamp internally
    std::function<double(int, double)> rest;
};

struct StepperProblem {
    std::vector<double> x;      // space nodes
    std::vector<double> a;      // state diffusion per node
    std::vector<double> b;      // state drift per node
    double T = 0.0;
    // generator slice at backward target time t
    std::function<GeneratorSlice(double)> generator;
    // optional per-step bound check: (t, u) -> violation description or ""
    std::function<std::string(double, const std::vector<double>&)> bound_check;
};

// First-order gradient: central (non-uniform) in the interior, one-sided at
// the ends. extract_policy tabulates Z with this same stencil.
inline void gradient_stencil(const std::vector<double>& x, const std::vector<double>& u,
                             std::vector<double>& g) {
    const int m = static_cast<int>(x.size());
    g.resize(m);
    if (m == 1) {
        g[0] = 0.0;
        return;
    }
    g[0] = (u[1] - u[0]) / (x[1] - x[0]);
    g[m - 1] = (u[m - 1] - u[m - 2]) / (x[m - 1] - x[m - 2]);
    for (int j = 1; j + 1 < m; ++j) {
        const double hm = x[j] - x[j - 1];
        const double hp = x[j + 1] - x[j];
        g[j] = (-hp / (hm * (hm + hp))) * u[j - 1] +
               ((hp - hm) / (hm * hp)) * u[j] +
               (hm / (hp * (hm + hp))) * u[j + 1];
    }
}

inline void thomas_solve(std::vector<double>& lo, std::vector<double>& di,
                         std::vector<double>& up, std::vector<double>& rhs,
                         std::vector<double>& out) {
    const int m = static_cast<int>(di.size());
    for (int j = 1; j < m; ++j) {
        const double w = lo[j] / di[j - 1];
        di[j] -= w * up[j - 1];
        rhs[j] -= w * rhs[j - 1];
    }
    out.resize(m);
    out[m - 1] = rhs[m - 1] / di[m - 1];
    for (int j = m - 2; j >= 0; --j) out[j] = (rhs[j] - up[j] * out[j + 1]) / di[j];
}

// Runs the backward sweep and fills Y rows [K..0]; terminal row is zero.
ValueSurface run_backward(const StepperProblem& prob, const SolverScheme& scheme,
                          const std::string& scheme_name);

}  // namespace ezdual::detail
