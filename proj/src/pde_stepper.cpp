#include "pde_stepper.hpp"

#include <algorithm>

namespace ezdual::detail {

namespace {

// Implicit operator row weights for (1/dt) u - [1/2 a^2 u_xx + B u_x].
// Central drift where the M-matrix sign structure allows it, one-sided
// upwind otherwise; boundary rows drop the diffusion term.
struct RowWeights {
    double lo, di, up;
};

RowWeights implicit_row(const std::vector<double>& x, int j, double A, double B,
                        double inv_dt) {
    const int m = static_cast<int>(x.size());
    if (m == 1) return {0.0, inv_dt, 0.0};
    if (j == 0) {
        const double hp = x[1] - x[0];
        return {0.0, inv_dt + B / hp, -B / hp};
    }
    if (j == m - 1) {
        const double hm = x[m - 1] - x[m - 2];
        return {B / hm, inv_dt - B / hm, 0.0};
    }
    const double hm = x[j] - x[j - 1];
    const double hp = x[j + 1] - x[j];
    const double dl = A / (hm * (hm + hp));        // diffusion, lower
    const double du = A / (hp * (hm + hp));        // diffusion, upper
    const double cl = -B * hp / (hm * (hm + hp));  // central drift, lower
    const double cu = B * hm / (hp * (hm + hp));   // central drift, upper
    double Llo, Lup, Ldiag;
    if (dl + cl >= 0.0 && du + cu >= 0.0) {
        Llo = dl + cl;
        Lup = du + cu;
        Ldiag = -A / (hm * hp) + B * (hp - hm) / (hm * hp);
    } else if (B >= 0.0) {
        // forward-difference drift keeps off-diagonals of L nonnegative
        Llo = dl;
        Lup = du + B / hp;
        Ldiag = -A / (hm * hp) - B / hp;
    } else {
        Llo = dl - B / hm;
        Lup = du;
        Ldiag = -A / (hm * hp) + B / hm;
    }
    return {-Llo, inv_dt - Ldiag, -Lup};
}

}  // namespace

ValueSurface run_backward(const StepperProblem& prob, const SolverScheme& scheme,
                          const std::string& scheme_name) {
    const int m = static_cast<int>(prob.x.size());
    const int K = scheme.time_steps;
    if (K < 1) throw SolverError(scheme_name + ": need at least one time step");
    const double dt = prob.T / K;

    ValueSurface vs;
    vs.x = prob.x;
    vs.t.resize(K + 1);
    for (int i = 0; i <= K; ++i) vs.t[i] = prob.T * i / K;
    vs.Y.assign(static_cast<std::size_t>(K + 1) * m, 0.0);
    vs.Yx.assign(static_cast<std::size_t>(K + 1) * m, 0.0);
    vs.meta.scheme = scheme_name;
    vs.meta.dt = dt;

    std::vector<double> u_prev(m, 0.0);  // terminal condition
    std::vector<double> u(m), u_next(m), grad(m);
    std::vector<double> lo(m), di(m), up(m), rhs(m);

    for (int i = K - 1; i >= 0; --i) {
        const double t_i = vs.t[i];
        const GeneratorSlice gen = prob.generator(t_i);
        u = u_prev;
        bool converged = false;
        for (int it = 0; it < scheme.max_fixed_point_iters; ++it) {
            gradient_stencil(prob.x, u, grad);
            for (int j = 0; j < m; ++j) {
                const double z = prob.a[j] * grad[j];
                rhs[j] = u_prev[j] / dt + 0.5 * gen.zquad[j] * z * z + gen.rest(j, u[j]);
                const double A = prob.a[j] * prob.a[j];
                const double B = prob.b[j] + prob.a[j] * gen.zlin[j];
                const RowWeights w = implicit_row(prob.x, j, A, B, 1.0 / dt);
                lo[j] = w.lo;
                di[j] = w.di;
                up[j] = w.up;
                if (!(di[j] > 0.0)) {
                    std::ostringstream os;
                    os << scheme_name << ": boundary row lost diagonal dominance at t="
                       << t_i << ", x=" << prob.x[j];
                    throw SolverError(os.str());
                }
            }
            thomas_solve(lo, di, up, rhs, u_next);
            double diff = 0.0;
            for (int j = 0; j < m; ++j) {
                if (!std::isfinite(u_next[j])) {
                    std::ostringstream os;
                    os << scheme_name << ": non-finite value at t=" << t_i
                       << ", x=" << prob.x[j];
                    throw SolverError(os.str());
                }
                diff = std::max(diff, std::fabs(u_next[j] - u[j]));
            }
            u.swap(u_next);
            vs.meta.fixed_point_max_iters = std::max(vs.meta.fixed_point_max_iters, it + 1);
            if (diff < scheme.fixed_point_tol) {
                converged = true;
                break;
            }
        }
        if (!converged) {
            std::ostringstream os;
            os << scheme_name << ": fixed point did not converge within "
               << scheme.max_fixed_point_iters << " iterations at t=" << t_i;
            throw SolverError(os.str());
        }
        if (prob.bound_check) {
            const std::string msg = prob.bound_check(t_i, u);
            if (!msg.empty()) throw SolverError(scheme_name + ": " + msg);
        }
        gradient_stencil(prob.x, u, grad);
        for (int j = 0; j < m; ++j) {
            vs.Y[static_cast<std::size_t>(i) * m + j] = u[j];
            vs.Yx[static_cast<std::size_t>(i) * m + j] = grad[j];
        }
        u_prev = u;
    }
    return vs;
}

}  // namespace ezdual::detail
