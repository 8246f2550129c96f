#pragma once

#include <string>
#include <vector>

#include "ezdual/paths.hpp"
#include "ezdual/preferences.hpp"

namespace ezdual {

struct LsmcOptions {
    int basis_degree = 3;   // polynomial total degree in standardized coords
    int batches = 20;       // batch-means groups for the time-0 CI
    bool include_generator = true;  // off: pure conditional expectation (test hook)
    double solve_tol = 1e-12;       // per-node implicit-solve tolerance
    int threads = 1;
};

// Backward-evaluated recursive quantity along simulated paths.
struct RecursiveValue {
    int num_paths = 0;
    int steps = 0;
    std::vector<double> values;  // (K+1) * N step-major
    double estimate = 0.0;       // time-0 value
    double standard_error = 0.0; // batch-means CI half-width base
    double max_residual = 0.0;   // sup of |v - E - gen dt| over nodes
    std::string basis;

    double at(int i, int p) const {
        return values[static_cast<std::size_t>(i) * num_paths + p];
    }
};

// Recursive utility along a consumption stream: backward induction with a
// cross-sectional least-squares conditional expectation (polynomials in
// standardized state and log-wealth) and a safeguarded-Newton implicit solve
// per path and time node.
RecursiveValue evaluate_sdu(const PathBundle& bundle, const WealthPath& wp,
                            const EpsteinZinPreference& p,
                            const LsmcOptions& opts = {});

// Recursive dual value for the scaled deflator y D: same backward scheme
// with terminal V_T(y D_T) and generator g(y D, V/gamma).
RecursiveValue evaluate_sdd(const PathBundle& bundle, const DeflatorPath& dp, double y,
                            const EpsteinZinPreference& p,
                            const LsmcOptions& opts = {});

struct VariationalValue {
    double estimate = 0.0;
    double standard_error = 0.0;
};

// Discounted variational value for a supplied discount-rate process nu
// ((K+1) x N step-major, or constant): sample mean of
//   kappa_{0,T} U_T(c_T) + sum_s kappa_{0,s} F(c_s, nu_s) dt.
VariationalValue evaluate_variational(const PathBundle& bundle, const WealthPath& wp,
                                      const std::vector<double>& nu,
                                      const EpsteinZinPreference& p);
VariationalValue evaluate_variational(const PathBundle& bundle, const WealthPath& wp,
                                      double nu_constant,
                                      const EpsteinZinPreference& p);

// Dual-side variational value: kappa^{nu/gamma}_{0,T} V_T(y D_T)
// + sum_s kappa^{nu/gamma}_{0,s} G(y D_s, nu_s) dt.
VariationalValue evaluate_variational_dual(const PathBundle& bundle,
                                           const DeflatorPath& dp, double y,
                                           const std::vector<double>& nu,
                                           const EpsteinZinPreference& p);
VariationalValue evaluate_variational_dual(const PathBundle& bundle,
                                           const DeflatorPath& dp, double y,
                                           double nu_constant,
                                           const EpsteinZinPreference& p);

}  // namespace ezdual
