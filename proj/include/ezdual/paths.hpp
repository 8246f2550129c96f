#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "ezdual/market.hpp"

namespace ezdual {

struct PathGrid {
    double T = 0.0;
    int steps = 0;
    std::vector<double> t;  // steps+1 nodes

    static PathGrid uniform(double T, int steps);
    double dt() const { return T / steps; }
};

// Simulated state paths with their driving Brownian increments, step-major:
// index (step, path); the perpendicular block is (step, component, path).
// Per-path counter-based streams make every path a function of (seed, path
// index) alone, independent of worker count.
struct PathBundle {
    PathGrid grid;
    int num_paths = 0;
    int num_assets = 0;
    std::uint64_t seed = 0;

    std::vector<double> X;    // (K+1) * N
    std::vector<double> dW;   // K * N
    std::vector<double> dWp;  // K * n * N

    // generator sanity diagnostics over all stored increments
    double increment_mean = 0.0;
    double increment_var = 0.0;
    std::size_t increment_count = 0;
    double truncation_fraction = 0.0;  // square-root models only

    double x(int i, int p) const {
        return X[static_cast<std::size_t>(i) * num_paths + p];
    }
    double dw(int i, int p) const {
        return dW[static_cast<std::size_t>(i) * num_paths + p];
    }
    double dwp(int i, int j, int p) const {
        return dWp[(static_cast<std::size_t>(i) * num_assets + j) * num_paths + p];
    }
};

// Euler stepping of the state: exact-in-place for constant models, plain
// Euler for the linear diffusion, full-truncation Euler for the square-root
// diffusion (negative excursions clamped inside coefficient evaluations).
PathBundle simulate_state(const MarketModel& m, int num_paths, int steps, double T,
                          std::uint64_t seed, int threads = 1);

// Feedback controls evaluated along paths.
class PolicyEval {
public:
    virtual ~PolicyEval() = default;
    virtual void eval(double t, double x, Eigen::Ref<Eigen::VectorXd> pi,
                      double& cbar) const = 0;
};

class LoadingsEval {
public:
    virtual ~LoadingsEval() = default;
    virtual void eval(double t, double x, double& xi,
                      Eigen::Ref<Eigen::VectorXd> eta) const = 0;
};

struct WealthPath {
    int num_paths = 0;
    int steps = 0;
    double w0 = 0.0;
    std::vector<double> wealth;       // (K+1) * N, strictly positive
    std::vector<double> consumption;  // (K+1) * N: rate for i<K, bequest at K

    double wv(int i, int p) const {
        return wealth[static_cast<std::size_t>(i) * num_paths + p];
    }
    double cv(int i, int p) const {
        return consumption[static_cast<std::size_t>(i) * num_paths + p];
    }
};

// Log-domain Euler on log W with drift r + pi'mu - cbar - pi'Sigma pi/2 and
// volatility pi'sigma dW^rho; positivity holds by construction. The bequest
// slot (terminal consumption) is the terminal wealth itself.
WealthPath simulate_wealth(const PathBundle& bundle, const MarketModel& m,
                           const PolicyEval& policy, double w0, int threads = 1);

struct DeflatorPath {
    int num_paths = 0;
    int steps = 0;
    std::vector<double> deflator;  // (K+1) * N, strictly positive

    double dv(int i, int p) const {
        return deflator[static_cast<std::size_t>(i) * num_paths + p];
    }
};

// Log-domain Euler on log D with drift -r - |xi|^2/2 - |eta|^2/2 and
// loadings (xi, eta) on (W, W_perp); D_0 = 1.
DeflatorPath simulate_deflator(const PathBundle& bundle, const MarketModel& m,
                               const LoadingsEval& loadings, int threads = 1);

struct DiscountPath {
    int num_paths = 0;
    int steps = 0;
    std::vector<double> kappa;  // (K+1) * N, kappa(0) = 1

    double kv(int i, int p) const {
        return kappa[static_cast<std::size_t>(i) * num_paths + p];
    }
};

// kappa_{0,t} = exp(-trapezoid integral of nu); multiplicative across grid
// nodes by construction. `nu` is (K+1)*N step-major.
DiscountPath discount_kappa(const PathGrid& grid, const std::vector<double>& nu,
                            int num_paths);
DiscountPath discount_kappa(const PathGrid& grid, double nu_constant, int num_paths);

}  // namespace ezdual
