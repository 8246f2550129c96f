#include "ezdual/paths.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

#include "ezdual/rng.hpp"
#include "ezdual/simd/kernels.hpp"
#include "parallel.hpp"

namespace ezdual {

PathGrid PathGrid::uniform(double T, int steps) {
    PathGrid g;
    g.T = T;
    g.steps = steps;
    g.t.resize(steps + 1);
    for (int i = 0; i <= steps; ++i) g.t[i] = T * i / steps;
    return g;
}

PathBundle simulate_state(const MarketModel& m, int num_paths, int steps, double T,
                          std::uint64_t seed, int threads) {
    const int n = m.num_assets();
    PathBundle b;
    b.grid = PathGrid::uniform(T, steps);
    b.num_paths = num_paths;
    b.num_assets = n;
    b.seed = seed;
    b.X.resize(static_cast<std::size_t>(steps + 1) * num_paths);
    b.dW.resize(static_cast<std::size_t>(steps) * num_paths);
    b.dWp.resize(static_cast<std::size_t>(steps) * n * num_paths);

    const double dt = b.grid.dt();
    const double sdt = std::sqrt(dt);
    const bool constant = m.kind() == MarketKind::Constant;
    const double x0 = m.x0();
    std::atomic<long> truncated{0};

    detail::parallel_for(num_paths, threads, [&](int lo, int hi) {
        long trunc_local = 0;
        for (int p = lo; p < hi; ++p) {
            RngStream rng(seed, static_cast<std::uint64_t>(p));
            double x = x0;
            b.X[p] = x;
            for (int i = 0; i < steps; ++i) {
                const double z = rng.next_normal();
                b.dW[static_cast<std::size_t>(i) * num_paths + p] = sdt * z;
                for (int j = 0; j < n; ++j)
                    b.dWp[(static_cast<std::size_t>(i) * n + j) * num_paths + p] =
                        sdt * rng.next_normal();
                if (!constant) {
                    if (x < 0.0) ++trunc_local;
                    const double xc = m.clamp_state(x);
                    x += m.state_drift(xc) * dt + m.state_diffusion(xc) * sdt * z;
                }
                b.X[static_cast<std::size_t>(i + 1) * num_paths + p] = x;
            }
        }
        truncated.fetch_add(trunc_local, std::memory_order_relaxed);
    });

    b.truncation_fraction =
        static_cast<double>(truncated.load()) / (static_cast<double>(steps) * num_paths);

    // generator sanity diagnostics, pooled over dW and dWp
    const auto& k = simd::active();
    const std::size_t n_w = b.dW.size(), n_p = b.dWp.size();
    b.increment_count = n_w + n_p;
    const double total = k.sum(b.dW.data(), n_w) + k.sum(b.dWp.data(), n_p);
    b.increment_mean = total / static_cast<double>(b.increment_count);
    const double ss = k.sumsq(b.dW.data(), n_w) + k.sumsq(b.dWp.data(), n_p);
    b.increment_var = ss / static_cast<double>(b.increment_count) -
                      b.increment_mean * b.increment_mean;
    return b;
}

namespace {

// Correlation completion cache: recomputes only when rho actually changes
// (the models here have state-independent correlation).
class RhoPerpCache {
public:
    const Eigen::MatrixXd& get(const Eigen::VectorXd& rho) {
        if (!valid_ || rho != cached_rho_) {
            cached_rho_ = rho;
            perp_ = complete_correlation(rho);
            valid_ = true;
        }
        return perp_;
    }

private:
    bool valid_ = false;
    Eigen::VectorXd cached_rho_;
    Eigen::MatrixXd perp_;
};

void throw_nan(const char* who, int step, int path, double t, double x) {
    std::ostringstream os;
    os << who << ": non-finite control at step " << step << ", path " << path
       << " (t=" << t << ", x=" << x << ")";
    throw SolverError(os.str());
}

}  // namespace

WealthPath simulate_wealth(const PathBundle& bundle, const MarketModel& m,
                           const PolicyEval& policy, double w0, int threads) {
    if (!(w0 > 0.0)) throw DomainError("simulate_wealth: w0 must be > 0");
    const int N = bundle.num_paths;
    const int K = bundle.grid.steps;
    const int n = bundle.num_assets;
    const double dt = bundle.grid.dt();

    WealthPath wp;
    wp.num_paths = N;
    wp.steps = K;
    wp.w0 = w0;
    wp.wealth.resize(static_cast<std::size_t>(K + 1) * N);
    wp.consumption.resize(static_cast<std::size_t>(K + 1) * N);

    detail::parallel_for(N, threads, [&](int lo, int hi) {
        Eigen::VectorXd pi(n), mu(n), sigrho(n), volp(n);
        RhoPerpCache perp;
        for (int p = lo; p < hi; ++p) {
            double logw = std::log(w0);
            for (int i = 0; i < K; ++i) {
                const double t = bundle.grid.t[i];
                const double x = m.clamp_state(bundle.x(i, p));
                double cbar = 0.0;
                policy.eval(t, x, pi, cbar);
                if (!pi.allFinite() || !std::isfinite(cbar))
                    throw_nan("simulate_wealth", i, p, t, x);

                const double w = std::exp(logw);
                wp.wealth[static_cast<std::size_t>(i) * N + p] = w;
                wp.consumption[static_cast<std::size_t>(i) * N + p] = cbar * w;

                const Eigen::MatrixXd sigma = m.volatility(x);
                mu = m.excess_return(x);
                const Eigen::VectorXd rho = m.correlation(x);
                sigrho = sigma * rho;
                const Eigen::VectorXd sig_pi = sigma.transpose() * pi;
                const double drift = m.rate(x) + pi.dot(mu) - cbar -
                                     0.5 * sig_pi.squaredNorm();
                volp = perp.get(rho).transpose() * sig_pi;  // (pi' sigma rho_perp)'

                double dlog = drift * dt + pi.dot(sigrho) * bundle.dw(i, p);
                for (int j = 0; j < n; ++j) dlog += volp[j] * bundle.dwp(i, j, p);
                logw += dlog;
            }
            const double wT = std::exp(logw);
            wp.wealth[static_cast<std::size_t>(K) * N + p] = wT;
            wp.consumption[static_cast<std::size_t>(K) * N + p] = wT;  // bequest
        }
    });
    return wp;
}

DeflatorPath simulate_deflator(const PathBundle& bundle, const MarketModel& m,
                               const LoadingsEval& loadings, int threads) {
    const int N = bundle.num_paths;
    const int K = bundle.grid.steps;
    const int n = bundle.num_assets;
    const double dt = bundle.grid.dt();

    DeflatorPath dp;
    dp.num_paths = N;
    dp.steps = K;
    dp.deflator.resize(static_cast<std::size_t>(K + 1) * N);

    detail::parallel_for(N, threads, [&](int lo, int hi) {
        Eigen::VectorXd eta(n);
        for (int p = lo; p < hi; ++p) {
            double logd = 0.0;
            for (int i = 0; i < K; ++i) {
                const double t = bundle.grid.t[i];
                const double x = m.clamp_state(bundle.x(i, p));
                dp.deflator[static_cast<std::size_t>(i) * N + p] = std::exp(logd);

                double xi = 0.0;
                loadings.eval(t, x, xi, eta);
                if (!std::isfinite(xi) || !eta.allFinite())
                    throw_nan("simulate_deflator", i, p, t, x);

                double dlog = (-m.rate(x) - 0.5 * xi * xi - 0.5 * eta.squaredNorm()) * dt +
                              xi * bundle.dw(i, p);
                for (int j = 0; j < n; ++j) dlog += eta[j] * bundle.dwp(i, j, p);
                logd += dlog;
            }
            dp.deflator[static_cast<std::size_t>(K) * N + p] = std::exp(logd);
        }
    });
    return dp;
}

DiscountPath discount_kappa(const PathGrid& grid, const std::vector<double>& nu,
                            int num_paths) {
    const int K = grid.steps;
    if (nu.size() != static_cast<std::size_t>(K + 1) * num_paths)
        throw DomainError("discount_kappa: nu must be (steps+1) x paths");
    for (double v : nu)
        if (!std::isfinite(v)) throw DomainError("discount_kappa: nu must be finite");

    DiscountPath kp;
    kp.num_paths = num_paths;
    kp.steps = K;
    kp.kappa.resize(static_cast<std::size_t>(K + 1) * num_paths);
    const double dt = grid.dt();

    std::vector<double> integral(num_paths, 0.0);
    for (int p = 0; p < num_paths; ++p) kp.kappa[p] = 1.0;
    for (int i = 1; i <= K; ++i) {
        const double* nu_prev = nu.data() + static_cast<std::size_t>(i - 1) * num_paths;
        const double* nu_cur = nu.data() + static_cast<std::size_t>(i) * num_paths;
        simd::active().add_sum_scaled(integral.data(), nu_prev, nu_cur, 0.5 * dt,
                                      num_paths);
        double* out = kp.kappa.data() + static_cast<std::size_t>(i) * num_paths;
        for (int p = 0; p < num_paths; ++p) out[p] = std::exp(-integral[p]);
    }
    return kp;
}

DiscountPath discount_kappa(const PathGrid& grid, double nu_constant, int num_paths) {
    std::vector<double> nu(static_cast<std::size_t>(grid.steps + 1) * num_paths,
                           nu_constant);
    return discount_kappa(grid, nu, num_paths);
}

}  // namespace ezdual
