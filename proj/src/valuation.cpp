#include "ezdual/valuation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "ezdual/simd/kernels.hpp"
#include "parallel.hpp"

namespace ezdual {

namespace {

// ---------------------------------------------------------------------------
// Regression basis: polynomials of total degree <= `degree` in the active
// standardized coordinates, plus the constant. Coordinates with (near) zero
// cross-sectional spread are dropped, which covers the degenerate-state and
// deterministic-wealth cases.
// ---------------------------------------------------------------------------

struct BasisPlan {
    bool use_x = false, use_w = false;
    double mx = 0.0, sx = 1.0, mw = 0.0, sw = 1.0;
    int cols = 1;
    std::vector<std::pair<int, int>> powers;  // (x-power, w-power), (0,0) first
};

BasisPlan plan_basis(const double* xs, const double* ws, int N, int degree) {
    BasisPlan bp;
    auto moments = [N](const double* v, double& m, double& s) {
        m = simd::mean(v, N);
        s = N > 1 ? std::sqrt(std::max(simd::variance(v, N), 0.0)) : 0.0;
    };
    moments(xs, bp.mx, bp.sx);
    moments(ws, bp.mw, bp.sw);
    bp.use_x = bp.sx > 1e-12 * (1.0 + std::fabs(bp.mx));
    bp.use_w = bp.sw > 1e-12 * (1.0 + std::fabs(bp.mw));
    if (!bp.use_x) bp.sx = 1.0;
    if (!bp.use_w) bp.sw = 1.0;
    bp.powers.push_back({0, 0});
    for (int d = 1; d <= degree; ++d)
        for (int px = d; px >= 0; --px) {
            const int pw = d - px;
            if ((px > 0 && !bp.use_x) || (pw > 0 && !bp.use_w)) continue;
            bp.powers.push_back({px, pw});
        }
    bp.cols = static_cast<int>(bp.powers.size());
    return bp;
}

void fill_row(const BasisPlan& bp, double x, double w, double* row) {
    const double xh = (x - bp.mx) / bp.sx;
    const double wh = (w - bp.mw) / bp.sw;
    double xp[4] = {1.0, xh, xh * xh, xh * xh * xh};
    double wp[4] = {1.0, wh, wh * wh, wh * wh * wh};
    for (int c = 0; c < bp.cols; ++c)
        row[c] = xp[bp.powers[c].first] * wp[bp.powers[c].second];
}

std::string basis_label(const BasisPlan& bp, int degree) {
    std::ostringstream os;
    os << "poly deg<=" << degree << " in {";
    if (bp.use_x) os << "X";
    if (bp.use_x && bp.use_w) os << ",";
    if (bp.use_w) os << "logP";
    os << "} + const (" << bp.cols << " cols)";
    return os.str();
}

// ---------------------------------------------------------------------------
// Per-node implicit solve: find v in the admissible sign domain with
//   v = E + gen(v) dt.
// phi(v) = v - E - gen(v) dt is strictly increasing on the domain.
// ---------------------------------------------------------------------------

struct NodeGenerator {
    // gen(v) and d gen / d v at this node
    std::function<double(double)> g, gd;
};

double solve_node(double E, double dt, double sign, const NodeGenerator& gen,
                  double tol, int time_index, double& residual) {
    auto phi = [&](double v) { return v - E - gen.g(v) * dt; };

    // Bracket the root. On the negative-utility side the generator vanishes
    // toward 0-, so phi(0-) ~ -E: a nonnegative prediction has no admissible
    // root and violates the sign constraint.
    const double scale = 1.0 + std::fabs(E);
    double lo, hi;  // phi(lo) < 0 < phi(hi), lo < hi in real order
    if (sign < 0.0) {
        if (E >= 0.0) {
            std::ostringstream os;
            os << "evaluate: sign constraint violated at time node " << time_index
               << " (conditional-expectation prediction " << E
               << " leaves no admissible root)";
            throw SolverError(os.str());
        }
        hi = -1e-14 * scale;
        lo = (E < 0.0 ? E : -scale);
        int guard = 0;
        while (phi(lo) >= 0.0) {
            lo *= 2.0;
            if (++guard > 200) throw SolverError("evaluate: bracketing failed (lower)");
        }
    } else {
        lo = 1e-14 * scale;
        int guard = 0;
        while (phi(lo) >= 0.0) {
            lo *= 0.5;
            if (++guard > 400) throw SolverError("evaluate: bracketing failed (lower)");
        }
        hi = std::max(E, scale);
        guard = 0;
        while (phi(hi) <= 0.0) {
            hi *= 2.0;
            if (++guard > 200) throw SolverError("evaluate: bracketing failed (upper)");
        }
    }

    double v = std::clamp(E, lo, hi);
    for (int it = 0; it < 100; ++it) {
        const double f = phi(v);
        if (std::fabs(f) <= tol * (1.0 + std::fabs(v))) {
            residual = std::fabs(f);
            return v;
        }
        (f < 0.0 ? lo : hi) = v;
        const double fp = 1.0 - gen.gd(v) * dt;
        double v_next = fp > 0.0 ? v - f / fp : lo;
        if (!(v_next > lo) || !(v_next < hi)) v_next = 0.5 * (lo + hi);
        v = v_next;
    }
    residual = std::fabs(phi(v));
    if (residual > 1e-8 * (1.0 + std::fabs(v)))
        throw SolverError("evaluate: implicit node solve did not converge at time node " +
                          std::to_string(time_index));
    return v;
}

// ---------------------------------------------------------------------------
// Shared backward engine
// ---------------------------------------------------------------------------

struct BackwardSpec {
    const PathBundle* bundle = nullptr;
    const std::vector<double>* pathvar = nullptr;  // (K+1)*N, positive (W or D)
    double sign = 0.0;
    // terminal value per path
    std::function<double(int)> terminal;
    // node generator factory at (time index, path)
    std::function<NodeGenerator(int, int)> node;
};

// One full backward recursion over the contiguous path range [lo, hi):
// regressions are fitted on that range only. Returns the range's root value
// and tracks the worst implicit-solve residual.
double backward_pass(const BackwardSpec& spec, const LsmcOptions& opts, int lo, int hi,
                     RecursiveValue& rv, std::string* basis_out, double& residual) {
    const PathBundle& b = *spec.bundle;
    const int N = b.num_paths;
    const int n = hi - lo;
    const int K = b.grid.steps;
    const double dt = b.grid.dt();

    std::vector<double> xs(n), logvar(n), E(n);
    using RowMajorXd =
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajorXd Phi;
    Eigen::VectorXd target(n), beta;

    double root = 0.0;
    for (int i = K - 1; i >= 0; --i) {
        const double* xrow = b.X.data() + static_cast<std::size_t>(i) * N;
        const double* pv = spec.pathvar->data() + static_cast<std::size_t>(i) * N;
        for (int p = 0; p < n; ++p) {
            xs[p] = xrow[lo + p];
            logvar[p] = std::log(pv[lo + p]);
            target[p] = rv.values[static_cast<std::size_t>(i + 1) * N + lo + p];
        }

        const BasisPlan bp = plan_basis(xs.data(), logvar.data(), n, opts.basis_degree);
        if (basis_out && i == K - 1) *basis_out = basis_label(bp, opts.basis_degree);

        if (bp.cols == 1) {
            const double m = target.mean();
            for (int p = 0; p < n; ++p) E[p] = m;
        } else {
            Phi.resize(n, bp.cols);
            for (int p = 0; p < n; ++p)
                fill_row(bp, xs[p], logvar[p], Phi.row(p).data());
            Eigen::ColPivHouseholderQR<RowMajorXd> qr(Phi);
            if (qr.rank() < bp.cols) {
                std::ostringstream os;
                os << "evaluate: regression rank deficient at time node " << i << " ("
                   << qr.rank() << " < " << bp.cols << ")";
                throw RegressionError(os.str());
            }
            beta = qr.solve(target);
            Eigen::VectorXd pred = Phi * beta;
            for (int p = 0; p < n; ++p) E[p] = pred[p];
        }

        double* out = rv.values.data() + static_cast<std::size_t>(i) * N;
        for (int p = 0; p < n; ++p) {
            if (!opts.include_generator) {
                out[lo + p] = E[p];
                continue;
            }
            double r = 0.0;
            const NodeGenerator gen = spec.node(i, lo + p);
            out[lo + p] = solve_node(E[p], dt, spec.sign, gen, opts.solve_tol, i, r);
            residual = std::max(residual, r);
        }
        // states coincide at the root, so the whole range holds one value
        root = out[lo];
    }
    return root;
}

RecursiveValue backward_lsmc(const BackwardSpec& spec, const LsmcOptions& opts) {
    const PathBundle& b = *spec.bundle;
    const int N = b.num_paths;
    const int K = b.grid.steps;

    RecursiveValue rv;
    rv.num_paths = N;
    rv.steps = K;
    rv.values.assign(static_cast<std::size_t>(K + 1) * N, 0.0);
    for (int p = 0; p < N; ++p)
        rv.values[static_cast<std::size_t>(K) * N + p] = spec.terminal(p);

    // Independent replicate per batch: each batch fits its own regressions,
    // so the batch spread sees the full estimator noise including the
    // regression-coefficient part.
    const int min_batch = 32;
    const int B = std::max(1, std::min(opts.batches, N / min_batch));
    const int per = N / B;
    std::vector<double> batch_vals(B);
    std::vector<double> residuals(B, 0.0);

    detail::parallel_for(B, opts.threads, [&](int blo, int bhi) {
        for (int bi = blo; bi < bhi; ++bi) {
            const int lo = bi * per;
            const int hi = (bi == B - 1) ? N : lo + per;
            batch_vals[bi] = backward_pass(spec, opts, lo, hi, rv,
                                           bi == 0 ? &rv.basis : nullptr,
                                           residuals[bi]);
        }
    });
    rv.max_residual = simd::active().max_abs(residuals.data(), B);

    // pooled root: aggregate the level-1 values across all batches
    const int level1 = std::min(1, K);
    const double mean1 =
        simd::mean(rv.values.data() + static_cast<std::size_t>(level1) * N, N);
    double root;
    if (!opts.include_generator || K == 0) {
        root = mean1;
    } else {
        double r = 0.0;
        const NodeGenerator gen = spec.node(0, 0);
        root = solve_node(mean1, b.grid.dt(), spec.sign, gen, opts.solve_tol, 0, r);
        rv.max_residual = std::max(rv.max_residual, r);
    }
    double* row0 = rv.values.data();
    for (int p = 0; p < N; ++p) row0[p] = root;
    rv.estimate = root;
    if (B > 1)
        rv.standard_error =
            std::sqrt(simd::variance(batch_vals.data(), B) / static_cast<double>(B));
    return rv;
}

}  // namespace

// ---------------------------------------------------------------------------

RecursiveValue evaluate_sdu(const PathBundle& bundle, const WealthPath& wp,
                            const EpsteinZinPreference& p, const LsmcOptions& opts) {
    const int N = bundle.num_paths;
    const int K = bundle.grid.steps;
    if (wp.num_paths != N || wp.steps != K)
        throw DomainError("evaluate_sdu: wealth path does not match bundle");
    for (double c : wp.consumption)
        if (!(c > 0.0))
            throw DomainError("evaluate_sdu: consumption path must be positive");

    BackwardSpec spec;
    spec.bundle = &bundle;
    spec.pathvar = &wp.wealth;
    spec.sign = p.utility_sign();
    spec.terminal = [&](int pth) { return bequest_U(p, wp.cv(K, pth)); };
    spec.node = [&](int i, int pth) {
        const double c = wp.cv(i, pth);
        NodeGenerator g;
        g.g = [&p, c](double v) { return aggregator_f(p, c, v); };
        g.gd = [&p, c](double v) { return -aggregator_fu(p, c, v); };
        return g;
    };
    return backward_lsmc(spec, opts);
}

RecursiveValue evaluate_sdd(const PathBundle& bundle, const DeflatorPath& dp, double y,
                            const EpsteinZinPreference& p, const LsmcOptions& opts) {
    const int N = bundle.num_paths;
    const int K = bundle.grid.steps;
    if (dp.num_paths != N || dp.steps != K)
        throw DomainError("evaluate_sdd: deflator path does not match bundle");
    if (!(y > 0.0)) throw DomainError("evaluate_sdd: y must be > 0");

    const double gamma = p.gamma();
    BackwardSpec spec;
    spec.bundle = &bundle;
    spec.pathvar = &dp.deflator;
    spec.sign = p.utility_sign();
    spec.terminal = [&, y](int pth) { return conjugate_V(p, y * dp.dv(K, pth)); };
    spec.node = [&, y, gamma](int i, int pth) {
        const double d = y * dp.dv(i, pth);
        NodeGenerator g;
        g.g = [&p, d, gamma](double v) { return dual_g(p, d, v / gamma); };
        g.gd = [&p, d, gamma](double v) { return -dual_gv(p, d, v / gamma) / gamma; };
        return g;
    };
    return backward_lsmc(spec, opts);
}

// ---------------------------------------------------------------------------

namespace {

VariationalValue variational_mean(const std::vector<double>& per_path) {
    VariationalValue v;
    const std::size_t N = per_path.size();
    v.estimate = simd::mean(per_path.data(), N);
    if (N > 1)
        v.standard_error =
            std::sqrt(simd::variance(per_path.data(), N) / static_cast<double>(N));
    return v;
}

}  // namespace

VariationalValue evaluate_variational(const PathBundle& bundle, const WealthPath& wp,
                                      const std::vector<double>& nu,
                                      const EpsteinZinPreference& p) {
    const int N = bundle.num_paths;
    const int K = bundle.grid.steps;
    const double dt = bundle.grid.dt();
    if (nu.size() != static_cast<std::size_t>(K + 1) * N)
        throw DomainError("evaluate_variational: nu must be (steps+1) x paths");
    for (double v : nu)
        if (!(v > p.nu_floor()))
            throw DomainError("evaluate_variational: nu must exceed delta*theta "
                              "(membership in the admissible discount class)");

    const DiscountPath kp = discount_kappa(bundle.grid, nu, N);
    std::vector<double> vals(N, 0.0);
    for (int pth = 0; pth < N; ++pth) {
        double acc = 0.0;
        for (int i = 0; i < K; ++i)
            acc += kp.kv(i, pth) *
                   felicity_F(p, wp.cv(i, pth), nu[static_cast<std::size_t>(i) * N + pth]) *
                   dt;
        acc += kp.kv(K, pth) * bequest_U(p, wp.cv(K, pth));
        vals[pth] = acc;
    }
    return variational_mean(vals);
}

VariationalValue evaluate_variational(const PathBundle& bundle, const WealthPath& wp,
                                      double nu_constant, const EpsteinZinPreference& p) {
    std::vector<double> nu(static_cast<std::size_t>(bundle.grid.steps + 1) *
                               bundle.num_paths,
                           nu_constant);
    return evaluate_variational(bundle, wp, nu, p);
}

VariationalValue evaluate_variational_dual(const PathBundle& bundle,
                                           const DeflatorPath& dp, double y,
                                           const std::vector<double>& nu,
                                           const EpsteinZinPreference& p) {
    const int N = bundle.num_paths;
    const int K = bundle.grid.steps;
    const double dt = bundle.grid.dt();
    if (!(y > 0.0)) throw DomainError("evaluate_variational_dual: y must be > 0");
    if (nu.size() != static_cast<std::size_t>(K + 1) * N)
        throw DomainError("evaluate_variational_dual: nu must be (steps+1) x paths");
    for (double v : nu)
        if (!(v > p.nu_floor()))
            throw DomainError("evaluate_variational_dual: nu must exceed delta*theta");

    std::vector<double> nu_over_gamma(nu.size());
    for (std::size_t i = 0; i < nu.size(); ++i) nu_over_gamma[i] = nu[i] / p.gamma();
    const DiscountPath kp = discount_kappa(bundle.grid, nu_over_gamma, N);

    std::vector<double> vals(N, 0.0);
    for (int pth = 0; pth < N; ++pth) {
        double acc = 0.0;
        for (int i = 0; i < K; ++i)
            acc += kp.kv(i, pth) *
                   dual_G(p, y * dp.dv(i, pth), nu[static_cast<std::size_t>(i) * N + pth]) *
                   dt;
        acc += kp.kv(K, pth) * conjugate_V(p, y * dp.dv(K, pth));
        vals[pth] = acc;
    }
    return variational_mean(vals);
}

VariationalValue evaluate_variational_dual(const PathBundle& bundle,
                                           const DeflatorPath& dp, double y,
                                           double nu_constant,
                                           const EpsteinZinPreference& p) {
    std::vector<double> nu(static_cast<std::size_t>(bundle.grid.steps + 1) *
                               bundle.num_paths,
                           nu_constant);
    return evaluate_variational_dual(bundle, dp, y, nu, p);
}

}  // namespace ezdual
