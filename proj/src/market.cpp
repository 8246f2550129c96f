#include "ezdual/market.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ezdual {

namespace {

std::vector<double> linspace(double lo, double hi, int nodes) {
    std::vector<double> x(nodes);
    if (nodes == 1) {
        x[0] = 0.5 * (lo + hi);
        return x;
    }
    const double d = (hi - lo) / (nodes - 1);
    for (int i = 0; i < nodes; ++i) x[i] = lo + i * d;
    x.back() = hi;
    return x;
}

std::vector<double> logspace(double lo, double hi, int nodes) {
    std::vector<double> x(nodes);
    if (nodes == 1) {
        x[0] = std::sqrt(lo * hi);
        return x;
    }
    const double llo = std::log(lo), lhi = std::log(hi);
    const double d = (lhi - llo) / (nodes - 1);
    for (int i = 0; i < nodes; ++i) x[i] = std::exp(llo + i * d);
    x.front() = lo;
    x.back() = hi;
    return x;
}

void require_square(const Eigen::MatrixXd& sigma, int n, const char* who) {
    if (sigma.rows() != n || sigma.cols() != n)
        throw DomainError(std::string(who) + ": sigma must be n x n");
}

}  // namespace

std::string market_kind_name(MarketKind k) {
    switch (k) {
        case MarketKind::Constant: return "constant";
        case MarketKind::Heston: return "heston";
        case MarketKind::KimOmberg: return "kim_omberg";
    }
    return "?";
}

// --- ConstantMarket ---------------------------------------------------------

ConstantMarket::ConstantMarket(double r, Eigen::VectorXd mu, Eigen::MatrixXd sigma,
                               Eigen::VectorXd rho, double x0)
    : r_(r), x0_(x0), mu_(std::move(mu)), rho_(std::move(rho)), sigma_(std::move(sigma)) {
    const int n = static_cast<int>(mu_.size());
    if (n < 1) throw DomainError("constant market: need at least one asset");
    require_square(sigma_, n, "constant market");
    if (rho_.size() != n) throw DomainError("constant market: rho must have n entries");
    if (rho_.squaredNorm() > 1.0 + 1e-12)
        throw DomainError("constant market: rho'rho must be <= 1");
}

ConstantMarket::ConstantMarket(double r, double mu, double sigma, double rho, double x0)
    : ConstantMarket(r, Eigen::VectorXd::Constant(1, mu),
                     Eigen::MatrixXd::Constant(1, 1, sigma),
                     Eigen::VectorXd::Constant(1, rho), x0) {}

std::pair<double, double> ConstantMarket::state_domain() const {
    return {x0_ - 1.0, x0_ + 1.0};
}

std::vector<double> ConstantMarket::default_grid(int nodes) const {
    return linspace(x0_ - 1.0, x0_ + 1.0, nodes);
}

// --- HestonMarket -----------------------------------------------------------

HestonMarket::HestonMarket(HestonParams hp) : params_(std::move(hp)) {
    const int n = static_cast<int>(params_.lambda.size());
    if (n < 1) throw DomainError("heston market: need at least one asset");
    require_square(params_.sigma_scale, n, "heston market");
    if (params_.rho.size() != n)
        throw DomainError("heston market: rho must have n entries");
    if (params_.rho.squaredNorm() > 1.0 + 1e-12)
        throw DomainError("heston market: rho'rho must be <= 1");
    if (!(params_.b >= 0.0) || !(params_.ell >= 0.0) || !(params_.a > 0.0))
        throw DomainError("heston market: need b, ell >= 0 and a > 0");
    if (!(params_.x0 > 0.0)) throw DomainError("heston market: x0 must be > 0");
}

double HestonMarket::clamp_state(double x) const { return std::max(x, 0.0); }

double HestonMarket::state_diffusion(double x) const {
    return params_.a * std::sqrt(std::max(x, 0.0));
}

Eigen::MatrixXd HestonMarket::volatility(double x) const {
    const double xp = std::max(x, 1e-300);
    const double s = params_.shape == HestonParams::Shape::Sqrt
                         ? std::sqrt(xp)
                         : 1.0 / std::sqrt(xp);
    return params_.sigma_scale * s;
}

Eigen::VectorXd HestonMarket::excess_return(double x) const {
    // mu(x) = sigma(x) * lambda sqrt(x)
    return volatility(x) * (params_.lambda * std::sqrt(std::max(x, 0.0)));
}

std::vector<double> HestonMarket::default_grid(int nodes) const {
    const double hi = std::max(10.0 * params_.ell, 10.0 * params_.x0);
    return logspace(1e-4, hi, nodes);
}

// --- KimOmbergMarket --------------------------------------------------------

KimOmbergMarket::KimOmbergMarket(KimOmbergParams kp) : params_(std::move(kp)) {
    const int n = static_cast<int>(params_.lambda0.size());
    if (n < 1) throw DomainError("kim_omberg market: need at least one asset");
    if (params_.lambda1.size() != n)
        throw DomainError("kim_omberg market: lambda0/lambda1 size mismatch");
    require_square(params_.sigma, n, "kim_omberg market");
    if (params_.rho.size() != n)
        throw DomainError("kim_omberg market: rho must have n entries");
    if (params_.rho.squaredNorm() > 1.0 + 1e-12)
        throw DomainError("kim_omberg market: rho'rho must be <= 1");
    if (!(params_.a > 0.0) || !(params_.b > 0.0))
        throw DomainError("kim_omberg market: need a, b > 0");
}

Eigen::VectorXd KimOmbergMarket::excess_return(double x) const {
    return params_.sigma * (params_.lambda0 + params_.lambda1 * x);
}

std::vector<double> KimOmbergMarket::default_grid(int nodes) const {
    const double half = 6.0 * params_.a / std::sqrt(2.0 * params_.b);
    return linspace(-half, half, nodes);
}

// --- derived coefficients ---------------------------------------------------

Eigen::MatrixXd complete_correlation(const Eigen::VectorXd& rho) {
    if (rho.squaredNorm() > 1.0 + 1e-12)
        throw DomainError("complete_correlation: rho'rho exceeds 1");
    const int n = static_cast<int>(rho.size());
    Eigen::MatrixXd rest = Eigen::MatrixXd::Identity(n, n) - rho * rho.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rest);
    if (eig.info() != Eigen::Success)
        throw SolverError("complete_correlation: eigendecomposition failed");
    Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

NodeCoefficients eval_node(const MarketModel& m, const EpsteinZinPreference& p,
                           double x) {
    NodeCoefficients nc;
    nc.x = x;
    nc.r = m.rate(x);
    nc.mu = m.excess_return(x);
    nc.sigma = m.volatility(x);
    nc.rho = m.correlation(x);
    nc.a = m.state_diffusion(x);
    nc.b = m.state_drift(x);

    nc.Sigma = nc.sigma * nc.sigma.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(nc.Sigma);
    if (llt.info() != Eigen::Success) {
        std::ostringstream os;
        os << "derive_coefficients: Sigma singular or not positive definite at x=" << x;
        throw SolverError(os.str());
    }
    nc.SigmaInv = llt.solve(Eigen::MatrixXd::Identity(nc.Sigma.rows(), nc.Sigma.cols()));
    nc.Theta = nc.sigma.transpose() * nc.SigmaInv * nc.sigma;
    nc.rho_perp = complete_correlation(nc.rho);

    const double g = p.gamma();
    const double ratio = (1.0 - g) / g;
    const double proj = nc.rho.dot(nc.Theta * nc.rho);  // rho' sigma' Sigma^{-1} sigma rho
    nc.M = 1.0 + ratio * proj;
    nc.zlin = ratio * (nc.mu.transpose() * nc.SigmaInv * nc.sigma * nc.rho)(0);
    nc.h = (1.0 - g) * nc.r + 0.5 * ratio * (nc.mu.transpose() * nc.SigmaInv * nc.mu)(0);
    return nc;
}

DerivedCoefficients derive_coefficients(const MarketModel& m,
                                        const EpsteinZinPreference& p,
                                        const std::vector<double>& grid) {
    DerivedCoefficients dc;
    dc.x = grid;
    dc.node.reserve(grid.size());
    const double g = p.gamma();
    const double lo = std::min(1.0, 1.0 / g) - 1e-10;
    const double hi = std::max(1.0, 1.0 / g) + 1e-10;
    for (double x : grid) {
        NodeCoefficients nc = eval_node(m, p, x);
        if (nc.M < lo || nc.M > hi) {
            std::ostringstream os;
            os << "derive_coefficients: quadratic-form coefficient M=" << nc.M
               << " outside its eigenvalue sandwich at x=" << x;
            throw SolverError(os.str());
        }
        dc.node.push_back(std::move(nc));
    }
    dc.h_max = dc.node.front().h;
    dc.h_min = dc.node.front().h;
    for (const auto& nc : dc.node) {
        dc.h_max = std::max(dc.h_max, nc.h);
        dc.h_min = std::min(dc.h_min, nc.h);
    }
    return dc;
}

// --- checkers ----------------------------------------------------------------

RegimeReport check_regime_duality(const EpsteinZinPreference& p) {
    RegimeReport rep;
    rep.regime = p.regime();
    rep.duality_applicable =
        rep.regime == Regime::GammaLT1 || rep.regime == Regime::BothGT1;
    switch (rep.regime) {
        case Regime::GammaLT1:
            rep.label = "regime (i): 0<gamma<1, gamma*psi>1";
            break;
        case Regime::BothGT1:
            rep.label = "regime (ii): gamma>1, psi>1";
            break;
        case Regime::Crra:
            rep.label = "CRRA: duality theorems inapplicable";
            break;
        case Regime::Unsupported:
            rep.label = "unsupported (gamma*psi < 1)";
            break;
    }
    return rep;
}

CheckReport check_heston(const HestonParams& hp, const EpsteinZinPreference& p) {
    CheckReport rep;
    rep.applicable = p.gamma() > 1.0 && p.psi() > 1.0;
    if (!rep.applicable) {
        rep.items.push_back({"regime", false, "needs gamma, psi > 1"});
        return rep;
    }

    HestonParams probe = hp;
    if (!(probe.x0 > 0.0)) probe.x0 = std::max(probe.ell, 1e-2);
    HestonMarket model(probe);
    const auto grid = model.default_grid(64);

    double min_quad = std::numeric_limits<double>::infinity();
    double min_slope = std::numeric_limits<double>::infinity();
    for (double x : grid) {
        const auto nc = eval_node(model, p, x);
        const double quad = hp.lambda.dot(nc.Theta * hp.lambda);
        min_quad = std::min(min_quad, quad);
        min_slope = std::min(min_slope, hp.r1 + quad / (2.0 * p.gamma()));
    }

    const bool feller = hp.b * hp.ell > 0.5 * hp.a * hp.a;
    const bool slope_ok = min_slope >= 0.0;
    const bool channel = hp.r1 > 0.0 || min_quad > 0.0;

    std::ostringstream fo, so, co;
    fo << "b*ell=" << hp.b * hp.ell << " vs a^2/2=" << 0.5 * hp.a * hp.a;
    so << "min over grid of r1 + lambda'Theta lambda/(2 gamma) = " << min_slope;
    if (channel)
        co << (hp.r1 > 0.0 ? "r1 > 0" : "lambda'Theta lambda > 0 on grid");
    else
        co << "neither r1>0 nor lambda'Theta lambda>0";

    rep.items.push_back({"feller", feller, fo.str()});
    rep.items.push_back({"rate_slope", slope_ok, so.str()});
    rep.items.push_back({"risk_premium_channel", channel, co.str()});
    rep.accepted = feller && slope_ok && channel;
    return rep;
}

CheckReport check_kim_omberg(const KimOmbergParams& kp, const EpsteinZinPreference& p) {
    CheckReport rep;
    rep.applicable = p.gamma() > 1.0 && p.psi() > 1.0;
    if (!rep.applicable) {
        rep.items.push_back({"regime", false, "needs gamma, psi > 1"});
        return rep;
    }

    KimOmbergMarket model(kp);
    const auto nc = eval_node(model, p, kp.x0);

    const double drift_corr =
        -kp.b + (1.0 - p.gamma()) / p.gamma() * kp.a * kp.lambda1.dot(nc.Theta * kp.rho);
    const bool cond_i = kp.r1 == 0.0 && drift_corr < 0.0;
    const double quad = kp.lambda1.dot(nc.Theta * kp.lambda1);
    const bool cond_ii = quad > 0.0;

    std::ostringstream i1, i2;
    i1 << "r1=" << kp.r1 << ", -b + (1-gamma)/gamma a lambda1'Theta rho = " << drift_corr;
    i2 << "lambda1'Theta lambda1 = " << quad;
    rep.items.push_back({"mean_reversion_dominates", cond_i, i1.str()});
    rep.items.push_back({"state_risk_premium", cond_ii, i2.str()});
    rep.accepted = cond_i || cond_ii;
    return rep;
}

DiagnosticReport lyapunov_diagnostic(const MarketModel& m,
                                     const EpsteinZinPreference& p, double c_under,
                                     double c_over, const std::vector<double>& grid) {
    if (!(c_under > 0.0) || !(c_over > 0.0))
        throw DomainError("lyapunov_diagnostic: c_under, c_over must be > 0");
    DiagnosticReport rep;
    rep.x = grid;
    rep.values.reserve(grid.size());
    for (double x : grid) {
        if (!(x > 0.0))
            throw DomainError("lyapunov_diagnostic: probe function needs x > 0");
        const auto nc = eval_node(m, p, x);
        const double phi1 = -c_under / x + c_over;
        const double phi2 = c_under / (x * x);
        const double drift = nc.b + nc.a * nc.zlin;
        const double val = 0.5 * nc.a * nc.a * phi2 + drift * phi1 +
                           0.5 * nc.a * nc.M * nc.a * phi1 * phi1 + nc.h;
        rep.values.push_back(val);
    }
    rep.sup = *std::max_element(rep.values.begin(), rep.values.end());

    // bounded above numerically: not climbing toward either end of the grid
    const double tol = 1e-12 * (1.0 + std::fabs(rep.sup));
    const std::size_t n = rep.values.size();
    bool left_ok = true, right_ok = true;
    if (n >= 3) {
        left_ok = rep.values[0] <= rep.values[2] + tol;
        right_ok = rep.values[n - 1] <= rep.values[n - 3] + tol;
    }
    rep.bounded_above = left_ok && right_ok && std::isfinite(rep.sup);
    return rep;
}

}  // namespace ezdual
