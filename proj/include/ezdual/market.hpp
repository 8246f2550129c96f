#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "ezdual/errors.hpp"
#include "ezdual/preferences.hpp"

namespace ezdual {

enum class MarketKind { Constant, Heston, KimOmberg };

std::string market_kind_name(MarketKind k);

// Market with n risky assets driven by one scalar state variable:
//   dX = b(X) dt + a(X) dW,            X in the open interval E
//   dS^i/S^i = (r + mu^i) dt + (sigma dW^rho)^i,
// where W^rho = rho W + rho_perp W_perp has instantaneous correlation rho
// with the state noise W.
class MarketModel {
public:
    virtual ~MarketModel() = default;

    virtual MarketKind kind() const = 0;
    virtual int num_assets() const = 0;
    virtual double x0() const = 0;

    virtual double rate(double x) const = 0;                   // r(x)
    virtual Eigen::VectorXd excess_return(double x) const = 0; // mu(x), n
    virtual Eigen::MatrixXd volatility(double x) const = 0;    // sigma(x), n x n
    virtual Eigen::VectorXd correlation(double x) const = 0;   // rho(x), n
    virtual double state_drift(double x) const = 0;            // b(x)
    virtual double state_diffusion(double x) const = 0;        // a(x)

    virtual std::pair<double, double> state_domain() const = 0;  // E

    // Diagnostic/solver grid covering the stationary mass plus tails.
    virtual std::vector<double> default_grid(int nodes) const = 0;

    // Project a simulated state into the coefficient-evaluation domain
    // (full-truncation clamp for square-root diffusions).
    virtual double clamp_state(double x) const { return x; }
};

// --- concrete models -------------------------------------------------------

class ConstantMarket final : public MarketModel {
public:
    ConstantMarket(double r, Eigen::VectorXd mu, Eigen::MatrixXd sigma,
                   Eigen::VectorXd rho, double x0 = 0.0);

    // scalar convenience (n = 1)
    ConstantMarket(double r, double mu, double sigma, double rho, double x0 = 0.0);

    MarketKind kind() const override { return MarketKind::Constant; }
    int num_assets() const override { return static_cast<int>(mu_.size()); }
    double x0() const override { return x0_; }
    double rate(double) const override { return r_; }
    Eigen::VectorXd excess_return(double) const override { return mu_; }
    Eigen::MatrixXd volatility(double) const override { return sigma_; }
    Eigen::VectorXd correlation(double) const override { return rho_; }
    double state_drift(double) const override { return 0.0; }
    double state_diffusion(double) const override { return 0.0; }
    std::pair<double, double> state_domain() const override;
    std::vector<double> default_grid(int nodes) const override;

private:
    double r_, x0_;
    Eigen::VectorXd mu_, rho_;
    Eigen::MatrixXd sigma_;
};

struct HestonParams {
    double b = 0.0;     // mean-reversion speed
    double ell = 0.0;   // mean-reversion level
    double a = 0.0;     // state vol-of-vol
    double r0 = 0.0, r1 = 0.0;
    Eigen::VectorXd lambda;       // market price of risk scale: lambda(x) = lambda sqrt(x)
    Eigen::MatrixXd sigma_scale;  // sigma(x) = sigma_scale * shape(x)
    enum class Shape { Sqrt, InvSqrt } shape = Shape::Sqrt;
    Eigen::VectorXd rho;
    double x0 = 0.0;
};

class HestonMarket final : public MarketModel {
public:
    explicit HestonMarket(HestonParams hp);

    MarketKind kind() const override { return MarketKind::Heston; }
    int num_assets() const override { return static_cast<int>(params_.lambda.size()); }
    double x0() const override { return params_.x0; }
    double rate(double x) const override { return params_.r0 + params_.r1 * x; }
    Eigen::VectorXd excess_return(double x) const override;
    Eigen::MatrixXd volatility(double x) const override;
    Eigen::VectorXd correlation(double) const override { return params_.rho; }
    double state_drift(double x) const override { return params_.b * (params_.ell - x); }
    double state_diffusion(double x) const override;
    std::pair<double, double> state_domain() const override { return {0.0, 1e300}; }
    std::vector<double> default_grid(int nodes) const override;
    double clamp_state(double x) const override;

    const HestonParams& params() const { return params_; }

private:
    HestonParams params_;
};

struct KimOmbergParams {
    double a = 0.0, b = 0.0;  // dX = -b X dt + a dW
    double r0 = 0.0, r1 = 0.0;
    Eigen::VectorXd lambda0, lambda1;  // mu(x) = sigma (lambda0 + lambda1 x)
    Eigen::MatrixXd sigma;
    Eigen::VectorXd rho;
    double x0 = 0.0;
};

class KimOmbergMarket final : public MarketModel {
public:
    explicit KimOmbergMarket(KimOmbergParams kp);

    MarketKind kind() const override { return MarketKind::KimOmberg; }
    int num_assets() const override { return static_cast<int>(params_.lambda0.size()); }
    double x0() const override { return params_.x0; }
    double rate(double x) const override { return params_.r0 + params_.r1 * x; }
    Eigen::VectorXd excess_return(double x) const override;
    Eigen::MatrixXd volatility(double) const override { return params_.sigma; }
    Eigen::VectorXd correlation(double) const override { return params_.rho; }
    double state_drift(double x) const override { return -params_.b * x; }
    double state_diffusion(double) const override { return params_.a; }
    std::pair<double, double> state_domain() const override { return {-1e300, 1e300}; }
    std::vector<double> default_grid(int nodes) const override;

    const KimOmbergParams& params() const { return params_; }

private:
    KimOmbergParams params_;
};

// --- derived coefficients ---------------------------------------------------

// Principal square root of I - rho rho'; satisfies
// rho rho' + rho_perp rho_perp' = I to 1e-12. Requires rho'rho <= 1.
Eigen::MatrixXd complete_correlation(const Eigen::VectorXd& rho);

// Everything the solvers need at one state value.
struct NodeCoefficients {
    double x = 0.0;
    double r = 0.0;
    double h = 0.0;     // (1-gamma) r + (1-gamma)/(2 gamma) mu' Sigma^{-1} mu
    double M = 0.0;     // 1 + (1-gamma)/gamma rho' sigma' Sigma^{-1} sigma rho
    double zlin = 0.0;  // (1-gamma)/gamma mu' Sigma^{-1} sigma rho
    double a = 0.0, b = 0.0;
    Eigen::VectorXd mu, rho;
    Eigen::MatrixXd sigma, Sigma, SigmaInv, Theta, rho_perp;
};

NodeCoefficients eval_node(const MarketModel& m, const EpsteinZinPreference& p,
                           double x);

struct DerivedCoefficients {
    std::vector<double> x;
    std::vector<NodeCoefficients> node;
    double h_max = 0.0;
    double h_min = 0.0;

    const NodeCoefficients& at(std::size_t j) const { return node[j]; }
};

// Tabulates Sigma, M, h, Theta, rho_perp on the grid; records the grid
// supremum of h; enforces the eigenvalue sandwich on M at every node.
DerivedCoefficients derive_coefficients(const MarketModel& m,
                                        const EpsteinZinPreference& p,
                                        const std::vector<double>& grid);

// --- assumption checkers ----------------------------------------------------

struct CheckItem {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct CheckReport {
    bool applicable = false;
    bool accepted = false;
    std::vector<CheckItem> items;
};

struct RegimeReport {
    Regime regime;
    bool duality_applicable;
    std::string label;
};

RegimeReport check_regime_duality(const EpsteinZinPreference& p);

// Explicit parameter restrictions for the square-root stochastic-volatility
// model: Feller, nonnegative effective short-rate slope, and a strictly
// positive risk-premium channel.
CheckReport check_heston(const HestonParams& hp, const EpsteinZinPreference& p);

// Explicit parameter restrictions for the mean-reverting linear-diffusion
// model.
CheckReport check_kim_omberg(const KimOmbergParams& kp, const EpsteinZinPreference& p);

struct DiagnosticReport {
    double sup = 0.0;
    bool bounded_above = false;
    std::vector<double> x;
    std::vector<double> values;  // generator applied to the probe function
};

// Evaluates the full nonlinear spatial generator on phi(x) = -c_under log x
// + c_over x over the grid and reports whether it is numerically bounded
// above (decreasing toward both ends of the probed domain).
DiagnosticReport lyapunov_diagnostic(const MarketModel& m,
                                     const EpsteinZinPreference& p, double c_under,
                                     double c_over, const std::vector<double>& grid);

}  // namespace ezdual
