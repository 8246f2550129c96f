#include <doctest.h>

#include <cmath>

#include "ezdual/market.hpp"
#include "ezdual/rng.hpp"

using namespace ezdual;

namespace {

const EpsteinZinPreference kBoth(0.05, 2.0, 2.0);
const EpsteinZinPreference kLow(0.05, 0.5, 4.0);

HestonParams accepted_heston() {
    HestonParams hp;
    hp.b = 2.0;
    hp.ell = 0.09;
    hp.a = 0.3;
    hp.r0 = 0.02;
    hp.r1 = 0.0;
    hp.lambda = Eigen::VectorXd::Constant(1, 0.5);
    hp.sigma_scale = Eigen::MatrixXd::Constant(1, 1, 1.0);
    hp.rho = Eigen::VectorXd::Constant(1, -0.5);
    hp.x0 = 0.09;
    return hp;
}

KimOmbergParams accepted_kim_omberg() {
    KimOmbergParams kp;
    kp.a = 0.3;
    kp.b = 1.0;
    kp.r0 = 0.02;
    kp.r1 = 0.0;
    kp.lambda0 = Eigen::VectorXd::Constant(1, 0.1);
    kp.lambda1 = Eigen::VectorXd::Constant(1, 0.3);
    kp.sigma = Eigen::MatrixXd::Constant(1, 1, 0.2);
    kp.rho = Eigen::VectorXd::Constant(1, -0.4);
    kp.x0 = 0.0;
    return kp;
}

}  // namespace

TEST_CASE("correlation completion, scalar cases") {
    const auto p1 = complete_correlation(Eigen::VectorXd::Constant(1, 0.5));
    CHECK(p1(0, 0) == doctest::Approx(std::sqrt(0.75)).epsilon(1e-12));
    const auto p2 = complete_correlation(Eigen::VectorXd::Constant(1, 1.0));
    CHECK(p2(0, 0) == doctest::Approx(0.0));
    CHECK_THROWS_AS(complete_correlation(Eigen::VectorXd::Constant(1, 1.1)),
                    DomainError);
}

TEST_CASE("correlation completion, matrix case") {
    Eigen::VectorXd rho(2);
    rho << 0.3, 0.4;
    const auto perp = complete_correlation(rho);
    const Eigen::MatrixXd recon =
        rho * rho.transpose() + perp * perp.transpose();
    CHECK((recon - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    // principal square root is symmetric PSD
    CHECK((perp - perp.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(perp);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-14);
}

TEST_CASE("correlation completion identity holds for random directions") {
    RngStream rng(99, 0);
    for (int k = 0; k < 1000; ++k) {
        const int n = 1 + static_cast<int>(rng.next_u64() % 4);
        Eigen::VectorXd rho(n);
        for (int i = 0; i < n; ++i) rho[i] = rng.next_normal();
        const double norm = rho.norm();
        const double scale = rng.next_uniform();  // in (0,1]
        rho *= scale / std::max(norm, 1e-12);
        const auto perp = complete_correlation(rho);
        const Eigen::MatrixXd recon = rho * rho.transpose() + perp * perp.transpose();
        CHECK((recon - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("derived coefficients on a constant market") {
    const ConstantMarket m(0.02, 0.05, 0.2, 0.5);
    const auto dc = derive_coefficients(m, kBoth, m.default_grid(11));
    CHECK(dc.node[5].h == doctest::Approx(-0.035625).epsilon(1e-14));
    CHECK(dc.h_max == doctest::Approx(-0.035625).epsilon(1e-14));
    // M = 1 + (1-gamma)/gamma rho^2 for invertible scalar sigma
    CHECK(dc.node[0].M == doctest::Approx(1.0 - 0.5 * 0.25).epsilon(1e-14));
    // Theta is the identity for square invertible sigma
    CHECK(dc.node[0].Theta(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

    // mu = 0 kills the quadratic term
    const ConstantMarket m0(0.02, 0.0, 0.2, 0.5);
    const auto dc0 = derive_coefficients(m0, kBoth, m0.default_grid(3));
    CHECK(dc0.node[0].h == doctest::Approx((1.0 - 2.0) * 0.02).epsilon(1e-14));
}

TEST_CASE("quadratic-form sandwich for M") {
    RngStream rng(7, 1);
    for (const auto& p : {kBoth, kLow}) {
        const double lo = std::min(1.0, 1.0 / p.gamma());
        const double hi = std::max(1.0, 1.0 / p.gamma());
        for (int k = 0; k < 100; ++k) {
            double r = 2.0 * rng.next_uniform() - 1.0;
            const ConstantMarket m(0.01, 0.04, 0.25, r);
            const auto nc = eval_node(m, p, 0.0);
            CHECK(nc.M >= lo - 1e-12);
            CHECK(nc.M <= hi + 1e-12);
            // scalar loading: the sandwich is exactly the M bound
            const double z = rng.next_normal();
            CHECK(z * nc.M * z >= lo * z * z - 1e-12);
            CHECK(z * nc.M * z <= hi * z * z + 1e-12);
        }
    }
}

TEST_CASE("heston h is affine in the state") {
    const HestonMarket m(accepted_heston());
    const auto grid = m.default_grid(64);
    const auto dc = derive_coefficients(m, kBoth, grid);
    // h(x) = (1-gamma) r0 + [(1-gamma) r1 + (1-gamma)/(2 gamma) lambda'Theta lambda] x
    const double c0 = (1.0 - 2.0) * 0.02;
    const double c1 = (1.0 - 2.0) / (2.0 * 2.0) * 0.25;
    for (std::size_t j = 0; j < grid.size(); j += 7)
        CHECK(dc.node[j].h == doctest::Approx(c0 + c1 * grid[j]).epsilon(1e-12));
}

TEST_CASE("kim-omberg h is quadratic in the state") {
    const KimOmbergMarket m(accepted_kim_omberg());
    const auto grid = m.default_grid(33);
    const auto dc = derive_coefficients(m, kBoth, grid);
    for (std::size_t j = 0; j < grid.size(); j += 5) {
        const double lam = 0.1 + 0.3 * grid[j];
        const double want = (1.0 - 2.0) * 0.02 + (1.0 - 2.0) / 4.0 * lam * lam;
        CHECK(dc.node[j].h == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("regime reports") {
    CHECK(check_regime_duality(kLow).regime == Regime::GammaLT1);
    CHECK(check_regime_duality(kLow).duality_applicable);
    CHECK(check_regime_duality(kBoth).regime == Regime::BothGT1);
    const auto crra = check_regime_duality(EpsteinZinPreference(0.05, 2.0, 0.5));
    CHECK(crra.regime == Regime::Crra);
    CHECK_FALSE(crra.duality_applicable);
    CHECK(crra.label.find("inapplicable") != std::string::npos);
}

TEST_CASE("heston checker truth table") {
    // accepted baseline: 0.18 > 0.045, slope 0.0625 >= 0, quad channel on
    auto hp = accepted_heston();
    auto rep = check_heston(hp, kBoth);
    CHECK(rep.applicable);
    CHECK(rep.accepted);
    for (const auto& it : rep.items) CHECK(it.pass);

    // no risk-premium channel at all
    hp = accepted_heston();
    hp.lambda.setZero();
    hp.r1 = 0.0;
    rep = check_heston(hp, kBoth);
    CHECK_FALSE(rep.accepted);
    CHECK(rep.items[2].detail.find("neither") != std::string::npos);

    // boundary mean reversion fails the strict inequality
    hp = accepted_heston();
    hp.b = 0.5;
    hp.ell = 0.09;  // b*ell = 0.045 = a^2/2 exactly
    rep = check_heston(hp, kBoth);
    CHECK_FALSE(rep.accepted);
    CHECK_FALSE(rep.items[0].pass);

    // wrong preference regime
    rep = check_heston(accepted_heston(), kLow);
    CHECK_FALSE(rep.applicable);
}

TEST_CASE("kim-omberg checker truth table") {
    // state-dependent risk premium switches condition (ii) on
    auto kp = accepted_kim_omberg();
    auto rep = check_kim_omberg(kp, kBoth);
    CHECK(rep.applicable);
    CHECK(rep.accepted);

    // lambda1 = 0, r1 = 0: accepted through mean reversion alone
    kp.lambda1.setZero();
    rep = check_kim_omberg(kp, kBoth);
    CHECK(rep.accepted);
    CHECK(rep.items[0].pass);
    CHECK_FALSE(rep.items[1].pass);

    // lambda1 = 0 with a state-dependent rate: both conditions fail
    kp.r1 = 0.01;
    rep = check_kim_omberg(kp, kBoth);
    CHECK_FALSE(rep.accepted);
}

TEST_CASE("lyapunov diagnostic on the square-root model") {
    const HestonMarket m(accepted_heston());
    const auto grid = m.default_grid(256);

    // small probe coefficients: bounded above, decreasing toward both ends
    auto rep = lyapunov_diagnostic(m, kBoth, 0.05, 0.05, grid);
    CHECK(rep.bounded_above);
    CHECK(std::isfinite(rep.sup));

    // c_under large enough to flip the 1/x coefficient positive:
    // a^2 c/2 + a^2 c^2 M/2 > b ell c  <=>  c > (2 b ell / a^2 - 1)/M
    const auto nc = eval_node(m, kBoth, m.x0());
    const double c_under = 1.1 * (2.0 * 2.0 * 0.09 / 0.09 - 1.0) / nc.M;
    rep = lyapunov_diagnostic(m, kBoth, c_under, 0.05, grid);
    CHECK_FALSE(rep.bounded_above);
    CHECK(rep.values.front() > rep.values[2]);  // climbing toward x -> 0

    // degenerate constant state: generator reduces to the constant h
    const ConstantMarket cm(0.02, 0.05, 0.2, 0.5, /*x0=*/1.0);
    std::vector<double> cgrid{0.5, 0.75, 1.0, 1.5, 2.0};
    rep = lyapunov_diagnostic(cm, kBoth, 0.1, 0.1, cgrid);
    CHECK(rep.bounded_above);
    for (double v : rep.values) CHECK(v == doctest::Approx(-0.035625).epsilon(1e-12));

    CHECK_THROWS_AS(lyapunov_diagnostic(cm, kBoth, -1.0, 0.1, cgrid), DomainError);
}

TEST_CASE("checkers are pure") {
    const auto hp = accepted_heston();
    const auto r1 = check_heston(hp, kBoth);
    const auto r2 = check_heston(hp, kBoth);
    CHECK(r1.accepted == r2.accepted);
    REQUIRE(r1.items.size() == r2.items.size());
    for (std::size_t i = 0; i < r1.items.size(); ++i) {
        CHECK(r1.items[i].pass == r2.items[i].pass);
        CHECK(r1.items[i].detail == r2.items[i].detail);
    }
}

TEST_CASE("model construction guards") {
    CHECK_THROWS_AS((ConstantMarket{0.02, 0.05, 0.2, 1.5}), DomainError);
    auto hp = accepted_heston();
    hp.a = 0.0;
    CHECK_THROWS_AS((HestonMarket{hp}), DomainError);
    auto kp = accepted_kim_omberg();
    kp.b = 0.0;
    CHECK_THROWS_AS((KimOmbergMarket{kp}), DomainError);
}

TEST_CASE("inverse square-root volatility shape keeps h affine") {
    auto hp = accepted_heston();
    hp.shape = HestonParams::Shape::InvSqrt;
    hp.sigma_scale = Eigen::MatrixXd::Constant(1, 1, 0.09);  // sigma(x)=0.09/sqrt(x)
    const HestonMarket m(hp);
    const auto grid = m.default_grid(17);
    const auto dc = derive_coefficients(m, kBoth, grid);
    // mu = sigma lambda sqrt(x), so mu'Sigma^{-1}mu = lambda'Theta lambda x as before
    const double c0 = (1.0 - 2.0) * 0.02;
    const double c1 = (1.0 - 2.0) / 4.0 * 0.25;
    for (std::size_t j = 0; j < grid.size(); j += 3)
        CHECK(dc.node[j].h == doctest::Approx(c0 + c1 * grid[j]).epsilon(1e-12));
}
