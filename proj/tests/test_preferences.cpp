#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "ezdual/preferences.hpp"
#include "ezdual/rng.hpp"

using namespace ezdual;

namespace {

const EpsteinZinPreference kBoth(0.1, 2.0, 2.0);  // theta = -2
const EpsteinZinPreference kLow(0.05, 0.5, 4.0);  // theta = 2/3

// Test-side conjugate oracle, independent of the library's scan: plain grid
// search over a log-spaced range followed by ternary refinement.
double grid_max(const std::function<double(double)>& f, double lo, double hi,
                int pts = 4000) {
    double best = -1e300;
    int best_i = 0;
    const double llo = std::log(lo), lhi = std::log(hi);
    for (int i = 0; i < pts; ++i) {
        const double v = f(std::exp(llo + (lhi - llo) * i / (pts - 1)));
        if (v > best) {
            best = v;
            best_i = i;
        }
    }
    double a = llo + (lhi - llo) * std::max(0, best_i - 1) / (pts - 1);
    double b = llo + (lhi - llo) * std::min(pts - 1, best_i + 1) / (pts - 1);
    for (int it = 0; it < 200; ++it) {
        const double m1 = a + (b - a) / 3, m2 = b - (b - a) / 3;
        if (f(std::exp(m1)) < f(std::exp(m2)))
            a = m1;
        else
            b = m2;
    }
    return std::max(best, f(std::exp(0.5 * (a + b))));
}

double rel(double got, double want) {
    return std::fabs(got - want) / (1.0 + std::fabs(want));
}

}  // namespace

TEST_CASE("theta and regime classification") {
    CHECK(kBoth.theta() == doctest::Approx(-2.0).epsilon(1e-15));
    CHECK(kBoth.regime() == Regime::BothGT1);
    CHECK(kLow.theta() == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(kLow.regime() == Regime::GammaLT1);

    const EpsteinZinPreference crra(0.05, 2.0, 0.5);  // gamma*psi = 1
    CHECK(crra.regime() == Regime::Crra);
    CHECK(crra.theta() == doctest::Approx(1.0).epsilon(1e-12));

    const EpsteinZinPreference unsupported(0.05, 0.5, 1.5);  // gamma*psi = 0.75
    CHECK(unsupported.regime() == Regime::Unsupported);

    CHECK_THROWS_AS(EpsteinZinPreference(-0.1, 2.0, 2.0), DomainError);
    CHECK_THROWS_AS(EpsteinZinPreference(0.1, 1.0, 2.0), DomainError);
    CHECK_THROWS_AS(EpsteinZinPreference(0.1, 2.0, 1.0), DomainError);
}

TEST_CASE("utility sign constraint") {
    CHECK(UtilitySign::of(kBoth).sign == -1.0);
    CHECK(UtilitySign::of(kLow).sign == 1.0);
    CHECK(UtilitySign::of(kBoth).admits(-3.0));
    CHECK_FALSE(UtilitySign::of(kBoth).admits(0.5));
    CHECK(kLow.admits_utility(0.5));
    CHECK_FALSE(kLow.admits_utility(-0.5));
}

TEST_CASE("aggregator closed-form values") {
    // the two terms cancel at (c,u) = (1,-1)
    CHECK(aggregator_f(kBoth, 1.0, -1.0) == doctest::Approx(0.0).epsilon(1e-15));
    // frozen high-precision evaluation
    CHECK(aggregator_f(kLow, 2.0, 1.0) ==
          doctest::Approx(0.12522761533369614).epsilon(1e-14));
    // CRRA limit: value power drops out
    const EpsteinZinPreference crra(0.07, 2.0, 0.5);
    const double expect = 0.07 / (1.0 - 2.0) - 0.07 * (-0.4);
    CHECK(aggregator_f(crra, 1.0, -0.4) == doctest::Approx(expect).epsilon(1e-14));

    CHECK_THROWS_AS(aggregator_f(kBoth, -1.0, -1.0), DomainError);
    CHECK_THROWS_AS(aggregator_f(kBoth, 1.0, 1.0), DomainError);  // wrong sign
}

TEST_CASE("aggregator utility derivative") {
    CHECK(aggregator_fu(kBoth, 1.0, -1.0) == doctest::Approx(0.1).epsilon(1e-14));
    const EpsteinZinPreference crra(0.07, 2.0, 0.5);
    CHECK(aggregator_fu(crra, 3.0, -0.2) == doctest::Approx(0.07).epsilon(1e-15));

    // central finite difference of f in u
    for (const auto& p : {kBoth, kLow}) {
        const double sgn = p.utility_sign();
        for (double c : {0.2, 1.0, 4.0})
            for (double au : {0.3, 1.0, 5.0}) {
                const double u = sgn * au;
                const double h = 1e-6 * au;
                const double fd =
                    (aggregator_f(p, c, u + h) - aggregator_f(p, c, u - h)) / (2.0 * h);
                CHECK(rel(-aggregator_fu(p, c, u), fd) < 1e-5);
            }
    }
}

TEST_CASE("felicity closed form and boundary behavior") {
    CHECK(felicity_F(kBoth, 1.0, 0.1) == doctest::Approx(-0.1).epsilon(1e-13));
    CHECK_THROWS_AS(felicity_F(kBoth, 1.0, kBoth.nu_floor()), DomainError);
    CHECK_THROWS_AS(felicity_F(kBoth, 1.0, kBoth.nu_floor() - 0.01), DomainError);

    // boundary: F -> 0 from below (gamma > 1); tail: F -> -infinity
    CHECK(felicity_F(kBoth, 1.0, kBoth.nu_floor() + 1e-9) < 0.0);
    CHECK(std::fabs(felicity_F(kBoth, 1.0, kBoth.nu_floor() + 1e-9)) < 1e-12);
    CHECK(felicity_F(kBoth, 1.0, 1e4) < -1e9);
    // gamma < 1: F is nonnegative on its domain
    CHECK(felicity_F(kLow, 1.0, kLow.nu_floor() + 1e-9) > 0.0);

    // homogeneity in consumption: F(l c, nu) = l^{1-gamma} F(c, nu)
    for (const auto& p : {kBoth, kLow})
        for (double l : {0.5, 2.0, 7.0}) {
            const double nu = p.nu_floor() + 0.5 * p.delta();
            CHECK(rel(felicity_F(p, l * 1.3, nu),
                      std::pow(l, 1.0 - p.gamma()) * felicity_F(p, 1.3, nu)) < 1e-14);
        }
}

TEST_CASE("felicity recovers the aggregator conjugate (grid oracle)") {
    for (const auto& p : {kBoth, kLow}) {
        const double sgn = p.utility_sign();
        for (double c : {0.5, 1.0, 3.0})
            for (double au : {0.4, 1.0, 2.5}) {
                const double u = sgn * au;
                const double got = grid_max(
                    [&](double s) {
                        return felicity_F(p, c, p.nu_floor() + s) -
                               (p.nu_floor() + s) * u;
                    },
                    1e-8, 1e3);
                CHECK(rel(got, aggregator_f(p, c, u)) < 1e-5);
            }
    }
}

TEST_CASE("bequest utility and its conjugate") {
    CHECK(bequest_U(kBoth, 1.0) == doctest::Approx(-1.0));
    CHECK(conjugate_V(kBoth, 1.0) == doctest::Approx(-2.0));
    CHECK(conjugate_V(kLow, 4.0) == doctest::Approx(0.25).epsilon(1e-14));
    CHECK_THROWS_AS(bequest_U(kBoth, 0.0), DomainError);
    CHECK_THROWS_AS(conjugate_V(kBoth, -1.0), DomainError);

    // conjugacy: V_T(d) = sup_c (U_T(c) - d c)
    for (const auto& p : {kBoth, kLow})
        for (double d : {0.3, 1.0, 5.0}) {
            const double got =
                grid_max([&](double c) { return bequest_U(p, c) - d * c; }, 1e-7, 1e7);
            CHECK(rel(got, conjugate_V(p, d)) < 1e-5);
        }
}

TEST_CASE("dual felicity closed form") {
    CHECK(dual_G(kBoth, 1.0, 0.1) ==
          doctest::Approx(-0.63245553203367587).epsilon(1e-13));

    // homogeneity in the density argument
    for (const auto& p : {kBoth, kLow}) {
        const double nu = p.nu_floor() + p.delta();
        CHECK(rel(dual_G(p, 2.0, nu),
                  std::pow(2.0, (p.gamma() - 1.0) / p.gamma()) * dual_G(p, 1.0, nu)) <
              1e-14);
    }

    // conjugate of the felicity in consumption
    for (const auto& p : {kBoth, kLow})
        for (double d : {0.4, 1.0, 2.0}) {
            const double nu = p.nu_floor() + 0.7 * p.delta();
            const double got = grid_max(
                [&](double c) { return felicity_F(p, c, nu) - d * c; }, 1e-7, 1e7);
            CHECK(rel(got, dual_G(p, d, nu)) < 1e-5);
        }

    // concavity in nu when gamma*psi > 1 (numerical second difference)
    for (const auto& p : {kBoth, kLow})
        for (double s : {0.02, 0.1, 0.5}) {
            const double nu = p.nu_floor() + s;
            const double h = 1e-4 * s;
            const double d2 = dual_G(p, 1.0, nu + h) - 2.0 * dual_G(p, 1.0, nu) +
                              dual_G(p, 1.0, nu - h);
            CHECK(d2 <= 1e-12);
        }
}

TEST_CASE("dual generator closed form and CRRA reduction") {
    CHECK(dual_g(kBoth, 1.0, -1.0) == doctest::Approx(-0.19).epsilon(1e-13));

    // time-additive reduction at gamma*psi = 1
    const EpsteinZinPreference crra(0.05, 2.0, 0.5);
    const double d = 1.3, v = -0.7;
    const double expect =
        std::pow(0.05, 0.5) * (2.0 / (1.0 - 2.0)) * std::pow(d, 0.5) - 0.05 * v;
    CHECK(dual_g(crra, d, v) == doctest::Approx(expect).epsilon(1e-14));
    CHECK(dual_gv(crra, d, v) == doctest::Approx(0.05).epsilon(1e-15));

    // conjugate of the dual felicity in nu
    for (const auto& p : {kBoth, kLow}) {
        const double sgn = p.utility_sign();
        for (double dd : {0.5, 1.0, 2.0})
            for (double av : {0.4, 1.0, 3.0}) {
                const double vv = sgn * av;
                const double got = grid_max(
                    [&](double s) {
                        return dual_G(p, dd, p.nu_floor() + s) - (p.nu_floor() + s) * vv;
                    },
                    1e-8, 1e3);
                CHECK(rel(got, dual_g(p, dd, vv)) < 1e-5);
            }
    }
}

TEST_CASE("dual generator derivative and admissibility floor") {
    for (const auto& p : {kBoth, kLow}) {
        const double sgn = p.utility_sign();
        RngStream rng(11, 0);
        for (int k = 0; k < 50; ++k) {
            const double d = std::exp(rng.next_normal());
            const double v = sgn * std::exp(rng.next_normal());
            const double h = 1e-6 * std::fabs(v);
            const double fd = (dual_g(p, d, v + h) - dual_g(p, d, v - h)) / (2.0 * h);
            CHECK(rel(-dual_gv(p, d, v), fd) < 1e-5);
            // the induced discount rate stays in the admissible class
            CHECK(dual_gv(p, d, v) >= p.nu_floor());
        }
    }
}

TEST_CASE("aggregator curvature signs") {
    auto second_diff = [](const std::function<double(double)>& f, double x, double h) {
        return f(x + h) - 2.0 * f(x) + f(x - h);
    };
    // concave in c always; convex in u iff gamma*psi > 1
    for (const auto& p : {kBoth, kLow}) {
        const double u = p.utility_sign() * 0.8;
        for (double c : {0.5, 1.0, 2.0}) {
            CHECK(second_diff([&](double cc) { return aggregator_f(p, cc, u); }, c,
                              1e-4) <= 1e-12);
            CHECK(second_diff([&](double uu) { return aggregator_f(p, c, uu); }, u,
                              1e-4) >= -1e-12);
        }
    }
    // gamma*psi < 1: concave in u
    const EpsteinZinPreference low(0.05, 0.5, 1.5);
    CHECK(second_diff([&](double uu) { return aggregator_f(low, 1.0, uu); }, 0.8,
                      1e-4) <= 1e-12);
}

TEST_CASE("library conjugacy scan stays within tolerance") {
    for (const auto& p : {kBoth, kLow}) {
        const auto res = conjugacy_residuals(p, 60, 424242);
        CHECK(res.max() <= 1e-5);
    }
    CHECK_THROWS_AS(conjugacy_residuals(EpsteinZinPreference(0.05, 2.0, 0.5), 10, 1),
                    DomainError);
}

TEST_CASE("homotheticity of the aggregator") {
    // f(l c, l^{1-gamma} u) = l^{1-gamma} f(c, u)
    for (const auto& p : {kBoth, kLow}) {
        const double u = p.utility_sign() * 0.6;
        for (double l : {0.5, 3.0}) {
            const double scaled =
                aggregator_f(p, l * 1.2, std::pow(l, 1.0 - p.gamma()) * u);
            CHECK(rel(scaled, std::pow(l, 1.0 - p.gamma()) * aggregator_f(p, 1.2, u)) <
                  1e-13);
        }
    }
}
