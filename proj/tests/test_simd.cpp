#include <doctest.h>

#include <cstring>
#include <string>
#include <vector>

#include "ezdual/rng.hpp"
#include "ezdual/simd/kernels.hpp"

using namespace ezdual;

namespace {

std::vector<double> random_array(std::size_t n, std::uint64_t stream) {
    RngStream rng(0xC0FFEE, stream);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.next_normal() * (1.0 + rng.next_uniform());
    return v;
}

bool bit_equal(double a, double b) {
    return std::memcmp(&a, &b, sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("avx2 kernels match the scalar reference bit for bit") {
    const simd::Kernels* avx2 = simd::avx2_kernels();
    if (!avx2) {
        MESSAGE("AVX2 not supported on this CPU; dispatch falls back to scalar");
        CHECK(std::string(simd::active().name) == "scalar");
        return;
    }
    const simd::Kernels& ref = simd::scalar_reference();

    // lengths straddling the 4-lane width, including awkward tails
    for (std::size_t n : {0, 1, 2, 3, 4, 5, 7, 8, 15, 64, 1001, 4096, 10007}) {
        const auto x = random_array(n, 2 * n);
        const auto y = random_array(n, 2 * n + 1);

        CHECK(bit_equal(ref.sum(x.data(), n), avx2->sum(x.data(), n)));
        CHECK(bit_equal(ref.dot(x.data(), y.data(), n),
                        avx2->dot(x.data(), y.data(), n)));
        CHECK(bit_equal(ref.sumsq(x.data(), n), avx2->sumsq(x.data(), n)));
        CHECK(bit_equal(ref.max_abs(x.data(), n), avx2->max_abs(x.data(), n)));

        auto t1 = y, t2 = y;
        ref.add_sum_scaled(t1.data(), x.data(), y.data(), 0.0025, n);
        avx2->add_sum_scaled(t2.data(), x.data(), y.data(), 0.0025, n);
        CHECK(t1 == t2);
    }
}

TEST_CASE("kernel reductions agree with naive long-double accumulation") {
    const auto x = random_array(5000, 7);
    const auto y = random_array(5000, 8);
    long double s = 0, d = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        s += x[i];
        d += x[i] * y[i];
    }
    const auto& k = simd::active();
    CHECK(k.sum(x.data(), x.size()) ==
          doctest::Approx(static_cast<double>(s)).epsilon(1e-13));
    CHECK(k.dot(x.data(), y.data(), x.size()) ==
          doctest::Approx(static_cast<double>(d)).epsilon(1e-13));
}

TEST_CASE("mean and variance helpers") {
    std::vector<double> v{1.0, 2.0, 3.0, 4.0, 5.0};
    CHECK(simd::mean(v.data(), v.size()) == doctest::Approx(3.0));
    CHECK(simd::variance(v.data(), v.size()) == doctest::Approx(2.5));
}
