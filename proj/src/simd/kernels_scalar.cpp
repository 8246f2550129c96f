#include "ezdual/simd/kernels.hpp"

#include <cmath>
#include <vector>

// Scalar reference kernels. Reductions run four independent accumulators in
// the same lane layout as the AVX2 variant and combine them in the same
// order, so both variants produce identical bits.

namespace ezdual::simd {
namespace {

double sum_scalar(const double* x, std::size_t n) {
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 += x[i];
        acc1 += x[i + 1];
        acc2 += x[i + 2];
        acc3 += x[i + 3];
    }
    double r = (acc0 + acc2) + (acc1 + acc3);
    for (; i < n; ++i) r += x[i];
    return r;
}

double dot_scalar(const double* x, const double* y, std::size_t n) {
    double acc0 = 0.0, acc1 = 0.0, acc2 = 0.0, acc3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 += x[i] * y[i];
        acc1 += x[i + 1] * y[i + 1];
        acc2 += x[i + 2] * y[i + 2];
        acc3 += x[i + 3] * y[i + 3];
    }
    double r = (acc0 + acc2) + (acc1 + acc3);
    for (; i < n; ++i) r += x[i] * y[i];
    return r;
}

double sumsq_scalar(const double* x, std::size_t n) { return dot_scalar(x, x, n); }

double max_abs_scalar(const double* x, std::size_t n) {
    double m0 = 0.0, m1 = 0.0, m2 = 0.0, m3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        m0 = std::fmax(m0, std::fabs(x[i]));
        m1 = std::fmax(m1, std::fabs(x[i + 1]));
        m2 = std::fmax(m2, std::fabs(x[i + 2]));
        m3 = std::fmax(m3, std::fabs(x[i + 3]));
    }
    double m = std::fmax(std::fmax(m0, m2), std::fmax(m1, m3));
    for (; i < n; ++i) m = std::fmax(m, std::fabs(x[i]));
    return m;
}

void add_sum_scaled_scalar(double* dst, const double* a, const double* b,
                           double s, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += (a[i] + b[i]) * s;
}

}  // namespace

const Kernels& scalar_reference() {
    static const Kernels k = {
        "scalar",
        sum_scalar,
        dot_scalar,
        sumsq_scalar,
        max_abs_scalar,
        add_sum_scaled_scalar,
    };
    return k;
}

double mean(const double* x, std::size_t n) {
    return n == 0 ? 0.0 : active().sum(x, n) / static_cast<double>(n);
}

double variance(const double* x, std::size_t n) {
    // two-pass form; the naive E[x^2] - m^2 cancels catastrophically on
    // near-constant data
    const double m = mean(x, n);
    std::vector<double> centered(n);
    for (std::size_t i = 0; i < n; ++i) centered[i] = x[i] - m;
    return active().sumsq(centered.data(), n) / static_cast<double>(n - 1);
}

}  // namespace ezdual::simd
