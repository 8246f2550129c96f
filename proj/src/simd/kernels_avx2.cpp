// AVX2 kernel variants. This translation unit is compiled with -mavx2 and is
// only reached through the runtime dispatcher when the CPU reports AVX2.
// Lane arithmetic mirrors the scalar reference exactly: plain mul/add (no
// FMA), horizontal reduction order (acc0+acc2)+(acc1+acc3), identical tails.

#include "ezdual/simd/kernels.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

#include <cmath>

namespace ezdual::simd {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);   // {acc0, acc1}
    __m128d hi = _mm256_extractf128_pd(v, 1); // {acc2, acc3}
    __m128d s = _mm_add_pd(lo, hi);           // {acc0+acc2, acc1+acc3}
    return _mm_cvtsd_f64(s) + _mm_cvtsd_f64(_mm_unpackhi_pd(s, s));
}

double sum_avx2(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double r = hsum(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d p = _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        acc = _mm256_add_pd(acc, p);
    }
    double r = hsum(acc);
    for (; i < n; ++i) r += x[i] * y[i];
    return r;
}

double sumsq_avx2(const double* x, std::size_t n) { return dot_avx2(x, x, n); }

double max_abs_avx2(const double* x, std::size_t n) {
    const __m256d sign_mask = _mm256_set1_pd(-0.0);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_andnot_pd(sign_mask, _mm256_loadu_pd(x + i));
        acc = _mm256_max_pd(acc, v);
    }
    __m128d lo = _mm256_castpd256_pd128(acc);
    __m128d hi = _mm256_extractf128_pd(acc, 1);
    __m128d m2 = _mm_max_pd(lo, hi);
    double m = std::fmax(_mm_cvtsd_f64(m2), _mm_cvtsd_f64(_mm_unpackhi_pd(m2, m2)));
    for (; i < n; ++i) m = std::fmax(m, std::fabs(x[i]));
    return m;
}

void add_sum_scaled_avx2(double* dst, const double* a, const double* b,
                         double s, std::size_t n) {
    const __m256d vs = _mm256_set1_pd(s);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d t = _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        t = _mm256_mul_pd(t, vs);
        _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(dst + i), t));
    }
    for (; i < n; ++i) dst[i] += (a[i] + b[i]) * s;
}

}  // namespace

const Kernels* avx2_kernels_impl() {
    static const Kernels k = {
        "avx2",
        sum_avx2,
        dot_avx2,
        sumsq_avx2,
        max_abs_avx2,
        add_sum_scaled_avx2,
    };
    return &k;
}

}  // namespace ezdual::simd

#else

namespace ezdual::simd {
const Kernels* avx2_kernels_impl() { return nullptr; }
}  // namespace ezdual::simd

#endif
