#pragma once

#include <cstddef>

namespace ezdual::simd {

// Data-parallel inner-loop kernels over double arrays. Two implementations
// exist: a scalar reference and an AVX2 variant, selected once at startup.
// Both use the same 4-lane accumulation structure and the build disables
// FP contraction, so their results are bit-identical; the equivalence tests
// assert exact equality.
struct Kernels {
    const char* name;

    double (*sum)(const double* x, std::size_t n);
    double (*dot)(const double* x, const double* y, std::size_t n);
    double (*sumsq)(const double* x, std::size_t n);
    double (*max_abs)(const double* x, std::size_t n);

    // dst[i] += (a[i] + b[i]) * s   (trapezoid accumulation step)
    void (*add_sum_scaled)(double* dst, const double* a, const double* b,
                           double s, std::size_t n);
};

// Kernel set chosen at first use (AVX2 when the CPU supports it).
const Kernels& active();

// Always the scalar reference implementation.
const Kernels& scalar_reference();

// AVX2 implementation, or nullptr when unsupported on this CPU.
const Kernels* avx2_kernels();

bool avx2_supported();

double mean(const double* x, std::size_t n);
// Unbiased sample variance (n >= 2).
double variance(const double* x, std::size_t n);

}  // namespace ezdual::simd
