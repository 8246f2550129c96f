#include "ezdual/simd/kernels.hpp"

namespace ezdual::simd {

const Kernels* avx2_kernels_impl();  // defined in kernels_avx2.cpp

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

const Kernels* avx2_kernels() {
    if (!avx2_supported()) return nullptr;
    return avx2_kernels_impl();
}

const Kernels& active() {
    static const Kernels* chosen = [] {
        if (const Kernels* k = avx2_kernels()) return k;
        return &scalar_reference();
    }();
    return *chosen;
}

}  // namespace ezdual::simd
