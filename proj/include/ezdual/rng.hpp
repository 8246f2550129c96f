#pragma once

#include <cmath>
#include <cstdint>

namespace ezdual {

// splitmix64 step; the workhorse behind the per-path counter-based streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// stateless avalanche of a 64-bit key
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Deterministic per-stream RNG: stream `id` under `seed` always produces the
// same sequence, independent of how work is split across workers. Initial
// states are full hashes of (seed, id); seeding with raw multiples of the
// splitmix increment would alias neighboring streams into shifted copies of
// one another.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t id)
        : state_(mix64(seed + 0x9E3779B97F4A7C15ULL) ^
                 mix64((id + 1) * 0xD1B54A32D192ED03ULL)) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    // uniform in (0, 1]
    double next_uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    // standard normal via Box-Muller (pairs cached)
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925287 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace ezdual
