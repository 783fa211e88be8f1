#pragma once

#include <cstdint>
#include <random>

namespace stnn {

/// splitmix64 step; used to derive independent stream seeds from
/// (seed, index) pairs so that parallel generation order never matters.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(splitmix64(seed) ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
}

/// Deterministic uniform generator. The mapping from raw 64-bit draws to
/// doubles is spelled out here instead of relying on
/// std::uniform_real_distribution, whose output is implementation-defined.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    static Rng stream(std::uint64_t seed, std::uint64_t index) {
        return Rng(derive_stream(seed, index));
    }

    /// Uniform in [0, 1) with 53-bit resolution.
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n) {
        // Rejection-free modulo is fine here: n is tiny relative to 2^64.
        return static_cast<std::size_t>(gen_() % n);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 gen_;
};

} // namespace stnn
