#pragma once

#include <cstddef>
#include <cstdint>

namespace stnn {

/// Arithmetic-operation counter used by the structured matvec paths and the
/// network forward passes.
///
/// Counting convention (all counts are exact integers):
///   - dense m x k matvec           -> 2*m*k   (mults m*k, adds m*k)
///   - diagonal k x k matvec        -> k mults
///   - vector add/sub of length k   -> k adds
///   - permutations, selections, anti-identity -> free
///   - bias adds counted only when `count_bias_adds` is set
struct FlopCounter {
    std::uint64_t mults = 0;
    std::uint64_t adds = 0;
    bool dense_matvec_2mk = true;
    bool count_bias_adds = false;

    void reset() { mults = 0; adds = 0; }

    std::uint64_t total() const { return mults + adds; }

    void add_mults(std::uint64_t k) { mults += k; }
    void add_adds(std::uint64_t k) { adds += k; }

    void add_dense_matvec(std::size_t m, std::size_t k) {
        // 2mk convention: mk mults and mk adds regardless of the m(k-1)
        // additions actually executed.
        mults += static_cast<std::uint64_t>(m) * k;
        adds += static_cast<std::uint64_t>(m) * k;
    }

    void add_diagonal_matvec(std::size_t k) { mults += k; }

    void add_vector_add(std::size_t k) { adds += k; }

    void add_bias(std::size_t k) {
        if (count_bias_adds) adds += k;
    }
};

} // namespace stnn
