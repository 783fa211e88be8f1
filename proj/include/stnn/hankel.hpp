#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "stnn/flops.hpp"
#include "stnn/linalg.hpp"

namespace stnn {

// ---------------------------------------------------------------------------
// Per-symmetric Hankel operator built from n time-delay samples.
//
// Dense entry rule: H[i][j] = samples[reflect(i+j)] with
//   reflect(s) = s              for s <= n-1,
//   reflect(s) = 2(n-1) - s     otherwise,
// so every row reads the delay series forward until the anti-diagonal and
// mirrored past it. The operator satisfies I~ H I~ = H^T exactly.
// ---------------------------------------------------------------------------

/// Circulant embedding of the operator: an r x r circulant (r = 2 * n_pad,
/// n_pad the next power of two >= n) whose top-left n x n block, read through
/// the anti-identity, reproduces the dense operator. Eigenvalues are the
/// forward FFT of the first column and are cached once per operator.
struct CirculantEmbedding {
    std::size_t r = 0;
    std::vector<double> first_column;
    ComplexVector eigenvalues;
};

class HankelOperator {
  public:
    explicit HankelOperator(std::vector<double> samples) : samples_(std::move(samples)) {
        if (samples_.empty()) throw std::invalid_argument("HankelOperator: needs n >= 1 samples");
        for (double v : samples_)
            if (!std::isfinite(v)) throw std::invalid_argument("HankelOperator: non-finite sample");
        build_embedding();
    }

    std::size_t n() const { return samples_.size(); }
    const std::vector<double>& samples() const { return samples_; }
    const CirculantEmbedding& embedding() const { return embedding_; }

    std::size_t reflect(std::size_t s) const {
        const std::size_t nn = n();
        return s <= nn - 1 ? s : 2 * (nn - 1) - s;
    }

    double entry(std::size_t i, std::size_t j) const {
        if (i >= n() || j >= n())
            throw std::out_of_range("HankelOperator::entry: index out of range");
        return samples_[reflect(i + j)];
    }

    DenseMatrix dense() const {
        DenseMatrix h(n(), n());
        for (std::size_t i = 0; i < n(); ++i)
            for (std::size_t j = 0; j < n(); ++j) h(i, j) = samples_[reflect(i + j)];
        return h;
    }

  private:
    void build_embedding() {
        const std::size_t nn = n();
        const std::size_t n_pad = next_power_of_two(nn);
        const std::size_t r = 2 * n_pad;
        std::vector<double> c(r, 0.0);
        // Descending run: c[k] = samples[n-1-k], the first column of the
        // operator read bottom-up.
        for (std::size_t k = 0; k < nn; ++k) c[k] = samples_[nn - 1 - k];
        // Ascending run at the tail so that c[(n-1-i-j) mod r] lands on
        // samples[2(n-1)-(i+j)] past the anti-diagonal.
        for (std::size_t k = 0; k + 1 < nn; ++k) c[r - nn + 1 + k] = samples_[k];
        // Never read by the n x n crop; kept at the duplicated boundary value
        // so the power-of-two case matches the written-out first column
        // [x(t_{n-1}),...,x(t_0), x(t_{n-1}), x(t_0),...,x(t_{n-2})].
        c[nn] = samples_[nn - 1];

        embedding_.r = r;
        embedding_.first_column = c;
        ComplexVector cc(r);
        for (std::size_t k = 0; k < r; ++k) cc[k] = c[k];
        embedding_.eigenvalues = fft(std::move(cc), FftDirection::forward);
    }

    std::vector<double> samples_;
    CirculantEmbedding embedding_;
};

// ---------------------------------------------------------------------------
// Matvec paths
// ---------------------------------------------------------------------------

/// Exact O(n^2) product; the reference oracle for the fast paths.
inline std::vector<double> matvec_dense(const HankelOperator& h, const std::vector<double>& x) {
    const std::size_t n = h.n();
    if (x.size() != n) throw std::invalid_argument("matvec_dense: dimension mismatch");
    const auto& s = h.samples();
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += s[h.reflect(i + j)] * x[j];
        y[i] = acc;
    }
    return y;
}

/// Shift-decomposition product H = H_u + H_l - x(t_{n-1}) I~ evaluated as two
/// triangular sums. H_u = [x~, Z x~, ..., Z^{n-1} x~] (Z the upper shift) is
/// the upper anti-triangle including the anti-diagonal; the subtracted
/// anti-identity term exactly cancels the anti-diagonal of H_l = I~ H_u^T I~,
/// so the lower triangle is evaluated strictly below the anti-diagonal.
/// Counted flops: n^2 mults + n(n-1) adds = 2n^2 - n, below the dense 2n^2.
inline std::vector<double> matvec_shift(const HankelOperator& h, const std::vector<double>& x,
                                        FlopCounter& counter) {
    const std::size_t n = h.n();
    if (x.size() != n) throw std::invalid_argument("matvec_shift: dimension mismatch");
    const auto& s = h.samples();
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        // H_u row i: entries samples[i+j] for j <= n-1-i.
        for (std::size_t j = 0; j + i < n; ++j) acc += s[i + j] * x[j];
        // (H_l - x(t_{n-1}) I~) row i: entries samples[2(n-1)-i-j] for j > n-1-i.
        for (std::size_t j = n - i; j < n; ++j) acc += s[2 * (n - 1) - i - j] * x[j];
        y[i] = acc;
    }
    counter.add_mults(static_cast<std::uint64_t>(n) * n);
    counter.add_adds(static_cast<std::uint64_t>(n) * (n - 1));
    return y;
}

namespace detail {

/// Applies the cached circulant to a real length-r vector through the FFT
/// diagonalization. Both spectra are Hermitian (real data), so the pointwise
/// product is formed on bins 0..r/2 and mirrored.
inline std::vector<double> circulant_apply(const CirculantEmbedding& emb,
                                           const std::vector<double>& v, FlopCounter* counter) {
    const std::size_t r = emb.r;
    ComplexVector z(r);
    for (std::size_t k = 0; k < r; ++k) z[k] = v[k];
    ComplexVector zf = fft(std::move(z), FftDirection::forward, counter);
    ComplexVector prod(r);
    for (std::size_t k = 0; k <= r / 2; ++k) {
        prod[k] = emb.eigenvalues[k] * zf[k];
        if (counter) {
            counter->add_mults(4);
            counter->add_adds(2);
        }
    }
    for (std::size_t k = r / 2 + 1; k < r; ++k) prod[k] = std::conj(prod[r - k]);
    ComplexVector back = fft(std::move(prod), FftDirection::inverse, counter);
    std::vector<double> out(r);
    for (std::size_t k = 0; k < r; ++k) out[k] = back[k].real();
    return out;
}

} // namespace detail

/// O(n log n) product through the circulant embedding: pad x to length r via
/// J (free), apply C_r = F*_r diag(F~_r c) F_r, select the first n entries
/// via J^T and reverse with the anti-identity (both free).
inline std::vector<double> matvec_fft(const HankelOperator& h, const std::vector<double>& x,
                                      FlopCounter& counter) {
    const std::size_t n = h.n();
    if (x.size() != n) throw std::invalid_argument("matvec_fft: dimension mismatch");
    const CirculantEmbedding& emb = h.embedding();
    std::vector<double> padded(emb.r, 0.0);
    for (std::size_t k = 0; k < n; ++k) padded[k] = x[k];
    std::vector<double> full = detail::circulant_apply(emb, padded, &counter);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = full[n - 1 - i];
    return y;
}

// ---------------------------------------------------------------------------
// Complexity report
// ---------------------------------------------------------------------------

struct ComplexityRow {
    std::size_t n = 0;
    std::uint64_t dense_flops = 0; // 2n^2 under the 2mk convention
    std::uint64_t shift_flops = 0; // measured
    std::uint64_t fft_flops = 0;   // measured
};

/// Measured flop counts of the three matvec paths for each requested size.
inline std::vector<ComplexityRow> complexity_report(const std::vector<std::size_t>& n_values) {
    if (n_values.empty()) throw std::invalid_argument("complexity_report: no sizes given");
    std::vector<ComplexityRow> rows;
    rows.reserve(n_values.size());
    for (std::size_t n : n_values) {
        std::vector<double> samples(n), x(n);
        for (std::size_t k = 0; k < n; ++k) {
            samples[k] = std::sin(0.7 * static_cast<double>(k + 1));
            x[k] = std::cos(0.3 * static_cast<double>(k + 1));
        }
        HankelOperator h(samples);
        ComplexityRow row;
        row.n = n;
        row.dense_flops = 2ull * n * n;
        FlopCounter cs;
        matvec_shift(h, x, cs);
        row.shift_flops = cs.total();
        FlopCounter cf;
        matvec_fft(h, x, cf);
        row.fft_flops = cf.total();
        rows.push_back(row);
    }
    return rows;
}

} // namespace stnn
