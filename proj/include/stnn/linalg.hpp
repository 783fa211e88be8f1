#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "stnn/flops.hpp"

namespace stnn {

// ---------------------------------------------------------------------------
// Dense matrix (row-major, value semantics)
// ---------------------------------------------------------------------------

struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // row-major, data.size() == rows * cols

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    static DenseMatrix identity(std::size_t n) {
        DenseMatrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    const double* row(std::size_t i) const { return data.data() + i * cols; }
    double* row(std::size_t i) { return data.data() + i * cols; }
};

using ComplexVector = std::vector<std::complex<double>>;

inline DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

inline DenseMatrix multiply(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("multiply: inner dimensions differ");
    DenseMatrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            double* crow = c.row(i);
            for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

inline std::vector<double> matvec(const DenseMatrix& a, const std::vector<double>& x) {
    if (a.cols != x.size()) throw std::invalid_argument("matvec: dimension mismatch");
    std::vector<double> y(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) s += arow[j] * x[j];
        y[i] = s;
    }
    return y;
}

inline double frobenius_norm(const DenseMatrix& a) {
    double s = 0.0;
    for (double v : a.data) s += v * v;
    return std::sqrt(s);
}

inline DenseMatrix add_scaled(const DenseMatrix& a, const DenseMatrix& b, double alpha) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument("add_scaled: shape mismatch");
    DenseMatrix c = a;
    for (std::size_t k = 0; k < c.data.size(); ++k) c.data[k] += alpha * b.data[k];
    return c;
}

// ---------------------------------------------------------------------------
// FFT: iterative radix-2 with bit reversal
// ---------------------------------------------------------------------------

enum class FftDirection { forward, inverse };

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_power_of_two(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

/// Unnormalized radix-2 FFT. forward computes sum_l v_l w^{kl} with
/// w = exp(-2*pi*i/n); inverse computes the conjugate sum divided by n.
/// Lengths must be powers of two; padding policy belongs to the caller.
///
/// The optional counter records executed arithmetic: butterflies with a unit
/// twiddle skip the complex multiply (4 adds instead of 10 flops), and the
/// inverse's 1/n scaling costs 2n mults.
inline ComplexVector fft(ComplexVector v, FftDirection direction, FlopCounter* counter = nullptr) {
    const std::size_t n = v.size();
    if (n == 0) throw std::invalid_argument("fft: empty input");
    if (!is_power_of_two(n)) {
        throw std::invalid_argument("fft: length " + std::to_string(n) +
                                    " is not a power of two (pad to " +
                                    std::to_string(next_power_of_two(n)) + ")");
    }

    // Bit-reversal permutation.
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(v[i], v[j]);
    }

    const double sign = (direction == FftDirection::forward) ? -1.0 : 1.0;
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t j = 0; j < len / 2; ++j) {
                std::complex<double> u = v[i + j];
                std::complex<double> t;
                if (j == 0) {
                    t = v[i + j + len / 2];
                    if (counter) counter->add_adds(4);
                } else {
                    const std::complex<double> w(std::cos(ang * static_cast<double>(j)),
                                                 std::sin(ang * static_cast<double>(j)));
                    t = w * v[i + j + len / 2];
                    if (counter) {
                        counter->add_mults(4);
                        counter->add_adds(6);
                    }
                }
                v[i + j] = u + t;
                v[i + j + len / 2] = u - t;
            }
        }
    }

    if (direction == FftDirection::inverse) {
        const double inv = 1.0 / static_cast<double>(n);
        for (auto& z : v) z *= inv;
        if (counter) counter->add_mults(2 * n);
    }
    return v;
}

// ---------------------------------------------------------------------------
// SVD: one-sided Jacobi, suitable for small dense matrices
// ---------------------------------------------------------------------------

struct SvdError : std::runtime_error {
    int sweeps;
    explicit SvdError(int sweeps_)
        : std::runtime_error("svd: one-sided Jacobi failed to converge after " +
                             std::to_string(sweeps_) + " sweeps"),
          sweeps(sweeps_) {}
};

struct SvdResult {
    DenseMatrix U;          // rows x k, orthonormal columns
    std::vector<double> S;  // k nonnegative singular values, descending
    DenseMatrix V;          // cols x k, orthonormal columns
};

namespace detail {

// One-sided Jacobi on A with rows >= cols: orthogonalize pairs of columns,
// accumulating the rotations in V.
inline SvdResult svd_tall(const DenseMatrix& a, int max_sweeps, double tol) {
    const std::size_t m = a.rows, n = a.cols;
    DenseMatrix w = a;               // working copy, columns converge to U * S
    DenseMatrix v = DenseMatrix::identity(n);

    auto col_dot = [&](std::size_t p, std::size_t q) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i) s += w(i, p) * w(i, q);
        return s;
    };

    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        // Deflate columns whose norm has collapsed to rounding junk; left in
        // place they stay parallel to a live column and the sweep cycles.
        double max_sq = 0.0;
        for (std::size_t j = 0; j < n; ++j) max_sq = std::max(max_sq, col_dot(j, j));
        const double deflate_sq = 1e-28 * max_sq;
        for (std::size_t j = 0; j < n; ++j) {
            const double sq = col_dot(j, j);
            if (sq > 0.0 && sq <= deflate_sq)
                for (std::size_t i = 0; i < m; ++i) w(i, j) = 0.0;
        }

        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double app = col_dot(p, p);
                const double aqq = col_dot(q, q);
                if (app == 0.0 || aqq == 0.0) continue;
                const double apq = col_dot(p, q);
                if (std::abs(apq) <= tol * std::sqrt(app * aqq)) continue;
                rotated = true;
                const double zeta = (aqq - app) / (2.0 * apq);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double cs = 1.0 / std::sqrt(1.0 + t * t);
                const double sn = cs * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double wp = w(i, p), wq = w(i, q);
                    w(i, p) = cs * wp - sn * wq;
                    w(i, q) = sn * wp + cs * wq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vp = v(i, p), vq = v(i, q);
                    v(i, p) = cs * vp - sn * vq;
                    v(i, q) = sn * vp + cs * vq;
                }
            }
        }
        if (!rotated) break;
    }
    if (sweep == max_sweeps) throw SvdError(max_sweeps);

    std::vector<double> s(n);
    for (std::size_t j = 0; j < n; ++j) {
        double norm = 0.0;
        for (std::size_t i = 0; i < m; ++i) norm += w(i, j) * w(i, j);
        s[j] = std::sqrt(norm);
    }

    std::vector<std::size_t> order(n);
    for (std::size_t j = 0; j < n; ++j) order[j] = j;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return s[x] > s[y]; });

    SvdResult out;
    out.U = DenseMatrix(m, n);
    out.V = DenseMatrix(n, n);
    out.S.resize(n);
    double smax = 0.0;
    for (std::size_t j = 0; j < n; ++j) smax = std::max(smax, s[j]);
    const double tiny = (smax > 0.0 ? smax : 1.0) * 1e-300;

    for (std::size_t jj = 0; jj < n; ++jj) {
        const std::size_t j = order[jj];
        out.S[jj] = s[j];
        for (std::size_t i = 0; i < n; ++i) out.V(i, jj) = v(i, j);
        if (s[j] > tiny) {
            const double inv = 1.0 / s[j];
            for (std::size_t i = 0; i < m; ++i) out.U(i, jj) = w(i, j) * inv;
        }
    }
    // Orthonormal completion for (numerically) zero singular values so U's
    // columns stay orthonormal.
    for (std::size_t jj = 0; jj < n; ++jj) {
        if (out.S[jj] > tiny) continue;
        for (std::size_t e = 0; e < m; ++e) {
            std::vector<double> cand(m, 0.0);
            cand[e] = 1.0;
            for (std::size_t k = 0; k < jj; ++k) {
                double d = 0.0;
                for (std::size_t i = 0; i < m; ++i) d += out.U(i, k) * cand[i];
                for (std::size_t i = 0; i < m; ++i) cand[i] -= d * out.U(i, k);
            }
            double norm = 0.0;
            for (double c : cand) norm += c * c;
            norm = std::sqrt(norm);
            if (norm > 0.5) {
                for (std::size_t i = 0; i < m; ++i) out.U(i, jj) = cand[i] / norm;
                break;
            }
        }
    }
    return out;
}

} // namespace detail

/// Thin SVD A = U diag(S) V^T with S descending and orthonormal U, V columns.
/// One-sided Jacobi; intended for min(rows, cols) <= 512.
inline SvdResult svd(const DenseMatrix& a, int max_sweeps = 100, double tol = 1e-12) {
    if (a.rows == 0 || a.cols == 0) throw std::invalid_argument("svd: empty matrix");
    if (std::min(a.rows, a.cols) > 512)
        throw std::invalid_argument("svd: min dimension exceeds the 512 desk-scale cap");
    for (double x : a.data)
        if (!std::isfinite(x)) throw std::invalid_argument("svd: non-finite entry");
    if (a.rows >= a.cols) return detail::svd_tall(a, max_sweeps, tol);
    SvdResult r = detail::svd_tall(transpose(a), max_sweeps, tol);
    std::swap(r.U, r.V);
    return r;
}

/// Largest singular value.
inline double spectral_norm(const DenseMatrix& a) {
    SvdResult r = svd(a);
    return r.S.empty() ? 0.0 : r.S[0];
}

/// Sum of singular values.
inline double nuclear_norm(const DenseMatrix& a) {
    SvdResult r = svd(a);
    double s = 0.0;
    for (double v : r.S) s += v;
    return s;
}

/// Moore-Penrose pseudoinverse: singular values below rel_tol * S_max are
/// treated as zero.
inline DenseMatrix pinv(const DenseMatrix& a, double rel_tol = 1e-12) {
    SvdResult r = svd(a);
    const double smax = r.S.empty() ? 0.0 : r.S[0];
    const double cut = rel_tol * smax;
    // A^+ = V diag(1/s) U^T
    DenseMatrix out(a.cols, a.rows);
    const std::size_t k = r.S.size();
    for (std::size_t t = 0; t < k; ++t) {
        if (r.S[t] <= cut || r.S[t] == 0.0) continue;
        const double inv = 1.0 / r.S[t];
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double vit = r.V(i, t) * inv;
            if (vit == 0.0) continue;
            for (std::size_t j = 0; j < a.rows; ++j) out(i, j) += vit * r.U(j, t);
        }
    }
    return out;
}

/// Least-squares solve min ||A x - b||_2 through the SVD pseudoinverse.
inline std::vector<double> lstsq(const DenseMatrix& a, const std::vector<double>& b,
                                 double rel_tol = 1e-12) {
    if (a.rows != b.size()) throw std::invalid_argument("lstsq: dimension mismatch");
    SvdResult r = svd(a);
    const double smax = r.S.empty() ? 0.0 : r.S[0];
    const double cut = rel_tol * smax;
    std::vector<double> x(a.cols, 0.0);
    for (std::size_t t = 0; t < r.S.size(); ++t) {
        if (r.S[t] <= cut || r.S[t] == 0.0) continue;
        double utb = 0.0;
        for (std::size_t i = 0; i < a.rows; ++i) utb += r.U(i, t) * b[i];
        utb /= r.S[t];
        for (std::size_t j = 0; j < a.cols; ++j) x[j] += r.V(j, t) * utb;
    }
    return x;
}

// ---------------------------------------------------------------------------
// Damped normal-equation solve (Levenberg-Marquardt inner step)
// ---------------------------------------------------------------------------

/// Solves (JtJ + damping*I) delta = rhs by Cholesky with one step of
/// iterative refinement. JtJ must be symmetric positive semidefinite;
/// damping must be positive whenever JtJ is singular.
inline std::vector<double> solve_damped_normal(const DenseMatrix& jtj, double damping,
                                               const std::vector<double>& rhs) {
    if (jtj.rows != jtj.cols) throw std::invalid_argument("solve_damped_normal: matrix not square");
    if (jtj.rows != rhs.size()) throw std::invalid_argument("solve_damped_normal: rhs size mismatch");
    if (damping < 0.0) throw std::invalid_argument("solve_damped_normal: negative damping");
    const std::size_t n = jtj.rows;

    DenseMatrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = jtj(i, j) + (i == j ? damping : 0.0);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0) {
                    throw std::runtime_error(
                        "solve_damped_normal: Cholesky pivot <= 0 at row " + std::to_string(i) +
                        "; the system is singular at this damping, increase damping");
                }
                l(i, j) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }

    auto chol_solve = [&](const std::vector<double>& b) {
        std::vector<double> y(n), x(n);
        for (std::size_t i = 0; i < n; ++i) {
            double s = b[i];
            for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
            y[i] = s / l(i, i);
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double s = y[ii];
            for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
            x[ii] = s / l(ii, ii);
        }
        return x;
    };

    std::vector<double> x = chol_solve(rhs);
    // One refinement pass keeps the relative residual near machine precision.
    std::vector<double> resid(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = rhs[i] - damping * x[i];
        const double* row = jtj.row(i);
        for (std::size_t j = 0; j < n; ++j) s -= row[j] * x[j];
        resid[i] = s;
    }
    std::vector<double> corr = chol_solve(resid);
    for (std::size_t i = 0; i < n; ++i) x[i] += corr[i];
    return x;
}

} // namespace stnn
