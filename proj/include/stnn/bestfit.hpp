#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "stnn/hankel.hpp"
#include "stnn/linalg.hpp"

namespace stnn {

// ---------------------------------------------------------------------------
// Best-fit low-rank operator from snapshot matrices:
//   argmin_H  1/2 ||X' - H X||_F^2 + alpha ||H||_*
// solved by proximal gradient on H^T with singular value thresholding.
// ---------------------------------------------------------------------------

/// Singular value thresholding: U max(S - threshold, 0) V^T, the proximal
/// operator of the nuclear norm.
inline DenseMatrix svt(const DenseMatrix& a, double threshold) {
    if (threshold < 0.0) throw std::invalid_argument("svt: negative threshold");
    if (threshold == 0.0) return a;
    SvdResult r = svd(a);
    DenseMatrix out(a.rows, a.cols);
    for (std::size_t t = 0; t < r.S.size(); ++t) {
        const double s = r.S[t] - threshold;
        if (s <= 0.0) continue;
        for (std::size_t i = 0; i < a.rows; ++i) {
            const double uis = r.U(i, t) * s;
            for (std::size_t j = 0; j < a.cols; ++j) out(i, j) += uis * r.V(j, t);
        }
    }
    return out;
}

struct FitProblem {
    DenseMatrix snapshots;      // X, n x m
    DenseMatrix advanced;       // X', n x m
    double alpha = 0.0;         // nuclear-norm weight
};

enum class StepRule { fixed, backtracking };

struct FitOptions {
    StepRule step_rule = StepRule::fixed;
    std::size_t max_iter = 5000;
    double rel_tol = 1e-10;
    bool fista = false;             // accelerated variant; off so the
                                    // objective trace stays monotone
    double rank_rel_threshold = 1e-10;
    bool project_hankel = false;    // optional structure post-processing
};

struct FitResult {
    DenseMatrix h_hat;                  // n x n
    std::vector<double> objective_trace;
    std::size_t rank = 0;
    std::size_t iterations = 0;
    bool converged = false;
};

/// Frobenius-nearest per-symmetric Hankel matrix: average the entries of A
/// over each reflection class { (i,j) : reflect(i+j) = s }.
inline HankelOperator project_persymmetric_hankel(const DenseMatrix& a) {
    if (a.rows != a.cols) throw std::invalid_argument("project_persymmetric_hankel: not square");
    const std::size_t n = a.rows;
    std::vector<double> sums(n, 0.0);
    std::vector<std::size_t> counts(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const std::size_t s = i + j;
            const std::size_t cls = s <= n - 1 ? s : 2 * (n - 1) - s;
            sums[cls] += a(i, j);
            counts[cls] += 1;
        }
    }
    std::vector<double> samples(n);
    for (std::size_t s = 0; s < n; ++s) samples[s] = sums[s] / static_cast<double>(counts[s]);
    return HankelOperator(samples);
}

namespace detail {

inline double fit_objective(const FitProblem& p, const DenseMatrix& h) {
    DenseMatrix resid = add_scaled(p.advanced, multiply(h, p.snapshots), -1.0);
    const double f = frobenius_norm(resid);
    double obj = 0.5 * f * f;
    if (p.alpha > 0.0) obj += p.alpha * nuclear_norm(h);
    return obj;
}

} // namespace detail

/// Proximal-gradient iteration on H^T:
///   G   = H^T_{k-1} - (1/t) X (X^T H^T_{k-1} - X'^T)
///   H^T_k = svt(G, alpha / t)
/// with the fixed step t = ||X||_2^2 (the Lipschitz constant of the smooth
/// part), or a backtracking line search. Starts from H = 0.
inline FitResult fit_operator(const FitProblem& p, const FitOptions& opts = {}) {
    if (p.snapshots.rows != p.advanced.rows || p.snapshots.cols != p.advanced.cols)
        throw std::invalid_argument("fit_operator: X and X' must share a shape");
    if (p.alpha < 0.0) throw std::invalid_argument("fit_operator: alpha must be >= 0");
    if (opts.max_iter < 1) throw std::invalid_argument("fit_operator: max_iter >= 1");

    const std::size_t n = p.snapshots.rows;
    const DenseMatrix xt = transpose(p.snapshots);
    const DenseMatrix xpt = transpose(p.advanced);

    const double smax = spectral_norm(p.snapshots);
    if (smax == 0.0) throw std::invalid_argument("fit_operator: X is zero");
    double t = smax * smax;

    DenseMatrix ht(n, n); // H^T iterate, starts at zero
    FitResult res;
    double prev_obj = detail::fit_objective(p, transpose(ht));
    res.objective_trace.push_back(prev_obj);

    DenseMatrix ht_prev = ht;
    double momentum = 1.0;

    for (std::size_t it = 1; it <= opts.max_iter; ++it) {
        DenseMatrix base = ht;
        if (opts.fista && it > 1) {
            const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
            const double gamma = (momentum - 1.0) / next;
            momentum = next;
            base = add_scaled(ht, add_scaled(ht, ht_prev, -1.0), gamma);
        }

        // gradient of 1/2||X^T H^T - X'^T||_F^2 at base: X (X^T base - X'^T)
        DenseMatrix inner = add_scaled(multiply(xt, base), xpt, -1.0);
        DenseMatrix grad = multiply(p.snapshots, inner);

        DenseMatrix next_ht;
        if (opts.step_rule == StepRule::fixed) {
            next_ht = svt(add_scaled(base, grad, -1.0 / t), p.alpha / t);
        } else {
            // Backtracking: shrink the step until the smooth part is
            // majorized at the candidate.
            double tk = t / 16.0;
            auto smooth = [&](const DenseMatrix& h) {
                DenseMatrix r = add_scaled(multiply(xt, h), xpt, -1.0);
                const double f = frobenius_norm(r);
                return 0.5 * f * f;
            };
            const double f_base = smooth(base);
            for (int back = 0; back < 60; ++back) {
                next_ht = svt(add_scaled(base, grad, -1.0 / tk), p.alpha / tk);
                DenseMatrix diff = add_scaled(next_ht, base, -1.0);
                double lin = 0.0;
                for (std::size_t k = 0; k < diff.data.size(); ++k)
                    lin += grad.data[k] * diff.data[k];
                const double d = frobenius_norm(diff);
                if (smooth(next_ht) <= f_base + lin + 0.5 * tk * d * d) break;
                tk *= 2.0;
            }
        }

        ht_prev = ht;
        ht = next_ht;
        res.iterations = it;

        const double obj = detail::fit_objective(p, transpose(ht));
        res.objective_trace.push_back(obj);
        const double denom = std::max(1e-300, std::abs(prev_obj));
        if (std::abs(prev_obj - obj) < opts.rel_tol * denom) {
            res.converged = true;
            prev_obj = obj;
            break;
        }
        prev_obj = obj;
    }

    res.h_hat = transpose(ht);
    if (opts.project_hankel) res.h_hat = project_persymmetric_hankel(res.h_hat).dense();
    SvdResult sv = svd(res.h_hat);
    const double cut = opts.rank_rel_threshold * (sv.S.empty() ? 0.0 : sv.S[0]);
    for (double s : sv.S)
        if (s > cut) ++res.rank;
    return res;
}

} // namespace stnn
