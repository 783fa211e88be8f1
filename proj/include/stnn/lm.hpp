#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stnn/dynsys.hpp"
#include "stnn/linalg.hpp"
#include "stnn/rng.hpp"

namespace stnn {

// ---------------------------------------------------------------------------
// Damped Gauss-Newton (Levenberg-Marquardt) machinery shared by the
// structured network and the dense baseline.
// ---------------------------------------------------------------------------

struct LmOptions {
    double lambda0 = 1e-3;
    double lambda_up = 10.0;
    double lambda_down = 0.2;
    double lambda_min = 1e-12;
    double lambda_max = 1e12;
};

struct TrainOptions {
    std::size_t epochs = 5;
    std::size_t batch_size = 1000;
    std::size_t steps_per_batch = 10;
    LmOptions lm;
    std::uint64_t seed = 0;
};

struct TrainReport {
    std::vector<double> loss_trace;       // full-train objective per epoch
    std::vector<double> val_trace;        // validation objective per epoch
    std::vector<double> lm_damping_trace; // lambda after each accepted step
    double final_train_loss = 0.0;
    double final_val_loss = 0.0;
    double wall_time_seconds = 0.0;
    std::size_t epochs_run = 0;
    std::size_t accepted_steps = 0;
    std::size_t rejected_steps = 0;
    bool aborted = false;
    std::string abort_reason;
};

namespace detail {

inline double sum_squares(const std::vector<double>& r) {
    double s = 0.0;
    for (double v : r) s += v * v;
    return s;
}

inline DenseMatrix normal_matrix(const DenseMatrix& jac) {
    const std::size_t rows = jac.rows, n = jac.cols;
    DenseMatrix jtj(n, n);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = jac.row(r);
        for (std::size_t a = 0; a < n; ++a) {
            const double ra = row[a];
            if (ra == 0.0) continue;
            double* out = jtj.row(a);
            for (std::size_t b = a; b < n; ++b) out[b] += ra * row[b];
        }
    }
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < a; ++b) jtj(a, b) = jtj(b, a);
    return jtj;
}

} // namespace detail

enum class LmStepResult { accepted, converged, lambda_overflow };

/// One LM iteration on a residual problem. `eval` fills residuals (always)
/// and the Jacobian (when given a destination) at the supplied parameters.
/// Accepts the first damped step that strictly decreases the sum of squared
/// residuals; rejected proposals only raise lambda. A proposal that neither
/// improves nor moves the parameters (or the objective) beyond machine noise
/// signals convergence; exhausting lambda_max without either is an overflow.
template <class EvalFn>
LmStepResult lm_step(std::vector<double>& theta, EvalFn&& eval, double& lambda,
                     const LmOptions& opts, std::size_t* rejects = nullptr) {
    std::vector<double> r;
    DenseMatrix jac;
    eval(theta, r, &jac);
    const double obj0 = detail::sum_squares(r);
    if (obj0 == 0.0) return LmStepResult::converged;

    for (double v : jac.data) {
        if (!std::isfinite(v))
            throw std::runtime_error("lm_step: non-finite Jacobian entry");
    }

    DenseMatrix jtj = detail::normal_matrix(jac);
    std::vector<double> g(jac.cols, 0.0);
    for (std::size_t row = 0; row < jac.rows; ++row) {
        const double* jr = jac.row(row);
        const double rv = r[row];
        for (std::size_t a = 0; a < jac.cols; ++a) g[a] -= jr[a] * rv;
    }

    // Scale-free damping floor keeps the solve well posed near convergence.
    double diag_max = 0.0;
    for (std::size_t a = 0; a < jac.cols; ++a) diag_max = std::max(diag_max, jtj(a, a));
    const double floor = std::max(1e-30, 1e-14 * diag_max);

    double theta_inf = 0.0;
    for (double v : theta) theta_inf = std::max(theta_inf, std::abs(v));

    std::vector<double> trial(theta.size());
    std::vector<double> r_trial;
    while (lambda <= opts.lambda_max) {
        std::vector<double> delta;
        bool solved = true;
        try {
            delta = solve_damped_normal(jtj, std::max(lambda, floor), g);
        } catch (const std::runtime_error&) {
            solved = false;
        }
        if (solved) {
            for (std::size_t k = 0; k < theta.size(); ++k) trial[k] = theta[k] + delta[k];
            eval(trial, r_trial, nullptr);
            const double obj1 = detail::sum_squares(r_trial);
            if (std::isfinite(obj1) && obj1 < obj0) {
                theta = trial;
                lambda = std::max(opts.lambda_min, lambda * opts.lambda_down);
                return LmStepResult::accepted;
            }
            double delta_inf = 0.0;
            for (double v : delta) delta_inf = std::max(delta_inf, std::abs(v));
            const bool step_stalled = delta_inf <= 1e-13 * (theta_inf + 1e-13);
            const bool obj_stalled =
                std::isfinite(obj1) && std::abs(obj1 - obj0) <= 1e-14 * obj0;
            if (step_stalled || obj_stalled) return LmStepResult::converged;
        }
        lambda *= opts.lambda_up;
        if (rejects) ++*rejects;
    }
    return LmStepResult::lambda_overflow;
}

/// Mini-batched LM training loop shared by the structured network and the
/// dense baseline. `eval_train(theta, cols, r, jac)` builds the residual
/// vector (and optionally the Jacobian) for the given training columns;
/// `val_objective(theta)` evaluates the validation objective. Batch order is
/// reshuffled each epoch from the seed, so the run is fully deterministic.
template <class EvalFn, class ValFn>
TrainReport lm_train_loop(std::vector<double>& theta, EvalFn&& eval_train, ValFn&& val_objective,
                          std::size_t train_size, const TrainOptions& opts) {
    if (train_size == 0) throw std::invalid_argument("lm_train_loop: empty training set");
    if (opts.batch_size < 1 || opts.batch_size > train_size)
        throw std::invalid_argument("lm_train_loop: batch_size must be in [1, train size]");

    const auto t_start = std::chrono::steady_clock::now();
    TrainReport report;
    double lambda = opts.lm.lambda0;

    std::vector<std::size_t> indices(train_size);
    for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    std::vector<std::size_t> all_train = indices;

    auto train_objective = [&]() {
        std::vector<double> r;
        eval_train(theta, all_train, r, nullptr);
        return detail::sum_squares(r);
    };

    for (std::size_t epoch = 0; epoch < opts.epochs && !report.aborted; ++epoch) {
        Rng shuffle_rng = Rng::stream(opts.seed, 1000 + epoch);
        shuffle_rng.shuffle(indices);
        for (std::size_t start = 0; start < indices.size() && !report.aborted;
             start += opts.batch_size) {
            const std::size_t end = std::min(indices.size(), start + opts.batch_size);
            if (end - start < 2) continue;
            std::vector<std::size_t> batch(indices.begin() + start, indices.begin() + end);
            for (std::size_t step = 0; step < opts.steps_per_batch; ++step) {
                LmStepResult outcome = lm_step(
                    theta,
                    [&](const std::vector<double>& th, std::vector<double>& r, DenseMatrix* j) {
                        eval_train(th, batch, r, j);
                    },
                    lambda, opts.lm, &report.rejected_steps);
                if (outcome == LmStepResult::lambda_overflow) {
                    report.aborted = true;
                    report.abort_reason = "lambda overflow: no acceptable step";
                    break;
                }
                if (outcome == LmStepResult::converged) break;
                ++report.accepted_steps;
                report.lm_damping_trace.push_back(lambda);
            }
        }
        report.loss_trace.push_back(train_objective());
        report.val_trace.push_back(val_objective(theta));
        report.epochs_run = epoch + 1;
    }

    report.final_train_loss = report.loss_trace.empty() ? 0.0 : report.loss_trace.back();
    report.final_val_loss = report.val_trace.empty() ? 0.0 : report.val_trace.back();
    report.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

} // namespace stnn
