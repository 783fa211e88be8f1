#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stnn/dynsys.hpp"
#include "stnn/flops.hpp"
#include "stnn/linalg.hpp"
#include "stnn/lm.hpp"
#include "stnn/network.hpp"

namespace stnn {

// ---------------------------------------------------------------------------
// Dense feed-forward baseline: layer sizes [3, 30, 30, 30, 3]
// ---------------------------------------------------------------------------

struct FfnnConfig {
    std::vector<std::size_t> layer_sizes{3, 30, 30, 30, 3};
    std::array<Activation, 4> activations{Activation{ActKind::tanh_fn},
                                          Activation{ActKind::leaky_relu, 0.01},
                                          Activation{ActKind::relu},
                                          Activation{ActKind::identity}};
    std::array<double, 4> alpha{0.0, 0.0, 0.0, 0.0};
    std::uint64_t seed = 0;

    void validate() const {
        if (layer_sizes.size() != 5)
            throw std::invalid_argument("FfnnConfig: expected 5 layer sizes (4 weight layers)");
        for (std::size_t s : layer_sizes)
            if (s == 0) throw std::invalid_argument("FfnnConfig: zero layer size");
    }
};

struct FfnnParams {
    FfnnConfig config;
    std::vector<DenseMatrix> weights;            // one per weight layer
    std::vector<std::vector<double>> biases;
};

inline std::size_t count_params(const FfnnParams& p) {
    std::size_t total = 0;
    for (std::size_t l = 0; l < p.weights.size(); ++l)
        total += p.weights[l].rows * p.weights[l].cols + p.biases[l].size();
    return total;
}

inline std::size_t count_params(const FfnnConfig& cfg) {
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < cfg.layer_sizes.size(); ++l)
        total += cfg.layer_sizes[l + 1] * cfg.layer_sizes[l] + cfg.layer_sizes[l + 1];
    return total;
}

/// Dense 2mk convention, bias adds excluded.
inline std::size_t count_flops(const FfnnConfig& cfg) {
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < cfg.layer_sizes.size(); ++l)
        total += 2 * cfg.layer_sizes[l + 1] * cfg.layer_sizes[l];
    return total;
}

inline FfnnParams ffnn_init(const FfnnConfig& cfg) {
    cfg.validate();
    FfnnParams p;
    p.config = cfg;
    Rng rng = Rng::stream(cfg.seed, 0x0FFAA);
    for (std::size_t l = 0; l + 1 < cfg.layer_sizes.size(); ++l) {
        const std::size_t fan_in = cfg.layer_sizes[l];
        const std::size_t fan_out = cfg.layer_sizes[l + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        DenseMatrix w(fan_out, fan_in);
        for (auto& v : w.data) v = rng.uniform(-bound, bound);
        std::vector<double> b(fan_out);
        for (auto& v : b) v = rng.uniform(-bound, bound);
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    return p;
}

namespace detail {

struct FfnnTrace {
    std::vector<std::vector<double>> pre;  // per weight layer
    std::vector<std::vector<double>> post; // post[l] = act_l(pre[l]); post.back() is the output
};

inline std::vector<double> ffnn_forward_traced(const FfnnParams& p, const std::vector<double>& x,
                                               FfnnTrace* trace, FlopCounter* fc) {
    std::vector<double> cur = x;
    if (trace) {
        trace->pre.clear();
        trace->post.clear();
    }
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        std::vector<double> pre = matvec(p.weights[l], cur);
        for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += p.biases[l][i];
        if (fc) {
            fc->add_dense_matvec(p.weights[l].rows, p.weights[l].cols);
            fc->add_bias(pre.size());
        }
        std::vector<double> post(pre.size());
        const Activation& act = p.config.activations[l];
        for (std::size_t i = 0; i < pre.size(); ++i) post[i] = act.eval(pre[i]);
        if (trace) {
            trace->pre.push_back(pre);
            trace->post.push_back(post);
        }
        cur = std::move(post);
    }
    return cur;
}

} // namespace detail

inline std::vector<double> ffnn_forward(const FfnnParams& p, const std::vector<double>& x,
                                        FlopCounter* fc = nullptr) {
    if (x.size() != p.config.layer_sizes.front())
        throw std::invalid_argument("ffnn_forward: input width mismatch");
    return detail::ffnn_forward_traced(p, x, nullptr, fc);
}

namespace detail {

inline std::vector<double> ffnn_flatten(const FfnnParams& p) {
    std::vector<double> out;
    out.reserve(count_params(p));
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        out.insert(out.end(), p.weights[l].data.begin(), p.weights[l].data.end());
        out.insert(out.end(), p.biases[l].begin(), p.biases[l].end());
    }
    return out;
}

inline void ffnn_unflatten(const std::vector<double>& flat, FfnnParams& p) {
    std::size_t k = 0;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        for (auto& v : p.weights[l].data) v = flat[k++];
        for (auto& v : p.biases[l]) v = flat[k++];
    }
    if (k != flat.size()) throw std::invalid_argument("ffnn_unflatten: size mismatch");
}

inline std::string ffnn_block_name(const FfnnConfig& cfg, std::size_t flat_index) {
    std::size_t k = flat_index;
    for (std::size_t l = 0; l + 1 < cfg.layer_sizes.size(); ++l) {
        const std::size_t wsize = cfg.layer_sizes[l + 1] * cfg.layer_sizes[l];
        if (k < wsize) return "layer " + std::to_string(l + 1) + " weights";
        k -= wsize;
        if (k < cfg.layer_sizes[l + 1]) return "layer " + std::to_string(l + 1) + " bias";
        k -= cfg.layer_sizes[l + 1];
    }
    return "out of range";
}

/// Residual layout mirrors the structured network: m * n_out data rows
/// scaled by 1/sqrt(m * n_out), then sqrt(alpha_l * sigma_i) rows per layer
/// with alpha_l > 0 (finite-difference Jacobian columns).
struct FfnnLmProblem {
    const FfnnConfig* cfg;
    const DenseMatrix* inputs;
    const DenseMatrix* outputs;

    std::vector<int> reg_layers() const {
        std::vector<int> layers;
        for (int l = 1; l <= 4; ++l)
            if (cfg->alpha[l - 1] > 0.0) layers.push_back(l);
        return layers;
    }

    void eval(const std::vector<double>& theta, const std::vector<std::size_t>& cols,
              std::vector<double>& r, DenseMatrix* jac) const {
        FfnnParams p;
        p.config = *cfg;
        {
            FfnnParams tmpl = ffnn_init(*cfg); // shapes only
            p.weights = std::move(tmpl.weights);
            p.biases = std::move(tmpl.biases);
        }
        ffnn_unflatten(theta, p);

        const std::size_t n_in = cfg->layer_sizes.front();
        const std::size_t n_out = cfg->layer_sizes.back();
        const std::size_t m = cols.size();
        const double scale = 1.0 / std::sqrt(static_cast<double>(m * n_out));

        auto layers = reg_layers();
        std::size_t n_reg = 0;
        for (int l : layers) n_reg += std::min(cfg->layer_sizes[l], cfg->layer_sizes[l - 1]);
        r.assign(m * n_out + n_reg, 0.0);
        if (jac) *jac = DenseMatrix(r.size(), theta.size());

        FfnnTrace trace;
        std::vector<double> x(n_in);
        for (std::size_t idx = 0; idx < m; ++idx) {
            const std::size_t c = cols[idx];
            for (std::size_t d = 0; d < n_in; ++d) x[d] = (*inputs)(d, c);
            auto pred = ffnn_forward_traced(p, x, &trace, nullptr);
            for (std::size_t k = 0; k < n_out; ++k)
                r[idx * n_out + k] = scale * (pred[k] - (*outputs)(k, c));
            if (!jac) continue;

            // One backward pass per output coordinate.
            for (std::size_t k = 0; k < n_out; ++k) {
                double* row = jac->row(idx * n_out + k);
                std::vector<double> grad_post(n_out, 0.0);
                grad_post[k] = scale;
                // walk layers backwards
                std::vector<double> g = grad_post;
                for (std::size_t l = p.weights.size(); l-- > 0;) {
                    const Activation& act = p.config.activations[l];
                    std::vector<double> gpre(g.size());
                    for (std::size_t i = 0; i < g.size(); ++i)
                        gpre[i] = g[i] * act.deriv(trace.pre[l][i], trace.post[l][i]);
                    const std::vector<double>& in_vec = l == 0 ? x : trace.post[l - 1];
                    // offset of layer l in the flat layout
                    std::size_t off = 0;
                    for (std::size_t q = 0; q < l; ++q)
                        off += p.weights[q].rows * p.weights[q].cols + p.biases[q].size();
                    for (std::size_t i = 0; i < p.weights[l].rows; ++i) {
                        const double gi = gpre[i];
                        if (gi != 0.0) {
                            double* wrow = row + off + i * p.weights[l].cols;
                            for (std::size_t j = 0; j < p.weights[l].cols; ++j)
                                wrow[j] += gi * in_vec[j];
                        }
                    }
                    const std::size_t bias_off = off + p.weights[l].rows * p.weights[l].cols;
                    for (std::size_t i = 0; i < gpre.size(); ++i) row[bias_off + i] += gpre[i];
                    if (l == 0) break;
                    std::vector<double> gnext(p.weights[l].cols, 0.0);
                    for (std::size_t i = 0; i < p.weights[l].rows; ++i) {
                        const double gi = gpre[i];
                        if (gi == 0.0) continue;
                        const double* wrow = p.weights[l].row(i);
                        for (std::size_t j = 0; j < p.weights[l].cols; ++j)
                            gnext[j] += gi * wrow[j];
                    }
                    g = std::move(gnext);
                }
            }
        }

        if (n_reg > 0) {
            std::size_t row = m * n_out;
            std::vector<double> th = theta;
            auto reg_block = [&](const std::vector<double>& tt, int l, std::vector<double>& dst) {
                FfnnParams pp;
                pp.config = *cfg;
                FfnnParams tmpl = ffnn_init(*cfg);
                pp.weights = std::move(tmpl.weights);
                pp.biases = std::move(tmpl.biases);
                ffnn_unflatten(tt, pp);
                SvdResult sv = svd(pp.weights[l - 1]);
                dst.resize(sv.S.size());
                for (std::size_t i = 0; i < sv.S.size(); ++i)
                    dst[i] = std::sqrt(cfg->alpha[l - 1] * std::max(0.0, sv.S[i]));
            };
            for (int l : layers) {
                std::vector<double> base;
                reg_block(th, l, base);
                for (std::size_t i = 0; i < base.size(); ++i) r[row + i] = base[i];
                if (jac) {
                    std::size_t off = 0;
                    for (int q = 0; q + 1 < l; ++q)
                        off += cfg->layer_sizes[q + 1] * cfg->layer_sizes[q] +
                               cfg->layer_sizes[q + 1];
                    const std::size_t wsize = cfg->layer_sizes[l] * cfg->layer_sizes[l - 1];
                    std::vector<double> plus, minus;
                    for (std::size_t w = 0; w < wsize; ++w) {
                        const std::size_t k = off + w;
                        const double saved = th[k];
                        const double h = 1e-6 * std::max(1.0, std::abs(saved));
                        th[k] = saved + h;
                        reg_block(th, l, plus);
                        th[k] = saved - h;
                        reg_block(th, l, minus);
                        th[k] = saved;
                        for (std::size_t i = 0; i < base.size(); ++i)
                            (*jac)(row + i, k) = (plus[i] - minus[i]) / (2.0 * h);
                    }
                }
                row += base.size();
            }
        }

        if (jac) {
            for (std::size_t k = 0; k < jac->data.size(); ++k)
                if (!std::isfinite(jac->data[k]))
                    throw std::runtime_error("ffnn_train_lm: NaN in Jacobian at " +
                                             ffnn_block_name(*cfg, k % theta.size()));
        }
    }
};

} // namespace detail

inline double ffnn_loss(const FfnnParams& p, const DenseMatrix& inputs,
                        const DenseMatrix& outputs, const std::array<double, 4>& alpha) {
    if (inputs.cols == 0) throw std::invalid_argument("ffnn_loss: empty batch");
    const std::size_t n_out = p.config.layer_sizes.back();
    double data = 0.0;
    std::vector<double> x(p.config.layer_sizes.front());
    for (std::size_t c = 0; c < inputs.cols; ++c) {
        for (std::size_t d = 0; d < x.size(); ++d) x[d] = inputs(d, c);
        auto pred = ffnn_forward(p, x);
        for (std::size_t d = 0; d < n_out; ++d) {
            const double e = outputs(d, c) - pred[d];
            data += e * e;
        }
    }
    data /= static_cast<double>(inputs.cols * n_out);
    double reg = 0.0;
    for (int l = 1; l <= 4; ++l)
        if (alpha[l - 1] > 0.0) reg += alpha[l - 1] * nuclear_norm(p.weights[l - 1]);
    return data + reg;
}

inline TrainReport ffnn_train_lm(FfnnParams& params, const TrajectoryDataset& train,
                                 const TrajectoryDataset& val, const TrainOptions& opts) {
    std::vector<double> theta = detail::ffnn_flatten(params);
    detail::FfnnLmProblem problem{&params.config, &train.inputs, &train.outputs};
    detail::FfnnLmProblem val_problem{&params.config, &val.inputs, &val.outputs};
    std::vector<std::size_t> all_val(val.size());
    for (std::size_t i = 0; i < all_val.size(); ++i) all_val[i] = i;

    TrainReport report = lm_train_loop(
        theta,
        [&](const std::vector<double>& th, const std::vector<std::size_t>& cols,
            std::vector<double>& r, DenseMatrix* j) { problem.eval(th, cols, r, j); },
        [&](const std::vector<double>& th) {
            if (all_val.empty()) return 0.0;
            std::vector<double> r;
            val_problem.eval(th, all_val, r, nullptr);
            return detail::sum_squares(r);
        },
        train.size(), opts);

    detail::ffnn_unflatten(theta, params);
    return report;
}

// ---------------------------------------------------------------------------
// Exact dynamic mode decomposition
// ---------------------------------------------------------------------------

struct DmdModel {
    DenseMatrix a;        // n x n one-step operator
    std::size_t rank = 0; // spectral content kept
    DenseMatrix modes;    // U_r when truncated (n x rank), empty otherwise
    DenseMatrix atilde;   // rank x rank reduced operator when truncated
};

/// A = X' pinv(X); pass `rank` to project onto the leading left singular
/// subspace of X (A = U_r Atilde U_r^T).
inline DmdModel dmd_fit(const DenseMatrix& x, const DenseMatrix& xp, std::size_t rank = 0) {
    if (x.rows != xp.rows || x.cols != xp.cols)
        throw std::invalid_argument("dmd_fit: X and X' must share a shape");
    if (x.cols < x.rows) throw std::invalid_argument("dmd_fit: need at least n snapshot columns");
    const std::size_t n = x.rows;
    if (rank > n) throw std::invalid_argument("dmd_fit: rank exceeds the state dimension");

    DmdModel model;
    if (rank == 0 || rank == n) {
        model.a = multiply(xp, pinv(x, 1e-12));
        model.rank = n;
        return model;
    }
    SvdResult sv = svd(x);
    DenseMatrix ur(n, rank);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < rank; ++t) ur(i, t) = sv.U(i, t);
    // Atilde = U_r^T X' V_r S_r^{-1}
    DenseMatrix vr(x.cols, rank);
    for (std::size_t i = 0; i < x.cols; ++i)
        for (std::size_t t = 0; t < rank; ++t) vr(i, t) = sv.V(i, t);
    DenseMatrix vs = vr;
    for (std::size_t t = 0; t < rank; ++t) {
        if (sv.S[t] <= 0.0) throw std::invalid_argument("dmd_fit: rank exceeds numerical rank");
        for (std::size_t i = 0; i < x.cols; ++i) vs(i, t) /= sv.S[t];
    }
    model.atilde = multiply(transpose(ur), multiply(xp, vs));
    model.a = multiply(ur, multiply(model.atilde, transpose(ur)));
    model.modes = ur;
    model.rank = rank;
    return model;
}

inline std::vector<double> dmd_step(const DmdModel& model, const std::vector<double>& x,
                                    FlopCounter* fc = nullptr) {
    if (fc) fc->add_dense_matvec(model.a.rows, model.a.cols);
    return matvec(model.a, x);
}

struct DmdRollout {
    std::vector<std::vector<double>> states;
    bool diverged = false;
    std::size_t diverged_step = 0;
};

inline DmdRollout dmd_rollout(const DmdModel& model, const std::vector<double>& x0,
                              std::size_t steps) {
    DmdRollout out;
    out.states.push_back(x0);
    std::vector<double> x = x0;
    for (std::size_t k = 0; k < steps; ++k) {
        x = dmd_step(model, x);
        double mag = 0.0;
        for (double v : x) mag = std::max(mag, std::abs(v));
        if (!std::isfinite(mag) || mag > 1e6) {
            out.diverged = true;
            out.diverged_step = k + 1;
            break;
        }
        out.states.push_back(x);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sparse identification of nonlinear dynamics (STLSQ on a quadratic library)
// ---------------------------------------------------------------------------

/// Candidate library for a 3-state system: degree <= 2 polynomials,
/// in this fixed order.
inline const std::vector<std::string>& sindy_library_names() {
    static const std::vector<std::string> names{"1",  "x",  "y",  "z",  "xx",
                                                "xy", "xz", "yy", "yz", "zz"};
    return names;
}

inline std::array<double, 10> sindy_library_row(double x, double y, double z) {
    return {1.0, x, y, z, x * x, x * y, x * z, y * y, y * z, z * z};
}

struct SindyModel {
    DenseMatrix xi;      // 10 x 3 coefficients, library row order above
    double threshold = 0.0;

    std::size_t nonzero_count() const {
        std::size_t c = 0;
        for (double v : xi.data)
            if (v != 0.0) ++c;
        return c;
    }

    std::vector<double> rhs(const std::vector<double>& s) const {
        auto lib = sindy_library_row(s[0], s[1], s[2]);
        std::vector<double> out(3, 0.0);
        for (int d = 0; d < 3; ++d)
            for (int t = 0; t < 10; ++t) out[d] += xi(t, d) * lib[t];
        return out;
    }
};

namespace detail {

/// 4th-order finite-difference time derivatives; one-sided stencils at the
/// ends.
inline DenseMatrix fd_derivatives(const std::vector<std::vector<double>>& states, double dt) {
    const std::size_t n = states.size();
    const std::size_t dim = states.front().size();
    if (n < 6) throw std::invalid_argument("fd_derivatives: need at least 6 samples");
    DenseMatrix d(n, dim);
    auto s = [&](std::size_t i, std::size_t k) { return states[i][k]; };
    for (std::size_t k = 0; k < dim; ++k) {
        for (std::size_t i = 2; i + 2 < n; ++i)
            d(i, k) = (-s(i + 2, k) + 8.0 * s(i + 1, k) - 8.0 * s(i - 1, k) + s(i - 2, k)) /
                      (12.0 * dt);
        for (std::size_t i : {std::size_t{0}, std::size_t{1}})
            d(i, k) = (-25.0 * s(i, k) + 48.0 * s(i + 1, k) - 36.0 * s(i + 2, k) +
                       16.0 * s(i + 3, k) - 3.0 * s(i + 4, k)) /
                      (12.0 * dt);
        for (std::size_t i : {n - 2, n - 1})
            d(i, k) = (25.0 * s(i, k) - 48.0 * s(i - 1, k) + 36.0 * s(i - 2, k) -
                       16.0 * s(i - 3, k) + 3.0 * s(i - 4, k)) /
                      (12.0 * dt);
    }
    return d;
}

} // namespace detail

/// Sequentially thresholded least squares on the quadratic library.
inline SindyModel sindy_fit(const Trajectory& traj, double dt, double threshold,
                            std::size_t max_stlsq_iter = 20) {
    if (traj.states.size() < 6) throw std::invalid_argument("sindy_fit: trajectory too short");
    if (traj.states.front().size() != 3)
        throw std::invalid_argument("sindy_fit: expects a 3-state trajectory");
    const std::size_t n = traj.states.size();
    DenseMatrix theta(n, 10);
    for (std::size_t i = 0; i < n; ++i) {
        auto lib = sindy_library_row(traj.states[i][0], traj.states[i][1], traj.states[i][2]);
        for (int t = 0; t < 10; ++t) theta(i, t) = lib[t];
    }
    DenseMatrix dx = detail::fd_derivatives(traj.states, dt);

    SindyModel model;
    model.threshold = threshold;
    model.xi = DenseMatrix(10, 3);
    for (int d = 0; d < 3; ++d) {
        std::vector<double> b(n);
        for (std::size_t i = 0; i < n; ++i) b[i] = dx(i, d);

        std::vector<bool> active(10, true);
        std::vector<double> coeffs(10, 0.0);
        for (std::size_t iter = 0; iter < max_stlsq_iter; ++iter) {
            std::vector<std::size_t> idx;
            for (std::size_t t = 0; t < 10; ++t)
                if (active[t]) idx.push_back(t);
            if (idx.empty())
                throw std::runtime_error(
                    "sindy_fit: threshold eliminated every term for state " + std::to_string(d) +
                    "; try a smaller threshold");
            DenseMatrix sub(n, idx.size());
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t t = 0; t < idx.size(); ++t) sub(i, t) = theta(i, idx[t]);
            auto sol = lstsq(sub, b);
            bool changed = false;
            std::fill(coeffs.begin(), coeffs.end(), 0.0);
            for (std::size_t t = 0; t < idx.size(); ++t) {
                if (std::abs(sol[t]) < threshold) {
                    active[idx[t]] = false;
                    changed = true;
                } else {
                    coeffs[idx[t]] = sol[t];
                }
            }
            if (!changed) break;
        }
        bool any = false;
        for (bool a : active) any = any || a;
        if (!any)
            throw std::runtime_error("sindy_fit: threshold eliminated every term for state " +
                                     std::to_string(d) + "; try a smaller threshold");
        for (std::size_t t = 0; t < 10; ++t) model.xi(t, d) = coeffs[t];
    }
    return model;
}

struct SindyRollout {
    std::vector<std::vector<double>> states;
    bool diverged = false;
    std::size_t diverged_step = 0;
};

/// Integrates the identified ODE with fixed-step RK4, one sample per step.
inline SindyRollout sindy_simulate(const SindyModel& model, const std::vector<double>& x0,
                                   std::size_t steps, double dt) {
    OdeModel ode;
    ode.name = "sindy";
    ode.dimension = 3;
    ode.rhs = [&model](const std::vector<double>& s, double) { return model.rhs(s); };
    SindyRollout out;
    out.states.push_back(x0);
    std::vector<double> x = x0;
    for (std::size_t k = 0; k < steps; ++k) {
        x = rk4_step(ode, x, static_cast<double>(k) * dt, dt);
        double mag = 0.0;
        for (double v : x) mag = std::max(mag, std::abs(v));
        if (!std::isfinite(mag) || mag > 1e6) {
            out.diverged = true;
            out.diverged_step = k + 1;
            break;
        }
        out.states.push_back(x);
    }
    return out;
}

/// Static per-step inference cost of the identified model under the 2mk
/// convention: library evaluation (6 quadratic products) + RK4's four rhs
/// evaluations and state combinations.
inline std::size_t sindy_count_flops(const SindyModel& model) {
    const std::size_t lib = 6;
    const std::size_t apply = 2 * 3 * 10;
    const std::size_t rhs_eval = lib + apply;
    // RK4: 4 rhs evaluations, 3 stage states (2 flops per entry), final blend
    // (8 flops per entry after the h/6 fold).
    return 4 * rhs_eval + 3 * (2 * 3) + 8 * 3;
}

// ---------------------------------------------------------------------------
// Delay-embedding linear model of a scalar series (delay-DMD)
// ---------------------------------------------------------------------------

struct HavokModel {
    std::size_t q = 0;     // delay length (rows of the delay matrix)
    std::size_t rank = 0;  // retained delay coordinates
    DenseMatrix u;         // q x rank SVD basis
    std::vector<double> sigma;
    DenseMatrix m;         // rank x rank one-step map in delay coordinates
};

/// q-row delay matrix: D[i][j] = series[j + i], constant anti-diagonals by
/// construction.
inline DenseMatrix havok_delay_matrix(const std::vector<double>& series, std::size_t q) {
    if (series.size() < q) throw std::invalid_argument("havok_delay_matrix: series shorter than q");
    const std::size_t cols = series.size() - q + 1;
    DenseMatrix d(q, cols);
    for (std::size_t i = 0; i < q; ++i)
        for (std::size_t j = 0; j < cols; ++j) d(i, j) = series[j + i];
    return d;
}

/// Builds the q-row delay (Hankel) matrix of the series, keeps the leading
/// `rank` SVD coordinates, and fits the discrete linear map V_{k+1} = M V_k.
inline HavokModel havok_fit(const std::vector<double>& series, std::size_t q, std::size_t rank) {
    if (rank > q) throw std::invalid_argument("havok_fit: rank must not exceed the delay length");
    if (series.size() <= q + rank)
        throw std::invalid_argument("havok_fit: series shorter than q + rank");
    const std::size_t cols = series.size() - q + 1;
    DenseMatrix d = havok_delay_matrix(series, q);

    SvdResult sv = svd(d);
    HavokModel model;
    model.q = q;
    model.rank = rank;
    model.u = DenseMatrix(q, rank);
    for (std::size_t i = 0; i < q; ++i)
        for (std::size_t t = 0; t < rank; ++t) model.u(i, t) = sv.U(i, t);
    model.sigma.assign(sv.S.begin(), sv.S.begin() + rank);

    // Delay coordinates over time: row k of V (cols of D).
    DenseMatrix v0(rank, cols - 1), v1(rank, cols - 1);
    for (std::size_t j = 0; j + 1 < cols; ++j)
        for (std::size_t t = 0; t < rank; ++t) {
            v0(t, j) = sv.V(j, t);
            v1(t, j) = sv.V(j + 1, t);
        }
    model.m = multiply(v1, pinv(v0, 1e-12));
    return model;
}

/// Continues the series `steps` samples past the end of the seed window. The
/// delay state advances by M; each new sample is read off the reconstructed
/// window's last entry.
inline std::vector<double> havok_predict(const HavokModel& model,
                                         const std::vector<double>& seed_window,
                                         std::size_t steps, FlopCounter* fc = nullptr) {
    if (seed_window.size() != model.q)
        throw std::invalid_argument("havok_predict: seed window must have q samples");
    // v = S^{-1} U^T w; coordinates with (numerically) zero singular values
    // carry no signal and stay at zero.
    const double sigma_floor = model.sigma.empty() ? 0.0 : 1e-14 * model.sigma[0];
    std::vector<double> v(model.rank, 0.0);
    for (std::size_t t = 0; t < model.rank; ++t) {
        if (model.sigma[t] <= sigma_floor) continue;
        double s = 0.0;
        for (std::size_t i = 0; i < model.q; ++i) s += model.u(i, t) * seed_window[i];
        v[t] = s / model.sigma[t];
    }
    std::vector<double> out;
    out.reserve(steps);
    for (std::size_t k = 0; k < steps; ++k) {
        v = matvec(model.m, v);
        if (fc) fc->add_dense_matvec(model.rank, model.rank);
        double sample = 0.0;
        for (std::size_t t = 0; t < model.rank; ++t)
            sample += model.u(model.q - 1, t) * model.sigma[t] * v[t];
        if (fc) {
            fc->add_mults(2 * model.rank);
            fc->add_adds(model.rank);
        }
        out.push_back(sample);
    }
    return out;
}

inline std::size_t havok_count_params(const HavokModel& model) {
    return model.q * model.rank + model.rank + model.rank * model.rank;
}

} // namespace stnn
