#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "stnn/linalg.hpp"
#include "stnn/rng.hpp"

namespace stnn {

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

struct OdeModel {
    std::string name;
    int dimension = 0;
    std::map<std::string, double> parameters;
    std::function<std::vector<double>(const std::vector<double>&, double)> rhs;
};

inline std::array<double, 3> lorenz_rhs(const std::array<double, 3>& state, double sigma,
                                        double rho, double beta) {
    const double x = state[0], y = state[1], z = state[2];
    return {sigma * (y - x), x * (rho - z) - y, x * y - beta * z};
}

inline std::array<double, 2> lotka_volterra_rhs(const std::array<double, 2>& state, double alpha,
                                                double beta, double gamma, double delta) {
    const double x = state[0], y = state[1];
    return {alpha * x - beta * x * y, -gamma * y + delta * x * y};
}

inline OdeModel make_lorenz(double sigma = 10.0, double rho = 28.0, double beta = 8.0 / 3.0) {
    OdeModel m;
    m.name = "lorenz";
    m.dimension = 3;
    m.parameters = {{"sigma", sigma}, {"rho", rho}, {"beta", beta}};
    m.rhs = [sigma, rho, beta](const std::vector<double>& s, double) {
        auto d = lorenz_rhs({s[0], s[1], s[2]}, sigma, rho, beta);
        return std::vector<double>{d[0], d[1], d[2]};
    };
    return m;
}

/// One Lotka-Volterra "environment": a fixed positive parameter set.
struct Environment {
    int id = 0;
    double alpha = 1.0, beta = 1.0, gamma = 1.0, delta = 1.0;
};

inline OdeModel make_lotka_volterra(const Environment& env) {
    if (env.alpha <= 0 || env.beta <= 0 || env.gamma <= 0 || env.delta <= 0)
        throw std::invalid_argument("make_lotka_volterra: parameters must be positive");
    OdeModel m;
    m.name = "lotka_volterra";
    m.dimension = 2;
    m.parameters = {{"alpha", env.alpha}, {"beta", env.beta}, {"gamma", env.gamma},
                    {"delta", env.delta}};
    const Environment e = env;
    m.rhs = [e](const std::vector<double>& s, double) {
        auto d = lotka_volterra_rhs({s[0], s[1]}, e.alpha, e.beta, e.gamma, e.delta);
        return std::vector<double>{d[0], d[1]};
    };
    return m;
}

/// Default multi-environment setup: parameters drawn uniformly from
/// [0.25, 1.25] per environment from a fixed, documented seed.
inline std::vector<Environment> make_default_environments(int count = 10,
                                                          std::uint64_t seed = 2025) {
    std::vector<Environment> envs(count);
    for (int i = 0; i < count; ++i) {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i));
        envs[i].id = i;
        envs[i].alpha = rng.uniform(0.25, 1.25);
        envs[i].beta = rng.uniform(0.25, 1.25);
        envs[i].gamma = rng.uniform(0.25, 1.25);
        envs[i].delta = rng.uniform(0.25, 1.25);
    }
    return envs;
}

// ---------------------------------------------------------------------------
// Integration
// ---------------------------------------------------------------------------

struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> states;
    std::vector<double> initial_condition;
};

struct IntegrationError : std::runtime_error {
    double t_fail;
    explicit IntegrationError(double t)
        : std::runtime_error("integrate: step size underflow (stiffness?) at t = " +
                             std::to_string(t)),
          t_fail(t) {}
};

namespace detail {

struct Dopri5Step {
    std::vector<double> y5;   // 5th-order solution
    std::vector<double> err;  // embedded error estimate
    std::vector<double> k_last;
};

inline Dopri5Step dopri5_step(const OdeModel& model, double t, const std::vector<double>& y,
                              double h, const std::vector<double>& k1) {
    static constexpr double a21 = 1.0 / 5.0;
    static constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
    static constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
    static constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                            a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
    static constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                            a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
    static constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0,
                            b5 = -2187.0 / 6784.0, b6 = 11.0 / 84.0;
    static constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                            e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
    static constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0, c5 = 8.0 / 9.0;

    const std::size_t n = y.size();
    std::vector<double> tmp(n);

    auto stage = [&](const std::vector<std::pair<double, const std::vector<double>*>>& terms) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = y[i];
            for (const auto& [coef, k] : terms) s += h * coef * (*k)[i];
            tmp[i] = s;
        }
    };

    stage({{a21, &k1}});
    auto k2 = model.rhs(tmp, t + c2 * h);
    stage({{a31, &k1}, {a32, &k2}});
    auto k3 = model.rhs(tmp, t + c3 * h);
    stage({{a41, &k1}, {a42, &k2}, {a43, &k3}});
    auto k4 = model.rhs(tmp, t + c4 * h);
    stage({{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
    auto k5 = model.rhs(tmp, t + c5 * h);
    stage({{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
    auto k6 = model.rhs(tmp, t + h);

    Dopri5Step out;
    out.y5.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.y5[i] = y[i] + h * (b1 * k1[i] + b3 * k3[i] + b4 * k4[i] + b5 * k5[i] + b6 * k6[i]);
    auto k7 = model.rhs(out.y5, t + h);
    out.err.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        out.err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                          e7 * k7[i]);
    out.k_last = std::move(k7);
    return out;
}

} // namespace detail

/// Advances the state by exactly dt with the adaptive Dormand-Prince 5(4)
/// pair; per-step local error is controlled to tol (used as both absolute
/// and relative tolerance).
inline std::vector<double> advance(const OdeModel& model, std::vector<double> y, double t0,
                                   double dt, double tol) {
    if (dt == 0.0) return y;
    double t = t0;
    const double t_end = t0 + dt;
    double h = dt / 16.0;
    std::vector<double> k1 = model.rhs(y, t);
    int guard = 0;
    while (t < t_end) {
        if (++guard > 20000000) throw IntegrationError(t);
        if (t + h > t_end) h = t_end - t;
        auto step = detail::dopri5_step(model, t, y, h, k1);
        double err = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double sc = tol + tol * std::max(std::abs(y[i]), std::abs(step.y5[i]));
            const double q = step.err[i] / sc;
            err += q * q;
        }
        err = std::sqrt(err / static_cast<double>(y.size()));
        if (err <= 1.0) {
            t += h;
            y = std::move(step.y5);
            k1 = std::move(step.k_last); // FSAL
            const double grow = err < 1e-30 ? 5.0 : 0.9 * std::pow(err, -0.2);
            h *= std::min(5.0, std::max(0.2, grow));
        } else {
            h *= std::max(0.2, 0.9 * std::pow(err, -0.2));
        }
        if (h < 1e-14 * std::max(1.0, std::abs(t))) throw IntegrationError(t);
    }
    return y;
}

/// Integrates from t0, emitting samples at t0 + k * dt_sample on the
/// half-open window [t0, t1): the sample count is floor((t1 - t0)/dt_sample)
/// up to a grid-epsilon. Internal steps are adaptive; only the sampling grid
/// is fixed.
inline Trajectory integrate(const OdeModel& model, const std::vector<double>& x0, double t0,
                            double t1, double dt_sample, double tol) {
    if (t1 <= t0) throw std::invalid_argument("integrate: t1 must exceed t0");
    if (dt_sample <= 0.0) throw std::invalid_argument("integrate: dt_sample must be positive");
    if (tol <= 0.0) throw std::invalid_argument("integrate: tol must be positive");
    if (static_cast<int>(x0.size()) != model.dimension)
        throw std::invalid_argument("integrate: state dimension mismatch");

    const auto n_samples =
        static_cast<std::size_t>(std::floor((t1 - t0) / dt_sample + 1e-9));
    Trajectory traj;
    traj.initial_condition = x0;
    traj.times.reserve(n_samples);
    traj.states.reserve(n_samples);

    std::vector<double> y = x0;
    traj.times.push_back(t0);
    traj.states.push_back(y);
    for (std::size_t k = 1; k < n_samples; ++k) {
        const double ta = t0 + static_cast<double>(k - 1) * dt_sample;
        const double tb = t0 + static_cast<double>(k) * dt_sample;
        y = advance(model, std::move(y), ta, tb - ta, tol);
        traj.times.push_back(tb);
        traj.states.push_back(y);
    }
    return traj;
}

/// Classic fixed-step RK4; used by the order-check property and by the
/// sparse-regression baseline's simulator.
inline std::vector<double> rk4_step(const OdeModel& model, const std::vector<double>& y, double t,
                                    double h) {
    const std::size_t n = y.size();
    auto k1 = model.rhs(y, t);
    std::vector<double> tmp(n);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
    auto k2 = model.rhs(tmp, t + 0.5 * h);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
    auto k3 = model.rhs(tmp, t + 0.5 * h);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
    auto k4 = model.rhs(tmp, t + h);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Snapshot pairs: column j of inputs holds the state at some sample time,
/// column j of outputs the state advanced by exactly delta_t. Pairs never
/// cross trajectory boundaries.
struct TrajectoryDataset {
    DenseMatrix inputs;   // state_dim x m
    DenseMatrix outputs;  // state_dim x m
    double delta_t = 0.0;
    std::string source;   // generator description
    std::uint64_t seed = 0;

    std::size_t size() const { return inputs.cols; }
};

inline TrajectoryDataset pairs_from_trajectories(const std::vector<Trajectory>& trajectories,
                                                 double delta_t) {
    if (trajectories.empty()) throw std::invalid_argument("pairs_from_trajectories: no data");
    const std::size_t dim = trajectories.front().states.front().size();
    std::size_t total = 0;
    for (const auto& tr : trajectories) total += tr.states.size() - 1;
    TrajectoryDataset ds;
    ds.delta_t = delta_t;
    ds.inputs = DenseMatrix(dim, total);
    ds.outputs = DenseMatrix(dim, total);
    std::size_t col = 0;
    for (const auto& tr : trajectories) {
        for (std::size_t k = 0; k + 1 < tr.states.size(); ++k, ++col) {
            for (std::size_t d = 0; d < dim; ++d) {
                ds.inputs(d, col) = tr.states[k][d];
                ds.outputs(d, col) = tr.states[k + 1][d];
            }
        }
    }
    return ds;
}

/// Lorenz trajectories from the nominal state [0, 1, 20] perturbed by
/// uniform noise of the given magnitude. Each trajectory draws its own RNG
/// stream from (seed, index), so results do not depend on generation order.
inline std::vector<Trajectory> generate_lorenz_trajectories(std::size_t n_traj, double noise_mag,
                                                            std::uint64_t seed, double dt,
                                                            double t_end, double tol = 1e-12) {
    if (n_traj < 1) throw std::invalid_argument("generate_lorenz_trajectories: n_traj >= 1");
    OdeModel model = make_lorenz();
    std::vector<Trajectory> out(n_traj);
    for (std::size_t i = 0; i < n_traj; ++i) {
        Rng rng = Rng::stream(seed, i);
        std::vector<double> x0{0.0 + rng.uniform(-noise_mag, noise_mag),
                               1.0 + rng.uniform(-noise_mag, noise_mag),
                               20.0 + rng.uniform(-noise_mag, noise_mag)};
        out[i] = integrate(model, x0, 0.0, t_end, dt, tol);
    }
    return out;
}

inline TrajectoryDataset generate_lorenz_dataset(std::size_t n_traj, double noise_mag,
                                                 std::uint64_t seed, double dt, double t_end) {
    auto trajs = generate_lorenz_trajectories(n_traj, noise_mag, seed, dt, t_end);
    TrajectoryDataset ds = pairs_from_trajectories(trajs, dt);
    ds.source = "lorenz";
    ds.seed = seed;
    return ds;
}

/// Per-environment Lotka-Volterra data. Trajectories are sampled on the grid
/// t = 0.0, 0.5, ..., 9.5 (20 points); sample rows are (x, y, t, env_id) so
/// that one model can condition on time and environment.
struct LvEnvironmentData {
    Environment environment;
    std::vector<Trajectory> train_trajectories;
    std::vector<Trajectory> test_trajectories;
    TrajectoryDataset train_pairs;
    TrajectoryDataset test_pairs;
};

namespace detail {

inline TrajectoryDataset lv_pairs(const std::vector<Trajectory>& trajs, const Environment& env,
                                  double dt) {
    std::size_t total = 0;
    for (const auto& tr : trajs) total += tr.states.size() - 1;
    TrajectoryDataset ds;
    ds.delta_t = dt;
    ds.inputs = DenseMatrix(4, total);
    ds.outputs = DenseMatrix(4, total);
    std::size_t col = 0;
    for (const auto& tr : trajs) {
        for (std::size_t k = 0; k + 1 < tr.states.size(); ++k, ++col) {
            ds.inputs(0, col) = tr.states[k][0];
            ds.inputs(1, col) = tr.states[k][1];
            ds.inputs(2, col) = tr.times[k];
            ds.inputs(3, col) = static_cast<double>(env.id);
            ds.outputs(0, col) = tr.states[k + 1][0];
            ds.outputs(1, col) = tr.states[k + 1][1];
            ds.outputs(2, col) = tr.times[k + 1];
            ds.outputs(3, col) = static_cast<double>(env.id);
        }
    }
    return ds;
}

} // namespace detail

inline std::vector<LvEnvironmentData> generate_lv_dataset(const std::vector<Environment>& envs,
                                                          std::size_t n_train_traj = 8,
                                                          std::size_t n_test_traj = 32,
                                                          std::uint64_t seed = 0,
                                                          double tol = 1e-12) {
    if (envs.empty()) throw std::invalid_argument("generate_lv_dataset: no environments");
    constexpr double kDt = 0.5;
    constexpr double kTEnd = 10.0; // grid 0.0, 0.5, ..., 9.5
    std::vector<LvEnvironmentData> out(envs.size());
    for (std::size_t e = 0; e < envs.size(); ++e) {
        const Environment& env = envs[e];
        OdeModel model = make_lotka_volterra(env);
        out[e].environment = env;
        auto gen_traj = [&](std::size_t traj_index) {
            Rng rng = Rng::stream(seed, (static_cast<std::uint64_t>(env.id) << 24) + traj_index);
            std::vector<double> x0{rng.uniform(1.0, 3.0), rng.uniform(1.0, 3.0)};
            return integrate(model, x0, 0.0, kTEnd, kDt, tol);
        };
        for (std::size_t k = 0; k < n_train_traj; ++k)
            out[e].train_trajectories.push_back(gen_traj(k));
        for (std::size_t k = 0; k < n_test_traj; ++k)
            out[e].test_trajectories.push_back(gen_traj(n_train_traj + k));
        out[e].train_pairs = detail::lv_pairs(out[e].train_trajectories, env, kDt);
        out[e].test_pairs = detail::lv_pairs(out[e].test_trajectories, env, kDt);
        out[e].train_pairs.source = "lotka_volterra";
        out[e].train_pairs.seed = seed;
        out[e].test_pairs.source = "lotka_volterra";
        out[e].test_pairs.seed = seed;
    }
    return out;
}

/// Random permutation split; deterministic for a given seed. No pair lands in
/// both halves.
inline std::pair<TrajectoryDataset, TrajectoryDataset>
train_validation_split(const TrajectoryDataset& ds, double train_frac, std::uint64_t seed) {
    if (train_frac <= 0.0 || train_frac >= 1.0)
        throw std::invalid_argument("train_validation_split: train_frac must lie in (0, 1)");
    const std::size_t m = ds.size();
    const auto n_train = static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(m)));
    if (n_train == 0 || n_train == m)
        throw std::runtime_error("train_validation_split: a split half would be empty");

    std::vector<std::size_t> perm(m);
    for (std::size_t i = 0; i < m; ++i) perm[i] = i;
    Rng rng(derive_stream(seed, 0xABCD));
    rng.shuffle(perm);

    const std::size_t dim = ds.inputs.rows;
    auto take = [&](std::size_t begin, std::size_t end) {
        TrajectoryDataset part;
        part.delta_t = ds.delta_t;
        part.source = ds.source;
        part.seed = ds.seed;
        part.inputs = DenseMatrix(dim, end - begin);
        part.outputs = DenseMatrix(dim, end - begin);
        for (std::size_t c = begin; c < end; ++c) {
            for (std::size_t d = 0; d < dim; ++d) {
                part.inputs(d, c - begin) = ds.inputs(d, perm[c]);
                part.outputs(d, c - begin) = ds.outputs(d, perm[c]);
            }
        }
        return part;
    };
    return {take(0, n_train), take(n_train, m)};
}

} // namespace stnn
