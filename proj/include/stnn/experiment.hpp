#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "stnn/baselines.hpp"
#include "stnn/dynsys.hpp"
#include "stnn/io.hpp"
#include "stnn/network.hpp"

namespace stnn {

// ---------------------------------------------------------------------------
// Experiment configuration. A config plus the code version determines every
// output byte; all randomness flows from the seeds below.
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    std::string system = "lorenz"; // lorenz | lotka_volterra
    std::string model = "stnn";    // stnn | ffnn | dmd | sindy | havok

    // model
    int p = 6;
    std::array<Activation, 4> activations{Activation{ActKind::tanh_fn},
                                          Activation{ActKind::leaky_relu, 0.01},
                                          Activation{ActKind::relu},
                                          Activation{ActKind::identity}};
    std::array<double, 4> alpha{0.0, 1e-7, 0.0, 0.0};
    std::size_t dmd_rank = 0; // 0 keeps the full operator
    double sindy_threshold = 0.1;
    double sindy_dt = 0.001;
    double sindy_t_end = 10.0;
    std::size_t havok_q = 100;
    std::size_t havok_r = 15;

    // dataset (lorenz)
    std::size_t n_traj = 10;
    double dt = 0.01;
    double t_end = 8.0;
    double noise = 1.0;
    std::uint64_t data_seed = 1;
    double train_frac = 0.8;
    std::uint64_t split_seed = 2;

    // dataset (lotka_volterra)
    std::size_t n_envs = 10;
    std::size_t lv_train_traj = 8;
    std::size_t lv_test_traj = 32;
    std::uint64_t env_seed = 2025;

    // training
    std::size_t epochs = 5;
    std::size_t batch = 1000;
    std::size_t steps_per_batch = 10;
    std::uint64_t train_seed = 7;
    double lm_lambda0 = 1e-3;
    double lm_up = 10.0;
    double lm_down = 0.2;

    // evaluation
    std::size_t rollout_steps = 500;
    std::size_t eval_prefix = 100; // truth samples preceding the forecast window
    std::uint64_t eval_seed = 99;

    json to_json() const {
        json j;
        j["system"] = system;
        j["model"] = model;
        j["model_params"] = {{"p", p},
                             {"activations", activations_to_json(activations)},
                             {"alpha", alpha},
                             {"dmd_rank", dmd_rank},
                             {"sindy_threshold", sindy_threshold},
                             {"sindy_dt", sindy_dt},
                             {"sindy_t_end", sindy_t_end},
                             {"havok_q", havok_q},
                             {"havok_r", havok_r}};
        j["dataset"] = {{"n_traj", n_traj},
                        {"dt", dt},
                        {"t_end", t_end},
                        {"noise", noise},
                        {"data_seed", data_seed},
                        {"train_frac", train_frac},
                        {"split_seed", split_seed},
                        {"n_envs", n_envs},
                        {"lv_train_traj", lv_train_traj},
                        {"lv_test_traj", lv_test_traj},
                        {"env_seed", env_seed}};
        j["training"] = {{"epochs", epochs},
                         {"batch", batch},
                         {"steps_per_batch", steps_per_batch},
                         {"train_seed", train_seed},
                         {"lm_lambda0", lm_lambda0},
                         {"lm_up", lm_up},
                         {"lm_down", lm_down}};
        j["evaluation"] = {{"rollout_steps", rollout_steps},
                           {"eval_prefix", eval_prefix},
                           {"eval_seed", eval_seed}};
        return j;
    }

    static ExperimentConfig from_json(const json& j) {
        ExperimentConfig c;
        c.system = j.value("system", c.system);
        c.model = j.value("model", c.model);
        if (j.contains("model_params")) {
            const json& m = j["model_params"];
            c.p = m.value("p", c.p);
            if (m.contains("activations")) c.activations = activations_from_json(m["activations"]);
            if (m.contains("alpha")) {
                auto a = m["alpha"].get<std::vector<double>>();
                if (a.size() != 4) throw std::invalid_argument("alpha must have 4 entries");
                for (int i = 0; i < 4; ++i) c.alpha[i] = a[i];
            }
            c.dmd_rank = m.value("dmd_rank", c.dmd_rank);
            c.sindy_threshold = m.value("sindy_threshold", c.sindy_threshold);
            c.sindy_dt = m.value("sindy_dt", c.sindy_dt);
            c.sindy_t_end = m.value("sindy_t_end", c.sindy_t_end);
            c.havok_q = m.value("havok_q", c.havok_q);
            c.havok_r = m.value("havok_r", c.havok_r);
        }
        if (j.contains("dataset")) {
            const json& d = j["dataset"];
            c.n_traj = d.value("n_traj", c.n_traj);
            c.dt = d.value("dt", c.dt);
            c.t_end = d.value("t_end", c.t_end);
            c.noise = d.value("noise", c.noise);
            c.data_seed = d.value("data_seed", c.data_seed);
            c.train_frac = d.value("train_frac", c.train_frac);
            c.split_seed = d.value("split_seed", c.split_seed);
            c.n_envs = d.value("n_envs", c.n_envs);
            c.lv_train_traj = d.value("lv_train_traj", c.lv_train_traj);
            c.lv_test_traj = d.value("lv_test_traj", c.lv_test_traj);
            c.env_seed = d.value("env_seed", c.env_seed);
        }
        if (j.contains("training")) {
            const json& t = j["training"];
            c.epochs = t.value("epochs", c.epochs);
            c.batch = t.value("batch", c.batch);
            c.steps_per_batch = t.value("steps_per_batch", c.steps_per_batch);
            c.train_seed = t.value("train_seed", c.train_seed);
            c.lm_lambda0 = t.value("lm_lambda0", c.lm_lambda0);
            c.lm_up = t.value("lm_up", c.lm_up);
            c.lm_down = t.value("lm_down", c.lm_down);
        }
        if (j.contains("evaluation")) {
            const json& e = j["evaluation"];
            c.rollout_steps = e.value("rollout_steps", c.rollout_steps);
            c.eval_prefix = e.value("eval_prefix", c.eval_prefix);
            c.eval_seed = e.value("eval_seed", c.eval_seed);
        }
        return c;
    }

    void validate() const {
        if (system != "lorenz" && system != "lotka_volterra")
            throw std::invalid_argument("config: unknown system '" + system + "'");
        if (model != "stnn" && model != "ffnn" && model != "dmd" && model != "sindy" &&
            model != "havok")
            throw std::invalid_argument("config: unknown model '" + model + "'");
        if (system == "lotka_volterra" && model != "stnn")
            throw std::invalid_argument(
                "config: the lotka_volterra protocol is defined for the stnn model");
        if (model == "havok" && eval_prefix != havok_q)
            throw std::invalid_argument(
                "config: havok needs eval_prefix == havok_q so the forecast window lines up");
        if (rollout_steps < 1) throw std::invalid_argument("config: rollout_steps >= 1");
        if (eval_prefix < 1) throw std::invalid_argument("config: eval_prefix >= 1");
    }

    std::string hash() const {
        const std::string dump = to_json().dump();
        std::uint64_t h = 1469598103934665603ULL; // FNV-1a
        for (unsigned char c : dump) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }
};

struct MetricsRow {
    std::string model;
    double train_error = 0.0;
    std::size_t params = 0;
    std::size_t flops = 0;
    double train_time_seconds = 0.0;
    double test_mse = 0.0;
    double inference_time_ms = 0.0;
};

struct RunArtifacts {
    MetricsRow metrics;
    json model_json;
    std::string trajectory_header;
    std::vector<std::vector<double>> trajectory_rows;
    bool rollout_diverged = false;
};

namespace detail {

inline double median_step_time_ms(const std::function<void()>& step, int warmup = 100,
                                  int reps = 1000) {
    for (int i = 0; i < warmup; ++i) step();
    std::vector<double> times(reps);
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        step();
        times[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                       .count();
    }
    std::nth_element(times.begin(), times.begin() + reps / 2, times.end());
    return times[reps / 2];
}

inline double mse_over(const std::vector<std::vector<double>>& pred,
                       const std::vector<std::vector<double>>& truth, std::size_t coords) {
    if (pred.empty()) return std::numeric_limits<double>::infinity();
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < pred.size() && k < truth.size(); ++k)
        for (std::size_t d = 0; d < coords; ++d) {
            const double e = pred[k][d] - truth[k][d];
            acc += e * e;
            ++count;
        }
    return acc / static_cast<double>(count);
}

inline TrajectoryDataset pad_to_width4(const TrajectoryDataset& ds) {
    TrajectoryDataset out;
    out.delta_t = ds.delta_t;
    out.source = ds.source;
    out.seed = ds.seed;
    out.inputs = DenseMatrix(4, ds.size());
    out.outputs = DenseMatrix(4, ds.size());
    for (std::size_t c = 0; c < ds.size(); ++c)
        for (std::size_t d = 0; d < 3; ++d) {
            out.inputs(d, c) = ds.inputs(d, c);
            out.outputs(d, c) = ds.outputs(d, c);
        }
    return out;
}

struct StageGuard {
    const ExperimentConfig& cfg;
    const char* stage;
    template <class Fn>
    auto operator()(Fn&& fn) -> decltype(fn()) {
        try {
            return fn();
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("stage '" + std::string(stage) + "' failed (config " +
                                        cfg.hash() + "): " + e.what());
        } catch (const std::exception& e) {
            throw std::runtime_error("stage '" + std::string(stage) + "' failed (config " +
                                     cfg.hash() + "): " + e.what());
        }
    }
};

} // namespace detail

// ---------------------------------------------------------------------------
// Lorenz experiment
// ---------------------------------------------------------------------------

namespace detail {

inline RunArtifacts run_lorenz(const ExperimentConfig& cfg) {
    RunArtifacts art;
    art.metrics.model = cfg.model;

    // generate
    std::vector<Trajectory> trajectories = StageGuard{cfg, "generate"}([&] {
        return generate_lorenz_trajectories(cfg.n_traj, cfg.noise, cfg.data_seed, cfg.dt,
                                            cfg.t_end);
    });
    TrajectoryDataset pairs = pairs_from_trajectories(trajectories, cfg.dt);
    pairs.source = "lorenz";
    pairs.seed = cfg.data_seed;

    // split
    auto [train, val] = StageGuard{cfg, "split"}(
        [&] { return train_validation_split(pairs, cfg.train_frac, cfg.split_seed); });

    // shared evaluation split: one fresh trajectory; every model forecasts
    // the same window starting after eval_prefix samples
    Trajectory truth = StageGuard{cfg, "evaluate"}([&] {
        Rng rng = Rng::stream(cfg.eval_seed, 0xE7A1);
        std::vector<double> ic{0.0 + rng.uniform(-cfg.noise, cfg.noise),
                               1.0 + rng.uniform(-cfg.noise, cfg.noise),
                               20.0 + rng.uniform(-cfg.noise, cfg.noise)};
        const double horizon =
            (static_cast<double>(cfg.eval_prefix + cfg.rollout_steps) + 0.5) * cfg.dt;
        return integrate(make_lorenz(), ic, 0.0, horizon, cfg.dt, 1e-12);
    });
    const std::size_t start = cfg.eval_prefix - 1;
    const std::vector<double>& x_start = truth.states[start];
    std::vector<std::vector<double>> truth_window(
        truth.states.begin() + start + 1,
        truth.states.begin() + start + 1 + cfg.rollout_steps);

    TrainOptions topts;
    topts.epochs = cfg.epochs;
    topts.batch_size = std::min<std::size_t>(cfg.batch, train.size());
    topts.steps_per_batch = cfg.steps_per_batch;
    topts.seed = cfg.train_seed;
    topts.lm.lambda0 = cfg.lm_lambda0;
    topts.lm.lambda_up = cfg.lm_up;
    topts.lm.lambda_down = cfg.lm_down;

    std::vector<std::vector<double>> pred;
    std::size_t pred_coords = 3;

    if (cfg.model == "stnn") {
        StnnConfig scfg;
        scfg.p = cfg.p;
        scfg.activations = cfg.activations;
        scfg.alpha = cfg.alpha;
        scfg.seed = cfg.train_seed;
        StnnParams params = init(scfg);
        TrajectoryDataset train4 = pad_to_width4(train);
        TrajectoryDataset val4 = pad_to_width4(val);
        TrainReport report =
            StageGuard{cfg, "train"}([&] { return train_lm(params, train4, val4, topts); });
        if (report.aborted)
            throw std::runtime_error("stage 'train' failed (config " + cfg.hash() +
                                     "): " + report.abort_reason);
        art.metrics.train_time_seconds = report.wall_time_seconds;
        art.metrics.train_error = loss(params, train4.inputs, train4.outputs, cfg.alpha);
        art.metrics.params = count_params(params);
        art.metrics.flops = count_flops(scfg);
        art.model_json = stnn_to_json(params);

        auto roll = rollout(params, {x_start[0], x_start[1], x_start[2], 0.0}, cfg.rollout_steps,
                            RolloutMode::lorenz_padding);
        art.rollout_diverged = roll.diverged;
        for (std::size_t k = 1; k < roll.states.size(); ++k)
            pred.push_back({roll.states[k][0], roll.states[k][1], roll.states[k][2]});
        std::array<double, 4> probe{x_start[0], x_start[1], x_start[2], 0.0};
        art.metrics.inference_time_ms =
            median_step_time_ms([&] { volatile double s = forward(params, probe.data())[0]; (void)s; });
    } else if (cfg.model == "ffnn") {
        FfnnConfig fcfg;
        fcfg.activations = cfg.activations;
        fcfg.alpha = {0, 0, 0, 0};
        fcfg.seed = cfg.train_seed;
        FfnnParams params = ffnn_init(fcfg);
        TrainReport report =
            StageGuard{cfg, "train"}([&] { return ffnn_train_lm(params, train, val, topts); });
        if (report.aborted)
            throw std::runtime_error("stage 'train' failed (config " + cfg.hash() +
                                     "): " + report.abort_reason);
        art.metrics.train_time_seconds = report.wall_time_seconds;
        art.metrics.train_error = ffnn_loss(params, train.inputs, train.outputs, fcfg.alpha);
        art.metrics.params = count_params(params);
        art.metrics.flops = count_flops(fcfg);
        art.model_json = ffnn_to_json(params);

        std::vector<double> x = x_start;
        for (std::size_t k = 0; k < cfg.rollout_steps; ++k) {
            x = ffnn_forward(params, x);
            double mag = std::max({std::abs(x[0]), std::abs(x[1]), std::abs(x[2])});
            if (!std::isfinite(mag) || mag > 1e6) {
                art.rollout_diverged = true;
                break;
            }
            pred.push_back(x);
        }
        std::vector<double> probe = x_start;
        art.metrics.inference_time_ms =
            median_step_time_ms([&] { volatile double s = ffnn_forward(params, probe)[0]; (void)s; });
    } else if (cfg.model == "dmd") {
        DmdModel model = StageGuard{cfg, "train"}(
            [&] { return dmd_fit(train.inputs, train.outputs, cfg.dmd_rank); });
        DenseMatrix resid = add_scaled(train.outputs, multiply(model.a, train.inputs), -1.0);
        const double f = frobenius_norm(resid);
        art.metrics.train_error = f * f / static_cast<double>(train.size() * 3);
        art.metrics.params = 9 + 3 * model.rank; // operator + spectral bookkeeping
        art.metrics.flops = 2 * 3 * 3;
        art.model_json = dmd_to_json(model);

        auto roll = dmd_rollout(model, x_start, cfg.rollout_steps);
        art.rollout_diverged = roll.diverged;
        for (std::size_t k = 1; k < roll.states.size(); ++k) pred.push_back(roll.states[k]);
        std::vector<double> probe = x_start;
        art.metrics.inference_time_ms =
            median_step_time_ms([&] { volatile double s = dmd_step(model, probe)[0]; (void)s; });
    } else if (cfg.model == "sindy") {
        Trajectory fine = StageGuard{cfg, "train"}([&] {
            Rng rng = Rng::stream(cfg.data_seed, 0);
            std::vector<double> ic{0.0 + rng.uniform(-cfg.noise, cfg.noise),
                                   1.0 + rng.uniform(-cfg.noise, cfg.noise),
                                   20.0 + rng.uniform(-cfg.noise, cfg.noise)};
            return integrate(make_lorenz(), ic, 0.0, cfg.sindy_t_end, cfg.sindy_dt, 1e-12);
        });
        const auto t0 = std::chrono::steady_clock::now();
        SindyModel model = StageGuard{cfg, "train"}(
            [&] { return sindy_fit(fine, cfg.sindy_dt, cfg.sindy_threshold); });
        art.metrics.train_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        // one-step prediction error on the training pairs
        double acc = 0.0;
        OdeModel ode;
        ode.dimension = 3;
        ode.rhs = [&model](const std::vector<double>& s, double) { return model.rhs(s); };
        for (std::size_t c = 0; c < train.size(); ++c) {
            std::vector<double> x{train.inputs(0, c), train.inputs(1, c), train.inputs(2, c)};
            auto y = rk4_step(ode, x, 0.0, cfg.dt);
            for (int d = 0; d < 3; ++d) {
                const double e = y[d] - train.outputs(d, c);
                acc += e * e;
            }
        }
        art.metrics.train_error = acc / static_cast<double>(train.size() * 3);
        art.metrics.params = model.nonzero_count();
        art.metrics.flops = sindy_count_flops(model);
        art.model_json = sindy_to_json(model);

        auto roll = sindy_simulate(model, x_start, cfg.rollout_steps, cfg.dt);
        art.rollout_diverged = roll.diverged;
        for (std::size_t k = 1; k < roll.states.size(); ++k) pred.push_back(roll.states[k]);
        std::vector<double> probe = x_start;
        art.metrics.inference_time_ms = median_step_time_ms(
            [&] { volatile double s = rk4_step(ode, probe, 0.0, cfg.dt)[0]; (void)s; });
    } else if (cfg.model == "havok") {
        std::vector<double> series;
        for (const auto& s : trajectories.front().states) series.push_back(s[0]);
        const auto t0 = std::chrono::steady_clock::now();
        HavokModel model = StageGuard{cfg, "train"}(
            [&] { return havok_fit(series, cfg.havok_q, cfg.havok_r); });
        art.metrics.train_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        // one-step prediction error over the training series
        double acc = 0.0;
        std::size_t count = 0;
        std::vector<double> window(cfg.havok_q);
        for (std::size_t k = cfg.havok_q - 1; k + 1 < series.size(); k += 7) {
            for (std::size_t i = 0; i < cfg.havok_q; ++i)
                window[i] = series[k + 1 - cfg.havok_q + i];
            auto one = havok_predict(model, window, 1);
            const double e = one[0] - series[k + 1];
            acc += e * e;
            ++count;
        }
        art.metrics.train_error = acc / static_cast<double>(count);
        art.metrics.params = havok_count_params(model);
        FlopCounter fc;
        std::vector<double> w0(series.begin(), series.begin() + cfg.havok_q);
        havok_predict(model, w0, 1, &fc);
        art.metrics.flops = fc.total();
        art.model_json = havok_to_json(model);

        std::vector<double> eval_window;
        for (std::size_t k = 0; k < cfg.eval_prefix; ++k)
            eval_window.push_back(truth.states[k][0]);
        auto series_pred = havok_predict(model, eval_window, cfg.rollout_steps);
        for (double v : series_pred) pred.push_back({v});
        pred_coords = 1;
        art.metrics.inference_time_ms = median_step_time_ms(
            [&] { volatile double s = havok_predict(model, w0, 1)[0]; (void)s; });
    }

    art.metrics.test_mse = mse_over(pred, truth_window, pred_coords);

    // trajectory table: t, truth, prediction
    if (pred_coords == 3) {
        art.trajectory_header = "t,x_true,y_true,z_true,x_pred,y_pred,z_pred";
        for (std::size_t k = 0; k < pred.size(); ++k) {
            const std::size_t idx = start + 1 + k;
            art.trajectory_rows.push_back({truth.times[idx], truth.states[idx][0],
                                           truth.states[idx][1], truth.states[idx][2], pred[k][0],
                                           pred[k][1], pred[k][2]});
        }
    } else {
        art.trajectory_header = "t,x_true,x_pred";
        for (std::size_t k = 0; k < pred.size(); ++k) {
            const std::size_t idx = start + 1 + k;
            art.trajectory_rows.push_back({truth.times[idx], truth.states[idx][0], pred[k][0]});
        }
    }
    return art;
}

inline RunArtifacts run_lotka_volterra(const ExperimentConfig& cfg) {
    RunArtifacts art;
    art.metrics.model = cfg.model;

    auto envs = make_default_environments(static_cast<int>(cfg.n_envs), cfg.env_seed);
    auto data = StageGuard{cfg, "generate"}([&] {
        return generate_lv_dataset(envs, cfg.lv_train_traj, cfg.lv_test_traj, cfg.data_seed);
    });

    // concatenate per-environment pairs
    std::size_t train_total = 0, test_total = 0;
    for (const auto& env_data : data) {
        train_total += env_data.train_pairs.size();
        test_total += env_data.test_pairs.size();
    }
    TrajectoryDataset train, val;
    train.inputs = DenseMatrix(4, train_total);
    train.outputs = DenseMatrix(4, train_total);
    val.inputs = DenseMatrix(4, test_total);
    val.outputs = DenseMatrix(4, test_total);
    train.delta_t = val.delta_t = 0.5;
    std::size_t tc = 0, vc = 0;
    for (const auto& env_data : data) {
        for (std::size_t c = 0; c < env_data.train_pairs.size(); ++c, ++tc)
            for (int d = 0; d < 4; ++d) {
                train.inputs(d, tc) = env_data.train_pairs.inputs(d, c);
                train.outputs(d, tc) = env_data.train_pairs.outputs(d, c);
            }
        for (std::size_t c = 0; c < env_data.test_pairs.size(); ++c, ++vc)
            for (int d = 0; d < 4; ++d) {
                val.inputs(d, vc) = env_data.test_pairs.inputs(d, c);
                val.outputs(d, vc) = env_data.test_pairs.outputs(d, c);
            }
    }

    StnnConfig scfg;
    scfg.p = cfg.p;
    scfg.activations = cfg.activations;
    scfg.alpha = cfg.alpha;
    scfg.seed = cfg.train_seed;
    StnnParams params = init(scfg);

    TrainOptions topts;
    topts.epochs = cfg.epochs;
    topts.batch_size = std::min<std::size_t>(cfg.batch, train.size());
    topts.steps_per_batch = cfg.steps_per_batch;
    topts.seed = cfg.train_seed;
    topts.lm.lambda0 = cfg.lm_lambda0;
    topts.lm.lambda_up = cfg.lm_up;
    topts.lm.lambda_down = cfg.lm_down;

    TrainReport report =
        StageGuard{cfg, "train"}([&] { return train_lm(params, train, val, topts); });
    if (report.aborted)
        throw std::runtime_error("stage 'train' failed (config " + cfg.hash() +
                                 "): " + report.abort_reason);
    art.metrics.train_time_seconds = report.wall_time_seconds;
    art.metrics.train_error = loss(params, train.inputs, train.outputs, cfg.alpha);
    art.metrics.params = count_params(params);
    art.metrics.flops = count_flops(scfg);
    art.model_json = stnn_to_json(params);

    // autoregressive rollout over each test trajectory: the model sees only
    // (x0, y0, t0, env) and predicts the remaining 19 points
    double env_mse_sum = 0.0;
    bool any_diverged = false;
    for (const auto& env_data : data) {
        double traj_mse_sum = 0.0;
        for (const auto& traj : env_data.test_trajectories) {
            const std::size_t steps = traj.states.size() - 1;
            auto roll = rollout(params,
                                {traj.states[0][0], traj.states[0][1], 0.0,
                                 static_cast<double>(env_data.environment.id)},
                                steps, RolloutMode::lotka_volterra, 0.5);
            any_diverged = any_diverged || roll.diverged;
            double acc = 0.0;
            std::size_t count = 0;
            for (std::size_t k = 1; k < roll.states.size(); ++k) {
                for (int d = 0; d < 2; ++d) {
                    const double e = roll.states[k][d] - traj.states[k][d];
                    acc += e * e;
                    ++count;
                }
            }
            traj_mse_sum += count ? acc / static_cast<double>(count)
                                  : std::numeric_limits<double>::infinity();
        }
        env_mse_sum += traj_mse_sum / static_cast<double>(env_data.test_trajectories.size());
    }
    art.metrics.test_mse = env_mse_sum / static_cast<double>(data.size());
    art.rollout_diverged = any_diverged;

    std::array<double, 4> probe{2.0, 2.0, 0.0, 0.0};
    art.metrics.inference_time_ms =
        median_step_time_ms([&] { volatile double s = forward(params, probe.data())[0]; (void)s; });

    // trajectory table: first test trajectory of the first environment
    const auto& demo = data.front().test_trajectories.front();
    auto roll = rollout(params,
                        {demo.states[0][0], demo.states[0][1], 0.0,
                         static_cast<double>(data.front().environment.id)},
                        demo.states.size() - 1, RolloutMode::lotka_volterra, 0.5);
    art.trajectory_header = "t,x_true,y_true,x_pred,y_pred";
    for (std::size_t k = 1; k < roll.states.size(); ++k)
        art.trajectory_rows.push_back({demo.times[k], demo.states[k][0], demo.states[k][1],
                                       roll.states[k][0], roll.states[k][1]});
    return art;
}

} // namespace detail

inline RunArtifacts run(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.system == "lorenz") return detail::run_lorenz(cfg);
    return detail::run_lotka_volterra(cfg);
}

// ---------------------------------------------------------------------------
// Artifact emission
// ---------------------------------------------------------------------------

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
    std::string out = "model,train_error,params,flops,test_mse\n";
    for (const auto& r : rows) {
        out += r.model + "," + format_double(r.train_error, 12) + "," + std::to_string(r.params) +
               "," + std::to_string(r.flops) + "," + format_double(r.test_mse, 12) + "\n";
    }
    return out;
}

/// Wall-clock measurements live next to the metrics, not inside them, so the
/// metrics file stays a pure function of the config.
inline std::string timing_csv(const std::vector<MetricsRow>& rows) {
    std::string out = "model,train_time_s,inference_time_ms\n";
    for (const auto& r : rows) {
        out += r.model + "," + format_double(r.train_time_seconds, 6) + "," +
               format_double(r.inference_time_ms, 6) + "\n";
    }
    return out;
}

inline void write_run_artifacts(const ExperimentConfig& cfg, const RunArtifacts& art,
                                const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    write_text_file(out_dir + "/metrics.csv", metrics_csv({art.metrics}));
    write_text_file(out_dir + "/timing.csv", timing_csv({art.metrics}));
    write_text_file(out_dir + "/config.json", cfg.to_json().dump(2) + "\n");
    write_text_file(out_dir + "/model.json", art.model_json.dump() + "\n");
    std::string traj = art.trajectory_header + "\n";
    for (const auto& row : art.trajectory_rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            traj += (i ? "," : "") + format_double(row[i]);
        traj += "\n";
    }
    write_text_file(out_dir + "/trajectory.csv", traj);
}

// ---------------------------------------------------------------------------
// Comparison harness
// ---------------------------------------------------------------------------

struct CompareResult {
    std::vector<MetricsRow> rows;
    std::string csv;
};

/// Runs each config on the shared split and emits per-model rows plus
/// savings columns 100 * (1 - model/baseline) for parameters and flops. The
/// baseline row is the unique ffnn config when present, the last config
/// otherwise.
inline CompareResult compare(const std::vector<ExperimentConfig>& configs) {
    if (configs.size() < 2) throw std::invalid_argument("compare: need at least 2 configs");
    const json dataset_ref = configs.front().to_json()["dataset"];
    const json eval_ref = configs.front().to_json()["evaluation"];
    const std::string system_ref = configs.front().system;
    for (const auto& c : configs) {
        if (c.system != system_ref || c.to_json()["dataset"] != dataset_ref ||
            c.to_json()["evaluation"] != eval_ref)
            throw std::invalid_argument(
                "compare: configs must share the system, dataset and evaluation split");
    }

    CompareResult result;
    for (const auto& c : configs) result.rows.push_back(run(c).metrics);

    std::size_t baseline = configs.size() - 1;
    std::size_t ffnn_count = 0;
    for (std::size_t i = 0; i < result.rows.size(); ++i) {
        if (result.rows[i].model == "ffnn") {
            baseline = i;
            ++ffnn_count;
        }
    }
    if (ffnn_count > 1) baseline = configs.size() - 1;

    const MetricsRow& base = result.rows[baseline];
    std::string csv =
        "model,train_error,params,flops,test_mse,param_saving_pct,flop_saving_pct\n";
    for (const auto& r : result.rows) {
        const double psave =
            100.0 * (1.0 - static_cast<double>(r.params) / static_cast<double>(base.params));
        const double fsave =
            100.0 * (1.0 - static_cast<double>(r.flops) / static_cast<double>(base.flops));
        csv += r.model + "," + format_double(r.train_error, 12) + "," + std::to_string(r.params) +
               "," + std::to_string(r.flops) + "," + format_double(r.test_mse, 12) + "," +
               format_double(psave, 6) + "," + format_double(fsave, 6) + "\n";
    }
    csv += "# savings are measured against the '" + base.model +
           "' row; published figures for the p=6 structured model report 81% parameter and "
           "76%/78% flop savings\n";
    result.csv = csv;
    return result;
}

} // namespace stnn
