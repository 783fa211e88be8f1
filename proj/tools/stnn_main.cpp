// Command-line front end: dataset generation, model training and fitting,
// autoregressive rollouts, the structured-matvec benchmark, and multi-model
// comparisons. Exit codes: 0 success, 2 configuration error, 3 numerical
// failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stnn/bestfit.hpp"
#include "stnn/experiment.hpp"
#include "stnn/hankel.hpp"
#include "stnn/io.hpp"

namespace {

using namespace stnn;

std::vector<double> parse_csv_doubles(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stod(cell));
    return out;
}

std::vector<std::size_t> parse_csv_sizes(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(std::stoul(cell));
    return out;
}

int cmd_generate(const std::string& system, std::size_t n_traj, double dt, double t_end,
                 double noise, std::uint64_t seed, std::size_t n_envs, std::size_t train_traj,
                 std::size_t test_traj, std::uint64_t env_seed, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    json manifest;
    manifest["system"] = system;
    manifest["seed"] = seed;
    if (system == "lorenz") {
        auto trajs = generate_lorenz_trajectories(n_traj, noise, seed, dt, t_end);
        std::vector<std::string> files;
        for (std::size_t i = 0; i < trajs.size(); ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "traj_%03zu.csv", i);
            write_trajectory_csv(out_dir + "/" + name, trajs[i]);
            files.push_back(name);
        }
        TrajectoryDataset pairs = pairs_from_trajectories(trajs, dt);
        write_pairs_csv(out_dir + "/pairs.csv", pairs);
        manifest["model"] = {{"sigma", 10.0}, {"rho", 28.0}, {"beta", 8.0 / 3.0}};
        manifest["dt"] = dt;
        manifest["t_end"] = t_end;
        manifest["noise"] = noise;
        manifest["n_trajectories"] = trajs.size();
        manifest["n_pairs"] = pairs.size();
        manifest["files"] = files;
    } else if (system == "lotka_volterra") {
        auto envs = make_default_environments(static_cast<int>(n_envs), env_seed);
        auto data = generate_lv_dataset(envs, train_traj, test_traj, seed);
        json env_list = json::array();
        std::vector<std::string> files;
        for (const auto& env_data : data) {
            const auto& env = env_data.environment;
            env_list.push_back({{"id", env.id},
                                {"alpha", env.alpha},
                                {"beta", env.beta},
                                {"gamma", env.gamma},
                                {"delta", env.delta}});
            for (std::size_t k = 0; k < env_data.train_trajectories.size(); ++k) {
                char name[64];
                std::snprintf(name, sizeof(name), "env%02d_train_%02zu.csv", env.id, k);
                write_trajectory_csv(out_dir + "/" + name, env_data.train_trajectories[k]);
                files.push_back(name);
            }
            for (std::size_t k = 0; k < env_data.test_trajectories.size(); ++k) {
                char name[64];
                std::snprintf(name, sizeof(name), "env%02d_test_%02zu.csv", env.id, k);
                write_trajectory_csv(out_dir + "/" + name, env_data.test_trajectories[k]);
                files.push_back(name);
            }
        }
        manifest["environments"] = env_list;
        manifest["env_seed"] = env_seed;
        manifest["dt"] = 0.5;
        manifest["points_per_trajectory"] = 20;
        manifest["files"] = files;
    } else {
        throw std::invalid_argument("generate: unknown system '" + system + "'");
    }
    write_text_file(out_dir + "/manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << out_dir << "/manifest.json\n";
    return 0;
}

int cmd_fit_hankel(const std::string& input, double alpha, const std::string& out_path,
                   bool backtracking, std::size_t max_iter, double rel_tol, bool project) {
    TrajectoryDataset pairs = read_pairs_csv(input);
    FitProblem problem{pairs.inputs, pairs.outputs, alpha};
    FitOptions opts;
    opts.step_rule = backtracking ? StepRule::backtracking : StepRule::fixed;
    opts.max_iter = max_iter;
    opts.rel_tol = rel_tol;
    opts.project_hankel = project;
    FitResult res = fit_operator(problem, opts);
    write_matrix_csv(out_path, res.h_hat);

    json report;
    report["objective_trace"] = res.objective_trace;
    report["rank"] = res.rank;
    report["iterations"] = res.iterations;
    report["converged"] = res.converged;
    report["alpha"] = alpha;
    const std::string report_path =
        out_path + (out_path.size() > 4 && out_path.substr(out_path.size() - 4) == ".csv"
                        ? std::string(".report.json")
                        : std::string(".report.json"));
    write_text_file(report_path, report.dump(2) + "\n");
    std::cout << "wrote " << out_path << " and " << report_path << "\n";
    if (!res.converged) {
        std::cerr << "warning: fit did not reach rel_tol within " << res.iterations
                  << " iterations\n";
    }
    return 0;
}

int cmd_fit(const std::string& method, const std::string& input, const std::string& out_path,
            std::size_t rank, double threshold, std::size_t q, std::size_t r, int coord) {
    Trajectory traj = read_trajectory_csv(input);
    if (traj.times.size() < 2) throw std::invalid_argument("fit: trajectory too short");
    const double dt = traj.times[1] - traj.times[0];
    json model_json;
    if (method == "dmd") {
        std::vector<Trajectory> single{traj};
        TrajectoryDataset pairs = pairs_from_trajectories(single, dt);
        model_json = dmd_to_json(dmd_fit(pairs.inputs, pairs.outputs, rank));
    } else if (method == "sindy") {
        model_json = sindy_to_json(sindy_fit(traj, dt, threshold));
    } else if (method == "havok") {
        std::vector<double> series;
        for (const auto& s : traj.states) {
            if (coord < 0 || coord >= static_cast<int>(s.size()))
                throw std::invalid_argument("fit havok: coordinate out of range");
            series.push_back(s[coord]);
        }
        model_json = havok_to_json(havok_fit(series, q, r));
    } else {
        throw std::invalid_argument("fit: unknown method '" + method + "'");
    }
    write_text_file(out_path, model_json.dump() + "\n");
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_rollout(const std::string& model_path, std::size_t steps, const std::string& ic_text,
                const std::string& mode_text, double dt, const std::string& out_path) {
    json j = read_json_file(model_path);
    const std::string kind = j.value("model", "");
    std::vector<double> ic = parse_csv_doubles(ic_text);

    Trajectory traj;
    if (kind == "stnn") {
        StnnParams params = stnn_from_json(j);
        std::array<double, 4> x0{};
        RolloutMode mode;
        if (mode_text == "lorenz" || (mode_text.empty() && ic.size() == 3)) {
            if (ic.size() != 3)
                throw std::invalid_argument("rollout: lorenz mode expects 3 initial values");
            x0 = {ic[0], ic[1], ic[2], 0.0};
            mode = RolloutMode::lorenz_padding;
        } else if (mode_text == "lv") {
            if (ic.size() != 4)
                throw std::invalid_argument(
                    "rollout: lv mode expects 4 initial values (x, y, t, env)");
            x0 = {ic[0], ic[1], ic[2], ic[3]};
            mode = RolloutMode::lotka_volterra;
        } else {
            if (ic.size() != 4) throw std::invalid_argument("rollout: expects 4 initial values");
            x0 = {ic[0], ic[1], ic[2], ic[3]};
            mode = RolloutMode::plain;
        }
        auto res = rollout(params, x0, steps, mode, dt);
        for (std::size_t k = 0; k < res.states.size(); ++k) {
            traj.times.push_back(static_cast<double>(k) * dt);
            traj.states.push_back(
                {res.states[k][0], res.states[k][1], res.states[k][2], res.states[k][3]});
        }
        if (res.diverged)
            std::cerr << "warning: rollout diverged at step " << res.diverged_step << "\n";
    } else if (kind == "ffnn") {
        FfnnParams params = ffnn_from_json(j);
        if (ic.size() != params.config.layer_sizes.front())
            throw std::invalid_argument("rollout: initial state width mismatch");
        std::vector<double> x = ic;
        traj.times.push_back(0.0);
        traj.states.push_back(x);
        for (std::size_t k = 0; k < steps; ++k) {
            x = ffnn_forward(params, x);
            traj.times.push_back(static_cast<double>(k + 1) * dt);
            traj.states.push_back(x);
        }
    } else if (kind == "dmd") {
        DmdModel model = dmd_from_json(j);
        if (ic.size() != model.a.cols)
            throw std::invalid_argument("rollout: initial state width mismatch");
        auto res = dmd_rollout(model, ic, steps);
        for (std::size_t k = 0; k < res.states.size(); ++k) {
            traj.times.push_back(static_cast<double>(k) * dt);
            traj.states.push_back(res.states[k]);
        }
        if (res.diverged)
            std::cerr << "warning: rollout diverged at step " << res.diverged_step << "\n";
    } else if (kind == "sindy") {
        SindyModel model = sindy_from_json(j);
        if (ic.size() != 3) throw std::invalid_argument("rollout: sindy expects 3 initial values");
        auto res = sindy_simulate(model, ic, steps, dt);
        for (std::size_t k = 0; k < res.states.size(); ++k) {
            traj.times.push_back(static_cast<double>(k) * dt);
            traj.states.push_back(res.states[k]);
        }
        if (res.diverged)
            std::cerr << "warning: rollout diverged at step " << res.diverged_step << "\n";
    } else if (kind == "havok") {
        throw std::invalid_argument(
            "rollout: the delay model forecasts from a window, not a single state; use 'train "
            "havok' for the evaluation pipeline");
    } else {
        throw std::invalid_argument("rollout: unrecognized model file");
    }
    write_trajectory_csv(out_path, traj);
    std::cout << "wrote " << out_path << "\n";
    return 0;
}

int cmd_bench(const std::string& sizes_text, const std::string& out_path) {
    auto sizes = parse_csv_sizes(sizes_text);
    auto rows = complexity_report(sizes);
    std::string csv = "n,dense_flops,shift_flops,fft_flops\n";
    for (const auto& r : rows) {
        csv += std::to_string(r.n) + "," + std::to_string(r.dense_flops) + "," +
               std::to_string(r.shift_flops) + "," + std::to_string(r.fft_flops) + "\n";
    }
    if (out_path.empty()) {
        std::cout << csv;
    } else {
        write_text_file(out_path, csv);
        std::cout << "wrote " << out_path << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"structured-network toolkit for data-driven dynamical systems"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "generate trajectory datasets");
    std::string gen_system = "lorenz";
    std::size_t gen_n_traj = 10, gen_envs = 10, gen_train_traj = 8, gen_test_traj = 32;
    double gen_dt = 0.01, gen_T = 8.0, gen_noise = 1.0;
    std::uint64_t gen_seed = 1, gen_env_seed = 2025;
    std::string gen_out = "out";
    gen->add_option("--system", gen_system, "lorenz | lotka_volterra");
    gen->add_option("--n-traj", gen_n_traj, "trajectory count (lorenz)");
    gen->add_option("--dt", gen_dt, "sampling interval (lorenz)");
    gen->add_option("--T", gen_T, "time horizon (lorenz)");
    gen->add_option("--noise", gen_noise, "initial-condition noise magnitude");
    gen->add_option("--seed", gen_seed, "dataset seed");
    gen->add_option("--envs", gen_envs, "environment count (lotka_volterra)");
    gen->add_option("--train-traj", gen_train_traj, "train trajectories per environment");
    gen->add_option("--test-traj", gen_test_traj, "test trajectories per environment");
    gen->add_option("--env-seed", gen_env_seed, "environment parameter seed");
    gen->add_option("--out-dir", gen_out, "output directory");

    // train
    auto* train = app.add_subcommand("train", "run the train + evaluate pipeline");
    std::string train_model = "stnn", train_config, train_system, train_out = "out";
    int train_p = -1;
    long long train_epochs = -1, train_batch = -1;
    long long train_seed = -1, train_data_seed = -1, train_ntraj = -1, train_steps = -1;
    bool train_full = false;
    train->add_option("model", train_model, "stnn | ffnn | dmd | sindy | havok");
    train->add_option("--config", train_config, "experiment config JSON (flags override)");
    train->add_option("--system", train_system, "lorenz | lotka_volterra");
    train->add_option("--p", train_p, "parallel branches (stnn)");
    train->add_option("--epochs", train_epochs, "training epochs");
    train->add_option("--batch", train_batch, "mini-batch size");
    train->add_option("--steps-per-batch", train_steps, "LM iterations per mini-batch");
    train->add_option("--seed", train_seed, "training seed");
    train->add_option("--data-seed", train_data_seed, "dataset seed");
    train->add_option("--n-traj", train_ntraj, "trajectory count");
    train->add_flag("--full", train_full, "full-scale settings (100 trajectories, 20 epochs)");
    train->add_option("--out-dir", train_out, "output directory");

    // fit-hankel
    auto* fh = app.add_subcommand("fit-hankel", "best-fit operator from snapshot pairs");
    std::string fh_input, fh_out = "hhat.csv";
    double fh_alpha = 0.0, fh_rel_tol = 1e-10;
    std::size_t fh_max_iter = 5000;
    bool fh_backtracking = false, fh_project = false;
    fh->add_option("--input", fh_input, "pairs CSV (in1..inN,out1..outN)")->required();
    fh->add_option("--alpha", fh_alpha, "nuclear-norm weight");
    fh->add_option("--out", fh_out, "operator CSV path (report JSON written next to it)");
    fh->add_option("--max-iter", fh_max_iter, "iteration cap");
    fh->add_option("--rel-tol", fh_rel_tol, "relative objective tolerance");
    fh->add_flag("--backtracking", fh_backtracking, "backtracking step rule");
    fh->add_flag("--project-hankel", fh_project, "project the fit onto the Hankel structure");

    // fit
    auto* fit = app.add_subcommand("fit", "fit a classical model to a trajectory file");
    std::string fit_method, fit_input, fit_out = "model.json";
    std::size_t fit_rank = 0, fit_q = 100, fit_r = 15;
    double fit_threshold = 0.1;
    int fit_coord = 0;
    fit->add_option("method", fit_method, "dmd | sindy | havok")->required();
    fit->add_option("--input", fit_input, "trajectory CSV")->required();
    fit->add_option("--out", fit_out, "model JSON path");
    fit->add_option("--rank", fit_rank, "dmd truncation rank (0 = full)");
    fit->add_option("--threshold", fit_threshold, "sindy sparsity threshold");
    fit->add_option("--q", fit_q, "havok delay length");
    fit->add_option("--r", fit_r, "havok truncation rank");
    fit->add_option("--coord", fit_coord, "havok embedding coordinate (0-based)");

    // rollout
    auto* roll = app.add_subcommand("rollout", "autoregressive forecast from a model file");
    std::string roll_model, roll_ic = "0,1,20", roll_mode, roll_out = "rollout.csv";
    std::size_t roll_steps = 500;
    double roll_dt = 0.01;
    roll->add_option("--model", roll_model, "model JSON")->required();
    roll->add_option("--steps", roll_steps, "forecast steps");
    roll->add_option("--ic", roll_ic, "comma-separated initial state");
    roll->add_option("--mode", roll_mode, "lorenz | lv | plain (stnn models)");
    roll->add_option("--dt", roll_dt, "time stamp spacing (and sindy step)");
    roll->add_option("--out", roll_out, "trajectory CSV path");

    // bench
    auto* bench = app.add_subcommand("bench", "flop benchmarks");
    std::string bench_what = "hankel", bench_sizes = "2,4,8,16,32,64,128", bench_out;
    bench->add_option("what", bench_what, "hankel");
    bench->add_option("--sizes", bench_sizes, "comma-separated operator sizes");
    bench->add_option("--out", bench_out, "CSV path (stdout when omitted)");

    // compare
    auto* cmp = app.add_subcommand("compare", "run several configs on a shared split");
    std::vector<std::string> cmp_configs;
    std::string cmp_out = "out";
    cmp->add_option("--config", cmp_configs, "config JSON (repeat per model)")->required();
    cmp->add_option("--out-dir", cmp_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed())
            return cmd_generate(gen_system, gen_n_traj, gen_dt, gen_T, gen_noise, gen_seed,
                                gen_envs, gen_train_traj, gen_test_traj, gen_env_seed, gen_out);
        if (train->parsed()) {
            stnn::ExperimentConfig cfg;
            if (!train_config.empty())
                cfg = stnn::ExperimentConfig::from_json(stnn::read_json_file(train_config));
            cfg.model = train_model;
            if (!train_system.empty()) cfg.system = train_system;
            if (train_p > 0) cfg.p = train_p;
            if (train_epochs >= 0) cfg.epochs = static_cast<std::size_t>(train_epochs);
            if (train_batch > 0) cfg.batch = static_cast<std::size_t>(train_batch);
            if (train_steps > 0) cfg.steps_per_batch = static_cast<std::size_t>(train_steps);
            if (train_seed >= 0) cfg.train_seed = static_cast<std::uint64_t>(train_seed);
            if (train_data_seed >= 0) cfg.data_seed = static_cast<std::uint64_t>(train_data_seed);
            if (train_ntraj > 0) cfg.n_traj = static_cast<std::size_t>(train_ntraj);
            if (train_full) {
                cfg.n_traj = 100;
                cfg.epochs = 20;
            }
            auto art = stnn::run(cfg);
            stnn::write_run_artifacts(cfg, art, train_out);
            std::cout << "model=" << art.metrics.model
                      << " train_error=" << stnn::format_double(art.metrics.train_error, 6)
                      << " params=" << art.metrics.params << " flops=" << art.metrics.flops
                      << " test_mse=" << stnn::format_double(art.metrics.test_mse, 6) << "\n"
                      << "artifacts in " << train_out << "\n";
            return 0;
        }
        if (fh->parsed())
            return cmd_fit_hankel(fh_input, fh_alpha, fh_out, fh_backtracking, fh_max_iter,
                                  fh_rel_tol, fh_project);
        if (fit->parsed())
            return cmd_fit(fit_method, fit_input, fit_out, fit_rank, fit_threshold, fit_q, fit_r,
                           fit_coord);
        if (roll->parsed())
            return cmd_rollout(roll_model, roll_steps, roll_ic, roll_mode, roll_dt, roll_out);
        if (bench->parsed()) {
            if (bench_what != "hankel")
                throw std::invalid_argument("bench: unknown benchmark '" + bench_what + "'");
            return cmd_bench(bench_sizes, bench_out);
        }
        if (cmp->parsed()) {
            std::vector<stnn::ExperimentConfig> configs;
            for (const auto& path : cmp_configs)
                configs.push_back(stnn::ExperimentConfig::from_json(stnn::read_json_file(path)));
            auto result = stnn::compare(configs);
            std::filesystem::create_directories(cmp_out);
            stnn::write_text_file(cmp_out + "/comparison.csv", result.csv);
            stnn::write_text_file(cmp_out + "/timing.csv", stnn::timing_csv(result.rows));
            std::cout << result.csv;
            std::cout << "wrote " << cmp_out << "/comparison.csv\n";
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
