// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Runs the full desk-scale training pipelines, so expect a few
// minutes of wall time in total.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "stnn/baselines.hpp"
#include "stnn/bestfit.hpp"
#include "stnn/experiment.hpp"
#include "stnn/hankel.hpp"
#include "stnn/io.hpp"
#include "stnn/network.hpp"

using namespace stnn;

namespace {

int g_failures = 0;

struct Timer {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(int criterion, bool pass, const std::string& detail, double elapsed_s,
            double budget_s) {
    const bool in_budget = budget_s <= 0.0 || elapsed_s <= budget_s;
    if (!pass || !in_budget) ++g_failures;
    std::printf("[%s] criterion %d: %s (%.1f s%s)\n", pass && in_budget ? "PASS" : "FAIL",
                criterion, detail.c_str(), elapsed_s,
                budget_s > 0.0 && !in_budget ? ", over budget" : "");
    std::fflush(stdout);
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

// --- criterion 1: three-way matvec equivalence ------------------------------

void criterion_1() {
    Timer timer;
    double worst = 0.0;
    for (std::size_t n : {2u, 4u, 8u, 16u, 32u, 64u}) {
        for (int rep = 0; rep < 100; ++rep) {
            Rng rng(10000 + n * 1000 + rep);
            HankelOperator h(random_vec(n, rng));
            auto x = random_vec(n, rng);
            auto d = matvec_dense(h, x);
            FlopCounter f1, f2;
            auto s = matvec_shift(h, x, f1);
            auto f = matvec_fft(h, x, f2);
            double scale = 0.0;
            for (double v : d) scale = std::max(scale, std::abs(v));
            scale = std::max(scale, 1e-30);
            for (std::size_t i = 0; i < n; ++i) {
                worst = std::max(worst, std::abs(d[i] - s[i]) / scale);
                worst = std::max(worst, std::abs(d[i] - f[i]) / scale);
                worst = std::max(worst, std::abs(s[i] - f[i]) / scale);
            }
        }
    }
    report(1, worst < 1e-9,
           "dense/shift/fft matvecs agree to " + format_double(worst, 3) +
               " relative over n in {2..64} x 100 draws",
           timer.seconds(), 5.0);
}

// --- criterion 2: flop and parameter identities ------------------------------

void criterion_2() {
    Timer timer;
    bool pass = true;
    std::string detail = "instrumented counts:";
    for (int p : {1, 2, 4, 6, 8}) {
        StnnConfig cfg;
        cfg.p = p;
        cfg.seed = 11;
        auto params = init(cfg);
        FlopCounter fc;
        fc.count_bias_adds = true;
        double x[4] = {0.3, -0.4, 0.5, 0.0};
        forward(params, x, &fc);
        const bool ok = count_params(params) == 64u * p && fc.total() == 148u * p - 4 &&
                        count_params(cfg) == 64u * p && count_flops(cfg) == 148u * p - 4;
        pass = pass && ok;
        detail += " p=" + std::to_string(p) + ":" + std::to_string(count_params(params)) + "/" +
                  std::to_string(fc.total());
    }
    StnnConfig c6;
    c6.p = 6;
    FfnnConfig fcfg;
    auto fp = ffnn_init(fcfg);
    FlopCounter ffc;
    ffnn_forward(fp, {0.1, 0.2, 0.3}, &ffc);
    pass = pass && count_flops(c6) == 884 && ffc.total() == 3960 && count_params(fp) == 2073;
    detail += " ffnn:" + std::to_string(count_params(fp)) + "/" + std::to_string(ffc.total());
    report(2, pass, detail, timer.seconds(), 1.0);
}

// --- criterion 3: planted low-rank fit ---------------------------------------

void criterion_3() {
    Timer timer;
    Rng rng(31);
    DenseMatrix u(8, 2), v(2, 8);
    for (auto& x : u.data) x = rng.uniform(-1, 1);
    for (auto& x : v.data) x = rng.uniform(-1, 1);
    DenseMatrix h_true = multiply(u, v);
    DenseMatrix x(8, 8);
    for (auto& e : x.data) e = rng.uniform(-1, 1);
    for (std::size_t i = 0; i < 8; ++i) x(i, i) += 2.0;

    FitProblem problem{x, multiply(h_true, x), 1e-8};
    auto res = fit_operator(problem);
    const double rel =
        frobenius_norm(add_scaled(res.h_hat, h_true, -1.0)) / frobenius_norm(h_true);
    bool monotone = true;
    for (std::size_t k = 1; k < res.objective_trace.size(); ++k)
        monotone = monotone && res.objective_trace[k] <= res.objective_trace[k - 1] + 1e-12;
    report(3, rel < 1e-4 && monotone,
           "planted rank-2 recovered to " + format_double(rel, 3) + " relative, trace " +
               (monotone ? "monotone" : "NOT monotone"),
           timer.seconds(), 10.0);
}

// --- criterion 4: gradient correctness ---------------------------------------

void criterion_4() {
    Timer timer;
    double worst_stnn = 0.0;
    {
        StnnConfig cfg;
        cfg.p = 2;
        cfg.alpha = {0, 0, 0, 0};
        DenseMatrix x(4, 3), y(4, 3);
        Rng rng(41);
        for (auto& v : x.data) v = rng.uniform(-1.5, 1.5);
        for (auto& v : y.data) v = rng.uniform(-1.5, 1.5);
        std::vector<std::size_t> cols{0, 1, 2};
        for (int point = 0; point < 10; ++point) {
            cfg.seed = 400 + point;
            auto theta = flatten(init(cfg));
            detail::StnnLmProblem problem{&cfg, &x, &y};
            std::vector<double> r, rp, rm;
            DenseMatrix jac;
            problem.eval(theta, cols, r, &jac);
            double max_fd = 0.0, max_err = 0.0;
            for (std::size_t k = 0; k < theta.size(); ++k) {
                const double saved = theta[k];
                const double h = 1e-6 * std::max(1.0, std::abs(saved));
                theta[k] = saved + h;
                problem.eval(theta, cols, rp, nullptr);
                theta[k] = saved - h;
                problem.eval(theta, cols, rm, nullptr);
                theta[k] = saved;
                for (std::size_t row = 0; row < r.size(); ++row) {
                    const double fd = (rp[row] - rm[row]) / (2.0 * h);
                    max_fd = std::max(max_fd, std::abs(fd));
                    max_err = std::max(max_err, std::abs(fd - jac(row, k)));
                }
            }
            worst_stnn = std::max(worst_stnn, max_err / std::max(1.0, max_fd));
        }
    }
    double worst_ffnn = 0.0;
    {
        FfnnConfig cfg;
        cfg.layer_sizes = {3, 8, 8, 8, 3};
        DenseMatrix x(3, 3), y(3, 3);
        Rng rng(43);
        for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
        for (auto& v : y.data) v = rng.uniform(-1.0, 1.0);
        std::vector<std::size_t> cols{0, 1, 2};
        for (int point = 0; point < 10; ++point) {
            cfg.seed = 500 + point;
            auto theta = detail::ffnn_flatten(ffnn_init(cfg));
            detail::FfnnLmProblem problem{&cfg, &x, &y};
            std::vector<double> r, rp, rm;
            DenseMatrix jac;
            problem.eval(theta, cols, r, &jac);
            double max_fd = 0.0, max_err = 0.0;
            for (std::size_t k = 0; k < theta.size(); ++k) {
                const double saved = theta[k];
                const double h = 1e-6 * std::max(1.0, std::abs(saved));
                theta[k] = saved + h;
                problem.eval(theta, cols, rp, nullptr);
                theta[k] = saved - h;
                problem.eval(theta, cols, rm, nullptr);
                theta[k] = saved;
                for (std::size_t row = 0; row < r.size(); ++row) {
                    const double fd = (rp[row] - rm[row]) / (2.0 * h);
                    max_fd = std::max(max_fd, std::abs(fd));
                    max_err = std::max(max_err, std::abs(fd - jac(row, k)));
                }
            }
            worst_ffnn = std::max(worst_ffnn, max_err / std::max(1.0, max_fd));
        }
    }
    report(4, worst_stnn < 1e-4 && worst_ffnn < 1e-4,
           "max relative Jacobian error: structured " + format_double(worst_stnn, 3) + ", dense " +
               format_double(worst_ffnn, 3) + " at 10 random points each",
           timer.seconds(), 30.0);
}

// --- criterion 5: sparse recovery of the Lorenz structure --------------------

void criterion_5() {
    Timer timer;
    auto traj = integrate(make_lorenz(), {-8.0, 8.0, 27.0}, 0.0, 10.0, 0.001, 1e-12);
    auto model = sindy_fit(traj, 0.001, 0.1);
    const bool seven = model.nonzero_count() == 7;
    struct Expect {
        int term, dim;
        double value;
    };
    const std::vector<Expect> expected{{1, 0, -10.0}, {2, 0, 10.0},      {1, 1, 28.0},
                                       {2, 1, -1.0},  {6, 1, -1.0},      {5, 2, 1.0},
                                       {3, 2, -8.0 / 3.0}};
    double worst = 0.0;
    for (const auto& e : expected)
        worst = std::max(worst, std::abs(model.xi(e.term, e.dim) - e.value) / std::abs(e.value));
    report(5, seven && worst < 1e-2,
           std::to_string(model.nonzero_count()) +
               " nonzero coefficients, worst relative error " + format_double(worst, 3),
           timer.seconds(), 20.0);
}

// --- desk-scale Lorenz pipeline shared by criteria 6 and 7 -------------------

struct DeskScale {
    double stnn_mse = 0.0;
    double havok_mse = 0.0;
    double dmd_mse = 0.0;
    double loss_ratio = 0.0;
    double stnn_seconds = 0.0;
    double pipeline_seconds = 0.0;
};

ExperimentConfig desk_config(const std::string& model) {
    ExperimentConfig cfg;
    cfg.system = "lorenz";
    cfg.model = model;
    cfg.p = 6;
    cfg.n_traj = 10;
    cfg.dt = 0.01;
    cfg.t_end = 8.0;
    cfg.noise = 1.0;
    cfg.data_seed = 1;
    cfg.train_frac = 0.8;
    cfg.split_seed = 2;
    cfg.epochs = 5;
    cfg.batch = 1000;
    cfg.steps_per_batch = 34;
    cfg.train_seed = 7;
    cfg.rollout_steps = 500;
    cfg.eval_prefix = 100;
    cfg.eval_seed = 140;
    return cfg;
}

DeskScale run_desk_scale() {
    DeskScale out;
    Timer total;

    // initial Eq.(11) objective for the loss-decrease check
    {
        ExperimentConfig cfg = desk_config("stnn");
        auto trajs =
            generate_lorenz_trajectories(cfg.n_traj, cfg.noise, cfg.data_seed, cfg.dt, cfg.t_end);
        auto pairs = pairs_from_trajectories(trajs, cfg.dt);
        auto [train, val] = train_validation_split(pairs, cfg.train_frac, cfg.split_seed);
        auto train4 = detail::pad_to_width4(train);
        StnnConfig scfg;
        scfg.p = cfg.p;
        scfg.seed = cfg.train_seed;
        const double initial_loss =
            loss(init(scfg), train4.inputs, train4.outputs, scfg.alpha);

        Timer stnn_timer;
        auto art = run(cfg);
        out.stnn_seconds = stnn_timer.seconds();
        out.stnn_mse = art.metrics.test_mse;
        out.loss_ratio = initial_loss / art.metrics.train_error;
    }
    out.havok_mse = run(desk_config("havok")).metrics.test_mse;
    out.dmd_mse = run(desk_config("dmd")).metrics.test_mse;
    out.pipeline_seconds = total.seconds();
    return out;
}

void criterion_6(const DeskScale& desk) {
    Timer timer;
    Rng rng(61);
    DenseMatrix a_true(3, 3);
    for (auto& v : a_true.data) v = rng.uniform(-1, 1);
    DenseMatrix x(3, 60);
    for (auto& v : x.data) v = rng.uniform(-2, 2);
    auto model = dmd_fit(x, multiply(a_true, x));
    const double rel =
        frobenius_norm(add_scaled(model.a, a_true, -1.0)) / frobenius_norm(a_true);

    const bool pass = rel < 1e-8 && desk.dmd_mse > 1.0 && desk.stnn_mse < 1e-1;
    report(6, pass,
           "planted operator to " + format_double(rel, 3) + " relative; 500-step MSE: dmd " +
               format_double(desk.dmd_mse, 4) + " (> 1), structured net " +
               format_double(desk.stnn_mse, 4) + " (< 0.1)",
           timer.seconds() + desk.stnn_seconds, 0.0);
}

void criterion_7(const DeskScale& desk) {
    const bool ordering = desk.stnn_mse < desk.havok_mse && desk.havok_mse < desk.dmd_mse;
    const bool pass = desk.loss_ratio >= 100.0 && ordering;
    report(7, pass,
           "loss decreased " + format_double(desk.loss_ratio, 4) +
               "x; 500-step MSE ordering stnn " + format_double(desk.stnn_mse, 4) + " < havok " +
               format_double(desk.havok_mse, 4) + " < dmd " + format_double(desk.dmd_mse, 4),
           desk.pipeline_seconds, 300.0);
}

// --- criterion 8: Lotka-Volterra protocol ------------------------------------

void criterion_8() {
    Timer timer;
    ExperimentConfig cfg;
    cfg.system = "lotka_volterra";
    cfg.model = "stnn";
    cfg.p = 6;
    cfg.n_envs = 10;
    cfg.lv_train_traj = 8;
    cfg.lv_test_traj = 32;
    cfg.env_seed = 2025;
    cfg.data_seed = 5;
    cfg.epochs = 5;
    cfg.batch = 1520;
    cfg.steps_per_batch = 40;
    cfg.train_seed = 9;
    cfg.alpha = {0, 0, 0, 0};
    auto art = run(cfg);
    const bool pass = art.metrics.params <= 400 && art.metrics.test_mse < 5e-2;
    report(8, pass,
           std::to_string(art.metrics.params) + " parameters, 20-step rollout MSE " +
               format_double(art.metrics.test_mse, 4) + " over 10 environments",
           timer.seconds(), 180.0);
}

// --- criterion 9: byte-identical reruns --------------------------------------

void criterion_9() {
    Timer timer;
    ExperimentConfig cfg;
    cfg.system = "lorenz";
    cfg.model = "stnn";
    cfg.p = 1;
    cfg.n_traj = 1;
    cfg.t_end = 2.0;
    cfg.epochs = 1;
    cfg.batch = 64;
    cfg.steps_per_batch = 2;
    cfg.rollout_steps = 20;
    cfg.eval_prefix = 30;
    auto a = run(cfg);
    auto b = run(cfg);
    const std::string csv_a = metrics_csv({a.metrics});
    const std::string csv_b = metrics_csv({b.metrics});
    report(9, csv_a == csv_b,
           csv_a == csv_b ? "repeated run reproduced metrics.csv byte-for-byte"
                          : "metrics.csv bytes differ between reruns",
           timer.seconds(), 0.0);
}

} // namespace

int main() {
    std::printf("acceptance suite\n");
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();
    criterion_5();
    DeskScale desk = run_desk_scale();
    criterion_6(desk);
    criterion_7(desk);
    criterion_8();
    criterion_9();
    if (g_failures == 0) {
        std::printf("all criteria passed\n");
        return 0;
    }
    std::printf("%d criteria failed\n", g_failures);
    return 1;
}
