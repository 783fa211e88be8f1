#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "stnn/baselines.hpp"

using namespace stnn;

namespace {

std::array<Activation, 4> identity_acts() {
    return {Activation{ActKind::identity}, Activation{ActKind::identity},
            Activation{ActKind::identity}, Activation{ActKind::identity}};
}

} // namespace

TEST_CASE("ffnn accounting: 2073 parameters, 3960 flops") {
    FfnnConfig cfg;
    CHECK(count_params(cfg) == 2073);
    CHECK(count_flops(cfg) == 3960);

    auto params = ffnn_init(cfg);
    CHECK(count_params(params) == 2073);

    FlopCounter fc; // bias adds excluded for the dense baseline
    ffnn_forward(params, {0.1, 0.2, 0.3}, &fc);
    CHECK(fc.total() == 3960);
}

TEST_CASE("ffnn analytic Jacobian matches central finite differences") {
    FfnnConfig cfg;
    cfg.layer_sizes = {3, 6, 6, 6, 3}; // small instance, same structure
    DenseMatrix x(3, 3), y(3, 3);
    Rng rng(4);
    for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
    for (auto& v : y.data) v = rng.uniform(-1.0, 1.0);
    std::vector<std::size_t> cols{0, 1, 2};

    for (int point = 0; point < 10; ++point) {
        cfg.seed = 50 + point;
        auto params = ffnn_init(cfg);
        auto theta = detail::ffnn_flatten(params);
        detail::FfnnLmProblem problem{&cfg, &x, &y};
        std::vector<double> r;
        DenseMatrix jac;
        problem.eval(theta, cols, r, &jac);

        double max_abs_fd = 0.0, max_err = 0.0;
        std::vector<double> rp, rm;
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
                max_abs_fd = std::max(max_abs_fd, std::abs(fd));
                max_err = std::max(max_err, std::abs(fd - jac(row, k)));
            }
        }
        CHECK(max_err < 1e-4 * std::max(1.0, max_abs_fd));
    }
}

TEST_CASE("ffnn LM toy: fit y = 2x to MSE < 1e-8") {
    FfnnConfig cfg;
    cfg.layer_sizes = {3, 10, 10, 10, 3};
    cfg.activations = identity_acts();
    cfg.seed = 3;
    auto params = ffnn_init(cfg);

    TrajectoryDataset train;
    train.inputs = DenseMatrix(3, 30);
    train.outputs = DenseMatrix(3, 30);
    Rng rng(9);
    for (std::size_t c = 0; c < 30; ++c)
        for (int d = 0; d < 3; ++d) {
            const double v = rng.uniform(-1.0, 1.0);
            train.inputs(d, c) = v;
            train.outputs(d, c) = 2.0 * v;
        }

    TrainOptions opts;
    opts.epochs = 5;
    opts.batch_size = 30;
    opts.steps_per_batch = 10;
    auto report = ffnn_train_lm(params, train, train, opts);
    CHECK_FALSE(report.aborted);
    CHECK(ffnn_loss(params, train.inputs, train.outputs, {0, 0, 0, 0}) < 1e-8);
}

TEST_CASE("dmd recovers a planted linear system to 1e-8") {
    Rng rng(5);
    DenseMatrix a_true(3, 3);
    for (auto& v : a_true.data) v = rng.uniform(-1.0, 1.0);
    DenseMatrix x(3, 40);
    for (auto& v : x.data) v = rng.uniform(-2.0, 2.0);
    DenseMatrix xp = multiply(a_true, x);

    auto model = dmd_fit(x, xp);
    CHECK(frobenius_norm(add_scaled(model.a, a_true, -1.0)) < 1e-8 * frobenius_norm(a_true));
    CHECK(model.rank == 3);

    // identity dynamics: A acts as identity on the data subspace
    auto ident = dmd_fit(x, x);
    DenseMatrix ax = multiply(ident.a, x);
    CHECK(frobenius_norm(add_scaled(ax, x, -1.0)) < 1e-8 * frobenius_norm(x));
}

TEST_CASE("dmd rank handling") {
    Rng rng(6);
    DenseMatrix x(3, 20), xp(3, 20);
    for (auto& v : x.data) v = rng.uniform(-1.0, 1.0);
    for (auto& v : xp.data) v = rng.uniform(-1.0, 1.0);
    CHECK_THROWS_AS(dmd_fit(x, xp, 4), std::invalid_argument);
    auto truncated = dmd_fit(x, xp, 2);
    CHECK(truncated.rank == 2);
    // reconstruction identity A = U Atilde U^T
    DenseMatrix recon = multiply(truncated.modes,
                                 multiply(truncated.atilde, transpose(truncated.modes)));
    CHECK(frobenius_norm(add_scaled(recon, truncated.a, -1.0)) < 1e-12);

    DenseMatrix thin(3, 2);
    CHECK_THROWS_AS(dmd_fit(thin, thin), std::invalid_argument);
}

TEST_CASE("sindy recovers the Lorenz structure: 7 terms, 1e-2 relative coefficients") {
    auto traj = integrate(make_lorenz(), {-8.0, 8.0, 27.0}, 0.0, 10.0, 0.001, 1e-12);
    REQUIRE(traj.states.size() == 10000);
    auto model = sindy_fit(traj, 0.001, 0.1);

    CHECK(model.nonzero_count() == 7);
    // library order: 1 x y z xx xy xz yy yz zz
    CHECK(model.xi(1, 0) == doctest::Approx(-10.0).epsilon(1e-2));
    CHECK(model.xi(2, 0) == doctest::Approx(10.0).epsilon(1e-2));
    CHECK(model.xi(1, 1) == doctest::Approx(28.0).epsilon(1e-2));
    CHECK(model.xi(2, 1) == doctest::Approx(-1.0).epsilon(1e-2));
    CHECK(model.xi(6, 1) == doctest::Approx(-1.0).epsilon(1e-2));
    CHECK(model.xi(5, 2) == doctest::Approx(1.0).epsilon(1e-2));
    CHECK(model.xi(3, 2) == doctest::Approx(-8.0 / 3.0).epsilon(1e-2));
}

TEST_CASE("sindy on a linear decay: the x-equation keeps the single coefficient -1") {
    // Rates chosen so every product/square column decays at its own rate;
    // otherwise the quadratic library is collinear along a single trajectory
    // (e.g. rate -2 makes y proportional to x^2).
    OdeModel decay;
    decay.name = "decay";
    decay.dimension = 3;
    decay.rhs = [](const std::vector<double>& s, double) {
        return std::vector<double>{-s[0], -1.25 * s[1], -0.55 * s[2]};
    };
    auto traj = integrate(decay, {2.0, -1.0, 0.5}, 0.0, 5.0, 0.01, 1e-12);
    auto model = sindy_fit(traj, 0.01, 0.1);
    CHECK(model.xi(1, 0) == doctest::Approx(-1.0).epsilon(1e-3));
    CHECK(model.xi(2, 1) == doctest::Approx(-1.25).epsilon(1e-3));
    CHECK(model.xi(3, 2) == doctest::Approx(-0.55).epsilon(1e-3));
    CHECK(model.nonzero_count() == 3);
}

TEST_CASE("sindy: raising the threshold never adds active terms") {
    auto traj = integrate(make_lorenz(), {1.0, 2.0, 20.0}, 0.0, 4.0, 0.002, 1e-10);
    std::size_t prev = 31;
    for (double lam : {0.02, 0.1, 0.5}) {
        auto model = sindy_fit(traj, 0.002, lam);
        CHECK(model.nonzero_count() <= prev);
        prev = model.nonzero_count();
    }
}

TEST_CASE("sindy simulate: exact model tracks the reference, zero model stays constant") {
    auto traj = integrate(make_lorenz(), {-8.0, 8.0, 27.0}, 0.0, 10.0, 0.001, 1e-12);
    auto model = sindy_fit(traj, 0.001, 0.1);
    auto sim = sindy_simulate(model, {-8.0, 8.0, 27.0}, 100, 0.01);
    REQUIRE_FALSE(sim.diverged);
    // integrator-vs-integrator: step the true vector field with the same RK4
    // so only the recovered coefficients differ
    auto truth = make_lorenz();
    std::vector<double> y{-8.0, 8.0, 27.0};
    for (std::size_t k = 1; k <= 100; ++k) {
        y = rk4_step(truth, y, static_cast<double>(k - 1) * 0.01, 0.01);
        for (int d = 0; d < 3; ++d) CHECK(std::abs(sim.states[k][d] - y[d]) < 1e-4);
    }

    SindyModel zero;
    zero.xi = DenseMatrix(10, 3);
    auto frozen = sindy_simulate(zero, {1.0, 2.0, 3.0}, 10, 0.01);
    for (const auto& s : frozen.states) {
        CHECK(s[0] == 1.0);
        CHECK(s[1] == 2.0);
        CHECK(s[2] == 3.0);
    }
}

TEST_CASE("sindy error: threshold too aggressive names the fix") {
    auto traj = integrate(make_lorenz(), {1.0, 1.0, 20.0}, 0.0, 2.0, 0.01, 1e-10);
    CHECK_THROWS_AS(sindy_fit(traj, 0.01, 1e6), std::runtime_error);
}

TEST_CASE("havok: delay matrix has constant anti-diagonals bit-exactly") {
    Rng rng(8);
    std::vector<double> series(40);
    for (auto& v : series) v = rng.uniform(-1.0, 1.0);
    auto d = havok_delay_matrix(series, 7);
    for (std::size_t i = 0; i < d.rows; ++i)
        for (std::size_t j = 0; j < d.cols; ++j) CHECK(d(i, j) == series[i + j]);
    for (std::size_t i = 1; i < d.rows; ++i)
        for (std::size_t j = 1; j < d.cols; ++j) CHECK(d(i, j - 1) == d(i - 1, j));
}

TEST_CASE("havok: a sinusoid is exactly linear in two delay coordinates") {
    std::vector<double> series(400);
    for (std::size_t k = 0; k < series.size(); ++k)
        series[k] = std::sin(0.17 * static_cast<double>(k));
    auto model = havok_fit(series, 32, 2);

    std::vector<double> window(series.end() - 32, series.end());
    auto pred = havok_predict(model, window, 1);
    const double expected = std::sin(0.17 * static_cast<double>(series.size()));
    CHECK(std::abs(pred[0] - expected) < 1e-6);

    auto longer = havok_predict(model, window, 50);
    for (std::size_t k = 0; k < 50; ++k) {
        const double truth = std::sin(0.17 * static_cast<double>(series.size() + k));
        CHECK(std::abs(longer[k] - truth) < 1e-4);
    }
}

TEST_CASE("havok: constant series predicts itself; parameter accounting") {
    std::vector<double> series(100, 3.25);
    auto model = havok_fit(series, 10, 2);
    std::vector<double> window(series.end() - 10, series.end());
    auto pred = havok_predict(model, window, 5);
    for (double v : pred) CHECK(v == doctest::Approx(3.25).epsilon(1e-10));

    CHECK(havok_count_params(model) == 10 * 2 + 2 + 4);
    CHECK_THROWS_AS(havok_fit(series, 10, 11), std::invalid_argument);
    std::vector<double> tiny(5, 1.0);
    CHECK_THROWS_AS(havok_fit(tiny, 4, 2), std::invalid_argument);
}
