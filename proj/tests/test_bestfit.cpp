#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "stnn/bestfit.hpp"
#include "stnn/rng.hpp"

using namespace stnn;

namespace {

DenseMatrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
    DenseMatrix m(r, c);
    for (auto& x : m.data) x = rng.uniform(-1.0, 1.0);
    return m;
}

DenseMatrix planted_rank2(std::size_t n, Rng& rng) {
    DenseMatrix u = random_matrix(n, 2, rng);
    DenseMatrix v = random_matrix(2, n, rng);
    return multiply(u, v);
}

double max_abs(const DenseMatrix& m) {
    double v = 0.0;
    for (double x : m.data) v = std::max(v, std::abs(x));
    return v;
}

} // namespace

TEST_CASE("svt: zero threshold, exact diagonal, over-threshold") {
    Rng rng(1);
    DenseMatrix a = random_matrix(4, 4, rng);
    auto same = svt(a, 0.0);
    CHECK(frobenius_norm(add_scaled(same, a, -1.0)) < 1e-9 * frobenius_norm(a));

    DenseMatrix d(2, 2);
    d(0, 0) = 3.0;
    d(1, 1) = 1.0;
    auto thr = svt(d, 2.0);
    CHECK(thr(0, 0) == doctest::Approx(1.0));
    CHECK(std::abs(thr(1, 1)) < 1e-12);
    CHECK(std::abs(thr(0, 1)) < 1e-12);

    auto zero = svt(d, 10.0);
    CHECK(max_abs(zero) < 1e-12);
}

TEST_CASE("svt nonexpansiveness on random pairs") {
    Rng rng(2);
    for (int rep = 0; rep < 10; ++rep) {
        DenseMatrix a = random_matrix(5, 5, rng);
        DenseMatrix b = random_matrix(5, 5, rng);
        const double t = rng.uniform(0.0, 1.5);
        DenseMatrix da = svt(a, t);
        DenseMatrix db = svt(b, t);
        CHECK(frobenius_norm(add_scaled(da, db, -1.0)) <=
              frobenius_norm(add_scaled(a, b, -1.0)) + 1e-10);
    }
}

TEST_CASE("fit_operator: alpha 0 with X = I recovers X' in one step") {
    Rng rng(3);
    FitProblem p;
    p.snapshots = DenseMatrix::identity(5);
    p.advanced = random_matrix(5, 5, rng);
    p.alpha = 0.0;
    FitOptions opts;
    opts.max_iter = 2;
    auto res = fit_operator(p, opts);
    CHECK(frobenius_norm(add_scaled(res.h_hat, p.advanced, -1.0)) <
          1e-12 * frobenius_norm(p.advanced));
}

TEST_CASE("fit_operator recovers a planted rank-2 operator") {
    Rng rng(4);
    DenseMatrix h_true = planted_rank2(8, rng);
    DenseMatrix x = random_matrix(8, 8, rng);
    for (std::size_t i = 0; i < 8; ++i) x(i, i) += 2.0; // keep X invertible
    FitProblem p;
    p.snapshots = x;
    p.advanced = multiply(h_true, x);
    p.alpha = 1e-8;
    auto res = fit_operator(p);
    CHECK(res.converged);
    const double rel =
        frobenius_norm(add_scaled(res.h_hat, h_true, -1.0)) / frobenius_norm(h_true);
    CHECK(rel < 1e-4);
    CHECK(res.rank <= 8);

    for (std::size_t k = 1; k < res.objective_trace.size(); ++k)
        CHECK(res.objective_trace[k] <= res.objective_trace[k - 1] + 1e-12);
}

TEST_CASE("optimality certificate at alpha 0: normal equations hold") {
    Rng rng(5);
    DenseMatrix x = random_matrix(6, 30, rng);
    DenseMatrix h_true = random_matrix(6, 6, rng);
    FitProblem p;
    p.snapshots = x;
    p.advanced = multiply(h_true, x);
    p.alpha = 0.0;
    auto res = fit_operator(p);
    DenseMatrix resid = add_scaled(multiply(res.h_hat, x), p.advanced, -1.0);
    DenseMatrix lhs = multiply(resid, transpose(x));
    DenseMatrix rhs = multiply(p.advanced, transpose(x));
    CHECK(frobenius_norm(lhs) < 1e-6 * frobenius_norm(rhs));
}

TEST_CASE("rank is non-increasing along an alpha grid") {
    Rng rng(6);
    DenseMatrix x = random_matrix(6, 20, rng);
    DenseMatrix h_true = planted_rank2(6, rng);
    DenseMatrix xp = multiply(h_true, x);
    std::size_t prev_rank = 7;
    for (double alpha : {0.0, 1e-4, 1e-2, 0.1, 1.0, 10.0}) {
        FitProblem p{x, xp, alpha};
        auto res = fit_operator(p);
        CHECK(res.rank <= prev_rank);
        prev_rank = res.rank;
    }
}

TEST_CASE("backtracking step rule also descends and fits") {
    Rng rng(7);
    DenseMatrix x = random_matrix(5, 12, rng);
    DenseMatrix h_true = random_matrix(5, 5, rng);
    FitProblem p{x, multiply(h_true, x), 1e-6};
    FitOptions opts;
    opts.step_rule = StepRule::backtracking;
    auto res = fit_operator(p, opts);
    const double rel =
        frobenius_norm(add_scaled(res.h_hat, h_true, -1.0)) / frobenius_norm(h_true);
    CHECK(rel < 1e-3);
}

TEST_CASE("non-convergence is reported through the converged flag") {
    Rng rng(8);
    DenseMatrix x = random_matrix(6, 20, rng);
    FitProblem p{x, random_matrix(6, 20, rng), 1e-3};
    FitOptions opts;
    opts.max_iter = 3;
    opts.rel_tol = 1e-16;
    auto res = fit_operator(p, opts);
    CHECK_FALSE(res.converged);
    CHECK(res.iterations == 3);
    CHECK(res.objective_trace.size() == 4);
}

TEST_CASE("per-symmetric projection: exact recovery, I2, idempotence") {
    HankelOperator h({0.5, -1.0, 2.0, 0.25});
    auto recovered = project_persymmetric_hankel(h.dense());
    for (std::size_t s = 0; s < 4; ++s)
        CHECK(recovered.samples()[s] == doctest::Approx(h.samples()[s]).epsilon(1e-14));

    auto from_identity = project_persymmetric_hankel(DenseMatrix::identity(2));
    CHECK(from_identity.samples()[0] == doctest::Approx(1.0));
    CHECK(from_identity.samples()[1] == doctest::Approx(0.0));

    Rng rng(9);
    DenseMatrix a = random_matrix(5, 5, rng);
    auto once = project_persymmetric_hankel(a);
    auto twice = project_persymmetric_hankel(once.dense());
    for (std::size_t s = 0; s < 5; ++s)
        CHECK(twice.samples()[s] == doctest::Approx(once.samples()[s]).epsilon(1e-14));
}

TEST_CASE("projection minimizes the Frobenius distance over the reflection classes") {
    // Compare against a tiny brute-force search over perturbations of the
    // projected samples: any perturbation must not reduce the distance.
    Rng rng(10);
    DenseMatrix a = random_matrix(4, 4, rng);
    auto proj = project_persymmetric_hankel(a);
    const double base = frobenius_norm(add_scaled(proj.dense(), a, -1.0));
    for (std::size_t s = 0; s < 4; ++s) {
        for (double eps : {-1e-3, 1e-3}) {
            auto samples = proj.samples();
            samples[s] += eps;
            HankelOperator perturbed(samples);
            CHECK(frobenius_norm(add_scaled(perturbed.dense(), a, -1.0)) >= base);
        }
    }
}
