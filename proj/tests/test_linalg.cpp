#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "stnn/linalg.hpp"
#include "stnn/rng.hpp"

using namespace stnn;

namespace {

// O(n^2) DFT sum, the independent oracle for the radix-2 implementation.
ComplexVector naive_dft(const ComplexVector& v) {
    const std::size_t n = v.size();
    ComplexVector out(n);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> s = 0.0;
        for (std::size_t l = 0; l < n; ++l) {
            const double ang = -2.0 * std::numbers::pi * static_cast<double>(k * l) /
                               static_cast<double>(n);
            s += v[l] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        out[k] = s;
    }
    return out;
}

DenseMatrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0,
                          double hi = 1.0) {
    DenseMatrix m(r, c);
    for (auto& x : m.data) x = rng.uniform(lo, hi);
    return m;
}

double max_abs(const DenseMatrix& m) {
    double v = 0.0;
    for (double x : m.data) v = std::max(v, std::abs(x));
    return v;
}

} // namespace

TEST_CASE("fft impulse and constant") {
    ComplexVector impulse{1.0, 0.0, 0.0, 0.0};
    auto f = fft(impulse, FftDirection::forward);
    for (auto z : f) {
        CHECK(z.real() == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(z.imag() == doctest::Approx(0.0).epsilon(1e-14));
    }

    ComplexVector ones{1.0, 1.0, 1.0, 1.0};
    auto g = fft(ones, FftDirection::forward);
    CHECK(g[0].real() == doctest::Approx(4.0));
    for (std::size_t k = 1; k < 4; ++k) CHECK(std::abs(g[k]) < 1e-13);
}

TEST_CASE("fft matches naive DFT on random length-8 input") {
    Rng rng(7);
    ComplexVector v(8);
    for (auto& z : v) z = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
    auto fast = fft(v, FftDirection::forward);
    auto slow = naive_dft(v);
    for (std::size_t k = 0; k < 8; ++k) CHECK(std::abs(fast[k] - slow[k]) < 1e-12);
}

TEST_CASE("fft round trip and Parseval across power-of-two lengths") {
    for (std::size_t n = 2; n <= 1024; n <<= 1) {
        Rng rng(100 + n);
        ComplexVector v(n);
        double norm2 = 0.0, vmax = 0.0;
        for (auto& z : v) {
            z = {rng.uniform(-1, 1), rng.uniform(-1, 1)};
            norm2 += std::norm(z);
            vmax = std::max(vmax, std::abs(z));
        }
        auto f = fft(v, FftDirection::forward);
        auto back = fft(f, FftDirection::inverse);
        double fnorm2 = 0.0;
        for (auto z : f) fnorm2 += std::norm(z);
        CHECK(fnorm2 == doctest::Approx(static_cast<double>(n) * norm2).epsilon(1e-12));
        for (std::size_t k = 0; k < n; ++k) CHECK(std::abs(back[k] - v[k]) < 1e-12 * vmax);
    }
}

TEST_CASE("fft rejects non-power-of-two lengths naming the padding") {
    ComplexVector v(6, 1.0);
    CHECK_THROWS_WITH_AS(fft(v, FftDirection::forward),
                         "fft: length 6 is not a power of two (pad to 8)",
                         std::invalid_argument);
}

TEST_CASE("svd of identity and diagonal") {
    auto r = svd(DenseMatrix::identity(3));
    for (double s : r.S) CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

    DenseMatrix d(3, 3);
    d(0, 0) = 3.0;
    d(1, 1) = 2.0;
    d(2, 2) = 1.0;
    auto rd = svd(d);
    CHECK(rd.S[0] == doctest::Approx(3.0));
    CHECK(rd.S[1] == doctest::Approx(2.0));
    CHECK(rd.S[2] == doctest::Approx(1.0));
}

TEST_CASE("svd self-consistency on random 6x4: reconstruction and orthonormality") {
    Rng rng(42);
    DenseMatrix a = random_matrix(6, 4, rng);
    auto r = svd(a);

    DenseMatrix us(6, 4);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 4; ++j) us(i, j) = r.U(i, j) * r.S[j];
    DenseMatrix recon = multiply(us, transpose(r.V));
    CHECK(frobenius_norm(add_scaled(recon, a, -1.0)) < 1e-9 * frobenius_norm(a));

    DenseMatrix utu = multiply(transpose(r.U), r.U);
    DenseMatrix vtv = multiply(transpose(r.V), r.V);
    CHECK(max_abs(add_scaled(utu, DenseMatrix::identity(4), -1.0)) < 1e-9);
    CHECK(max_abs(add_scaled(vtv, DenseMatrix::identity(4), -1.0)) < 1e-9);

    for (std::size_t j = 0; j + 1 < r.S.size(); ++j) CHECK(r.S[j] >= r.S[j + 1]);
}

TEST_CASE("svd singular values invariant under row/column permutation") {
    Rng rng(5);
    DenseMatrix a = random_matrix(5, 5, rng);
    DenseMatrix b(5, 5);
    // reverse rows, rotate columns
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) b(i, j) = a(4 - i, (j + 2) % 5);
    auto sa = svd(a).S;
    auto sb = svd(b).S;
    for (std::size_t k = 0; k < 5; ++k) CHECK(sa[k] == doctest::Approx(sb[k]).epsilon(1e-10));
}

TEST_CASE("svd handles rank deficiency with orthonormal U") {
    DenseMatrix a(4, 3);
    // rank 1
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) a(i, j) = (i + 1.0) * (j + 1.0);
    auto r = svd(a);
    CHECK(r.S[1] < 1e-12 * r.S[0]);
    DenseMatrix utu = multiply(transpose(r.U), r.U);
    CHECK(max_abs(add_scaled(utu, DenseMatrix::identity(3), -1.0)) < 1e-9);
}

TEST_CASE("pinv basics") {
    DenseMatrix i3 = DenseMatrix::identity(3);
    auto p = pinv(i3, 1e-12);
    CHECK(max_abs(add_scaled(p, i3, -1.0)) < 1e-12);

    DenseMatrix d(2, 2);
    d(0, 0) = 2.0;
    auto pd = pinv(d, 1e-12);
    CHECK(pd(0, 0) == doctest::Approx(0.5));
    CHECK(pd(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("pinv satisfies the four Penrose identities on a random 5x3") {
    Rng rng(9);
    DenseMatrix a = random_matrix(5, 3, rng);
    DenseMatrix ap = pinv(a, 1e-12);

    DenseMatrix aapa = multiply(multiply(a, ap), a);
    CHECK(max_abs(add_scaled(aapa, a, -1.0)) < 1e-8);

    DenseMatrix apaap = multiply(multiply(ap, a), ap);
    CHECK(max_abs(add_scaled(apaap, ap, -1.0)) < 1e-8);

    DenseMatrix aap = multiply(a, ap);
    CHECK(max_abs(add_scaled(aap, transpose(aap), -1.0)) < 1e-8);

    DenseMatrix apa = multiply(ap, a);
    CHECK(max_abs(add_scaled(apa, transpose(apa), -1.0)) < 1e-8);
}

TEST_CASE("solve_damped_normal trivial cases") {
    DenseMatrix i2 = DenseMatrix::identity(2);
    std::vector<double> b{3.0, -4.0};
    auto x = solve_damped_normal(i2, 0.0, b);
    CHECK(x[0] == doctest::Approx(3.0));
    CHECK(x[1] == doctest::Approx(-4.0));

    DenseMatrix z(1, 1);
    auto y = solve_damped_normal(z, 2.0, {4.0});
    CHECK(y[0] == doctest::Approx(2.0));
}

TEST_CASE("solve_damped_normal random SPD system residual below 1e-10") {
    Rng rng(11);
    DenseMatrix g = random_matrix(10, 10, rng);
    DenseMatrix spd = multiply(transpose(g), g);
    for (std::size_t i = 0; i < 10; ++i) spd(i, i) += 0.5;
    std::vector<double> b(10);
    for (auto& v : b) v = rng.uniform(-2, 2);

    auto x = solve_damped_normal(spd, 0.0, b);
    auto ax = matvec(spd, x);
    double rnorm = 0.0, bnorm = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        rnorm += (ax[i] - b[i]) * (ax[i] - b[i]);
        bnorm += b[i] * b[i];
    }
    CHECK(std::sqrt(rnorm) < 1e-10 * std::sqrt(bnorm));
}

TEST_CASE("solve_damped_normal rejects singular system at zero damping") {
    DenseMatrix z(2, 2); // all zeros, singular
    CHECK_THROWS_AS(solve_damped_normal(z, 0.0, {1.0, 1.0}), std::runtime_error);
}

TEST_CASE("lstsq recovers exact solution of consistent system") {
    Rng rng(13);
    DenseMatrix a = random_matrix(8, 3, rng);
    std::vector<double> xtrue{1.5, -2.0, 0.25};
    auto b = matvec(a, xtrue);
    auto x = lstsq(a, b);
    for (std::size_t j = 0; j < 3; ++j) CHECK(x[j] == doctest::Approx(xtrue[j]).epsilon(1e-10));
}
