#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "xnn/optim.hpp"
#include "xnn/rng.hpp"

using namespace xnn;

namespace {

Matrix random_stiefel(int p, int k, Rng& rng) {
    Matrix M(p, k);
    for (int r = 0; r < p; ++r)
        for (int c = 0; c < k; ++c) M(r, c) = rng.normal();
    return reorthonormalize(M);
}

Matrix random_matrix(int p, int k, Rng& rng) {
    Matrix M(p, k);
    for (int r = 0; r < p; ++r)
        for (int c = 0; c < k; ++c) M(r, c) = rng.normal();
    return M;
}

}  // namespace

TEST_CASE("adam first step matches the hand-computed update") {
    AdamState st(1);
    Vector theta(1), g(1);
    theta << 1.0;
    g << 0.5;
    adam_step(st, theta, g, 1e-3);
    // mhat = 0.5, vhat = 0.25: step = eta * 0.5 / (0.5 + 1e-8)
    const double expected = 1.0 - 1e-3 * 0.5 / (0.5 + 1e-8);
    CHECK(theta[0] == doctest::Approx(expected).epsilon(1e-14));
    CHECK(st.t == 1);
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
    AdamState st(3);
    Vector theta(3), g = Vector::Zero(3);
    theta << -2.0, 0.5, 7.0;
    const Vector before = theta;
    for (int i = 0; i < 5; ++i) adam_step(st, theta, g, 1e-2);
    CHECK((theta - before).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("adam minimizes a quadratic") {
    AdamState st(1);
    Vector theta(1);
    theta << -4.0;
    for (int i = 0; i < 5000; ++i) {
        Vector g(1);
        g << 2.0 * (theta[0] - 3.0);
        adam_step(st, theta, g, 1e-2);
    }
    CHECK(std::abs(theta[0] - 3.0) < 1e-3);
}

TEST_CASE("adam state starts zeroed") {
    AdamState st(4);
    CHECK(st.m.norm() == 0.0);
    CHECK(st.v.norm() == 0.0);
    CHECK(st.t == 0);
}

TEST_CASE("skew_from_grad is exactly skew-symmetric") {
    Rng rng(11);
    const Matrix W = random_stiefel(5, 3, rng);
    const Matrix G = random_matrix(5, 3, rng);
    const Matrix A = skew_from_grad(W, G);
    REQUIRE(A.rows() == 5);
    REQUIRE(A.cols() == 5);
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) CHECK(A(i, j) == -A(j, i));
}

TEST_CASE("skew_from_grad hand example") {
    // W = e1, G = e2 in R^2: G W' - W G' = [[0, -1], [1, 0]]
    Matrix W(2, 1), G(2, 1);
    W << 1.0, 0.0;
    G << 0.0, 1.0;
    const Matrix A = skew_from_grad(W, G);
    CHECK(A(0, 0) == 0.0);
    CHECK(A(0, 1) == -1.0);
    CHECK(A(1, 0) == 1.0);
    CHECK(A(1, 1) == 0.0);
}

TEST_CASE("cayley_step p=2 rotation matches the closed form") {
    // W = e1, G = e2, tau = 0.1: A is the rotation generator, and the Cayley
    // ratio gives W' = [0.9975, -0.1] / 1.0025.
    Matrix W(2, 1), G(2, 1);
    W << 1.0, 0.0;
    G << 0.0, 1.0;
    const Matrix W2 = cayley_step(W, G, 0.1);
    CHECK(W2(0, 0) == doctest::Approx(0.9975 / 1.0025).epsilon(1e-12));
    CHECK(W2(1, 0) == doctest::Approx(-0.1 / 1.0025).epsilon(1e-12));
}

TEST_CASE("cayley_step matches a full-pivot dense oracle") {
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        const int p = 4, k = 2;
        const Matrix W = random_stiefel(p, k, rng);
        const Matrix G = random_matrix(p, k, rng);
        const double tau = 0.05 + 0.1 * static_cast<double>(trial);
        const Matrix A = G * W.transpose() - W * G.transpose();
        const Matrix I = Matrix::Identity(p, p);
        const Matrix oracle =
            (I + 0.5 * tau * A).fullPivLu().solve((I - 0.5 * tau * A) * W);
        const Matrix got = cayley_step(W, G, tau);
        CHECK((got - oracle).lpNorm<Eigen::Infinity>() < 1e-12);
    }
}

TEST_CASE("cayley_step with zero gradient returns W bitwise") {
    Rng rng(31);
    const Matrix W = random_stiefel(6, 3, rng);
    const Matrix W2 = cayley_step(W, Matrix::Zero(6, 3), 0.5);
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 3; ++c) CHECK(W2(r, c) == W(r, c));
}

TEST_CASE("cayley_step preserves orthonormality across random draws") {
    Rng rng(47);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const int p = 2 + static_cast<int>(rng.uniform_index(5));
        const int k = 1 + static_cast<int>(rng.uniform_index(
                              static_cast<std::uint64_t>(p)));
        const Matrix W = random_stiefel(p, k, rng);
        const double tau = rng.uniform(1e-3, 1.0);
        const Matrix W2 = cayley_step(W, random_matrix(p, k, rng), tau);
        worst = std::max(worst, orthogonality_residual(W2));
    }
    CHECK(worst <= 1e-10);
}

TEST_CASE("cayley_step descends a smooth objective for small tau") {
    // f(W) = 1/2 ||W - T||_F^2 with T off the constraint set; G = W - T.
    Rng rng(53);
    const Matrix W = random_stiefel(5, 2, rng);
    const Matrix T = random_matrix(5, 2, rng);
    const Matrix G = W - T;
    const double f0 = 0.5 * (W - T).squaredNorm();
    const Matrix W2 = cayley_step(W, G, 0.05);
    const double f1 = 0.5 * (W2 - T).squaredNorm();
    CHECK(f1 < f0);
}

TEST_CASE("cayley_step is tangent to -A W as tau goes to zero") {
    Rng rng(61);
    const Matrix W = random_stiefel(5, 3, rng);
    const Matrix G = random_matrix(5, 3, rng);
    const Matrix A = skew_from_grad(W, G);
    const double tau = 1e-6;
    const Matrix secant = (cayley_step(W, G, tau) - W) / tau;
    CHECK((secant + A * W).lpNorm<Eigen::Infinity>() < 1e-4);
}

TEST_CASE("l1_subgradient applies lambda sign with sign(0) = 0") {
    Matrix X(2, 2);
    X << 3.0, -0.5, 0.0, -7.0;
    const Matrix S = l1_subgradient(X, 0.25);
    CHECK(S(0, 0) == 0.25);
    CHECK(S(0, 1) == -0.25);
    CHECK(S(1, 0) == 0.0);
    CHECK(S(1, 1) == -0.25);
}

TEST_CASE("reorthonormalize returns an orthonormal basis of the same span") {
    Rng rng(71);
    const Matrix W = random_matrix(6, 3, rng);
    const Matrix Q = reorthonormalize(W);
    CHECK(orthogonality_residual(Q) < 1e-12);
    // Columns of W lie in span(Q): projecting onto Q loses nothing.
    const Matrix P = Q * (Q.transpose() * W);
    CHECK((P - W).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("reorthonormalize fixes an already orthonormal matrix") {
    Rng rng(73);
    const Matrix W = random_stiefel(5, 2, rng);
    const Matrix Q = reorthonormalize(W);
    CHECK((Q - W).lpNorm<Eigen::Infinity>() < 1e-12);
}
