#include <doctest.h>

#include <cmath>

#include "xnn/errors.hpp"
#include "xnn/model.hpp"
#include "xnn/rng.hpp"

using namespace xnn;

namespace {

// Weights chosen so the subnetwork computes 2 tanh(3 z + 1) - 0.5.
Subnetwork fixed_tanh_subnet() {
    Rng rng(0);
    SubnetArch arch;
    arch.hidden = {1};
    Subnetwork s = make_subnetwork(arch, rng);
    s.layers[0].weights(0, 0) = 3.0;
    s.layers[0].biases[0] = 1.0;
    s.layers[1].weights(0, 0) = 2.0;
    s.layers[1].biases[0] = -0.5;
    return s;
}

XnnModel small_model(int p, int k, Rng& rng) {
    Hyperparams hp;
    hp.k = k;
    hp.subnet_arch.hidden = {4, 3};
    return init_model(p, hp, rng);
}

}  // namespace

TEST_CASE("init_model produces orthonormal W and matching shapes") {
    Rng rng(5);
    Hyperparams hp;
    hp.k = 4;
    hp.subnet_arch.hidden = {10, 6};
    const XnnModel m = init_model(7, hp, rng);
    CHECK(m.p() == 7);
    CHECK(m.k() == 4);
    CHECK(orthogonality_residual(m.W) < 1e-12);
    CHECK(m.beta.size() == 4);
    CHECK(m.mu == 0.0);
    REQUIRE(m.subnets.size() == 4);
    REQUIRE(m.norm.size() == 4);
    for (const Subnetwork& s : m.subnets) {
        REQUIRE(s.layers.size() == 3);
        CHECK(s.layers[0].weights.rows() == 10);
        CHECK(s.layers[0].weights.cols() == 1);
        CHECK(s.layers[1].weights.rows() == 6);
        CHECK(s.layers[1].weights.cols() == 10);
        CHECK(s.layers[2].weights.rows() == 1);
        CHECK(s.layers[2].weights.cols() == 6);
        for (const DenseLayer& l : s.layers) CHECK(l.biases.norm() == 0.0);
    }
    for (const NormState& ns : m.norm) {
        CHECK(ns.mean == 0.0);
        CHECK(ns.std == 1.0);
    }
}

TEST_CASE("init_model k > p is rejected") {
    Rng rng(6);
    Hyperparams hp;
    hp.k = 9;
    CHECK_THROWS_AS(init_model(3, hp, rng), ConfigError);
}

TEST_CASE("init_model is reproducible and tag-sensitive") {
    Rng a(42), b(42), c(43);
    Hyperparams hp;
    hp.k = 3;
    const XnnModel m1 = small_model(5, 3, a);
    const XnnModel m2 = small_model(5, 3, b);
    const XnnModel m3 = small_model(5, 3, c);
    CHECK((m1.W - m2.W).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((m1.beta - m2.beta).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((m1.subnets[0].layers[0].weights - m2.subnets[0].layers[0].weights)
              .lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((m1.W - m3.W).lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("project is X times W") {
    Rng rng(9);
    const XnnModel m = small_model(4, 2, rng);
    Matrix X(3, 4);
    X << 1, 0, 0, 0, 0, 1, 0, 0, 0.5, -0.25, 2, -1;
    const Matrix Z = project(m, X);
    CHECK((Z - X * m.W).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("subnet_eval matches the closed form of a fixed one-hidden net") {
    const Subnetwork s = fixed_tanh_subnet();
    Vector z(3);
    z << -1.0, 0.0, 0.7;
    const Vector h = subnet_eval(s, z);
    for (int i = 0; i < 3; ++i) {
        const double expect = 2.0 * std::tanh(3.0 * z[i] + 1.0) - 0.5;
        CHECK(h[i] == doctest::Approx(expect).epsilon(1e-15));
    }
}

TEST_CASE("linear activation composes to an affine map") {
    Rng rng(1);
    SubnetArch arch;
    arch.hidden = {3, 2};
    arch.activation = ActivationKind::Linear;
    Subnetwork s = make_subnetwork(arch, rng);
    Vector z(5);
    z << -2, -1, 0, 1, 2;
    const Vector h = subnet_eval(s, z);
    // An affine map obeys exact second differences = 0.
    for (int i = 0; i + 2 < 5; ++i)
        CHECK(h[i + 2] - 2.0 * h[i + 1] + h[i] ==
              doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("normalize applies stored moments") {
    Vector h(2);
    h << 1.0, 3.0;
    NormState ns;
    ns.mean = 2.0;
    ns.std = 1.0;
    const Vector out = normalize(h, ns);
    CHECK(out[0] == -1.0);
    CHECK(out[1] == 1.0);
}

TEST_CASE("raw_subnet_outputs stacks per-subnetwork evaluations") {
    Rng rng(13);
    const XnnModel m = small_model(4, 2, rng);
    Matrix X(6, 4);
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 4; ++c) X(r, c) = rng.uniform(-1.0, 1.0);
    const Matrix H = raw_subnet_outputs(m, X);
    const Matrix Z = project(m, X);
    for (int j = 0; j < 2; ++j) {
        const Vector direct = subnet_eval(m.subnets[j], Z.col(j));
        CHECK((H.col(j) - direct).lpNorm<Eigen::Infinity>() == 0.0);
    }
}

TEST_CASE("forward_eta assembles mu plus weighted normalized outputs") {
    Rng rng(17);
    XnnModel m = small_model(3, 2, rng);
    m.mu = 0.75;
    m.norm[0] = {0.5, 2.0, 1e-5};
    m.norm[1] = {-1.0, 0.5, 1e-5};
    Matrix X(4, 3);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 3; ++c) X(r, c) = rng.uniform(-1.0, 1.0);
    const Matrix H = raw_subnet_outputs(m, X);
    const Vector eta = forward_eta(m, X);
    for (int i = 0; i < 4; ++i) {
        double expect = m.mu;
        for (int j = 0; j < 2; ++j)
            expect += m.beta[j] * (H(i, j) - m.norm[j].mean) / m.norm[j].std;
        CHECK(eta[i] == doctest::Approx(expect).epsilon(1e-14));
    }
}

TEST_CASE("forward applies the link") {
    Rng rng(19);
    XnnModel m = small_model(3, 1, rng);
    Matrix X(2, 3);
    X << 0.1, -0.2, 0.3, -0.4, 0.5, -0.6;
    const Vector eta = forward_eta(m, X);
    SUBCASE("identity") {
        const Vector out = forward(m, X);
        CHECK((out - eta).lpNorm<Eigen::Infinity>() == 0.0);
    }
    SUBCASE("logit") {
        m.link = LinkKind::Logit;
        const Vector out = forward(m, X);
        for (int i = 0; i < 2; ++i)
            CHECK(out[i] ==
                  doctest::Approx(1.0 / (1.0 + std::exp(-eta[i]))).epsilon(1e-14));
    }
}

TEST_CASE("sigmoid saturates without overflow") {
    Vector eta(3);
    eta << -1000.0, 0.0, 1000.0;
    const Vector s = sigmoid(eta);
    CHECK(s[0] == 0.0);
    CHECK(s[1] == 0.5);
    CHECK(s[2] == 1.0);
}

TEST_CASE("importance_ratios form a simplex") {
    Vector beta(3);
    beta << 1.0, -3.0, 0.0;
    const Vector r = importance_ratios(beta);
    CHECK(r[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(r[1] == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(r[2] == 0.0);
    CHECK(r.sum() == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r.minCoeff() >= 0.0);
}

TEST_CASE("importance_ratios rejects an all-zero beta") {
    CHECK_THROWS_AS(importance_ratios(Vector::Zero(4)), DataError);
}

TEST_CASE("canonicalize_signs preserves predictions and fixes conventions") {
    Rng rng(29);
    XnnModel m = small_model(5, 3, rng);
    m.beta[0] = -std::abs(m.beta[0]) - 0.1;  // force at least one flip
    Matrix X(8, 5);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 5; ++c) X(r, c) = rng.uniform(-1.0, 1.0);
    const Vector before = forward_eta(m, X);
    canonicalize_signs(m);
    const Vector after = forward_eta(m, X);
    CHECK((before - after).lpNorm<Eigen::Infinity>() < 1e-12);
    for (int j = 0; j < 3; ++j) {
        CHECK(m.beta[j] >= 0.0);
        Eigen::Index imax = 0;
        m.W.col(j).cwiseAbs().maxCoeff(&imax);
        CHECK(m.W(imax, j) > 0.0);
    }
    // Idempotent: a second pass changes nothing.
    XnnModel again = m;
    canonicalize_signs(again);
    CHECK((again.W - m.W).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((again.beta - m.beta).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("orthogonality_residual hand values") {
    CHECK(orthogonality_residual(Matrix::Identity(3, 3)) == 0.0);
    // W = 2 I: W'W - I = 3 I, Frobenius norm 3 sqrt(2).
    CHECK(orthogonality_residual(2.0 * Matrix::Identity(2, 2)) ==
          doctest::Approx(3.0 * std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("hyperparameter resolution rules") {
    Hyperparams hp;
    CHECK(hp.resolved_k(5) == 5);
    CHECK(hp.resolved_k(20) == 10);
    hp.k = 3;
    CHECK(hp.resolved_k(20) == 3);
    Hyperparams hb;
    CHECK(hb.resolved_batch(10000) == 1000);
    CHECK(hb.resolved_batch(2000) == 400);
    CHECK(hb.resolved_batch(3) == 1);
    hb.batch_size = 64;
    CHECK(hb.resolved_batch(32) == 32);
    CHECK(hb.resolved_batch(640) == 64);
}
