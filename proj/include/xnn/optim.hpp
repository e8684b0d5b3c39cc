#pragma once

#include <cstdint>

#include "xnn/model.hpp"

namespace xnn {

// Adam over a flat parameter vector. Accumulators are allocated zeroed;
// `t` counts completed steps.
struct AdamState {
    Vector m;
    Vector v;
    std::int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    AdamState() = default;
    explicit AdamState(Eigen::Index size)
        : m(Vector::Zero(size)), v(Vector::Zero(size)) {}
};

// One bias-corrected Adam update, in place.
void adam_step(AdamState& st, Vector& params, const Vector& grads, double eta);

// A = G W^T - W G^T. Skew-symmetry holds exactly in floating point because
// the result is formed as M - M^T.
Matrix skew_from_grad(const Matrix& W, const Matrix& G);

// Cayley transform W(tau) = (I + tau/2 A)^{-1} (I - tau/2 A) W with
// A = skew_from_grad(W, G), computed by a dense partial-pivoting solve.
// G = 0 returns W unchanged (exact fixed point). Preserves W^T W per step to
// 1e-10 for any step size in (0, 1].
Matrix cayley_step(const Matrix& W, const Matrix& G, double tau);

// lambda * sign(x) elementwise, sign(0) = 0.
Matrix l1_subgradient(const Matrix& x, double lambda);

// Q factor of the thin QR of W, columns flipped so the R diagonal is
// nonnegative. Used to shed floating-point drift after many Cayley steps.
Matrix reorthonormalize(const Matrix& W);

}  // namespace xnn
