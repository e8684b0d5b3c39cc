#include "xnn/optim.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "xnn/errors.hpp"

namespace xnn {

void adam_step(AdamState& st, Vector& params, const Vector& grads, double eta) {
    if (eta <= 0.0) throw ConfigError("adam_step: eta must be positive");
    if (params.size() != grads.size() || st.m.size() != params.size() ||
        st.v.size() != params.size())
        throw ShapeError("adam_step: state/parameter size mismatch");
    if (!grads.allFinite()) throw NumericError("adam_step: non-finite gradient");

    st.t += 1;
    st.m = st.beta1 * st.m + (1.0 - st.beta1) * grads;
    st.v = st.beta2 * st.v + (1.0 - st.beta2) * grads.array().square().matrix();
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
    params.array() -=
        eta * (st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + st.eps);
}

Matrix skew_from_grad(const Matrix& W, const Matrix& G) {
    if (W.rows() != G.rows() || W.cols() != G.cols())
        throw ShapeError("skew_from_grad: W/G shape mismatch");
    const Matrix M = G * W.transpose();
    return M - M.transpose();
}

Matrix cayley_step(const Matrix& W, const Matrix& G, double tau) {
    if (tau <= 0.0) throw ConfigError("cayley_step: tau must be positive");
    const Matrix A = skew_from_grad(W, G);
    if ((A.array() == 0.0).all()) return W;

    const Eigen::Index p = W.rows();
    const Matrix lhs = Matrix::Identity(p, p) + (tau / 2.0) * A;
    const Matrix rhs = W - (tau / 2.0) * (A * W);
    // I + tau/2 A is nonsingular for every real tau and skew A.
    Matrix out = Eigen::PartialPivLU<Matrix>(lhs).solve(rhs);
    if (!out.allFinite()) throw NumericError("cayley_step: dense solve failed");
    return out;
}

Matrix l1_subgradient(const Matrix& x, double lambda) {
    if (lambda < 0.0) throw ConfigError("l1_subgradient: lambda must be >= 0");
    return lambda * x.array().sign().matrix();
}

Matrix reorthonormalize(const Matrix& W) {
    Eigen::HouseholderQR<Matrix> qr(W);
    Matrix Q = qr.householderQ() * Matrix::Identity(W.rows(), W.cols());
    for (Eigen::Index j = 0; j < W.cols(); ++j)
        if (qr.matrixQR()(j, j) < 0.0) Q.col(j) = -Q.col(j);
    return Q;
}

}  // namespace xnn
