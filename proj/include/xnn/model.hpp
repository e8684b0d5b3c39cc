#pragma once

#include <Eigen/Dense>

#include <vector>

#include "xnn/hyperparams.hpp"
#include "xnn/rng.hpp"

namespace xnn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class LinkKind { Identity, Logit };

struct DenseLayer {
    Matrix weights;  // out x in
    Vector biases;   // out
};

// Scalar-input, scalar-output dense network representing one ridge function.
// The activation applies after every layer except the final output node,
// which is linear.
struct Subnetwork {
    std::vector<DenseLayer> layers;
    ActivationKind activation = ActivationKind::Tanh;
};

// Empirical moments of a subnetwork's raw output. std is clamped below by
// epsilon so degenerate batches stay finite.
struct NormState {
    double mean = 0.0;
    double std = 1.0;
    double epsilon = 1e-5;
};

// The additive-index model: eta(x) = mu + sum_j beta_j * htilde_j(w_j' x),
// with htilde_j the normalized output of subnetwork j and w_j the columns of
// W. W keeps orthonormal columns throughout training.
struct XnnModel {
    double mu = 0.0;
    Vector beta;                     // k
    Matrix W;                        // p x k
    std::vector<Subnetwork> subnets; // k
    std::vector<NormState> norm;     // k
    LinkKind link = LinkKind::Identity;

    int p() const { return static_cast<int>(W.rows()); }
    int k() const { return static_cast<int>(W.cols()); }
};

// Builds a subnetwork with Xavier-normal weights (variance 2/(fan_in+fan_out),
// filled row by row) and zero biases.
Subnetwork make_subnetwork(const SubnetArch& arch, Rng& rng);

// Fresh model: W is the Q-factor of a p x k standard-Gaussian matrix (filled
// row by row, R diagonal made positive), layer weights Xavier-normal, beta
// drawn as an output layer under the same rule, mu = 0, NormState = (0, 1).
// Draw order: W, then subnetworks 0..k-1, then beta.
XnnModel init_model(int p, const Hyperparams& hp, Rng& rng);

// Z = X * W; column j is the j-th learned feature.
Matrix project(const XnnModel& model, const Matrix& X);

// Dense forward pass over a batch of scalar inputs.
Vector subnet_eval(const Subnetwork& s, const Vector& z);

// (h - mean) / std elementwise. No learned affine parameters; beta and mu
// carry scale and shift.
Vector normalize(const Vector& h, const NormState& ns);

// Raw (unnormalized) subnetwork outputs for every sample, n x k.
Matrix raw_subnet_outputs(const XnnModel& model, const Matrix& X);

// Linear predictor eta = mu + sum_j beta_j * normalize(h_j).
Vector forward_eta(const XnnModel& model, const Matrix& X);

// Model prediction: eta under the identity link, sigmoid(eta) under logit.
Vector forward(const XnnModel& model, const Matrix& X);

Vector sigmoid(const Vector& eta);

// r_j = |beta_j| / sum_i |beta_i|. Throws DataError when beta is all zero.
Vector importance_ratios(const Vector& beta);

// Flips (beta_j, final layer) so beta_j >= 0, and (w_j, first layer) so the
// largest-magnitude entry of each projection column is positive. Predictions
// are unchanged.
void canonicalize_signs(XnnModel& model);

// Frobenius norm of W'W - I.
double orthogonality_residual(const Matrix& W);

}  // namespace xnn
