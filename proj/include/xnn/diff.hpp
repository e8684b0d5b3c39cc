#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xnn/model.hpp"

namespace xnn {

// Order-2 jet of one subnetwork over a batch of projections: raw values and
// first/second derivatives with respect to the scalar input.
struct Jet2 {
    Vector v;
    Vector d1;
    Vector d2;
};

struct LayerGrads {
    Matrix weights;
    Vector biases;
};

// How normalization statistics enter the gradient. Frozen treats mean and std
// as constants of the base point; it is the reference functional for the
// finite-difference check. ThroughBatch backpropagates the data-fit cotangent
// through the batch mean and std (valid only when `stats` were computed from
// the same batch) and is what training uses: with frozen statistics the
// gradient keeps chasing mean and amplitude components that the normalization
// cancels, and ridge-function shapes stop improving. The roughness term keeps
// frozen statistics in both modes.
enum class StatsGrad { Frozen, ThroughBatch };

// Gradient of the penalized objective; shapes mirror XnnModel exactly.
struct Grads {
    double g_mu = 0.0;
    Vector g_beta;                              // k
    Matrix g_W;                                 // p x k
    std::vector<std::vector<LayerGrads>> g_layers;  // [subnet][layer]
};

// Propagates (z, 1, 0) through the subnetwork. Hidden tanh maps
// (a, a', a'') to (t, s a', s a'' - 2 t s (a')^2) with t = tanh a, s = 1 - t^2.
Jet2 subnet_jet(const Subnetwork& s, const Vector& z);

// (1/n) sum_i (d2_i / ns.std)^2. The mean shift drops out of derivatives;
// normalization only rescales by 1/std.
double roughness(const Jet2& j, const NormState& ns);

// Per-subnetwork mean / population std of raw outputs on X (momentum-zero
// batch statistics). Std is clamped from below at the stored epsilon.
std::vector<NormState> batch_norm_states(const XnnModel& model, const Matrix& X);

// Penalized loss (data fit + l1 on W + l1 on beta + roughness)
// and its exact gradient under the chosen statistics mode. The roughness
// gradient reaches W through the third-derivative path, handled by reverse
// accumulation over the jet recursions. l1 terms enter the gradient as
// subgradients with sign(0) = 0.
std::pair<double, Grads> loss_and_grads(const XnnModel& model, const Matrix& Xb,
                                        const Vector& yb, const Hyperparams& hp,
                                        const std::vector<NormState>& stats,
                                        StatsGrad mode = StatsGrad::Frozen);

// Convenience overload: statistics computed from this batch.
std::pair<double, Grads> loss_and_grads(const XnnModel& model, const Matrix& Xb,
                                        const Vector& yb, const Hyperparams& hp,
                                        StatsGrad mode = StatsGrad::Frozen);

double penalized_loss(const XnnModel& model, const Matrix& Xb, const Vector& yb,
                      const Hyperparams& hp, const std::vector<NormState>& stats);

// Unpenalized data fit under the model's own normalization statistics:
// MSE for the identity link, mean binary cross-entropy on logits otherwise.
double data_fit_loss(const XnnModel& model, const Matrix& X, const Vector& y);

// Flat parameter order: mu, beta, per-subnet per-layer weights (row-major)
// then biases, and finally W (row-major) when include_W is set. The Adam path
// excludes W (it moves on the Stiefel manifold); fd_check includes it.
std::size_t param_count(const XnnModel& model, bool include_W);
Vector flatten_params(const XnnModel& model, bool include_W);
void unflatten_params(XnnModel& model, const Vector& theta, bool include_W);
Vector flatten_grads(const Grads& g, bool include_W);

// Max relative error between analytic gradients and central finite
// differences, all parameters included. Statistics are frozen at the base
// point and l1 terms are dropped (non-smooth). Denominator:
// max(|analytic|, |numeric|, 1e-8). `corrupt` offsets the first analytic
// component; the CLI uses it as a negative control.
double fd_check(const XnnModel& model, const Matrix& Xb, const Vector& yb,
                const Hyperparams& hp, double eps, double corrupt = 0.0);

struct FdCase {
    std::string name;
    double max_rel_err = 0.0;
};

// Seeded battery of small configurations spanning links, architectures,
// activations, gam mode and lambda3 values (including lambda3 > 0). Each
// configuration redraws its instance from deterministic sub-seeds until the
// smallest nonzero gradient coordinate is large enough that finite-difference
// roundoff cannot dominate the relative error.
std::vector<FdCase> fd_battery(std::uint64_t seed, double eps, double corrupt = 0.0);

}  // namespace xnn
