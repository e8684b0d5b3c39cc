#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

namespace xnn {

enum class ActivationKind { Tanh, Linear };

// Architecture of one subnetwork: hidden layer widths plus the activation
// used on hidden layers. The output node is always linear.
struct SubnetArch {
    std::vector<int> hidden = {10, 6};
    ActivationKind activation = ActivationKind::Tanh;
};

// All tunables of the training procedure. Zero-valued k and batch_size mean
// "resolve from the data": k = min(p, 10) and batch = min(1000, n_train/5).
struct Hyperparams {
    int k = 0;
    double lambda1 = 1e-3;   // l1 strength on projection columns
    double lambda2 = 1e-3;   // l1 strength on beta
    double lambda3 = 1e-6;   // roughness strength
    double eta = 1e-3;       // Adam learning rate
    double tau = 0.1;        // Cayley step size
    int batch_size = 0;
    int max_epochs = 500;
    int patience = 40;
    double min_delta = 1e-5;
    SubnetArch subnet_arch;
    double prune_threshold = 0.95;
    int finetune_epochs = 100;
    std::uint64_t seed = 0;

    // Freeze the projection to identity columns (GAM mode).
    bool gam_mode = false;
    // Debug switch: update W by Adam instead of the Cayley transform, dropping
    // the orthogonality constraint. Not used by any benchmark path.
    bool disable_orthogonality = false;

    int reorth_interval = 100;   // QR refresh cadence, in Cayley steps
    double norm_epsilon = 1e-5;  // lower clamp for normalization std

    int resolved_k(int p) const { return k > 0 ? k : std::min(p, 10); }

    int resolved_batch(int n_train) const {
        if (batch_size > 0) return std::min(batch_size, n_train);
        return std::max(1, std::min(1000, n_train / 5));
    }
};

}  // namespace xnn
