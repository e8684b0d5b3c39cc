#pragma once

#include <limits>
#include <string>
#include <vector>

#include "xnn/data.hpp"
#include "xnn/diff.hpp"
#include "xnn/model.hpp"

namespace xnn {

struct EpochRecord {
    double train_loss = 0.0;      // mean penalized loss over the epoch's batches
    double val_score = 0.0;       // unpenalized data fit, full-train statistics
    double ortho_residual = 0.0;  // ||W^T W - I||_F at epoch end
    double seconds = 0.0;         // wall time since fit start
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    // Largest ||W^T W - I||_F observed after any Cayley step, before and
    // after periodic re-orthonormalization.
    double max_step_ortho_residual = 0.0;
    int best_epoch = -1;  // index into epochs; -1 when no epoch ran
};

struct FitResult {
    XnnModel model;
    TrainHistory history;
};

// Algorithm: init, then per epoch reshuffle and walk floor(n/n_b) full
// batches (the remainder is dropped); per batch one loss_and_grads call
// feeds a Cayley step on W and one Adam step on everything else; batch
// statistics are refreshed from the batch itself before the gradient pass.
// Epoch end recomputes full-training-set statistics and scores the
// validation split. Stops after `patience` epochs without a min_delta
// improvement; the best-validation epoch's parameters are returned.
FitResult sosbp_fit(const Dataset& ds, const Hyperparams& hp, Rng& rng);

// Replaces each NormState with full-sample population moments of the raw
// subnetwork outputs on X_train (std clamped from below at epsilon).
XnnModel finalize_norm(XnnModel model, const Matrix& X_train);

// Zeroes beta outside the smallest descending-IR prefix reaching the
// threshold, iterated to a fixpoint so the rule is idempotent under the
// renormalization it induces.
XnnModel prune(XnnModel model, double threshold);

// Adam-only polish of the surviving subnetworks, beta and mu with
// lambda1 = lambda2 = 0 and W frozen (bitwise). Pruned subnetworks do not
// move. Batch order derives from hp.seed.
XnnModel fine_tune(XnnModel model, const Dataset& ds, const Hyperparams& hp);

struct Metrics {
    double mse = std::numeric_limits<double>::quiet_NaN();
    double cross_entropy = std::numeric_limits<double>::quiet_NaN();
    double auc = std::numeric_limits<double>::quiet_NaN();
};

// MSE under regression; cross-entropy and rank-statistic AUC (midranks,
// NaN when only one class is present) under classification. The model link
// must match the task.
Metrics evaluate(const XnnModel& model, const Matrix& X, const Vector& y, Task task);

struct GridResult {
    Hyperparams hp;         // base with the winning (lambda1, lambda2)
    double val_score = 0.0; // winning cell's best validation score
    FitResult fit;
};

// (lambda1, lambda2) over {1e-4, 1e-3, 1e-2}^2 by validation score;
// lambda3 stays fixed. Ties resolve to the earlier cell in row-major order.
GridResult grid_search(const Dataset& ds, const Hyperparams& base, Rng& rng);

struct PipelineResult {
    XnnModel model;
    TrainHistory history;
    Hyperparams used;
};

// fit (optionally grid-searched) -> prune -> fine_tune.
PipelineResult run_pipeline(const Dataset& ds, const Hyperparams& hp,
                            bool grid, Rng& rng);

void write_history_csv(const TrainHistory& hist, const std::string& path);

}  // namespace xnn
