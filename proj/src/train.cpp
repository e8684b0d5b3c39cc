#include "xnn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <utility>

#include "xnn/errors.hpp"
#include "xnn/optim.hpp"

namespace xnn {

namespace {

void validate_hyperparams(const Hyperparams& hp) {
    if (hp.lambda1 < 0.0 || hp.lambda2 < 0.0 || hp.lambda3 < 0.0)
        throw ConfigError("hyperparams: penalty strengths must be >= 0");
    if (hp.eta <= 0.0) throw ConfigError("hyperparams: eta must be positive");
    if (hp.tau <= 0.0) throw ConfigError("hyperparams: tau must be positive");
    if (!(hp.prune_threshold > 0.0 && hp.prune_threshold <= 1.0))
        throw ConfigError("hyperparams: prune threshold must lie in (0, 1]");
    if (hp.batch_size < 0) throw ConfigError("hyperparams: batch size must be >= 1");
    if (hp.max_epochs < 0 || hp.finetune_epochs < 0)
        throw ConfigError("hyperparams: epoch counts must be >= 0");
    if (hp.patience < 1) throw ConfigError("hyperparams: patience must be >= 1");
    if (hp.min_delta < 0.0) throw ConfigError("hyperparams: min_delta must be >= 0");
}

void gather_batch(const SplitView& tr, const std::vector<std::size_t>& perm,
                  Eigen::Index b, Eigen::Index nb, Matrix& Xb, Vector& yb) {
    for (Eigen::Index r = 0; r < nb; ++r) {
        const auto src = static_cast<Eigen::Index>(perm[static_cast<std::size_t>(b * nb + r)]);
        Xb.row(r) = tr.X.row(src);
        yb[r] = tr.y[src];
    }
}

// Indices of subnetworks with nonzero beta.
std::vector<int> active_set(const XnnModel& model) {
    std::vector<int> act;
    for (Eigen::Index j = 0; j < model.beta.size(); ++j)
        if (model.beta[j] != 0.0) act.push_back(static_cast<int>(j));
    return act;
}

double elapsed_seconds(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
}

// Function-preserving gauge fix applied after each batch step: the batch
// statistics are absorbed into the output layer (w/sigma, (b-mean)/sigma) and
// the NormState reset to (0, 1). Raw outputs then stay near zero-mean and
// unit-std, so the amplitude component of the frozen-statistics gradient
// cannot accumulate across steps and saturate the subnetwork. Skipped for a
// near-degenerate batch, where dividing by the clamped std would blow up the
// weights.
void fold_norm(XnnModel& model, const std::vector<bool>* active) {
    for (std::size_t j = 0; j < model.subnets.size(); ++j) {
        if (active && !(*active)[j]) continue;
        NormState& ns = model.norm[j];
        if (!(ns.std > 1e-3)) continue;
        DenseLayer& out = model.subnets[j].layers.back();
        out.weights /= ns.std;
        out.biases.array() = (out.biases.array() - ns.mean) / ns.std;
        ns.mean = 0.0;
        ns.std = 1.0;
    }
}

}  // namespace

FitResult sosbp_fit(const Dataset& ds, const Hyperparams& hp, Rng& rng) {
    validate_hyperparams(hp);
    const SplitView tr = subset(ds, SplitLabel::Train);
    const SplitView va = subset(ds, SplitLabel::Validation);
    if (tr.X.rows() == 0 || va.X.rows() == 0)
        throw ConfigError("sosbp_fit: train and validation splits must be nonempty");

    XnnModel model = init_model(ds.p(), hp, rng);
    model.link = ds.task == Task::Classification ? LinkKind::Logit
                                                 : LinkKind::Identity;
    TrainHistory hist;
    if (hp.max_epochs == 0) return {std::move(model), std::move(hist)};

    const Eigen::Index n_train = tr.X.rows();
    const auto nb = static_cast<Eigen::Index>(
        hp.resolved_batch(static_cast<int>(n_train)));
    const Eigen::Index B = n_train / nb;
    if (B == 0) throw ConfigError("sosbp_fit: batch size exceeds training rows");

    AdamState adam(static_cast<Eigen::Index>(param_count(model, false)));
    XnnModel best = model;
    double best_val = std::numeric_limits<double>::infinity();
    double patience_best = std::numeric_limits<double>::infinity();
    int stale = 0;
    std::int64_t cayley_steps = 0;
    Matrix Xb(nb, ds.p());
    Vector yb(nb);
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = 0; epoch < hp.max_epochs; ++epoch) {
        const auto perm = rng.permutation(static_cast<std::size_t>(n_train));
        double loss_sum = 0.0;
        for (Eigen::Index b = 0; b < B; ++b) {
            gather_batch(tr, perm, b, nb, Xb, yb);
            model.norm = batch_norm_states(model, Xb);
            double loss = 0.0;
            Grads g;
            try {
                std::tie(loss, g) = loss_and_grads(model, Xb, yb, hp, model.norm,
                                                   StatsGrad::ThroughBatch);
            } catch (const NumericError& e) {
                throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                                   std::to_string(b) + ": " + e.what());
            }
            loss_sum += loss;

            if (!hp.gam_mode) {
                if (hp.disable_orthogonality) {
                    // Debug mode: plain descent, W leaves the manifold.
                    model.W -= hp.eta * g.g_W;
                } else {
                    model.W = cayley_step(model.W, g.g_W, hp.tau);
                    ++cayley_steps;
                    hist.max_step_ortho_residual =
                        std::max(hist.max_step_ortho_residual,
                                 orthogonality_residual(model.W));
                    if (hp.reorth_interval > 0 &&
                        cayley_steps % hp.reorth_interval == 0)
                        model.W = reorthonormalize(model.W);
                }
            }

            Vector theta = flatten_params(model, false);
            adam_step(adam, theta, flatten_grads(g, false), hp.eta);
            unflatten_params(model, theta, false);
            fold_norm(model, nullptr);
        }

        model = finalize_norm(std::move(model), tr.X);
        const double val = data_fit_loss(model, va.X, va.y);
        hist.epochs.push_back({loss_sum / static_cast<double>(B), val,
                               orthogonality_residual(model.W),
                               elapsed_seconds(t0)});
        if (val < best_val) {
            best_val = val;
            best = model;
            hist.best_epoch = epoch;
        }
        if (val < patience_best - hp.min_delta) {
            patience_best = val;
            stale = 0;
        } else if (++stale >= hp.patience) {
            break;
        }
    }
    return {std::move(best), std::move(hist)};
}

XnnModel finalize_norm(XnnModel model, const Matrix& X_train) {
    model.norm = batch_norm_states(model, X_train);
    return model;
}

XnnModel prune(XnnModel model, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ConfigError("prune: threshold must lie in (0, 1]");
    // The prefix rule is applied repeatedly: zeroing the tail renormalizes
    // the surviving ratios, which can shrink the prefix again. The kept set
    // only shrinks, so this reaches a fixpoint.
    while (true) {
        const Vector ir = importance_ratios(model.beta);
        std::vector<int> order(static_cast<std::size_t>(ir.size()));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return ir[a] > ir[b]; });
        double cum = 0.0;
        std::size_t keep = order.size();
        for (std::size_t i = 0; i < order.size(); ++i) {
            cum += ir[order[i]];
            if (cum >= threshold - 1e-12) {
                keep = i + 1;
                break;
            }
        }
        bool changed = false;
        for (std::size_t i = keep; i < order.size(); ++i) {
            if (model.beta[order[i]] != 0.0) {
                model.beta[order[i]] = 0.0;
                changed = true;
            }
        }
        if (!changed) return model;
    }
}

XnnModel fine_tune(XnnModel model, const Dataset& ds, const Hyperparams& hp) {
    validate_hyperparams(hp);
    Hyperparams ft = hp;
    ft.lambda1 = 0.0;
    ft.lambda2 = 0.0;  // lambda3 is retained
    const SplitView tr = subset(ds, SplitLabel::Train);
    if (tr.X.rows() == 0)
        throw ConfigError("fine_tune: training split must be nonempty");

    if (ft.finetune_epochs > 0) {
        const std::vector<int> act = active_set(model);
        std::vector<bool> is_active(model.subnets.size(), false);
        for (int j : act) is_active[static_cast<std::size_t>(j)] = true;

        const Eigen::Index n_train = tr.X.rows();
        const auto nb = static_cast<Eigen::Index>(
            ft.resolved_batch(static_cast<int>(n_train)));
        const Eigen::Index B = n_train / nb;
        if (B == 0) throw ConfigError("fine_tune: batch size exceeds training rows");

        AdamState adam(static_cast<Eigen::Index>(param_count(model, false)));
        Rng rng = Rng(ft.seed).fork("finetune");
        Matrix Xb(nb, ds.p());
        Vector yb(nb);
        for (int epoch = 0; epoch < ft.finetune_epochs; ++epoch) {
            const auto perm = rng.permutation(static_cast<std::size_t>(n_train));
            for (Eigen::Index b = 0; b < B; ++b) {
                gather_batch(tr, perm, b, nb, Xb, yb);
                model.norm = batch_norm_states(model, Xb);
                double loss = 0.0;
                Grads g;
                try {
                    std::tie(loss, g) =
                        loss_and_grads(model, Xb, yb, ft, model.norm,
                                       StatsGrad::ThroughBatch);
                } catch (const NumericError& e) {
                    throw NumericError("fine_tune epoch " + std::to_string(epoch) +
                                       " batch " + std::to_string(b) + ": " +
                                       e.what());
                }
                // Pruned subnetworks stay fixed: their gradient blocks are
                // masked so Adam never moves them.
                for (std::size_t j = 0; j < is_active.size(); ++j) {
                    if (is_active[j]) continue;
                    g.g_beta[static_cast<Eigen::Index>(j)] = 0.0;
                    for (auto& lg : g.g_layers[j]) {
                        lg.weights.setZero();
                        lg.biases.setZero();
                    }
                }
                Vector theta = flatten_params(model, false);
                adam_step(adam, theta, flatten_grads(g, false), ft.eta);
                unflatten_params(model, theta, false);
                fold_norm(model, &is_active);
            }
        }
    }
    return finalize_norm(std::move(model), tr.X);
}

Metrics evaluate(const XnnModel& model, const Matrix& X, const Vector& y,
                 Task task) {
    if (y.size() != X.rows()) throw ShapeError("evaluate: X/y row mismatch");
    if ((task == Task::Classification) != (model.link == LinkKind::Logit))
        throw ConfigError("evaluate: model link does not match the task");
    Metrics m;
    const double n = static_cast<double>(y.size());
    if (task == Task::Regression) {
        m.mse = (forward(model, X) - y).squaredNorm() / n;
        return m;
    }
    const Vector eta = forward_eta(model, X);
    m.cross_entropy = data_fit_loss(model, X, y);

    // Mann-Whitney AUC with midranks on the scores.
    const auto sz = static_cast<std::size_t>(eta.size());
    std::vector<std::size_t> order(sz);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return eta[static_cast<Eigen::Index>(a)] < eta[static_cast<Eigen::Index>(b)];
    });
    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0;
    std::size_t i = 0;
    while (i < sz) {
        std::size_t j = i;
        while (j < sz && eta[static_cast<Eigen::Index>(order[j])] ==
                             eta[static_cast<Eigen::Index>(order[i])])
            ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
        for (std::size_t q = i; q < j; ++q)
            if (y[static_cast<Eigen::Index>(order[q])] == 1.0) {
                rank_sum_pos += midrank;
                ++n_pos;
            }
        i = j;
    }
    const std::size_t n_neg = sz - n_pos;
    if (n_pos > 0 && n_neg > 0) {
        const double u = rank_sum_pos -
                         static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
        m.auc = u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
    }
    return m;
}

GridResult grid_search(const Dataset& ds, const Hyperparams& base, Rng& rng) {
    const double values[] = {1e-4, 1e-3, 1e-2};
    GridResult bestcell;
    bestcell.val_score = std::numeric_limits<double>::infinity();
    bool first = true;
    for (double l1 : values) {
        for (double l2 : values) {
            Hyperparams hp = base;
            hp.lambda1 = l1;
            hp.lambda2 = l2;
            char tag[48];
            std::snprintf(tag, sizeof tag, "grid l1=%g l2=%g", l1, l2);
            Rng cell_rng = rng.fork(tag);
            FitResult fit = sosbp_fit(ds, hp, cell_rng);
            double val = std::numeric_limits<double>::infinity();
            if (fit.history.best_epoch >= 0)
                val = fit.history.epochs[static_cast<std::size_t>(fit.history.best_epoch)]
                          .val_score;
            if (first || val < bestcell.val_score) {
                first = false;
                bestcell.hp = hp;
                bestcell.val_score = val;
                bestcell.fit = std::move(fit);
            }
        }
    }
    return bestcell;
}

PipelineResult run_pipeline(const Dataset& ds, const Hyperparams& hp, bool grid,
                            Rng& rng) {
    PipelineResult out;
    if (grid) {
        GridResult g = grid_search(ds, hp, rng);
        out.model = std::move(g.fit.model);
        out.history = std::move(g.fit.history);
        out.used = g.hp;
    } else {
        Rng fit_rng = rng.fork("fit");
        FitResult fit = sosbp_fit(ds, hp, fit_rng);
        out.model = std::move(fit.model);
        out.history = std::move(fit.history);
        out.used = hp;
    }
    out.model = prune(std::move(out.model), out.used.prune_threshold);
    out.model = fine_tune(std::move(out.model), ds, out.used);
    return out;
}

void write_history_csv(const TrainHistory& hist, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("write_history_csv: cannot write '" + path + "'");
    out << "epoch,train_loss,val_score,ortho_residual,seconds\n";
    char buf[160];
    for (std::size_t e = 0; e < hist.epochs.size(); ++e) {
        const EpochRecord& r = hist.epochs[e];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.3f\n", e,
                      r.train_loss, r.val_score, r.ortho_residual, r.seconds);
        out << buf;
    }
    if (!out) throw DataError("write_history_csv: write to '" + path + "' failed");
}

}  // namespace xnn
