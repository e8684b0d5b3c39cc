#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <utility>
#include <vector>

#include "xnn/data.hpp"
#include "xnn/errors.hpp"
#include "xnn/train.hpp"

using namespace xnn;

namespace {

// Linear single-index data split 80/20, for fast smoke fits.
Dataset linear_dataset(int n, int p, double noise_sd, Rng& rng) {
    Dataset ds;
    ds.X = gen_features(n, p, 0.0, rng);
    Vector w = Vector::Zero(p);
    for (int j = 0; j < p; ++j) w[j] = rng.normal();
    w /= w.norm();
    ds.y = ds.X * w;
    for (Eigen::Index i = 0; i < ds.n(); ++i)
        ds.y[i] += noise_sd == 0.0 ? 0.0 : rng.normal(0.0, noise_sd);
    Rng srng = rng.fork("split");
    return split(std::move(ds), 0.8, 0.2, srng);
}

// Model with prescribed beta magnitudes; subnetworks untouched.
XnnModel model_with_beta(const std::vector<double>& beta) {
    Rng rng(0);
    Hyperparams hp;
    hp.k = static_cast<int>(beta.size());
    hp.subnet_arch.hidden = {3};
    XnnModel m = init_model(static_cast<int>(beta.size()), hp, rng);
    for (std::size_t j = 0; j < beta.size(); ++j)
        m.beta[static_cast<Eigen::Index>(j)] = beta[j];
    return m;
}

std::vector<int> survivors(const XnnModel& m) {
    std::vector<int> out;
    for (Eigen::Index j = 0; j < m.beta.size(); ++j)
        if (m.beta[j] != 0.0) out.push_back(static_cast<int>(j));
    return out;
}

}  // namespace

TEST_CASE("sosbp_fit with zero epochs returns the initialized model") {
    Rng rng(21);
    Dataset ds = linear_dataset(100, 4, 0.1, rng);
    Hyperparams hp;
    hp.k = 2;
    hp.max_epochs = 0;
    Rng fit_rng(3);
    const FitResult fr = sosbp_fit(ds, hp, fit_rng);
    CHECK(fr.history.epochs.empty());
    CHECK(fr.history.best_epoch == -1);
    CHECK(orthogonality_residual(fr.model.W) < 1e-12);
    CHECK(fr.model.k() == 2);
}

TEST_CASE("sosbp_fit validates hyperparameters") {
    Rng rng(22);
    Dataset ds = linear_dataset(100, 3, 0.1, rng);
    Rng fit_rng(1);
    Hyperparams bad;
    bad.eta = 0.0;
    CHECK_THROWS_AS(sosbp_fit(ds, bad, fit_rng), ConfigError);
    Hyperparams neg;
    neg.lambda1 = -1.0;
    CHECK_THROWS_AS(sosbp_fit(ds, neg, fit_rng), ConfigError);
    Hyperparams tau0;
    tau0.tau = 0.0;
    CHECK_THROWS_AS(sosbp_fit(ds, tau0, fit_rng), ConfigError);
}

TEST_CASE("sosbp_fit keeps W orthonormal and fills history") {
    Rng rng(23);
    Dataset ds = linear_dataset(300, 5, 0.2, rng);
    Hyperparams hp;
    hp.k = 3;
    hp.max_epochs = 25;
    hp.patience = 25;
    Rng fit_rng(9);
    const FitResult fr = sosbp_fit(ds, hp, fit_rng);
    CHECK(fr.history.epochs.size() <= 25);
    CHECK(!fr.history.epochs.empty());
    CHECK(fr.history.max_step_ortho_residual <= 1e-10);
    for (const EpochRecord& r : fr.history.epochs) {
        CHECK(std::isfinite(r.train_loss));
        CHECK(std::isfinite(r.val_score));
        CHECK(r.ortho_residual <= 1e-10);
    }
    CHECK(fr.history.best_epoch >= 0);
    CHECK(fr.history.best_epoch <
          static_cast<int>(fr.history.epochs.size()));
}

TEST_CASE("sosbp_fit is bitwise deterministic") {
    Rng rng(24);
    Dataset ds = linear_dataset(300, 4, 0.3, rng);
    Hyperparams hp;
    hp.k = 2;
    hp.max_epochs = 12;
    Rng ra(77), rb(77);
    const FitResult a = sosbp_fit(ds, hp, ra);
    const FitResult b = sosbp_fit(ds, hp, rb);
    CHECK((a.model.W - b.model.W).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((a.model.beta - b.model.beta).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(a.model.mu == b.model.mu);
    for (std::size_t j = 0; j < a.model.subnets.size(); ++j)
        for (std::size_t l = 0; l < a.model.subnets[j].layers.size(); ++l)
            CHECK((a.model.subnets[j].layers[l].weights -
                   b.model.subnets[j].layers[l].weights)
                      .lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("gam mode freezes W to identity columns") {
    Rng rng(25);
    Dataset ds = linear_dataset(200, 3, 0.2, rng);
    Hyperparams hp;
    hp.k = 3;
    hp.gam_mode = true;
    hp.max_epochs = 8;
    Rng fit_rng(5);
    const FitResult fr = sosbp_fit(ds, hp, fit_rng);
    CHECK((fr.model.W - Matrix::Identity(3, 3)).lpNorm<Eigen::Infinity>() ==
          0.0);
}

TEST_CASE("finalize_norm stores full-sample population moments") {
    // Subnetwork computing the identity: raw outputs equal the projections.
    Rng rng(26);
    Hyperparams hp;
    hp.k = 1;
    hp.subnet_arch.hidden = {1};
    hp.subnet_arch.activation = ActivationKind::Linear;
    XnnModel m = init_model(1, hp, rng);
    m.W(0, 0) = 1.0;
    m.subnets[0].layers[0].weights(0, 0) = 1.0;
    m.subnets[0].layers[0].biases[0] = 0.0;
    m.subnets[0].layers[1].weights(0, 0) = 1.0;
    m.subnets[0].layers[1].biases[0] = 0.0;

    Matrix X(2, 1);
    X << 1.0, 3.0;
    m = finalize_norm(std::move(m), X);
    CHECK(m.norm[0].mean == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(m.norm[0].std == doctest::Approx(1.0).epsilon(1e-15));

    Matrix one(1, 1);
    one << 5.0;
    m = finalize_norm(std::move(m), one);
    CHECK(m.norm[0].mean == doctest::Approx(5.0).epsilon(1e-15));
    CHECK(m.norm[0].std == m.norm[0].epsilon);
}

TEST_CASE("prune keeps the smallest prefix reaching the threshold") {
    SUBCASE("0.95 keeps three of four") {
        XnnModel m = model_with_beta({0.6, -0.3, 0.06, 0.04});
        m = prune(std::move(m), 0.95);
        CHECK(survivors(m) == std::vector<int>{0, 1, 2});
    }
    SUBCASE("0.99 keeps all four") {
        XnnModel m = model_with_beta({0.6, -0.3, 0.06, 0.04});
        m = prune(std::move(m), 0.99);
        CHECK(survivors(m) == std::vector<int>{0, 1, 2, 3});
    }
    SUBCASE("dominant component stands alone") {
        XnnModel m = model_with_beta({1.0, 0.0, 0.0});
        m = prune(std::move(m), 0.95);
        CHECK(survivors(m) == std::vector<int>{0});
    }
    SUBCASE("threshold one keeps every nonzero component") {
        XnnModel m = model_with_beta({0.5, 0.3, 0.0, 0.2});
        m = prune(std::move(m), 1.0);
        CHECK(survivors(m) == std::vector<int>{0, 1, 3});
    }
    SUBCASE("ordering ignores sign") {
        XnnModel m = model_with_beta({-0.06, 0.6, 0.04, -0.3});
        m = prune(std::move(m), 0.95);
        CHECK(survivors(m) == std::vector<int>{0, 1, 3});
    }
}

TEST_CASE("prune is idempotent") {
    XnnModel m = model_with_beta({0.45, 0.25, 0.15, 0.1, 0.05});
    const XnnModel once = prune(m, 0.9);
    const XnnModel twice = prune(once, 0.9);
    CHECK((once.beta - twice.beta).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("prune survivors grow with the threshold") {
    const XnnModel base = model_with_beta({0.5, 0.2, 0.15, 0.1, 0.05});
    const auto s95 = survivors(prune(base, 0.95));
    const auto s99 = survivors(prune(base, 0.99));
    for (int j : s95)
        CHECK(std::find(s99.begin(), s99.end(), j) != s99.end());
    CHECK(s95.size() <= s99.size());
}

TEST_CASE("fine_tune freezes W and pruned subnetworks bitwise") {
    Rng rng(27);
    Dataset ds = linear_dataset(300, 4, 0.3, rng);
    Hyperparams hp;
    hp.k = 3;
    hp.max_epochs = 10;
    hp.finetune_epochs = 5;
    hp.seed = 123;
    Rng fit_rng(12);
    FitResult fr = sosbp_fit(ds, hp, fit_rng);
    XnnModel pruned = prune(std::move(fr.model), 0.6);
    const XnnModel before = pruned;
    const XnnModel after = fine_tune(std::move(pruned), ds, hp);

    CHECK((after.W - before.W).lpNorm<Eigen::Infinity>() == 0.0);
    for (Eigen::Index j = 0; j < before.beta.size(); ++j) {
        if (before.beta[j] != 0.0) continue;
        CHECK(after.beta[j] == 0.0);
        for (std::size_t l = 0; l < before.subnets[j].layers.size(); ++l)
            CHECK((after.subnets[j].layers[l].weights -
                   before.subnets[j].layers[l].weights)
                      .lpNorm<Eigen::Infinity>() == 0.0);
    }
}

TEST_CASE("fine_tune with zero epochs only refreshes statistics") {
    Rng rng(28);
    Dataset ds = linear_dataset(200, 3, 0.2, rng);
    Hyperparams hp;
    hp.k = 2;
    hp.max_epochs = 5;
    hp.finetune_epochs = 0;
    Rng fit_rng(4);
    FitResult fr = sosbp_fit(ds, hp, fit_rng);
    const XnnModel before = fr.model;
    const XnnModel after = fine_tune(std::move(fr.model), ds, hp);
    CHECK((after.W - before.W).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK((after.beta - before.beta).lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(after.mu == before.mu);
}

TEST_CASE("fine_tune improves or maintains the training fit") {
    Rng rng(29);
    Dataset ds = linear_dataset(400, 4, 0.2, rng);
    Hyperparams hp;
    hp.k = 2;
    hp.max_epochs = 15;
    hp.finetune_epochs = 30;
    hp.seed = 9;
    Rng fit_rng(2);
    FitResult fr = sosbp_fit(ds, hp, fit_rng);
    XnnModel pruned = prune(std::move(fr.model), 0.95);
    const SplitView tr = subset(ds, SplitLabel::Train);
    const double before = data_fit_loss(pruned, tr.X, tr.y);
    const XnnModel after = fine_tune(std::move(pruned), ds, hp);
    const double polished = data_fit_loss(after, tr.X, tr.y);
    CHECK(polished <= before * 1.05);
}

TEST_CASE("evaluate computes regression and classification metrics") {
    // Identity-map model: prediction equals the single feature.
    Rng rng(30);
    Hyperparams hp;
    hp.k = 1;
    hp.subnet_arch.hidden = {1};
    hp.subnet_arch.activation = ActivationKind::Linear;
    XnnModel m = init_model(1, hp, rng);
    m.W(0, 0) = 1.0;
    m.subnets[0].layers[0].weights(0, 0) = 1.0;
    m.subnets[0].layers[0].biases[0] = 0.0;
    m.subnets[0].layers[1].weights(0, 0) = 1.0;
    m.subnets[0].layers[1].biases[0] = 0.0;
    m.beta[0] = 1.0;
    m.mu = 0.0;

    Matrix X(4, 1);
    X << -1.5, -0.5, 0.5, 1.5;
    m = finalize_norm(std::move(m), X);
    // Normalized outputs have mean 0, std 1: eta = (x - 0) / std(x).
    const double sd = std::sqrt((2.25 + 0.25 + 0.25 + 2.25) / 4.0);

    SUBCASE("regression mse") {
        Vector y(4);
        y << -1.5 / sd, -0.5 / sd, 0.5 / sd, 1.5 / sd + 2.0;
        const Metrics met = evaluate(m, X, y, Task::Regression);
        CHECK(met.mse == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::isnan(met.auc));
    }
    SUBCASE("separable classification reaches AUC one") {
        m.link = LinkKind::Logit;
        Vector y(4);
        y << 0, 0, 1, 1;
        const Metrics met = evaluate(m, X, y, Task::Classification);
        CHECK(met.auc == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::isfinite(met.cross_entropy));
    }
    SUBCASE("single-class AUC is NaN") {
        m.link = LinkKind::Logit;
        Vector y = Vector::Zero(4);
        const Metrics met = evaluate(m, X, y, Task::Classification);
        CHECK(std::isnan(met.auc));
    }
    SUBCASE("task and link must agree") {
        Vector y = Vector::Zero(4);
        CHECK_THROWS_AS(evaluate(m, X, y, Task::Classification), ConfigError);
        m.link = LinkKind::Logit;
        CHECK_THROWS_AS(evaluate(m, X, y, Task::Regression), ConfigError);
    }
}

TEST_CASE("cross-entropy matches the hand formula on a tiny fixture") {
    Rng rng(31);
    Hyperparams hp;
    hp.k = 1;
    hp.subnet_arch.hidden = {1};
    hp.subnet_arch.activation = ActivationKind::Linear;
    XnnModel m = init_model(1, hp, rng);
    m.W(0, 0) = 1.0;
    m.subnets[0].layers[0].weights(0, 0) = 1.0;
    m.subnets[0].layers[0].biases[0] = 0.0;
    m.subnets[0].layers[1].weights(0, 0) = 1.0;
    m.subnets[0].layers[1].biases[0] = 0.0;
    m.beta[0] = 1.0;
    m.link = LinkKind::Logit;
    Matrix X(2, 1);
    X << -1.0, 1.0;
    m = finalize_norm(std::move(m), X);
    Vector y(2);
    y << 0.0, 1.0;
    const Metrics met = evaluate(m, X, y, Task::Classification);
    // Normalized projections are -1 and 1: eta = -1, 1.
    const double expect =
        0.5 * (-std::log(1.0 - 1.0 / (1.0 + std::exp(1.0))) -
               std::log(1.0 / (1.0 + std::exp(-1.0))));
    CHECK(met.cross_entropy == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("single-index recovery on noiseless linear data") {
    Rng rng(32);
    const int p = 4;
    Dataset ds;
    Rng drng(101);
    ds.X = gen_features(600, p, 0.0, drng);
    Vector w(p);
    w << 0.6, -0.3, 0.4, 0.2;
    w /= w.norm();
    ds.y = ds.X * w;
    Rng srng(102);
    ds = split(std::move(ds), 0.8, 0.2, srng);

    Hyperparams hp;
    hp.k = 1;
    hp.lambda1 = 0.0;
    hp.lambda2 = 0.0;
    hp.max_epochs = 300;
    hp.patience = 300;
    Rng fit_rng(7);
    const FitResult fr = sosbp_fit(ds, hp, fit_rng);
    const double cos = std::abs(fr.model.W.col(0).dot(w));
    CHECK(cos >= 0.99);
}

TEST_CASE("grid_search picks the best validation cell") {
    Rng rng(33);
    Dataset ds = linear_dataset(150, 3, 0.3, rng);
    Hyperparams base;
    base.k = 2;
    base.max_epochs = 6;
    Rng grng(8);
    const GridResult g = grid_search(ds, base, grng);
    const double l1 = g.hp.lambda1, l2 = g.hp.lambda2;
    const auto in_grid = [](double v) {
        return v == 1e-4 || v == 1e-3 || v == 1e-2;
    };
    CHECK(in_grid(l1));
    CHECK(in_grid(l2));
    CHECK(g.hp.lambda3 == base.lambda3);
    CHECK(std::isfinite(g.val_score));
    CHECK(!g.fit.history.epochs.empty());
}

TEST_CASE("run_pipeline returns a pruned fine-tuned model") {
    Rng rng(34);
    Dataset ds = linear_dataset(300, 4, 0.3, rng);
    Hyperparams hp;
    hp.k = 3;
    hp.max_epochs = 10;
    hp.finetune_epochs = 5;
    Rng prng(6);
    const PipelineResult pr = run_pipeline(ds, hp, false, prng);
    CHECK(!survivors(pr.model).empty());
    CHECK(pr.used.lambda1 == hp.lambda1);
    CHECK(orthogonality_residual(pr.model.W) <= 1e-8);
    CHECK(!pr.history.epochs.empty());
}

TEST_CASE("write_history_csv emits one row per epoch") {
    TrainHistory h;
    h.epochs = {{0.5, 0.4, 1e-12, 0.1}, {0.3, 0.35, 2e-12, 0.2}};
    h.best_epoch = 1;
    const std::string path = "history_test_tmp.csv";
    write_history_csv(h, path);
    std::ifstream in(path);
    std::string line;
    int rows = 0;
    std::getline(in, line);
    CHECK(line == "epoch,train_loss,val_score,ortho_residual,seconds");
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);
    in.close();
    std::remove(path.c_str());
}
