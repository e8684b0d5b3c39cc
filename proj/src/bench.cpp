#include "xnn/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>
#include <utility>

#include "xnn/errors.hpp"
#include "xnn/rng.hpp"

namespace xnn {

std::vector<double> greedy_match_cosines(const Matrix& true_dirs,
                                         const Matrix& W,
                                         const std::vector<int>& cols) {
    const Eigen::Index m = true_dirs.rows();
    std::vector<double> out(static_cast<std::size_t>(m),
                            std::numeric_limits<double>::quiet_NaN());
    // All |cosine| pairs, matched best-first with each side used once.
    struct Pair {
        double c;
        Eigen::Index row;
        std::size_t ci;
    };
    std::vector<Pair> pairs;
    for (Eigen::Index i = 0; i < m; ++i) {
        const double tn = true_dirs.row(i).norm();
        if (tn <= 0.0) continue;
        for (std::size_t ci = 0; ci < cols.size(); ++ci) {
            const auto col = W.col(cols[ci]);
            const double wn = col.norm();
            if (wn <= 0.0) continue;
            const double c =
                std::abs(true_dirs.row(i).dot(col.transpose())) / (tn * wn);
            pairs.push_back({c, i, ci});
        }
    }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Pair& a, const Pair& b) { return a.c > b.c; });
    std::vector<bool> row_used(static_cast<std::size_t>(m), false);
    std::vector<bool> col_used(cols.size(), false);
    for (const Pair& pr : pairs) {
        if (row_used[static_cast<std::size_t>(pr.row)] || col_used[pr.ci])
            continue;
        row_used[static_cast<std::size_t>(pr.row)] = true;
        col_used[pr.ci] = true;
        out[static_cast<std::size_t>(pr.row)] = pr.c;
    }
    return out;
}

CellResult run_scenario_cell(ScenarioId id, int n, int rep, std::uint64_t seed,
                             Hyperparams hp, bool grid) {
    CellResult res;
    res.scenario = id;
    res.n = n;
    res.rep = rep;
    try {
        const std::string tag = scenario_name(id) + "/n=" + std::to_string(n) +
                                "/rep=" + std::to_string(rep);
        Rng root(seed);
        Rng r_pool = root.fork(tag + "/pool");
        Rng r_split = root.fork(tag + "/split");
        Rng r_test = root.fork(tag + "/test");
        Rng r_fit = root.fork(tag + "/fit");

        const ScenarioSpec spec = scenario_spec(id);
        Dataset pool = scenario(spec, n, r_pool);
        pool = split(std::move(pool), 0.8, 0.2, r_split);
        Dataset test = scenario(spec, 10000, r_test);

        hp.seed = r_fit.base_seed();
        PipelineResult pr = run_pipeline(pool, hp, grid, r_fit);

        const Metrics m =
            evaluate(pr.model, test.X, test.y, Task::Regression);
        res.test_mse = m.mse;
        res.max_step_ortho = pr.history.max_step_ortho_residual;

        std::vector<int> active;
        for (Eigen::Index j = 0; j < pr.model.beta.size(); ++j)
            if (pr.model.beta(j) != 0.0) active.push_back(static_cast<int>(j));
        res.survivors = static_cast<int>(active.size());

        const SplitView tr = subset(pool, SplitLabel::Train);
        const Matrix H = raw_subnet_outputs(pr.model, tr.X);
        const double nt = static_cast<double>(tr.X.rows());
        for (int j : active) {
            const Vector ht = normalize(H.col(j), pr.model.norm[static_cast<std::size_t>(j)]);
            const double mean = ht.mean();
            const double sd = std::sqrt((ht.array() - mean).square().sum() / nt);
            res.norm_mean_abs = std::max(res.norm_mean_abs, std::abs(mean));
            res.norm_std_err = std::max(res.norm_std_err, std::abs(sd - 1.0));
        }

        if (!spec.true_W.rows()) return res;
        const Matrix dirs = normalized_true_directions(spec);
        const std::vector<double> cos =
            greedy_match_cosines(dirs, pr.model.W, active);
        double mn = std::numeric_limits<double>::infinity();
        bool all = res.survivors == static_cast<int>(dirs.rows());
        for (double c : cos) {
            if (std::isnan(c)) {
                all = false;
                continue;
            }
            mn = std::min(mn, c);
        }
        if (std::isfinite(mn)) res.min_matched_cos = mn;
        res.structure_ok = all && std::isfinite(mn) && mn >= 0.9;
    } catch (const std::exception& e) {
        res.error = e.what();
    }
    return res;
}

std::vector<CellResult> run_benchmark(
    const BenchConfig& cfg,
    const std::function<void(const CellResult&)>& on_cell) {
    if (cfg.reps <= 0) throw ConfigError("benchmark reps must be positive");
    if (cfg.scenarios.empty() || cfg.sizes.empty())
        throw ConfigError("benchmark needs at least one scenario and size");
    struct Cell {
        ScenarioId id;
        int n;
        int rep;
    };
    std::vector<Cell> todo;
    for (ScenarioId id : cfg.scenarios)
        for (int n : cfg.sizes)
            for (int rep = 0; rep < cfg.reps; ++rep) todo.push_back({id, n, rep});

    std::vector<CellResult> out(todo.size());
    std::atomic<std::size_t> next{0};
    std::mutex cb_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= todo.size()) return;
            const Cell& c = todo[i];
            out[i] = run_scenario_cell(c.id, c.n, c.rep, cfg.seed, cfg.hp,
                                       cfg.grid);
            if (on_cell) {
                std::lock_guard<std::mutex> lk(cb_mutex);
                on_cell(out[i]);
            }
        }
    };
    const int jobs = std::max(1, cfg.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<std::size_t>(jobs));
        for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    return out;
}

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

void write_benchmark_csv(const std::vector<CellResult>& cells,
                         const std::string& path) {
    // Group rows in first-appearance order of (scenario, n).
    std::vector<std::pair<ScenarioId, int>> keys;
    std::map<std::pair<int, int>, std::vector<const CellResult*>> groups;
    for (const CellResult& c : cells) {
        const auto key = std::make_pair(static_cast<int>(c.scenario), c.n);
        auto [it, inserted] = groups.try_emplace(key);
        if (inserted) keys.push_back({c.scenario, c.n});
        it->second.push_back(&c);
    }
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "scenario,n,reps,failures,mean_mse,std_mse\n";
    for (const auto& [id, n] : keys) {
        const auto& group = groups[{static_cast<int>(id), n}];
        std::vector<double> mses;
        int failures = 0;
        for (const CellResult* c : group) {
            if (c->error.empty() && std::isfinite(c->test_mse))
                mses.push_back(c->test_mse);
            else
                ++failures;
        }
        double mean = std::numeric_limits<double>::quiet_NaN();
        double sd = std::numeric_limits<double>::quiet_NaN();
        if (!mses.empty()) {
            double s = 0.0;
            for (double v : mses) s += v;
            mean = s / static_cast<double>(mses.size());
            if (mses.size() > 1) {
                double ss = 0.0;
                for (double v : mses) ss += (v - mean) * (v - mean);
                sd = std::sqrt(ss / static_cast<double>(mses.size() - 1));
            } else {
                sd = 0.0;
            }
        }
        out << scenario_name(id) << ',' << n << ',' << group.size() << ','
            << failures << ',' << fmt(mean) << ',' << fmt(sd) << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

void write_benchmark_cells_csv(const std::vector<CellResult>& cells,
                               const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << "scenario,n,rep,test_mse,survivors,max_step_ortho,norm_mean_abs,"
           "norm_std_err,structure_ok,min_matched_cos,error\n";
    for (const CellResult& c : cells) {
        std::string err = c.error;
        for (char& ch : err)
            if (ch == ',' || ch == '\n') ch = ';';
        out << scenario_name(c.scenario) << ',' << c.n << ',' << c.rep << ','
            << fmt(c.test_mse) << ',' << c.survivors << ','
            << fmt(c.max_step_ortho) << ',' << fmt(c.norm_mean_abs) << ','
            << fmt(c.norm_std_err) << ',' << (c.structure_ok ? 1 : 0) << ','
            << fmt(c.min_matched_cos) << ',' << err << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace xnn
