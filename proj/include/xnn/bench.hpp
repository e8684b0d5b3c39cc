#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "xnn/data.hpp"
#include "xnn/train.hpp"

namespace xnn {

struct CellResult {
    ScenarioId scenario = ScenarioId::S1;
    int n = 0;
    int rep = 0;
    double test_mse = std::numeric_limits<double>::quiet_NaN();
    int survivors = 0;
    double max_step_ortho = 0.0;
    // Normalization residuals of the retained ridge functions over the
    // training split: worst |mean| and worst |population std - 1|.
    double norm_mean_abs = 0.0;
    double norm_std_err = 0.0;
    // Valid only for scenarios with ground-truth directions (S1, S2):
    bool structure_ok = false;
    double min_matched_cos = std::numeric_limits<double>::quiet_NaN();
    std::string error;  // nonempty when the cell failed
};

// |cosine| between each normalized true direction (row of true_dirs) and its
// greedy one-to-one match among the listed W columns; NaN for unmatched rows.
std::vector<double> greedy_match_cosines(const Matrix& true_dirs,
                                         const Matrix& W,
                                         const std::vector<int>& cols);

// One (scenario, n, repetition): training pool + 80/20 split + fresh
// 10000-row test set, all streams forked from `seed` by cell-specific tags,
// then fit -> prune -> fine_tune -> test evaluation. Exceptions land in
// `error` instead of propagating.
CellResult run_scenario_cell(ScenarioId id, int n, int rep, std::uint64_t seed,
                             Hyperparams hp, bool grid);

struct BenchConfig {
    std::vector<ScenarioId> scenarios;
    std::vector<int> sizes;
    int reps = 10;
    std::uint64_t seed = 0;
    Hyperparams hp;
    bool grid = false;
    int jobs = 1;
};

// Runs all cells (scenario x size x rep), up to `jobs` at a time. Results
// come back in deterministic enumeration order regardless of scheduling.
// `on_cell`, when set, observes each finished cell (serialized by a mutex).
std::vector<CellResult> run_benchmark(
    const BenchConfig& cfg,
    const std::function<void(const CellResult&)>& on_cell = {});

// One row per (scenario, n): mean/std of test MSE over the successful
// repetitions plus the failure count.
void write_benchmark_csv(const std::vector<CellResult>& cells,
                         const std::string& path);

// Per-repetition rows, for drill-down.
void write_benchmark_cells_csv(const std::vector<CellResult>& cells,
                               const std::string& path);

}  // namespace xnn
