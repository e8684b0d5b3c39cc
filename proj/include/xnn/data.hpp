#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xnn/model.hpp"
#include "xnn/rng.hpp"

namespace xnn {

enum class Task { Regression, Classification };
enum class SplitLabel { Train, Validation, Test };

// Affine map taking column j from [lo_j, hi_j] to [-1, 1]. Columns with a
// degenerate range map to 0.
struct MinMaxScaling {
    std::vector<int> columns;
    std::vector<double> lo;
    std::vector<double> hi;
};

Matrix apply_scaling(const MinMaxScaling& sc, Matrix X);

struct Dataset {
    Matrix X;
    Vector y;
    Task task = Task::Regression;
    std::vector<std::string> feature_names;
    std::vector<SplitLabel> split;  // empty until split() assigns labels
    std::optional<MinMaxScaling> scaling;

    Eigen::Index n() const { return X.rows(); }
    int p() const { return static_cast<int>(X.cols()); }
};

struct SplitView {
    Matrix X;
    Vector y;
};

// Rows carrying the given label, in their original order.
SplitView subset(const Dataset& ds, SplitLabel label);

enum class ScenarioId { S1 = 1, S2, S3, S4, S5, S6 };

// Ground truth for the synthetic benchmarks. true_W rows are the projection
// directions exactly as printed (S1 and S2 only; rows are not all unit norm).
struct ScenarioSpec {
    ScenarioId id = ScenarioId::S1;
    int p = 10;
    double noise_sd = 1.0;
    Matrix true_W;
};

ScenarioSpec scenario_spec(ScenarioId id);
ScenarioId parse_scenario(const std::string& name);
std::string scenario_name(ScenarioId id);

// Rows of true_W rescaled to unit norm; recovery checks compare directions
// up to scale and sign.
Matrix normalized_true_directions(const ScenarioSpec& spec);

// Correlated features x_j = (d_j + t s) / (1 + t) with d_j, s ~ Unif(-1,1).
// Draw order is row-major: d_1..d_p for the row, then its shared s.
Matrix gen_features(int n, int p, double t, Rng& rng);

// Features via gen_features(t=1), then one N(0, noise_sd) draw per row added
// to the scenario mean. Feature draws complete before any noise draw.
Dataset scenario(const ScenarioSpec& spec, int n, Rng& rng);

// Random permutation; first floor(train_frac n) rows become train, the next
// floor(val_frac n) validation, the remainder test.
Dataset split(Dataset ds, double train_frac, double val_frac, Rng& rng);

enum class ColumnRole { Numeric, Categorical, Response, Ignore };

struct CsvSchema {
    std::vector<std::pair<std::string, ColumnRole>> columns;
    Task task = Task::Regression;
    bool minmax_scale = false;
};

// Comma-separated, UTF-8, first row header, '.' decimal separator. Categorical
// columns are one-hot encoded, appended after the numeric block in sorted
// level order. Rows with unparseable cells are dropped; their 1-based line
// numbers are returned through rejected_lines when given.
Dataset load_csv(const std::string& path, const CsvSchema& schema,
                 std::vector<long>* rejected_lines = nullptr);

void save_csv(const Dataset& ds, const std::string& path);

// Header row of a CSV file, for building a schema before a full load.
std::vector<std::string> csv_header(const std::string& path);

}  // namespace xnn
