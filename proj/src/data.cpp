#include "xnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <string>

#include "xnn/errors.hpp"

namespace xnn {

Matrix apply_scaling(const MinMaxScaling& sc, Matrix X) {
    if (sc.lo.size() != sc.columns.size() || sc.hi.size() != sc.columns.size())
        throw ShapeError("apply_scaling: ragged scaling record");
    for (std::size_t i = 0; i < sc.columns.size(); ++i) {
        const int c = sc.columns[i];
        if (c < 0 || c >= X.cols())
            throw ShapeError("apply_scaling: column index out of range");
        const double lo = sc.lo[i];
        const double hi = sc.hi[i];
        if (hi > lo)
            X.col(c) = (2.0 * (X.col(c).array() - lo) / (hi - lo) - 1.0).matrix();
        else
            X.col(c).setZero();
    }
    return X;
}

SplitView subset(const Dataset& ds, SplitLabel label) {
    if (ds.split.size() != static_cast<std::size_t>(ds.n()))
        throw ConfigError("subset: dataset has no split labels");
    std::vector<Eigen::Index> idx;
    for (Eigen::Index i = 0; i < ds.n(); ++i)
        if (ds.split[static_cast<std::size_t>(i)] == label) idx.push_back(i);
    SplitView out;
    out.X.resize(static_cast<Eigen::Index>(idx.size()), ds.X.cols());
    out.y.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
        out.X.row(static_cast<Eigen::Index>(i)) = ds.X.row(idx[i]);
        out.y[static_cast<Eigen::Index>(i)] = ds.y[idx[i]];
    }
    return out;
}

ScenarioSpec scenario_spec(ScenarioId id) {
    ScenarioSpec spec;
    spec.id = id;
    if (id == ScenarioId::S1) {
        spec.true_W = Matrix::Zero(4, 10);
        spec.true_W(0, 0) = 1.0;
        spec.true_W(1, 1) = 1.0;
        spec.true_W(2, 2) = 0.5;
        spec.true_W(2, 3) = 0.5;
        spec.true_W(3, 4) = 0.2;
        spec.true_W(3, 5) = 0.3;
        spec.true_W(3, 6) = 0.5;
    } else if (id == ScenarioId::S2) {
        spec.true_W = Matrix::Zero(3, 10);
        for (int j = 0; j < 3; ++j) {
            spec.true_W(j, j) = 0.1;
            spec.true_W(j, j + 1) = 0.9;
        }
    }
    return spec;
}

ScenarioId parse_scenario(const std::string& name) {
    for (int i = 1; i <= 6; ++i)
        if (name == "S" + std::to_string(i)) return static_cast<ScenarioId>(i);
    throw ConfigError("unknown scenario '" + name +
                      "'; valid ids: S1 S2 S3 S4 S5 S6");
}

std::string scenario_name(ScenarioId id) {
    return "S" + std::to_string(static_cast<int>(id));
}

Matrix normalized_true_directions(const ScenarioSpec& spec) {
    Matrix out = spec.true_W;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double norm = out.row(r).norm();
        if (norm > 0.0) out.row(r) /= norm;
    }
    return out;
}

Matrix gen_features(int n, int p, double t, Rng& rng) {
    if (n < 1 || p < 1) throw ConfigError("gen_features: n and p must be >= 1");
    if (t < 0.0) throw ConfigError("gen_features: t must be >= 0");
    Matrix X(n, p);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) X(i, j) = rng.uniform(-1.0, 1.0);
        const double s = rng.uniform(-1.0, 1.0);
        X.row(i) = (X.row(i).array() + t * s) / (1.0 + t);
    }
    return X;
}

namespace {

// Scenario means; x(j) is 1-based to match the formulas' feature numbering.
double scenario_mean(ScenarioId id, const Matrix& X, Eigen::Index i) {
    const auto x = [&](int j) { return X(i, j - 1); };
    constexpr double pi = std::numbers::pi;
    switch (id) {
        case ScenarioId::S1: {
            const double z3 = 0.5 * x(3) + 0.5 * x(4);
            const double z4 = 0.2 * x(5) + 0.3 * x(6) + 0.5 * x(7);
            return 2.0 * x(1) + 0.2 * std::exp(-4.0 * x(2)) + 3.0 * z3 * z3 +
                   2.5 * std::sin(pi * z4);
        }
        case ScenarioId::S2: {
            const double z1 = 0.1 * x(1) + 0.9 * x(2);
            const double z2 = 0.1 * x(2) + 0.9 * x(3);
            const double z3 = 0.1 * x(3) + 0.9 * x(4);
            return 3.0 + 0.5 * z1 +
                   4.0 * std::sin(pi * z2) / (2.0 - std::sin(pi * z2)) -
                   4.0 * std::exp(-z3 * z3);
        }
        case ScenarioId::S3:
            return std::exp(2.0 * std::tanh(x(1) * x(2) + 2.0 * x(3) * x(4)));
        case ScenarioId::S4:
            return 3.0 * std::pow(pi, x(1) * x(2)) * std::sqrt(2.0 * (x(3) + 1.0));
        case ScenarioId::S5: {
            const double q = 1.5 + x(3) + x(5) - x(4) - x(6);
            return x(1) - x(2) +
                   2.0 * (x(3) + x(4) + x(5) + x(6)) / (0.5 + q * q);
        }
        case ScenarioId::S6:
            return std::sin(0.5 * pi * (-x(1) + 2.0 * x(3) + x(4))) *
                   std::exp(0.5 * (x(2) + x(3) - x(4)));
    }
    throw ConfigError("scenario: unknown id");
}

}  // namespace

Dataset scenario(const ScenarioSpec& spec, int n, Rng& rng) {
    if (n < 1) throw ConfigError("scenario: n must be >= 1");
    Dataset ds;
    ds.X = gen_features(n, spec.p, 1.0, rng);
    ds.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i)
        ds.y[i] = scenario_mean(spec.id, ds.X, i) + rng.normal(0.0, spec.noise_sd);
    ds.task = Task::Regression;
    ds.feature_names.resize(static_cast<std::size_t>(spec.p));
    for (int j = 0; j < spec.p; ++j)
        ds.feature_names[static_cast<std::size_t>(j)] = "x" + std::to_string(j + 1);
    return ds;
}

Dataset split(Dataset ds, double train_frac, double val_frac, Rng& rng) {
    if (train_frac <= 0.0 || val_frac <= 0.0 ||
        train_frac + val_frac > 1.0 + 1e-12)
        throw ConfigError("split: fractions must be positive with sum <= 1");
    const auto n = static_cast<std::size_t>(ds.n());
    const auto n_train = static_cast<std::size_t>(train_frac * static_cast<double>(n));
    const auto n_val = static_cast<std::size_t>(val_frac * static_cast<double>(n));
    if (n_train == 0 || n_val == 0)
        throw ConfigError("split: empty train or validation split");
    const std::vector<std::size_t> perm = rng.permutation(n);
    ds.split.assign(n, SplitLabel::Test);
    for (std::size_t i = 0; i < n_train; ++i) ds.split[perm[i]] = SplitLabel::Train;
    for (std::size_t i = n_train; i < n_train + n_val; ++i)
        ds.split[perm[i]] = SplitLabel::Validation;
    return ds;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(trim(line.substr(start)));
            return out;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace

Dataset load_csv(const std::string& path, const CsvSchema& schema,
                 std::vector<long>* rejected_lines) {
    std::ifstream in(path);
    if (!in) throw DataError("load_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw DataError("load_csv: empty file '" + path + "'");
    const std::vector<std::string> header = split_fields(line);

    std::vector<std::pair<int, ColumnRole>> cols;  // header index, role
    std::vector<std::string> col_names;
    int response_idx = -1;
    for (const auto& [name, role] : schema.columns) {
        if (role == ColumnRole::Ignore) continue;
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw DataError("load_csv: column '" + name + "' not in header of '" +
                            path + "'");
        const int idx = static_cast<int>(it - header.begin());
        if (role == ColumnRole::Response) {
            if (response_idx >= 0)
                throw DataError("load_csv: multiple response columns");
            response_idx = idx;
        } else {
            cols.emplace_back(idx, role);
            col_names.push_back(name);
        }
    }
    if (response_idx < 0)
        throw DataError("load_csv: schema names no response column");

    std::vector<std::vector<std::string>> raw;
    std::vector<long> rejected;
    long line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split_fields(line);
        bool ok = fields.size() == header.size();
        double tmp = 0.0;
        for (std::size_t c = 0; ok && c < cols.size(); ++c)
            if (cols[c].second == ColumnRole::Numeric &&
                !parse_double(fields[static_cast<std::size_t>(cols[c].first)], tmp))
                ok = false;
        if (ok && !parse_double(fields[static_cast<std::size_t>(response_idx)], tmp))
            ok = false;
        if (!ok) {
            rejected.push_back(line_no);
            continue;
        }
        raw.push_back(std::move(fields));
    }
    if (rejected_lines) *rejected_lines = rejected;
    if (raw.empty())
        throw DataError("load_csv: no usable data rows in '" + path + "'");

    // Sorted unique levels per categorical column.
    std::map<int, std::vector<std::string>> levels;
    for (const auto& [idx, role] : cols)
        if (role == ColumnRole::Categorical) {
            std::set<std::string> uniq;
            for (const auto& r : raw) uniq.insert(r[static_cast<std::size_t>(idx)]);
            levels[idx] = {uniq.begin(), uniq.end()};
        }

    std::size_t n_numeric = 0;
    std::size_t p = 0;
    for (const auto& [idx, role] : cols)
        if (role == ColumnRole::Numeric) {
            ++n_numeric;
            ++p;
        } else {
            p += levels[idx].size();
        }

    Dataset ds;
    ds.task = schema.task;
    const auto n = static_cast<Eigen::Index>(raw.size());
    ds.X.resize(n, static_cast<Eigen::Index>(p));
    ds.y.resize(n);
    ds.feature_names.resize(p);

    // Numeric block first (schema order), then one-hot blocks (schema order,
    // levels sorted).
    Eigen::Index col_out = 0;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        const auto [idx, role] = cols[c];
        if (role != ColumnRole::Numeric) continue;
        ds.feature_names[static_cast<std::size_t>(col_out)] = col_names[c];
        for (Eigen::Index i = 0; i < n; ++i) {
            double v = 0.0;
            parse_double(raw[static_cast<std::size_t>(i)][static_cast<std::size_t>(idx)], v);
            ds.X(i, col_out) = v;
        }
        ++col_out;
    }
    for (std::size_t c = 0; c < cols.size(); ++c) {
        const auto [idx, role] = cols[c];
        if (role != ColumnRole::Categorical) continue;
        const auto& lv = levels[idx];
        for (std::size_t l = 0; l < lv.size(); ++l)
            ds.feature_names[static_cast<std::size_t>(col_out) + l] =
                col_names[c] + "=" + lv[l];
        for (Eigen::Index i = 0; i < n; ++i) {
            const std::string& cell = raw[static_cast<std::size_t>(i)][static_cast<std::size_t>(idx)];
            const auto it = std::lower_bound(lv.begin(), lv.end(), cell);
            for (std::size_t l = 0; l < lv.size(); ++l)
                ds.X(i, col_out + static_cast<Eigen::Index>(l)) = 0.0;
            ds.X(i, col_out + (it - lv.begin())) = 1.0;
        }
        col_out += static_cast<Eigen::Index>(lv.size());
    }

    for (Eigen::Index i = 0; i < n; ++i) {
        double v = 0.0;
        parse_double(raw[static_cast<std::size_t>(i)][static_cast<std::size_t>(response_idx)], v);
        if (ds.task == Task::Classification && v != 0.0 && v != 1.0)
            throw DataError("load_csv: non-binary response under classification");
        ds.y[i] = v;
    }

    if (schema.minmax_scale && n_numeric > 0) {
        MinMaxScaling sc;
        for (std::size_t c = 0; c < n_numeric; ++c) {
            const auto j = static_cast<Eigen::Index>(c);
            sc.columns.push_back(static_cast<int>(c));
            sc.lo.push_back(ds.X.col(j).minCoeff());
            sc.hi.push_back(ds.X.col(j).maxCoeff());
        }
        ds.X = apply_scaling(sc, std::move(ds.X));
        ds.scaling = std::move(sc);
    }
    return ds;
}

void save_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("save_csv: cannot write '" + path + "'");
    for (Eigen::Index j = 0; j < ds.X.cols(); ++j) {
        const auto sj = static_cast<std::size_t>(j);
        out << (sj < ds.feature_names.size() && !ds.feature_names[sj].empty()
                    ? ds.feature_names[sj]
                    : "x" + std::to_string(j + 1))
            << ',';
    }
    out << "y\n";
    char buf[40];
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
        for (Eigen::Index j = 0; j < ds.X.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", ds.X(i, j));
            out << buf << ',';
        }
        std::snprintf(buf, sizeof buf, "%.17g", ds.y[i]);
        out << buf << '\n';
    }
    if (!out) throw DataError("save_csv: write to '" + path + "' failed");
}

std::vector<std::string> csv_header(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("csv_header: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line))
        throw DataError("csv_header: empty file '" + path + "'");
    return split_fields(line);
}

}  // namespace xnn
