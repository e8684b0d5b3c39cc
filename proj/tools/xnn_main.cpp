// xnn: simulate | train | evaluate | explain | benchmark | fdcheck.
// Diagnostics go to stderr; data goes to files. Exit 0 iff no error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "xnn/bench.hpp"
#include "xnn/data.hpp"
#include "xnn/errors.hpp"
#include "xnn/report.hpp"
#include "xnn/rng.hpp"
#include "xnn/serialize.hpp"
#include "xnn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace xnn;

namespace {

// Values from --config fill in only where the flag was not given on the
// command line; flags always win. Unknown keys are rejected.
class ConfigRegistry {
  public:
    template <class T>
    void bind(const std::string& key, CLI::Option* opt, T& target) {
        items_.push_back({key, opt, [&target, key](const ordered_json& v) {
                              try {
                                  target = v.get<T>();
                              } catch (const ordered_json::exception&) {
                                  throw ConfigError("config key '" + key +
                                                    "': wrong value type");
                              }
                          }});
    }

    // Vector-valued keys additionally accept a scalar as a one-element list.
    template <class T>
    void bind_list(const std::string& key, CLI::Option* opt,
                   std::vector<T>& target) {
        items_.push_back({key, opt, [&target, key](const ordered_json& v) {
                              const ordered_json arr =
                                  v.is_array() ? v : ordered_json::array({v});
                              try {
                                  target = arr.get<std::vector<T>>();
                              } catch (const ordered_json::exception&) {
                                  throw ConfigError("config key '" + key +
                                                    "': wrong value type");
                              }
                          }});
    }

    void apply_file(const std::string& path) const {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config '" + path + "'");
        ordered_json doc;
        try {
            doc = ordered_json::parse(in);
        } catch (const ordered_json::exception& e) {
            throw ConfigError("config '" + path + "': " + e.what());
        }
        if (!doc.is_object())
            throw ConfigError("config '" + path + "' must be a JSON object");
        for (const auto& [key, value] : doc.items()) {
            const auto it = std::find_if(
                items_.begin(), items_.end(),
                [&key](const Item& b) { return b.key == key; });
            if (it == items_.end())
                throw ConfigError("unknown config key '" + key + "'");
            if (it->opt != nullptr && it->opt->count() > 0) continue;
            it->apply(value);
        }
    }

  private:
    struct Item {
        std::string key;
        CLI::Option* opt;
        std::function<void(const ordered_json&)> apply;
    };
    std::vector<Item> items_;
};

struct HpFlags {
    Hyperparams hp;
    void add(CLI::App* cmd, ConfigRegistry& reg) {
        auto* o_k = cmd->add_option("--k", hp.k, "Number of subnetworks (0 = min(p, 10))");
        auto* o_l1 = cmd->add_option("--lambda1", hp.lambda1, "L1 penalty on projection weights");
        auto* o_l2 = cmd->add_option("--lambda2", hp.lambda2, "L1 penalty on subnetwork scales");
        auto* o_l3 = cmd->add_option("--lambda3", hp.lambda3, "Roughness penalty");
        auto* o_tau = cmd->add_option("--tau", hp.tau, "Cayley step size");
        auto* o_eta = cmd->add_option("--eta", hp.eta, "Adam learning rate");
        auto* o_bs = cmd->add_option("--batch-size", hp.batch_size, "Mini-batch size (0 = auto)");
        auto* o_ep = cmd->add_option("--epochs", hp.max_epochs, "Maximum training epochs");
        auto* o_pat = cmd->add_option("--patience", hp.patience, "Early-stopping patience");
        auto* o_md = cmd->add_option("--min-delta", hp.min_delta, "Early-stopping improvement threshold");
        auto* o_pr = cmd->add_option("--prune", hp.prune_threshold, "Cumulative importance kept by pruning");
        auto* o_ft = cmd->add_option("--finetune-epochs", hp.finetune_epochs, "Fine-tuning epochs after pruning");
        auto* o_hid = cmd->add_option("--hidden", hp.subnet_arch.hidden, "Subnetwork hidden layer sizes");
        auto* o_gam = cmd->add_flag("--gam-mode", hp.gam_mode, "Freeze W to identity columns");
        reg.bind("k", o_k, hp.k);
        reg.bind("lambda1", o_l1, hp.lambda1);
        reg.bind("lambda2", o_l2, hp.lambda2);
        reg.bind("lambda3", o_l3, hp.lambda3);
        reg.bind("tau", o_tau, hp.tau);
        reg.bind("eta", o_eta, hp.eta);
        reg.bind("batch-size", o_bs, hp.batch_size);
        reg.bind("epochs", o_ep, hp.max_epochs);
        reg.bind("patience", o_pat, hp.patience);
        reg.bind("min-delta", o_md, hp.min_delta);
        reg.bind("prune", o_pr, hp.prune_threshold);
        reg.bind("finetune-epochs", o_ft, hp.finetune_epochs);
        reg.bind_list("hidden", o_hid, hp.subnet_arch.hidden);
        reg.bind("gam-mode", o_gam, hp.gam_mode);
    }
};

struct SchemaFlags {
    std::string response = "y";
    std::vector<std::string> categorical;
    std::vector<std::string> ignore;
    std::string task = "regression";
    void add(CLI::App* cmd, ConfigRegistry& reg, bool with_task) {
        auto* o_resp = cmd->add_option("--response", response, "Response column name");
        auto* o_cat = cmd->add_option("--categorical", categorical, "Categorical column names");
        auto* o_ign = cmd->add_option("--ignore", ignore, "Column names to drop");
        reg.bind("response", o_resp, response);
        reg.bind_list("categorical", o_cat, categorical);
        reg.bind_list("ignore", o_ign, ignore);
        if (with_task) {
            auto* o_task = cmd->add_option("--task", task, "regression or classification")
                               ->check(CLI::IsMember({"regression", "classification"}));
            reg.bind("task", o_task, task);
        }
    }
    CsvSchema build(const std::string& data_path, Task task_kind,
                    bool minmax) const {
        CsvSchema schema;
        schema.task = task_kind;
        schema.minmax_scale = minmax;
        bool saw_response = false;
        for (const std::string& name : csv_header(data_path)) {
            ColumnRole role = ColumnRole::Numeric;
            if (name == response) {
                role = ColumnRole::Response;
                saw_response = true;
            } else if (std::count(categorical.begin(), categorical.end(), name)) {
                role = ColumnRole::Categorical;
            } else if (std::count(ignore.begin(), ignore.end(), name)) {
                role = ColumnRole::Ignore;
            }
            schema.columns.emplace_back(name, role);
        }
        if (!saw_response)
            throw ConfigError("response column '" + response + "' not in '" +
                              data_path + "'");
        return schema;
    }
};

Task parse_task(const std::string& s) {
    return s == "classification" ? Task::Classification : Task::Regression;
}

Dataset load_with_warnings(const std::string& path, const CsvSchema& schema) {
    std::vector<long> rejected;
    Dataset ds = load_csv(path, schema, &rejected);
    if (!rejected.empty()) {
        std::cerr << "warning: dropped " << rejected.size()
                  << " malformed row(s) of '" << path << "' (lines";
        for (std::size_t i = 0; i < rejected.size() && i < 10; ++i)
            std::cerr << ' ' << rejected[i];
        if (rejected.size() > 10) std::cerr << " ...";
        std::cerr << ")\n";
    }
    return ds;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << text;
    if (!out) throw DataError("write to '" + path + "' failed");
}

// Applies a trained model's stored feature scaling, if any.
Dataset prepare_eval_data(const LoadedModel& lm, const std::string& path,
                          const SchemaFlags& sf, Task task_kind) {
    CsvSchema schema = sf.build(path, task_kind, false);
    Dataset ds = load_with_warnings(path, schema);
    if (lm.scaling) ds.X = apply_scaling(*lm.scaling, std::move(ds.X));
    if (ds.p() != lm.model.p())
        throw DataError("data has " + std::to_string(ds.p()) +
                        " features, model expects " +
                        std::to_string(lm.model.p()));
    return ds;
}

int cmd_simulate(const std::string& scenario_str, int n, std::uint64_t seed,
                 const std::string& out_dir) {
    const ScenarioId id = parse_scenario(scenario_str);
    if (n < 1) throw ConfigError("--n must be at least 1");
    Rng rng(seed);
    Dataset ds = scenario(scenario_spec(id), n, rng);
    fs::create_directories(out_dir);
    const std::string stem = scenario_name(id) + "_n" + std::to_string(n) +
                             "_seed" + std::to_string(seed);
    const std::string csv_path = (fs::path(out_dir) / (stem + ".csv")).string();
    save_csv(ds, csv_path);
    ordered_json manifest = {{"format", "xnn-data/1"},
                             {"scenario", scenario_name(id)},
                             {"n", n},
                             {"seed", seed},
                             {"train_frac", 0.8},
                             {"val_frac", 0.2},
                             {"response", "y"}};
    write_text((fs::path(out_dir) / (stem + ".manifest.json")).string(),
               manifest.dump(2) + "\n");
    std::cerr << "wrote " << csv_path << " (" << n << " rows)\n";
    return 0;
}

int cmd_train(const std::string& data_path, const SchemaFlags& sf,
              bool minmax, HpFlags& hpf, bool grid, bool plots,
              std::uint64_t seed, const std::string& out_dir) {
    const Task task_kind = parse_task(sf.task);
    Dataset ds =
        load_with_warnings(data_path, sf.build(data_path, task_kind, minmax));
    Rng root(seed);
    Rng r_split = root.fork("split");
    ds = split(std::move(ds), 0.8, 0.2, r_split);

    hpf.hp.seed = seed;
    Rng r_train = root.fork("train");
    const PipelineResult pr = run_pipeline(ds, hpf.hp, grid, r_train);

    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    save_model((out / "model.json").string(), pr.model, pr.used, ds.scaling);
    write_history_csv(pr.history, (out / "history.csv").string());
    const SplitView train = subset(ds, SplitLabel::Train);
    const ExplainReport rep = make_report(pr.model, train.X);
    save_report((out / "report.json").string(), rep);
    if (plots) write_report_svgs(rep, out_dir);

    int survivors = 0;
    for (Eigen::Index j = 0; j < pr.model.beta.size(); ++j)
        if (pr.model.beta(j) != 0.0) ++survivors;
    std::cerr << "trained " << pr.history.epochs.size() << " epoch(s), best "
              << (pr.history.best_epoch + 1) << "; retained " << survivors
              << " of " << pr.model.k() << " subnetwork(s)\n";
    if (grid)
        std::cerr << "grid search chose lambda1=" << pr.used.lambda1
                  << " lambda2=" << pr.used.lambda2 << "\n";
    std::cerr << "wrote " << (out / "model.json").string() << "\n";
    return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& data_path,
                 const SchemaFlags& sf, bool task_given,
                 const std::string& out_dir) {
    const LoadedModel lm = load_model(model_path);
    const Task task_kind =
        lm.model.link == LinkKind::Logit ? Task::Classification : Task::Regression;
    if (task_given && parse_task(sf.task) != task_kind)
        throw ConfigError("model link implies task '" +
                          std::string(task_kind == Task::Classification
                                          ? "classification"
                                          : "regression") +
                          "' but --task says otherwise");
    const Dataset ds = prepare_eval_data(lm, data_path, sf, task_kind);
    const Metrics m = evaluate(lm.model, ds.X, ds.y, task_kind);

    fs::create_directories(out_dir);
    ordered_json doc;
    doc["format"] = "xnn-metrics/1";
    doc["n"] = ds.n();
    if (task_kind == Task::Regression) {
        doc["task"] = "regression";
        doc["mse"] = m.mse;
        std::cerr << "mse " << m.mse << " on " << ds.n() << " rows\n";
    } else {
        doc["task"] = "classification";
        doc["cross_entropy"] = m.cross_entropy;
        if (std::isnan(m.auc))
            doc["auc"] = nullptr;
        else
            doc["auc"] = m.auc;
        std::cerr << "cross-entropy " << m.cross_entropy << ", auc " << m.auc
                  << " on " << ds.n() << " rows\n";
    }
    const std::string path = (fs::path(out_dir) / "metrics.json").string();
    write_text(path, doc.dump(2) + "\n");
    std::cerr << "wrote " << path << "\n";
    return 0;
}

int cmd_explain(const std::string& model_path, const std::string& data_path,
                const SchemaFlags& sf, bool plots, const std::string& out_dir) {
    const LoadedModel lm = load_model(model_path);
    const Task task_kind =
        lm.model.link == LinkKind::Logit ? Task::Classification : Task::Regression;
    const Dataset ds = prepare_eval_data(lm, data_path, sf, task_kind);
    const ExplainReport rep = make_report(lm.model, ds.X);

    fs::create_directories(out_dir);
    const std::string path = (fs::path(out_dir) / "report.json").string();
    save_report(path, rep);
    std::cerr << "wrote " << path << " (" << rep.components.size()
              << " component(s))\n";
    if (plots)
        for (const std::string& svg : write_report_svgs(rep, out_dir))
            std::cerr << "wrote " << svg << "\n";
    return 0;
}

int cmd_benchmark(const std::vector<std::string>& scenario_strs,
                  const std::vector<int>& sizes_in, int reps,
                  std::uint64_t seed, const HpFlags& hpf, bool grid, int jobs,
                  const std::string& out_dir) {
    BenchConfig cfg;
    if (scenario_strs.empty()) {
        cfg.scenarios = {ScenarioId::S1, ScenarioId::S2, ScenarioId::S3,
                         ScenarioId::S4, ScenarioId::S5, ScenarioId::S6};
    } else {
        for (const std::string& s : scenario_strs)
            cfg.scenarios.push_back(parse_scenario(s));
    }
    cfg.sizes = sizes_in.empty() ? std::vector<int>{1000, 10000} : sizes_in;
    for (int n : cfg.sizes)
        if (n < 2) throw ConfigError("--n entries must be at least 2");
    cfg.reps = reps;
    cfg.seed = seed;
    cfg.hp = hpf.hp;
    cfg.grid = grid;
    cfg.jobs = jobs;

    const std::vector<CellResult> cells =
        run_benchmark(cfg, [](const CellResult& c) {
            std::cerr << scenario_name(c.scenario) << " n=" << c.n
                      << " rep=" << c.rep << ": ";
            if (c.error.empty())
                std::cerr << "mse=" << c.test_mse << " survivors="
                          << c.survivors << "\n";
            else
                std::cerr << "error: " << c.error << "\n";
        });

    fs::create_directories(out_dir);
    const fs::path out(out_dir);
    write_benchmark_csv(cells, (out / "benchmark.csv").string());
    write_benchmark_cells_csv(cells, (out / "benchmark_cells.csv").string());
    std::cerr << "wrote " << (out / "benchmark.csv").string() << "\n";
    return 0;
}

int cmd_fdcheck(std::uint64_t seed, double eps, bool corrupt) {
    if (eps <= 0.0) throw ConfigError("--eps must be positive");
    const std::vector<FdCase> cases =
        fd_battery(seed, eps, corrupt ? 1e-3 : 0.0);
    double max_err = 0.0;
    for (const FdCase& c : cases) {
        std::cerr << c.name << ": " << c.max_rel_err << "\n";
        max_err = std::max(max_err, c.max_rel_err);
    }
    std::printf("max relative error: %.6g over %zu configs\n", max_err,
                cases.size());
    return max_err <= 1e-5 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Explainable additive-index neural networks"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate a scenario dataset");
    ConfigRegistry sim_reg;
    std::string sim_config, sim_scenario, sim_out = ".";
    int sim_n = 10000;
    std::uint64_t sim_seed = 0;
    sim->add_option("--config", sim_config, "JSON config file");
    auto* o = sim->add_option("--scenario", sim_scenario, "Scenario id (S1..S6)");
    sim_reg.bind("scenario", o, sim_scenario);
    o = sim->add_option("--n", sim_n, "Number of rows");
    sim_reg.bind("n", o, sim_n);
    o = sim->add_option("--seed", sim_seed, "Random seed");
    sim_reg.bind("seed", o, sim_seed);
    o = sim->add_option("--out", sim_out, "Output directory");
    sim_reg.bind("out", o, sim_out);

    // train
    auto* tr = app.add_subcommand("train", "Fit a model on a CSV dataset");
    ConfigRegistry tr_reg;
    std::string tr_config, tr_data, tr_out = ".";
    std::uint64_t tr_seed = 0;
    bool tr_grid = false, tr_plots = false, tr_minmax = false;
    HpFlags tr_hp;
    SchemaFlags tr_schema;
    tr->add_option("--config", tr_config, "JSON config file");
    o = tr->add_option("--data", tr_data, "Training CSV path");
    tr_reg.bind("data", o, tr_data);
    o = tr->add_option("--seed", tr_seed, "Random seed");
    tr_reg.bind("seed", o, tr_seed);
    o = tr->add_option("--out", tr_out, "Output directory");
    tr_reg.bind("out", o, tr_out);
    auto* f = tr->add_flag("--grid-search", tr_grid, "Grid-search (lambda1, lambda2)");
    tr_reg.bind("grid-search", f, tr_grid);
    f = tr->add_flag("--plots", tr_plots, "Write per-component SVG plots");
    tr_reg.bind("plots", f, tr_plots);
    f = tr->add_flag("--minmax-scale", tr_minmax, "Min-max scale numeric features to [-1, 1]");
    tr_reg.bind("minmax-scale", f, tr_minmax);
    tr_hp.add(tr, tr_reg);
    tr_schema.add(tr, tr_reg, true);

    // evaluate
    auto* ev = app.add_subcommand("evaluate", "Score a model on a CSV dataset");
    ConfigRegistry ev_reg;
    std::string ev_config, ev_model, ev_data, ev_out = ".";
    SchemaFlags ev_schema;
    ev->add_option("--config", ev_config, "JSON config file");
    o = ev->add_option("--model", ev_model, "Model JSON path");
    ev_reg.bind("model", o, ev_model);
    o = ev->add_option("--data", ev_data, "Evaluation CSV path");
    ev_reg.bind("data", o, ev_data);
    o = ev->add_option("--out", ev_out, "Output directory");
    ev_reg.bind("out", o, ev_out);
    ev_schema.add(ev, ev_reg, true);
    CLI::Option* ev_task_opt = ev->get_option("--task");

    // explain
    auto* ex = app.add_subcommand("explain", "Write the interpretability report");
    ConfigRegistry ex_reg;
    std::string ex_config, ex_model, ex_data, ex_out = ".";
    bool ex_plots = false;
    SchemaFlags ex_schema;
    ex->add_option("--config", ex_config, "JSON config file");
    o = ex->add_option("--model", ex_model, "Model JSON path");
    ex_reg.bind("model", o, ex_model);
    o = ex->add_option("--data", ex_data, "Training CSV path (projection ranges)");
    ex_reg.bind("data", o, ex_data);
    o = ex->add_option("--out", ex_out, "Output directory");
    ex_reg.bind("out", o, ex_out);
    f = ex->add_flag("--plots", ex_plots, "Write per-component SVG plots");
    ex_reg.bind("plots", f, ex_plots);
    ex_schema.add(ex, ex_reg, false);

    // benchmark
    auto* bm = app.add_subcommand("benchmark", "Scenario repetition study");
    ConfigRegistry bm_reg;
    std::string bm_config, bm_out = ".";
    std::vector<std::string> bm_scenarios;
    std::vector<int> bm_sizes;
    int bm_reps = 10, bm_jobs = 1;
    std::uint64_t bm_seed = 0;
    bool bm_grid = false;
    HpFlags bm_hp;
    bm->add_option("--config", bm_config, "JSON config file");
    o = bm->add_option("--scenario", bm_scenarios, "Scenario ids (default all)");
    bm_reg.bind_list("scenario", o, bm_scenarios);
    o = bm->add_option("--n", bm_sizes, "Training pool sizes (default 1000 10000)");
    bm_reg.bind_list("n", o, bm_sizes);
    o = bm->add_option("--reps", bm_reps, "Repetitions per cell");
    bm_reg.bind("reps", o, bm_reps);
    o = bm->add_option("--seed", bm_seed, "Random seed");
    bm_reg.bind("seed", o, bm_seed);
    o = bm->add_option("--jobs", bm_jobs, "Concurrent cells");
    bm_reg.bind("jobs", o, bm_jobs);
    f = bm->add_flag("--grid-search", bm_grid, "Grid-search per cell");
    bm_reg.bind("grid-search", f, bm_grid);
    o = bm->add_option("--out", bm_out, "Output directory");
    bm_reg.bind("out", o, bm_out);
    bm_hp.add(bm, bm_reg);

    // fdcheck
    auto* fd = app.add_subcommand("fdcheck", "Finite-difference gradient check");
    ConfigRegistry fd_reg;
    std::string fd_config;
    std::uint64_t fd_seed = 0;
    double fd_eps = 1e-6;
    bool fd_corrupt = false;
    fd->add_option("--config", fd_config, "JSON config file");
    o = fd->add_option("--seed", fd_seed, "Random seed");
    fd_reg.bind("seed", o, fd_seed);
    o = fd->add_option("--eps", fd_eps, "Central-difference step");
    fd_reg.bind("eps", o, fd_eps);
    f = fd->add_flag("--corrupt-gradient", fd_corrupt,
                     "Negative control: perturb one analytic gradient");
    fd_reg.bind("corrupt-gradient", f, fd_corrupt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (app.got_subcommand(sim)) {
            if (!sim_config.empty()) sim_reg.apply_file(sim_config);
            if (sim_scenario.empty())
                throw ConfigError("simulate requires --scenario");
            return cmd_simulate(sim_scenario, sim_n, sim_seed, sim_out);
        }
        if (app.got_subcommand(tr)) {
            if (!tr_config.empty()) tr_reg.apply_file(tr_config);
            if (tr_data.empty()) throw ConfigError("train requires --data");
            return cmd_train(tr_data, tr_schema, tr_minmax, tr_hp, tr_grid,
                             tr_plots, tr_seed, tr_out);
        }
        if (app.got_subcommand(ev)) {
            if (!ev_config.empty()) ev_reg.apply_file(ev_config);
            if (ev_model.empty()) throw ConfigError("evaluate requires --model");
            if (ev_data.empty()) throw ConfigError("evaluate requires --data");
            return cmd_evaluate(ev_model, ev_data, ev_schema,
                                ev_task_opt->count() > 0, ev_out);
        }
        if (app.got_subcommand(ex)) {
            if (!ex_config.empty()) ex_reg.apply_file(ex_config);
            if (ex_model.empty()) throw ConfigError("explain requires --model");
            if (ex_data.empty()) throw ConfigError("explain requires --data");
            return cmd_explain(ex_model, ex_data, ex_schema, ex_plots, ex_out);
        }
        if (app.got_subcommand(bm)) {
            if (!bm_config.empty()) bm_reg.apply_file(bm_config);
            return cmd_benchmark(bm_scenarios, bm_sizes, bm_reps, bm_seed,
                                 bm_hp, bm_grid, bm_jobs, bm_out);
        }
        if (!fd_config.empty()) fd_reg.apply_file(fd_config);
        return cmd_fdcheck(fd_seed, fd_eps, fd_corrupt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
