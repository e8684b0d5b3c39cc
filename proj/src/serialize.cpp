#include "xnn/serialize.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "xnn/errors.hpp"

namespace xnn {

namespace {

using ojson = nlohmann::ordered_json;

ojson vec_to_json(const Vector& v) {
    ojson a = ojson::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

ojson mat_to_json(const Matrix& m) {
    ojson rows = ojson::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        ojson row = ojson::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Vector vec_from_json(const ojson& a, const char* what) {
    if (!a.is_array()) throw DataError(std::string("model json: ") + what + " must be an array");
    Vector v(static_cast<Eigen::Index>(a.size()));
    Eigen::Index i = 0;
    for (const auto& x : a) {
        if (!x.is_number()) throw DataError(std::string("model json: ") + what + " holds a non-number");
        v[i++] = x.get<double>();
    }
    return v;
}

Matrix mat_from_json(const ojson& a, const char* what) {
    if (!a.is_array() || a.empty())
        throw DataError(std::string("model json: ") + what + " must be a nonempty array of rows");
    const auto rows = static_cast<Eigen::Index>(a.size());
    Eigen::Index cols = -1;
    Matrix m;
    Eigen::Index r = 0;
    for (const auto& row : a) {
        const Vector v = vec_from_json(row, what);
        if (cols < 0) {
            cols = v.size();
            m.resize(rows, cols);
        } else if (v.size() != cols) {
            throw DataError(std::string("model json: ") + what + " rows are ragged");
        }
        m.row(r++) = v.transpose();
    }
    return m;
}

std::string activation_name(ActivationKind a) {
    return a == ActivationKind::Tanh ? "tanh" : "linear";
}

ActivationKind parse_activation(const std::string& s) {
    if (s == "tanh") return ActivationKind::Tanh;
    if (s == "linear") return ActivationKind::Linear;
    throw DataError("model json: unknown activation '" + s + "'");
}

}  // namespace

std::string model_to_json(const XnnModel& model, const Hyperparams& hp,
                          const std::optional<MinMaxScaling>& scaling) {
    ojson j;
    j["format"] = "xnn-model/1";
    j["link"] = model.link == LinkKind::Logit ? "logit" : "identity";
    j["mu"] = model.mu;
    j["beta"] = vec_to_json(model.beta);
    j["W"] = mat_to_json(model.W);
    ojson subnets = ojson::array();
    for (const auto& s : model.subnets) {
        ojson sj;
        sj["activation"] = activation_name(s.activation);
        ojson layers = ojson::array();
        for (const auto& l : s.layers) {
            ojson lj;
            lj["weights"] = mat_to_json(l.weights);
            lj["biases"] = vec_to_json(l.biases);
            layers.push_back(std::move(lj));
        }
        sj["layers"] = std::move(layers);
        subnets.push_back(std::move(sj));
    }
    j["subnets"] = std::move(subnets);
    ojson norm = ojson::array();
    for (const auto& ns : model.norm) {
        ojson nj;
        nj["mean"] = ns.mean;
        nj["std"] = ns.std;
        nj["epsilon"] = ns.epsilon;
        norm.push_back(std::move(nj));
    }
    j["norm"] = std::move(norm);

    ojson h;
    h["k"] = hp.k;
    h["lambda1"] = hp.lambda1;
    h["lambda2"] = hp.lambda2;
    h["lambda3"] = hp.lambda3;
    h["eta"] = hp.eta;
    h["tau"] = hp.tau;
    h["batch_size"] = hp.batch_size;
    h["max_epochs"] = hp.max_epochs;
    h["patience"] = hp.patience;
    h["min_delta"] = hp.min_delta;
    h["hidden"] = hp.subnet_arch.hidden;
    h["activation"] = activation_name(hp.subnet_arch.activation);
    h["prune_threshold"] = hp.prune_threshold;
    h["finetune_epochs"] = hp.finetune_epochs;
    h["seed"] = hp.seed;
    h["gam_mode"] = hp.gam_mode;
    h["disable_orthogonality"] = hp.disable_orthogonality;
    h["reorth_interval"] = hp.reorth_interval;
    h["norm_epsilon"] = hp.norm_epsilon;
    j["hyperparams"] = std::move(h);

    if (scaling) {
        ojson sc;
        sc["columns"] = scaling->columns;
        sc["lo"] = scaling->lo;
        sc["hi"] = scaling->hi;
        j["preprocess"] = ojson{{"minmax", std::move(sc)}};
    }
    return j.dump(2) + "\n";
}

LoadedModel model_from_json(const std::string& text) {
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("model json: parse failure: ") + e.what());
    }
    if (!j.is_object() || j.value("format", std::string{}) != "xnn-model/1")
        throw DataError("model json: missing or unsupported format (want xnn-model/1)");

    LoadedModel out;
    try {
        const std::string link = j.at("link").get<std::string>();
        if (link == "logit")
            out.model.link = LinkKind::Logit;
        else if (link == "identity")
            out.model.link = LinkKind::Identity;
        else
            throw DataError("model json: unknown link '" + link + "'");
        out.model.mu = j.at("mu").get<double>();
        out.model.beta = vec_from_json(j.at("beta"), "beta");
        out.model.W = mat_from_json(j.at("W"), "W");
        for (const auto& sj : j.at("subnets")) {
            Subnetwork s;
            s.activation = parse_activation(sj.at("activation").get<std::string>());
            for (const auto& lj : sj.at("layers")) {
                DenseLayer l;
                l.weights = mat_from_json(lj.at("weights"), "layer weights");
                l.biases = vec_from_json(lj.at("biases"), "layer biases");
                if (l.biases.size() != l.weights.rows())
                    throw DataError("model json: bias/weight row mismatch");
                s.layers.push_back(std::move(l));
            }
            out.model.subnets.push_back(std::move(s));
        }
        for (const auto& nj : j.at("norm")) {
            NormState ns;
            ns.mean = nj.at("mean").get<double>();
            ns.std = nj.at("std").get<double>();
            ns.epsilon = nj.at("epsilon").get<double>();
            out.model.norm.push_back(ns);
        }

        const ojson& h = j.at("hyperparams");
        out.hp.k = h.at("k").get<int>();
        out.hp.lambda1 = h.at("lambda1").get<double>();
        out.hp.lambda2 = h.at("lambda2").get<double>();
        out.hp.lambda3 = h.at("lambda3").get<double>();
        out.hp.eta = h.at("eta").get<double>();
        out.hp.tau = h.at("tau").get<double>();
        out.hp.batch_size = h.at("batch_size").get<int>();
        out.hp.max_epochs = h.at("max_epochs").get<int>();
        out.hp.patience = h.at("patience").get<int>();
        out.hp.min_delta = h.at("min_delta").get<double>();
        out.hp.subnet_arch.hidden = h.at("hidden").get<std::vector<int>>();
        out.hp.subnet_arch.activation =
            parse_activation(h.at("activation").get<std::string>());
        out.hp.prune_threshold = h.at("prune_threshold").get<double>();
        out.hp.finetune_epochs = h.at("finetune_epochs").get<int>();
        out.hp.seed = h.at("seed").get<std::uint64_t>();
        out.hp.gam_mode = h.at("gam_mode").get<bool>();
        out.hp.disable_orthogonality = h.at("disable_orthogonality").get<bool>();
        out.hp.reorth_interval = h.at("reorth_interval").get<int>();
        out.hp.norm_epsilon = h.at("norm_epsilon").get<double>();

        if (j.contains("preprocess")) {
            const ojson& sc = j.at("preprocess").at("minmax");
            MinMaxScaling mm;
            mm.columns = sc.at("columns").get<std::vector<int>>();
            mm.lo = sc.at("lo").get<std::vector<double>>();
            mm.hi = sc.at("hi").get<std::vector<double>>();
            out.scaling = std::move(mm);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("model json: malformed document: ") + e.what());
    }

    const auto k = static_cast<std::size_t>(out.model.W.cols());
    if (static_cast<std::size_t>(out.model.beta.size()) != k ||
        out.model.subnets.size() != k || out.model.norm.size() != k)
        throw DataError("model json: beta/W/subnets/norm sizes disagree");
    for (const auto& s : out.model.subnets) {
        if (s.layers.empty()) throw DataError("model json: subnetwork with no layers");
        if (s.layers.front().weights.cols() != 1 ||
            s.layers.back().weights.rows() != 1)
            throw DataError("model json: subnetworks must map scalar to scalar");
        for (std::size_t l = 1; l < s.layers.size(); ++l)
            if (s.layers[l].weights.cols() != s.layers[l - 1].weights.rows())
                throw DataError("model json: layer width chain mismatch");
    }
    return out;
}

void save_model(const std::string& path, const XnnModel& model,
                const Hyperparams& hp,
                const std::optional<MinMaxScaling>& scaling) {
    std::ofstream out(path);
    if (!out) throw DataError("save_model: cannot write '" + path + "'");
    out << model_to_json(model, hp, scaling);
    if (!out) throw DataError("save_model: write to '" + path + "' failed");
}

LoadedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_model: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return model_from_json(buf.str());
}

}  // namespace xnn
