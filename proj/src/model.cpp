#include "xnn/model.hpp"

#include <cmath>
#include <cstdlib>

#include "xnn/errors.hpp"

namespace xnn {

namespace {

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double sd) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            m(i, j) = rng.normal(0.0, sd);
    return m;
}

}  // namespace

Subnetwork make_subnetwork(const SubnetArch& arch, Rng& rng) {
    Subnetwork s;
    s.activation = arch.activation;
    std::vector<int> widths;
    widths.push_back(1);
    for (int h : arch.hidden) {
        if (h < 1) throw ConfigError("subnetwork hidden width must be >= 1");
        widths.push_back(h);
    }
    widths.push_back(1);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const int fan_in = widths[l];
        const int fan_out = widths[l + 1];
        DenseLayer layer;
        const double sd = std::sqrt(2.0 / (fan_in + fan_out));
        layer.weights = gaussian_matrix(fan_out, fan_in, rng, sd);
        layer.biases = Vector::Zero(fan_out);
        s.layers.push_back(std::move(layer));
    }
    return s;
}

XnnModel init_model(int p, const Hyperparams& hp, Rng& rng) {
    if (p < 1) throw ConfigError("feature count must be >= 1");
    const int k = hp.resolved_k(p);
    if (k < 1) throw ConfigError("subnetwork count k must be >= 1");
    if (k > p) throw ConfigError("subnetwork count k must not exceed feature count p");

    XnnModel model;
    if (hp.gam_mode) {
        model.W = Matrix::Identity(p, k);
    } else {
        const Matrix G = gaussian_matrix(p, k, rng, 1.0);
        Eigen::HouseholderQR<Matrix> qr(G);
        Matrix Q = qr.householderQ() * Matrix::Identity(p, k);
        const Matrix R = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
        for (int j = 0; j < k; ++j)
            if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
        model.W = Q;
    }

    model.subnets.reserve(k);
    for (int j = 0; j < k; ++j) model.subnets.push_back(make_subnetwork(hp.subnet_arch, rng));

    const double beta_sd = std::sqrt(2.0 / (k + 1));
    model.beta = Vector(k);
    for (int j = 0; j < k; ++j) model.beta(j) = rng.normal(0.0, beta_sd);

    model.mu = 0.0;
    model.norm.assign(k, NormState{0.0, 1.0, hp.norm_epsilon});
    model.link = LinkKind::Identity;
    return model;
}

Matrix project(const XnnModel& model, const Matrix& X) {
    if (X.cols() != model.W.rows())
        throw ShapeError("project: X has " + std::to_string(X.cols()) +
                         " columns, model expects " + std::to_string(model.W.rows()));
    return X * model.W;
}

Vector subnet_eval(const Subnetwork& s, const Vector& z) {
    Matrix v = z;
    const std::size_t L = s.layers.size();
    for (std::size_t l = 0; l < L; ++l) {
        const DenseLayer& layer = s.layers[l];
        Matrix a = (v * layer.weights.transpose()).rowwise() + layer.biases.transpose();
        if (l + 1 < L && s.activation == ActivationKind::Tanh)
            v = a.array().tanh().matrix();
        else
            v = std::move(a);
    }
    return v.col(0);
}

Vector normalize(const Vector& h, const NormState& ns) {
    return (h.array() - ns.mean) / ns.std;
}

Matrix raw_subnet_outputs(const XnnModel& model, const Matrix& X) {
    const Matrix Z = project(model, X);
    Matrix H(X.rows(), model.k());
    for (int j = 0; j < model.k(); ++j) H.col(j) = subnet_eval(model.subnets[j], Z.col(j));
    return H;
}

Vector forward_eta(const XnnModel& model, const Matrix& X) {
    Matrix H = raw_subnet_outputs(model, X);
    for (int j = 0; j < model.k(); ++j) H.col(j) = normalize(H.col(j), model.norm[j]);
    return (H * model.beta).array() + model.mu;
}

Vector sigmoid(const Vector& eta) {
    return eta.unaryExpr([](double e) {
        return e >= 0.0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e));
    });
}

Vector forward(const XnnModel& model, const Matrix& X) {
    Vector eta = forward_eta(model, X);
    if (model.link == LinkKind::Logit) return sigmoid(eta);
    return eta;
}

Vector importance_ratios(const Vector& beta) {
    const double total = beta.array().abs().sum();
    if (total <= 0.0) throw DataError("importance_ratios: beta is all zero");
    return beta.array().abs() / total;
}

void canonicalize_signs(XnnModel& model) {
    for (int j = 0; j < model.k(); ++j) {
        Subnetwork& s = model.subnets[j];
        if (model.beta(j) < 0.0) {
            model.beta(j) = -model.beta(j);
            DenseLayer& out = s.layers.back();
            out.weights = -out.weights;
            out.biases = -out.biases;
            // The flipped raw output has flipped mean; keep normalization exact.
            model.norm[j].mean = -model.norm[j].mean;
        }
        Eigen::Index imax;
        model.W.col(j).cwiseAbs().maxCoeff(&imax);
        if (model.W(imax, j) < 0.0) {
            model.W.col(j) = -model.W.col(j);
            s.layers.front().weights = -s.layers.front().weights;
        }
    }
}

double orthogonality_residual(const Matrix& W) {
    const Eigen::Index k = W.cols();
    return (W.transpose() * W - Matrix::Identity(k, k)).norm();
}

}  // namespace xnn
