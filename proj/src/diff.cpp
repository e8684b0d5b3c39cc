#include "xnn/diff.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <utility>

#include "xnn/errors.hpp"
#include "xnn/rng.hpp"

namespace xnn {

namespace {

// Full forward record of the jet recursion for one subnetwork.
// V[l], D1[l], D2[l] are the jets entering layer l (V[L] is the output jet);
// P*, the pre-activation jets of layer l. All are n x width.
struct Trace {
    std::vector<Matrix> V, D1, D2;
    std::vector<Matrix> P, P1, P2;
};

Trace jet_forward(const Subnetwork& s, const Vector& z) {
    const std::size_t L = s.layers.size();
    const Eigen::Index n = z.size();
    Trace tr;
    tr.V.resize(L + 1);
    tr.D1.resize(L + 1);
    tr.D2.resize(L + 1);
    tr.P.resize(L);
    tr.P1.resize(L);
    tr.P2.resize(L);
    tr.V[0] = z;
    tr.D1[0] = Matrix::Ones(n, 1);
    tr.D2[0] = Matrix::Zero(n, 1);
    for (std::size_t l = 0; l < L; ++l) {
        const Matrix& A = s.layers[l].weights;
        tr.P[l].noalias() = tr.V[l] * A.transpose();
        tr.P[l].rowwise() += s.layers[l].biases.transpose();
        tr.P1[l].noalias() = tr.D1[l] * A.transpose();
        tr.P2[l].noalias() = tr.D2[l] * A.transpose();
        if (l + 1 < L && s.activation == ActivationKind::Tanh) {
            const Eigen::ArrayXXd t = tr.P[l].array().tanh();
            const Eigen::ArrayXXd s2 = 1.0 - t.square();  // sech^2
            const Eigen::ArrayXXd q = tr.P1[l].array();
            tr.V[l + 1] = t.matrix();
            tr.D1[l + 1] = (s2 * q).matrix();
            tr.D2[l + 1] = (s2 * tr.P2[l].array() - 2.0 * t * s2 * q.square()).matrix();
        } else {
            tr.V[l + 1] = tr.P[l];
            tr.D1[l + 1] = tr.P1[l];
            tr.D2[l + 1] = tr.P2[l];
        }
    }
    return tr;
}

// Reverse accumulation over the jet recursion. Cotangents arrive on the output
// jet channels; parameter gradients land in g, the input-value cotangent in
// zbar. The d1/d2 input channels are constants (1, 0) and their cotangents are
// discarded.
void jet_backward(const Subnetwork& s, const Trace& tr, const Vector& vbar,
                  const Vector& d1bar, const Vector& d2bar,
                  std::vector<LayerGrads>& g, Vector& zbar) {
    const std::size_t L = s.layers.size();
    g.resize(L);
    Matrix Vb = vbar, D1b = d1bar, D2b = d2bar;
    for (std::size_t l = L; l-- > 0;) {
        Matrix Pb, P1b, P2b;
        if (l + 1 < L && s.activation == ActivationKind::Tanh) {
            const Eigen::ArrayXXd t = tr.V[l + 1].array();  // tanh(P) cached by forward
            const Eigen::ArrayXXd s2 = 1.0 - t.square();
            const Eigen::ArrayXXd q = tr.P1[l].array();
            const Eigen::ArrayXXd r = tr.P2[l].array();
            const Eigen::ArrayXXd ts = t * s2;
            // v = tanh p, d1 = s2 q, d2 = s2 r - 2 t s2 q^2; differentiate each
            // w.r.t. (p, q, r) and contract with the incoming cotangents.
            Pb = (Vb.array() * s2 - 2.0 * D1b.array() * ts * q
                  + D2b.array() * (-2.0 * ts * r + (4.0 * t.square() - 2.0 * s2) * s2 * q.square()))
                     .matrix();
            P1b = (D1b.array() * s2 - 4.0 * D2b.array() * ts * q).matrix();
            P2b = (D2b.array() * s2).matrix();
        } else {
            Pb = std::move(Vb);
            P1b = std::move(D1b);
            P2b = std::move(D2b);
        }
        const Matrix& A = s.layers[l].weights;
        g[l].weights.noalias() = Pb.transpose() * tr.V[l];
        g[l].weights.noalias() += P1b.transpose() * tr.D1[l];
        g[l].weights.noalias() += P2b.transpose() * tr.D2[l];
        g[l].biases = Pb.colwise().sum().transpose();
        Vb.noalias() = Pb * A;
        D1b.noalias() = P1b * A;
        D2b.noalias() = P2b * A;
    }
    zbar = Vb.col(0);
}

double link_loss(LinkKind link, const Vector& eta, const Vector& y) {
    const double n = static_cast<double>(eta.size());
    if (link == LinkKind::Identity) return (eta - y).squaredNorm() / n;
    const auto e = eta.array();
    // max(eta,0) - eta*y + log(1 + exp(-|eta|)): overflow-free cross-entropy
    return (e.max(0.0) - e * y.array() + (-e.abs()).exp().log1p()).sum() / n;
}

Vector link_delta(LinkKind link, const Vector& eta, const Vector& y) {
    const double n = static_cast<double>(eta.size());
    if (link == LinkKind::Identity) return (2.0 / n) * (eta - y);
    return (sigmoid(eta) - y) / n;
}

double assemble_loss(double fit, double l1_w, double l1_beta, double rough,
                     const Hyperparams& hp) {
    const double loss =
        fit + hp.lambda1 * l1_w + hp.lambda2 * l1_beta + hp.lambda3 * rough;
    if (!std::isfinite(loss)) {
        std::ostringstream os;
        os << "non-finite loss: data_fit=" << fit << " l1_W=" << hp.lambda1 * l1_w
           << " l1_beta=" << hp.lambda2 * l1_beta
           << " roughness=" << hp.lambda3 * rough;
        throw NumericError(os.str());
    }
    return loss;
}

void check_batch(const XnnModel& model, const Matrix& Xb, const Vector& yb,
                 std::size_t n_stats) {
    if (Xb.rows() == 0) throw ShapeError("loss_and_grads: empty batch");
    if (Xb.cols() != model.p())
        throw ShapeError("loss_and_grads: batch has " + std::to_string(Xb.cols()) +
                         " columns, model expects " + std::to_string(model.p()));
    if (yb.size() != Xb.rows())
        throw ShapeError("loss_and_grads: X/y row mismatch");
    if (n_stats != model.subnets.size())
        throw ShapeError("loss_and_grads: wrong number of normalization states");
}

}  // namespace

Jet2 subnet_jet(const Subnetwork& s, const Vector& z) {
    const Trace tr = jet_forward(s, z);
    const std::size_t L = s.layers.size();
    return {tr.V[L].col(0), tr.D1[L].col(0), tr.D2[L].col(0)};
}

double roughness(const Jet2& j, const NormState& ns) {
    const Eigen::Index n = j.d2.size();
    if (n == 0) return 0.0;
    return j.d2.squaredNorm() / (static_cast<double>(n) * ns.std * ns.std);
}

std::vector<NormState> batch_norm_states(const XnnModel& model, const Matrix& X) {
    const Matrix H = raw_subnet_outputs(model, X);
    const double n = static_cast<double>(H.rows());
    std::vector<NormState> out(model.subnets.size());
    for (Eigen::Index j = 0; j < H.cols(); ++j) {
        NormState ns = static_cast<std::size_t>(j) < model.norm.size()
                           ? model.norm[j]
                           : NormState{};
        ns.mean = H.col(j).mean();
        const double var = (H.col(j).array() - ns.mean).square().sum() / n;
        ns.std = std::max(std::sqrt(var), ns.epsilon);
        out[j] = ns;
    }
    return out;
}

std::pair<double, Grads> loss_and_grads(const XnnModel& model, const Matrix& Xb,
                                        const Vector& yb, const Hyperparams& hp,
                                        const std::vector<NormState>& stats,
                                        StatsGrad mode) {
    check_batch(model, Xb, yb, stats.size());
    const Eigen::Index n = Xb.rows();
    const int k = model.k();

    const Matrix Z = Xb * model.W;
    std::vector<Trace> traces(k);
    Matrix Ht(n, k);  // normalized subnetwork outputs
    Matrix D2(n, k);  // raw second derivatives w.r.t. the projections
    for (int j = 0; j < k; ++j) {
        traces[j] = jet_forward(model.subnets[j], Z.col(j));
        const std::size_t L = model.subnets[j].layers.size();
        Ht.col(j) = (traces[j].V[L].col(0).array() - stats[j].mean) / stats[j].std;
        D2.col(j) = traces[j].D2[L].col(0);
    }

    const Vector eta = (model.mu + (Ht * model.beta).array()).matrix();
    const double fit = link_loss(model.link, eta, yb);
    double rough = 0.0;
    for (int j = 0; j < k; ++j)
        rough += D2.col(j).squaredNorm() /
                 (static_cast<double>(n) * stats[j].std * stats[j].std);
    const double loss = assemble_loss(fit, model.W.array().abs().sum(),
                                      model.beta.array().abs().sum(), rough, hp);

    Grads g;
    const Vector delta = link_delta(model.link, eta, yb);
    g.g_mu = delta.sum();
    g.g_beta.noalias() = Ht.transpose() * delta;
    g.g_beta += hp.lambda2 * model.beta.array().sign().matrix();
    g.g_W.resize(model.p(), k);
    g.g_layers.resize(k);
    const Vector d1bar = Vector::Zero(n);
    for (int j = 0; j < k; ++j) {
        const double sd = stats[j].std;
        Vector vbar;
        if (mode == StatsGrad::ThroughBatch) {
            // Standard batch-norm backward: with htilde = (h - m(h)) / s(h),
            // the cotangent vt on htilde pulls back to
            // (vt - mean(vt) - htilde * mean(vt . htilde)) / s.
            const Vector vt = delta * model.beta[j];
            const double mv = vt.mean();
            const double mvh = vt.dot(Ht.col(j)) / static_cast<double>(n);
            vbar = ((vt.array() - mv) - Ht.col(j).array() * mvh).matrix() / sd;
        } else {
            vbar = delta * (model.beta[j] / sd);
        }
        const Vector d2bar =
            (2.0 * hp.lambda3 / (static_cast<double>(n) * sd * sd)) * D2.col(j);
        Vector zbar;
        jet_backward(model.subnets[j], traces[j], vbar, d1bar, d2bar,
                     g.g_layers[j], zbar);
        g.g_W.col(j).noalias() = Xb.transpose() * zbar;
    }
    g.g_W += hp.lambda1 * model.W.array().sign().matrix();
    return {loss, std::move(g)};
}

std::pair<double, Grads> loss_and_grads(const XnnModel& model, const Matrix& Xb,
                                        const Vector& yb, const Hyperparams& hp,
                                        StatsGrad mode) {
    return loss_and_grads(model, Xb, yb, hp, batch_norm_states(model, Xb), mode);
}

double penalized_loss(const XnnModel& model, const Matrix& Xb, const Vector& yb,
                      const Hyperparams& hp, const std::vector<NormState>& stats) {
    check_batch(model, Xb, yb, stats.size());
    const Eigen::Index n = Xb.rows();
    const int k = model.k();
    const Matrix Z = Xb * model.W;
    Matrix Ht(n, k);
    double rough = 0.0;
    for (int j = 0; j < k; ++j) {
        const Jet2 jet = subnet_jet(model.subnets[j], Z.col(j));
        Ht.col(j) = (jet.v.array() - stats[j].mean) / stats[j].std;
        rough += roughness(jet, stats[j]);
    }
    const Vector eta = (model.mu + (Ht * model.beta).array()).matrix();
    return assemble_loss(link_loss(model.link, eta, yb),
                         model.W.array().abs().sum(),
                         model.beta.array().abs().sum(), rough, hp);
}

double data_fit_loss(const XnnModel& model, const Matrix& X, const Vector& y) {
    if (y.size() != X.rows()) throw ShapeError("data_fit_loss: X/y row mismatch");
    return link_loss(model.link, forward_eta(model, X), y);
}

std::size_t param_count(const XnnModel& model, bool include_W) {
    std::size_t c = 1 + static_cast<std::size_t>(model.beta.size());
    for (const auto& s : model.subnets)
        for (const auto& l : s.layers)
            c += static_cast<std::size_t>(l.weights.size() + l.biases.size());
    if (include_W) c += static_cast<std::size_t>(model.W.size());
    return c;
}

Vector flatten_params(const XnnModel& model, bool include_W) {
    Vector th(param_count(model, include_W));
    Eigen::Index i = 0;
    th[i++] = model.mu;
    for (Eigen::Index j = 0; j < model.beta.size(); ++j) th[i++] = model.beta[j];
    for (const auto& s : model.subnets)
        for (const auto& l : s.layers) {
            for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
                for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
                    th[i++] = l.weights(r, c);
            for (Eigen::Index r = 0; r < l.biases.size(); ++r) th[i++] = l.biases[r];
        }
    if (include_W)
        for (Eigen::Index r = 0; r < model.W.rows(); ++r)
            for (Eigen::Index c = 0; c < model.W.cols(); ++c) th[i++] = model.W(r, c);
    return th;
}

void unflatten_params(XnnModel& model, const Vector& theta, bool include_W) {
    if (static_cast<std::size_t>(theta.size()) != param_count(model, include_W))
        throw ShapeError("unflatten_params: length mismatch");
    Eigen::Index i = 0;
    model.mu = theta[i++];
    for (Eigen::Index j = 0; j < model.beta.size(); ++j) model.beta[j] = theta[i++];
    for (auto& s : model.subnets)
        for (auto& l : s.layers) {
            for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
                for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
                    l.weights(r, c) = theta[i++];
            for (Eigen::Index r = 0; r < l.biases.size(); ++r) l.biases[r] = theta[i++];
        }
    if (include_W)
        for (Eigen::Index r = 0; r < model.W.rows(); ++r)
            for (Eigen::Index c = 0; c < model.W.cols(); ++c) model.W(r, c) = theta[i++];
}

Vector flatten_grads(const Grads& g, bool include_W) {
    std::size_t count = 1 + static_cast<std::size_t>(g.g_beta.size());
    for (const auto& s : g.g_layers)
        for (const auto& l : s)
            count += static_cast<std::size_t>(l.weights.size() + l.biases.size());
    if (include_W) count += static_cast<std::size_t>(g.g_W.size());
    Vector v(count);
    Eigen::Index i = 0;
    v[i++] = g.g_mu;
    for (Eigen::Index j = 0; j < g.g_beta.size(); ++j) v[i++] = g.g_beta[j];
    for (const auto& s : g.g_layers)
        for (const auto& l : s) {
            for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
                for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
                    v[i++] = l.weights(r, c);
            for (Eigen::Index r = 0; r < l.biases.size(); ++r) v[i++] = l.biases[r];
        }
    if (include_W)
        for (Eigen::Index r = 0; r < g.g_W.rows(); ++r)
            for (Eigen::Index c = 0; c < g.g_W.cols(); ++c) v[i++] = g.g_W(r, c);
    return v;
}

double fd_check(const XnnModel& model, const Matrix& Xb, const Vector& yb,
                const Hyperparams& hp, double eps, double corrupt) {
    if (eps <= 0.0) throw ConfigError("fd_check: eps must be positive");
    Hyperparams smooth = hp;
    smooth.lambda1 = 0.0;  // l1 terms are non-smooth; excluded from the check
    smooth.lambda2 = 0.0;
    const std::vector<NormState> stats = batch_norm_states(model, Xb);

    Vector analytic = flatten_grads(
        loss_and_grads(model, Xb, yb, smooth, stats).second, true);
    if (corrupt != 0.0) analytic[0] += corrupt;

    const Vector theta = flatten_params(model, true);
    XnnModel probe = model;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        Vector t = theta;
        t[i] = theta[i] + eps;
        unflatten_params(probe, t, true);
        const double fp = penalized_loss(probe, Xb, yb, smooth, stats);
        t[i] = theta[i] - eps;
        unflatten_params(probe, t, true);
        const double fm = penalized_loss(probe, Xb, yb, smooth, stats);
        const double fd = (fp - fm) / (2.0 * eps);
        const double denom =
            std::max({std::abs(analytic[i]), std::abs(fd), 1e-8});
        worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
    }
    return worst;
}

std::vector<FdCase> fd_battery(std::uint64_t seed, double eps, double corrupt) {
    struct Cfg {
        int p, k, n;
        std::vector<int> hidden;
        ActivationKind act;
        LinkKind link;
        double l3;
        bool gam;
    };
    using AK = ActivationKind;
    using LK = LinkKind;
    const std::vector<Cfg> cfgs = {
        {5, 2, 8, {4, 3}, AK::Tanh, LK::Identity, 0.0, false},
        {5, 2, 8, {4, 3}, AK::Tanh, LK::Identity, 1e-6, false},
        {5, 2, 8, {4, 3}, AK::Tanh, LK::Identity, 1e-3, false},
        {5, 2, 8, {4, 3}, AK::Tanh, LK::Identity, 1e-1, false},
        {10, 5, 16, {10, 6}, AK::Tanh, LK::Identity, 1e-6, false},
        {10, 5, 16, {10, 6}, AK::Tanh, LK::Identity, 1e-2, false},
        {10, 3, 32, {10, 6}, AK::Tanh, LK::Logit, 0.0, false},
        {10, 3, 32, {10, 6}, AK::Tanh, LK::Logit, 1e-3, false},
        {3, 1, 8, {3}, AK::Tanh, LK::Identity, 1e-3, false},
        {3, 1, 8, {3}, AK::Tanh, LK::Logit, 1e-6, false},
        {4, 4, 16, {5}, AK::Tanh, LK::Identity, 1e-4, false},
        {4, 2, 16, {4, 3}, AK::Linear, LK::Identity, 1e-3, false},
        {6, 3, 16, {4, 3}, AK::Tanh, LK::Identity, 1e-6, true},
        {6, 3, 16, {4, 3}, AK::Tanh, LK::Logit, 1e-6, true},
        {8, 4, 24, {6, 4}, AK::Tanh, LK::Identity, 1e-5, false},
        {8, 4, 24, {6, 4}, AK::Tanh, LK::Logit, 1e-5, false},
        {2, 2, 8, {10, 6}, AK::Tanh, LK::Identity, 1e-6, false},
        {7, 2, 12, {8}, AK::Tanh, LK::Identity, 1e-2, false},
        {7, 2, 12, {8}, AK::Tanh, LK::Logit, 1e-2, false},
        {10, 10, 16, {4}, AK::Tanh, LK::Identity, 1e-6, false},
        {5, 5, 8, {4, 3}, AK::Tanh, LK::Identity, 1e-1, false},
        {5, 3, 16, {4, 4}, AK::Tanh, LK::Logit, 1e-1, false},
        {9, 4, 16, {10, 6}, AK::Tanh, LK::Identity, 0.0, false},
        {9, 4, 16, {10, 6}, AK::Tanh, LK::Logit, 0.0, false},
    };

    const Rng root(seed);
    std::vector<FdCase> out;
    out.reserve(cfgs.size());
    for (std::size_t idx = 0; idx < cfgs.size(); ++idx) {
        const Cfg& c = cfgs[idx];
        Hyperparams hp;
        hp.k = c.k;
        hp.subnet_arch.hidden = c.hidden;
        hp.subnet_arch.activation = c.act;
        hp.lambda1 = 0.0;
        hp.lambda2 = 0.0;
        hp.lambda3 = c.l3;
        hp.gam_mode = c.gam;

        const auto draw = [&](int attempt, XnnModel& model, Matrix& X, Vector& y) {
            std::string tag = "fd" + std::to_string(idx);
            if (attempt > 0) tag += "." + std::to_string(attempt);
            Rng rng = root.fork(tag);
            model = init_model(c.p, hp, rng);
            model.link = c.link;
            model.mu = rng.normal(0.0, 0.5);
            X.resize(c.n, c.p);
            for (Eigen::Index r = 0; r < X.rows(); ++r)
                for (Eigen::Index cc = 0; cc < X.cols(); ++cc)
                    X(r, cc) = rng.uniform(-1.0, 1.0);
            y.resize(c.n);
            for (Eigen::Index r = 0; r < y.size(); ++r)
                y[r] = c.link == LK::Identity
                           ? rng.normal()
                           : static_cast<double>(rng.uniform_index(2));
        };

        // Central differences carry roundoff noise of order ulp(f)/eps, so a
        // coordinate whose true gradient is tiny fails the relative test for
        // no analytic reason. Redraw the instance (deterministically, bounded
        // attempts) until every nonzero gradient coordinate clears a floor
        // that keeps the noise-to-signal ratio well under the tolerance, and
        // otherwise keep the best draw seen.
        Hyperparams smooth = hp;
        XnnModel model, best_model;
        Matrix X, best_X;
        Vector y, best_y;
        double best_floor = -1.0;
        for (int attempt = 0; attempt < 8; ++attempt) {
            draw(attempt, model, X, y);
            const Vector g = flatten_grads(
                loss_and_grads(model, X, y, smooth, batch_norm_states(model, X))
                    .second,
                true);
            double floor = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < g.size(); ++i) {
                const double a = std::abs(g[i]);
                if (a > 1e-12) floor = std::min(floor, a);
            }
            if (floor > best_floor) {
                best_floor = floor;
                best_model = model;
                best_X = X;
                best_y = y;
            }
            if (best_floor >= 1e-4) break;
        }
        model = std::move(best_model);
        X = std::move(best_X);
        y = std::move(best_y);

        std::ostringstream name;
        name << "fd" << idx << " p=" << c.p << " k=" << c.k << " n=" << c.n
             << " arch=";
        for (std::size_t h = 0; h < c.hidden.size(); ++h)
            name << (h ? "x" : "") << c.hidden[h];
        name << (c.act == AK::Tanh ? " tanh" : " linear")
             << (c.link == LK::Identity ? " identity" : " logit")
             << " lambda3=" << c.l3 << (c.gam ? " gam" : "");
        out.push_back({name.str(), fd_check(model, X, y, hp, eps, corrupt)});
    }
    return out;
}

}  // namespace xnn
