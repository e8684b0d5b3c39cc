#include "xnn/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
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

Vector vec_from_json(const ojson& a, const char* what) {
    if (!a.is_array()) throw DataError(std::string("report json: ") + what + " must be an array");
    Vector v(static_cast<Eigen::Index>(a.size()));
    Eigen::Index i = 0;
    for (const auto& x : a) {
        if (!x.is_number()) throw DataError(std::string("report json: ") + what + " holds a non-number");
        v[i++] = x.get<double>();
    }
    return v;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

}  // namespace

ExplainReport make_report(const XnnModel& model, const Matrix& X_train) {
    if (X_train.cols() != model.p())
        throw ShapeError("make_report: X_train column count mismatch");
    XnnModel m = model;
    canonicalize_signs(m);
    const Vector ir = importance_ratios(m.beta);  // rejects all-zero beta

    std::vector<int> retained;
    for (Eigen::Index j = 0; j < m.beta.size(); ++j)
        if (m.beta[j] != 0.0) retained.push_back(static_cast<int>(j));
    std::stable_sort(retained.begin(), retained.end(),
                     [&](int a, int b) { return ir[a] > ir[b]; });
    double total = 0.0;
    for (int j : retained) total += ir[j];

    const Matrix Z = X_train * m.W;
    ExplainReport rep;
    rep.mu = m.mu;
    for (int j : retained) {
        ReportComponent c;
        c.index = j;
        c.ir = ir[j] / total;
        c.beta = m.beta[j];
        c.w = m.W.col(j);
        double lo = Z.col(j).minCoeff();
        double hi = Z.col(j).maxCoeff();
        if (hi - lo < 1e-12) {
            lo -= 0.5;
            hi += 0.5;
        }
        c.grid.resize(101);
        for (int i = 0; i <= 100; ++i)
            c.grid[i] = lo + (hi - lo) * static_cast<double>(i) / 100.0;
        c.values = normalize(subnet_eval(m.subnets[static_cast<std::size_t>(j)], c.grid),
                             m.norm[static_cast<std::size_t>(j)]);
        rep.components.push_back(std::move(c));
    }
    return rep;
}

std::string report_to_json(const ExplainReport& rep) {
    ojson j;
    j["format"] = "xnn-report/1";
    j["mu"] = rep.mu;
    ojson comps = ojson::array();
    for (const auto& c : rep.components) {
        ojson cj;
        cj["subnetwork"] = c.index;
        cj["importance_ratio"] = c.ir;
        cj["beta"] = c.beta;
        cj["projection"] = vec_to_json(c.w);
        cj["grid"] = vec_to_json(c.grid);
        cj["values"] = vec_to_json(c.values);
        comps.push_back(std::move(cj));
    }
    j["components"] = std::move(comps);
    return j.dump(2) + "\n";
}

ExplainReport report_from_json(const std::string& text) {
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError(std::string("report json: parse failure: ") + e.what());
    }
    if (!j.is_object() || j.value("format", std::string{}) != "xnn-report/1")
        throw DataError("report json: missing or unsupported format (want xnn-report/1)");
    ExplainReport rep;
    try {
        rep.mu = j.at("mu").get<double>();
        for (const auto& cj : j.at("components")) {
            ReportComponent c;
            c.index = cj.at("subnetwork").get<int>();
            c.ir = cj.at("importance_ratio").get<double>();
            c.beta = cj.at("beta").get<double>();
            c.w = vec_from_json(cj.at("projection"), "projection");
            c.grid = vec_from_json(cj.at("grid"), "grid");
            c.values = vec_from_json(cj.at("values"), "values");
            if (c.grid.size() != c.values.size())
                throw DataError("report json: grid/values length mismatch");
            rep.components.push_back(std::move(c));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("report json: malformed document: ") + e.what());
    }
    return rep;
}

void save_report(const std::string& path, const ExplainReport& rep) {
    std::ofstream out(path);
    if (!out) throw DataError("save_report: cannot write '" + path + "'");
    out << report_to_json(rep);
    if (!out) throw DataError("save_report: write to '" + path + "' failed");
}

ExplainReport load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("load_report: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return report_from_json(buf.str());
}

std::vector<std::string> write_report_svgs(const ExplainReport& rep,
                                           const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> paths;
    for (std::size_t rank = 0; rank < rep.components.size(); ++rank) {
        const ReportComponent& c = rep.components[rank];
        const std::string path =
            dir + "/component" + std::to_string(rank + 1) + ".svg";
        std::ofstream out(path);
        if (!out) throw DataError("write_report_svgs: cannot write '" + path + "'");

        // Left panel: ridge curve. Right panel: projection-index bars.
        const double x0 = 60, x1 = 360, y0 = 250, y1 = 50;
        double vlo = c.values.minCoeff(), vhi = c.values.maxCoeff();
        if (vhi - vlo < 1e-12) {
            vlo -= 0.5;
            vhi += 0.5;
        }
        const double glo = c.grid[0], ghi = c.grid[c.grid.size() - 1];

        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 760 300\" "
               "font-family=\"sans-serif\">\n";
        out << "<rect width=\"760\" height=\"300\" fill=\"white\"/>\n";
        out << "<text x=\"380\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">"
            << "Component " << rank + 1 << " (IR " << fmt(100.0 * c.ir)
            << "%)</text>\n";

        out << "<polyline fill=\"none\" stroke=\"#2266aa\" stroke-width=\"1.5\" points=\"";
        for (Eigen::Index i = 0; i < c.grid.size(); ++i) {
            const double px = x0 + (x1 - x0) * (c.grid[i] - glo) / (ghi - glo);
            const double py = y0 + (y1 - y0) * (c.values[i] - vlo) / (vhi - vlo);
            out << fmt(px) << ',' << fmt(py) << ' ';
        }
        out << "\"/>\n";
        out << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x1
            << "\" y2=\"" << y0 << "\" stroke=\"#333\"/>\n";
        out << "<line x1=\"" << x0 << "\" y1=\"" << y0 << "\" x2=\"" << x0
            << "\" y2=\"" << y1 << "\" stroke=\"#333\"/>\n";
        out << "<text x=\"" << x0 << "\" y=\"268\" font-size=\"10\" text-anchor=\"middle\">"
            << fmt(glo) << "</text>\n";
        out << "<text x=\"" << x1 << "\" y=\"268\" font-size=\"10\" text-anchor=\"middle\">"
            << fmt(ghi) << "</text>\n";
        out << "<text x=\"" << x0 - 8 << "\" y=\"" << y0 + 4
            << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(vlo) << "</text>\n";
        out << "<text x=\"" << x0 - 8 << "\" y=\"" << y1 + 4
            << "\" font-size=\"10\" text-anchor=\"end\">" << fmt(vhi) << "</text>\n";

        const auto p = static_cast<int>(c.w.size());
        const double bx0 = 430, bx1 = 730, bmid = 150, bspan = 95;
        const double slot = (bx1 - bx0) / std::max(1, p);
        const double wmax = std::max(1e-12, c.w.cwiseAbs().maxCoeff());
        out << "<line x1=\"" << bx0 << "\" y1=\"" << bmid << "\" x2=\"" << bx1
            << "\" y2=\"" << bmid << "\" stroke=\"#333\"/>\n";
        for (int i = 0; i < p; ++i) {
            const double h = bspan * c.w[i] / wmax;
            const double bx = bx0 + slot * i + 0.15 * slot;
            const double by = h >= 0.0 ? bmid - h : bmid;
            out << "<rect x=\"" << fmt(bx) << "\" y=\"" << fmt(by) << "\" width=\""
                << fmt(0.7 * slot) << "\" height=\"" << fmt(std::abs(h))
                << "\" fill=\"" << (c.w[i] >= 0.0 ? "#4477aa" : "#aa5544")
                << "\"/>\n";
            if (p <= 20)
                out << "<text x=\"" << fmt(bx0 + slot * (i + 0.5)) << "\" y=\"270\" "
                       "font-size=\"9\" text-anchor=\"middle\">x"
                    << i + 1 << "</text>\n";
        }
        out << "</svg>\n";
        if (!out) throw DataError("write_report_svgs: write to '" + path + "' failed");
        paths.push_back(path);
    }
    return paths;
}

}  // namespace xnn
