#pragma once

#include <string>
#include <vector>

#include "xnn/model.hpp"

namespace xnn {

struct ReportComponent {
    int index = 0;     // position of the subnetwork inside the model
    double ir = 0.0;   // importance ratio, renormalized over retained components
    double beta = 0.0; // sign-canonicalized, >= 0
    Vector w;          // sign-canonicalized projection index
    Vector grid;       // 101 strictly increasing projection values
    Vector values;     // normalized ridge function sampled on the grid
};

// Retained (beta != 0) components in descending importance order.
struct ExplainReport {
    double mu = 0.0;
    std::vector<ReportComponent> components;
};

// Grid spans the empirical [min, max] of each training projection; a
// degenerate range is widened by 0.5 on both sides.
ExplainReport make_report(const XnnModel& model, const Matrix& X_train);

// "xnn-report/1" document; serialize -> parse -> serialize is byte-identical.
std::string report_to_json(const ExplainReport& rep);
ExplainReport report_from_json(const std::string& text);

void save_report(const std::string& path, const ExplainReport& rep);
ExplainReport load_report(const std::string& path);

// One SVG per component (componentN.svg, N in report order): ridge curve on
// the left, projection-index bars on the right. Returns the paths written.
std::vector<std::string> write_report_svgs(const ExplainReport& rep,
                                           const std::string& dir);

}  // namespace xnn
