#pragma once

#include <string>

#include "json.hpp"

#include "gestimate/gest.hpp"
#include "gestimate/panel.hpp"
#include "gestimate/sim.hpp"

namespace gestimate::cli {

using nlohmann::ordered_json;

// floats at 17 significant digits; NaN and infinities become null
std::string dump(const ordered_json& j);
std::string num(double x);  // CSV cell, empty for NaN

ordered_json vec_json(const Eigen::VectorXd& v);
ordered_json mat_json(const Eigen::MatrixXd& m);
ordered_json result_json(const EstimateResult& r, double level = 0.95);
ordered_json set_json(const ConfidenceSet& s);
ordered_json overlap_json(const OverlapReport& o);
ordered_json mc_json(const MCSummary& s);

std::string estimates_csv(const EstimateResult& r, double level = 0.95);
std::string set_csv(const ConfidenceSet& s, const std::vector<std::string>& names);
std::string mc_csv(const MCSummary& s);

void write_file(const std::string& path, const std::string& content);

}  // namespace gestimate::cli
