#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmest/descriptor.hpp"
#include "mmest/errors.hpp"
#include "mmest/operator_core.hpp"
#include "mmest/trajectory.hpp"

namespace mmest::io {

using json = nlohmann::ordered_json;

// ---- generic JSON helpers --------------------------------------------------

json matrix_to_json(const Eigen::MatrixXd& m);
json vector_to_json(const Eigen::VectorXd& v);
Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what);
Eigen::VectorXd vector_from_json(const json& j, const std::string& what);

json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const json& j);

// Serializes +-infinity as the strings "inf"/"-inf" (JSON has no infinities);
// finite values stay numbers.
json error_value(double v);
double error_value_from_json(const json& j, const std::string& what);

// ---- model and canonical-form files ----------------------------------------

// Model file: {"F": matrix, "C": matrix, "t0": real, "T": real}.
DescriptorSystem model_from_json(const json& j);
json model_to_json(const DescriptorSystem& system);

// Canonical-form file: the model fields plus
// {"U","V","Sigma_r","r","C1","C2","C3","C4"}.
json canonical_to_json(const DescriptorSystem& system,
                       const CanonicalDescriptor& canonical);
CanonicalDescriptor canonical_from_json(const json& j);
bool has_canonical_blocks(const json& j);

// Operator-mode config: {"L": matrix, "H": matrix} with optional radii.
EstimationProblem problem_from_json(const json& j);

// ---- trajectory CSV ---------------------------------------------------------

// Header "t,v1,...,vn", one node per row, 17 significant digits (round-trips
// doubles exactly).
void write_trajectory_csv(const std::string& path, const Trajectory& traj);
Trajectory read_trajectory_csv(const std::string& path);

// ---- direction files ---------------------------------------------------------

// A direction is either constant in time ({"name", "vector"}) or sampled per
// node ({"name", "samples": [[...], ...]}, one inner list per node).
struct NamedDirection {
  std::string name;
  bool time_varying = false;
  Eigen::VectorXd vector;    // constant directions
  Eigen::MatrixXd samples;   // n x (N+1) for time-varying directions
};

std::vector<NamedDirection> directions_from_json(const json& j);

// Materializes a direction on a grid (broadcasting constants).
Trajectory direction_trajectory(const NamedDirection& d, const TimeGrid& grid,
                                int n);

}  // namespace mmest::io
