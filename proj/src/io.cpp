#include "mmest/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mmest::io {

namespace {

// 17 significant digits: the shortest formatting guaranteed to round-trip
// IEEE doubles exactly.
std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double number_from_json(const json& j, const std::string& what) {
  if (!j.is_number())
    throw InputError(what + ": expected a number");
  return j.get<double>();
}

const json& require_key(const json& j, const std::string& key,
                        const std::string& what) {
  if (!j.is_object() || !j.contains(key))
    throw InputError(what + ": missing key \"" + key + "\"");
  return j.at(key);
}

// Replaces an entry-less parse result (e.g. [] for a 0 x k block) by a
// correctly shaped empty matrix; otherwise insists on the exact shape.
Eigen::MatrixXd conform(Eigen::MatrixXd m, int rows, int cols,
                        const std::string& what) {
  if (m.size() == 0 && rows * cols == 0) return Eigen::MatrixXd::Zero(rows, cols);
  if (m.rows() != rows || m.cols() != cols)
    throw InputError(what + ": expected " + std::to_string(rows) + "x" +
                     std::to_string(cols) + ", got " +
                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  return m;
}

}  // namespace

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

Eigen::MatrixXd matrix_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw InputError(what + ": expected an array of rows");
  const auto rows = j.size();
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  if (!j[0].is_array()) throw InputError(what + ": rows must be arrays");
  const auto cols = j[0].size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows),
                    static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols)
      throw InputError(what + ": ragged rows");
    for (std::size_t k = 0; k < cols; ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          number_from_json(j[i][k], what);
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json& j, const std::string& what) {
  if (!j.is_array()) throw InputError(what + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i)
    v(static_cast<Eigen::Index>(i)) = number_from_json(j[i], what);
  return v;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
  if (!out) throw InputError("failed writing " + path);
}

json error_value(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : "-inf";
}

double error_value_from_json(const json& j, const std::string& what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return kInfinity;
    if (s == "-inf") return -kInfinity;
  }
  throw InputError(what + ": expected a number or \"inf\"");
}

DescriptorSystem model_from_json(const json& j) {
  DescriptorSystem system;
  system.F = matrix_from_json(require_key(j, "F", "model"), "model F");
  system.C = matrix_from_json(require_key(j, "C", "model"), "model C");
  system.t0 = number_from_json(require_key(j, "t0", "model"), "model t0");
  system.T = number_from_json(require_key(j, "T", "model"), "model T");
  system.validate();
  return system;
}

json model_to_json(const DescriptorSystem& system) {
  json j;
  j["F"] = matrix_to_json(system.F);
  j["C"] = matrix_to_json(system.C);
  j["t0"] = system.t0;
  j["T"] = system.T;
  return j;
}

json canonical_to_json(const DescriptorSystem& system,
                       const CanonicalDescriptor& canonical) {
  json j = model_to_json(system);
  j["U"] = matrix_to_json(canonical.U);
  j["V"] = matrix_to_json(canonical.V);
  j["Sigma_r"] = vector_to_json(canonical.Sigma_r);
  j["r"] = canonical.r;
  j["C1"] = matrix_to_json(canonical.C1);
  j["C2"] = matrix_to_json(canonical.C2);
  j["C3"] = matrix_to_json(canonical.C3);
  j["C4"] = matrix_to_json(canonical.C4);
  return j;
}

bool has_canonical_blocks(const json& j) {
  return j.is_object() && j.contains("r") && j.contains("U") &&
         j.contains("V") && j.contains("C1");
}

CanonicalDescriptor canonical_from_json(const json& j) {
  CanonicalDescriptor c;
  const json& jr = require_key(j, "r", "canonical");
  if (!jr.is_number_integer() || jr.get<long>() < 0)
    throw InputError("canonical r: expected a nonnegative integer");
  c.r = jr.get<int>();
  c.U = matrix_from_json(require_key(j, "U", "canonical"), "canonical U");
  c.V = matrix_from_json(require_key(j, "V", "canonical"), "canonical V");
  c.Sigma_r = vector_from_json(require_key(j, "Sigma_r", "canonical"),
                               "canonical Sigma_r");
  c.t0 = number_from_json(require_key(j, "t0", "canonical"), "canonical t0");
  c.T = number_from_json(require_key(j, "T", "canonical"), "canonical T");
  const int n = static_cast<int>(c.U.rows());
  const int na = n - c.r;
  if (c.r > n || c.U.cols() != n || c.V.rows() != n || c.V.cols() != n ||
      c.Sigma_r.size() != c.r)
    throw InputError("canonical: inconsistent shapes of U, V, Sigma_r, r");
  c.C1 = conform(matrix_from_json(require_key(j, "C1", "canonical"), "canonical C1"),
                 c.r, c.r, "canonical C1");
  c.C2 = conform(matrix_from_json(require_key(j, "C2", "canonical"), "canonical C2"),
                 c.r, na, "canonical C2");
  c.C3 = conform(matrix_from_json(require_key(j, "C3", "canonical"), "canonical C3"),
                 na, c.r, "canonical C3");
  c.C4 = conform(matrix_from_json(require_key(j, "C4", "canonical"), "canonical C4"),
                 na, na, "canonical C4");
  return c;
}

EstimationProblem problem_from_json(const json& j) {
  EstimationProblem p;
  p.L = matrix_from_json(require_key(j, "L", "problem"), "problem L");
  p.H = matrix_from_json(require_key(j, "H", "problem"), "problem H");
  if (j.contains("radius_f"))
    p.radius_f = number_from_json(j.at("radius_f"), "problem radius_f");
  if (j.contains("radius_eta"))
    p.radius_eta = number_from_json(j.at("radius_eta"), "problem radius_eta");
  p.validate();
  return p;
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << "t";
  for (int i = 1; i <= traj.dim(); ++i) out << ",v" << i;
  out << '\n';
  for (int j = 0; j < traj.grid.nodes(); ++j) {
    out << format_double(traj.grid.node(j));
    for (int i = 0; i < traj.dim(); ++i)
      out << ',' << format_double(traj.values(i, j));
    out << '\n';
  }
  if (!out) throw InputError("failed writing " + path);
}

Trajectory read_trajectory_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw InputError(path + ": empty file");

  auto split = [&](const std::string& s) {
    std::vector<std::string> fields;
    std::stringstream ss(s);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!s.empty() && s.back() == ',') fields.push_back("");
    return fields;
  };

  const auto header = split(line);
  if (header.size() < 2 || header[0] != "t")
    throw InputError(path + ": header must be t,v1,...,vn");
  const int n = static_cast<int>(header.size()) - 1;

  std::vector<double> ts;
  std::vector<Eigen::VectorXd> vals;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = split(line);
    if (static_cast<int>(fields.size()) != n + 1)
      throw InputError(path + ": row " + std::to_string(ts.size() + 2) +
                       " has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(n + 1));
    Eigen::VectorXd v(n);
    try {
      ts.push_back(std::stod(fields[0]));
      for (int i = 0; i < n; ++i) v(i) = std::stod(fields[i + 1]);
    } catch (const std::exception&) {
      throw InputError(path + ": non-numeric field in row " +
                       std::to_string(ts.size() + 2));
    }
    vals.push_back(std::move(v));
  }
  if (ts.size() < 3) throw InputError(path + ": need at least 3 nodes");

  const int N = static_cast<int>(ts.size()) - 1;
  TimeGrid grid(ts.front(), ts.back(), N);
  const double tol =
      1e-9 * std::max({1.0, std::abs(grid.t0), std::abs(grid.T)});
  for (int j = 0; j <= N; ++j)
    if (std::abs(ts[j] - grid.node(j)) > tol)
      throw InputError(path + ": nodes are not uniformly spaced");

  Eigen::MatrixXd values(n, N + 1);
  for (int j = 0; j <= N; ++j) values.col(j) = vals[j];
  return Trajectory(grid, std::move(values));
}

std::vector<NamedDirection> directions_from_json(const json& j) {
  if (!j.is_array()) throw InputError("directions: expected an array");
  std::vector<NamedDirection> out;
  for (const auto& entry : j) {
    NamedDirection d;
    d.name = require_key(entry, "name", "direction").get<std::string>();
    if (entry.contains("vector")) {
      d.vector = vector_from_json(entry.at("vector"), "direction " + d.name);
    } else if (entry.contains("samples")) {
      d.time_varying = true;
      // One inner list per node; store components as rows.
      d.samples =
          matrix_from_json(entry.at("samples"), "direction " + d.name)
              .transpose();
    } else {
      throw InputError("direction " + d.name + ": needs \"vector\" or \"samples\"");
    }
    out.push_back(std::move(d));
  }
  return out;
}

Trajectory direction_trajectory(const NamedDirection& d, const TimeGrid& grid,
                                int n) {
  if (!d.time_varying) {
    if (d.vector.size() != n)
      throw DimensionError("direction " + d.name + ": expected " +
                           std::to_string(n) + " components");
    return Trajectory(grid, d.vector.replicate(1, grid.nodes()));
  }
  if (d.samples.rows() != n || d.samples.cols() != grid.nodes())
    throw DimensionError("direction " + d.name + ": samples must be " +
                         std::to_string(grid.nodes()) + " nodes of " +
                         std::to_string(n) + " components");
  return Trajectory(grid, d.samples);
}

}  // namespace mmest::io
