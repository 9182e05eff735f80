#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sonar_oi/geometry.hpp"

namespace sonar_oi {

/// Gaussian noise over (x, y, theta). Construction rejects non-symmetric or non-PD input.
class NoiseModel3 {
 public:
  NoiseModel3() : NoiseModel3(Eigen::Matrix3d::Identity()) {}
  explicit NoiseModel3(const Eigen::Matrix3d& covariance);

  [[nodiscard]] static NoiseModel3 from_sigmas(double sx, double sy, double stheta);

  [[nodiscard]] const Eigen::Matrix3d& covariance() const noexcept { return cov_; }
  [[nodiscard]] const Eigen::Matrix3d& information() const noexcept { return info_; }
  /// Upper-triangular U with U^T U = information.
  [[nodiscard]] const Eigen::Matrix3d& sqrt_information() const noexcept { return sqrt_info_; }

 private:
  Eigen::Matrix3d cov_;
  Eigen::Matrix3d info_;
  Eigen::Matrix3d sqrt_info_;
};

enum class FactorKind { Prior, SSM, NSSM, OI };

[[nodiscard]] std::string to_string(FactorKind kind);
[[nodiscard]] FactorKind factor_kind_from_string(const std::string& s);

struct Factor {
  FactorKind kind{FactorKind::Prior};
  int i{0};
  int j{-1};  // unused for priors
  Pose2 measurement;
  NoiseModel3 noise;

  [[nodiscard]] bool is_prior() const noexcept { return kind == FactorKind::Prior; }
};

using Values = std::map<int, Pose2>;

class PoseGraph {
 public:
  explicit PoseGraph(int anchor_id = 0) : anchor_id_(anchor_id) {}

  void add_variable(int id, const Pose2& initial);
  /// Validates endpoints and kind-specific shape; returns the factor's index.
  std::size_t add_factor(const Factor& f);

  [[nodiscard]] bool has_variable(int id) const { return values_.contains(id); }
  [[nodiscard]] const Pose2& value(int id) const;
  [[nodiscard]] const Values& values() const noexcept { return values_; }
  [[nodiscard]] const std::vector<Factor>& factors() const noexcept { return factors_; }
  [[nodiscard]] int anchor_id() const noexcept { return anchor_id_; }

  /// Replaces estimates for existing ids.
  void update(const Values& values);

 private:
  int anchor_id_;
  Values values_;
  std::vector<Factor> factors_;
};

/// Unwhitened local error of a factor at the given values.
[[nodiscard]] Eigen::Vector3d factor_error(const Factor& f, const Values& values);
/// Whitened residual. Throws GraphError when an endpoint is missing from values.
[[nodiscard]] Eigen::Vector3d residual(const Factor& f, const Values& values);

struct Linearization {
  Eigen::Vector3d residual;  // whitened
  Eigen::Matrix3d jac_i;     // d residual / d (x_i, y_i, theta_i)
  Eigen::Matrix3d jac_j;     // zero for priors
};
[[nodiscard]] Linearization linearize(const Factor& f, const Values& values);

/// Sum of squared whitened residuals.
[[nodiscard]] double objective(const std::vector<Factor>& factors, const Values& values);

/// Throws GraphError if a variable belongs to a component without any prior, or if the
/// anchor has no prior.
void check_constrained(const PoseGraph& graph);

struct OptimizerConfig {
  int max_iterations{100};
  double relative_tolerance{1e-9};
  double step_tolerance{1e-10};
  double initial_lambda{1e-4};
  double lambda_factor{10.0};
  double max_lambda{1e12};
};

struct OptimizeResult {
  Values values;
  double initial_objective{0.0};
  double final_objective{0.0};
  int iterations{0};
  std::vector<double> accepted_objectives;  // objective after each accepted step, starting with the initial one
};

/// Batch Levenberg-Marquardt over all variables: x, y updated additively, theta wrapped.
[[nodiscard]] OptimizeResult optimize(const PoseGraph& graph, const OptimizerConfig& cfg = {});

/// Marginal covariance of one variable from the Gauss-Newton information at the graph's
/// current values, expressed in the variable's body frame (right perturbation), like factor
/// noise. Throws SingularInformation naming an unconstrained variable.
[[nodiscard]] NoiseModel3 marginal_covariance(const PoseGraph& graph, int id);

// g2o-style text: VERTEX_SE2 id x y theta / EDGE_SE2 i j dx dy dth i11 i12 i13 i22 i23 i33 # KIND
// / EDGE_SE2_PRIOR i x y th i11 ... i33 # Prior. First line "# anchor <id>".
void write_g2o(std::ostream& out, const PoseGraph& graph);
[[nodiscard]] PoseGraph read_g2o(std::istream& in);

}  // namespace sonar_oi
