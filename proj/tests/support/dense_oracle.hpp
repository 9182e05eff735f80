#pragma once

// Dense reference solver for small pose graphs. Shares nothing with the library's
// optimizer beyond the Pose2/Factor containers: residuals are recomputed from raw
// trigonometry and Jacobians come from central differences.

#include <cmath>
#include <map>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "sonar_oi/posegraph.hpp"

namespace oracle {

inline double wrap(double a) {
  while (a >= M_PI) a -= 2 * M_PI;
  while (a < -M_PI) a += 2 * M_PI;
  return a;
}

struct State {
  std::vector<int> ids;
  Eigen::VectorXd x;  // (x, y, theta) per id
};

inline State from_values(const sonar_oi::Values& v) {
  State s;
  s.x.resize(3 * static_cast<Eigen::Index>(v.size()));
  int k = 0;
  for (const auto& [id, p] : v) {
    s.ids.push_back(id);
    s.x.segment<3>(3 * k) << p.x(), p.y(), p.theta();
    ++k;
  }
  return s;
}

inline int slot(const State& s, int id) {
  for (std::size_t k = 0; k < s.ids.size(); ++k)
    if (s.ids[k] == id) return static_cast<int>(k);
  return -1;
}

// inverse(a) * b in raw coordinates
inline Eigen::Vector3d rel(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  const double c = std::cos(a.z()), s = std::sin(a.z());
  const double dx = b.x() - a.x(), dy = b.y() - a.y();
  return {c * dx + s * dy, -s * dx + c * dy, wrap(b.z() - a.z())};
}

inline Eigen::Vector3d error(const sonar_oi::Factor& f, const Eigen::VectorXd& x, const State& s) {
  const Eigen::Vector3d z(f.measurement.x(), f.measurement.y(), f.measurement.theta());
  const Eigen::Vector3d xi = x.segment<3>(3 * slot(s, f.i));
  const Eigen::Vector3d h = f.is_prior() ? xi : rel(xi, x.segment<3>(3 * slot(s, f.j)));
  return rel(z, h);
}

inline Eigen::Matrix3d whitener(const sonar_oi::Factor& f) {
  const Eigen::Matrix3d info = f.noise.covariance().inverse();
  return Eigen::LLT<Eigen::Matrix3d>(info).matrixU();
}

inline Eigen::VectorXd residuals(const std::vector<sonar_oi::Factor>& fs, const Eigen::VectorXd& x, const State& s) {
  Eigen::VectorXd r(3 * static_cast<Eigen::Index>(fs.size()));
  for (std::size_t k = 0; k < fs.size(); ++k) r.segment<3>(3 * k) = whitener(fs[k]) * error(fs[k], x, s);
  return r;
}

inline Eigen::MatrixXd jacobian(const std::vector<sonar_oi::Factor>& fs, const Eigen::VectorXd& x, const State& s,
                                double h = 1e-6) {
  Eigen::MatrixXd j(3 * static_cast<Eigen::Index>(fs.size()), x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    Eigen::VectorXd xp = x, xm = x;
    xp[c] += h;
    xm[c] -= h;
    j.col(c) = (residuals(fs, xp, s) - residuals(fs, xm, s)) / (2 * h);
  }
  return j;
}

struct Solution {
  Eigen::VectorXd x;
  double objective;
};

// Plain Gauss-Newton with step halving.
inline Solution solve(const sonar_oi::PoseGraph& g, int iterations = 200) {
  const State s = from_values(g.values());
  Eigen::VectorXd x = s.x;
  double f = residuals(g.factors(), x, s).squaredNorm();
  for (int it = 0; it < iterations; ++it) {
    const Eigen::VectorXd r = residuals(g.factors(), x, s);
    const Eigen::MatrixXd j = jacobian(g.factors(), x, s);
    const Eigen::VectorXd dx = (j.transpose() * j).ldlt().solve(-j.transpose() * r);
    double step = 1.0;
    bool improved = false;
    for (int k = 0; k < 30; ++k, step *= 0.5) {
      const Eigen::VectorXd xn = x + step * dx;
      const double fn = residuals(g.factors(), xn, s).squaredNorm();
      if (fn < f) {
        x = xn;
        f = fn;
        improved = true;
        break;
      }
    }
    if (!improved || dx.norm() < 1e-13) break;
  }
  return {x, f};
}

// Dense inverse of J^T J at the graph's current values.
inline Eigen::MatrixXd dense_covariance(const sonar_oi::PoseGraph& g) {
  const State s = from_values(g.values());
  const Eigen::MatrixXd j = jacobian(g.factors(), s.x, s, 1e-5);
  return (j.transpose() * j).inverse();
}

}  // namespace oracle
