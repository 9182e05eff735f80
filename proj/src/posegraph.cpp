#include "sonar_oi/posegraph.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "sonar_oi/error.hpp"

namespace sonar_oi {

NoiseModel3::NoiseModel3(const Eigen::Matrix3d& covariance) : cov_(covariance) {
  if (!covariance.allFinite()) throw InvalidArgument("NoiseModel3: covariance has non-finite entries");
  const double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidArgument("NoiseModel3: covariance is not symmetric");
  }
  cov_ = 0.5 * (covariance + covariance.transpose());
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov_);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) throw InvalidArgument("NoiseModel3: covariance is not positive definite");
  info_ = cov_.inverse();
  info_ = 0.5 * (info_ + info_.transpose());
  const Eigen::LLT<Eigen::Matrix3d> llt(info_);
  if (llt.info() != Eigen::Success) throw InvalidArgument("NoiseModel3: information is not positive definite");
  sqrt_info_ = llt.matrixU();
}

NoiseModel3 NoiseModel3::from_sigmas(double sx, double sy, double stheta) {
  if (!(sx > 0.0) || !(sy > 0.0) || !(stheta > 0.0)) throw InvalidArgument("NoiseModel3: sigmas must be positive");
  return NoiseModel3(Eigen::Vector3d(sx * sx, sy * sy, stheta * stheta).asDiagonal());
}

std::string to_string(FactorKind kind) {
  switch (kind) {
    case FactorKind::Prior: return "Prior";
    case FactorKind::SSM: return "SSM";
    case FactorKind::NSSM: return "NSSM";
    case FactorKind::OI: return "OI";
  }
  return "?";
}

FactorKind factor_kind_from_string(const std::string& s) {
  if (s == "Prior") return FactorKind::Prior;
  if (s == "SSM") return FactorKind::SSM;
  if (s == "NSSM") return FactorKind::NSSM;
  if (s == "OI") return FactorKind::OI;
  throw InvalidArgument("unknown factor kind '" + s + "'");
}

void PoseGraph::add_variable(int id, const Pose2& initial) {
  if (values_.contains(id)) throw GraphError("variable " + std::to_string(id) + " already exists");
  values_.emplace(id, initial);
}

std::size_t PoseGraph::add_factor(const Factor& f) {
  auto require = [&](int id) {
    if (!values_.contains(id)) {
      throw GraphError(to_string(f.kind) + " factor references missing variable " + std::to_string(id));
    }
  };
  require(f.i);
  if (f.is_prior()) {
    if (f.i == anchor_id_) {
      for (const auto& g : factors_) {
        if (g.is_prior() && g.i == anchor_id_) throw GraphError("anchor already has a prior");
      }
    }
  } else {
    require(f.j);
    if (f.i == f.j) throw GraphError("between factor with identical endpoints");
    if (f.kind == FactorKind::SSM && f.j != f.i + 1) {
      throw GraphError("SSM factor must join consecutive keyframes, got " + std::to_string(f.i) + "->" +
                       std::to_string(f.j));
    }
    if (f.kind == FactorKind::OI && f.i != anchor_id_) throw GraphError("OI factor must start at the anchor");
  }
  factors_.push_back(f);
  return factors_.size() - 1;
}

const Pose2& PoseGraph::value(int id) const {
  const auto it = values_.find(id);
  if (it == values_.end()) throw GraphError("missing variable " + std::to_string(id));
  return it->second;
}

void PoseGraph::update(const Values& values) {
  for (const auto& [id, p] : values) {
    auto it = values_.find(id);
    if (it == values_.end()) throw GraphError("update for missing variable " + std::to_string(id));
    it->second = p;
  }
}

namespace {

const Pose2& lookup(const Values& values, int id) {
  const auto it = values.find(id);
  if (it == values.end()) throw GraphError("values lack variable " + std::to_string(id));
  return it->second;
}

Eigen::Matrix2d rot_t(double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  Eigen::Matrix2d r;
  r << c, s, -s, c;
  return r;
}

}  // namespace

Eigen::Vector3d factor_error(const Factor& f, const Values& values) {
  if (f.is_prior()) return local_difference(f.measurement, lookup(values, f.i));
  return local_difference(f.measurement, between(lookup(values, f.i), lookup(values, f.j)));
}

Eigen::Vector3d residual(const Factor& f, const Values& values) {
  return f.noise.sqrt_information() * factor_error(f, values);
}

Linearization linearize(const Factor& f, const Values& values) {
  Linearization lin;
  const Eigen::Matrix2d rz_t = rot_t(f.measurement.theta());
  Eigen::Matrix3d ji = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d jj = Eigen::Matrix3d::Zero();
  if (f.is_prior()) {
    ji.topLeftCorner<2, 2>() = rz_t;
    ji(2, 2) = 1.0;
  } else {
    const Pose2& a = lookup(values, f.i);
    const Pose2& b = lookup(values, f.j);
    const double c = std::cos(a.theta()), s = std::sin(a.theta());
    const Eigen::Matrix2d ra_t = rot_t(a.theta());
    Eigen::Matrix2d dra_t;
    dra_t << -s, c, -c, -s;
    const Eigen::Vector2d dt(b.x() - a.x(), b.y() - a.y());
    ji.topLeftCorner<2, 2>() = -rz_t * ra_t;
    ji.block<2, 1>(0, 2) = rz_t * dra_t * dt;
    ji(2, 2) = -1.0;
    jj.topLeftCorner<2, 2>() = rz_t * ra_t;
    jj(2, 2) = 1.0;
  }
  const Eigen::Matrix3d& u = f.noise.sqrt_information();
  lin.residual = u * factor_error(f, values);
  lin.jac_i = u * ji;
  lin.jac_j = u * jj;
  return lin;
}

double objective(const std::vector<Factor>& factors, const Values& values) {
  double sum = 0.0;
  for (const auto& f : factors) sum += residual(f, values).squaredNorm();
  return sum;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

// Dense index of each variable id, in id order.
std::map<int, int> index_of(const Values& values) {
  std::map<int, int> idx;
  int k = 0;
  for (const auto& [id, p] : values) idx[id] = k++;
  return idx;
}

// First variable (lowest id) whose component has no prior, if any.
std::optional<int> unconstrained_variable(const PoseGraph& graph) {
  const auto idx = index_of(graph.values());
  UnionFind uf(idx.size());
  for (const auto& f : graph.factors()) {
    if (!f.is_prior()) uf.unite(idx.at(f.i), idx.at(f.j));
  }
  std::vector<bool> anchored(idx.size(), false);
  for (const auto& f : graph.factors()) {
    if (f.is_prior()) anchored[uf.find(idx.at(f.i))] = true;
  }
  for (const auto& [id, k] : idx) {
    if (!anchored[uf.find(k)]) return id;
  }
  return std::nullopt;
}

struct NormalEquations {
  Eigen::SparseMatrix<double> h;
  Eigen::VectorXd g;
};

NormalEquations build_normal_equations(const std::vector<Factor>& factors, const Values& values,
                                       const std::map<int, int>& idx) {
  const int n = static_cast<int>(idx.size()) * 3;
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(factors.size() * 36);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  auto add_block = [&](int r, int c, const Eigen::Matrix3d& m) {
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) trip.emplace_back(r + a, c + b, m(a, b));
  };
  for (const auto& f : factors) {
    const Linearization lin = linearize(f, values);
    const int bi = 3 * idx.at(f.i);
    add_block(bi, bi, lin.jac_i.transpose() * lin.jac_i);
    g.segment<3>(bi) += lin.jac_i.transpose() * lin.residual;
    if (!f.is_prior()) {
      const int bj = 3 * idx.at(f.j);
      add_block(bj, bj, lin.jac_j.transpose() * lin.jac_j);
      const Eigen::Matrix3d cross = lin.jac_i.transpose() * lin.jac_j;
      add_block(bi, bj, cross);
      add_block(bj, bi, cross.transpose());
      g.segment<3>(bj) += lin.jac_j.transpose() * lin.residual;
    }
  }
  NormalEquations ne;
  ne.h.resize(n, n);
  ne.h.setFromTriplets(trip.begin(), trip.end());
  ne.g = std::move(g);
  return ne;
}

Values retract(const Values& values, const std::map<int, int>& idx, const Eigen::VectorXd& delta) {
  Values out;
  for (const auto& [id, p] : values) {
    const int k = 3 * idx.at(id);
    out.emplace_hint(out.end(), id, Pose2(p.x() + delta[k], p.y() + delta[k + 1], p.theta() + delta[k + 2]));
  }
  return out;
}

}  // namespace

void check_constrained(const PoseGraph& graph) {
  bool anchor_prior = false;
  for (const auto& f : graph.factors()) anchor_prior = anchor_prior || (f.is_prior() && f.i == graph.anchor_id());
  if (graph.has_variable(graph.anchor_id()) && !anchor_prior) throw GraphError("anchor variable has no prior");
  if (const auto bad = unconstrained_variable(graph)) {
    throw GraphError("variable " + std::to_string(*bad) + " is disconnected from every prior");
  }
}

OptimizeResult optimize(const PoseGraph& graph, const OptimizerConfig& cfg) {
  check_constrained(graph);
  const auto idx = index_of(graph.values());
  const auto& factors = graph.factors();

  OptimizeResult res;
  res.values = graph.values();
  double f = objective(factors, res.values);
  res.initial_objective = f;
  res.accepted_objectives.push_back(f);
  double lambda = cfg.initial_lambda;

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  bool pattern_ready = false;
  for (int iter = 0; iter < cfg.max_iterations && f > 0.0; ++iter) {
    res.iterations = iter + 1;
    const NormalEquations ne = build_normal_equations(factors, res.values, idx);
    if (!pattern_ready) {
      solver.analyzePattern(ne.h);
      pattern_ready = true;
    }
    const Eigen::VectorXd diag = ne.h.diagonal();
    bool accepted = false;
    bool stop = false;
    while (lambda <= cfg.max_lambda) {
      Eigen::SparseMatrix<double> damped = ne.h;
      for (int k = 0; k < damped.rows(); ++k) damped.coeffRef(k, k) += lambda * std::max(diag[k], 1e-12);
      solver.factorize(damped);
      if (solver.info() != Eigen::Success) {
        lambda *= cfg.lambda_factor;
        continue;
      }
      const Eigen::VectorXd delta = solver.solve(-ne.g);
      const Values candidate = retract(res.values, idx, delta);
      const double f_new = objective(factors, candidate);
      if (f_new <= f) {
        const double rel = (f - f_new) / std::max(f, 1e-300);
        res.values = candidate;
        f = f_new;
        res.accepted_objectives.push_back(f);
        lambda = std::max(lambda / cfg.lambda_factor, 1e-12);
        accepted = true;
        stop = rel < cfg.relative_tolerance || delta.norm() < cfg.step_tolerance;
        break;
      }
      // A rejected step this small means we are already at the minimum to working precision.
      if (delta.norm() < cfg.step_tolerance) {
        stop = true;
        break;
      }
      lambda *= cfg.lambda_factor;
    }
    if (!accepted || stop) break;
  }
  res.final_objective = f;
  return res;
}

NoiseModel3 marginal_covariance(const PoseGraph& graph, int id) {
  if (!graph.has_variable(id)) throw GraphError("marginal_covariance: missing variable " + std::to_string(id));
  if (const auto bad = unconstrained_variable(graph)) {
    throw SingularInformation("information is singular: variable " + std::to_string(*bad) + " is unconstrained",
                              *bad);
  }
  const auto idx = index_of(graph.values());
  const NormalEquations ne = build_normal_equations(graph.factors(), graph.values(), idx);
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(ne.h);
  const Eigen::VectorXd d = solver.info() == Eigen::Success ? Eigen::VectorXd(solver.vectorD()) : Eigen::VectorXd();
  const double dmax = d.size() > 0 ? d.cwiseAbs().maxCoeff() : 0.0;
  if (solver.info() != Eigen::Success || d.size() == 0 || !(d.minCoeff() > 1e-14 * dmax)) {
    // Name the variable owning the weakest pivot.
    int worst = id;
    if (d.size() > 0) {
      Eigen::Index k = 0;
      d.minCoeff(&k);
      const int original = solver.permutationPinv().indices()[k];
      for (const auto& [vid, vk] : idx) {
        if (vk == original / 3) worst = vid;
      }
    }
    throw SingularInformation("information is singular near variable " + std::to_string(worst), worst);
  }
  const int base = 3 * idx.at(id);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(ne.h.rows(), 3);
  for (int a = 0; a < 3; ++a) rhs(base + a, a) = 1.0;
  const Eigen::MatrixXd cols = solver.solve(rhs);
  // Rotate from global coordinates into the variable's body frame, the frame in which
  // factor noise is expressed.
  const double th = graph.value(id).theta();
  Eigen::Matrix3d to_body = Eigen::Matrix3d::Identity();
  to_body.topLeftCorner<2, 2>() << std::cos(th), std::sin(th), -std::sin(th), std::cos(th);
  Eigen::Matrix3d cov = to_body * cols.block<3, 3>(base, 0) * to_body.transpose();
  cov = 0.5 * (cov + cov.transpose());
  return NoiseModel3(cov);
}

namespace {

void write_info(std::ostream& out, const NoiseModel3& n) {
  const Eigen::Matrix3d& m = n.information();
  out << ' ' << m(0, 0) << ' ' << m(0, 1) << ' ' << m(0, 2) << ' ' << m(1, 1) << ' ' << m(1, 2) << ' ' << m(2, 2);
}

NoiseModel3 read_info(std::istream& in) {
  double a, b, c, d, e, f;
  if (!(in >> a >> b >> c >> d >> e >> f)) throw Error("read_g2o: truncated information matrix");
  Eigen::Matrix3d info;
  info << a, b, c, b, d, e, c, e, f;
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(info);
  if (!(eig.eigenvalues().minCoeff() > 0.0)) throw InvalidArgument("read_g2o: information not positive definite");
  Eigen::Matrix3d cov = info.inverse();
  return NoiseModel3(0.5 * (cov + cov.transpose()));
}

}  // namespace

void write_g2o(std::ostream& out, const PoseGraph& graph) {
  const auto old_flags = out.flags();
  const auto old_prec = out.precision();
  out << std::setprecision(17);
  out << "# anchor " << graph.anchor_id() << '\n';
  for (const auto& [id, p] : graph.values()) {
    out << "VERTEX_SE2 " << id << ' ' << p.x() << ' ' << p.y() << ' ' << p.theta() << '\n';
  }
  for (const auto& f : graph.factors()) {
    const Pose2& z = f.measurement;
    if (f.is_prior()) {
      out << "EDGE_SE2_PRIOR " << f.i << ' ' << z.x() << ' ' << z.y() << ' ' << z.theta();
    } else {
      out << "EDGE_SE2 " << f.i << ' ' << f.j << ' ' << z.x() << ' ' << z.y() << ' ' << z.theta();
    }
    write_info(out, f.noise);
    out << " # " << to_string(f.kind) << '\n';
  }
  out.flags(old_flags);
  out.precision(old_prec);
}

PoseGraph read_g2o(std::istream& in) {
  int anchor = 0;
  std::vector<std::pair<int, Pose2>> vertices;
  std::vector<Factor> factors;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    const auto where = " at line " + std::to_string(line_no);
    if (tag == "#") {
      std::string key;
      if (ls >> key && key == "anchor" && !(ls >> anchor)) throw Error("read_g2o: bad anchor line" + where);
      continue;
    }
    auto kind_comment = [&](FactorKind fallback) {
      std::string hash, name;
      if (ls >> hash >> name && hash == "#") return factor_kind_from_string(name);
      return fallback;
    };
    if (tag == "VERTEX_SE2") {
      int id;
      double x, y, t;
      if (!(ls >> id >> x >> y >> t)) throw Error("read_g2o: malformed vertex" + where);
      vertices.emplace_back(id, Pose2(x, y, t));
    } else if (tag == "EDGE_SE2") {
      Factor f;
      double x, y, t;
      if (!(ls >> f.i >> f.j >> x >> y >> t)) throw Error("read_g2o: malformed edge" + where);
      f.measurement = Pose2(x, y, t);
      f.noise = read_info(ls);
      f.kind = kind_comment(FactorKind::NSSM);
      factors.push_back(f);
    } else if (tag == "EDGE_SE2_PRIOR") {
      Factor f;
      double x, y, t;
      if (!(ls >> f.i >> x >> y >> t)) throw Error("read_g2o: malformed prior" + where);
      f.measurement = Pose2(x, y, t);
      f.noise = read_info(ls);
      f.kind = FactorKind::Prior;
      factors.push_back(f);
    } else {
      throw Error("read_g2o: unknown record '" + tag + "'" + where);
    }
  }
  PoseGraph graph(anchor);
  for (const auto& [id, p] : vertices) graph.add_variable(id, p);
  for (const auto& f : factors) graph.add_factor(f);
  return graph;
}

}  // namespace sonar_oi
