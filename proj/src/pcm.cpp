#include "sonar_oi/pcm.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>

#include <Eigen/LU>

#include "sonar_oi/error.hpp"

namespace sonar_oi {

UncertainPose compose(const UncertainPose& a, const UncertainPose& b) {
  const Eigen::Matrix3d ad = adjoint(b.pose.inverse());
  return {compose(a.pose, b.pose), ad * a.cov * ad.transpose() + b.cov};
}

UncertainPose inverse(const UncertainPose& a) {
  const Eigen::Matrix3d ad = adjoint(a.pose);
  return {a.pose.inverse(), ad * a.cov * ad.transpose()};
}

std::optional<UncertainPose> odometry_chain(const PoseGraph& graph, int from, int to) {
  if (!graph.has_variable(from) || !graph.has_variable(to)) return std::nullopt;
  if (from == to) return UncertainPose{};
  // Adjacency over SSM factors; each edge carries the step in the traversal direction.
  std::map<int, std::vector<std::pair<int, UncertainPose>>> adj;
  for (const auto& f : graph.factors()) {
    if (f.kind != FactorKind::SSM) continue;
    const UncertainPose step{f.measurement, f.noise.covariance()};
    adj[f.i].emplace_back(f.j, step);
    adj[f.j].emplace_back(f.i, inverse(step));
  }
  std::map<int, std::pair<int, const UncertainPose*>> parent;
  std::deque<int> queue{from};
  parent[from] = {from, nullptr};
  while (!queue.empty() && !parent.contains(to)) {
    const int u = queue.front();
    queue.pop_front();
    for (const auto& [v, step] : adj[u]) {
      if (parent.contains(v)) continue;
      parent[v] = {u, &step};
      queue.push_back(v);
    }
  }
  if (!parent.contains(to)) return std::nullopt;
  std::vector<const UncertainPose*> steps;
  for (int v = to; v != from; v = parent[v].first) steps.push_back(parent[v].second);
  UncertainPose acc;
  for (auto it = steps.rbegin(); it != steps.rend(); ++it) acc = compose(acc, **it);
  return acc;
}

namespace {

ChainFn graph_chain(const PoseGraph& graph) {
  return [&graph](int from, int to) { return odometry_chain(graph, from, to); };
}

}  // namespace

std::optional<double> pcm_cycle_distance(const Factor& a, const Factor& b, const PoseGraph& graph) {
  return pcm_cycle_distance(a, b, graph_chain(graph));
}

std::optional<double> pcm_cycle_distance(const Factor& a, const Factor& b, const ChainFn& chain) {
  const auto fwd = chain(a.j, b.j);
  const auto back = chain(b.i, a.i);
  if (!fwd || !back) return std::nullopt;
  const UncertainPose za{a.measurement, a.noise.covariance()};
  const UncertainPose zb{b.measurement, b.noise.covariance()};
  const UncertainPose cycle = compose(compose(compose(za, *fwd), inverse(zb)), *back);
  const Eigen::Vector3d e = cycle.pose.vector();
  // The covariance is in the cycle's body frame; e is in plain coordinates.
  Eigen::Matrix3d to_coords = Eigen::Matrix3d::Identity();
  const double c = std::cos(cycle.pose.theta()), s = std::sin(cycle.pose.theta());
  to_coords.topLeftCorner<2, 2>() << c, -s, s, c;
  const Eigen::Matrix3d cov = to_coords * cycle.cov * to_coords.transpose();
  return e.dot(cov.inverse() * e);
}

std::vector<std::vector<bool>> pcm_consistency(const std::vector<Factor>& candidates, const PoseGraph& graph,
                                               const PcmConfig& cfg) {
  return pcm_consistency(candidates, graph_chain(graph), cfg);
}

std::vector<std::vector<bool>> pcm_consistency(const std::vector<Factor>& candidates, const ChainFn& chain,
                                               const PcmConfig& cfg) {
  const std::size_t n = candidates.size();
  std::vector<std::vector<bool>> m(n, std::vector<bool>(n, false));
  for (std::size_t a = 0; a < n; ++a) {
    if (candidates[a].is_prior()) throw InvalidArgument("pcm: prior factors cannot be loop closures");
    m[a][a] = true;
    for (std::size_t b = a + 1; b < n; ++b) {
      const auto d2 = pcm_cycle_distance(candidates[a], candidates[b], chain);
      m[a][b] = m[b][a] = d2 && *d2 < cfg.chi2_threshold;
    }
  }
  return m;
}

namespace {

struct CliqueSearch {
  const std::vector<std::vector<bool>>& adj;
  std::vector<std::size_t> current;
  std::vector<std::size_t> best;

  // Visits cliques in lexicographic order, so the first clique of a given size found is the
  // smallest one; only strictly larger cliques replace it.
  void extend(const std::vector<std::size_t>& candidates) {
    if (current.size() > best.size()) best = current;
    for (std::size_t k = 0; k < candidates.size(); ++k) {
      if (current.size() + (candidates.size() - k) <= best.size()) return;
      const std::size_t v = candidates[k];
      std::vector<std::size_t> next;
      for (std::size_t m = k + 1; m < candidates.size(); ++m) {
        if (adj[v][candidates[m]]) next.push_back(candidates[m]);
      }
      current.push_back(v);
      extend(next);
      current.pop_back();
    }
  }
};

}  // namespace

std::vector<std::size_t> maximum_clique(const std::vector<std::vector<bool>>& adjacency) {
  std::vector<std::size_t> all(adjacency.size());
  for (std::size_t k = 0; k < all.size(); ++k) all[k] = k;
  CliqueSearch search{adjacency, {}, {}};
  search.extend(all);
  return search.best;
}

std::vector<std::size_t> pcm_select(const std::vector<Factor>& candidates, const PoseGraph& graph,
                                    const PcmConfig& cfg) {
  return pcm_select(candidates, graph_chain(graph), cfg);
}

std::vector<std::size_t> pcm_select(const std::vector<Factor>& candidates, const ChainFn& chain,
                                    const PcmConfig& cfg) {
  if (candidates.empty()) return {};
  return maximum_clique(pcm_consistency(candidates, chain, cfg));
}

}  // namespace sonar_oi
