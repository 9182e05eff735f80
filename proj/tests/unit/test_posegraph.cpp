#include <random>
#include <sstream>

#include "doctest.h"
#include "sonar_oi/error.hpp"
#include "sonar_oi/pcm.hpp"
#include "sonar_oi/posegraph.hpp"
#include "support/dense_oracle.hpp"
#include "support/graphs.hpp"

using namespace sonar_oi;

namespace {

const NoiseModel3 kUnit;

PoseGraph two_pose_graph(const Pose2& init2) {
  PoseGraph g;
  g.add_variable(0, Pose2::identity());
  g.add_variable(1, init2);
  g.add_factor({FactorKind::Prior, 0, -1, Pose2::identity(), kUnit});
  g.add_factor({FactorKind::NSSM, 0, 1, Pose2(1, 0, 0), kUnit});
  return g;
}

Pose2 random_pose(std::mt19937_64& rng, double extent = 20.0) {
  std::uniform_real_distribution<double> u(-extent, extent), th(-kPi, kPi);
  return {u(rng), u(rng), th(rng)};
}

NoiseModel3 random_noise(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Matrix3d a;
  for (int i = 0; i < 9; ++i) a.data()[i] = u(rng);
  return NoiseModel3(a * a.transpose() + 0.1 * Eigen::Matrix3d::Identity());
}

}  // namespace

TEST_CASE("noise model validation") {
  CHECK_NOTHROW(NoiseModel3::from_sigmas(0.5, 0.5, 0.1));
  Eigen::Matrix3d asym = Eigen::Matrix3d::Identity();
  asym(0, 1) = 0.1;
  CHECK_THROWS_AS(NoiseModel3{asym}, InvalidArgument);
  Eigen::Matrix3d indef = Eigen::Matrix3d::Identity();
  indef(2, 2) = -1.0;
  CHECK_THROWS_AS(NoiseModel3{indef}, InvalidArgument);
  CHECK_THROWS_AS((void)NoiseModel3::from_sigmas(0.0, 1.0, 1.0), InvalidArgument);
  const NoiseModel3 n = NoiseModel3::from_sigmas(2.0, 3.0, 0.5);
  const Eigen::Matrix3d u = n.sqrt_information();
  CHECK((u.transpose() * u - n.information()).norm() < 1e-12);
  CHECK(u(1, 0) == 0.0);
}

TEST_CASE("residual examples") {
  PoseGraph g;
  g.add_variable(0, Pose2(0, 0, 0));
  g.add_variable(1, Pose2(1, 0, 0));
  const Factor exact{FactorKind::NSSM, 0, 1, Pose2(1, 0, 0), kUnit};
  CHECK(residual(exact, g.values()).norm() == 0.0);
  const Factor prior{FactorKind::Prior, 1, -1, Pose2(1, 0, 0), kUnit};
  CHECK(residual(prior, g.values()).norm() == 0.0);
  const Factor zero{FactorKind::NSSM, 0, 1, Pose2(0, 0, 0), kUnit};
  const Eigen::Vector3d r = residual(zero, g.values());
  CHECK(r.x() == doctest::Approx(1.0));
  CHECK(r.y() == doctest::Approx(0.0));
  CHECK(r.z() == doctest::Approx(0.0));
  const Factor missing{FactorKind::NSSM, 0, 7, Pose2(0, 0, 0), kUnit};
  CHECK_THROWS_AS((void)residual(missing, g.values()), GraphError);
}

TEST_CASE("graph insertion rules") {
  PoseGraph g(0);
  g.add_variable(0, Pose2());
  g.add_variable(1, Pose2());
  g.add_variable(2, Pose2());
  CHECK_THROWS_AS(g.add_variable(1, Pose2()), GraphError);
  CHECK_THROWS_AS(g.add_factor({FactorKind::NSSM, 0, 9, Pose2(), kUnit}), GraphError);
  CHECK_THROWS_AS(g.add_factor({FactorKind::SSM, 0, 2, Pose2(), kUnit}), GraphError);
  CHECK_THROWS_AS(g.add_factor({FactorKind::OI, 1, 2, Pose2(), kUnit}), GraphError);
  CHECK_NOTHROW(g.add_factor({FactorKind::OI, 0, 2, Pose2(), kUnit}));
  CHECK_NOTHROW(g.add_factor({FactorKind::Prior, 0, -1, Pose2(), kUnit}));
  CHECK_THROWS_AS(g.add_factor({FactorKind::Prior, 0, -1, Pose2(), kUnit}), GraphError);
}

TEST_CASE("optimize examples") {
  SUBCASE("at truth nothing moves") {
    const auto r = optimize(two_pose_graph(Pose2(1, 0, 0)));
    CHECK(r.final_objective == 0.0);
    CHECK(r.values.at(1) == Pose2(1, 0, 0));
  }
  SUBCASE("far initialisation converges to the unique minimum") {
    const auto r = optimize(two_pose_graph(Pose2(5, 5, 1)));
    const Pose2 p = r.values.at(1);
    CHECK(std::abs(p.x() - 1.0) < 1e-6);
    CHECK(std::abs(p.y()) < 1e-6);
    CHECK(std::abs(p.theta()) < 1e-6);
  }
  SUBCASE("unconstrained component is an error") {
    PoseGraph g = two_pose_graph(Pose2(1, 0, 0));
    g.add_variable(5, Pose2());
    g.add_variable(6, Pose2());
    g.add_factor({FactorKind::SSM, 5, 6, Pose2(1, 0, 0), kUnit});
    CHECK_THROWS_AS((void)optimize(g), GraphError);
  }
  SUBCASE("missing anchor prior is an error") {
    PoseGraph g;
    g.add_variable(0, Pose2());
    g.add_variable(1, Pose2());
    g.add_factor({FactorKind::Prior, 1, -1, Pose2(), kUnit});
    g.add_factor({FactorKind::OI, 0, 1, Pose2(), kUnit});
    CHECK_THROWS_AS((void)optimize(g), GraphError);
  }
}

TEST_CASE("ten-pose chain matches the dense oracle") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto c = fixtures::noisy_chain(10, seed);
    const auto r = optimize(c.graph);
    const auto ref = oracle::solve(c.graph);
    MESSAGE("seed " << seed << " objective " << r.final_objective << " oracle " << ref.objective);
    REQUIRE(std::abs(r.final_objective - ref.objective) <= 1e-4 * std::max(ref.objective, 1e-12));
    CHECK(objective(c.graph.factors(), r.values) == doctest::Approx(r.final_objective));
  }
}

TEST_CASE("objective never increases across accepted steps") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    auto c = fixtures::noisy_chain(25, seed);
    Values perturbed = c.graph.values();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 2.0);
    for (auto& [id, p] : perturbed) {
      if (id > 1) p = Pose2(p.x() + n(rng), p.y() + n(rng), p.theta() + 0.3 * n(rng));
    }
    c.graph.update(perturbed);
    const auto r = optimize(c.graph);
    for (std::size_t k = 1; k < r.accepted_objectives.size(); ++k) {
      REQUIRE(r.accepted_objectives[k] <= r.accepted_objectives[k - 1]);
    }
    CHECK(r.final_objective <= r.initial_objective);
  }
}

TEST_CASE("factor jacobians match central differences") {
  std::mt19937_64 rng(99);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    Values v{{0, random_pose(rng)}, {1, random_pose(rng)}};
    const FactorKind kinds[] = {FactorKind::Prior, FactorKind::NSSM, FactorKind::OI};
    const Factor f{kinds[trial % 3], 0, trial % 3 == 0 ? -1 : 1, random_pose(rng, 5.0), random_noise(rng)};
    const Linearization lin = linearize(f, v);
    for (int var = 0; var < (f.is_prior() ? 1 : 2); ++var) {
      const Eigen::Matrix3d& j = var == 0 ? lin.jac_i : lin.jac_j;
      for (int c = 0; c < 3; ++c) {
        auto shifted = [&](double d) {
          Values w = v;
          Eigen::Vector3d p = w.at(var).vector();
          p[c] += d;
          w.at(var) = Pose2(p.x(), p.y(), p.z());
          return residual(f, w);
        };
        const Eigen::Vector3d fd = (shifted(h) - shifted(-h)) / (2 * h);
        for (int r = 0; r < 3; ++r) {
          REQUIRE(std::abs(fd[r] - j(r, c)) <= 1e-5 * std::max(1.0, std::abs(j(r, c))));
        }
      }
    }
  }
}

TEST_CASE("gauge: moving the anchor prior moves the whole solution") {
  auto build = [](const Pose2& anchor) {
    PoseGraph g;
    g.add_variable(0, anchor);
    g.add_factor({FactorKind::Prior, 0, -1, anchor, NoiseModel3::from_sigmas(1e-3, 1e-3, 1e-3)});
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 0.1);
    const NoiseModel3 odo = NoiseModel3::from_sigmas(0.1, 0.1, 0.02);
    Pose2 truth(2, 1, 0.3);
    g.add_variable(1, compose(anchor, truth));
    g.add_factor({FactorKind::OI, 0, 1, Pose2(truth.x() + n(rng), truth.y() + n(rng), truth.theta()), odo});
    for (int k = 2; k <= 8; ++k) {
      const Pose2 step(1.5 + n(rng), n(rng), 0.2 + n(rng));
      truth = compose(truth, Pose2(1.5, 0, 0.2));
      g.add_variable(k, compose(anchor, truth));
      g.add_factor({FactorKind::SSM, k - 1, k, step, odo});
      if (k % 3 == 0) {
        g.add_factor({FactorKind::OI, 0, k, Pose2(truth.x() + n(rng), truth.y() + n(rng), truth.theta()), odo});
      }
    }
    return g;
  };
  const auto base = optimize(build(Pose2::identity()));
  SUBCASE("translation") {
    const auto moved = optimize(build(Pose2(30.0, -12.5, 0.0)));
    CHECK(moved.final_objective == doctest::Approx(base.final_objective).epsilon(1e-9));
    for (const auto& [id, p] : base.values) {
      const Pose2& q = moved.values.at(id);
      REQUIRE(std::abs(q.x() - p.x() - 30.0) < 1e-7);
      REQUIRE(std::abs(q.y() - p.y() + 12.5) < 1e-7);
      REQUIRE(std::abs(wrap_angle(q.theta() - p.theta())) < 1e-9);
    }
  }
  SUBCASE("rotation") {
    const Pose2 g(0.0, 0.0, 2.5);
    const auto moved = optimize(build(g));
    CHECK(moved.final_objective == doctest::Approx(base.final_objective).epsilon(1e-9));
    for (const auto& [id, p] : base.values) {
      const Pose2 expect = compose(g, p);
      const Pose2& q = moved.values.at(id);
      REQUIRE(std::abs(q.x() - expect.x()) < 1e-7);
      REQUIRE(std::abs(q.y() - expect.y()) < 1e-7);
      REQUIRE(std::abs(wrap_angle(q.theta() - expect.theta())) < 1e-9);
    }
  }
}

TEST_CASE("marginal covariance examples") {
  SUBCASE("single prior") {
    Eigen::Matrix3d s;
    s << 2.0, 0.3, 0.1, 0.3, 1.0, 0.05, 0.1, 0.05, 0.2;
    PoseGraph g;
    g.add_variable(0, Pose2(3, 4, 0.5));
    g.add_factor({FactorKind::Prior, 0, -1, Pose2(3, 4, 0.5), NoiseModel3(s)});
    CHECK((marginal_covariance(g, 0).covariance() - s).norm() < 1e-12);
  }
  SUBCASE("two-pose chain adds x variances") {
    PoseGraph g;
    g.add_variable(0, Pose2());
    g.add_variable(1, Pose2(1, 0, 0));
    g.add_factor({FactorKind::Prior, 0, -1, Pose2(), NoiseModel3::from_sigmas(0.5, 0.7, 0.1)});
    g.add_factor({FactorKind::SSM, 0, 1, Pose2(1, 0, 0), NoiseModel3::from_sigmas(0.3, 0.2, 0.05)});
    // Heading uncertainty leaks into y, not x, along a straight theta = 0 chain.
    CHECK(marginal_covariance(g, 1).covariance()(0, 0) == doctest::Approx(0.25 + 0.09).epsilon(1e-12));
  }
  SUBCASE("five-pose chain matches the dense inverse") {
    auto c = fixtures::noisy_chain(4, 3, false);  // anchor + 4 keyframes = 5 poses
    c.graph.update(optimize(c.graph).values);
    const Eigen::MatrixXd dense = oracle::dense_covariance(c.graph);
    int k = 0;
    for (const auto& [id, p] : c.graph.values()) {
      const Eigen::Matrix3d m = marginal_covariance(c.graph, id).covariance();
      Eigen::Matrix3d rot = Eigen::Matrix3d::Identity();
      rot.topLeftCorner<2, 2>() << std::cos(p.theta()), std::sin(p.theta()), -std::sin(p.theta()), std::cos(p.theta());
      const Eigen::Matrix3d d = rot * dense.block<3, 3>(3 * k, 3 * k) * rot.transpose();
      REQUIRE((m - d).cwiseAbs().maxCoeff() < 1e-8);
      ++k;
    }
  }
  SUBCASE("unconstrained variable is named") {
    PoseGraph g;
    g.add_variable(0, Pose2());
    g.add_variable(4, Pose2());
    g.add_factor({FactorKind::Prior, 0, -1, Pose2(), kUnit});
    try {
      (void)marginal_covariance(g, 0);
      FAIL("expected SingularInformation");
    } catch (const SingularInformation& e) {
      CHECK(e.variable() == 4);
    }
  }
}

TEST_CASE("a leaf keeps the optimum and propagates the marginal") {
  // Appending a pose joined by a single relative factor must not move the rest of the
  // solution, and its marginal is the parent's marginal pushed through the factor.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto c = fixtures::noisy_chain(12, seed);
    c.graph.update(optimize(c.graph).values);
    const Values before = c.graph.values();
    const Eigen::Matrix3d parent = marginal_covariance(c.graph, 12).covariance();

    std::mt19937_64 rng(seed);
    const Pose2 z = random_pose(rng, 3.0);
    const NoiseModel3 noise = random_noise(rng);
    c.graph.add_variable(13, compose(c.graph.value(12), z));
    c.graph.add_factor({FactorKind::SSM, 12, 13, z, noise});
    const auto r = optimize(c.graph);
    for (const auto& [id, p] : before) {
      const Eigen::Vector3d d = local_difference(p, r.values.at(id));
      REQUIRE(d.norm() < 1e-6);
    }
    c.graph.update(r.values);
    const Eigen::Matrix3d full = marginal_covariance(c.graph, 13).covariance();
    const Eigen::Matrix3d leaf = compose(UncertainPose{c.graph.value(12), parent}, UncertainPose{z, noise.covariance()}).cov;
    CHECK((full - leaf).cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, full.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("g2o text round trip") {
  const auto c = fixtures::noisy_chain(6, 2);
  std::stringstream ss;
  write_g2o(ss, c.graph);
  const std::string text = ss.str();
  CHECK(text.find("VERTEX_SE2 3 ") != std::string::npos);
  CHECK(text.find("# SSM") != std::string::npos);
  CHECK(text.find("EDGE_SE2_PRIOR 0 ") != std::string::npos);
  const PoseGraph back = read_g2o(ss);
  REQUIRE(back.factors().size() == c.graph.factors().size());
  CHECK(back.values() == c.graph.values());
  for (std::size_t k = 0; k < back.factors().size(); ++k) {
    const Factor& a = back.factors()[k];
    const Factor& b = c.graph.factors()[k];
    CHECK(a.kind == b.kind);
    CHECK(a.i == b.i);
    CHECK(a.measurement == b.measurement);
    CHECK((a.noise.information() - b.noise.information()).norm() < 1e-6 * b.noise.information().norm());
  }
  std::stringstream bad("VERTEX_SE2 1 2\n");
  CHECK_THROWS_AS((void)read_g2o(bad), Error);
}
