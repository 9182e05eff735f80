#include <limits>
#include <random>

#include "doctest.h"
#include "sonar_oi/cfar.hpp"
#include "sonar_oi/error.hpp"

using namespace sonar_oi;

namespace {

SonarSpec spec_for(int rows, int cols) {
  SonarSpec s;
  s.n_range_bins = rows;
  s.n_beams = cols;
  return s;
}

// Direct window sums, no prefix tricks.
double direct_noise(const Grid<float>& img, int r, int c, const CfarConfig& cfg) {
  const int g = cfg.guard_cells, t = cfg.train_cells;
  double best = std::numeric_limits<double>::infinity();
  auto window = [&](int dr, int dc) {
    double sum = 0.0;
    for (int k = g + 1; k <= g + t; ++k) {
      const int rr = r + dr * k, cc = c + dc * k;
      if (!img.in_bounds(rr, cc)) return;
      sum += img(rr, cc);
    }
    best = std::min(best, sum / t);
  };
  window(1, 0);
  window(-1, 0);
  window(0, 1);
  window(0, -1);
  return best;
}

double false_alarm_fraction(const CfarConfig& cfg, int rows, int cols, int n, std::uint64_t seed) {
  std::size_t fired = 0, total = 0;
  for (int i = 0; i < n; ++i) {
    const auto img = rayleigh_image(rows, cols, 1.0, seed + i);
    const auto det = soca_cfar(img, spec_for(rows, cols), cfg);
    fired += det.count();
    total += img.size();
  }
  return static_cast<double>(fired) / static_cast<double>(total);
}

}  // namespace

TEST_CASE("all-zero image has no detections") {
  const Grid<float> img(100, 80, 0.0f);
  CHECK(soca_cfar(img, spec_for(100, 80), CfarConfig{}).count() == 0);
}

TEST_CASE("isolated bright cell on a uniform background is the only detection") {
  const float mu = 0.7f;
  Grid<float> img(90, 70, mu);
  img(40, 33) = 10 * mu;
  CfarConfig cfg;
  cfg.threshold_factor = 5.0;
  const auto det = soca_cfar(img, spec_for(90, 70), cfg);
  CHECK(det.count() == 1);
  CHECK(det.detections(40, 33) == 1);
}

TEST_CASE("min_intensity floor suppresses weak cells") {
  Grid<float> img(60, 60, 0.0f);
  img(30, 30) = 0.5f;
  CfarConfig cfg;
  CHECK(soca_cfar(img, spec_for(60, 60), cfg).count() == 1);
  cfg.min_intensity = 0.5;
  CHECK(soca_cfar(img, spec_for(60, 60), cfg).count() == 0);
}

TEST_CASE("window larger than the image is rejected") {
  CfarConfig cfg;  // footprint 33
  CHECK_THROWS_AS((void)soca_cfar(Grid<float>(33, 100, 0.0f), spec_for(33, 100), cfg), InvalidArgument);
  CHECK_THROWS_AS((void)soca_cfar(Grid<float>(100, 20, 0.0f), spec_for(100, 20), cfg), InvalidArgument);
  CHECK_NOTHROW((void)soca_cfar(Grid<float>(34, 34, 0.0f), spec_for(34, 34), cfg));
  cfg.train_cells = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("prefix-sum detector agrees with direct window sums") {
  CfarConfig cfg;
  cfg.threshold_factor = 2.5;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto img = rayleigh_image(80, 64, 1.0, seed);
    const auto det = soca_cfar(img, spec_for(80, 64), cfg);
    for (int r = 0; r < img.rows(); ++r) {
      for (int c = 0; c < img.cols(); ++c) {
        const double noise = direct_noise(img, r, c, cfg);
        const double margin = img(r, c) - cfg.threshold_factor * noise;
        if (std::abs(margin) < 1e-9) continue;  // rounding-order ties
        REQUIRE((det.detections(r, c) == 1) == (std::isfinite(noise) && margin > 0.0));
      }
    }
  }
}

TEST_CASE("calibrated threshold meets the design false-alarm rate") {
  const CfarConfig base;
  const double pfa = 1e-3;
  CfarConfig cfg = base;
  cfg.threshold_factor = calibrate_threshold(base.train_cells, base.guard_cells, pfa, 512, 256, 10, 1000);
  CHECK(cfg.threshold_factor > 1.0);
  const double empirical = false_alarm_fraction(cfg, 512, 256, 100, 5000);
  MESSAGE("alpha=" << cfg.threshold_factor << " empirical pfa=" << empirical);
  CHECK(empirical >= 1e-4);
  CHECK(empirical <= 1e-2);
}

TEST_CASE("dyadic intensity scaling leaves detections unchanged") {
  const CfarConfig cfg;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto img = rayleigh_image(128, 96, 1.0, seed);
    img(60, 50) = 30.0f;
    const auto ref = soca_cfar(img, spec_for(128, 96), cfg);
    for (float s : {0.125f, 0.5f, 4.0f, 1024.0f}) {
      Grid<float> scaled = img;
      for (auto& v : scaled.data()) v *= s;
      REQUIRE(soca_cfar(scaled, spec_for(128, 96), cfg).detections == ref.detections);
    }
  }
}

TEST_CASE("arbitrary scaling changes nothing away from rounding ties") {
  // Non-dyadic factors round each float, so only cells within float precision of the
  // threshold may flip.
  const CfarConfig cfg;
  const auto img = rayleigh_image(128, 96, 1.0, 77);
  const auto ref = soca_cfar(img, spec_for(128, 96), cfg);
  for (float s : {0.3f, 3.7f, 1e4f}) {
    Grid<float> scaled = img;
    for (auto& v : scaled.data()) v *= s;
    const auto det = soca_cfar(scaled, spec_for(128, 96), cfg);
    for (int r = 0; r < img.rows(); ++r) {
      for (int c = 0; c < img.cols(); ++c) {
        if (det.detections(r, c) == ref.detections(r, c)) continue;
        const double rel = img(r, c) / (cfg.threshold_factor * direct_noise(img, r, c, cfg)) - 1.0;
        REQUIRE(std::abs(rel) < 1e-5);
      }
    }
  }
}

TEST_CASE("raising alpha only removes detections") {
  const auto img = rayleigh_image(128, 128, 1.0, 9);
  CfarConfig lo, hi;
  for (double a = 1.0; a < 8.0; a += 0.25) {
    lo.threshold_factor = a;
    hi.threshold_factor = a + 0.25;
    const auto dl = soca_cfar(img, spec_for(128, 128), lo);
    const auto dh = soca_cfar(img, spec_for(128, 128), hi);
    for (std::size_t i = 0; i < dl.detections.size(); ++i) {
      REQUIRE(dh.detections.data()[i] <= dl.detections.data()[i]);
    }
  }
}

TEST_CASE("detections_to_cloud examples") {
  DetectionImage empty{BinaryRaster(199, 257, 0), spec_for(199, 257)};
  CHECK(detections_to_cloud(empty).empty());

  SonarSpec s = spec_for(199, 257);
  s.max_range = 20.0;  // bin 99 is centred on exactly 10 m; beam 128 has bearing 0
  DetectionImage one{BinaryRaster(199, 257, 0), s};
  one.detections(99, 128) = 1;
  const auto cloud = detections_to_cloud(one);
  REQUIRE(cloud.size() == 1);
  CHECK(cloud.points[0].x == doctest::Approx(10.0));
  CHECK(std::abs(cloud.points[0].y) < 1e-12);
  CHECK(cloud.frame_id == "sonar");
}

TEST_CASE("wall detections land near the wall") {
  WorldModel w;
  w.bounds_min = {-50, -50};
  w.bounds_max = {50, 50};
  w.structures.push_back(make_rectangle({15, -50}, {19, 50}, CellClass::Structure));
  const auto img = render(w, Pose2(0, 0, 0), {}, NoiseConfig{}, 3);
  const auto det = soca_cfar(img, CfarConfig{});
  const auto cloud = detections_to_cloud(det);
  REQUIRE(cloud.size() > 100);
  std::size_t near_wall = 0;
  for (const auto& p : cloud.points) near_wall += std::abs(p.x - 15.0) < 0.3 || std::abs(p.x - 30.0) < 1.0;
  CHECK(static_cast<double>(near_wall) / cloud.size() > 0.9);
}
