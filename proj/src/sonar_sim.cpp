#include "sonar_oi/sonar_sim.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <random>

#include "sonar_oi/byte_io.hpp"
#include "sonar_oi/error.hpp"

namespace sonar_oi {

void SonarSpec::validate() const {
  if (!(fov > 0.0 && fov <= kPi)) throw InvalidArgument("SonarSpec: fov must lie in (0, pi]");
  if (n_beams < 2 || n_range_bins < 2) throw InvalidArgument("SonarSpec: need at least 2 beams and 2 range bins");
  if (!(max_range > 0.0)) throw InvalidArgument("SonarSpec: max_range must be positive");
  if (!(rate_hz > 0.0)) throw InvalidArgument("SonarSpec: rate must be positive");
}

void NoiseConfig::validate() const {
  if (speckle_sigma < 0 || background_level < 0 || p_second_return < 0 || dropout_prob < 0 ||
      second_return_gain < 0 || hit_gain < 0) {
    throw InvalidArgument("NoiseConfig: parameters must be non-negative");
  }
  if (p_second_return > 1.0 || dropout_prob > 1.0) throw InvalidArgument("NoiseConfig: probabilities exceed 1");
}

SonarPolarImage render(const WorldModel& world, const Pose2& pose, const SonarSpec& spec, const NoiseConfig& noise,
                       std::uint64_t rng_seed, double stamp) {
  spec.validate();
  noise.validate();
  SonarPolarImage img;
  img.spec = spec;
  img.stamp = stamp;
  img.true_pose = pose;
  img.intensities = Grid<float>(spec.n_range_bins, spec.n_beams, 0.0f);

  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double bin = spec.bin_width();

  for (int beam = 0; beam < spec.n_beams; ++beam) {
    const double bearing = spec.bearing_of_beam(beam);
    const auto hit = cast_ray(world, pose.translation(), pose.theta() + bearing, spec.max_range);
    if (!hit || hit->range >= spec.max_range) continue;
    if (noise.dropout_prob > 0.0 && unit(rng) < noise.dropout_prob) continue;
    const double range = std::max(hit->range, 0.5 * bin);
    double amplitude = noise.hit_gain / range;
    if (noise.speckle_sigma > 0.0) amplitude *= std::max(0.0, 1.0 + noise.speckle_sigma * normal(rng));
    const int row = std::min(static_cast<int>(range / bin), spec.n_range_bins - 1);
    img.intensities(row, beam) += static_cast<float>(amplitude);
    if (noise.p_second_return > 0.0 && unit(rng) < noise.p_second_return) {
      const double echo_range = std::min(2.0 * range, spec.max_range);
      const int echo_row = std::min(static_cast<int>(echo_range / bin), spec.n_range_bins - 1);
      img.intensities(echo_row, beam) += static_cast<float>(noise.second_return_gain * amplitude);
    }
  }

  if (noise.background_level > 0.0) {
    for (auto& v : img.intensities.data()) {
      // Rayleigh by inverse CDF; 1 - u keeps the log argument in (0, 1].
      const double u = unit(rng);
      v += static_cast<float>(noise.background_level * std::sqrt(-2.0 * std::log(1.0 - u)));
    }
  }
  return img;
}

void write_polar_image(const std::filesystem::path& path, const SonarPolarImage& img) {
  std::vector<std::uint8_t> buf{'S', 'P', 'I', '1'};
  bytes::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(img.intensities.rows()));
  bytes::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(img.intensities.cols()));
  bytes::put_f64(buf, img.spec.fov);
  bytes::put_f64(buf, img.spec.max_range);
  bytes::put_f64(buf, img.stamp);
  for (float v : img.intensities.data()) bytes::put_f32(buf, v);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("write_polar_image: cannot write " + path.string());
}

SonarPolarImage read_polar_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("read_polar_image: cannot open " + path.string());
  const std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  bytes::Reader rd(buf);
  const auto magic = rd.take(4);
  if (magic[0] != 'S' || magic[1] != 'P' || magic[2] != 'I' || magic[3] != '1') {
    throw Error("read_polar_image: bad magic in " + path.string());
  }
  SonarPolarImage img;
  const auto rows = rd.le<std::uint32_t>();
  const auto cols = rd.le<std::uint32_t>();
  img.spec.fov = rd.f64();
  img.spec.max_range = rd.f64();
  img.stamp = rd.f64();
  img.spec.n_range_bins = static_cast<int>(rows);
  img.spec.n_beams = static_cast<int>(cols);
  if (rd.remaining() != static_cast<std::size_t>(rows) * cols * 4) throw Error("read_polar_image: size mismatch");
  img.intensities = Grid<float>(static_cast<int>(rows), static_cast<int>(cols));
  for (auto& v : img.intensities.data()) v = rd.f32();
  return img;
}

}  // namespace sonar_oi
