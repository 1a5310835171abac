#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "hsgs/camera.hpp"
#include "hsgs/common.hpp"

// Synthetic camera placement on the upper hemisphere around a scene, plus a
// closed-loop trajectory baseline. Level 1 is the highest elevation ring and
// holds the fewest views; counts follow consecutive Fibonacci numbers.

namespace hsgs {

struct HemisphereConfig {
  int levels = 5;
  double tau = 0.8;                 // max elevation = tau * pi/2
  std::optional<Vec3> center;       // default: least-squares from reference axes
  double radius = 0;                // <= 0 means mean reference distance to center
  std::optional<Vec3> up;           // default: mean reference up axis
  double azimuth_offset = 0;        // radians added to every theta
  int fib_start = 3;                // level 1 count = fibonacci_count(fib_start)

  void validate() const {
    require(levels >= 1, "hemisphere: levels must be >= 1");
    require(tau > 0 && tau <= 1, "hemisphere: tau must be in (0, 1]");
    require(fib_start >= 1, "hemisphere: fib_start must be >= 1");
    require(std::isfinite(azimuth_offset), "hemisphere: azimuth_offset must be finite");
    if (up) require(std::abs(up->norm() - 1.0) < 1e-6, "hemisphere: up must be unit length");
  }
};

struct SampledPoseSet {
  std::vector<CameraPose> poses;
  std::vector<int> level_of;    // elevation level, 1-based, 1 = highest
  std::vector<Vec3> spherical;  // per pose: (radius, theta, phi)
};

// Sequence 1, 2, 3, 5, 8, 13, ...: F(1)=1, F(2)=2, F(n)=F(n-1)+F(n-2).
inline uint64_t fibonacci_count(int index) {
  require(index >= 1, "fibonacci_count: index must be >= 1");
  uint64_t a = 1, b = 2;
  if (index == 1) return a;
  for (int i = 2; i < index; ++i) {
    uint64_t next = a + b;
    require(next >= b, "fibonacci_count: overflow");
    a = b;
    b = next;
  }
  return b;
}

// View count per level; level 1 (highest elevation) gets the fewest.
inline std::vector<uint64_t> level_counts(const HemisphereConfig& config) {
  config.validate();
  std::vector<uint64_t> counts(config.levels);
  for (int l = 1; l <= config.levels; ++l)
    counts[l - 1] = fibonacci_count(config.fib_start + l - 1);
  return counts;
}

// Unit vector orthogonal to `up`, chosen deterministically.
inline Vec3 orthogonal_unit(const Vec3& up) {
  Vec3 seed = std::abs(up.x()) < 0.9 ? Vec3(1, 0, 0) : Vec3(0, 1, 0);
  Vec3 e1 = seed - seed.dot(up) * up;
  return e1.normalized();
}

// Mean of the reference cameras' up axes (the negated +y rows), normalized.
inline Vec3 mean_reference_up(const std::vector<CameraPose>& refs) {
  require(!refs.empty(), "mean_reference_up: no reference poses");
  Vec3 sum = Vec3::Zero();
  for (const CameraPose& pose : refs) sum -= pose.down_axis();
  double norm = sum.norm();
  require(norm > 1e-9, "mean_reference_up: reference up axes cancel out");
  return sum / norm;
}

namespace detail {

// look_at with a deterministic fallback hint for the zenith pose, where the
// view direction is parallel to `up`.
inline Mat3 look_at_center(const Vec3& position, const Vec3& center, const Vec3& up) {
  try {
    return look_at(position, center, up);
  } catch (const ValidationError&) {
    return look_at(position, center, orthogonal_unit(up));
  }
}

}  // namespace detail

// Poses on the upper hemisphere: level l in [1, L] at elevation
// phi = (tau*pi / 2L) * (L - l + 1), azimuths theta = 2*pi*(k-1)/count_l
// plus azimuth_offset. Level-major order, k ascending. Intrinsics come from
// refs[0].
inline SampledPoseSet sample_poses(const HemisphereConfig& config,
                                   const std::vector<CameraPose>& refs) {
  config.validate();
  require(!refs.empty(), "sample_poses: reference poses required");

  Vec3 up = config.up ? *config.up : mean_reference_up(refs);
  up.normalize();
  Vec3 center = config.center ? *config.center : estimate_scene_center(refs);
  double radius = config.radius;
  if (radius <= 0) {
    radius = 0;
    for (const CameraPose& pose : refs) radius += (pose.position - center).norm();
    radius /= static_cast<double>(refs.size());
  }
  require(radius > 0, "sample_poses: radius must be positive");

  Vec3 e1 = orthogonal_unit(up);
  Vec3 e2 = up.cross(e1);

  std::vector<uint64_t> counts = level_counts(config);
  SampledPoseSet set;
  for (int l = 1; l <= config.levels; ++l) {
    double phi = config.tau * kPi / (2.0 * config.levels) * (config.levels - l + 1);
    uint64_t count = counts[l - 1];
    for (uint64_t k = 1; k <= count; ++k) {
      double theta =
          2.0 * kPi * static_cast<double>(k - 1) / static_cast<double>(count) +
          config.azimuth_offset;
      Vec3 position = center + radius * (std::cos(phi) * (std::cos(theta) * e1 +
                                                          std::sin(theta) * e2) +
                                         std::sin(phi) * up);
      CameraPose pose;
      pose.rotation = detail::look_at_center(position, center, up);
      pose.position = position;
      pose.intrinsics = refs[0].intrinsics;
      set.poses.push_back(pose);
      set.level_of.push_back(l);
      set.spherical.emplace_back(radius, theta, phi);
    }
  }
  return set;
}

// Baseline sampler: n poses linearly interpolated along the closed loop of
// reference positions ordered by azimuth about `center`, re-projected onto
// the sphere of the references' mean radius. All poses look at `center`.
inline SampledPoseSet trajectory_sample(const std::vector<CameraPose>& refs, int n,
                                        const Vec3& center,
                                        std::optional<Vec3> up_override = std::nullopt) {
  require(refs.size() >= 2, "trajectory_sample: need at least 2 reference poses");
  require(n >= 1, "trajectory_sample: n must be >= 1");

  Vec3 up = up_override ? up_override->normalized() : mean_reference_up(refs);
  Vec3 e1 = orthogonal_unit(up);
  Vec3 e2 = up.cross(e1);

  double radius = 0;
  for (const CameraPose& pose : refs) radius += (pose.position - center).norm();
  radius /= static_cast<double>(refs.size());
  require(radius > 1e-12, "trajectory_sample: reference cameras coincide with center");

  std::vector<size_t> order(refs.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> azimuth(refs.size());
  for (size_t i = 0; i < refs.size(); ++i) {
    Vec3 d = refs[i].position - center;
    azimuth[i] = std::atan2(d.dot(e2), d.dot(e1));
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return azimuth[a] < azimuth[b]; });

  const size_t m = refs.size();
  SampledPoseSet set;
  for (int i = 0; i < n; ++i) {
    double t = static_cast<double>(i) * static_cast<double>(m) / static_cast<double>(n);
    size_t seg = static_cast<size_t>(t) % m;
    double f = t - std::floor(t);
    const Vec3& a = refs[order[seg]].position;
    const Vec3& b = refs[order[(seg + 1) % m]].position;
    Vec3 raw = (1.0 - f) * a + f * b;
    Vec3 d = raw - center;
    require(d.norm() > 1e-12, "trajectory_sample: interpolated position hits the center");
    Vec3 position = center + radius * d.normalized();

    CameraPose pose;
    pose.rotation = detail::look_at_center(position, center, up);
    pose.position = position;
    pose.intrinsics = refs[0].intrinsics;
    set.poses.push_back(pose);
    set.level_of.push_back(1);
    Vec3 dir = position - center;
    double elev = std::asin(std::clamp(dir.normalized().dot(up), -1.0, 1.0));
    set.spherical.emplace_back(radius, std::atan2(dir.dot(e2), dir.dot(e1)), elev);
  }
  return set;
}

// Pose file with per-pose sampling metadata (level, theta, phi) appended to
// the standard camera fields; readable by load_poses, which ignores extras.
inline void save_sampled_poses(const std::filesystem::path& path, const SampledPoseSet& set) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (size_t i = 0; i < set.poses.size(); ++i) {
    nlohmann::ordered_json j = pose_to_json(set.poses[i]);
    j["level"] = set.level_of[i];
    j["theta"] = set.spherical[i].y();
    j["phi"] = set.spherical[i].z();
    arr.push_back(j);
  }
  write_text_file(path, arr.dump(2) + "\n");
}

}  // namespace hsgs
