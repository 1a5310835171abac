#pragma once

#include <random>

#include "hsgs/hemisphere.hpp"
#include "hsgs/png_io.hpp"
#include "hsgs/pointcloud_render.hpp"

// Procedural desk-scale scene: a banded, checkered sphere resting on a compact
// checkered ground disc, photographed by a ring of reference cameras. Ground
// truth comes from a denser internal sampling of the same surfaces rendered
// through the point splatter, so every pixel has an in-artifact oracle.
// World up is +z; the sphere sits at the origin tangent to the disc. The disc
// radius and field of view are matched: every ground-truth view is ground-
// filled, while the sampling density stays high enough that renders of the
// sparse cloud supervise training instead of poisoning it.

namespace hsgs {

struct ToySceneSpec {
  uint64_t seed = 7;
  int point_count = 20000;
  double sphere_radius = 1.0;
  double ground_extent = 5.0;  // disc radius, world units
  double checker_size = 1.2;    // ground checker edge, world units
  int m_views = 4;              // reference ring
  int t_views = 8;              // held-out views, two elevations
  int width = 128, height = 128;
  int dense_factor = 20;        // ground-truth cloud densification

  void validate() const {
    require(point_count >= 1000, "toy scene: point_count must be >= 1000");
    require(m_views >= 2, "toy scene: m_views must be >= 2");
    require(t_views >= 0, "toy scene: t_views must be >= 0");
    require(width >= 32 && height >= 32, "toy scene: image size must be >= 32");
    require(sphere_radius > 0 && ground_extent > sphere_radius, "toy scene: bad geometry");
    require(checker_size > 0, "toy scene: checker_size must be > 0");
    require(dense_factor >= 1, "toy scene: dense_factor must be >= 1");
  }
};

namespace detail {

inline Eigen::Vector3f snap_color(double r, double g, double b) {
  return Eigen::Vector3f(from_byte(to_byte(r)), from_byte(to_byte(g)), from_byte(to_byte(b)));
}

inline Eigen::Vector3f sphere_color(const Vec3& p, double radius) {
  static const double palette[5][3] = {{0.85, 0.30, 0.25},
                                       {0.95, 0.75, 0.20},
                                       {0.25, 0.55, 0.85},
                                       {0.30, 0.70, 0.40},
                                       {0.90, 0.90, 0.88}};
  double zn = std::clamp(p.z() / radius, -1.0, 1.0);
  int band = std::min(5, static_cast<int>((zn + 1.0) * 3.0));  // 6 latitude bands
  double theta = std::atan2(p.y(), p.x()) + kPi;
  int wedge = std::min(11, static_cast<int>(theta / (2.0 * kPi) * 12.0));
  const double* c = palette[(band * 7 + wedge) % 5];
  return snap_color(c[0], c[1], c[2]);
}

inline Eigen::Vector3f ground_color(double x, double y, double checker) {
  long long ix = static_cast<long long>(std::floor(x / checker));
  long long iy = static_cast<long long>(std::floor(y / checker));
  bool odd = ((ix + iy) & 1) != 0;
  return odd ? snap_color(0.22, 0.28, 0.33) : snap_color(0.78, 0.74, 0.68);
}

// Sphere cap + disc sampler. The sphere holds a fixed share of the points:
// area-proportional sampling would starve the object the cameras orbit.
inline PointCloud sample_surfaces(const ToySceneSpec& spec, int count, uint64_t seed) {
  PointCloud cloud;
  cloud.positions.reserve(count);
  cloud.colors.reserve(count);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  int sphere_count = static_cast<int>(count * 0.45);
  for (int i = 0; i < sphere_count; ++i) {
    double z = 2.0 * uni(rng) - 1.0;
    double theta = 2.0 * kPi * uni(rng);
    double rxy = std::sqrt(std::max(0.0, 1.0 - z * z));
    Vec3 p = spec.sphere_radius * Vec3(rxy * std::cos(theta), rxy * std::sin(theta), z);
    cloud.positions.push_back(p.cast<float>());
    cloud.colors.push_back(sphere_color(p, spec.sphere_radius));
  }
  for (int i = sphere_count; i < count; ++i) {
    double r = spec.ground_extent * std::sqrt(uni(rng));
    double theta = 2.0 * kPi * uni(rng);
    double x = r * std::cos(theta), y = r * std::sin(theta);
    cloud.positions.push_back(
        Eigen::Vector3f(static_cast<float>(x), static_cast<float>(y),
                        static_cast<float>(-spec.sphere_radius)));
    cloud.colors.push_back(ground_color(x, y, spec.checker_size));
  }
  return cloud;
}

inline Intrinsics toy_intrinsics(const ToySceneSpec& spec) {
  Intrinsics k;
  k.width = spec.width;
  k.height = spec.height;
  k.fx = k.fy = 2.0 * spec.width;
  k.cx = (spec.width - 1) / 2.0;
  k.cy = (spec.height - 1) / 2.0;
  return k;
}

inline CameraPose toy_camera(const ToySceneSpec& spec, double azimuth_deg, double elevation_deg) {
  double az = azimuth_deg * kPi / 180.0;
  double el = elevation_deg * kPi / 180.0;
  double dist = 3.0 * std::sqrt(2.0) * spec.sphere_radius;
  Vec3 pos(dist * std::cos(el) * std::cos(az), dist * std::cos(el) * std::sin(az),
           dist * std::sin(el));
  return make_pose(pos, Vec3::Zero(), Vec3(0, 0, 1), toy_intrinsics(spec));
}

}  // namespace detail

// Reference ring: azimuths k*360/M degrees at 45 degrees elevation.
inline std::vector<CameraPose> toy_reference_poses(const ToySceneSpec& spec) {
  std::vector<CameraPose> poses;
  for (int k = 0; k < spec.m_views; ++k)
    poses.push_back(detail::toy_camera(spec, 360.0 * k / spec.m_views, 45.0));
  return poses;
}

// Held-out views: interleaved azimuths alternating between 40 and 65 degrees.
inline std::vector<CameraPose> toy_test_poses(const ToySceneSpec& spec) {
  std::vector<CameraPose> poses;
  for (int i = 0; i < spec.t_views; ++i) {
    double az = 360.0 * (i + 0.5) / spec.t_views;
    poses.push_back(detail::toy_camera(spec, az, i % 2 == 0 ? 40.0 : 65.0));
  }
  return poses;
}

// Writes cloud.ply, ref_poses.json, ref/view_*.png, test_poses.json,
// test/view_*.png, and scene.json (spec echo plus per-image mask coverage of
// the ground-truth renders). Deterministic per seed.
inline void generate_toy_scene(const ToySceneSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "ref", ec);
  fs::create_directories(out_dir / "test", ec);

  PointCloud cloud = detail::sample_surfaces(spec, spec.point_count, mix_seed(spec.seed, 1));
  save_ply(cloud, out_dir / "cloud.ply");

  PointCloud dense =
      detail::sample_surfaces(spec, spec.point_count * spec.dense_factor, mix_seed(spec.seed, 2));

  std::vector<CameraPose> refs = toy_reference_poses(spec);
  std::vector<CameraPose> tests = toy_test_poses(spec);
  save_poses(out_dir / "ref_poses.json", refs);
  save_poses(out_dir / "test_poses.json", tests);

  SplatConfig splat;
  splat.splat_radius = 1;

  nlohmann::ordered_json coverage;
  auto render_set = [&](const std::vector<CameraPose>& poses, const fs::path& dir,
                        const std::string& rel) {
    for (size_t i = 0; i < poses.size(); ++i) {
      RenderedImage img = render_points(dense, poses[i], splat);
      char name[32];
      std::snprintf(name, sizeof(name), "view_%04zu.png", i);
      save_png(dir / name, img.rgb);
      coverage[rel + "/" + name] =
          static_cast<double>(img.mask.count_valid()) /
          static_cast<double>(static_cast<size_t>(img.mask.width) * img.mask.height);
    }
  };
  render_set(refs, out_dir / "ref", "ref");
  render_set(tests, out_dir / "test", "test");

  nlohmann::ordered_json scene;
  scene["seed"] = spec.seed;
  scene["point_count"] = spec.point_count;
  scene["sphere_radius"] = spec.sphere_radius;
  scene["ground_extent"] = spec.ground_extent;
  scene["checker_size"] = spec.checker_size;
  scene["m_views"] = spec.m_views;
  scene["t_views"] = spec.t_views;
  scene["width"] = spec.width;
  scene["height"] = spec.height;
  scene["dense_factor"] = spec.dense_factor;
  scene["gt_valid_fraction"] = coverage;
  write_text_file(out_dir / "scene.json", scene.dump(2) + "\n");
}

}  // namespace hsgs
