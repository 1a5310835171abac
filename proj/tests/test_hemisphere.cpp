#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"

using namespace hsgs;
using testutil::simple_intrinsics;

namespace {

std::vector<CameraPose> ring_refs(const Vec3& center, double dist, double elev, int count) {
  Intrinsics k = simple_intrinsics(64, 48, 80.0);
  std::vector<CameraPose> refs;
  for (int i = 0; i < count; ++i) {
    double az = 2.0 * kPi * i / count;
    Vec3 pos = center + dist * Vec3(std::cos(elev) * std::cos(az), std::cos(elev) * std::sin(az),
                                    std::sin(elev));
    refs.push_back(make_pose(pos, center, Vec3(0, 0, 1), k));
  }
  return refs;
}

}  // namespace

TEST_CASE("fibonacci view counts") {
  CHECK(fibonacci_count(1) == 1);
  CHECK(fibonacci_count(2) == 2);
  CHECK(fibonacci_count(3) == 3);
  CHECK(fibonacci_count(4) == 5);
  CHECK(fibonacci_count(5) == 8);
  CHECK(fibonacci_count(6) == 13);
  CHECK(fibonacci_count(7) == 21);
  CHECK_THROWS_AS(fibonacci_count(0), ValidationError);
  CHECK_THROWS_AS(fibonacci_count(200), ValidationError);  // overflows uint64

  HemisphereConfig config;
  std::vector<uint64_t> counts = level_counts(config);
  CHECK(counts == std::vector<uint64_t>{3, 5, 8, 13, 21});
}

TEST_CASE("hemisphere samples follow the level/azimuth formulas exactly") {
  HemisphereConfig config;
  config.center = Vec3(0.5, -1.0, 0.25);
  config.radius = 2.5;
  config.up = Vec3(0, 0, 1);
  config.azimuth_offset = 0.3;

  std::vector<CameraPose> refs = ring_refs(*config.center, 2.5, 0.7, 3);
  SampledPoseSet set = sample_poses(config, refs);

  REQUIRE(set.poses.size() == 50);
  REQUIRE(set.level_of.size() == 50);
  REQUIRE(set.spherical.size() == 50);

  // Independent recomputation: with up = z the in-plane basis is (x, y).
  size_t idx = 0;
  std::vector<uint64_t> counts = {3, 5, 8, 13, 21};
  for (int l = 1; l <= 5; ++l) {
    double phi = 0.8 * kPi / 10.0 * (5 - l + 1);
    for (uint64_t k = 1; k <= counts[l - 1]; ++k, ++idx) {
      double theta = 2.0 * kPi * (k - 1) / counts[l - 1] + 0.3;
      Vec3 expected = *config.center +
                      2.5 * Vec3(std::cos(phi) * std::cos(theta), std::cos(phi) * std::sin(theta),
                                 std::sin(phi));
      INFO("level " << l << " k " << k);
      CHECK((set.poses[idx].position - expected).norm() < 1e-9);
      CHECK(set.level_of[idx] == l);
      CHECK(set.spherical[idx].x() == Catch::Approx(2.5).margin(1e-12));
      CHECK(set.spherical[idx].y() == Catch::Approx(theta).margin(1e-12));
      CHECK(set.spherical[idx].z() == Catch::Approx(phi).margin(1e-12));

      // Every sample looks at the center and inherits refs[0] intrinsics.
      Vec3 to_center = (*config.center - set.poses[idx].position).normalized();
      CHECK((set.poses[idx].forward_axis() - to_center).norm() < 1e-9);
      CHECK(set.poses[idx].intrinsics.width == refs[0].intrinsics.width);
    }
  }
  CHECK(idx == 50);

  // Level 1 sits at the highest elevation.
  CHECK(set.spherical[0].z() > set.spherical[49].z());
}

TEST_CASE("hemisphere defaults derive center, radius and up from references") {
  Vec3 center(1.0, 2.0, -0.5);
  std::vector<CameraPose> refs = ring_refs(center, 3.0, 0.6, 4);
  HemisphereConfig config;
  SampledPoseSet set = sample_poses(config, refs);
  for (const Vec3& sph : set.spherical) CHECK(sph.x() == Catch::Approx(3.0).margin(1e-6));
  for (const CameraPose& pose : set.poses)
    CHECK((pose.position - center).norm() == Catch::Approx(3.0).margin(1e-6));
}

TEST_CASE("hemisphere survives the zenith pose") {
  HemisphereConfig config;
  config.tau = 1.0;  // level 1 is exactly at the pole
  config.center = Vec3::Zero();
  config.radius = 2.0;
  config.up = Vec3(0, 0, 1);
  std::vector<CameraPose> refs = ring_refs(Vec3::Zero(), 2.0, 0.7, 3);
  SampledPoseSet set = sample_poses(config, refs);
  for (const CameraPose& pose : set.poses) pose.validate(1e-9);
  CHECK((set.poses[0].position - Vec3(0, 0, 2)).norm() < 1e-9);
}

TEST_CASE("hemisphere config validation") {
  std::vector<CameraPose> refs = ring_refs(Vec3::Zero(), 2.0, 0.7, 3);
  HemisphereConfig config;
  config.levels = 0;
  CHECK_THROWS_AS(sample_poses(config, refs), ValidationError);
  config = {};
  config.tau = 1.5;
  CHECK_THROWS_AS(sample_poses(config, refs), ValidationError);
  config = {};
  CHECK_THROWS_AS(sample_poses(config, {}), ValidationError);
}

TEST_CASE("trajectory interpolates the reference loop at fixed radius") {
  Vec3 center(0.2, 0.1, 0.0);
  std::vector<CameraPose> refs = ring_refs(center, 2.0, 0.5, 4);
  SampledPoseSet set = trajectory_sample(refs, 8, center, Vec3(0, 0, 1));

  REQUIRE(set.poses.size() == 8);
  for (size_t i = 0; i < set.poses.size(); ++i) {
    CHECK((set.poses[i].position - center).norm() == Catch::Approx(2.0).margin(1e-9));
    CHECK(set.level_of[i] == 1);
    Vec3 to_center = (center - set.poses[i].position).normalized();
    CHECK((set.poses[i].forward_axis() - to_center).norm() < 1e-9);
  }

  // n = 2m lands alternately on references and midpoints. Azimuths from
  // atan2 put refs[3] (at -pi/2) first in the loop.
  CHECK((set.poses[0].position - refs[3].position).norm() < 1e-9);
  Vec3 mid = (refs[3].position + refs[0].position) / 2.0 - center;
  Vec3 mid_on_sphere = center + 2.0 * mid.normalized();
  CHECK((set.poses[1].position - mid_on_sphere).norm() < 1e-9);

  CHECK_THROWS_AS(trajectory_sample({refs[0]}, 4, center), ValidationError);
  CHECK_THROWS_AS(trajectory_sample(refs, 0, center), ValidationError);
}

TEST_CASE("sampled pose files load as plain pose lists") {
  testutil::TempDir tmp("sampled");
  std::vector<CameraPose> refs = ring_refs(Vec3::Zero(), 2.0, 0.6, 3);
  HemisphereConfig config;
  config.levels = 2;
  SampledPoseSet set = sample_poses(config, refs);
  save_sampled_poses(tmp / "sampled.json", set);

  std::vector<CameraPose> loaded = load_poses(tmp / "sampled.json");
  REQUIRE(loaded.size() == set.poses.size());
  for (size_t i = 0; i < loaded.size(); ++i)
    CHECK((loaded[i].position - set.poses[i].position).norm() < 1e-12);

  nlohmann::json raw = read_json_file(tmp / "sampled.json");
  CHECK(raw[0].contains("level"));
  CHECK(raw[0].contains("theta"));
  CHECK(raw[0].contains("phi"));
}
