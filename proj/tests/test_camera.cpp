#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"

using namespace hsgs;
using testutil::simple_intrinsics;

TEST_CASE("look_at produces a right-handed world-to-camera basis") {
  Intrinsics k = simple_intrinsics(64, 64, 100.0);
  CameraPose pose = make_pose(Vec3(0, 0, -5), Vec3::Zero(), Vec3(0, 1, 0), k);

  CHECK((pose.rotation * pose.rotation.transpose() - Mat3::Identity()).norm() < 1e-12);
  CHECK(pose.rotation.determinant() == Catch::Approx(1.0).margin(1e-12));

  // Looking down +z with world-y up: right is -x, down is -y, forward is +z.
  CHECK((pose.forward_axis() - Vec3(0, 0, 1)).norm() < 1e-12);
  CHECK((pose.right_axis() - Vec3(-1, 0, 0)).norm() < 1e-12);
  CHECK((pose.down_axis() - Vec3(0, -1, 0)).norm() < 1e-12);
}

TEST_CASE("look_at rejects degenerate directions") {
  Intrinsics k = simple_intrinsics(64, 64, 100.0);
  CHECK_THROWS_AS(make_pose(Vec3(0, 0, -5), Vec3(0, 0, -5), Vec3(0, 1, 0), k), ValidationError);
  CHECK_THROWS_AS(make_pose(Vec3(0, 0, -5), Vec3::Zero(), Vec3(0, 0, 1), k), ValidationError);
}

TEST_CASE("projection matches the pinhole model") {
  Intrinsics k = simple_intrinsics(65, 65, 100.0);  // cx = cy = 32
  CameraPose pose = make_pose(Vec3(0, 0, -5), Vec3::Zero(), Vec3(0, 1, 0), k);

  auto center = project(pose, Vec3::Zero());
  REQUIRE(center.has_value());
  CHECK(center->u == Catch::Approx(32.0).margin(1e-12));
  CHECK(center->v == Catch::Approx(32.0).margin(1e-12));
  CHECK(center->depth == Catch::Approx(5.0).margin(1e-12));

  // Camera coords of (0.1, 0.2, 0) are (-0.1, -0.2, 5).
  auto p = project(pose, Vec3(0.1, 0.2, 0));
  REQUIRE(p.has_value());
  CHECK(p->u == Catch::Approx(30.0).margin(1e-12));
  CHECK(p->v == Catch::Approx(28.0).margin(1e-12));

  CHECK_FALSE(project(pose, Vec3(0, 0, -6)).has_value());  // behind the camera
  CHECK_FALSE(project(pose, Vec3(0, 0, -5)).has_value());  // at the camera
}

TEST_CASE("unproject inverts project") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(-2.0, 2.0);
  Intrinsics k = simple_intrinsics(48, 36, 70.0);
  for (int trial = 0; trial < 20; ++trial) {
    Vec3 eye(uni(rng), uni(rng), uni(rng) - 6.0);
    CameraPose pose = make_pose(eye, Vec3(uni(rng), uni(rng), uni(rng)), Vec3(0, 1, 0), k);
    Vec3 point = pose.position + 4.0 * pose.forward_axis() + Vec3(uni(rng), uni(rng), uni(rng));
    auto px = project(pose, point);
    REQUIRE(px.has_value());
    Vec3 back = unproject(pose, px->u, px->v, px->depth);
    CHECK((back - point).norm() < 1e-9);

    Ray ray = pixel_ray(pose, px->u, px->v);
    CHECK((ray.origin - pose.position).norm() < 1e-12);
    CHECK((ray.direction - (point - pose.position).normalized()).norm() < 1e-9);
  }
}

TEST_CASE("scene center recovers a common look-at target") {
  Intrinsics k = simple_intrinsics(64, 64, 100.0);
  Vec3 target(0.3, -0.2, 1.1);
  std::vector<CameraPose> poses;
  poses.push_back(make_pose(target + Vec3(4, 1, 0.5), target, Vec3(0, 0, 1), k));
  poses.push_back(make_pose(target + Vec3(-3, 2, 1), target, Vec3(0, 0, 1), k));
  poses.push_back(make_pose(target + Vec3(0.5, -4, 2), target, Vec3(0, 0, 1), k));
  CHECK((estimate_scene_center(poses) - target).norm() < 1e-9);
}

TEST_CASE("scene center of skew axes is the least-squares point") {
  // Axis A runs along x through the origin; axis B runs along z through
  // (0, 1, 0). Summed squared distance (y^2 + z^2) + (x^2 + (y-1)^2) is
  // minimized at (0, 0.5, 0).
  Intrinsics k = simple_intrinsics(64, 64, 100.0);
  CameraPose a;
  a.rotation.row(0) = Vec3(0, 1, 0);
  a.rotation.row(1) = Vec3(0, 0, 1);
  a.rotation.row(2) = Vec3(1, 0, 0);
  a.position = Vec3::Zero();
  a.intrinsics = k;
  CameraPose b;
  b.rotation = Mat3::Identity();
  b.position = Vec3(0, 1, 0);
  b.intrinsics = k;

  Vec3 center = estimate_scene_center({a, b});
  CHECK((center - Vec3(0, 0.5, 0)).norm() < 1e-12);
}

TEST_CASE("scene center rejects degenerate inputs") {
  Intrinsics k = simple_intrinsics(64, 64, 100.0);
  CameraPose a = make_pose(Vec3(0, 0, -5), Vec3::Zero(), Vec3(0, 1, 0), k);
  CameraPose b = a;
  b.position = Vec3(0.5, 0, -5);  // parallel axes

  CHECK_THROWS_AS(estimate_scene_center({a}), ValidationError);
  CHECK_THROWS_AS(estimate_scene_center({a, b}), NearParallelError);
  // NearParallelError is a ValidationError, so both handlers work.
  CHECK_THROWS_AS(estimate_scene_center({a, b}), ValidationError);
}

TEST_CASE("pose JSON round trip is exact") {
  Intrinsics k = simple_intrinsics(80, 60, 123.5);
  CameraPose pose = make_pose(Vec3(1.5, -2.25, 3.75), Vec3(0.1, 0.2, 0.3), Vec3(0, 0, 1), k);
  CameraPose back = pose_from_json(pose_to_json(pose));
  CHECK((back.rotation - pose.rotation).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((back.position - pose.position).norm() == 0.0);
  CHECK(back.intrinsics.fx == pose.intrinsics.fx);
  CHECK(back.intrinsics.width == pose.intrinsics.width);
}

TEST_CASE("pose JSON rejects malformed input") {
  Intrinsics k = simple_intrinsics(64, 64, 100.0);
  CameraPose pose = make_pose(Vec3(0, 0, -5), Vec3::Zero(), Vec3(0, 1, 0), k);
  nlohmann::ordered_json good = pose_to_json(pose);

  auto mutate = [&](auto fn) {
    nlohmann::ordered_json j = good;
    fn(j);
    return j;
  };

  CHECK_THROWS_AS(pose_from_json(mutate([](auto& j) { j.erase("fx"); })), ValidationError);
  CHECK_THROWS_AS(pose_from_json(mutate([](auto& j) { j["rotation"].erase(8); })),
                  ValidationError);
  CHECK_THROWS_AS(pose_from_json(mutate([](auto& j) { j["rotation"][0] = 5.0; })),
                  ValidationError);
  // A reflection is orthonormal but flips handedness.
  CHECK_THROWS_AS(pose_from_json(mutate([](auto& j) {
                    j["rotation"] = {1, 0, 0, 0, 1, 0, 0, 0, -1};
                  })),
                  ValidationError);

  // Mild numeric noise is snapped back to an exact rotation.
  nlohmann::ordered_json noisy = good;
  noisy["rotation"][0] = noisy["rotation"][0].get<double>() + 3e-8;
  CameraPose snapped = pose_from_json(noisy);
  CHECK((snapped.rotation * snapped.rotation.transpose() - Mat3::Identity()).norm() < 1e-12);
}

TEST_CASE("pose list files round trip") {
  testutil::TempDir tmp("poses");
  Intrinsics k = simple_intrinsics(32, 32, 40.0);
  std::vector<CameraPose> poses;
  poses.push_back(make_pose(Vec3(3, 0, 1), Vec3::Zero(), Vec3(0, 0, 1), k));
  poses.push_back(make_pose(Vec3(0, 3, 2), Vec3::Zero(), Vec3(0, 0, 1), k));
  save_poses(tmp / "poses.json", poses);
  std::vector<CameraPose> back = load_poses(tmp / "poses.json");
  REQUIRE(back.size() == 2);
  CHECK((back[1].position - poses[1].position).norm() == 0.0);

  CHECK_THROWS_AS(load_poses(tmp / "missing.json"), IoError);
  write_text_file(tmp / "object.json", "{}\n");
  CHECK_THROWS_AS(load_poses(tmp / "object.json"), ValidationError);
  write_text_file(tmp / "garbage.json", "not json\n");
  CHECK_THROWS_AS(load_poses(tmp / "garbage.json"), IoError);
}
