#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"

using namespace hsgs;

TEST_CASE("quaternion rotation matches Eigen") {
  CHECK((quat_rotation(Vec4(1, 0, 0, 0)) - Mat3::Identity()).norm() < 1e-15);

  // 90 degrees about z maps x to y.
  double c = std::cos(kPi / 4), s = std::sin(kPi / 4);
  Mat3 r = quat_rotation(Vec4(c, 0, 0, s));
  CHECK((r * Vec3(1, 0, 0) - Vec3(0, 1, 0)).norm() < 1e-12);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 20; ++i) {
    Vec4 q(normal(rng), normal(rng), normal(rng), normal(rng));
    q.normalize();
    Eigen::Quaterniond eq(q[0], q[1], q[2], q[3]);
    CHECK((quat_rotation(q) - eq.toRotationMatrix()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("covariance eigenstructure follows scales and rotation") {
  // Isotropic: any rotation yields sigma^2 * I.
  Vec4 q(0.4, -0.3, 0.7, 0.2);
  double sigma = 0.05;
  Mat3 iso = covariance_3d(q, Vec3::Constant(std::log(sigma)));
  CHECK((iso - sigma * sigma * Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);

  // Identity rotation: covariance is diag(exp(2s)).
  Vec3 s(std::log(0.1), std::log(0.2), std::log(0.4));
  Mat3 diag = covariance_3d(Vec4(1, 0, 0, 0), s);
  CHECK((diag - Vec3(0.01, 0.04, 0.16).asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff() <
        1e-12);

  // Non-unit quaternions are normalized before use.
  Mat3 scaled = covariance_3d(3.0 * q, Vec3::Constant(std::log(sigma)));
  CHECK((scaled - iso).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("scene extent is the max distance from the centroid") {
  GaussianCloud cloud;
  cloud.gaussians.resize(2);
  cloud.gaussians[0].mu = Vec3(0, 0, 0);
  cloud.gaussians[1].mu = Vec3(2, 0, 0);
  CHECK(scene_extent(cloud) == Catch::Approx(1.0).margin(1e-15));
  cloud.gaussians.push_back(cloud.gaussians[0]);
  cloud.gaussians[2].mu = Vec3(0, 3, 0);
  // centroid (2/3, 1, 0); farthest is (0, 3, 0).
  CHECK(scene_extent(cloud) ==
        Catch::Approx((Vec3(0, 3, 0) - Vec3(2.0 / 3, 1, 0)).norm()).margin(1e-12));
}

TEST_CASE("point initialization reproduces colors and neighbor scales") {
  PointCloud cloud;
  cloud.positions = {{0, 0, 0}, {1, 0, 0}, {0, 2, 0}, {0, 0, 4}};
  cloud.colors = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0.5, 0.5, 0.5}};

  GaussianCloud g = init_from_pointcloud(cloud);
  REQUIRE(g.size() == 4);
  CHECK(g.sh_degree == 0);

  for (size_t i = 0; i < 4; ++i) {
    CHECK((g.gaussians[i].mu - cloud.positions[i].cast<double>()).norm() == 0.0);
    CHECK(sigmoid(g.gaussians[i].o) == Catch::Approx(0.1).margin(1e-12));
    CHECK((g.gaussians[i].q - Vec4(1, 0, 0, 0)).norm() == 0.0);
    for (int c = 0; c < 3; ++c) {
      double dc = 0.5 + kSh0 * g.gaussians[i].sh[c];
      CHECK(dc == Catch::Approx(static_cast<double>(cloud.colors[i][c])).margin(1e-12));
    }
  }

  // Point 0 neighbors sit at distances 1, 2, 4.
  CHECK(g.gaussians[0].s[0] == Catch::Approx(std::log((1.0 + 2.0 + 4.0) / 3)).margin(1e-12));
  CHECK(g.gaussians[0].s[0] == g.gaussians[0].s[1]);

  // A single point falls back to the default footprint.
  PointCloud lone;
  lone.positions = {{0, 0, 0}};
  lone.colors = {{1, 1, 1}};
  GaussianCloud lg = init_from_pointcloud(lone);
  CHECK(lg.gaussians[0].s[0] == Catch::Approx(std::log(1e-2)).margin(1e-12));
}

TEST_CASE("point initialization subsampling is deterministic and ordered") {
  PointCloud cloud = testutil::random_cloud(500, 21);
  GaussianCloud a = init_from_pointcloud(cloud, 100, 7);
  GaussianCloud b = init_from_pointcloud(cloud, 100, 7);
  GaussianCloud c = init_from_pointcloud(cloud, 100, 8);
  REQUIRE(a.size() == 100);
  bool same = true, differs = false;
  for (size_t i = 0; i < 100; ++i) {
    same = same && (a.gaussians[i].mu - b.gaussians[i].mu).norm() == 0.0;
    differs = differs || (a.gaussians[i].mu - c.gaussians[i].mu).norm() != 0.0;
  }
  CHECK(same);
  CHECK(differs);

  // Selected subset preserves the input order (positions strictly ordered by
  // first occurrence in the cloud).
  std::vector<Eigen::Vector3f> order(cloud.positions);
  size_t cursor = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    Vec3 mu = a.gaussians[i].mu;
    while (cursor < order.size() && (order[cursor].cast<double>() - mu).norm() != 0.0) ++cursor;
    REQUIRE(cursor < order.size());
    ++cursor;
  }

  // target >= size keeps everything.
  CHECK(init_from_pointcloud(cloud, 500).size() == 500);
  CHECK(init_from_pointcloud(cloud, 1000).size() == 500);
  CHECK(init_from_pointcloud(cloud, 0).size() == 500);

  CHECK_THROWS_AS(init_from_pointcloud(cloud, 10, 0, 2), ValidationError);
}

TEST_CASE("sh degree 1 reserves zeroed higher coefficients") {
  PointCloud cloud = testutil::random_cloud(10, 3);
  GaussianCloud g = init_from_pointcloud(cloud, 0, 0, 1);
  CHECK(g.sh_degree == 1);
  CHECK(g.coeff_count() == 4);
  for (const Gaussian& gg : g.gaussians)
    for (int k = 3; k < 12; ++k) CHECK(gg.sh[k] == 0.0);
}

TEST_CASE("checkpoint round trip is bit exact") {
  testutil::TempDir tmp("ckpt");
  PointCloud points = testutil::random_cloud(32, 4);
  GaussianCloud cloud = init_from_pointcloud(points, 0, 0, 1);
  // Perturb every field so the round trip exercises arbitrary doubles.
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  for (Gaussian& g : cloud.gaussians) {
    g.q = Vec4(normal(rng), normal(rng), normal(rng), normal(rng));
    if (g.q.norm() < 1e-6) g.q = Vec4(1, 0, 0, 0);
    g.o = normal(rng);
    for (int k = 0; k < 12; ++k) g.sh[k] = normal(rng);
  }

  save_checkpoint(cloud, tmp / "model.ckpt");
  GaussianCloud back = load_checkpoint(tmp / "model.ckpt");
  REQUIRE(back.size() == cloud.size());
  CHECK(back.sh_degree == 1);
  for (size_t i = 0; i < cloud.size(); ++i) {
    CHECK((back.gaussians[i].mu - cloud.gaussians[i].mu).norm() == 0.0);
    CHECK((back.gaussians[i].q - cloud.gaussians[i].q).norm() == 0.0);
    CHECK((back.gaussians[i].s - cloud.gaussians[i].s).norm() == 0.0);
    CHECK(back.gaussians[i].o == cloud.gaussians[i].o);
    CHECK(back.gaussians[i].sh == cloud.gaussians[i].sh);
  }

  // Saving again yields identical bytes.
  save_checkpoint(back, tmp / "again.ckpt");
  CHECK(testutil::read_file(tmp / "model.ckpt") == testutil::read_file(tmp / "again.ckpt"));
}

TEST_CASE("checkpoint loader rejects malformed files") {
  testutil::TempDir tmp("ckpt_bad");
  PointCloud points = testutil::random_cloud(4, 4);
  GaussianCloud cloud = init_from_pointcloud(points);
  save_checkpoint(cloud, tmp / "model.ckpt");
  std::string bytes = testutil::read_file(tmp / "model.ckpt");

  auto write_bytes = [&](const std::string& name, const std::string& content) {
    std::ofstream out(tmp / name, std::ios::binary);
    out << content;
  };

  write_bytes("magic.ckpt", "XSGS" + bytes.substr(4));
  CHECK_THROWS_AS(load_checkpoint(tmp / "magic.ckpt"), IoError);

  write_bytes("trunc.ckpt", bytes.substr(0, bytes.size() - 5));
  CHECK_THROWS_AS(load_checkpoint(tmp / "trunc.ckpt"), IoError);

  write_bytes("trail.ckpt", bytes + "xx");
  CHECK_THROWS_AS(load_checkpoint(tmp / "trail.ckpt"), IoError);

  std::string vers = bytes;
  vers[4] = 9;  // version field
  write_bytes("vers.ckpt", vers);
  CHECK_THROWS_AS(load_checkpoint(tmp / "vers.ckpt"), IoError);

  CHECK_THROWS_AS(load_checkpoint(tmp / "missing.ckpt"), IoError);
}
