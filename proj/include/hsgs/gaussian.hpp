#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "hsgs/common.hpp"
#include "hsgs/ply.hpp"

// 3D Gaussian representation. Parameters are stored unconstrained so the
// optimizer works on all of R^n: scales in log space, opacity as a logit.
// Quaternions are (w, x, y, z) and may drift off unit length between steps;
// every consumer normalizes before use.

namespace hsgs {

inline constexpr double kSh0 = 0.28209479177387814;  // 1 / (2*sqrt(pi))
inline constexpr double kSh1 = 0.4886025119029199;   // sqrt(3) / (2*sqrt(pi))
inline constexpr double kMinScale = 1e-7;
inline constexpr double kMaxScale = 1e3;

struct Gaussian {
  Vec3 mu = Vec3::Zero();
  Vec4 q = Vec4(1, 0, 0, 0);
  Vec3 s = Vec3::Zero();                 // log scales
  double o = 0;                          // opacity logit
  std::array<double, 12> sh{};           // RGB triples per SH coefficient
};

struct GaussianCloud {
  int sh_degree = 0;  // 0 or 1
  std::vector<Gaussian> gaussians;

  size_t size() const { return gaussians.size(); }
  int coeff_count() const { return sh_degree == 0 ? 1 : 4; }

  void validate() const {
    require(!gaussians.empty(), "gaussian cloud: must contain at least one Gaussian");
    require(sh_degree == 0 || sh_degree == 1, "gaussian cloud: sh_degree must be 0 or 1");
    for (const Gaussian& g : gaussians) {
      require(g.mu.allFinite() && g.q.allFinite() && g.s.allFinite() && std::isfinite(g.o),
              "gaussian cloud: non-finite parameter");
      require(g.q.norm() > 1e-12, "gaussian cloud: zero quaternion");
    }
  }
};

// Per-parameter partials, same layout as GaussianCloud.
struct GaussianGrad {
  Vec3 mu = Vec3::Zero();
  Vec4 q = Vec4::Zero();
  Vec3 s = Vec3::Zero();
  double o = 0;
  std::array<double, 12> sh{};
};

struct GradientBuffer {
  std::vector<GaussianGrad> grads;

  explicit GradientBuffer(size_t n = 0) : grads(n) {}
  size_t size() const { return grads.size(); }

  void accumulate(const GradientBuffer& other) {
    require(grads.size() == other.grads.size(), "gradient buffer: shape mismatch");
    for (size_t i = 0; i < grads.size(); ++i) {
      grads[i].mu += other.grads[i].mu;
      grads[i].q += other.grads[i].q;
      grads[i].s += other.grads[i].s;
      grads[i].o += other.grads[i].o;
      for (int j = 0; j < 12; ++j) grads[i].sh[j] += other.grads[i].sh[j];
    }
  }
};

inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Rotation matrix of a unit quaternion (w, x, y, z); columns are the rotated
// basis vectors.
inline Mat3 quat_rotation(const Vec4& q) {
  double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

// Sigma = R * diag(exp(s))^2 * R^T; eigenvalues are exp(2s).
inline Mat3 covariance_3d(const Vec4& q, const Vec3& s) {
  Vec4 qn = q / q.norm();
  Mat3 r = quat_rotation(qn);
  Vec3 e2 = (2.0 * s).array().exp();
  return r * e2.asDiagonal() * r.transpose();
}

// Max distance from the centroid of means; used to scale position step sizes.
inline double scene_extent(const GaussianCloud& cloud) {
  Vec3 centroid = Vec3::Zero();
  for (const Gaussian& g : cloud.gaussians) centroid += g.mu;
  centroid /= static_cast<double>(cloud.size());
  double ext = 0;
  for (const Gaussian& g : cloud.gaussians) ext = std::max(ext, (g.mu - centroid).norm());
  return ext;
}

// Gaussians seeded from points: DC color matching the point color, isotropic
// scale from the mean distance to the 3 nearest sampled neighbors, opacity
// 0.1, identity rotation. Subsampling to target_count (when 0 < target_count
// < point count) is a seeded partial Fisher-Yates draw, so the result is
// deterministic for a fixed seed.
inline GaussianCloud init_from_pointcloud(const PointCloud& cloud, size_t target_count = 0,
                                          uint64_t seed = 0, int sh_degree = 0) {
  cloud.validate();
  require(sh_degree == 0 || sh_degree == 1, "init_from_pointcloud: sh_degree must be 0 or 1");
  const size_t n = cloud.size();
  size_t keep = (target_count == 0 || target_count >= n) ? n : target_count;

  std::vector<size_t> picked(n);
  std::iota(picked.begin(), picked.end(), 0);
  if (keep < n) {
    std::mt19937_64 rng(seed);
    for (size_t i = 0; i < keep; ++i) {
      std::uniform_int_distribution<size_t> dist(i, n - 1);
      std::swap(picked[i], picked[dist(rng)]);
    }
    picked.resize(keep);
    std::sort(picked.begin(), picked.end());
  }

  std::vector<Vec3> pos(keep);
  for (size_t i = 0; i < keep; ++i) pos[i] = cloud.positions[picked[i]].cast<double>();

  GaussianCloud out;
  out.sh_degree = sh_degree;
  out.gaussians.resize(keep);
  for (size_t i = 0; i < keep; ++i) {
    // Three smallest neighbor distances by direct scan.
    double best[3] = {std::numeric_limits<double>::infinity(),
                      std::numeric_limits<double>::infinity(),
                      std::numeric_limits<double>::infinity()};
    for (size_t j = 0; j < keep; ++j) {
      if (j == i) continue;
      double d = (pos[j] - pos[i]).norm();
      if (d < best[0]) {
        best[2] = best[1];
        best[1] = best[0];
        best[0] = d;
      } else if (d < best[1]) {
        best[2] = best[1];
        best[1] = d;
      } else if (d < best[2]) {
        best[2] = d;
      }
    }
    double sum = 0;
    int cnt = 0;
    for (double d : best)
      if (std::isfinite(d)) {
        sum += d;
        ++cnt;
      }
    // Isolated single point: fall back to a desk-scale default footprint.
    double mean_dist = cnt > 0 ? sum / cnt : 1e-2;
    mean_dist = std::clamp(mean_dist, kMinScale, kMaxScale);

    Gaussian& g = out.gaussians[i];
    g.mu = pos[i];
    g.s = Vec3::Constant(std::log(mean_dist));
    g.o = logit(0.1);
    const auto& color = cloud.colors[picked[i]];
    for (int c = 0; c < 3; ++c) g.sh[c] = (static_cast<double>(color[c]) - 0.5) / kSh0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint format: "HSGS" magic, u32 version, u32 sh_degree, u64 count,
// then per Gaussian mu(3), q(4), s(3), o(1), sh(3*coeffs) as little-endian
// doubles.

inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const GaussianCloud& cloud, const std::filesystem::path& path) {
  cloud.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");

  out.write("HSGS", 4);
  auto write_u32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto write_u64 = [&](uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
  auto write_f64 = [&](double v) { out.write(reinterpret_cast<const char*>(&v), 8); };

  write_u32(kCheckpointVersion);
  write_u32(static_cast<uint32_t>(cloud.sh_degree));
  write_u64(cloud.size());
  const int coeffs = cloud.coeff_count();
  for (const Gaussian& g : cloud.gaussians) {
    for (int i = 0; i < 3; ++i) write_f64(g.mu[i]);
    for (int i = 0; i < 4; ++i) write_f64(g.q[i]);
    for (int i = 0; i < 3; ++i) write_f64(g.s[i]);
    write_f64(g.o);
    for (int i = 0; i < 3 * coeffs; ++i) write_f64(g.sh[i]);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

inline GaussianCloud load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "HSGS")
    throw IoError(path.string() + ": not a checkpoint (bad magic)");
  auto read_u32 = [&]() {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  auto read_u64 = [&]() {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };

  uint32_t version = read_u32();
  if (version != kCheckpointVersion)
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  uint32_t sh_degree = read_u32();
  if (sh_degree > 1) throw IoError(path.string() + ": unsupported sh_degree");
  uint64_t count = read_u64();
  if (!in || count == 0) throw IoError(path.string() + ": empty or truncated checkpoint");

  GaussianCloud cloud;
  cloud.sh_degree = static_cast<int>(sh_degree);
  cloud.gaussians.resize(count);
  const int coeffs = cloud.coeff_count();
  std::vector<double> rec(11 + 3 * static_cast<size_t>(coeffs));
  for (uint64_t k = 0; k < count; ++k) {
    in.read(reinterpret_cast<char*>(rec.data()),
            static_cast<std::streamsize>(rec.size() * sizeof(double)));
    if (!in)
      throw IoError(path.string() + ": truncated at gaussian " + std::to_string(k));
    Gaussian& g = cloud.gaussians[k];
    g.mu = Vec3(rec[0], rec[1], rec[2]);
    g.q = Vec4(rec[3], rec[4], rec[5], rec[6]);
    g.s = Vec3(rec[7], rec[8], rec[9]);
    g.o = rec[10];
    for (int i = 0; i < 3 * coeffs; ++i) g.sh[i] = rec[11 + i];
  }
  char extra;
  if (in.read(&extra, 1))
    throw IoError(path.string() + ": trailing bytes after checkpoint payload");
  cloud.validate();
  return cloud;
}

}  // namespace hsgs
