#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hsgs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

inline constexpr double kPi = 3.14159265358979323846;

// Invalid inputs, malformed configs, contract violations. CLI exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Optical axes too close to parallel for a least-squares intersection.
class NearParallelError : public ValidationError {
 public:
  explicit NearParallelError(const std::string& msg) : ValidationError(msg) {}
};

// Filesystem and codec failures. CLI exit code 3.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Runtime failures inside a pipeline stage (subprocess, numerics). CLI exit code 3.
class StageError : public std::runtime_error {
 public:
  explicit StageError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ValidationError(msg);
}

// FNV-1a, used for content-addressed stage caching.
inline constexpr uint64_t kFnvOffset = 1469598103934665603ull;

inline uint64_t fnv1a(const void* data, size_t n, uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline uint64_t fnv1a(const std::string& s, uint64_t h = kFnvOffset) {
  return fnv1a(s.data(), s.size(), h);
}

// SplitMix64 step; used to derive independent sub-seeds from one master seed.
inline uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Static partition of [0, n) over `threads` workers. With threads <= 1 the body
// runs inline on the calling thread, which is also the deterministic mode:
// reduction order is then fixed by construction.
inline void parallel_for(size_t n, int threads,
                         const std::function<void(size_t, size_t, int)>& body) {
  if (n == 0) return;
  int t = threads < 1 ? 1 : threads;
  if (static_cast<size_t>(t) > n) t = static_cast<int>(n);
  if (t == 1) {
    body(0, n, 0);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(t);
  size_t chunk = (n + t - 1) / t;
  for (int w = 0; w < t; ++w) {
    size_t b = static_cast<size_t>(w) * chunk;
    size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&, b, e, w] { body(b, e, w); });
  }
  for (auto& th : pool) th.join();
}

inline bool almost_equal(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace hsgs
