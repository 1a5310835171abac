#pragma once

#include <cstdint>
#include <limits>

#include "hsgs/camera.hpp"
#include "hsgs/image.hpp"
#include "hsgs/ply.hpp"

// Z-buffered point splatting. Each point paints the square of pixels within
// Chebyshev distance splat_radius of its landing pixel; per pixel the point
// with the smallest (depth, index) pair wins, which makes the result
// independent of input order for distinct depths and deterministic always.

namespace hsgs {

struct SplatConfig {
  int splat_radius = 1;  // pixels, Chebyshev
  Vec3 background = Vec3::Zero();
  double near_epsilon = kNearEpsilon;
  int threads = 1;

  void validate() const {
    require(splat_radius >= 0 && splat_radius <= 16, "splat: radius must be in [0, 16]");
    require(background.allFinite() && background.minCoeff() >= 0 && background.maxCoeff() <= 1,
            "splat: background outside [0,1]");
  }
};

namespace detail {

struct ZBuffer {
  std::vector<double> depth;
  std::vector<int64_t> index;

  explicit ZBuffer(size_t n)
      : depth(n, std::numeric_limits<double>::infinity()),
        index(n, std::numeric_limits<int64_t>::max()) {}

  void offer(size_t pixel, double d, int64_t idx) {
    if (d < depth[pixel] || (d == depth[pixel] && idx < index[pixel])) {
      depth[pixel] = d;
      index[pixel] = idx;
    }
  }

  void merge(const ZBuffer& other) {
    for (size_t i = 0; i < depth.size(); ++i) {
      if (other.index[i] == std::numeric_limits<int64_t>::max()) continue;
      offer(i, other.depth[i], other.index[i]);
    }
  }
};

inline void splat_range(const PointCloud& cloud, const CameraPose& pose,
                        const SplatConfig& config, size_t begin, size_t end, ZBuffer& zb) {
  const int w = pose.intrinsics.width;
  const int h = pose.intrinsics.height;
  const int r = config.splat_radius;
  for (size_t i = begin; i < end; ++i) {
    Vec3 p = cloud.positions[i].cast<double>();
    auto hit = project(pose, p, config.near_epsilon);
    if (!hit) continue;
    int px = static_cast<int>(std::floor(hit->u + 0.5));
    int py = static_cast<int>(std::floor(hit->v + 0.5));
    int x0 = std::max(px - r, 0), x1 = std::min(px + r, w - 1);
    int y0 = std::max(py - r, 0), y1 = std::min(py + r, h - 1);
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x)
        zb.offer(static_cast<size_t>(y) * w + x, hit->depth, static_cast<int64_t>(i));
  }
}

}  // namespace detail

inline RenderedImage render_points(const PointCloud& cloud, const CameraPose& pose,
                                   const SplatConfig& config = {}) {
  cloud.validate();
  pose.validate(1e-6);
  config.validate();

  const int w = pose.intrinsics.width;
  const int h = pose.intrinsics.height;
  const size_t n_px = static_cast<size_t>(w) * h;

  detail::ZBuffer zb(n_px);
  if (config.threads <= 1 || cloud.size() < 1024) {
    detail::splat_range(cloud, pose, config, 0, cloud.size(), zb);
  } else {
    int t = config.threads;
    std::vector<detail::ZBuffer> partial(t, detail::ZBuffer(n_px));
    parallel_for(cloud.size(), t, [&](size_t b, size_t e, int worker) {
      detail::splat_range(cloud, pose, config, b, e, partial[worker]);
    });
    for (const auto& part : partial) zb.merge(part);
  }

  RenderedImage out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      size_t pix = static_cast<size_t>(y) * w + x;
      if (zb.index[pix] == std::numeric_limits<int64_t>::max()) {
        for (int c = 0; c < 3; ++c) out.rgb.at(y, x, c) = config.background[c];
        continue;
      }
      const auto& color = cloud.colors[static_cast<size_t>(zb.index[pix])];
      for (int c = 0; c < 3; ++c) out.rgb.at(y, x, c) = static_cast<double>(color[c]);
      out.depth[pix] = zb.depth[pix];
      out.mask.set(y, x, true);
    }
  }
  return out;
}

}  // namespace hsgs
