#pragma once

#include <algorithm>
#include <optional>

#include "hsgs/camera.hpp"
#include "hsgs/gaussian.hpp"
#include "hsgs/image.hpp"

// Differentiable Gaussian rasterizer. Forward: EWA projection to 2D
// covariances, front-to-back alpha compositing per pixel. Backward: analytic
// chain rule through compositing, the 2D kernel, the projection, covariance
// construction, SH color, sigmoid opacity, and quaternion normalization.
//
// kernel_cutoff bounds each Gaussian's pixel support: kernel values below it
// are skipped, and the per-Gaussian bounding box is the exact AABB of the
// matching level set, so the skip never discards a value above the cutoff.
// The default keeps truncation jumps at ~1e-14, far below gradient-check
// tolerances; training raises it (and caps the pixel radius) for speed.

namespace hsgs {

struct RasterOptions {
  Vec3 background = Vec3::Zero();
  double kernel_cutoff = 1e-14;
  double max_radius_px = 0;  // extra cap on splat extent; 0 = none
  double alpha_cap = 0.99;
  double transmittance_stop = 1e-4;
  double mask_threshold = 1e-3;
  double near_epsilon = kNearEpsilon;
  int threads = 1;
  int tile_size = 16;

  void validate() const {
    require(kernel_cutoff > 0 && kernel_cutoff < 1, "raster: kernel_cutoff must be in (0,1)");
    require(alpha_cap > 0 && alpha_cap < 1, "raster: alpha_cap must be in (0,1)");
    require(transmittance_stop >= 0 && transmittance_stop < 1, "raster: bad transmittance_stop");
    require(background.allFinite() && background.minCoeff() >= 0 && background.maxCoeff() <= 1,
            "raster: background outside [0,1]");
    require(tile_size >= 4, "raster: tile_size too small");
  }
};

struct ProjectedGaussian {
  Vec2 mean2d;
  Mat2 cov2d;
  double depth = 0;
};

namespace detail {

struct CameraFrame {
  Mat3 w;        // world-to-camera rotation
  Vec3 origin;   // camera center
  double fx, fy, cx, cy;
  int width, height;
};

inline CameraFrame camera_frame(const CameraPose& pose) {
  return CameraFrame{pose.rotation, pose.position,          pose.intrinsics.fx,
                     pose.intrinsics.fy, pose.intrinsics.cx, pose.intrinsics.cy,
                     pose.intrinsics.width, pose.intrinsics.height};
}

inline Mat23 projective_jacobian(const CameraFrame& cam, const Vec3& t) {
  Mat23 j;
  double z = t.z(), z2 = z * z;
  j << cam.fx / z, 0, -cam.fx * t.x() / z2,
       0, cam.fy / z, -cam.fy * t.y() / z2;
  return j;
}

}  // namespace detail

// EWA projection of one Gaussian. Culled (nullopt) when behind the near plane
// or when the 3-sigma ellipse misses the image.
inline std::optional<ProjectedGaussian> project_gaussian(const Gaussian& g,
                                                         const CameraPose& pose,
                                                         double near_epsilon = kNearEpsilon) {
  detail::CameraFrame cam = detail::camera_frame(pose);
  Vec3 t = cam.w * (g.mu - cam.origin);
  if (t.z() <= near_epsilon) return std::nullopt;

  Mat23 m = detail::projective_jacobian(cam, t) * cam.w;
  Mat2 cov2d = m * covariance_3d(g.q, g.s) * m.transpose();
  cov2d(0, 0) += 0.3;
  cov2d(1, 1) += 0.3;

  Vec2 mean2d(cam.fx * t.x() / t.z() + cam.cx, cam.fy * t.y() / t.z() + cam.cy);
  double rx = 3.0 * std::sqrt(cov2d(0, 0));
  double ry = 3.0 * std::sqrt(cov2d(1, 1));
  if (mean2d.x() + rx < 0 || mean2d.x() - rx > cam.width - 1 || mean2d.y() + ry < 0 ||
      mean2d.y() - ry > cam.height - 1)
    return std::nullopt;
  return ProjectedGaussian{mean2d, cov2d, t.z()};
}

namespace detail {

// Per-Gaussian data cached for the pixel loops. Hot fields only; everything
// needed solely by the backward finalize pass is recomputed there.
struct Prim {
  int src = 0;
  double depth = 0;
  double mx = 0, my = 0;           // 2D mean
  double ixx = 0, ixy = 0, iyy = 0;  // inverse 2D covariance
  double opacity = 0;              // sigmoid(o)
  double color[3] = {0, 0, 0};     // SH-evaluated, clamped
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bbox
};

inline void eval_sh_color(const Gaussian& g, int sh_degree, const Vec3& dir, double* raw) {
  for (int c = 0; c < 3; ++c) raw[c] = 0.5 + kSh0 * g.sh[c];
  if (sh_degree >= 1)
    for (int c = 0; c < 3; ++c)
      raw[c] += kSh1 * (-dir.y() * g.sh[3 + c] + dir.z() * g.sh[6 + c] - dir.x() * g.sh[9 + c]);
}

inline std::vector<Prim> make_prims(const GaussianCloud& cloud, const CameraFrame& cam,
                                    const RasterOptions& opt) {
  // Support radius: kernel == cutoff along each principal direction.
  const double qsup = std::sqrt(2.0 * std::log(1.0 / opt.kernel_cutoff));
  std::vector<Prim> prims;
  prims.reserve(cloud.size());

  for (size_t i = 0; i < cloud.size(); ++i) {
    const Gaussian& g = cloud.gaussians[i];
    Vec3 t = cam.w * (g.mu - cam.origin);
    if (t.z() <= opt.near_epsilon) continue;

    Mat23 m = projective_jacobian(cam, t) * cam.w;
    Mat2 cov = m * covariance_3d(g.q, g.s) * m.transpose();
    cov(0, 0) += 0.3;
    cov(1, 1) += 0.3;
    double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    if (det <= 0) continue;

    Prim p;
    p.src = static_cast<int>(i);
    p.depth = t.z();
    p.mx = cam.fx * t.x() / t.z() + cam.cx;
    p.my = cam.fy * t.y() / t.z() + cam.cy;
    double inv_det = 1.0 / det;
    p.ixx = cov(1, 1) * inv_det;
    p.ixy = -cov(0, 1) * inv_det;
    p.iyy = cov(0, 0) * inv_det;
    p.opacity = sigmoid(g.o);

    double rx = qsup * std::sqrt(cov(0, 0));
    double ry = qsup * std::sqrt(cov(1, 1));
    if (opt.max_radius_px > 0) {
      rx = std::min(rx, opt.max_radius_px);
      ry = std::min(ry, opt.max_radius_px);
    }
    p.x0 = std::max(0, static_cast<int>(std::ceil(p.mx - rx)));
    p.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(p.mx + rx)));
    p.y0 = std::max(0, static_cast<int>(std::ceil(p.my - ry)));
    p.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(p.my + ry)));
    if (p.x0 > p.x1 || p.y0 > p.y1) continue;

    Vec3 rel = g.mu - cam.origin;
    double dist = rel.norm();
    Vec3 dir = dist > 0 ? Vec3(rel / dist) : Vec3(0, 0, 1);
    double raw[3];
    eval_sh_color(g, cloud.sh_degree, dir, raw);
    for (int c = 0; c < 3; ++c) p.color[c] = std::clamp(raw[c], 0.0, 1.0);
    prims.push_back(p);
  }

  std::sort(prims.begin(), prims.end(), [](const Prim& a, const Prim& b) {
    return a.depth != b.depth ? a.depth < b.depth : a.src < b.src;
  });
  return prims;
}

// Tile index lists preserve the global front-to-back order.
struct TileGrid {
  int tiles_x = 0, tiles_y = 0, tile = 16;
  std::vector<std::vector<int32_t>> lists;

  TileGrid(const std::vector<Prim>& prims, int width, int height, int tile_size) {
    tile = tile_size;
    tiles_x = (width + tile - 1) / tile;
    tiles_y = (height + tile - 1) / tile;
    lists.resize(static_cast<size_t>(tiles_x) * tiles_y);
    for (int32_t pi = 0; pi < static_cast<int32_t>(prims.size()); ++pi) {
      const Prim& p = prims[pi];
      int tx0 = p.x0 / tile, tx1 = p.x1 / tile;
      int ty0 = p.y0 / tile, ty1 = p.y1 / tile;
      for (int ty = ty0; ty <= ty1; ++ty)
        for (int tx = tx0; tx <= tx1; ++tx)
          lists[static_cast<size_t>(ty) * tiles_x + tx].push_back(pi);
    }
  }
};

}  // namespace detail

// Per-pixel compositing accumulators exposed for conservation checks.
struct RasterStats {
  Image alpha_sum;       // sum of alpha_t * T_t
  Image transmittance;   // T after the last contribution
};

inline RenderedImage rasterize(const GaussianCloud& cloud, const CameraPose& pose,
                               const RasterOptions& opt = {}, RasterStats* stats = nullptr) {
  cloud.validate();
  pose.validate(1e-6);
  opt.validate();

  detail::CameraFrame cam = detail::camera_frame(pose);
  const int w = cam.width, h = cam.height;
  RenderedImage out(w, h);
  if (stats) {
    stats->alpha_sum = Image(w, h, 1);
    stats->transmittance = Image(w, h, 1);
  }

  std::vector<detail::Prim> prims = detail::make_prims(cloud, cam, opt);
  detail::TileGrid grid(prims, w, h, opt.tile_size);
  const double ln_cutoff = std::log(opt.kernel_cutoff);

  size_t n_tiles = grid.lists.size();
  parallel_for(n_tiles, opt.threads, [&](size_t tb, size_t te, int) {
    for (size_t ti = tb; ti < te; ++ti) {
      const auto& list = grid.lists[ti];
      int tx = static_cast<int>(ti) % grid.tiles_x;
      int ty = static_cast<int>(ti) / grid.tiles_x;
      int px0 = tx * grid.tile, px1 = std::min(w, px0 + grid.tile);
      int py0 = ty * grid.tile, py1 = std::min(h, py0 + grid.tile);

      for (int y = py0; y < py1; ++y) {
        for (int x = px0; x < px1; ++x) {
          double t_acc = 1.0;
          double c_acc[3] = {0, 0, 0};
          double a_acc = 0, d_acc = 0;
          for (int32_t pi : list) {
            const detail::Prim& p = prims[pi];
            if (x < p.x0 || x > p.x1 || y < p.y0 || y > p.y1) continue;
            double dx = x - p.mx, dy = y - p.my;
            double power = -0.5 * (p.ixx * dx * dx + 2.0 * p.ixy * dx * dy + p.iyy * dy * dy);
            if (power < ln_cutoff) continue;
            double alpha = std::min(opt.alpha_cap, p.opacity * std::exp(power));
            double weight = alpha * t_acc;
            for (int c = 0; c < 3; ++c) c_acc[c] += p.color[c] * weight;
            a_acc += weight;
            d_acc += p.depth * weight;
            t_acc *= 1.0 - alpha;
            if (t_acc < opt.transmittance_stop) break;
          }
          for (int c = 0; c < 3; ++c)
            out.rgb.at(y, x, c) = std::clamp(c_acc[c] + t_acc * opt.background[c], 0.0, 1.0);
          bool valid = a_acc > opt.mask_threshold;
          out.mask.set(y, x, valid);
          if (valid && a_acc > 0) out.depth[static_cast<size_t>(y) * w + x] = d_acc / a_acc;
          if (stats) {
            stats->alpha_sum.at(y, x, 0) = a_acc;
            stats->transmittance.at(y, x, 0) = t_acc;
          }
        }
      }
    }
  });
  return out;
}

namespace detail {

// Per-Gaussian accumulators gathered by the backward pixel walk, in the
// projected frame; the finalize pass chains them to parameter space.
struct PrimAccum {
  double dmx = 0, dmy = 0;
  double dcxx = 0, dcxy = 0, dcyy = 0;  // dL/dcov2d (symmetric, xy once)
  double dalpha_g = 0;                  // sum of dL/dalpha * g, uncapped only
  double dc[3] = {0, 0, 0};             // dL/dcolor
};

struct Contrib {
  int32_t pi;
  double alpha, t_before, g, dx, dy;
};

// Derivative of the rotation matrix w.r.t. each unit-quaternion component.
inline void rotation_grad(const Vec4& qn, Mat3 dr[4]) {
  double w = qn[0], x = qn[1], y = qn[2], z = qn[3];
  dr[0] << 0, -2 * z, 2 * y,
           2 * z, 0, -2 * x,
           -2 * y, 2 * x, 0;
  dr[1] << 0, 2 * y, 2 * z,
           2 * y, -4 * x, -2 * w,
           2 * z, 2 * w, -4 * x;
  dr[2] << -4 * y, 2 * x, 2 * w,
           2 * x, 0, 2 * z,
           -2 * w, 2 * z, -4 * y;
  dr[3] << -4 * z, -2 * w, 2 * x,
           2 * w, -4 * z, 2 * y,
           2 * x, 2 * y, 0;
}

}  // namespace detail

// Analytic gradients of sum(upstream .* rendered_rgb) w.r.t. all Gaussian
// parameters. `upstream` is dLoss/dPixel, same shape as the render.
inline GradientBuffer rasterize_backward(const GaussianCloud& cloud, const CameraPose& pose,
                                         const Image& upstream, const RasterOptions& opt = {}) {
  cloud.validate();
  pose.validate(1e-6);
  opt.validate();
  detail::CameraFrame cam = detail::camera_frame(pose);
  require(upstream.width == cam.width && upstream.height == cam.height && upstream.channels == 3,
          "rasterize_backward: upstream shape mismatch");

  std::vector<detail::Prim> prims = detail::make_prims(cloud, cam, opt);
  detail::TileGrid grid(prims, cam.width, cam.height, opt.tile_size);
  const double ln_cutoff = std::log(opt.kernel_cutoff);

  int workers = opt.threads < 1 ? 1 : opt.threads;
  std::vector<std::vector<detail::PrimAccum>> acc(workers,
                                                  std::vector<detail::PrimAccum>(prims.size()));

  size_t n_tiles = grid.lists.size();
  parallel_for(n_tiles, workers, [&](size_t tb, size_t te, int worker) {
    std::vector<detail::Contrib> stack;
    stack.reserve(256);
    auto& accum = acc[worker];

    for (size_t ti = tb; ti < te; ++ti) {
      const auto& list = grid.lists[ti];
      if (list.empty()) continue;
      int tx = static_cast<int>(ti) % grid.tiles_x;
      int ty = static_cast<int>(ti) / grid.tiles_x;
      int px0 = tx * grid.tile, px1 = std::min(cam.width, px0 + grid.tile);
      int py0 = ty * grid.tile, py1 = std::min(cam.height, py0 + grid.tile);

      for (int y = py0; y < py1; ++y) {
        for (int x = px0; x < px1; ++x) {
          // Recompute the forward walk, recording each contribution.
          stack.clear();
          double t_acc = 1.0;
          for (int32_t pi : list) {
            const detail::Prim& p = prims[pi];
            if (x < p.x0 || x > p.x1 || y < p.y0 || y > p.y1) continue;
            double dx = x - p.mx, dy = y - p.my;
            double power = -0.5 * (p.ixx * dx * dx + 2.0 * p.ixy * dx * dy + p.iyy * dy * dy);
            if (power < ln_cutoff) continue;
            double g = std::exp(power);
            double alpha = std::min(opt.alpha_cap, p.opacity * g);
            stack.push_back({pi, alpha, t_acc, g, dx, dy});
            t_acc *= 1.0 - alpha;
            if (t_acc < opt.transmittance_stop) break;
          }
          if (stack.empty()) continue;

          const double* u =
              upstream.data.data() + (static_cast<size_t>(y) * cam.width + x) * 3;
          // Suffix color sums: after processing entry t, s holds
          // sum_{u>t} c_u*alpha_u*T_u + T_final*bg.
          double s[3] = {t_acc * opt.background[0], t_acc * opt.background[1],
                         t_acc * opt.background[2]};
          for (size_t k = stack.size(); k-- > 0;) {
            const detail::Contrib& ct = stack[k];
            const detail::Prim& p = prims[ct.pi];
            detail::PrimAccum& pa = accum[ct.pi];

            double dalpha = 0;
            for (int c = 0; c < 3; ++c) {
              double weight = ct.alpha * ct.t_before;
              pa.dc[c] += u[c] * weight;
              dalpha += u[c] * (ct.t_before * p.color[c] - s[c] / (1.0 - ct.alpha));
              s[c] += p.color[c] * weight;
            }
            bool capped = p.opacity * ct.g > opt.alpha_cap;
            if (capped) continue;
            pa.dalpha_g += dalpha * ct.g;
            // dL/dg -> 2D mean and covariance.
            double dldg = dalpha * p.opacity;
            double lx = p.ixx * ct.dx + p.ixy * ct.dy;  // Lambda * d
            double ly = p.ixy * ct.dx + p.iyy * ct.dy;
            double gg = dldg * ct.g;
            pa.dmx += gg * lx;
            pa.dmy += gg * ly;
            pa.dcxx += 0.5 * gg * lx * lx;
            pa.dcxy += gg * lx * ly;  // both off-diagonal entries
            pa.dcyy += 0.5 * gg * ly * ly;
          }
        }
      }
    }
  });

  for (int wkr = 1; wkr < workers; ++wkr)
    for (size_t i = 0; i < prims.size(); ++i) {
      acc[0][i].dmx += acc[wkr][i].dmx;
      acc[0][i].dmy += acc[wkr][i].dmy;
      acc[0][i].dcxx += acc[wkr][i].dcxx;
      acc[0][i].dcxy += acc[wkr][i].dcxy;
      acc[0][i].dcyy += acc[wkr][i].dcyy;
      acc[0][i].dalpha_g += acc[wkr][i].dalpha_g;
      for (int c = 0; c < 3; ++c) acc[0][i].dc[c] += acc[wkr][i].dc[c];
    }

  // Chain the projected-frame accumulators back to Gaussian parameters.
  GradientBuffer grads(cloud.size());
  for (size_t piu = 0; piu < prims.size(); ++piu) {
    const detail::Prim& p = prims[piu];
    const detail::PrimAccum& pa = acc[0][piu];
    const Gaussian& g = cloud.gaussians[static_cast<size_t>(p.src)];
    GaussianGrad& out = grads.grads[static_cast<size_t>(p.src)];

    // Opacity logit.
    out.o += pa.dalpha_g * p.opacity * (1.0 - p.opacity);

    // Color -> SH (and view direction for degree 1), honoring the clamp.
    Vec3 rel = g.mu - cam.origin;
    double dist = rel.norm();
    Vec3 dir = dist > 0 ? Vec3(rel / dist) : Vec3(0, 0, 1);
    double raw[3];
    detail::eval_sh_color(g, cloud.sh_degree, dir, raw);
    Vec3 ddir = Vec3::Zero();
    for (int c = 0; c < 3; ++c) {
      if (raw[c] <= 0.0 || raw[c] >= 1.0) continue;  // clamped: gradient blocked
      double dc = pa.dc[c];
      out.sh[c] += kSh0 * dc;
      if (cloud.sh_degree >= 1) {
        out.sh[3 + c] += -kSh1 * dir.y() * dc;
        out.sh[6 + c] += kSh1 * dir.z() * dc;
        out.sh[9 + c] += -kSh1 * dir.x() * dc;
        ddir += dc * kSh1 * Vec3(-g.sh[9 + c], -g.sh[3 + c], g.sh[6 + c]);
      }
    }
    if (cloud.sh_degree >= 1 && dist > 0)
      out.mu += (Mat3::Identity() - dir * dir.transpose()) / dist * ddir;

    // 2D mean and covariance -> camera point, 3D covariance.
    Vec3 t = cam.w * (g.mu - cam.origin);
    Mat23 jac = detail::projective_jacobian(cam, t);
    Mat23 m = jac * cam.w;
    Mat3 sigma3 = covariance_3d(g.q, g.s);

    Mat2 g2;
    g2 << pa.dcxx, 0.5 * pa.dcxy, 0.5 * pa.dcxy, pa.dcyy;
    Mat3 dsigma3 = m.transpose() * g2 * m;
    Mat23 dm = 2.0 * g2 * m * sigma3;
    Mat23 dj = dm * cam.w.transpose();

    double z = t.z(), z2 = z * z, z3 = z2 * z;
    Vec3 dt;
    dt.x() = dj(0, 2) * (-cam.fx / z2);
    dt.y() = dj(1, 2) * (-cam.fy / z2);
    dt.z() = dj(0, 0) * (-cam.fx / z2) + dj(1, 1) * (-cam.fy / z2) +
             dj(0, 2) * (2.0 * cam.fx * t.x() / z3) + dj(1, 2) * (2.0 * cam.fy * t.y() / z3);
    dt += jac.transpose() * Vec2(pa.dmx, pa.dmy);
    out.mu += cam.w.transpose() * dt;

    // 3D covariance -> log scales and quaternion.
    double qnorm = g.q.norm();
    Vec4 qn = g.q / qnorm;
    Mat3 rot = quat_rotation(qn);
    Vec3 es = g.s.array().exp();
    Mat3 dv = 2.0 * dsigma3 * (rot * es.asDiagonal());
    for (int i = 0; i < 3; ++i) {
      out.s[i] += es[i] * rot.col(i).dot(dv.col(i));
    }
    Mat3 drot;
    for (int i = 0; i < 3; ++i) drot.col(i) = es[i] * dv.col(i);
    Mat3 dr[4];
    detail::rotation_grad(qn, dr);
    Vec4 dqn;
    for (int k = 0; k < 4; ++k) dqn[k] = (dr[k].array() * drot.array()).sum();
    out.q += (Eigen::Matrix4d::Identity() - qn * qn.transpose()) / qnorm * dqn;
  }
  return grads;
}

}  // namespace hsgs
