#pragma once

#include <json.hpp>

#include <memory>
#include <string>

#include "hsgs/camera.hpp"
#include "hsgs/image.hpp"

// Training objective and evaluation metrics: L1, SSIM (11x11 Gaussian window,
// sigma 1.5, K1=0.01, K2=0.03, dynamic range 1, valid-region mean), PSNR, a
// gradient-pyramid perceptual proxy behind a pluggable interface, the
// distance weight for synthetic views, and the per-view composite loss.
// Gradient variants accumulate upstream * dLoss/dx_hat into a caller image.

namespace hsgs {

struct LossWeights {
  double lambda_s = 0.2;      // D-SSIM weight
  double lambda_p_ref = 0.5;  // perceptual weight, reference views
  double lambda_p_syn = 0.1;  // perceptual weight, synthetic views

  void validate() const {
    for (double v : {lambda_s, lambda_p_ref, lambda_p_syn})
      require(v >= 0 && v <= 1, "loss weights: values must lie in [0,1]");
  }
};

// ---------------------------------------------------------------------------
// L1

inline double l1(const Image& x, const Image& xhat, const Mask* mask = nullptr) {
  require_same_shape(x, xhat, "l1");
  size_t count = 0;
  double sum = 0;
  for (int y = 0; y < x.height; ++y)
    for (int px = 0; px < x.width; ++px) {
      if (mask && !mask->at(y, px)) continue;
      for (int c = 0; c < x.channels; ++c) sum += std::abs(x.at(y, px, c) - xhat.at(y, px, c));
      count += x.channels;
    }
  require(count > 0, "l1: empty mask");
  return sum / static_cast<double>(count);
}

inline void l1_backward(const Image& x, const Image& xhat, const Mask* mask, double upstream,
                        Image& grad) {
  require_same_shape(x, xhat, "l1_backward");
  require_same_shape(x, grad, "l1_backward");
  size_t count = 0;
  for (int y = 0; y < x.height; ++y)
    for (int px = 0; px < x.width; ++px)
      if (!mask || mask->at(y, px)) count += x.channels;
  require(count > 0, "l1_backward: empty mask");
  double scale = upstream / static_cast<double>(count);
  for (int y = 0; y < x.height; ++y)
    for (int px = 0; px < x.width; ++px) {
      if (mask && !mask->at(y, px)) continue;
      for (int c = 0; c < x.channels; ++c) {
        double d = xhat.at(y, px, c) - x.at(y, px, c);
        grad.at(y, px, c) += d > 0 ? scale : (d < 0 ? -scale : 0.0);
      }
    }
}

// ---------------------------------------------------------------------------
// SSIM

namespace detail {

inline constexpr int kWin = 11;
inline constexpr int kHalfWin = kWin / 2;

inline const double* ssim_taps() {
  static const std::array<double, kWin> taps = [] {
    std::array<double, kWin> t{};
    double sum = 0;
    for (int i = 0; i < kWin; ++i) {
      double d = i - kHalfWin;
      t[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += t[i];
    }
    for (double& v : t) v /= sum;
    return t;
  }();
  return taps.data();
}

struct Plane {
  int w = 0, h = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(int width, int height) : w(width), h(height), v(static_cast<size_t>(width) * height) {}
  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

inline Plane channel_plane(const Image& img, int c) {
  Plane p(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) p.at(y, x) = img.at(y, x, c);
  return p;
}

// Separable valid-region correlation with the SSIM window.
inline Plane window_valid(const Plane& in) {
  const double* g = ssim_taps();
  int vw = in.w - kWin + 1, vh = in.h - kWin + 1;
  Plane tmp(vw, in.h);
  for (int y = 0; y < in.h; ++y)
    for (int x = 0; x < vw; ++x) {
      double s = 0;
      for (int k = 0; k < kWin; ++k) s += g[k] * in.at(y, x + k);
      tmp.at(y, x) = s;
    }
  Plane out(vw, vh);
  for (int y = 0; y < vh; ++y)
    for (int x = 0; x < vw; ++x) {
      double s = 0;
      for (int k = 0; k < kWin; ++k) s += g[k] * tmp.at(y + k, x);
      out.at(y, x) = s;
    }
  return out;
}

// Adjoint of window_valid: scatters valid-grid values back to image size.
inline Plane window_scatter(const Plane& val, int w, int h) {
  const double* g = ssim_taps();
  int vw = val.w, vh = val.h;
  Plane tmp(vw, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < vw; ++x) {
      double s = 0;
      int k0 = std::max(0, y - vh + 1), k1 = std::min(kWin - 1, y);
      for (int k = k0; k <= k1; ++k) s += g[k] * val.at(y - k, x);
      tmp.at(y, x) = s;
    }
  Plane out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0;
      int k0 = std::max(0, x - vw + 1), k1 = std::min(kWin - 1, x);
      for (int k = k0; k <= k1; ++k) s += g[k] * tmp.at(y, x - k);
      out.at(y, x) = s;
    }
  return out;
}

inline Plane hadamard(const Plane& a, const Plane& b) {
  Plane out(a.w, a.h);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

inline constexpr double kSsimC1 = 1e-4;  // (K1 * range)^2, K1 = 0.01
inline constexpr double kSsimC2 = 9e-4;  // (K2 * range)^2, K2 = 0.03

}  // namespace detail

// Mean local SSIM; `grad` (optional, with `upstream`) accumulates
// upstream * d(ssim)/d(xhat).
inline double ssim_core(const Image& x, const Image& xhat, double upstream, Image* grad) {
  require_same_shape(x, xhat, "ssim");
  require(x.width >= detail::kWin && x.height >= detail::kWin,
          "ssim: image smaller than the 11x11 window");
  if (grad) require_same_shape(x, *grad, "ssim grad");

  const int vw = x.width - detail::kWin + 1;
  const int vh = x.height - detail::kWin + 1;
  const double norm = 1.0 / (static_cast<double>(vw) * vh * x.channels);
  double total = 0;

  for (int c = 0; c < x.channels; ++c) {
    detail::Plane px = detail::channel_plane(x, c);
    detail::Plane py = detail::channel_plane(xhat, c);
    detail::Plane mu_x = detail::window_valid(px);
    detail::Plane mu_y = detail::window_valid(py);
    detail::Plane xx = detail::window_valid(detail::hadamard(px, px));
    detail::Plane yy = detail::window_valid(detail::hadamard(py, py));
    detail::Plane xy = detail::window_valid(detail::hadamard(px, py));

    detail::Plane a(vw, vh), b(vw, vh), d(vw, vh), bmu(vw, vh), dmu(vw, vh);
    for (int y = 0; y < vh; ++y)
      for (int xc = 0; xc < vw; ++xc) {
        double mx = mu_x.at(y, xc), my = mu_y.at(y, xc);
        double sx = xx.at(y, xc) - mx * mx;
        double sy = yy.at(y, xc) - my * my;
        double sxy = xy.at(y, xc) - mx * my;
        double n1 = 2 * mx * my + detail::kSsimC1;
        double n2 = 2 * sxy + detail::kSsimC2;
        double d1 = mx * mx + my * my + detail::kSsimC1;
        double d2 = sx + sy + detail::kSsimC2;
        double s = (n1 * n2) / (d1 * d2);
        total += s;
        if (grad) {
          double av = 2 * mx * n2 / (d1 * d2) - 2 * my * s / d1;
          double bv = -s / d2;
          double dv = 2 * n1 / (d1 * d2);
          a.at(y, xc) = av;
          b.at(y, xc) = bv;
          d.at(y, xc) = dv;
          bmu.at(y, xc) = bv * my;
          dmu.at(y, xc) = dv * mx;
        }
      }

    if (grad) {
      detail::Plane sa = detail::window_scatter(a, x.width, x.height);
      detail::Plane sb = detail::window_scatter(b, x.width, x.height);
      detail::Plane sbmu = detail::window_scatter(bmu, x.width, x.height);
      detail::Plane sd = detail::window_scatter(d, x.width, x.height);
      detail::Plane sdmu = detail::window_scatter(dmu, x.width, x.height);
      double k = upstream * norm;
      for (int y = 0; y < x.height; ++y)
        for (int xc = 0; xc < x.width; ++xc)
          grad->at(y, xc, c) += k * (sa.at(y, xc) + 2 * py.at(y, xc) * sb.at(y, xc) -
                                     2 * sbmu.at(y, xc) + px.at(y, xc) * sd.at(y, xc) -
                                     sdmu.at(y, xc));
    }
  }
  return total * norm;
}

inline double ssim(const Image& x, const Image& xhat) { return ssim_core(x, xhat, 0, nullptr); }

inline double d_ssim(const Image& x, const Image& xhat) { return 1.0 - ssim(x, xhat); }

// ---------------------------------------------------------------------------
// PSNR

inline double psnr(const Image& x, const Image& xhat) {
  require_same_shape(x, xhat, "psnr");
  double mse = 0;
  for (size_t i = 0; i < x.data.size(); ++i) {
    double d = x.data[i] - xhat.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.data.size());
  if (mse == 0) return 100.0;  // self-identity cap
  return 10.0 * std::log10(1.0 / mse);
}

// ---------------------------------------------------------------------------
// Perceptual interface and the built-in gradient-pyramid proxy

class PerceptualLoss {
 public:
  virtual ~PerceptualLoss() = default;
  virtual std::string name() const = 0;
  virtual double eval(const Image& x, const Image& xhat) const = 0;
  // Returns the loss and accumulates upstream * dLoss/dxhat into grad.
  virtual double eval_with_grad(const Image& x, const Image& xhat, double upstream,
                                Image& grad) const = 0;
};

namespace detail {

inline Image downsample2(const Image& img) {
  Image out(img.width / 2, img.height / 2, img.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        out.at(y, x, c) = 0.25 * (img.at(2 * y, 2 * x, c) + img.at(2 * y, 2 * x + 1, c) +
                                  img.at(2 * y + 1, 2 * x, c) + img.at(2 * y + 1, 2 * x + 1, c));
  return out;
}

// Gradient magnitude of forward differences; zero at the last column/row.
inline void grad_magnitude(const Image& img, int c, Plane& gm, Plane* gx_out, Plane* gy_out) {
  gm = Plane(img.width, img.height);
  if (gx_out) *gx_out = Plane(img.width, img.height);
  if (gy_out) *gy_out = Plane(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      double gx = x + 1 < img.width ? img.at(y, x + 1, c) - img.at(y, x, c) : 0.0;
      double gy = y + 1 < img.height ? img.at(y + 1, x, c) - img.at(y, x, c) : 0.0;
      gm.at(y, x) = std::sqrt(gx * gx + gy * gy);
      if (gx_out) gx_out->at(y, x) = gx;
      if (gy_out) gy_out->at(y, x) = gy;
    }
}

}  // namespace detail

// Mean L1 distance between per-pixel gradient magnitudes across a 3-level
// dyadic pyramid. Zero iff the gradient fields agree; insensitive to constant
// offsets by construction.
class GradientPyramidPerceptual final : public PerceptualLoss {
 public:
  std::string name() const override { return "proxy"; }

  double eval(const Image& x, const Image& xhat) const override {
    return run(x, xhat, 0, nullptr);
  }

  double eval_with_grad(const Image& x, const Image& xhat, double upstream,
                        Image& grad) const override {
    return run(x, xhat, upstream, &grad);
  }

 private:
  static constexpr int kLevels = 3;

  double run(const Image& x, const Image& xhat, double upstream, Image* grad) const {
    require_same_shape(x, xhat, "perceptual");
    if (grad) require_same_shape(x, *grad, "perceptual grad");

    std::vector<Image> lx{x}, ly{xhat};
    for (int l = 1; l < kLevels; ++l) {
      if (lx.back().width < 2 || lx.back().height < 2) break;
      lx.push_back(detail::downsample2(lx.back()));
      ly.push_back(detail::downsample2(ly.back()));
    }
    const int levels = static_cast<int>(lx.size());

    double total = 0;
    std::vector<Image> dlevel;  // dLoss/d(level image), built when grad is wanted
    if (grad)
      for (int l = 0; l < levels; ++l) dlevel.emplace_back(ly[l].width, ly[l].height, ly[l].channels);

    for (int l = 0; l < levels; ++l) {
      const Image& a = lx[l];
      const Image& b = ly[l];
      double denom = static_cast<double>(a.width) * a.height * a.channels * levels;
      for (int c = 0; c < a.channels; ++c) {
        detail::Plane gma, gmb, gxb, gyb;
        detail::grad_magnitude(a, c, gma, nullptr, nullptr);
        detail::grad_magnitude(b, c, gmb, grad ? &gxb : nullptr, grad ? &gyb : nullptr);
        for (int y = 0; y < a.height; ++y)
          for (int xc = 0; xc < a.width; ++xc) {
            double diff = gma.at(y, xc) - gmb.at(y, xc);
            total += std::abs(diff) / denom;
            if (!grad) continue;
            double m = gmb.at(y, xc);
            if (m == 0) continue;
            double t = (diff > 0 ? -1.0 : (diff < 0 ? 1.0 : 0.0)) * upstream / denom;
            if (t == 0) continue;
            double dgx = t * gxb.at(y, xc) / m;
            double dgy = t * gyb.at(y, xc) / m;
            Image& dl = dlevel[l];
            if (xc + 1 < a.width) {
              dl.at(y, xc + 1, c) += dgx;
              dl.at(y, xc, c) -= dgx;
            }
            if (y + 1 < a.height) {
              dl.at(y + 1, xc, c) += dgy;
              dl.at(y, xc, c) -= dgy;
            }
          }
      }
    }

    if (grad) {
      // Pull level gradients down through the average pooling.
      for (int l = levels - 1; l >= 1; --l) {
        Image& up = dlevel[l];
        Image& down = dlevel[l - 1];
        for (int y = 0; y < up.height; ++y)
          for (int xc = 0; xc < up.width; ++xc)
            for (int c = 0; c < up.channels; ++c) {
              double v = 0.25 * up.at(y, xc, c);
              down.at(2 * y, 2 * xc, c) += v;
              down.at(2 * y, 2 * xc + 1, c) += v;
              down.at(2 * y + 1, 2 * xc, c) += v;
              down.at(2 * y + 1, 2 * xc + 1, c) += v;
            }
      }
      for (size_t i = 0; i < grad->data.size(); ++i) grad->data[i] += dlevel[0].data[i];
    }
    return total;
  }
};

inline const PerceptualLoss& default_perceptual() {
  static const GradientPyramidPerceptual instance;
  return instance;
}

// ---------------------------------------------------------------------------
// Distance weight for synthetic views

// lambda = 2 * min_i ||pose_s - ref_i|| / D_max, with D_max the maximum
// pairwise distance among references, exactly as the source formula prints
// it: the weight GROWS with distance from the references. `invert` selects
// the alternative reading 2 * (1 - min/D_max), clamped at 0.
inline double distance_weight(const CameraPose& pose_s, const std::vector<CameraPose>& refs,
                              bool invert = false) {
  require(refs.size() >= 2, "distance_weight: need at least 2 references");
  double d_max = 0;
  for (size_t i = 0; i < refs.size(); ++i)
    for (size_t j = i + 1; j < refs.size(); ++j)
      d_max = std::max(d_max, camera_distance(refs[i], refs[j]));
  require(d_max > 0, "distance_weight: degenerate references (all positions equal)");
  double d_min = std::numeric_limits<double>::infinity();
  for (const CameraPose& r : refs) d_min = std::min(d_min, camera_distance(pose_s, r));
  if (invert) return std::max(0.0, 2.0 * (1.0 - d_min / d_max));
  return 2.0 * d_min / d_max;
}

// ---------------------------------------------------------------------------
// Composite per-view loss

namespace detail {

inline double rgb_loss_core(const Image& x, const Image& xhat, const LossWeights& w,
                            bool is_reference, const Mask* mask, const PerceptualLoss* perceptual,
                            Image* grad) {
  require_same_shape(x, xhat, "rgb_loss");
  w.validate();
  const PerceptualLoss& p = perceptual ? *perceptual : default_perceptual();
  double lambda_p = is_reference ? w.lambda_p_ref : w.lambda_p_syn;

  const Image* target_view = &xhat;
  Image filled;
  if (mask) {
    filled = substitute_masked(xhat, x, *mask);
    target_view = &filled;
  }

  double loss = (1.0 - w.lambda_s) * l1(x, xhat, mask);

  if (!grad) {
    loss += w.lambda_s * (1.0 - ssim_core(x, *target_view, 0, nullptr));
    if (lambda_p > 0) loss += lambda_p * p.eval(x, *target_view);
    return loss;
  }

  Image windowed_grad(x.width, x.height, x.channels);
  loss += w.lambda_s * (1.0 - ssim_core(x, *target_view, -w.lambda_s, &windowed_grad));
  if (lambda_p > 0) loss += lambda_p * p.eval_with_grad(x, *target_view, lambda_p, windowed_grad);

  if (mask) {
    for (int y = 0; y < x.height; ++y)
      for (int px = 0; px < x.width; ++px)
        if (!mask->at(y, px))
          for (int c = 0; c < x.channels; ++c) windowed_grad.at(y, px, c) = 0;
  }
  for (size_t i = 0; i < grad->data.size(); ++i) grad->data[i] += windowed_grad.data[i];
  l1_backward(x, xhat, mask, 1.0 - w.lambda_s, *grad);
  return loss;
}

}  // namespace detail

// (1 - lambda_s) * L1 + lambda_s * D-SSIM + lambda_p * perceptual. Masked
// pixels are replaced by the target for the windowed terms and excluded from
// L1, so they contribute zero loss and zero gradient.
inline double rgb_loss(const Image& x, const Image& xhat, const LossWeights& w, bool is_reference,
                       const Mask* mask = nullptr, const PerceptualLoss* perceptual = nullptr) {
  return detail::rgb_loss_core(x, xhat, w, is_reference, mask, perceptual, nullptr);
}

// Same, accumulating dLoss/dxhat into grad.
inline double rgb_loss_with_grad(const Image& x, const Image& xhat, const LossWeights& w,
                                 bool is_reference, const Mask* mask,
                                 const PerceptualLoss* perceptual, Image& grad) {
  return detail::rgb_loss_core(x, xhat, w, is_reference, mask, perceptual, &grad);
}

// Reference views enter the objective unscaled; synthetic views are scaled by
// their distance weight.
inline double total_view_loss(const Image& x, const Image& xhat, const LossWeights& w,
                              bool is_reference, double lambda,
                              const Mask* mask = nullptr,
                              const PerceptualLoss* perceptual = nullptr) {
  double scale = is_reference ? 1.0 : lambda;
  return scale * rgb_loss(x, xhat, w, is_reference, mask, perceptual);
}

// ---------------------------------------------------------------------------
// Evaluation report

struct ViewMetrics {
  std::string id;
  double psnr = 0, ssim = 0, perceptual = 0;
};

struct MetricReport {
  std::vector<ViewMetrics> views;
  double mean_psnr = 0, mean_ssim = 0, mean_perceptual = 0;
  std::string perceptual_impl = "proxy";
};

inline MetricReport evaluate(const std::vector<Image>& rendered, const std::vector<Image>& truth,
                             const std::vector<std::string>& ids,
                             const PerceptualLoss* perceptual = nullptr) {
  require(rendered.size() == truth.size() && rendered.size() == ids.size(),
          "evaluate: rendered/truth/id count mismatch");
  require(!rendered.empty(), "evaluate: no views");
  const PerceptualLoss& p = perceptual ? *perceptual : default_perceptual();

  MetricReport report;
  report.perceptual_impl = p.name();
  for (size_t i = 0; i < rendered.size(); ++i) {
    ViewMetrics m;
    m.id = ids[i];
    m.psnr = psnr(truth[i], rendered[i]);
    m.ssim = ssim(truth[i], rendered[i]);
    m.perceptual = p.eval(truth[i], rendered[i]);
    report.mean_psnr += m.psnr;
    report.mean_ssim += m.ssim;
    report.mean_perceptual += m.perceptual;
    report.views.push_back(std::move(m));
  }
  double n = static_cast<double>(report.views.size());
  report.mean_psnr /= n;
  report.mean_ssim /= n;
  report.mean_perceptual /= n;
  return report;
}

inline nlohmann::ordered_json report_to_json(const MetricReport& report) {
  nlohmann::ordered_json j;
  j["views"] = nlohmann::ordered_json::array();
  for (const ViewMetrics& m : report.views) {
    nlohmann::ordered_json v;
    v["id"] = m.id;
    v["psnr"] = m.psnr;
    v["ssim"] = m.ssim;
    v["perceptual"] = m.perceptual;
    j["views"].push_back(v);
  }
  j["mean"] = {{"psnr", report.mean_psnr},
               {"ssim", report.mean_ssim},
               {"perceptual", report.mean_perceptual}};
  j["perceptual_impl"] = report.perceptual_impl;
  return j;
}

inline MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport report;
  for (const auto& v : j.at("views")) {
    ViewMetrics m;
    m.id = v.at("id").get<std::string>();
    m.psnr = v.at("psnr").get<double>();
    m.ssim = v.at("ssim").get<double>();
    m.perceptual = v.at("perceptual").get<double>();
    report.views.push_back(std::move(m));
  }
  report.mean_psnr = j.at("mean").at("psnr").get<double>();
  report.mean_ssim = j.at("mean").at("ssim").get<double>();
  report.mean_perceptual = j.at("mean").at("perceptual").get<double>();
  report.perceptual_impl = j.at("perceptual_impl").get<std::string>();
  return report;
}

}  // namespace hsgs
