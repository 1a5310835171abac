#pragma once

#include <random>

#include "hsgs/adam.hpp"
#include "hsgs/losses.hpp"
#include "hsgs/raster.hpp"

// Stochastic training loop: one view per iteration, reference views drawn
// with probability M/(M+N) by default. Synthetic views are weighted by their
// distance to the references and restricted to mask-valid pixels.

namespace hsgs {

struct ReferenceView {
  Image image;
  CameraPose pose;
};

struct SyntheticView {
  Image image;
  Mask mask;
  CameraPose pose;
};

struct TrainConfig {
  int iterations = 1000;
  uint64_t seed = 0;
  double p_ref = -1;          // <0 selects M/(M+N)
  int prune_interval = 200;   // 0 disables pruning
  double prune_opacity = 0.005;
  double extent_override = 0;  // <=0 computes scene_extent(cloud)
  bool use_distance_weight = true;  // false fixes every synthetic weight at 1
  bool invert_lambda = false;
  AdamParams adam;            // adam.lr_mu is interpreted per unit scene extent
  RasterOptions raster;       // training-time raster knobs (cutoff, radius cap)

  void validate() const {
    require(iterations >= 0, "train: iterations must be >= 0");
    require(p_ref < 0 || (p_ref >= 0 && p_ref <= 1), "train: p_ref must be in [0,1]");
    require(prune_interval >= 0, "train: prune_interval must be >= 0");
    raster.validate();
  }
};

struct TrainResult {
  GaussianCloud cloud;
  std::vector<double> loss_history;  // per-iteration loss of the drawn view
};

inline TrainResult train(GaussianCloud cloud, const std::vector<ReferenceView>& refs,
                         const std::vector<SyntheticView>& synths, const LossWeights& weights,
                         const TrainConfig& config,
                         const PerceptualLoss* perceptual = nullptr) {
  cloud.validate();
  config.validate();
  weights.validate();
  require(!refs.empty(), "train: at least one reference view required");
  for (const ReferenceView& r : refs)
    require(r.image.width == r.pose.intrinsics.width &&
                r.image.height == r.pose.intrinsics.height,
            "train: reference image does not match its pose intrinsics");
  for (const SyntheticView& s : synths)
    require(s.image.width == s.pose.intrinsics.width &&
                s.image.height == s.pose.intrinsics.height &&
                s.mask.width == s.image.width && s.mask.height == s.image.height,
            "train: synthetic image/mask does not match its pose intrinsics");

  // Distance weights depend only on static poses; compute once per view.
  std::vector<double> lambda(synths.size(), 1.0);
  if (!synths.empty() && config.use_distance_weight) {
    std::vector<CameraPose> ref_poses;
    ref_poses.reserve(refs.size());
    for (const ReferenceView& r : refs) ref_poses.push_back(r.pose);
    for (size_t i = 0; i < synths.size(); ++i)
      lambda[i] = distance_weight(synths[i].pose, ref_poses, config.invert_lambda);
  }

  double p_ref = config.p_ref;
  if (p_ref < 0)
    p_ref = static_cast<double>(refs.size()) /
            static_cast<double>(refs.size() + synths.size());

  AdamParams adam = config.adam;
  double extent = config.extent_override > 0 ? config.extent_override : scene_extent(cloud);
  adam.lr_mu *= std::max(extent, 1e-12);
  AdamState state(cloud.size(), adam);

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);

  TrainResult result;
  result.loss_history.reserve(static_cast<size_t>(config.iterations));

  for (int iter = 0; iter < config.iterations; ++iter) {
    bool use_ref = synths.empty() || coin(rng) < p_ref;
    size_t idx = 0;
    if (use_ref) {
      idx = std::uniform_int_distribution<size_t>(0, refs.size() - 1)(rng);
    } else {
      idx = std::uniform_int_distribution<size_t>(0, synths.size() - 1)(rng);
    }

    const CameraPose& pose = use_ref ? refs[idx].pose : synths[idx].pose;
    const Image& target = use_ref ? refs[idx].image : synths[idx].image;
    const Mask* mask = use_ref ? nullptr : &synths[idx].mask;

    if (mask && mask->count_valid() == 0) {
      // Fully masked view: zero loss, zero gradient, no optimizer step.
      result.loss_history.push_back(0.0);
      continue;
    }

    RenderedImage rendered = rasterize(cloud, pose, config.raster);
    Image grad(target.width, target.height, 3);
    double loss = rgb_loss_with_grad(target, rendered.rgb, weights, use_ref, mask, perceptual, grad);
    if (!use_ref) {
      loss *= lambda[idx];
      for (double& v : grad.data) v *= lambda[idx];
    }
    if (!std::isfinite(loss))
      throw StageError("train: non-finite loss at iteration " + std::to_string(iter));
    result.loss_history.push_back(loss);

    GradientBuffer grads = rasterize_backward(cloud, pose, grad, config.raster);
    adam_step(cloud, grads, state);

    if (config.prune_interval > 0 && (iter + 1) % config.prune_interval == 0) {
      std::vector<size_t> kept = prune_indices(cloud, config.prune_opacity);
      if (kept.size() < cloud.size()) {
        GaussianCloud next;
        next.sh_degree = cloud.sh_degree;
        next.gaussians.reserve(kept.size());
        for (size_t i : kept) next.gaussians.push_back(cloud.gaussians[i]);
        cloud = std::move(next);
        filter_adam_state(state, kept);
      }
    }
  }

  result.cloud = std::move(cloud);
  return result;
}

// Mean full objective over all training views at the current parameters;
// the training-progress gauge used by sanity checks.
inline double mean_training_loss(const GaussianCloud& cloud,
                                 const std::vector<ReferenceView>& refs,
                                 const std::vector<SyntheticView>& synths,
                                 const LossWeights& weights, const TrainConfig& config,
                                 const PerceptualLoss* perceptual = nullptr) {
  std::vector<CameraPose> ref_poses;
  for (const ReferenceView& r : refs) ref_poses.push_back(r.pose);
  double total = 0;
  size_t counted = 0;
  for (const ReferenceView& r : refs) {
    RenderedImage rendered = rasterize(cloud, r.pose, config.raster);
    total += rgb_loss(r.image, rendered.rgb, weights, true, nullptr, perceptual);
    ++counted;
  }
  for (const SyntheticView& s : synths) {
    if (s.mask.count_valid() == 0) {
      ++counted;
      continue;
    }
    RenderedImage rendered = rasterize(cloud, s.pose, config.raster);
    double lambda = config.use_distance_weight
                        ? distance_weight(s.pose, ref_poses, config.invert_lambda)
                        : 1.0;
    total += lambda * rgb_loss(s.image, rendered.rgb, weights, false, &s.mask, perceptual);
    ++counted;
  }
  require(counted > 0, "mean_training_loss: no views");
  return total / static_cast<double>(counted);
}

}  // namespace hsgs
