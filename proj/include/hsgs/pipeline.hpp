#pragma once

#include <cstdio>
#include <initializer_list>
#include <set>

#include "hsgs/hemisphere.hpp"
#include "hsgs/png_io.hpp"
#include "hsgs/pointcloud_render.hpp"
#include "hsgs/train.hpp"

// End-to-end orchestration: ingest a scene directory, sample synthetic
// viewpoints, render and optionally enhance them, train the Gaussian model,
// render held-out views, and evaluate. Every stage writes its outputs under
// the run directory and is keyed by a content hash of its inputs, so runs are
// reproducible byte-for-byte and an optional cache lets ablation rows share
// identical stages.

namespace hsgs {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Scene ingest

struct SceneBundle {
  PointCloud cloud;
  std::vector<ReferenceView> refs;
  std::vector<CameraPose> test_poses;   // may be empty
  std::vector<Image> test_images;      // empty, or parallel to test_poses
  std::vector<std::string> test_ids;   // file names of the test images
};

namespace detail {

inline std::vector<fs::path> list_pngs(const fs::path& dir, bool include_masks = false) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    if (!include_masks && entry.path().stem().string().ends_with("_mask")) continue;
    out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline void check_image_pose(const Image& img, const CameraPose& pose, const std::string& name) {
  require(img.width == pose.intrinsics.width && img.height == pose.intrinsics.height,
          "ingest: " + name + " is " + std::to_string(img.width) + "x" +
              std::to_string(img.height) + " but its pose expects " +
              std::to_string(pose.intrinsics.width) + "x" +
              std::to_string(pose.intrinsics.height));
}

}  // namespace detail

// Expects cloud.ply, ref_poses.json and ref/*.png; test_poses.json and
// test/*.png are optional. Images pair with poses in sorted-name order.
inline SceneBundle ingest_scene(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("scene directory not found: " + dir.string());
  SceneBundle bundle;
  bundle.cloud = load_ply(dir / "cloud.ply");

  std::vector<CameraPose> ref_poses = load_poses(dir / "ref_poses.json");
  std::vector<fs::path> ref_files = detail::list_pngs(dir / "ref");
  require(ref_files.size() == ref_poses.size(),
          "ingest: " + std::to_string(ref_files.size()) + " reference images for " +
              std::to_string(ref_poses.size()) + " poses");
  require(!ref_poses.empty(), "ingest: at least one reference view required");
  for (size_t i = 0; i < ref_files.size(); ++i) {
    ReferenceView view{load_png(ref_files[i]), ref_poses[i]};
    detail::check_image_pose(view.image, view.pose, ref_files[i].filename().string());
    bundle.refs.push_back(std::move(view));
  }

  if (fs::exists(dir / "test_poses.json")) {
    bundle.test_poses = load_poses(dir / "test_poses.json");
    if (fs::is_directory(dir / "test")) {
      std::vector<fs::path> test_files = detail::list_pngs(dir / "test");
      require(test_files.size() == bundle.test_poses.size(),
              "ingest: " + std::to_string(test_files.size()) + " test images for " +
                  std::to_string(bundle.test_poses.size()) + " poses");
      for (size_t i = 0; i < test_files.size(); ++i) {
        Image img = load_png(test_files[i]);
        detail::check_image_pose(img, bundle.test_poses[i], test_files[i].filename().string());
        bundle.test_images.push_back(std::move(img));
        bundle.test_ids.push_back(test_files[i].filename().string());
      }
    }
  }
  return bundle;
}

// ---------------------------------------------------------------------------
// External enhancement hook

namespace detail {

inline int run_command(const std::string& cmd, std::string& output) {
  FILE* pipe = ::popen((cmd + " 2>&1").c_str(), "r");
  if (!pipe) throw StageError("enhance: cannot spawn command: " + cmd);
  char buf[512];
  while (std::fgets(buf, sizeof(buf), pipe)) output += buf;
  int status = ::pclose(pipe);
  if (status == -1) throw StageError("enhance: lost child process: " + cmd);
  return status;
}

inline std::string substitute_all(std::string text, const std::string& key,
                                  const std::string& value) {
  size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    text.replace(pos, key.size(), value);
    pos += value.size();
  }
  return text;
}

}  // namespace detail

// Runs `command_template` once per image with {input} and {output} replaced by
// file paths. An empty template copies files unchanged. Mask images
// (*_mask.png) always bypass the command. The command must exit zero and
// write an output of unchanged dimensions.
inline void enhance_images(const fs::path& in_dir, const fs::path& out_dir,
                           const std::string& command_template) {
  if (!command_template.empty()) {
    require(command_template.find("{input}") != std::string::npos &&
                command_template.find("{output}") != std::string::npos,
            "enhance: command template must contain {input} and {output}");
  }
  fs::create_directories(out_dir);
  for (const fs::path& src : detail::list_pngs(in_dir, true)) {
    fs::path dst = out_dir / src.filename();
    bool is_mask = src.stem().string().ends_with("_mask");
    if (is_mask || command_template.empty()) {
      fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
      continue;
    }
    std::string cmd = detail::substitute_all(command_template, "{input}", src.string());
    cmd = detail::substitute_all(cmd, "{output}", dst.string());
    std::string log;
    int status = detail::run_command(cmd, log);
    if (status != 0)
      throw StageError("enhance: command failed (status " + std::to_string(status) + "): " + cmd +
                       (log.empty() ? "" : "\n" + log));
    if (!fs::exists(dst))
      throw StageError("enhance: command produced no output file: " + dst.string());
    Image before = load_png(src);
    Image after = load_png(dst);
    if (before.width != after.width || before.height != after.height)
      throw StageError("enhance: " + dst.filename().string() + " changed size from " +
                       std::to_string(before.width) + "x" + std::to_string(before.height) +
                       " to " + std::to_string(after.width) + "x" + std::to_string(after.height));
  }
}

// ---------------------------------------------------------------------------
// Pipeline configuration

struct PipelineConfig {
  uint64_t seed = 0;
  int threads = 1;
  // model
  int target_gaussians = 3000;  // 0 keeps every input point
  int sh_degree = 0;
  int iterations = 1000;
  // synthetic supervision
  bool use_synthetic = true;
  std::string strategy = "hemisphere";  // or "trajectory"
  HemisphereConfig hemisphere;
  int trajectory_count = 0;  // 0 matches the hemisphere schedule total
  int splat_radius = 1;
  std::string enhance_template;  // empty = identity
  // loss
  bool use_perceptual = true;
  bool use_distance_weight = true;
  bool invert_lambda = false;
  LossWeights weights;
  // optimization
  double p_ref = -1;
  int prune_interval = 200;
  double prune_opacity = 0.005;
  // training-time raster bounds; held-out renders always use exact settings
  double train_kernel_cutoff = 1e-3;
  double train_max_radius_px = 10;

  void validate() const {
    require(threads >= 1, "pipeline: threads must be >= 1");
    require(target_gaussians >= 0, "pipeline: target_gaussians must be >= 0");
    require(sh_degree == 0 || sh_degree == 1, "pipeline: sh_degree must be 0 or 1");
    require(iterations >= 0, "pipeline: iterations must be >= 0");
    require(strategy == "hemisphere" || strategy == "trajectory",
            "pipeline: strategy must be 'hemisphere' or 'trajectory'");
    require(trajectory_count >= 0, "pipeline: trajectory_count must be >= 0");
    require(splat_radius >= 0 && splat_radius <= 16, "pipeline: splat_radius must be in [0,16]");
    require(train_kernel_cutoff > 0 && train_kernel_cutoff < 1,
            "pipeline: train_kernel_cutoff must be in (0,1)");
    require(train_max_radius_px >= 0, "pipeline: train_max_radius_px must be >= 0");
    hemisphere.validate();
    weights.validate();
  }
};

inline nlohmann::ordered_json pipeline_config_to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["target_gaussians"] = c.target_gaussians;
  j["sh_degree"] = c.sh_degree;
  j["iterations"] = c.iterations;
  j["use_synthetic"] = c.use_synthetic;
  j["strategy"] = c.strategy;
  j["hemisphere"] = {{"levels", c.hemisphere.levels},
                     {"tau", c.hemisphere.tau},
                     {"radius", c.hemisphere.radius},
                     {"azimuth_offset", c.hemisphere.azimuth_offset},
                     {"fib_start", c.hemisphere.fib_start}};
  j["trajectory_count"] = c.trajectory_count;
  j["splat_radius"] = c.splat_radius;
  j["enhance_template"] = c.enhance_template;
  j["use_perceptual"] = c.use_perceptual;
  j["use_distance_weight"] = c.use_distance_weight;
  j["invert_lambda"] = c.invert_lambda;
  j["lambda_s"] = c.weights.lambda_s;
  j["lambda_p_ref"] = c.weights.lambda_p_ref;
  j["lambda_p_syn"] = c.weights.lambda_p_syn;
  j["p_ref"] = c.p_ref;
  j["prune_interval"] = c.prune_interval;
  j["prune_opacity"] = c.prune_opacity;
  j["train_kernel_cutoff"] = c.train_kernel_cutoff;
  j["train_max_radius_px"] = c.train_max_radius_px;
  return j;
}

// Accepts any subset of the keys written by pipeline_config_to_json; unknown
// keys are rejected so typos cannot silently fall back to defaults.
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "seed",          "threads",          "target_gaussians",
      "sh_degree",     "iterations",       "use_synthetic",
      "strategy",      "hemisphere",       "trajectory_count",
      "splat_radius",  "enhance_template", "use_perceptual",
      "use_distance_weight", "invert_lambda", "lambda_s",
      "lambda_p_ref",  "lambda_p_syn",     "p_ref",
      "prune_interval", "prune_opacity",   "train_kernel_cutoff",
      "train_max_radius_px"};
  require(j.is_object(), "pipeline config: JSON object expected");
  for (const auto& item : j.items())
    require(known.count(item.key()) > 0, "pipeline config: unknown key '" + item.key() + "'");

  PipelineConfig c;
  c.seed = j.value("seed", c.seed);
  c.threads = j.value("threads", c.threads);
  c.target_gaussians = j.value("target_gaussians", c.target_gaussians);
  c.sh_degree = j.value("sh_degree", c.sh_degree);
  c.iterations = j.value("iterations", c.iterations);
  c.use_synthetic = j.value("use_synthetic", c.use_synthetic);
  c.strategy = j.value("strategy", c.strategy);
  if (j.contains("hemisphere")) {
    const auto& h = j.at("hemisphere");
    static const std::set<std::string> hkeys = {"levels", "tau", "radius", "azimuth_offset",
                                                "fib_start"};
    for (const auto& item : h.items())
      require(hkeys.count(item.key()) > 0,
              "pipeline config: unknown hemisphere key '" + item.key() + "'");
    c.hemisphere.levels = h.value("levels", c.hemisphere.levels);
    c.hemisphere.tau = h.value("tau", c.hemisphere.tau);
    c.hemisphere.radius = h.value("radius", c.hemisphere.radius);
    c.hemisphere.azimuth_offset = h.value("azimuth_offset", c.hemisphere.azimuth_offset);
    c.hemisphere.fib_start = h.value("fib_start", c.hemisphere.fib_start);
  }
  c.trajectory_count = j.value("trajectory_count", c.trajectory_count);
  c.splat_radius = j.value("splat_radius", c.splat_radius);
  c.enhance_template = j.value("enhance_template", c.enhance_template);
  c.use_perceptual = j.value("use_perceptual", c.use_perceptual);
  c.use_distance_weight = j.value("use_distance_weight", c.use_distance_weight);
  c.invert_lambda = j.value("invert_lambda", c.invert_lambda);
  c.weights.lambda_s = j.value("lambda_s", c.weights.lambda_s);
  c.weights.lambda_p_ref = j.value("lambda_p_ref", c.weights.lambda_p_ref);
  c.weights.lambda_p_syn = j.value("lambda_p_syn", c.weights.lambda_p_syn);
  c.p_ref = j.value("p_ref", c.p_ref);
  c.prune_interval = j.value("prune_interval", c.prune_interval);
  c.prune_opacity = j.value("prune_opacity", c.prune_opacity);
  c.train_kernel_cutoff = j.value("train_kernel_cutoff", c.train_kernel_cutoff);
  c.train_max_radius_px = j.value("train_max_radius_px", c.train_max_radius_px);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Content hashing and the stage cache

namespace detail {

inline std::string hash_hex(uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline uint64_t hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  uint64_t h = kFnvOffset;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    std::streamsize got = in.gcount();
    if (got > 0) h = fnv1a(buf, static_cast<size_t>(got), h);
  }
  return h;
}

inline uint64_t stage_key(const std::string& stage, const nlohmann::ordered_json& params,
                          std::initializer_list<uint64_t> parents) {
  nlohmann::ordered_json j;
  j["stage"] = stage;
  j["params"] = params;
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (uint64_t p : parents) arr.push_back(hash_hex(p));
  j["parents"] = arr;
  std::string s = j.dump();
  return fnv1a(s.data(), s.size());
}

inline void copy_tree(const fs::path& src, const fs::path& dst) {
  if (fs::is_directory(src)) {
    fs::create_directories(dst);
    for (const auto& entry : fs::recursive_directory_iterator(src)) {
      if (!entry.is_regular_file()) continue;
      fs::path rel = fs::relative(entry.path(), src);
      fs::create_directories((dst / rel).parent_path());
      fs::copy_file(entry.path(), dst / rel, fs::copy_options::overwrite_existing);
    }
  } else if (fs::is_regular_file(src)) {
    if (dst.has_parent_path()) fs::create_directories(dst.parent_path());
    fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
  } else {
    throw IoError("cannot copy missing path: " + src.string());
  }
}

// Content-addressed store of finished stage outputs. A stage directory is
// trusted only once its .complete marker exists.
class StageCache {
 public:
  explicit StageCache(fs::path root) : root_(std::move(root)) {}

  bool enabled() const { return !root_.empty(); }

  bool restore(uint64_t key, const std::vector<std::string>& outputs,
               const fs::path& out_dir) const {
    if (!enabled()) return false;
    fs::path dir = root_ / hash_hex(key);
    if (!fs::exists(dir / ".complete")) return false;
    for (const std::string& rel : outputs) copy_tree(dir / rel, out_dir / rel);
    return true;
  }

  void store(uint64_t key, const std::vector<std::string>& outputs,
             const fs::path& out_dir) const {
    if (!enabled()) return;
    fs::path dir = root_ / hash_hex(key);
    if (fs::exists(dir / ".complete")) return;
    for (const std::string& rel : outputs) copy_tree(out_dir / rel, dir / rel);
    write_text_file(dir / ".complete", "");
  }

 private:
  fs::path root_;
};

inline std::string view_name(size_t index, const char* suffix = "") {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "view_%04zu%s.png", index, suffix);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Pipeline

struct PipelineResult {
  GaussianCloud model;
  MetricReport report;    // filled only when test ground truth exists
  bool evaluated = false;
  nlohmann::ordered_json manifest;
};

// Runs ingest -> sample -> synthesize -> enhance -> train -> render ->
// evaluate, writing all artifacts plus manifest.json under out_dir. Stages
// whose inputs are unchanged are restored from cache_dir when given. Repeat
// runs with the same scene and config produce byte-identical artifacts.
inline PipelineResult run_pipeline(const fs::path& scene_dir, const fs::path& out_dir,
                                   const PipelineConfig& config, const fs::path& cache_dir = {}) {
  config.validate();
  fs::create_directories(out_dir);
  detail::StageCache cache(cache_dir);

  nlohmann::ordered_json manifest;
  manifest["config"] = pipeline_config_to_json(config);

  // Input hashes: scene files drive every stage key.
  nlohmann::ordered_json inputs;
  uint64_t cloud_hash = detail::hash_file(scene_dir / "cloud.ply");
  uint64_t ref_poses_hash = detail::hash_file(scene_dir / "ref_poses.json");
  inputs["cloud.ply"] = detail::hash_hex(cloud_hash);
  inputs["ref_poses.json"] = detail::hash_hex(ref_poses_hash);
  uint64_t ref_images_hash = kFnvOffset;
  for (const fs::path& p : detail::list_pngs(scene_dir / "ref")) {
    uint64_t h = detail::hash_file(p);
    std::string rel = "ref/" + p.filename().string();
    inputs[rel] = detail::hash_hex(h);
    ref_images_hash = mix_seed(ref_images_hash, h);
  }
  uint64_t test_poses_hash = 0;
  uint64_t test_images_hash = kFnvOffset;
  if (fs::exists(scene_dir / "test_poses.json")) {
    test_poses_hash = detail::hash_file(scene_dir / "test_poses.json");
    inputs["test_poses.json"] = detail::hash_hex(test_poses_hash);
    if (fs::is_directory(scene_dir / "test")) {
      for (const fs::path& p : detail::list_pngs(scene_dir / "test")) {
        uint64_t h = detail::hash_file(p);
        inputs["test/" + p.filename().string()] = detail::hash_hex(h);
        test_images_hash = mix_seed(test_images_hash, h);
      }
    }
  }
  manifest["inputs"] = inputs;

  SceneBundle bundle = ingest_scene(scene_dir);
  std::vector<CameraPose> ref_poses;
  for (const ReferenceView& r : bundle.refs) ref_poses.push_back(r.pose);

  nlohmann::ordered_json stages;
  uint64_t enhance_key = 0;

  // Synthetic-supervision stages.
  if (config.use_synthetic) {
    nlohmann::ordered_json sample_params;
    sample_params["strategy"] = config.strategy;
    sample_params["hemisphere"] = manifest["config"]["hemisphere"];
    sample_params["trajectory_count"] = config.trajectory_count;
    uint64_t sample_key =
        detail::stage_key("sample", sample_params, {ref_poses_hash});
    stages["sample"] = detail::hash_hex(sample_key);
    if (!cache.restore(sample_key, {"synthetic_poses.json"}, out_dir)) {
      SampledPoseSet sampled;
      if (config.strategy == "hemisphere") {
        sampled = sample_poses(config.hemisphere, ref_poses);
      } else {
        int n = config.trajectory_count;
        if (n <= 0)
          for (uint64_t count : level_counts(config.hemisphere)) n += static_cast<int>(count);
        Vec3 center = config.hemisphere.center ? *config.hemisphere.center
                                               : estimate_scene_center(ref_poses);
        sampled = trajectory_sample(ref_poses, n, center, config.hemisphere.up);
      }
      save_sampled_poses(out_dir / "synthetic_poses.json", sampled);
      cache.store(sample_key, {"synthetic_poses.json"}, out_dir);
    }
    std::vector<CameraPose> synth_poses = load_poses(out_dir / "synthetic_poses.json");

    nlohmann::ordered_json synth_params;
    synth_params["splat_radius"] = config.splat_radius;
    uint64_t synth_key =
        detail::stage_key("synthesize", synth_params, {sample_key, cloud_hash});
    stages["synthesize"] = detail::hash_hex(synth_key);
    if (!cache.restore(synth_key, {"synthetic"}, out_dir)) {
      fs::create_directories(out_dir / "synthetic");
      SplatConfig splat;
      splat.splat_radius = config.splat_radius;
      splat.threads = config.threads;
      for (size_t i = 0; i < synth_poses.size(); ++i) {
        RenderedImage img = render_points(bundle.cloud, synth_poses[i], splat);
        save_png(out_dir / "synthetic" / detail::view_name(i), img.rgb);
        save_mask_png(out_dir / "synthetic" / detail::view_name(i, "_mask"), img.mask);
      }
      cache.store(synth_key, {"synthetic"}, out_dir);
    }

    nlohmann::ordered_json enhance_params;
    enhance_params["template"] = config.enhance_template;
    enhance_key = detail::stage_key("enhance", enhance_params, {synth_key});
    stages["enhance"] = detail::hash_hex(enhance_key);
    if (!cache.restore(enhance_key, {"enhanced"}, out_dir)) {
      enhance_images(out_dir / "synthetic", out_dir / "enhanced", config.enhance_template);
      cache.store(enhance_key, {"enhanced"}, out_dir);
    }
  }

  // Training stage.
  nlohmann::ordered_json train_params;
  for (const char* key : {"seed", "threads", "target_gaussians", "sh_degree", "iterations",
                          "use_perceptual", "use_distance_weight", "invert_lambda", "lambda_s",
                          "lambda_p_ref", "lambda_p_syn", "p_ref", "prune_interval",
                          "prune_opacity", "train_kernel_cutoff", "train_max_radius_px"})
    train_params[key] = manifest["config"][key];
  uint64_t train_key = detail::stage_key(
      "train", train_params,
      {cloud_hash, ref_poses_hash, ref_images_hash, config.use_synthetic ? enhance_key : 0});
  stages["train"] = detail::hash_hex(train_key);

  if (!cache.restore(train_key, {"model.ckpt", "loss_summary.json"}, out_dir)) {
    std::vector<SyntheticView> synths;
    if (config.use_synthetic) {
      std::vector<CameraPose> synth_poses = load_poses(out_dir / "synthetic_poses.json");
      for (size_t i = 0; i < synth_poses.size(); ++i) {
        SyntheticView view;
        view.image = load_png(out_dir / "enhanced" / detail::view_name(i));
        view.mask = load_mask_png(out_dir / "enhanced" / detail::view_name(i, "_mask"));
        view.pose = synth_poses[i];
        synths.push_back(std::move(view));
      }
    }

    GaussianCloud initial = init_from_pointcloud(
        bundle.cloud, static_cast<size_t>(config.target_gaussians), config.seed, config.sh_degree);

    LossWeights weights = config.weights;
    if (!config.use_perceptual) weights.lambda_p_ref = weights.lambda_p_syn = 0;

    TrainConfig tc;
    tc.iterations = config.iterations;
    tc.seed = config.seed;
    tc.p_ref = config.p_ref;
    tc.prune_interval = config.prune_interval;
    tc.prune_opacity = config.prune_opacity;
    tc.use_distance_weight = config.use_distance_weight;
    tc.invert_lambda = config.invert_lambda;
    tc.raster.kernel_cutoff = config.train_kernel_cutoff;
    tc.raster.max_radius_px = config.train_max_radius_px;
    tc.raster.threads = config.threads;

    double initial_loss = mean_training_loss(initial, bundle.refs, synths, weights, tc);
    TrainResult trained = train(std::move(initial), bundle.refs, synths, weights, tc);
    double final_loss = mean_training_loss(trained.cloud, bundle.refs, synths, weights, tc);

    save_checkpoint(trained.cloud, out_dir / "model.ckpt");
    nlohmann::ordered_json summary;
    summary["initial_mean_loss"] = initial_loss;
    summary["final_mean_loss"] = final_loss;
    summary["iterations"] = config.iterations;
    summary["final_gaussians"] = trained.cloud.size();
    summary["loss_history"] = trained.loss_history;
    write_text_file(out_dir / "loss_summary.json", summary.dump(2) + "\n");
    cache.store(train_key, {"model.ckpt", "loss_summary.json"}, out_dir);
  }

  PipelineResult result;
  result.model = load_checkpoint(out_dir / "model.ckpt");

  // Held-out rendering and evaluation, at exact raster settings.
  if (!bundle.test_poses.empty()) {
    uint64_t render_key = detail::stage_key("render", nlohmann::ordered_json::object(),
                                            {train_key, test_poses_hash});
    stages["render"] = detail::hash_hex(render_key);
    if (!cache.restore(render_key, {"renders"}, out_dir)) {
      fs::create_directories(out_dir / "renders");
      RasterOptions opt;
      opt.threads = config.threads;
      for (size_t i = 0; i < bundle.test_poses.size(); ++i) {
        RenderedImage img = rasterize(result.model, bundle.test_poses[i], opt);
        save_png(out_dir / "renders" / detail::view_name(i), img.rgb);
      }
      cache.store(render_key, {"renders"}, out_dir);
    }

    if (!bundle.test_images.empty()) {
      uint64_t eval_key = detail::stage_key("evaluate", nlohmann::ordered_json::object(),
                                            {render_key, test_images_hash});
      stages["evaluate"] = detail::hash_hex(eval_key);
      if (!cache.restore(eval_key, {"metrics.json"}, out_dir)) {
        std::vector<Image> rendered;
        for (size_t i = 0; i < bundle.test_poses.size(); ++i)
          rendered.push_back(load_png(out_dir / "renders" / detail::view_name(i)));
        MetricReport report = evaluate(rendered, bundle.test_images, bundle.test_ids);
        write_text_file(out_dir / "metrics.json", report_to_json(report).dump(2) + "\n");
        cache.store(eval_key, {"metrics.json"}, out_dir);
      }
      result.report = report_from_json(read_json_file(out_dir / "metrics.json"));
      result.evaluated = true;
    }
  }
  manifest["stages"] = stages;

  // Hash every artifact; the manifest uses only run-relative paths.
  nlohmann::ordered_json artifacts;
  fs::path cache_abs =
      cache_dir.empty() ? fs::path() : fs::weakly_canonical(fs::absolute(cache_dir));
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
    if (!entry.is_regular_file()) continue;
    fs::path rel = fs::relative(entry.path(), out_dir);
    if (rel == "manifest.json") continue;
    if (!cache_abs.empty()) {
      fs::path rel_to_cache =
          fs::weakly_canonical(fs::absolute(entry.path())).lexically_relative(cache_abs);
      if (!rel_to_cache.empty() && *rel_to_cache.begin() != "..") continue;
    }
    files.push_back(rel);
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.generic_string() < b.generic_string(); });
  for (const fs::path& rel : files)
    artifacts[rel.generic_string()] = detail::hash_hex(detail::hash_file(out_dir / rel));
  manifest["artifacts"] = artifacts;

  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  result.manifest = std::move(manifest);
  return result;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  std::string name;
  PipelineConfig config;
};

// Rows isolate one ingredient each: no synthetic supervision, plain synthetic
// supervision, distance-weighted + perceptual supervision, the external
// enhancement hook (only when a template is configured), and the trajectory
// sampling alternative.
inline std::vector<AblationRow> ablation_rows(const PipelineConfig& base) {
  std::vector<AblationRow> rows;

  PipelineConfig a = base;
  a.use_synthetic = false;
  a.use_perceptual = false;
  a.use_distance_weight = false;
  a.enhance_template.clear();
  rows.push_back({"baseline", a});

  PipelineConfig b = base;
  b.use_synthetic = true;
  b.strategy = "hemisphere";
  b.use_perceptual = false;
  b.use_distance_weight = false;
  b.enhance_template.clear();
  rows.push_back({"synthetic", b});

  PipelineConfig c = base;
  c.use_synthetic = true;
  c.strategy = "hemisphere";
  c.use_perceptual = true;
  c.use_distance_weight = true;
  c.enhance_template.clear();
  rows.push_back({"synthetic_weighted", c});

  if (!base.enhance_template.empty()) {
    PipelineConfig d = c;
    d.enhance_template = base.enhance_template;
    rows.push_back({"synthetic_enhanced", d});
  }

  PipelineConfig t = c;
  t.strategy = "trajectory";
  rows.push_back({"trajectory", t});

  return rows;
}

inline nlohmann::ordered_json run_ablation(const fs::path& scene_dir, const fs::path& out_root,
                                           const PipelineConfig& base) {
  fs::create_directories(out_root);
  std::vector<AblationRow> rows = ablation_rows(base);

  nlohmann::ordered_json table;
  table["rows"] = nlohmann::ordered_json::array();
  std::string md = "| run | psnr | ssim | perceptual |\n|---|---|---|---|\n";
  for (const AblationRow& row : rows) {
    PipelineResult result =
        run_pipeline(scene_dir, out_root / row.name, row.config, out_root / "cache");
    nlohmann::ordered_json entry;
    entry["name"] = row.name;
    entry["evaluated"] = result.evaluated;
    if (result.evaluated) {
      entry["psnr"] = result.report.mean_psnr;
      entry["ssim"] = result.report.mean_ssim;
      entry["perceptual"] = result.report.mean_perceptual;
      char line[160];
      std::snprintf(line, sizeof(line), "| %s | %.3f | %.4f | %.4f |\n", row.name.c_str(),
                    result.report.mean_psnr, result.report.mean_ssim,
                    result.report.mean_perceptual);
      md += line;
    } else {
      md += "| " + row.name + " | - | - | - |\n";
    }
    table["rows"].push_back(entry);
  }
  write_text_file(out_root / "ablation.json", table.dump(2) + "\n");
  write_text_file(out_root / "ablation.md", md);
  return table;
}

}  // namespace hsgs
