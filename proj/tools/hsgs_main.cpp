#include <CLI11.hpp>
#include <iostream>

#include "hsgs/hsgs.hpp"

// Command-line front end. Stage subcommands (gen-toy, ingest, sample-views,
// render-pointcloud, enhance, train, render, evaluate) operate on explicit
// files; run and ablate orchestrate the full pipeline with caching and a
// manifest. Exit codes: 0 success, 2 invalid input or usage, 3 runtime
// failure.

namespace {

namespace fs = std::filesystem;
using namespace hsgs;

std::string view_file(size_t index, const char* suffix = "") {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "view_%04zu%s.png", index, suffix);
  return buf;
}

std::vector<Image> load_image_dir(const fs::path& dir, std::vector<std::string>* names) {
  std::vector<Image> images;
  for (const fs::path& p : detail::list_pngs(dir)) {
    images.push_back(load_png(p));
    if (names) names->push_back(p.filename().string());
  }
  return images;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hemisphere-supervised gaussian splatting toolkit"};
  app.require_subcommand(1);

  uint64_t seed = 0;
  int threads = 1;
  bool deterministic = false;
  CLI::Option* seed_opt = app.add_option("--seed", seed, "master RNG seed");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--deterministic", deterministic, "force single-threaded execution");

  // gen-toy
  auto* gen = app.add_subcommand("gen-toy", "generate the procedural toy scene");
  fs::path gen_out;
  ToySceneSpec spec;
  gen->add_option("--out", gen_out, "output scene directory")->required();
  gen->add_option("--points", spec.point_count, "surface sample count");
  gen->add_option("--width", spec.width, "image width");
  gen->add_option("--height", spec.height, "image height");
  gen->add_option("--refs", spec.m_views, "reference view count");
  gen->add_option("--tests", spec.t_views, "held-out view count");
  gen->add_option("--dense-factor", spec.dense_factor, "ground-truth densification factor");
  gen->callback([&] {
    if (seed_opt->count()) spec.seed = seed;
    generate_toy_scene(spec, gen_out);
    std::cout << "scene written to " << gen_out.string() << "\n";
  });

  // ingest
  auto* ingest = app.add_subcommand("ingest", "validate a scene directory");
  fs::path ingest_dir;
  ingest->add_option("--scene", ingest_dir, "scene directory")->required();
  ingest->callback([&] {
    SceneBundle bundle = ingest_scene(ingest_dir);
    nlohmann::ordered_json j;
    j["points"] = bundle.cloud.positions.size();
    j["reference_views"] = bundle.refs.size();
    j["test_poses"] = bundle.test_poses.size();
    j["test_images"] = bundle.test_images.size();
    j["width"] = bundle.refs[0].pose.intrinsics.width;
    j["height"] = bundle.refs[0].pose.intrinsics.height;
    std::cout << j.dump(2) << "\n";
  });

  // sample-views
  auto* sample = app.add_subcommand("sample-views", "sample synthetic camera poses");
  fs::path sample_refs, sample_out;
  std::string strategy = "hemisphere";
  HemisphereConfig hemi;
  int traj_count = 0;
  sample->add_option("--ref-poses", sample_refs, "reference pose JSON")->required();
  sample->add_option("--out", sample_out, "output pose JSON")->required();
  sample->add_option("--strategy", strategy, "hemisphere or trajectory")
      ->check(CLI::IsMember({"hemisphere", "trajectory"}));
  sample->add_option("--levels", hemi.levels, "elevation level count");
  sample->add_option("--tau", hemi.tau, "max elevation as a fraction of pi/2");
  sample->add_option("--fib-start", hemi.fib_start, "fibonacci index of level 1");
  sample->add_option("--azimuth-offset", hemi.azimuth_offset, "azimuth offset in radians");
  sample->add_option("--radius", hemi.radius, "hemisphere radius (0 = mean reference distance)");
  sample->add_option("--count", traj_count, "trajectory sample count (0 = hemisphere total)");
  sample->callback([&] {
    std::vector<CameraPose> refs = load_poses(sample_refs);
    SampledPoseSet set;
    if (strategy == "hemisphere") {
      set = sample_poses(hemi, refs);
    } else {
      int n = traj_count;
      if (n <= 0)
        for (uint64_t c : level_counts(hemi)) n += static_cast<int>(c);
      set = trajectory_sample(refs, n, estimate_scene_center(refs));
    }
    save_sampled_poses(sample_out, set);
    std::cout << set.poses.size() << " poses written to " << sample_out.string() << "\n";
  });

  // render-pointcloud
  auto* rpc = app.add_subcommand("render-pointcloud", "z-buffer splat a point cloud");
  fs::path rpc_cloud, rpc_poses, rpc_out;
  SplatConfig splat;
  bool rpc_masks = false;
  rpc->add_option("--cloud", rpc_cloud, "PLY point cloud")->required();
  rpc->add_option("--poses", rpc_poses, "pose JSON")->required();
  rpc->add_option("--out", rpc_out, "output image directory")->required();
  rpc->add_option("--splat-radius", splat.splat_radius, "splat radius in pixels");
  rpc->add_flag("--masks", rpc_masks, "also write *_mask.png coverage masks");
  rpc->callback([&] {
    splat.threads = deterministic ? 1 : threads;
    PointCloud cloud = load_ply(rpc_cloud);
    std::vector<CameraPose> poses = load_poses(rpc_poses);
    fs::create_directories(rpc_out);
    for (size_t i = 0; i < poses.size(); ++i) {
      RenderedImage img = render_points(cloud, poses[i], splat);
      save_png(rpc_out / view_file(i), img.rgb);
      if (rpc_masks) save_mask_png(rpc_out / view_file(i, "_mask"), img.mask);
    }
    std::cout << poses.size() << " views written to " << rpc_out.string() << "\n";
  });

  // enhance
  auto* enh = app.add_subcommand("enhance", "run the external enhancement hook");
  fs::path enh_in, enh_out;
  std::string enh_cmd;
  enh->add_option("--in", enh_in, "input image directory")->required();
  enh->add_option("--out", enh_out, "output image directory")->required();
  enh->add_option("--command", enh_cmd, "command template with {input} and {output}");
  enh->callback([&] {
    enhance_images(enh_in, enh_out, enh_cmd);
    std::cout << "enhanced images written to " << enh_out.string() << "\n";
  });

  // train
  auto* tr = app.add_subcommand("train", "optimize a gaussian model");
  fs::path tr_cloud, tr_ref_poses, tr_ref_images, tr_synth_poses, tr_synth_images;
  fs::path tr_model, tr_loss_out;
  int tr_target = 3000, tr_sh = 0;
  TrainConfig tc;
  LossWeights weights;
  bool tr_no_perceptual = false;
  tr->add_option("--cloud", tr_cloud, "PLY point cloud")->required();
  tr->add_option("--ref-poses", tr_ref_poses, "reference pose JSON")->required();
  tr->add_option("--ref-images", tr_ref_images, "reference image directory")->required();
  tr->add_option("--synth-poses", tr_synth_poses, "synthetic pose JSON");
  tr->add_option("--synth-images", tr_synth_images, "synthetic image directory with masks");
  tr->add_option("--out-model", tr_model, "output checkpoint path")->required();
  tr->add_option("--loss-out", tr_loss_out, "optional loss history JSON");
  tr->add_option("--iterations", tc.iterations, "optimization iterations");
  tr->add_option("--target-gaussians", tr_target, "initial gaussian budget (0 = all points)");
  tr->add_option("--sh-degree", tr_sh, "spherical harmonics degree (0 or 1)");
  tr->add_option("--p-ref", tc.p_ref, "probability of drawing a reference view");
  tr->add_option("--prune-interval", tc.prune_interval, "iterations between prunes (0 = off)");
  tr->add_option("--prune-opacity", tc.prune_opacity, "opacity pruning threshold");
  tr->add_option("--lambda-s", weights.lambda_s, "structural loss weight");
  tr->add_option("--lambda-p-ref", weights.lambda_p_ref, "perceptual weight, reference views");
  tr->add_option("--lambda-p-syn", weights.lambda_p_syn, "perceptual weight, synthetic views");
  tr->add_flag("--no-perceptual", tr_no_perceptual, "drop the perceptual term");
  tr->add_flag("--no-distance-weight", "fix every synthetic view weight at 1");
  tr->add_flag("--invert-lambda", tc.invert_lambda, "weight nearby synthetic views instead");
  tr->add_option("--kernel-cutoff", tc.raster.kernel_cutoff, "gaussian support cutoff");
  tr->add_option("--max-radius-px", tc.raster.max_radius_px, "splat radius cap (0 = none)");
  tr->callback([&] {
    tc.seed = seed;
    tc.raster.threads = deterministic ? 1 : threads;
    tc.use_distance_weight = tr->count("--no-distance-weight") == 0;
    if (tr_no_perceptual) weights.lambda_p_ref = weights.lambda_p_syn = 0;
    require(tr_synth_poses.empty() == tr_synth_images.empty(),
            "train: --synth-poses and --synth-images must be given together");

    PointCloud cloud = load_ply(tr_cloud);
    std::vector<CameraPose> ref_poses = load_poses(tr_ref_poses);
    std::vector<Image> ref_images = load_image_dir(tr_ref_images, nullptr);
    require(ref_images.size() == ref_poses.size(), "train: reference image/pose count mismatch");
    std::vector<ReferenceView> refs;
    for (size_t i = 0; i < ref_poses.size(); ++i)
      refs.push_back({std::move(ref_images[i]), ref_poses[i]});

    std::vector<SyntheticView> synths;
    if (!tr_synth_poses.empty()) {
      std::vector<CameraPose> poses = load_poses(tr_synth_poses);
      std::vector<fs::path> files = detail::list_pngs(tr_synth_images);
      require(files.size() == poses.size(), "train: synthetic image/pose count mismatch");
      for (size_t i = 0; i < poses.size(); ++i) {
        fs::path mask_path = files[i].parent_path() / (files[i].stem().string() + "_mask.png");
        require(fs::exists(mask_path), "train: missing mask " + mask_path.string());
        synths.push_back({load_png(files[i]), load_mask_png(mask_path), poses[i]});
      }
    }

    GaussianCloud initial =
        init_from_pointcloud(cloud, static_cast<size_t>(tr_target), seed, tr_sh);
    TrainResult result = train(std::move(initial), refs, synths, weights, tc);
    save_checkpoint(result.cloud, tr_model);
    if (!tr_loss_out.empty()) {
      nlohmann::ordered_json j;
      j["loss_history"] = result.loss_history;
      j["final_gaussians"] = result.cloud.size();
      write_text_file(tr_loss_out, j.dump(2) + "\n");
    }
    std::cout << "model with " << result.cloud.size() << " gaussians written to "
              << tr_model.string() << "\n";
  });

  // render
  auto* ren = app.add_subcommand("render", "render a trained model");
  fs::path ren_model, ren_poses, ren_out;
  ren->add_option("--model", ren_model, "model checkpoint")->required();
  ren->add_option("--poses", ren_poses, "pose JSON")->required();
  ren->add_option("--out", ren_out, "output image directory")->required();
  ren->callback([&] {
    GaussianCloud model = load_checkpoint(ren_model);
    std::vector<CameraPose> poses = load_poses(ren_poses);
    fs::create_directories(ren_out);
    RasterOptions opt;
    opt.threads = deterministic ? 1 : threads;
    for (size_t i = 0; i < poses.size(); ++i)
      save_png(ren_out / view_file(i), rasterize(model, poses[i], opt).rgb);
    std::cout << poses.size() << " views written to " << ren_out.string() << "\n";
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "compare rendered views with ground truth");
  fs::path ev_rendered, ev_truth, ev_out;
  ev->add_option("--rendered", ev_rendered, "rendered image directory")->required();
  ev->add_option("--truth", ev_truth, "ground-truth image directory")->required();
  ev->add_option("--out", ev_out, "optional metrics JSON path");
  ev->callback([&] {
    std::vector<std::string> ids;
    std::vector<Image> truth = load_image_dir(ev_truth, &ids);
    std::vector<Image> rendered = load_image_dir(ev_rendered, nullptr);
    MetricReport report = evaluate(rendered, truth, ids);
    nlohmann::ordered_json j = report_to_json(report);
    if (!ev_out.empty()) write_text_file(ev_out, j.dump(2) + "\n");
    std::cout << j.dump(2) << "\n";
  });

  // run / ablate share config plumbing
  auto add_pipeline_options = [&](CLI::App* cmd, fs::path& scene, fs::path& out,
                                  fs::path& config_path, std::string& enhance_cmd) {
    cmd->add_option("--scene", scene, "scene directory")->required();
    cmd->add_option("--out", out, "output directory")->required();
    cmd->add_option("--config", config_path, "pipeline config JSON");
    cmd->add_option("--enhance-command", enhance_cmd, "enhancement command template");
    cmd->add_option("--iterations", "optimization iterations");
    cmd->add_option("--target-gaussians", "initial gaussian budget");
    cmd->add_option("--sh-degree", "spherical harmonics degree (0 or 1)");
    cmd->add_option("--strategy", "hemisphere or trajectory")
        ->check(CLI::IsMember({"hemisphere", "trajectory"}));
    cmd->add_flag("--no-synthetic", "train on reference views only");
    cmd->add_flag("--no-perceptual", "drop the perceptual term");
    cmd->add_flag("--no-distance-weight", "fix every synthetic view weight at 1");
    cmd->add_flag("--invert-lambda", "weight nearby synthetic views instead");
  };
  auto build_config = [&](CLI::App* cmd, const fs::path& config_path,
                          const std::string& enhance_cmd) {
    PipelineConfig config;
    if (!config_path.empty()) config = pipeline_config_from_json(read_json_file(config_path));
    if (seed_opt->count()) config.seed = seed;
    config.threads = deterministic ? 1 : threads;
    if (cmd->count("--iterations")) config.iterations = cmd->get_option("--iterations")->as<int>();
    if (cmd->count("--target-gaussians"))
      config.target_gaussians = cmd->get_option("--target-gaussians")->as<int>();
    if (cmd->count("--sh-degree")) config.sh_degree = cmd->get_option("--sh-degree")->as<int>();
    if (cmd->count("--strategy")) config.strategy = cmd->get_option("--strategy")->as<std::string>();
    if (cmd->count("--no-synthetic")) config.use_synthetic = false;
    if (cmd->count("--no-perceptual")) config.use_perceptual = false;
    if (cmd->count("--no-distance-weight")) config.use_distance_weight = false;
    if (cmd->count("--invert-lambda")) config.invert_lambda = true;
    if (cmd->count("--enhance-command")) config.enhance_template = enhance_cmd;
    return config;
  };

  auto* run = app.add_subcommand("run", "run the full pipeline");
  fs::path run_scene, run_out, run_config, run_cache;
  std::string run_enhance;
  add_pipeline_options(run, run_scene, run_out, run_config, run_enhance);
  run->add_option("--cache", run_cache, "stage cache directory");
  run->callback([&] {
    PipelineConfig config = build_config(run, run_config, run_enhance);
    PipelineResult result = run_pipeline(run_scene, run_out, config, run_cache);
    std::cout << "model: " << result.model.size() << " gaussians\n";
    if (result.evaluated) {
      std::cout << "psnr " << result.report.mean_psnr << "  ssim " << result.report.mean_ssim
                << "  perceptual " << result.report.mean_perceptual << "\n";
    }
    std::cout << "manifest: " << (run_out / "manifest.json").string() << "\n";
  });

  auto* abl = app.add_subcommand("ablate", "run the ablation grid");
  fs::path abl_scene, abl_out, abl_config;
  std::string abl_enhance;
  add_pipeline_options(abl, abl_scene, abl_out, abl_config, abl_enhance);
  abl->callback([&] {
    PipelineConfig config = build_config(abl, abl_config, abl_enhance);
    run_ablation(abl_scene, abl_out, config);
    std::ifstream md(abl_out / "ablation.md");
    std::cout << md.rdbuf();
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const hsgs::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
