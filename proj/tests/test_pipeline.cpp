#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "test_util.hpp"

using namespace hsgs;
namespace fs = std::filesystem;

namespace {

// One small scene shared by the pipeline tests; generated on first use.
const fs::path& toy_scene_dir() {
  static testutil::TempDir dir("pipe_scene");
  static const bool done = [] {
    ToySceneSpec spec;
    spec.seed = 5;
    spec.point_count = 2500;
    spec.m_views = 3;
    spec.t_views = 4;
    spec.width = 48;
    spec.height = 48;
    spec.dense_factor = 6;
    generate_toy_scene(spec, dir.path());
    return true;
  }();
  (void)done;
  return dir.path();
}

PipelineConfig small_config() {
  PipelineConfig c;
  c.seed = 1;
  c.threads = 1;
  c.target_gaussians = 250;
  c.iterations = 12;
  c.hemisphere.levels = 2;
  c.prune_interval = 6;
  return c;
}

}  // namespace

TEST_CASE("toy scene generator writes a complete, ingestible scene") {
  const fs::path& dir = toy_scene_dir();

  for (const char* name : {"cloud.ply", "ref_poses.json", "test_poses.json", "scene.json"})
    REQUIRE(fs::exists(dir / name));
  for (int i = 0; i < 3; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "view_%04d.png", i);
    REQUIRE(fs::exists(dir / "ref" / buf));
  }
  for (int i = 0; i < 4; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "view_%04d.png", i);
    REQUIRE(fs::exists(dir / "test" / buf));
  }

  nlohmann::json scene = nlohmann::json::parse(testutil::read_file(dir / "scene.json"));
  CHECK(scene.at("seed").get<uint64_t>() == 5);
  CHECK(scene.at("point_count").get<int>() == 2500);
  CHECK(scene.at("m_views").get<int>() == 3);
  CHECK(scene.at("t_views").get<int>() == 4);
  CHECK(scene.at("width").get<int>() == 48);
  CHECK(scene.at("height").get<int>() == 48);
  const auto& coverage = scene.at("gt_valid_fraction");
  REQUIRE(coverage.size() == 7);
  for (const auto& [name, frac] : coverage.items()) {
    INFO(name);
    CHECK(frac.get<double>() > 0.5);
    CHECK(frac.get<double>() <= 1.0);
  }

  SceneBundle bundle = ingest_scene(dir);
  CHECK(bundle.cloud.size() == 2500);
  REQUIRE(bundle.refs.size() == 3);
  CHECK(bundle.refs[0].image.width == 48);
  CHECK(bundle.refs[0].image.height == 48);
  REQUIRE(bundle.test_poses.size() == 4);
  REQUIRE(bundle.test_images.size() == 4);
  CHECK(bundle.test_ids[0] == "view_0000.png");
  CHECK(bundle.test_ids[3] == "view_0003.png");
}

TEST_CASE("scene ingest rejects inconsistent directories") {
  testutil::TempDir dir("pipe_ingest");
  ToySceneSpec spec;
  spec.seed = 9;
  spec.point_count = 1000;
  spec.m_views = 2;
  spec.t_views = 0;
  spec.width = 32;
  spec.height = 32;
  spec.dense_factor = 2;
  generate_toy_scene(spec, dir.path());

  SECTION("missing directory") {
    CHECK_THROWS_AS(ingest_scene(dir / "nope"), IoError);
  }
  SECTION("image/pose count mismatch") {
    fs::remove(dir / "ref" / "view_0001.png");
    CHECK_THROWS_AS(ingest_scene(dir.path()), ValidationError);
  }
  SECTION("image dimensions disagree with the pose") {
    save_png(dir / "ref" / "view_0000.png", testutil::random_byte_image(40, 32, 3));
    CHECK_THROWS_AS(ingest_scene(dir.path()), ValidationError);
  }
}

TEST_CASE("enhancement hook copies, transforms, and validates") {
  testutil::TempDir dir("pipe_enhance");
  fs::create_directories(dir / "in");
  Image a = testutil::random_byte_image(20, 14, 11);
  Image b = testutil::random_byte_image(20, 14, 12);
  save_png(dir / "in" / "a.png", a);
  save_png(dir / "in" / "b.png", b);

  SECTION("empty template copies files byte for byte") {
    enhance_images(dir / "in", dir / "out", "");
    CHECK(testutil::read_file(dir / "out" / "a.png") == testutil::read_file(dir / "in" / "a.png"));
    CHECK(testutil::read_file(dir / "out" / "b.png") == testutil::read_file(dir / "in" / "b.png"));
  }
  SECTION("copy command reproduces the input") {
    enhance_images(dir / "in", dir / "out", "cp {input} {output}");
    CHECK(testutil::read_file(dir / "out" / "a.png") == testutil::read_file(dir / "in" / "a.png"));
  }
  SECTION("masks bypass the command") {
    fs::create_directories(dir / "masked");
    save_png(dir / "masked" / "view_0000_mask.png", a);
    enhance_images(dir / "masked", dir / "out", "false {input} {output}");
    CHECK(testutil::read_file(dir / "out" / "view_0000_mask.png") ==
          testutil::read_file(dir / "masked" / "view_0000_mask.png"));
  }
  SECTION("template must name both placeholders") {
    CHECK_THROWS_AS(enhance_images(dir / "in", dir / "out", "cp {input} out.png"),
                    ValidationError);
    CHECK_THROWS_AS(enhance_images(dir / "in", dir / "out", "touch {output}"), ValidationError);
  }
  SECTION("failing command") {
    CHECK_THROWS_AS(enhance_images(dir / "in", dir / "out", "false {input} {output}"), StageError);
  }
  SECTION("command that writes no output") {
    CHECK_THROWS_AS(enhance_images(dir / "in", dir / "out", "true {input} {output}"), StageError);
  }
  SECTION("command that changes dimensions") {
    save_png(dir / "small.png", testutil::random_byte_image(8, 8, 13));
    std::string cmd = "true {input} && cp " + (dir / "small.png").string() + " {output}";
    CHECK_THROWS_AS(enhance_images(dir / "in", dir / "out", cmd), StageError);
  }
}

TEST_CASE("pipeline config survives a JSON round trip") {
  PipelineConfig c;
  c.seed = 42;
  c.threads = 3;
  c.target_gaussians = 777;
  c.sh_degree = 1;
  c.iterations = 55;
  c.use_synthetic = false;
  c.strategy = "trajectory";
  c.hemisphere.levels = 4;
  c.hemisphere.tau = 0.6;
  c.hemisphere.azimuth_offset = 0.25;
  c.hemisphere.fib_start = 2;
  c.trajectory_count = 9;
  c.splat_radius = 2;
  c.enhance_template = "cp {input} {output}";
  c.use_perceptual = false;
  c.use_distance_weight = false;
  c.invert_lambda = true;
  c.weights.lambda_s = 0.3;
  c.weights.lambda_p_ref = 0.4;
  c.weights.lambda_p_syn = 0.05;
  c.p_ref = 0.7;
  c.prune_interval = 123;
  c.prune_opacity = 0.01;
  c.train_kernel_cutoff = 1e-4;
  c.train_max_radius_px = 25;

  nlohmann::ordered_json j = pipeline_config_to_json(c);
  PipelineConfig back = pipeline_config_from_json(j);
  CHECK(pipeline_config_to_json(back).dump() == j.dump());

  nlohmann::ordered_json dflt = pipeline_config_to_json(PipelineConfig{});
  CHECK(pipeline_config_to_json(pipeline_config_from_json(dflt)).dump() == dflt.dump());
  CHECK(pipeline_config_to_json(pipeline_config_from_json(nlohmann::json::object())).dump() ==
        dflt.dump());
}

TEST_CASE("pipeline config rejects unknown keys") {
  nlohmann::ordered_json j = pipeline_config_to_json(PipelineConfig{});
  SECTION("top level") {
    j["bogus"] = 1;
    CHECK_THROWS_AS(pipeline_config_from_json(j), ValidationError);
  }
  SECTION("hemisphere block") {
    j["hemisphere"]["bogus"] = 1;
    CHECK_THROWS_AS(pipeline_config_from_json(j), ValidationError);
  }
}

TEST_CASE("end-to-end pipeline run produces every artifact") {
  testutil::TempDir out("pipe_run");
  PipelineResult result = run_pipeline(toy_scene_dir(), out / "run", small_config());

  const fs::path run = out / "run";
  for (const char* name : {"synthetic_poses.json", "model.ckpt", "loss_summary.json",
                           "metrics.json", "manifest.json"})
    REQUIRE(fs::exists(run / name));
  std::vector<CameraPose> synth_poses = load_poses(run / "synthetic_poses.json");
  REQUIRE(!synth_poses.empty());
  for (size_t i = 0; i < synth_poses.size(); ++i) {
    char img[32], mask[40];
    std::snprintf(img, sizeof(img), "view_%04zu.png", i);
    std::snprintf(mask, sizeof(mask), "view_%04zu_mask.png", i);
    REQUIRE(fs::exists(run / "synthetic" / img));
    REQUIRE(fs::exists(run / "synthetic" / mask));
    REQUIRE(fs::exists(run / "enhanced" / img));
    REQUIRE(fs::exists(run / "enhanced" / mask));
  }
  for (int i = 0; i < 4; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "view_%04d.png", i);
    REQUIRE(fs::exists(run / "renders" / buf));
  }

  CHECK(result.evaluated);
  CHECK(result.report.views.size() == 4);
  CHECK(result.model.size() >= 1);
  CHECK(result.model.size() <= 250);

  nlohmann::json summary = nlohmann::json::parse(testutil::read_file(run / "loss_summary.json"));
  CHECK(summary.at("iterations").get<int>() == 12);
  CHECK(summary.at("loss_history").size() == 12);
  CHECK(summary.at("final_gaussians").get<size_t>() == result.model.size());
  CHECK(std::isfinite(summary.at("initial_mean_loss").get<double>()));
  CHECK(std::isfinite(summary.at("final_mean_loss").get<double>()));

  nlohmann::ordered_json manifest =
      nlohmann::ordered_json::parse(testutil::read_file(run / "manifest.json"));
  for (const char* key : {"config", "inputs", "stages", "artifacts"}) REQUIRE(manifest.contains(key));
  for (const char* stage : {"sample", "synthesize", "enhance", "train", "render", "evaluate"})
    REQUIRE(manifest.at("stages").contains(stage));
  CHECK(!manifest.at("artifacts").contains("manifest.json"));
  CHECK(manifest.at("artifacts").contains("model.ckpt"));
  CHECK(manifest.at("config").dump() == pipeline_config_to_json(small_config()).dump());
}

TEST_CASE("pipeline runs are reproducible and cache-transparent") {
  testutil::TempDir out("pipe_repro");
  PipelineConfig config = small_config();

  run_pipeline(toy_scene_dir(), out / "a", config, out / "cache_a");
  run_pipeline(toy_scene_dir(), out / "b", config, out / "cache_b");
  std::string manifest_a = testutil::read_file(out / "a" / "manifest.json");
  CHECK(manifest_a == testutil::read_file(out / "b" / "manifest.json"));

  // Same cache, fresh output directory: stages restore instead of recompute.
  run_pipeline(toy_scene_dir(), out / "c", config, out / "cache_a");
  CHECK(manifest_a == testutil::read_file(out / "c" / "manifest.json"));
  CHECK(testutil::read_file(out / "a" / "model.ckpt") ==
        testutil::read_file(out / "c" / "model.ckpt"));

  PipelineConfig other = config;
  other.iterations = 13;
  run_pipeline(toy_scene_dir(), out / "d", other, out / "cache_a");
  CHECK(manifest_a != testutil::read_file(out / "d" / "manifest.json"));
}

TEST_CASE("ablation rows isolate one ingredient each") {
  PipelineConfig base = small_config();
  base.enhance_template = "cp {input} {output}";
  std::vector<AblationRow> rows = ablation_rows(base);
  REQUIRE(rows.size() == 5);

  CHECK(rows[0].name == "baseline");
  CHECK(!rows[0].config.use_synthetic);
  CHECK(!rows[0].config.use_perceptual);
  CHECK(!rows[0].config.use_distance_weight);
  CHECK(rows[0].config.enhance_template.empty());

  CHECK(rows[1].name == "synthetic");
  CHECK(rows[1].config.use_synthetic);
  CHECK(rows[1].config.strategy == "hemisphere");
  CHECK(!rows[1].config.use_perceptual);
  CHECK(!rows[1].config.use_distance_weight);
  CHECK(rows[1].config.enhance_template.empty());

  CHECK(rows[2].name == "synthetic_weighted");
  CHECK(rows[2].config.use_synthetic);
  CHECK(rows[2].config.use_perceptual);
  CHECK(rows[2].config.use_distance_weight);
  CHECK(rows[2].config.enhance_template.empty());

  CHECK(rows[3].name == "synthetic_enhanced");
  CHECK(rows[3].config.use_perceptual);
  CHECK(rows[3].config.use_distance_weight);
  CHECK(rows[3].config.enhance_template == base.enhance_template);

  CHECK(rows[4].name == "trajectory");
  CHECK(rows[4].config.strategy == "trajectory");
  CHECK(rows[4].config.use_perceptual);
  CHECK(rows[4].config.use_distance_weight);

  base.enhance_template.clear();
  rows = ablation_rows(base);
  REQUIRE(rows.size() == 4);
  for (const AblationRow& row : rows) CHECK(row.name != "synthetic_enhanced");
}

TEST_CASE("ablation driver writes one run per row plus the summary table") {
  testutil::TempDir out("pipe_ablate");
  PipelineConfig base = small_config();
  base.iterations = 6;
  base.target_gaussians = 150;

  nlohmann::ordered_json table = run_ablation(toy_scene_dir(), out.path(), base);

  const char* names[] = {"baseline", "synthetic", "synthetic_weighted", "trajectory"};
  REQUIRE(table.at("rows").size() == 4);
  for (size_t i = 0; i < 4; ++i) {
    const auto& row = table.at("rows")[i];
    CHECK(row.at("name").get<std::string>() == names[i]);
    REQUIRE(row.at("evaluated").get<bool>());
    CHECK(std::isfinite(row.at("psnr").get<double>()));
    REQUIRE(fs::exists(out / names[i] / "manifest.json"));
    REQUIRE(fs::exists(out / names[i] / "metrics.json"));
  }
  REQUIRE(fs::exists(out / "ablation.json"));
  std::string md = testutil::read_file(out / "ablation.md");
  CHECK(md.rfind("| run | psnr | ssim | perceptual |", 0) == 0);
  for (const char* name : names) CHECK(md.find("| " + std::string(name) + " |") != std::string::npos);

  // Hemisphere rows share sampling and synthesis stages through the cache.
  nlohmann::json m_synth =
      nlohmann::json::parse(testutil::read_file(out / "synthetic" / "manifest.json"));
  nlohmann::json m_weighted =
      nlohmann::json::parse(testutil::read_file(out / "synthetic_weighted" / "manifest.json"));
  CHECK(m_synth.at("stages").at("synthesize") == m_weighted.at("stages").at("synthesize"));
  CHECK(m_synth.at("stages").at("train") != m_weighted.at("stages").at("train"));
}
