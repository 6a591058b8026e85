// Command-line front end: model inspection, target encoding, evaluation of
// benchmark-format results, the postprocess runtime benchmark, and a PnP
// accuracy comparison. Exit code 0 on success, 1 for bad inputs or files,
// 2 for internal failures.
#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "gridpose/bop_io.hpp"
#include "gridpose/encoding.hpp"
#include "gridpose/errors.hpp"
#include "gridpose/harness.hpp"
#include "gridpose/metrics.hpp"
#include "gridpose/pnp.hpp"
#include "gridpose/postprocess.hpp"
#include "gridpose/random.hpp"

namespace {

using nlohmann::json;

std::map<int, gridpose::ObjectModel> load_bank(const std::string& models_dir,
                                               bool meters) {
  if (models_dir.empty()) {
    return gridpose::default_test_models();
  }
  return gridpose::load_models_dir(models_dir, /*millimeter_units=*/!meters);
}

std::vector<int> parse_counts(const std::string& csv) {
  std::vector<int> counts;
  std::stringstream stream(csv);
  std::string item;
  while (std::getline(stream, item, ',')) {
    counts.push_back(std::stoi(item));
  }
  if (counts.empty()) {
    throw CLI::ValidationError("--counts", "no instance counts given");
  }
  return counts;
}

int run_model_info(const std::string& models_dir, bool meters,
                   const std::string& out_path) {
  const auto models = load_bank(models_dir, meters);
  for (const auto& [id, model] : models) {
    std::printf(
        "object %d: %zu vertices, %zu triangles, diameter %.6f m, "
        "extents [%.4f %.4f %.4f] m, %zu symmetry transform(s)\n",
        id, model.mesh.vertices.size(), model.mesh.triangles.size(),
        model.diameter, model.cuboid[7].x() - model.cuboid[0].x(),
        model.cuboid[7].y() - model.cuboid[0].y(),
        model.cuboid[7].z() - model.cuboid[0].z(), model.symmetries.size());
  }
  if (!out_path.empty()) {
    gridpose::write_models_info_json(out_path, models);
    std::printf("wrote %s\n", out_path.c_str());
  }
  return 0;
}

int run_encode(const std::string& models_dir, bool meters,
               const std::string& scene_dir, int im_id, std::uint64_t seed,
               int count, const std::string& out_path) {
  const auto models = load_bank(models_dir, meters);
  gridpose::SceneGroundTruth scene;
  if (!scene_dir.empty()) {
    const auto images = gridpose::load_bop_scene(scene_dir);
    const auto it = im_id >= 0 ? images.find(im_id) : images.begin();
    if (it == images.end()) {
      throw gridpose::MissingAnnotation("no image " + std::to_string(im_id) +
                                        " in " + scene_dir);
    }
    scene = it->second;
  } else {
    gridpose::SceneGenConfig gen;
    gen.count_range = {count, count};
    scene = gridpose::generate_scene(models, gridpose::default_camera(), seed, gen);
  }

  json report;
  report["instances"] = json::array();
  std::size_t total_targets = 0;
  for (const auto& inst : scene.instances) {
    const auto model_it = models.find(inst.object_id);
    if (model_it == models.end()) {
      throw gridpose::MissingAnnotation("no model for object " +
                                        std::to_string(inst.object_id));
    }
    const auto targets = gridpose::sample_true_locations(inst, model_it->second,
                                                         scene.camera);
    total_targets += targets.size();
    json entry;
    entry["object_id"] = inst.object_id;
    entry["visible_fraction"] = inst.visibility.visible_fraction;
    entry["targets"] = targets.size();
    entry["level"] = targets.empty() ? -1 : targets.front().location.level;
    entry["regression"] = targets.empty() ? false : targets.front().use_for_reg;
    report["instances"].push_back(entry);
    std::printf(
        "object %d: visible %.2f, %zu target cell(s) at level %d%s\n",
        inst.object_id, inst.visibility.visible_fraction, targets.size(),
        targets.empty() ? -1 : targets.front().location.level,
        targets.empty()          ? ""
        : targets.front().use_for_reg ? ""
                                      : " (classification only)");
  }
  std::printf("%zu instance(s), %zu supervised location(s)\n",
              scene.instances.size(), total_targets);
  if (!out_path.empty()) {
    gridpose::write_text_atomic(out_path, report.dump(2) + "\n");
    std::printf("wrote %s\n", out_path.c_str());
  }
  return 0;
}

int run_eval(const std::string& models_dir, bool meters,
             const std::string& scene_dir, const std::string& results_path,
             int scene_id, const std::string& out_path) {
  const auto models = load_bank(models_dir, meters);
  const auto gt_images = gridpose::load_bop_scene(scene_dir);
  auto rows = gridpose::read_results_csv(results_path);
  if (scene_id >= 0) {
    std::erase_if(rows, [&](const gridpose::ResultRow& r) {
      return r.scene_id != scene_id;
    });
  }
  if (gt_images.empty()) {
    throw gridpose::MissingAnnotation("no images in " + scene_dir);
  }
  const auto est_images = gridpose::estimates_from_results(
      rows, gt_images.begin()->second.camera);

  std::vector<gridpose::SceneGroundTruth> gt_scenes;
  std::vector<gridpose::SceneEstimate> est_scenes;
  for (const auto& [im_id, gt] : gt_images) {
    gt_scenes.push_back(gt);
    const auto it = est_images.find(im_id);
    gridpose::SceneEstimate est;
    est.camera = gt.camera;
    if (it != est_images.end()) {
      est.instances = it->second.instances;
    }
    est_scenes.push_back(std::move(est));
  }

  const auto recall = gridpose::bop_average_recall(gt_scenes, est_scenes, models);
  const auto map_report = gridpose::detection_map(
      gridpose::detection_records_from_scenes(gt_scenes, est_scenes, models));
  const double add = gridpose::add_recall(gt_scenes, est_scenes, models);

  json report;
  report["ar_vsd"] = recall.ar_vsd;
  report["ar_mssd"] = recall.ar_mssd;
  report["ar_mspd"] = recall.ar_mspd;
  report["ar_mean"] = recall.ar_mean;
  report["map"] = map_report.value;
  report["add_recall"] = add;
  for (const auto& [object_id, r] : recall.per_object) {
    report["per_object"][std::to_string(object_id)] = {
        {"vsd", r.vsd}, {"mssd", r.mssd}, {"mspd", r.mspd}, {"mean", r.mean()}};
  }
  std::printf("images: %zu   gt instances: %zu\n", gt_scenes.size(), [&] {
    std::size_t n = 0;
    for (const auto& s : gt_scenes) n += s.instances.size();
    return n;
  }());
  std::printf("AR(depth) %.4f  AR(surface) %.4f  AR(projective) %.4f  mean %.4f\n",
              recall.ar_vsd, recall.ar_mssd, recall.ar_mspd, recall.ar_mean);
  std::printf("detection mAP %.4f   distance recall %.4f\n", map_report.value, add);
  if (!out_path.empty()) {
    gridpose::write_text_atomic(out_path, report.dump(2) + "\n");
    std::printf("wrote %s\n", out_path.c_str());
  }
  return 0;
}

int run_bench(const std::string& counts_csv, int repeats, std::uint64_t seed,
              double corner_sigma, double rot_sigma, double tra_sigma,
              double miss_rate, double fp_rate, double min_depth,
              double max_depth, const std::string& export_dir) {
  const auto models = gridpose::default_test_models();
  const auto camera = gridpose::default_camera();
  gridpose::NoiseSpec noise;
  noise.corner_sigma_px = corner_sigma;
  noise.rotation_sigma_rad = rot_sigma;
  noise.translation_sigma_m = tra_sigma;
  noise.miss_rate = miss_rate;
  noise.false_positive_rate = fp_rate;
  gridpose::SceneGenConfig gen;
  gen.depth_range = {min_depth, max_depth};
  const auto counts = parse_counts(counts_csv);

  const auto report = gridpose::benchmark_postprocess(
      counts, repeats, models, camera, noise, gridpose::PostprocessConfig{},
      seed, gen);

  std::printf("%8s %12s %10s %10s %12s\n", "count", "hypotheses", "found",
              "mean_ms", "std_ms");
  for (const auto& bucket : report.buckets) {
    std::printf("%8d %12zu %10zu %10.3f %12.3f\n", bucket.instance_count,
                bucket.hypothesis_count, bucket.detected_instances,
                bucket.mean_ms, bucket.std_ms);
  }

  if (!export_dir.empty()) {
    std::filesystem::create_directories(export_dir);
    std::string csv = "count,mean_ms,std_ms,hypotheses\n";
    json summary;
    summary["repeats"] = report.repeats;
    summary["buckets"] = json::array();
    for (const auto& bucket : report.buckets) {
      csv += std::to_string(bucket.instance_count) + "," +
             std::to_string(bucket.mean_ms) + "," + std::to_string(bucket.std_ms) +
             "," + std::to_string(bucket.hypothesis_count) + "\n";
      summary["buckets"].push_back({{"count", bucket.instance_count},
                                    {"hypotheses", bucket.hypothesis_count},
                                    {"detected", bucket.detected_instances},
                                    {"mean_ms", bucket.mean_ms},
                                    {"std_ms", bucket.std_ms},
                                    {"samples_ms", bucket.samples_ms}});
    }
    const auto dir = std::filesystem::path(export_dir);
    gridpose::write_text_atomic(dir / "benchmark.csv", csv);
    gridpose::write_text_atomic(dir / "benchmark.json", summary.dump(2) + "\n");
    std::printf("wrote %s and %s\n", (dir / "benchmark.csv").c_str(),
                (dir / "benchmark.json").c_str());
  }
  return 0;
}

int run_pnp_compare(int poses, double pixel_noise, double outlier_rate,
                    std::uint64_t seed) {
  const auto models = gridpose::default_test_models();
  const auto camera = gridpose::default_camera();
  const auto& model = models.at(1);
  auto rng = gridpose::make_rng(seed, "pnp-compare");
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  double plain_rot = 0.0, plain_tra = 0.0;
  double robust_rot = 0.0, robust_tra = 0.0;
  int plain_failures = 0, robust_failures = 0;
  for (int trial = 0; trial < poses; ++trial) {
    gridpose::Pose gt;
    gt.rotation = gridpose::random_rotation(rng);
    gt.translation = gridpose::Vec3(0.4 * (unit(rng) - 0.5),
                                    0.3 * (unit(rng) - 0.5),
                                    0.6 + 1.2 * unit(rng));
    gridpose::CorrespondenceSet corr;
    corr.camera = camera;
    for (const auto& p : model.cuboid) {
      gridpose::Correspondence c;
      c.object_point = p;
      c.image_point = gridpose::project(p, gt, camera) +
                      pixel_noise * gridpose::Vec2(gauss(rng), gauss(rng));
      if (unit(rng) < outlier_rate) {
        c.image_point += gridpose::Vec2(40.0 + 80.0 * unit(rng),
                                        40.0 + 80.0 * unit(rng));
      }
      corr.points.push_back(c);
    }
    try {
      const auto pose = gridpose::epnp(corr);
      plain_rot += gridpose::geodesic_distance(pose.rotation, gt.rotation);
      plain_tra += (pose.translation - gt.translation).norm();
    } catch (const gridpose::Error&) {
      ++plain_failures;
    }
    try {
      gridpose::RansacConfig config;
      config.rng_seed = gridpose::substream_seed(seed, "trial-" +
                                                           std::to_string(trial));
      const auto result = gridpose::ransac_pnp(corr, config);
      robust_rot += gridpose::geodesic_distance(result.pose.rotation, gt.rotation);
      robust_tra += (result.pose.translation - gt.translation).norm();
    } catch (const gridpose::Error&) {
      ++robust_failures;
    }
  }
  const auto mean = [&](double total, int failures) {
    const int n = poses - failures;
    return n > 0 ? total / n : 0.0;
  };
  std::printf("%d poses, pixel noise %.2f px, outlier rate %.2f\n", poses,
              pixel_noise, outlier_rate);
  std::printf("plain : rot %.4f deg, tra %.4f mm, %d failure(s)\n",
              mean(plain_rot, plain_failures) * 180.0 / 3.14159265358979323846,
              mean(plain_tra, plain_failures) * 1000.0, plain_failures);
  std::printf("ransac: rot %.4f deg, tra %.4f mm, %d failure(s)\n",
              mean(robust_rot, robust_failures) * 180.0 / 3.14159265358979323846,
              mean(robust_tra, robust_failures) * 1000.0, robust_failures);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grid-hypothesis pose pipeline tools"};
  app.set_config("--config")->configurable(false);
  app.require_subcommand(1);

  std::string models_dir;
  bool meters = false;
  app.add_option("--models", models_dir,
                 "Model directory with obj_XXXXXX.ply (built-in shapes if omitted)")
      ->configurable(true);
  app.add_flag("--meters", meters, "Treat mesh units as meters, not millimeters");

  auto* model_info = app.add_subcommand("model-info", "Summarize the model bank");
  std::string mi_out;
  model_info->add_option("--out", mi_out, "Write a model-info JSON file");

  auto* encode = app.add_subcommand(
      "encode", "Sample supervised grid locations for a scene");
  std::string enc_scene, enc_out;
  int enc_im_id = -1, enc_count = 8;
  std::uint64_t enc_seed = 7;
  encode->add_option("--scene", enc_scene, "Scene directory (JSON annotations)");
  encode->add_option("--im-id", enc_im_id, "Image id inside --scene");
  encode->add_option("--count", enc_count, "Synthetic instance count")
      ->check(CLI::PositiveNumber);
  encode->add_option("--seed", enc_seed, "Synthetic scene seed");
  encode->add_option("--out", enc_out, "Write the per-instance report as JSON");

  auto* eval = app.add_subcommand("eval", "Score results against scene GT");
  std::string eval_scene, eval_results, eval_out;
  int eval_scene_id = -1;
  eval->add_option("--scene", eval_scene, "Scene directory (JSON annotations)")
      ->required();
  eval->add_option("--results", eval_results, "Pose results CSV")->required();
  eval->add_option("--scene-id", eval_scene_id,
                   "Only score rows with this scene_id (-1: all)");
  eval->add_option("--out", eval_out, "Write the report as JSON");

  auto* bench = app.add_subcommand("bench", "Time the hypothesis postprocess");
  std::string bench_counts = "10,30,50,70,90,100", bench_export;
  int bench_repeats = 5;
  std::uint64_t bench_seed = 75;
  double bench_corner = 2.0, bench_rot = 0.03, bench_tra = 0.005;
  double bench_miss = 0.0, bench_fp = 0.0;
  double bench_min_depth = 0.5, bench_max_depth = 2.0;
  bench->add_option("--counts", bench_counts, "Instance counts, comma-separated");
  bench->add_option("--repeats", bench_repeats, "Timed runs per count")
      ->check(CLI::PositiveNumber);
  bench->add_option("--seed", bench_seed, "Scene and noise seed");
  bench->add_option("--corner-sigma", bench_corner, "Corner noise, pixels");
  bench->add_option("--rotation-sigma", bench_rot, "Rotation noise, radians");
  bench->add_option("--translation-sigma", bench_tra, "Translation noise, meters");
  bench->add_option("--miss-rate", bench_miss, "Per-instance dropout probability");
  bench->add_option("--fp-rate", bench_fp, "Spurious hypotheses per instance");
  bench->add_option("--min-depth", bench_min_depth, "Nearest placement depth, m");
  bench->add_option("--max-depth", bench_max_depth, "Farthest placement depth, m");
  bench->add_option("--export-dir", bench_export,
                    "Write benchmark.csv and benchmark.json here");

  auto* pnp = app.add_subcommand("pnp-compare",
                                 "Plain vs robust pose-from-points accuracy");
  int pnp_poses = 200;
  double pnp_noise = 1.0, pnp_outliers = 0.2;
  std::uint64_t pnp_seed = 3;
  pnp->add_option("--poses", pnp_poses, "Number of random poses")
      ->check(CLI::PositiveNumber);
  pnp->add_option("--pixel-noise", pnp_noise, "Image noise sigma, pixels");
  pnp->add_option("--outlier-rate", pnp_outliers, "Fraction of corrupted points");
  pnp->add_option("--seed", pnp_seed, "Trial seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (model_info->parsed()) {
      return run_model_info(models_dir, meters, mi_out);
    }
    if (encode->parsed()) {
      return run_encode(models_dir, meters, enc_scene, enc_im_id, enc_seed,
                        enc_count, enc_out);
    }
    if (eval->parsed()) {
      return run_eval(models_dir, meters, eval_scene, eval_results,
                      eval_scene_id, eval_out);
    }
    if (bench->parsed()) {
      return run_bench(bench_counts, bench_repeats, bench_seed, bench_corner,
                       bench_rot, bench_tra, bench_miss, bench_fp,
                       bench_min_depth, bench_max_depth, bench_export);
    }
    if (pnp->parsed()) {
      return run_pnp_compare(pnp_poses, pnp_noise, pnp_outliers, pnp_seed);
    }
  } catch (const gridpose::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const gridpose::SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const gridpose::MissingAnnotation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const gridpose::UnsupportedFormat& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const gridpose::Error& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
