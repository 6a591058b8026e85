#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <gridpose/bop_io.hpp>
#include <gridpose/errors.hpp>
#include <gridpose/mesh.hpp>
#include <gridpose/ply.hpp>

using namespace gridpose;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("gridpose_io_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

CameraIntrinsics test_camera() {
  CameraIntrinsics cam;
  cam.fx = 500.0;
  cam.fy = 480.0;
  cam.cx = 320.0;
  cam.cy = 240.0;
  cam.width = 640;
  cam.height = 480;
  return cam;
}

void check_mesh_close(const TriangleMesh& loaded, const TriangleMesh& original,
                      double tolerance) {
  REQUIRE(loaded.vertices.size() == original.vertices.size());
  REQUIRE(loaded.triangles.size() == original.triangles.size());
  for (std::size_t i = 0; i < loaded.vertices.size(); ++i) {
    CHECK((loaded.vertices[i] - original.vertices[i]).norm() < tolerance);
  }
  for (std::size_t i = 0; i < loaded.triangles.size(); ++i) {
    CHECK(loaded.triangles[i] == original.triangles[i]);
  }
}

}  // namespace

TEST_CASE("ply meshes round trip in both formats") {
  TempDir dir;
  const TriangleMesh mesh = make_icosphere(0.053, 1);

  SUBCASE("binary little endian") {
    save_ply(dir.path / "mesh.ply", mesh, {});
    check_mesh_close(load_ply(dir.path / "mesh.ply"), mesh, 1e-7);
  }
  SUBCASE("ascii") {
    PlySaveOptions options;
    options.format = PlyFormat::ascii;
    save_ply(dir.path / "mesh.ply", mesh, options);
    check_mesh_close(load_ply(dir.path / "mesh.ply"), mesh, 1e-7);
  }
}

TEST_CASE("ply unit conversion matches the benchmark convention") {
  TempDir dir;
  const TriangleMesh mesh = make_box_mesh(Vec3(0.05, 0.04, 0.03));

  PlySaveOptions save_mm;
  save_mm.millimeter_units = true;
  save_ply(dir.path / "mm.ply", mesh, save_mm);

  PlyLoadOptions load_mm;
  load_mm.millimeter_units = true;
  check_mesh_close(load_ply(dir.path / "mm.ply", load_mm), mesh, 1e-7);

  // Loaded raw, the vertices sit in millimeters.
  const TriangleMesh raw = load_ply(dir.path / "mm.ply");
  CHECK(raw.vertices[0].norm() ==
        doctest::Approx(1000.0 * mesh.vertices[0].norm()).epsilon(1e-6));
}

TEST_CASE("ply loading rejects malformed input with a byte offset") {
  TempDir dir;

  SUBCASE("truncated vertex data") {
    std::ofstream out(dir.path / "bad.ply");
    out << "ply\nformat ascii 1.0\nelement vertex 2\n"
           "property float x\nproperty float y\nproperty float z\n"
           "end_header\n0.0 1.0 2.0\n3.0 4.0\n";
    out.close();
    try {
      load_ply(dir.path / "bad.ply");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.byte_offset() > 0);
    }
  }
  SUBCASE("zero vertices") {
    std::ofstream out(dir.path / "empty.ply");
    out << "ply\nformat ascii 1.0\nelement vertex 0\n"
           "property float x\nproperty float y\nproperty float z\n"
           "end_header\n";
    out.close();
    CHECK_THROWS_AS(load_ply(dir.path / "empty.ply"), ParseError);
  }
  SUBCASE("big endian") {
    std::ofstream out(dir.path / "big.ply");
    out << "ply\nformat binary_big_endian 1.0\nelement vertex 1\n"
           "property float x\nproperty float y\nproperty float z\n"
           "end_header\n";
    out.close();
    CHECK_THROWS_AS(load_ply(dir.path / "big.ply"), UnsupportedFormat);
  }
}

TEST_CASE("results csv round trips field- and byte-identically") {
  TempDir dir;
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> mm(-500.0, 500.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<ResultRow> rows;
  for (int i = 0; i < 12; ++i) {
    ResultRow row;
    row.scene_id = 3;
    row.im_id = i / 3;
    row.obj_id = 1 + i % 3;
    row.score = unit(rng);
    row.rotation = random_rotation(rng);
    row.translation_mm = Vec3(mm(rng), mm(rng), 500.0 + mm(rng));
    row.time_s = (i % 4 == 0) ? -1.0 : unit(rng) * 0.05;
    rows.push_back(row);
  }

  const fs::path first = dir.path / "results_a.csv";
  const fs::path second = dir.path / "results_b.csv";
  write_results_csv(first, rows);
  const std::vector<ResultRow> loaded = read_results_csv(first);
  REQUIRE(loaded.size() == rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    CHECK(loaded[i].scene_id == rows[i].scene_id);
    CHECK(loaded[i].im_id == rows[i].im_id);
    CHECK(loaded[i].obj_id == rows[i].obj_id);
    CHECK(loaded[i].score == rows[i].score);
    CHECK((loaded[i].rotation - rows[i].rotation).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded[i].translation_mm - rows[i].translation_mm)
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK(loaded[i].time_s == rows[i].time_s);
  }

  write_results_csv(second, loaded);
  CHECK(slurp(first) == slurp(second));
}

TEST_CASE("estimates convert to result rows and back") {
  std::mt19937_64 rng(7);
  std::map<int, SceneEstimate> images;
  for (int im = 0; im < 2; ++im) {
    SceneEstimate scene;
    scene.camera = test_camera();
    for (int k = 0; k < 3; ++k) {
      EstimatedInstance inst;
      inst.object_id = 1 + k;
      inst.score = 0.5 + 0.1 * k;
      inst.pose.rotation = random_rotation(rng);
      inst.pose.translation = Vec3(0.01 * k, -0.02, 0.8 + 0.05 * k);
      scene.instances.push_back(inst);
    }
    images[im] = scene;
  }

  const std::vector<ResultRow> rows = results_from_estimates(9, images, 0.04);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].scene_id == 9);
  CHECK(rows[0].time_s == doctest::Approx(0.04));
  // Millimeter conversion on the way out.
  CHECK(rows[0].translation_mm.z() ==
        doctest::Approx(1000.0 * images.at(0).instances[0].pose.translation.z()));

  const std::map<int, SceneEstimate> back =
      estimates_from_results(rows, test_camera());
  REQUIRE(back.size() == 2);
  for (const auto& [im_id, scene] : back) {
    const SceneEstimate& original = images.at(im_id);
    REQUIRE(scene.instances.size() == original.instances.size());
    for (std::size_t k = 0; k < scene.instances.size(); ++k) {
      CHECK(scene.instances[k].object_id == original.instances[k].object_id);
      CHECK(scene.instances[k].score ==
            doctest::Approx(original.instances[k].score));
      CHECK((scene.instances[k].pose.rotation -
             original.instances[k].pose.rotation)
                .norm() < 1e-12);
      CHECK((scene.instances[k].pose.translation -
             original.instances[k].pose.translation)
                .norm() < 1e-12);
    }
  }
}

TEST_CASE("scene ground truth round trips through the json layout") {
  TempDir dir;
  std::mt19937_64 rng(11);
  std::map<int, SceneGroundTruth> images;
  for (int im = 1; im <= 2; ++im) {
    SceneGroundTruth scene;
    scene.camera = test_camera();
    for (int k = 0; k < 2; ++k) {
      GroundTruthInstance inst;
      inst.object_id = 1 + k;
      inst.pose.rotation = random_rotation(rng);
      inst.pose.translation = Vec3(0.02 * k, -0.01, 0.9 + 0.1 * k);
      inst.visibility.visible_fraction = 0.75 + 0.1 * k;
      inst.amodal_box = Box{100.0 + k, 120.0, 180.0 + k, 200.0};
      scene.instances.push_back(inst);
    }
    images[im] = scene;
  }

  save_bop_scene(dir.path, images);
  const std::map<int, SceneGroundTruth> loaded = load_bop_scene(dir.path);
  REQUIRE(loaded.size() == 2);
  for (const auto& [im_id, scene] : loaded) {
    const SceneGroundTruth& original = images.at(im_id);
    CHECK(scene.camera.fx == doctest::Approx(original.camera.fx));
    CHECK(scene.camera.cx == doctest::Approx(original.camera.cx));
    REQUIRE(scene.instances.size() == original.instances.size());
    for (std::size_t k = 0; k < scene.instances.size(); ++k) {
      const GroundTruthInstance& a = scene.instances[k];
      const GroundTruthInstance& b = original.instances[k];
      CHECK(a.object_id == b.object_id);
      CHECK((a.pose.rotation - b.pose.rotation).norm() < 1e-12);
      CHECK((a.pose.translation - b.pose.translation).norm() < 1e-12);
      CHECK(a.visibility.visible_fraction ==
            doctest::Approx(b.visibility.visible_fraction));
      CHECK(a.amodal_box.x1 == doctest::Approx(b.amodal_box.x1));
      CHECK(a.amodal_box.y2 == doctest::Approx(b.amodal_box.y2));
      // No pixel mask in the layout: the visible box stands in, flagged.
      CHECK(a.visibility.footprint_from_box);
    }
  }
}

TEST_CASE("scene loading demands per-instance info entries") {
  TempDir dir;
  std::ofstream(dir.path / "scene_gt.json")
      << R"({"1": [{"obj_id": 2,
                    "cam_R_m2c": [1,0,0, 0,1,0, 0,0,1],
                    "cam_t_m2c": [0.0, 0.0, 900.0]}]})";
  std::ofstream(dir.path / "scene_gt_info.json") << R"({})";
  std::ofstream(dir.path / "scene_camera.json")
      << R"({"1": {"cam_K": [500,0,320, 0,480,240, 0,0,1]}})";
  CHECK_THROWS_AS(load_bop_scene(dir.path), MissingAnnotation);
}

TEST_CASE("model banks load meshes with info overrides") {
  TempDir dir;
  const TriangleMesh box = make_box_mesh(Vec3(0.05, 0.04, 0.03));
  PlySaveOptions save_mm;
  save_mm.millimeter_units = true;
  save_ply(dir.path / "obj_000001.ply", box, save_mm);
  save_ply(dir.path / "obj_000002.ply", box, save_mm);

  // Object 1 overrides its diameter and declares a discrete flip symmetry;
  // object 2 declares a continuous axis, discretized on load.
  std::ofstream(dir.path / "models_info.json") << R"({
    "1": {"diameter": 120.0,
          "symmetries_discrete": [[-1,0,0,0, 0,-1,0,0, 0,0,1,0, 0,0,0,1]]},
    "2": {"symmetries_continuous": [{"axis": [0, 0, 1], "offset": [0, 0, 0]}]}
  })";

  const std::map<int, ObjectModel> models =
      load_models_dir(dir.path, /*millimeter_units=*/true, /*symmetry_steps=*/8);
  REQUIRE(models.size() == 2);

  const ObjectModel& first = models.at(1);
  CHECK(first.object_id == 1);
  CHECK(first.mesh.vertices.size() == 8);
  CHECK(first.diameter == doctest::Approx(0.12).epsilon(1e-12));  // mm -> m
  REQUIRE(first.symmetries.size() == 2);
  const Mat3 flip = rotation_about_axis(Vec3::UnitZ(), M_PI);
  CHECK((first.symmetries[1].rotation - flip).norm() < 1e-12);

  const ObjectModel& second = models.at(2);
  // Identity plus steps-1 rotations about z.
  CHECK(second.symmetries.size() == 8);
  // Without an override the diameter comes from the mesh itself.
  CHECK(second.diameter ==
        doctest::Approx(diameter(box)).epsilon(1e-6));

  CHECK_THROWS_AS(load_models_dir(dir.path / "nowhere"), MissingAnnotation);
}

TEST_CASE("model info export feeds back into loading") {
  TempDir dir;
  const TriangleMesh box = make_box_mesh(Vec3(0.05, 0.04, 0.03));
  PlySaveOptions save_mm;
  save_mm.millimeter_units = true;
  save_ply(dir.path / "obj_000003.ply", box, save_mm);

  std::map<int, ObjectModel> models;
  ObjectModel model = make_object_model(3, box);
  model.diameter = 0.2;  // deliberate override to observe in the json
  models.emplace(3, model);
  write_models_info_json(dir.path / "models_info.json", models);

  const std::map<int, ObjectModel> loaded = load_models_dir(dir.path);
  REQUIRE(loaded.count(3) == 1);
  CHECK(loaded.at(3).diameter == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("atomic text writes replace existing content") {
  TempDir dir;
  const fs::path path = dir.path / "note.txt";
  write_text_atomic(path, "first\n");
  CHECK(slurp(path) == "first\n");
  write_text_atomic(path, "second\n");
  CHECK(slurp(path) == "second\n");
}
