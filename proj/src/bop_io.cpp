#include "gridpose/bop_io.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

#include "json.hpp"

#include "gridpose/encoding.hpp"
#include "gridpose/errors.hpp"
#include "gridpose/ply.hpp"

namespace gridpose {

namespace {

using nlohmann::json;

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw MissingAnnotation("cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json parse_json_file(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.filename().string() + ": " + e.what(), e.byte);
  }
}

Mat3 rotation_from_flat(const json& arr, const std::string& what) {
  if (!arr.is_array() || arr.size() != 9) {
    throw MissingAnnotation(what + ": expected 9 row-major rotation entries");
  }
  Mat3 r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      r(i, j) = arr[3 * i + j].get<double>();
    }
  }
  return r;
}

Vec3 vec3_from(const json& arr, const std::string& what) {
  if (!arr.is_array() || arr.size() != 3) {
    throw MissingAnnotation(what + ": expected 3 entries");
  }
  return {arr[0].get<double>(), arr[1].get<double>(), arr[2].get<double>()};
}

Box box_from_xywh(const json& arr, const std::string& what) {
  if (!arr.is_array() || arr.size() != 4) {
    throw MissingAnnotation(what + ": expected [x, y, w, h]");
  }
  Box b;
  b.x1 = arr[0].get<double>();
  b.y1 = arr[1].get<double>();
  b.x2 = b.x1 + arr[2].get<double>();
  b.y2 = b.y1 + arr[3].get<double>();
  return b;
}

json xywh_from_box(const Box& b) {
  return json::array({b.x1, b.y1, b.width(), b.height()});
}

// Shortest representation that parses back to the same double.
std::string format_double(double value) {
  std::array<char, 32> buf{};
  const auto result = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), result.ptr);
}

double parse_double(std::string_view text, int row, const std::string& field) {
  double value = 0.0;
  const auto result =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc{} || result.ptr != text.data() + text.size()) {
    throw SchemaError("bad " + field + " value '" + std::string(text) + "'", row);
  }
  return value;
}

long parse_int(std::string_view text, int row, const std::string& field) {
  long value = 0;
  const auto result =
      std::from_chars(text.data(), text.data() + text.size(), value);
  if (result.ec != std::errc{} || result.ptr != text.data() + text.size()) {
    throw SchemaError("bad " + field + " value '" + std::string(text) + "'", row);
  }
  return value;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

constexpr std::string_view kResultsHeader = "scene_id,im_id,obj_id,score,R,t,time";

}  // namespace

std::map<int, SceneGroundTruth> load_bop_scene(const std::filesystem::path& dir,
                                               int default_width,
                                               int default_height) {
  const json gt = parse_json_file(dir / "scene_gt.json");
  const json info = parse_json_file(dir / "scene_gt_info.json");
  const json cameras = parse_json_file(dir / "scene_camera.json");

  std::map<int, SceneGroundTruth> images;
  for (const auto& [key, instances] : gt.items()) {
    const int im_id = std::stoi(key);
    SceneGroundTruth scene;

    if (!cameras.contains(key)) {
      throw MissingAnnotation("scene_camera.json: no entry for image " + key);
    }
    const json& cam = cameras.at(key);
    if (!cam.contains("cam_K") || !cam.at("cam_K").is_array() ||
        cam.at("cam_K").size() != 9) {
      throw MissingAnnotation("scene_camera.json: image " + key +
                              " lacks a 9-entry cam_K");
    }
    const json& k = cam.at("cam_K");
    scene.camera.fx = k[0].get<double>();
    scene.camera.cx = k[2].get<double>();
    scene.camera.fy = k[4].get<double>();
    scene.camera.cy = k[5].get<double>();
    scene.camera.width = cam.value("width", default_width);
    scene.camera.height = cam.value("height", default_height);

    if (!info.contains(key)) {
      throw MissingAnnotation("scene_gt_info.json: no entry for image " + key);
    }
    const json& info_list = info.at(key);
    if (!info_list.is_array() || info_list.size() != instances.size()) {
      throw MissingAnnotation("scene_gt_info.json: image " + key + " has " +
                              std::to_string(info_list.size()) +
                              " entries for " + std::to_string(instances.size()) +
                              " instances");
    }

    for (std::size_t i = 0; i < instances.size(); ++i) {
      const json& inst = instances[i];
      const json& inst_info = info_list[i];
      GroundTruthInstance out;
      if (!inst.contains("obj_id")) {
        throw MissingAnnotation("scene_gt.json: image " + key + " instance " +
                                std::to_string(i) + " lacks obj_id");
      }
      out.object_id = inst.at("obj_id").get<int>();
      out.pose.rotation = rotation_from_flat(
          inst.at("cam_R_m2c"), "scene_gt.json image " + key + " cam_R_m2c");
      out.pose.translation =
          vec3_from(inst.at("cam_t_m2c"),
                    "scene_gt.json image " + key + " cam_t_m2c") /
          1000.0;
      out.amodal_box = box_from_xywh(
          inst_info.at("bbox_obj"), "scene_gt_info.json image " + key + " bbox_obj");
      out.visibility.visible_fraction = inst_info.value("visib_fract", 1.0);
      // No pixel masks in this layout: the visible box stands in.
      out.visibility.footprint =
          rasterize_box(box_from_xywh(inst_info.at("bbox_visib"),
                                      "scene_gt_info.json image " + key +
                                          " bbox_visib"),
                        scene.camera.width, scene.camera.height);
      out.visibility.footprint_from_box = true;
      scene.instances.push_back(std::move(out));
    }
    images.emplace(im_id, std::move(scene));
  }
  return images;
}

void save_bop_scene(const std::filesystem::path& dir,
                    const std::map<int, SceneGroundTruth>& images) {
  std::filesystem::create_directories(dir);
  json gt = json::object();
  json info = json::object();
  json cameras = json::object();
  for (const auto& [im_id, scene] : images) {
    const std::string key = std::to_string(im_id);
    json gt_list = json::array();
    json info_list = json::array();
    for (const auto& inst : scene.instances) {
      json r = json::array();
      for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
          r.push_back(inst.pose.rotation(i, j));
        }
      }
      gt_list.push_back({{"cam_R_m2c", r},
                         {"cam_t_m2c", json::array({inst.pose.translation.x() * 1000.0,
                                                    inst.pose.translation.y() * 1000.0,
                                                    inst.pose.translation.z() * 1000.0})},
                         {"obj_id", inst.object_id}});
      // The footprint window is written as the visible box; a box-derived
      // footprint survives a save/load cycle exactly.
      const PixelMask& fp = inst.visibility.footprint;
      const Box visible_box =
          fp.empty() ? inst.amodal_box
                     : Box{static_cast<double>(fp.x0), static_cast<double>(fp.y0),
                           static_cast<double>(fp.x0 + fp.width),
                           static_cast<double>(fp.y0 + fp.height)};
      info_list.push_back({{"bbox_obj", xywh_from_box(inst.amodal_box)},
                           {"bbox_visib", xywh_from_box(visible_box)},
                           {"px_count_visib", fp.count()},
                           {"visib_fract", inst.visibility.visible_fraction}});
    }
    gt[key] = std::move(gt_list);
    info[key] = std::move(info_list);
    cameras[key] = {{"cam_K", json::array({scene.camera.fx, 0.0, scene.camera.cx,
                                           0.0, scene.camera.fy, scene.camera.cy,
                                           0.0, 0.0, 1.0})},
                    {"depth_scale", 1.0},
                    {"width", scene.camera.width},
                    {"height", scene.camera.height}};
  }
  write_text_atomic(dir / "scene_gt.json", gt.dump(2) + "\n");
  write_text_atomic(dir / "scene_gt_info.json", info.dump(2) + "\n");
  write_text_atomic(dir / "scene_camera.json", cameras.dump(2) + "\n");
}

std::vector<ResultRow> read_results_csv(const std::filesystem::path& path) {
  const std::string text = slurp(path);
  std::vector<std::string_view> lines = split(text, '\n');
  if (lines.empty() || lines[0] != kResultsHeader) {
    throw SchemaError("expected header '" + std::string(kResultsHeader) + "'", 1);
  }
  std::vector<ResultRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (!line.empty() && line.back() == '\r') {
      line.remove_suffix(1);
    }
    if (line.empty()) {
      continue;
    }
    const int row_number = static_cast<int>(i) + 1;
    const auto fields = split(line, ',');
    if (fields.size() != 7) {
      throw SchemaError("expected 7 comma-separated fields, got " +
                            std::to_string(fields.size()),
                        row_number);
    }
    ResultRow row;
    row.scene_id = static_cast<int>(parse_int(fields[0], row_number, "scene_id"));
    row.im_id = static_cast<int>(parse_int(fields[1], row_number, "im_id"));
    row.obj_id = static_cast<int>(parse_int(fields[2], row_number, "obj_id"));
    row.score = parse_double(fields[3], row_number, "score");
    const auto r_parts = split(fields[4], ' ');
    if (r_parts.size() != 9) {
      throw SchemaError("R needs 9 space-separated values, got " +
                            std::to_string(r_parts.size()),
                        row_number);
    }
    for (int k = 0; k < 9; ++k) {
      row.rotation(k / 3, k % 3) = parse_double(r_parts[k], row_number, "R");
    }
    const auto t_parts = split(fields[5], ' ');
    if (t_parts.size() != 3) {
      throw SchemaError("t needs 3 space-separated values, got " +
                            std::to_string(t_parts.size()),
                        row_number);
    }
    for (int k = 0; k < 3; ++k) {
      row.translation_mm(k) = parse_double(t_parts[k], row_number, "t");
    }
    row.time_s = parse_double(fields[6], row_number, "time");
    rows.push_back(row);
  }
  return rows;
}

void write_results_csv(const std::filesystem::path& path,
                       const std::vector<ResultRow>& rows) {
  std::string out(kResultsHeader);
  out.push_back('\n');
  for (const ResultRow& row : rows) {
    out += std::to_string(row.scene_id);
    out.push_back(',');
    out += std::to_string(row.im_id);
    out.push_back(',');
    out += std::to_string(row.obj_id);
    out.push_back(',');
    out += format_double(row.score);
    out.push_back(',');
    for (int k = 0; k < 9; ++k) {
      if (k > 0) {
        out.push_back(' ');
      }
      out += format_double(row.rotation(k / 3, k % 3));
    }
    out.push_back(',');
    for (int k = 0; k < 3; ++k) {
      if (k > 0) {
        out.push_back(' ');
      }
      out += format_double(row.translation_mm(k));
    }
    out.push_back(',');
    out += format_double(row.time_s);
    out.push_back('\n');
  }
  write_text_atomic(path, out);
}

std::vector<ResultRow> results_from_estimates(
    int scene_id, const std::map<int, SceneEstimate>& images, double time_s) {
  std::vector<ResultRow> rows;
  for (const auto& [im_id, scene] : images) {
    for (const auto& inst : scene.instances) {
      ResultRow row;
      row.scene_id = scene_id;
      row.im_id = im_id;
      row.obj_id = inst.object_id;
      row.score = inst.score;
      row.rotation = inst.pose.rotation;
      row.translation_mm = inst.pose.translation * 1000.0;
      row.time_s = time_s;
      rows.push_back(row);
    }
  }
  return rows;
}

std::map<int, SceneEstimate> estimates_from_results(
    const std::vector<ResultRow>& rows, const CameraIntrinsics& camera) {
  std::map<int, SceneEstimate> images;
  for (const ResultRow& row : rows) {
    SceneEstimate& scene = images[row.im_id];
    scene.camera = camera;
    EstimatedInstance inst;
    inst.object_id = row.obj_id;
    inst.score = row.score;
    inst.pose.rotation = row.rotation;
    inst.pose.translation = row.translation_mm / 1000.0;
    scene.instances.push_back(inst);
  }
  return images;
}

std::map<int, ObjectModel> load_models_dir(const std::filesystem::path& models_dir,
                                           bool millimeter_units,
                                           int symmetry_steps) {
  if (!std::filesystem::is_directory(models_dir)) {
    throw MissingAnnotation("model directory not found: " + models_dir.string());
  }
  std::map<int, ObjectModel> models;
  for (const auto& entry : std::filesystem::directory_iterator(models_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() != 14 || name.rfind("obj_", 0) != 0 ||
        name.substr(10) != ".ply") {
      continue;
    }
    const std::string digits = name.substr(4, 6);
    if (!std::all_of(digits.begin(), digits.end(),
                     [](unsigned char c) { return std::isdigit(c); })) {
      continue;
    }
    const int object_id = std::stoi(digits);
    PlyLoadOptions options;
    options.millimeter_units = millimeter_units;
    models.emplace(object_id,
                   make_object_model(object_id, load_ply(entry.path(), options)));
  }
  if (models.empty()) {
    throw MissingAnnotation("no obj_XXXXXX.ply meshes in " + models_dir.string());
  }

  const std::filesystem::path info_path = models_dir / "models_info.json";
  if (!std::filesystem::exists(info_path)) {
    return models;
  }
  const json info = parse_json_file(info_path);
  for (auto& [object_id, model] : models) {
    const std::string key = std::to_string(object_id);
    if (!info.contains(key)) {
      continue;
    }
    const json& entry = info.at(key);
    if (entry.contains("diameter")) {
      model.diameter = entry.at("diameter").get<double>() / 1000.0;
    }
    SymmetrySet set;  // identity at index 0
    if (entry.contains("symmetries_discrete")) {
      for (const json& flat : entry.at("symmetries_discrete")) {
        if (!flat.is_array() || flat.size() != 16) {
          throw MissingAnnotation("models_info.json: object " + key +
                                  " symmetry needs 16 row-major entries");
        }
        Pose pose;
        for (int i = 0; i < 3; ++i) {
          for (int j = 0; j < 3; ++j) {
            pose.rotation(i, j) = flat[4 * i + j].get<double>();
          }
          pose.translation(i) = flat[4 * i + 3].get<double>() / 1000.0;
        }
        set.transforms.push_back(pose);
      }
    }
    if (entry.contains("symmetries_continuous")) {
      for (const json& sym : entry.at("symmetries_continuous")) {
        const Vec3 axis = vec3_from(sym.at("axis"),
                                    "models_info.json object " + key + " axis");
        Vec3 offset = Vec3::Zero();
        if (sym.contains("offset")) {
          offset = vec3_from(sym.at("offset"),
                             "models_info.json object " + key + " offset") /
                   1000.0;
        }
        for (int j = 1; j < symmetry_steps; ++j) {
          const double angle =
              2.0 * 3.14159265358979323846 * j / symmetry_steps;
          Pose pose;
          pose.rotation = rotation_about_axis(axis, angle);
          pose.translation = offset - pose.rotation * offset;
          set.transforms.push_back(pose);
        }
      }
    }
    if (!set.trivial()) {
      model.symmetries = std::move(set);
    }
  }
  return models;
}

void write_models_info_json(const std::filesystem::path& path,
                            const std::map<int, ObjectModel>& models) {
  json info = json::object();
  for (const auto& [object_id, model] : models) {
    const Vec3& lo = model.cuboid[0];
    const Vec3& hi = model.cuboid[7];
    json entry = {{"diameter", model.diameter * 1000.0},
                  {"min_x", lo.x() * 1000.0},
                  {"min_y", lo.y() * 1000.0},
                  {"min_z", lo.z() * 1000.0},
                  {"size_x", (hi.x() - lo.x()) * 1000.0},
                  {"size_y", (hi.y() - lo.y()) * 1000.0},
                  {"size_z", (hi.z() - lo.z()) * 1000.0}};
    if (!model.symmetries.trivial()) {
      // The flattened set is persisted as discrete transforms; reloading
      // produces the same transform list.
      json discrete = json::array();
      for (std::size_t s = 1; s < model.symmetries.size(); ++s) {
        const Pose& pose = model.symmetries[s];
        json flat = json::array();
        for (int i = 0; i < 3; ++i) {
          for (int j = 0; j < 3; ++j) {
            flat.push_back(pose.rotation(i, j));
          }
          flat.push_back(pose.translation(i) * 1000.0);
        }
        for (double v : {0.0, 0.0, 0.0, 1.0}) {
          flat.push_back(v);
        }
        discrete.push_back(std::move(flat));
      }
      entry["symmetries_discrete"] = std::move(discrete);
    }
    info[std::to_string(object_id)] = std::move(entry);
  }
  write_text_atomic(path, info.dump(2) + "\n");
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error("cannot write " + tmp.string());
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.flush();
    if (!out) {
      throw Error("short write to " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace gridpose
