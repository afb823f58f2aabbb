#include "seedfill/scene_io.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "seedfill/errors.hpp"
#include "seedfill/image_io.hpp"

namespace seedfill {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kSceneVersion = 1;

json camera_json(const CameraView& c) {
  json r = json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(c.rotation(i, k));
  return {{"id", c.id},
          {"rotation", r},
          {"position", {c.position.x(), c.position.y(), c.position.z()}},
          {"focal", c.focal},
          {"principal_point", {c.principal_point.x(), c.principal_point.y()}},
          {"width", c.width},
          {"height", c.height}};
}

template <typename T>
T require(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw InvalidArgument(where + ": missing key '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw InvalidArgument(where + ": bad value for '" + key + "': " + e.what());
  }
}

CameraView camera_from_json(const json& j, const std::string& where) {
  CameraView c;
  c.id = require<int>(j, "id", where);
  const auto r = require<std::vector<double>>(j, "rotation", where);
  const auto p = require<std::vector<double>>(j, "position", where);
  const auto pp = require<std::vector<double>>(j, "principal_point", where);
  if (r.size() != 9 || p.size() != 3 || pp.size() != 2) throw InvalidArgument(where + ": camera array sizes");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) c.rotation(i, k) = r[i * 3 + k];
  c.position = Eigen::Vector3d(p[0], p[1], p[2]);
  c.principal_point = Eigen::Vector2d(pp[0], pp[1]);
  c.focal = require<double>(j, "focal", where);
  c.width = require<int>(j, "width", where);
  c.height = require<int>(j, "height", where);
  c.validate();
  return c;
}

std::string view_stem(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "v%06d", id);
  return buf;
}

fs::path resolve(const fs::path& base, const std::string& rel) {
  const fs::path p(rel);
  const fs::path full = p.is_absolute() ? p : base / p;
  if (!fs::exists(full)) throw InvalidArgument("scene file references missing file " + full.string());
  return full;
}

}  // namespace

void save_scene(const SceneBundle& bundle, const std::string& dir, int bit_depth) {
  const fs::path root(dir);
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  const SceneDataset& ds = bundle.dataset;
  ds.validate();

  json j;
  j["format"] = "seedfill-scene";
  j["version"] = kSceneVersion;
  j["prompt"] = ds.prompt;
  j["frames"] = ds.frames;
  j["seed_ids"] = ds.seed_ids;
  if (bundle.fixture) {
    const FixtureOptions& o = bundle.fixture->options;
    j["fixture"] = {{"name", bundle.fixture->name}, {"spacing", o.spacing}, {"edge_width", o.edge_width},
                    {"sigma_max", o.sigma_max}, {"width", o.width},     {"height", o.height},
                    {"focal", o.focal},         {"frames", o.frames}};
  }
  if (bundle.seed_camera) j["seed_camera"] = *bundle.seed_camera;
  if (bundle.bounds) {
    const Aabb& b = *bundle.bounds;
    j["bounds"] = {{"lo", {b.lo.x(), b.lo.y(), b.lo.z()}}, {"hi", {b.hi.x(), b.hi.y(), b.hi.z()}}};
  }
  json views = json::array();
  for (const auto& v : ds.views) {
    const std::string stem = view_stem(v.id);
    write_png_rgb(v.rgb, (root / "images" / (stem + ".png")).string(), bit_depth);
    write_png_mask(v.user_mask, (root / "masks" / (stem + ".png")).string());
    views.push_back({{"id", v.id},
                     {"frame", v.frame},
                     {"camera", camera_json(v.camera)},
                     {"image", "images/" + stem + ".png"},
                     {"user_mask", "masks/" + stem + ".png"}});
  }
  j["views"] = views;
  json holdout = json::array();
  for (const auto& c : bundle.holdout) holdout.push_back(camera_json(c));
  j["holdout"] = holdout;
  if (!bundle.clean_frames.empty()) {
    fs::create_directories(root / "clean");
    json clean = json::array();
    for (size_t f = 0; f < bundle.clean_frames.size(); ++f) {
      const std::string rel = "clean/f" + std::to_string(f) + ".png";
      write_png_rgb(bundle.clean_frames[f], (root / rel).string(), bit_depth);
      clean.push_back(rel);
    }
    j["clean_frames"] = clean;
  }
  if (bundle.tracks) {
    save_tracks(*bundle.tracks, (root / "tracks.json").string());
    j["tracks"] = "tracks.json";
  }
  std::ofstream out(root / "scene.json");
  if (!out) throw InvalidArgument("cannot write " + (root / "scene.json").string());
  out << j.dump(1) << "\n";
}

SceneBundle load_scene(const std::string& path) {
  fs::path file(path);
  if (fs::is_directory(file)) file /= "scene.json";
  std::ifstream in(file);
  if (!in) throw InvalidArgument("cannot open scene file " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InvalidArgument("scene file " + file.string() + " is not valid JSON: " + e.what());
  }
  const std::string where = file.string();
  if (require<std::string>(j, "format", where) != "seedfill-scene")
    throw InvalidArgument(where + ": not a seedfill scene");
  if (require<int>(j, "version", where) != kSceneVersion) throw InvalidArgument(where + ": unsupported version");
  const fs::path base = file.parent_path();

  SceneBundle b;
  SceneDataset& ds = b.dataset;
  ds.prompt = j.value("prompt", std::string());
  ds.frames = require<int>(j, "frames", where);
  ds.seed_ids = require<std::vector<int>>(j, "seed_ids", where);
  if (j.contains("fixture")) {
    const json& f = j["fixture"];
    FixtureRef ref;
    ref.name = require<std::string>(f, "name", where);
    ref.options.spacing = require<double>(f, "spacing", where);
    ref.options.edge_width = require<double>(f, "edge_width", where);
    ref.options.sigma_max = require<double>(f, "sigma_max", where);
    ref.options.width = require<int>(f, "width", where);
    ref.options.height = require<int>(f, "height", where);
    ref.options.focal = require<double>(f, "focal", where);
    ref.options.frames = require<int>(f, "frames", where);
    b.fixture = ref;
  }
  if (j.contains("seed_camera")) b.seed_camera = j["seed_camera"].get<int>();
  if (j.contains("bounds")) {
    const auto lo = require<std::vector<double>>(j["bounds"], "lo", where);
    const auto hi = require<std::vector<double>>(j["bounds"], "hi", where);
    if (lo.size() != 3 || hi.size() != 3) throw InvalidArgument(where + ": bounds need 3 components");
    b.bounds = Aabb{Eigen::Vector3d(lo[0], lo[1], lo[2]), Eigen::Vector3d(hi[0], hi[1], hi[2])};
  }
  for (const auto& jv : require<json>(j, "views", where)) {
    TrainingView v;
    v.id = require<int>(jv, "id", where);
    const std::string vw = where + " view " + std::to_string(v.id);
    v.frame = require<int>(jv, "frame", vw);
    v.camera = camera_from_json(require<json>(jv, "camera", vw), vw);
    v.rgb = read_png_rgb(resolve(base, require<std::string>(jv, "image", vw)).string());
    v.user_mask = read_png_mask(resolve(base, require<std::string>(jv, "user_mask", vw)).string());
    if (v.rgb.width != v.camera.width || v.rgb.height != v.camera.height ||
        v.user_mask.width != v.camera.width || v.user_mask.height != v.camera.height)
      throw InvalidArgument(vw + ": image size differs from the camera");
    ds.views.push_back(std::move(v));
  }
  for (int id : ds.seed_ids)
    if (ds.has_view(id)) ds.view(id).is_seed = true;
  ds.validate();
  if (j.contains("holdout"))
    for (const auto& jc : j["holdout"]) b.holdout.push_back(camera_from_json(jc, where + " holdout"));
  if (j.contains("clean_frames"))
    for (const auto& rel : j["clean_frames"])
      b.clean_frames.push_back(read_png_rgb(resolve(base, rel.get<std::string>()).string()));
  if (j.contains("tracks")) b.tracks = load_tracks(resolve(base, j["tracks"].get<std::string>()).string());
  return b;
}

SceneBundle fixture_bundle(const FixtureScene& scene, const RenderOptions& options) {
  SceneBundle b;
  b.dataset = build_dataset(scene, options);
  b.holdout = scene.holdout;
  b.bounds = scene.background_field.bounds();
  FixtureRef ref{scene.name, scene.options};
  ref.options.frames = scene.frames;
  b.fixture = ref;
  b.seed_camera = scene.seed_camera();
  if (scene.frames > 1) {
    b.clean_frames = clean_background_frames(scene, scene.seed_camera(), options);
    b.tracks = scene.tracks;
  }
  return b;
}

}  // namespace seedfill
