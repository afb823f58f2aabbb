#pragma once

#include <optional>
#include <string>
#include <vector>

#include "seedfill/dynamic4d.hpp"
#include "seedfill/fixtures.hpp"
#include "seedfill/radiance_field.hpp"
#include "seedfill/scene_core.hpp"

namespace seedfill {

// Name and construction options of the fixture a scene was rendered from.
struct FixtureRef {
  std::string name;
  FixtureOptions options;
};

// Everything a scene directory carries besides the views themselves.
struct SceneBundle {
  SceneDataset dataset;
  std::vector<CameraView> holdout;
  std::optional<Aabb> bounds;
  std::optional<KeypointTracks> tracks;
  std::vector<RgbImage> clean_frames;  // seed camera, one per frame
  std::optional<int> seed_camera;
  std::optional<FixtureRef> fixture;  // set when synthesized from a fixture
};

// Writes `dir/scene.json` plus images/, masks/, clean/ and tracks.json.
// Images are stored as 8-bit PNG unless `bit_depth` is 16.
void save_scene(const SceneBundle& bundle, const std::string& dir, int bit_depth = 8);

// Reads a scene.json (or a directory holding one). Relative image paths are
// resolved against the file's directory. Throws InvalidArgument on schema
// violations and missing files.
SceneBundle load_scene(const std::string& path);

// Renders the fixture's views, clean seed frames and tracks into a bundle.
SceneBundle fixture_bundle(const FixtureScene& scene, const RenderOptions& options = {});

}  // namespace seedfill
