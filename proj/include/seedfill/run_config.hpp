#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "seedfill/errors.hpp"
#include "seedfill/fixtures.hpp"
#include "seedfill/projection_correction.hpp"
#include "seedfill/remote_corrector.hpp"
#include "seedfill/training.hpp"

namespace seedfill {

// Raised for configurations that fail schema or semantic validation.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

enum class FitMode { Fixture, Train };

struct SceneSource {
  std::optional<std::string> fixture;
  std::optional<std::string> path;
  FixtureOptions fixture_options;
};

struct RunConfig {
  SceneSource scene;
  std::string output_dir = "seedfill_out";
  std::string corrector = "oracle";
  uint64_t rng_seed = 0;
  RenderOptions render;

  FitMode fit_mode = FitMode::Fixture;
  int fit_steps = 400;
  std::optional<double> fit_spacing;  // default: the fixture spacing

  PreprocessConfig preprocess;
  int codec_band = 3;
  std::optional<std::vector<int>> seed_ids;
  std::optional<int> seed_stride;

  TrainConfig train;
  int log_every = 25;
  bool round_checkpoints = true;

  double jitter_amplitude = 0.2;
  int jitter_cell = 4;
  EndpointConfig remote;

  std::vector<std::string> ablate_variants = {"independent", "no_depth_warmup"};

  // The rng_seed and render settings are copied into the stage configs.
  void propagate_shared();
};

// The published JSON schema (docs/config.schema.json).
const std::string& config_schema_text();

// Validates `json_text` against the schema and builds a config. Unknown keys,
// wrong types and out-of-range values raise ConfigError naming the JSON
// pointer of the offending value.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Canonical JSON of the effective configuration (defaults filled in).
std::string run_config_to_json(const RunConfig& config);

// Returns the list of schema violations of a JSON document (empty when valid).
std::vector<std::string> validate_against_schema(const std::string& json_text, const std::string& schema_text);

}  // namespace seedfill
