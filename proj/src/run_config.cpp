#include "seedfill/run_config.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

#include "seedfill_config_schema.inc"

namespace seedfill {

using nlohmann::json;

namespace {

std::string type_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_integer() || v.is_number_unsigned()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

bool type_matches(const json& v, const std::string& type) {
  const std::string actual = type_name(v);
  return actual == type || (type == "number" && actual == "integer");
}

// Supports the subset of JSON Schema the published schema uses: type,
// properties, additionalProperties=false, items, enum, minimum, maximum,
// exclusiveMinimum.
void check(const json& v, const json& schema, const std::string& where, std::vector<std::string>& errors) {
  const std::string at = where.empty() ? "/" : where;
  if (schema.contains("type") && !type_matches(v, schema["type"].get<std::string>())) {
    errors.push_back(at + ": expected " + schema["type"].get<std::string>() + ", got " + type_name(v));
    return;
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema["enum"]) found = found || e == v;
    if (!found) errors.push_back(at + ": value " + v.dump() + " is not one of " + schema["enum"].dump());
  }
  if (v.is_number()) {
    const double x = v.get<double>();
    if (schema.contains("minimum") && x < schema["minimum"].get<double>())
      errors.push_back(at + ": " + v.dump() + " is below the minimum " + schema["minimum"].dump());
    if (schema.contains("maximum") && x > schema["maximum"].get<double>())
      errors.push_back(at + ": " + v.dump() + " is above the maximum " + schema["maximum"].dump());
    if (schema.contains("exclusiveMinimum") && x <= schema["exclusiveMinimum"].get<double>())
      errors.push_back(at + ": " + v.dump() + " must exceed " + schema["exclusiveMinimum"].dump());
  }
  if (v.is_object()) {
    const json props = schema.value("properties", json::object());
    const bool closed = schema.contains("additionalProperties") && schema["additionalProperties"] == false;
    for (const auto& [key, value] : v.items()) {
      if (props.contains(key))
        check(value, props[key], where + "/" + key, errors);
      else if (closed)
        errors.push_back(where + "/" + key + ": unknown key");
    }
  }
  if (v.is_array() && schema.contains("items"))
    for (size_t i = 0; i < v.size(); ++i) check(v[i], schema["items"], where + "/" + std::to_string(i), errors);
}

BlendSpace blend_space_of(const std::string& s) { return s == "image" ? BlendSpace::Image : BlendSpace::Latent; }
std::string blend_space_name(BlendSpace s) { return s == BlendSpace::Image ? "image" : "latent"; }

template <typename T>
void read(const json& obj, const char* key, T& dst) {
  if (obj.contains(key)) dst = obj[key].get<T>();
}

void check_corrector(const std::string& sel) {
  if (sel == "identity" || sel == "oracle" || sel == "jitter") return;
  if (sel.rfind("remote:", 0) == 0) {
    try {
      parse_endpoint(sel.substr(7));
    } catch (const std::exception& e) {
      throw ConfigError("/corrector: " + std::string(e.what()));
    }
    return;
  }
  throw ConfigError("/corrector: expected identity, oracle, jitter or remote:<url>, got '" + sel + "'");
}

}  // namespace

void RunConfig::propagate_shared() {
  preprocess.rng_seed = rng_seed;
  preprocess.render = render;
  train.rng_seed = rng_seed;
  train.render = render;
}

const std::string& config_schema_text() {
  static const std::string text = kConfigSchemaJson;
  return text;
}

std::vector<std::string> validate_against_schema(const std::string& json_text, const std::string& schema_text) {
  std::vector<std::string> errors;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    errors.push_back(std::string("/: not valid JSON: ") + e.what());
    return errors;
  }
  check(doc, json::parse(schema_text), "", errors);
  return errors;
}

RunConfig parse_run_config(const std::string& json_text) {
  const auto errors = validate_against_schema(json_text, config_schema_text());
  if (!errors.empty()) {
    std::string msg = "invalid configuration:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  const json j = json::parse(json_text);
  RunConfig c;

  if (j.contains("scene")) {
    const json& s = j["scene"];
    if (s.contains("fixture")) c.scene.fixture = s["fixture"].get<std::string>();
    if (s.contains("path")) c.scene.path = s["path"].get<std::string>();
    if (c.scene.fixture && c.scene.path) throw ConfigError("/scene: give either fixture or path, not both");
    read(s, "width", c.scene.fixture_options.width);
    read(s, "height", c.scene.fixture_options.height);
    read(s, "focal", c.scene.fixture_options.focal);
    read(s, "frames", c.scene.fixture_options.frames);
    read(s, "spacing", c.scene.fixture_options.spacing);
  }
  if (!c.scene.fixture && !c.scene.path) c.scene.fixture = "cube-to-cylinder";
  read(j, "output_dir", c.output_dir);
  read(j, "corrector", c.corrector);
  check_corrector(c.corrector);
  read(j, "rng_seed", c.rng_seed);

  if (j.contains("render")) {
    read(j["render"], "samples", c.render.samples);
    read(j["render"], "opacity_floor", c.render.opacity_floor);
  }
  if (j.contains("fit")) {
    const json& f = j["fit"];
    if (f.contains("mode")) c.fit_mode = f["mode"] == "train" ? FitMode::Train : FitMode::Fixture;
    read(f, "steps", c.fit_steps);
    if (f.contains("spacing")) c.fit_spacing = f["spacing"].get<double>();
  }

  if (j.contains("preprocess")) {
    const json& p = j["preprocess"];
    read(p, "neighbors", c.preprocess.neighbors);
    read(p, "lambda_seed0", c.preprocess.lambda_seed0);
    read(p, "lambda_seed", c.preprocess.lambda_seed);
    read(p, "lambda_nonseed", c.preprocess.lambda_nonseed);
    if (p.contains("blend_space")) c.preprocess.blend_space = blend_space_of(p["blend_space"]);
    read(p, "codec_band", c.codec_band);
    read(p, "warp_subsamples", c.preprocess.warp.subsamples);
    if (p.contains("seed_ids")) c.seed_ids = p["seed_ids"].get<std::vector<int>>();
    if (p.contains("seed_stride")) c.seed_stride = p["seed_stride"].get<int>();
    if (c.seed_ids && c.seed_stride) throw ConfigError("/preprocess: give either seed_ids or seed_stride");
    if (c.seed_ids && c.seed_ids->empty()) throw ConfigError("/preprocess/seed_ids: must not be empty");
    read(p, "max_concurrency", c.preprocess.max_concurrency);
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    read(t, "warmup_steps", c.train.warmup_steps);
    read(t, "idu_rounds", c.train.idu_rounds);
    read(t, "steps_per_round", c.train.steps_per_round);
    read(t, "patch_size", c.train.patch_size);
    read(t, "patches_per_step", c.train.patches_per_step);
    read(t, "w_rgb", c.train.w_rgb);
    read(t, "w_depth", c.train.w_depth);
    if (t.contains("w_depth_warmup")) c.train.w_depth_warmup = t["w_depth_warmup"].get<double>();
    read(t, "w_perc", c.train.w_perc);
    read(t, "lambda_start", c.train.schedule.lambda_start);
    read(t, "lambda_end", c.train.schedule.lambda_end);
    read(t, "lr_density", c.train.adam.lr_density);
    read(t, "lr_color", c.train.adam.lr_color);
    read(t, "blend_beta", c.train.blend_beta);
    if (t.contains("blend_space")) c.train.blend_space = blend_space_of(t["blend_space"]);
    read(t, "mask_focus", c.train.mask_focus);
    read(t, "max_concurrency", c.train.max_concurrency);
    read(t, "log_every", c.log_every);
    read(t, "round_checkpoints", c.round_checkpoints);
  }
  if (c.train.schedule.lambda_end > c.train.schedule.lambda_start)
    throw ConfigError("/train: lambda_end must not exceed lambda_start");

  if (j.contains("jitter")) {
    read(j["jitter"], "amplitude", c.jitter_amplitude);
    read(j["jitter"], "cell", c.jitter_cell);
  }
  if (j.contains("remote")) {
    const json& r = j["remote"];
    if (r.contains("timeout_ms")) c.remote.timeout = std::chrono::milliseconds(r["timeout_ms"].get<int>());
    read(r, "max_attempts", c.remote.max_attempts);
    if (r.contains("backoff_ms")) c.remote.base_backoff = std::chrono::milliseconds(r["backoff_ms"].get<int>());
    read(r, "max_in_flight", c.remote.max_in_flight);
  }
  if (j.contains("ablate")) read(j["ablate"], "variants", c.ablate_variants);
  c.propagate_shared();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read configuration file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  json scene;
  if (c.scene.fixture) scene["fixture"] = *c.scene.fixture;
  if (c.scene.path) scene["path"] = *c.scene.path;
  scene["width"] = c.scene.fixture_options.width;
  scene["height"] = c.scene.fixture_options.height;
  scene["focal"] = c.scene.fixture_options.focal;
  scene["frames"] = c.scene.fixture_options.frames;
  scene["spacing"] = c.scene.fixture_options.spacing;
  j["scene"] = scene;
  j["output_dir"] = c.output_dir;
  j["corrector"] = c.corrector;
  j["rng_seed"] = c.rng_seed;
  j["render"] = {{"samples", c.render.samples}, {"opacity_floor", c.render.opacity_floor}};
  json fit = {{"mode", c.fit_mode == FitMode::Train ? "train" : "fixture"}, {"steps", c.fit_steps}};
  if (c.fit_spacing) fit["spacing"] = *c.fit_spacing;
  j["fit"] = fit;
  json pre = {{"neighbors", c.preprocess.neighbors},
              {"lambda_seed0", c.preprocess.lambda_seed0},
              {"lambda_seed", c.preprocess.lambda_seed},
              {"lambda_nonseed", c.preprocess.lambda_nonseed},
              {"blend_space", blend_space_name(c.preprocess.blend_space)},
              {"codec_band", c.codec_band},
              {"warp_subsamples", c.preprocess.warp.subsamples},
              {"max_concurrency", c.preprocess.max_concurrency}};
  if (c.seed_ids) pre["seed_ids"] = *c.seed_ids;
  if (c.seed_stride) pre["seed_stride"] = *c.seed_stride;
  j["preprocess"] = pre;
  const TrainConfig& t = c.train;
  json train = {{"warmup_steps", t.warmup_steps},
                {"idu_rounds", t.idu_rounds},
                {"steps_per_round", t.steps_per_round},
                {"patch_size", t.patch_size},
                {"patches_per_step", t.patches_per_step},
                {"w_rgb", t.w_rgb},
                {"w_depth", t.w_depth},
                {"w_perc", t.w_perc},
                {"lambda_start", t.schedule.lambda_start},
                {"lambda_end", t.schedule.lambda_end},
                {"lr_density", t.adam.lr_density},
                {"lr_color", t.adam.lr_color},
                {"blend_beta", t.blend_beta},
                {"blend_space", blend_space_name(t.blend_space)},
                {"mask_focus", t.mask_focus},
                {"max_concurrency", t.max_concurrency},
                {"log_every", c.log_every},
                {"round_checkpoints", c.round_checkpoints}};
  if (t.w_depth_warmup) train["w_depth_warmup"] = *t.w_depth_warmup;
  j["train"] = train;
  j["jitter"] = {{"amplitude", c.jitter_amplitude}, {"cell", c.jitter_cell}};
  j["remote"] = {{"timeout_ms", c.remote.timeout.count()},
                 {"max_attempts", c.remote.max_attempts},
                 {"backoff_ms", c.remote.base_backoff.count()},
                 {"max_in_flight", c.remote.max_in_flight}};
  j["ablate"] = {{"variants", c.ablate_variants}};
  return j.dump(2);
}

}  // namespace seedfill
