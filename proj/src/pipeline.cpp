#include "seedfill/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "seedfill/dynamic4d.hpp"
#include "seedfill/image_io.hpp"
#include "seedfill/metrics.hpp"
#include "seedfill/projection_correction.hpp"
#include "seedfill/remote_corrector.hpp"
#include "seedfill/training.hpp"

namespace seedfill {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(std::exception_ptr e) {
  try {
    std::rethrow_exception(e);
  } catch (const ConfigError&) {
    return kExitConfigInvalid;
  } catch (const MissingPrerequisite&) {
    return kExitMissingStage;
  } catch (const CorrectorError&) {
    return kExitCorrectorUnavailable;
  } catch (const TrainingDiverged&) {
    return kExitTrainingDiverged;
  } catch (...) {
    return kExitFailure;
  }
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"synth", "fit", "preprocess", "train",
                                                 "render", "eval", "ablate", "all"};
  return names;
}

std::shared_ptr<const Corrector> make_corrector(const std::string& selection, const RunConfig& config,
                                                std::shared_ptr<const FixtureScene> fixture,
                                                const SceneDataset& dataset) {
  if (selection == "identity") return std::make_shared<IdentityCorrector>();
  auto oracle = [&]() -> std::shared_ptr<const Corrector> {
    if (!fixture) throw ConfigError("/corrector: '" + selection + "' needs a scene synthesized from a fixture");
    return std::make_shared<OracleCorrector>(fixture, ViewCatalog(dataset), config.render);
  };
  if (selection == "oracle") return oracle();
  if (selection == "jitter")
    return std::make_shared<JitterCorrector>(config.rng_seed, config.jitter_amplitude, config.jitter_cell,
                                             fixture ? oracle() : nullptr);
  if (selection.rfind("remote:", 0) == 0) {
    EndpointConfig endpoint = parse_endpoint(selection.substr(7));
    endpoint.timeout = config.remote.timeout;
    endpoint.max_attempts = config.remote.max_attempts;
    endpoint.base_backoff = config.remote.base_backoff;
    endpoint.max_in_flight = config.remote.max_in_flight;
    auto remote = std::make_shared<RemoteCorrector>(endpoint);
    if (!remote->healthy())
      throw CorrectorUnavailable(-1, "no healthy corrector service at " + selection.substr(7));
    return remote;
  }
  throw ConfigError("/corrector: unknown selection '" + selection + "'");
}

namespace {

std::string view_stem(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "v%06d", id);
  return buf;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + p.string());
  out << text;
}

std::string sha_of_text(const std::string& text) {
  return sha256_hex(std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

std::string sha_of_file(const fs::path& p) {
  const auto bytes = read_file_bytes(p.string());
  return sha256_hex(bytes);
}

json dir_manifest(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "stamp.json")
      files.push_back(fs::relative(e.path(), dir).generic_string());
  std::sort(files.begin(), files.end());
  json out = json::object();
  for (const auto& f : files) out[f] = sha_of_file(dir / f);
  return out;
}

void write_stamp(const fs::path& dir, const std::string& hash) {
  json j = {{"input_hash", hash}, {"outputs", dir_manifest(dir)}};
  write_text(dir / "stamp.json", j.dump(1) + "\n");
}

void require_stage(const std::string& stage, const std::string& needs, const fs::path& dir) {
  if (!fs::exists(dir / "stamp.json")) throw MissingPrerequisite(stage, needs, (dir / "stamp.json").string());
}

std::optional<double> time_of(const RadianceField& field, const SceneDataset& dataset, int frame) {
  if (!field.is_dynamic()) return std::nullopt;
  return frame_time(frame, dataset.frames);
}

json provenance_json(const ViewProvenance& p) {
  return {{"noise_level", p.noise_level},
          {"source_views", p.source_views},
          {"weights", p.weights},
          {"fallback", p.fallback},
          {"stage", p.stage}};
}

json report_json(const EvalReport& r) {
  json holdout = json::array();
  for (const auto& s : r.holdout)
    holdout.push_back({{"camera", s.camera_id}, {"frame", s.frame}, {"psnr", s.psnr}, {"background_l1", s.background_l1}});
  return {{"ground_truth", true},
          {"holdout", holdout},
          {"holdout_psnr_min", r.holdout_psnr_min},
          {"holdout_psnr_mean", r.holdout_psnr_mean},
          {"frame_psnr_min", r.frame_psnr_min},
          {"background_l1", r.background_l1},
          {"render_inconsistency", r.render_inconsistency},
          {"image_inconsistency", r.image_inconsistency},
          {"render_temporal_inconsistency", r.render_temporal_inconsistency},
          {"image_temporal_inconsistency", r.image_temporal_inconsistency},
          {"masked_depth_rmse", r.masked_depth_rmse}};
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

class StageTimer {
 public:
  StageTimer(std::ostream& log, std::string name) : log_(log), name_(std::move(name)) {
    log_ << "[" << name_ << "] running\n";
  }
  ~StageTimer() {
    if (!done_) return;
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    log_ << "[" << name_ << "] done in " << fmt(s, 1) << " s\n";
  }
  void done() { done_ = true; }

 private:
  std::ostream& log_;
  std::string name_;
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
  bool done_ = false;
};

}  // namespace

struct Pipeline::Dirs {
  fs::path scene, fit, preprocess, train, render, eval;
};

struct Pipeline::Loaded {
  SceneBundle bundle;
};

Pipeline::Pipeline(RunConfig config, std::ostream& log) : config_(std::move(config)), log_(log) {
  config_.propagate_shared();
  root_ = fs::path(config_.output_dir);
}

Pipeline::~Pipeline() = default;

void Pipeline::run(const std::string& stage) {
  if (stage == "all") {
    for (const char* s : {"synth", "fit", "preprocess", "train", "render", "eval"}) run(s);
    return;
  }
  if (stage == "synth") return synth();
  if (stage == "fit") return fit();
  if (stage == "preprocess") return preprocess();
  if (stage == "train") return train();
  if (stage == "render") return render();
  if (stage == "eval") return eval();
  if (stage == "ablate") return ablate();
  throw ConfigError("unknown stage '" + stage + "'");
}

Pipeline::Loaded& Pipeline::loaded() {
  if (!loaded_) {
    require_stage("load", "synth", root_ / "scene");
    loaded_ = std::make_unique<Loaded>(Loaded{load_scene((root_ / "scene").string())});
  }
  return *loaded_;
}

std::shared_ptr<const FixtureScene> Pipeline::fixture() {
  if (fixture_) return fixture_;
  const auto& ref = loaded().bundle.fixture;
  if (!ref) return nullptr;
  fixture_ = std::make_shared<const FixtureScene>(make_scene(ref->name, ref->options));
  return fixture_;
}

std::string Pipeline::stage_hash(const std::string& stage, const std::string& variant,
                                 const std::vector<fs::path>& inputs) const {
  const json all = json::parse(run_config_to_json(config_));
  std::vector<std::string> keys = {"render"};
  if (stage == "synth") keys.push_back("scene");
  if (stage == "fit") {
    keys.insert(keys.end(), {"fit", "rng_seed"});
    if (config_.fit_mode == FitMode::Train) keys.push_back("train");
  }
  if (stage == "preprocess" || stage == "train")
    keys.insert(keys.end(), {stage, "corrector", "jitter", "remote", "rng_seed"});
  json cfg;
  for (const auto& k : keys) cfg[k] = all.at(k);
  std::string text = stage + "\n" + variant + "\n" + cfg.dump() + "\n";
  for (const auto& dir : inputs) text += read_text(dir / "stamp.json");
  return sha_of_text(text);
}

bool Pipeline::current(const std::string& name, const fs::path& dir, const std::string& hash) {
  const fs::path stamp = dir / "stamp.json";
  if (fs::exists(stamp)) {
    try {
      const json j = json::parse(read_text(stamp));
      if (j.at("input_hash") == hash && j.at("outputs") == dir_manifest(dir)) {
        log_ << "[" << name << "] up to date, skipping\n";
        skipped_.push_back(name);
        return true;
      }
    } catch (const json::exception&) {
    }
  }
  fs::remove_all(dir);
  fs::create_directories(dir);
  return false;
}

void Pipeline::append_metrics(const std::string& line) const {
  fs::create_directories(root_);
  std::ofstream out(root_ / "metrics.jsonl", std::ios::app);
  out << line << "\n";
}

// ---------------------------------------------------------------- synth

void Pipeline::synth() {
  const fs::path dir = root_ / "scene";
  std::string source;
  if (config_.scene.fixture) {
    source = "fixture:" + *config_.scene.fixture;
  } else {
    const fs::path p(*config_.scene.path);
    const fs::path file = fs::is_directory(p) ? p / "scene.json" : p;
    if (!fs::exists(file)) throw ConfigError("/scene/path: " + file.string() + " does not exist");
    source = "path:" + sha_of_file(file);
  }
  const std::string hash = stage_hash("synth", source, {});
  if (current("synth", dir, hash)) return;
  StageTimer timer(log_, "synth");
  SceneBundle bundle;
  if (config_.scene.fixture) {
    auto scene = std::make_shared<const FixtureScene>(make_scene(*config_.scene.fixture, config_.scene.fixture_options));
    bundle = fixture_bundle(*scene, config_.render);
    fixture_ = scene;
  } else {
    bundle = load_scene(*config_.scene.path);
  }
  save_scene(bundle, dir.string());
  loaded_.reset();
  write_stamp(dir, hash);
  append_metrics(json{{"stage", "synth"},
                      {"views", bundle.dataset.views.size()},
                      {"frames", bundle.dataset.frames},
                      {"fixture", bundle.fixture ? bundle.fixture->name : ""}}
                     .dump());
  timer.done();
}

// ---------------------------------------------------------------- fit

void Pipeline::fit() {
  const fs::path dir = root_ / "fit";
  require_stage("fit", "synth", root_ / "scene");
  const std::string hash = stage_hash("fit", "", {root_ / "scene"});
  if (current("fit", dir, hash)) return;
  StageTimer timer(log_, "fit");
  const SceneBundle& bundle = loaded().bundle;
  RadianceField field;
  double final_loss = 0.0;
  if (config_.fit_mode == FitMode::Fixture) {
    auto scene = fixture();
    if (!scene) throw ConfigError("/fit/mode: 'fixture' needs a scene synthesized from a fixture; use 'train'");
    field = scene->background_field;
  } else {
    if (!bundle.bounds) throw ConfigError("/fit/mode: 'train' needs scene bounds in scene.json");
    const double spacing = config_.fit_spacing.value_or(bundle.fixture ? bundle.fixture->options.spacing : 0.05);
    const Eigen::Vector3d extent = bundle.bounds->hi - bundle.bounds->lo;
    auto count = [&](double e) { return std::max(2, static_cast<int>(std::lround(e / spacing)) + 1); };
    const GridShape shape{count(extent.x()), count(extent.y()), count(extent.z()), bundle.dataset.frames};
    const Eigen::Vector3d background =
        bundle.fixture && fixture() ? fixture()->background_field.background() : Eigen::Vector3d::Constant(0.5);
    field = RadianceField(shape, *bundle.bounds, background);
    TrainConfig tc = config_.train;
    tc.warmup_steps = config_.fit_steps;
    tc.idu_rounds = 0;
    tc.w_depth = 0.0;
    tc.w_depth_warmup.reset();
    tc.mask_focus = 0.0;
    try {
      tc.validate(bundle.dataset.views.front().width(), bundle.dataset.views.front().height());
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("/train: ") + e.what());
    }
    Trainer trainer(field, bundle.dataset, make_original_training_set(bundle.dataset), tc,
                    [&](const TrainLogEntry& e) { final_loss = e.loss.total; });
    trainer.warmup();
  }
  save_field(field, (dir / "field.bin").string());
  write_stamp(dir, hash);
  append_metrics(json{{"stage", "fit"},
                      {"mode", config_.fit_mode == FitMode::Fixture ? "fixture" : "train"},
                      {"final_loss", final_loss}}
                     .dump());
  timer.done();
}

// ---------------------------------------------------------------- preprocess

void Pipeline::preprocess() {
  const Dirs d{root_ / "scene", root_ / "fit", root_ / "preprocess", root_ / "train", root_ / "render", root_ / "eval"};
  run_preprocess(d, "");
}

void Pipeline::run_preprocess(const Dirs& d, const std::string& variant) {
  const std::string name = variant.empty() ? "preprocess" : "ablate/" + variant + "/preprocess";
  require_stage(name, "fit", d.fit);
  const std::string hash = stage_hash("preprocess", variant, {d.scene, d.fit});
  if (current(name, d.preprocess, hash)) return;
  StageTimer timer(log_, name);

  SceneBundle& bundle = loaded().bundle;
  SceneDataset dataset = bundle.dataset;
  if (config_.seed_ids || config_.seed_stride) {
    std::vector<int> seeds;
    if (config_.seed_ids) {
      seeds = *config_.seed_ids;
    } else {
      seeds = every_kth_seed(dataset.view_ids_for_frame(0), *config_.seed_stride);
    }
    for (int id : seeds)
      if (!dataset.has_view(id) || dataset.view(id).frame != 0)
        throw ConfigError("/preprocess/seed_ids: " + std::to_string(id) + " is not a frame-0 view");
    for (auto& v : dataset.views) v.is_seed = false;
    for (int id : seeds) dataset.view(id).is_seed = true;
    dataset.seed_ids = seeds;
  }
  const RadianceField field = load_field((d.fit / "field.bin").string());
  const auto scene = fixture();
  const auto corrector = make_corrector(config_.corrector, config_, scene, dataset);
  const ObjectSegmenter segmenter = scene ? make_difference_segmenter(scene, config_.render) : ObjectSegmenter{};
  const BlockDctCodec codec(config_.codec_band);
  PreprocessConfig pc = config_.preprocess;
  pc.independent = variant == "independent";

  PreprocessState state;
  json video_json;
  if (variant == "in2n_style") {
    for (auto& v : dataset.views) v.inpainted_rgb = v.rgb;
  } else if (dataset.frames > 1) {
    if (!bundle.tracks || bundle.clean_frames.size() != static_cast<size_t>(dataset.frames))
      throw InvalidArgument("dynamic scene needs tracks and one clean background frame per frame");
    const SeedVideo video = preprocess_dynamic(dataset, state, field, *corrector, codec, bundle.clean_frames,
                                               *bundle.tracks, pc, segmenter);
    json motions = json::array();
    for (const auto& m : video.motions)
      motions.push_back({{"angle", m.angle()},
                         {"translation", {m.translation.x(), m.translation.y()}},
                         {"scale", m.scale},
                         {"residual_rms", m.residual_rms}});
    video_json = {{"camera_id", video.camera_id}, {"motions", motions}, {"held_frames", video.held_frames}};
    if (!video.held_frames.empty())
      log_ << "[" << name << "] warning: " << video.held_frames.size()
           << " frame(s) had too few visible tracks and reused the previous motion\n";
  } else {
    preprocess_static(dataset, state, field, *corrector, codec, pc, segmenter);
  }

  fs::create_directories(d.preprocess / "images");
  fs::create_directories(d.preprocess / "masks");
  fs::create_directories(d.preprocess / "depth");
  json views = json::array();
  size_t fallbacks = 0;
  for (const auto& v : dataset.views) {
    const std::string stem = view_stem(v.id);
    if (!v.inpainted_rgb) throw InvalidState("view " + std::to_string(v.id) + " was not preprocessed");
    write_png_rgb(*v.inpainted_rgb, (d.preprocess / "images" / (stem + ".png")).string(), 16);
    json jv = {{"id", v.id}, {"is_seed", v.is_seed}, {"image", "images/" + stem + ".png"}};
    if (v.object_mask) {
      write_png_mask(*v.object_mask, (d.preprocess / "masks" / (stem + ".png")).string());
      jv["object_mask"] = "masks/" + stem + ".png";
    }
    if (auto it = state.depth.find(v.id); it != state.depth.end()) {
      write_pfm(it->second.background_depth, (d.preprocess / "depth" / (stem + ".pfm")).string());
      jv["background_depth"] = "depth/" + stem + ".pfm";
      jv["plane_depth"] = it->second.object_plane_depth;
    }
    if (auto it = state.provenance.find(v.id); it != state.provenance.end()) {
      jv["provenance"] = provenance_json(it->second);
      fallbacks += it->second.fallback ? 1 : 0;
    }
    views.push_back(jv);
  }
  json j = {{"variant", variant.empty() ? "baseline" : variant}, {"seed_ids", dataset.seed_ids}, {"views", views}};
  if (!video_json.is_null()) j["seed_video"] = video_json;
  write_text(d.preprocess / "state.json", j.dump(1) + "\n");
  write_stamp(d.preprocess, hash);
  append_metrics(json{{"stage", "preprocess"},
                      {"variant", variant.empty() ? "baseline" : variant},
                      {"views", dataset.views.size()},
                      {"seeds", dataset.seed_ids},
                      {"fallback_views", fallbacks}}
                     .dump());
  timer.done();
}

// ---------------------------------------------------------------- train

namespace {

// Dataset and two-layer depths reconstructed from a preprocess directory.
void load_preprocessed(const fs::path& dir, SceneDataset& dataset, PreprocessState& state, std::string& variant) {
  const json j = json::parse(read_text(dir / "state.json"));
  variant = j.at("variant").get<std::string>();
  dataset.seed_ids = j.at("seed_ids").get<std::vector<int>>();
  for (const auto& jv : j.at("views")) {
    TrainingView& v = dataset.view(jv.at("id").get<int>());
    v.is_seed = jv.at("is_seed").get<bool>();
    v.inpainted_rgb = read_png_rgb((dir / jv.at("image").get<std::string>()).string());
    if (jv.contains("object_mask")) v.object_mask = read_png_mask((dir / jv["object_mask"].get<std::string>()).string());
    if (jv.contains("background_depth")) {
      if (!v.object_mask) throw MissingObjectMask(v.id);
      DepthMap bg = read_pfm((dir / jv["background_depth"].get<std::string>()).string());
      state.depth[v.id] = compose_two_layer_depth(std::move(bg), jv.at("plane_depth").get<double>(), *v.object_mask);
    }
  }
}

}  // namespace

void Pipeline::train() {
  const Dirs d{root_ / "scene", root_ / "fit", root_ / "preprocess", root_ / "train", root_ / "render", root_ / "eval"};
  run_train(d, "");
}

void Pipeline::run_train(const Dirs& d, const std::string& variant) {
  const std::string name = variant.empty() ? "train" : "ablate/" + variant + "/train";
  require_stage(name, "preprocess", d.preprocess);
  require_stage(name, "fit", d.fit);
  const std::string hash = stage_hash("train", variant, {d.fit, d.preprocess});
  if (current(name, d.train, hash)) return;
  StageTimer timer(log_, name);

  SceneDataset dataset = loaded().bundle.dataset;
  PreprocessState state;
  std::string stored_variant;
  load_preprocessed(d.preprocess, dataset, state, stored_variant);
  RadianceField field = load_field((d.fit / "field.bin").string());
  const auto corrector = make_corrector(config_.corrector, config_, fixture(), dataset);
  const BlockDctCodec codec(config_.codec_band);

  TrainConfig tc = config_.train;
  if (variant == "no_depth_warmup") tc.w_depth_warmup = 0.0;
  const bool update_only = variant == "in2n_style";
  if (update_only) {
    tc.warmup_steps = 0;
    tc.w_depth = 0.0;
    tc.w_depth_warmup.reset();
  }
  try {
    tc.validate(dataset.views.front().width(), dataset.views.front().height());
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("/train: ") + e.what());
  }

  std::ofstream log_file(d.train / "log.jsonl");
  const int every = config_.log_every;
  auto logger = [&](const TrainLogEntry& e) {
    if (e.step % every != 0) return;
    log_file << json{{"phase", e.phase},
                     {"step", e.step},
                     {"round", e.round},
                     {"lambda", e.lambda},
                     {"loss", e.loss.total},
                     {"rgb", e.loss.rgb},
                     {"depth", e.loss.depth},
                     {"perceptual", e.loss.perceptual}}
                    .dump()
             << "\n";
  };
  TrainingSet set = update_only ? make_original_training_set(dataset) : make_training_set(dataset, state);
  Trainer trainer(field, dataset, std::move(set), tc, logger);
  trainer.warmup();
  save_field(field, (d.train / "warmup.bin").string());
  const std::string tag = variant.empty() ? "baseline" : variant;
  json rounds = json::array();
  for (int r = 0; r < tc.idu_rounds; ++r) {
    const RoundReport rep = trainer.idu_round(*corrector, r, &codec);
    if (config_.round_checkpoints) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "round_%02d.bin", r);
      save_field(field, (d.train / buf).string());
    }
    const json jr = {{"round", rep.round},
                     {"lambda", rep.lambda},
                     {"refreshed", rep.refreshed.size()},
                     {"skipped", rep.skipped},
                     {"parameter_delta", rep.parameter_delta},
                     {"target_delta", rep.target_delta}};
    rounds.push_back(jr);
    json line = jr;
    line["stage"] = "train";
    line["variant"] = tag;
    append_metrics(line.dump());
    log_ << "[" << name << "] round " << r << " lambda " << fmt(rep.lambda, 3) << " delta "
         << fmt(rep.parameter_delta, 6) << "\n";
  }
  log_file.close();
  save_field(field, (d.train / "field.bin").string());
  fs::create_directories(d.train / "images");
  for (const auto& [id, target] : trainer.training_set().targets)
    write_png_rgb(target.image, (d.train / "images" / (view_stem(id) + ".png")).string(), 16);
  write_text(d.train / "rounds.json", rounds.dump(1) + "\n");
  write_stamp(d.train, hash);
  timer.done();
}

// ---------------------------------------------------------------- render

void Pipeline::render() {
  const Dirs d{root_ / "scene", root_ / "fit", root_ / "preprocess", root_ / "train", root_ / "render", root_ / "eval"};
  run_render(d);
}

void Pipeline::run_render(const Dirs& d) {
  require_stage("render", "train", d.train);
  const std::string hash = stage_hash("render", "", {d.train});
  if (current("render", d.render, hash)) return;
  StageTimer timer(log_, "render");
  const SceneBundle& bundle = loaded().bundle;
  const RadianceField field = load_field((d.train / "field.bin").string());
  fs::create_directories(d.render / "views");
  for (const auto& v : bundle.dataset.views) {
    const ViewRender r = render_view(field, v.camera, time_of(field, bundle.dataset, v.frame), config_.render);
    write_png_rgb(r.rgb, (d.render / "views" / (view_stem(v.id) + ".png")).string());
  }
  if (!bundle.holdout.empty()) fs::create_directories(d.render / "holdout");
  for (int f = 0; f < bundle.dataset.frames; ++f) {
    for (const auto& cam : bundle.holdout) {
      const ViewRender r = render_view(field, cam, time_of(field, bundle.dataset, f), config_.render);
      char buf[64];
      std::snprintf(buf, sizeof buf, "c%03d_f%02d.png", cam.id, f);
      write_png_rgb(r.rgb, (d.render / "holdout" / buf).string());
    }
  }
  write_stamp(d.render, hash);
  timer.done();
}

// ---------------------------------------------------------------- eval

void Pipeline::eval() {
  const Dirs d{root_ / "scene", root_ / "fit", root_ / "preprocess", root_ / "train", root_ / "render", root_ / "eval"};
  run_eval(d, "");
}

void Pipeline::run_eval(const Dirs& d, const std::string& variant) {
  const std::string name = variant.empty() ? "eval" : "ablate/" + variant + "/eval";
  require_stage(name, "train", d.train);
  const std::string hash = stage_hash("eval", variant, {d.preprocess, d.train});
  if (current(name, d.eval, hash)) return;
  StageTimer timer(log_, name);

  SceneDataset dataset = loaded().bundle.dataset;
  const RadianceField field = load_field((d.train / "field.bin").string());
  ViewImages preprocessed, final_images;
  for (const auto& v : dataset.views) {
    preprocessed[v.id] = read_png_rgb((d.preprocess / "images" / (view_stem(v.id) + ".png")).string());
    final_images[v.id] = read_png_rgb((d.train / "images" / (view_stem(v.id) + ".png")).string());
  }
  json metrics;
  const auto scene = fixture();
  if (scene) {
    EvalOptions eo;
    eo.render = config_.render;
    const EvalReport rep = evaluate_fixture(*scene, field, dataset, &preprocessed, eo);
    metrics = report_json(rep);
    metrics["final_image_inconsistency"] = cross_view_inconsistency(*scene, dataset, final_images, eo);
  } else {
    // Without ground truth: agreement with the final training images inside
    // the masks and with the original images outside them.
    double psnr_min = std::numeric_limits<double>::infinity(), bg = 0.0;
    for (const auto& v : dataset.views) {
      const RgbImage r = render_view(field, v.camera, time_of(field, dataset, v.frame), config_.render).rgb;
      psnr_min = std::min(psnr_min, psnr(r, final_images.at(v.id)));
      Mask outside(v.width(), v.height());
      for (size_t i = 0; i < outside.data.size(); ++i) outside.data[i] = v.user_mask.data[i] ? 0 : 1;
      bg += masked_mean_abs(r, v.rgb, outside);
    }
    metrics = {{"ground_truth", false},
               {"training_psnr_min", psnr_min},
               {"background_l1", bg / static_cast<double>(dataset.views.size())}};
  }
  metrics["variant"] = variant.empty() ? "baseline" : variant;
  metrics["corrector"] = config_.corrector;
  metrics["rng_seed"] = config_.rng_seed;
  write_text(d.eval / "metrics.json", metrics.dump(1) + "\n");

  std::ostringstream md;
  md << "# Run report" << (variant.empty() ? "" : " (" + variant + ")") << "\n\n";
  md << "Corrector: `" << config_.corrector << "`, seed " << config_.rng_seed << ", " << dataset.views.size()
     << " training views, " << dataset.frames << " frame(s).\n\n";
  md << "| metric | value |\n|---|---|\n";
  for (const auto& [k, v] : metrics.items())
    if (v.is_number()) md << "| " << k << " | " << fmt(v.get<double>()) << " |\n";
  if (metrics.contains("holdout")) {
    md << "\n## Held-out views\n\n| camera | frame | PSNR (dB) | background L1 |\n|---|---|---|---|\n";
    for (const auto& h : metrics["holdout"])
      md << "| " << h["camera"] << " | " << h["frame"] << " | " << fmt(h["psnr"].get<double>(), 2) << " | "
         << fmt(h["background_l1"].get<double>()) << " |\n";
  }
  if (variant.empty() && fs::exists(d.render / "views")) {
    md << "\n## Renders\n\n";
    for (const auto& v : dataset.views)
      md << "![view " << v.id << "](../render/views/" << view_stem(v.id) << ".png)\n";
    if (fs::exists(d.render / "holdout")) {
      std::vector<std::string> files;
      for (const auto& e : fs::directory_iterator(d.render / "holdout")) files.push_back(e.path().filename().string());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) md << "![holdout " << f << "](../render/holdout/" << f << ")\n";
    }
  }
  md << "\nTraining images after the last update: `../train/images/`. Preprocessed images: `../preprocess/images/`.\n";
  write_text(d.eval / "report.md", md.str());
  write_stamp(d.eval, hash);
  json line = metrics;
  line.erase("holdout");
  line["stage"] = "eval";
  append_metrics(line.dump());
  log_ << "[" << name << "] " << (scene ? "held-out PSNR min " + fmt(metrics["holdout_psnr_min"].get<double>(), 2) +
                                              " dB, background L1 " + fmt(metrics["background_l1"].get<double>())
                                        : "training PSNR min " + fmt(metrics["training_psnr_min"].get<double>(), 2))
       << "\n";
  timer.done();
}

// ---------------------------------------------------------------- ablate

void Pipeline::ablate() {
  require_stage("ablate", "eval", root_ / "eval");
  if (!fixture()) throw ConfigError("ablations need a scene synthesized from a fixture (ground truth)");
  StageTimer timer(log_, "ablate");
  const json baseline = json::parse(read_text(root_ / "eval" / "metrics.json"));
  json report = {{"baseline", baseline}, {"variants", json::object()}};
  std::ostringstream md;
  md << "# Ablation report\n\n| variant | render inconsistency | image inconsistency | masked depth RMSE | "
        "held-out PSNR min | checks |\n|---|---|---|---|---|---|\n";
  auto row = [&](const std::string& name, const json& m, const std::string& checks) {
    md << "| " << name << " | " << fmt(m["render_inconsistency"].get<double>()) << " | "
       << fmt(m["image_inconsistency"].get<double>()) << " | " << fmt(m["masked_depth_rmse"].get<double>()) << " | "
       << fmt(m["holdout_psnr_min"].get<double>(), 2) << " | " << checks << " |\n";
  };
  row("baseline", baseline, "");
  for (const auto& variant : config_.ablate_variants) {
    const fs::path base = root_ / "ablate" / variant;
    const Dirs d{root_ / "scene", root_ / "fit", base / "preprocess", base / "train", base / "render", base / "eval"};
    run_preprocess(d, variant);
    run_train(d, variant);
    run_eval(d, variant);
    const json m = json::parse(read_text(d.eval / "metrics.json"));
    const double base_img = baseline["image_inconsistency"].get<double>();
    const double base_rend = baseline["render_inconsistency"].get<double>();
    const double base_depth = baseline["masked_depth_rmse"].get<double>();
    json checks = json::object();
    json entry = {{"metrics", m},
                  {"image_inconsistency_ratio", base_img > 0 ? m["image_inconsistency"].get<double>() / base_img : 0.0},
                  {"render_inconsistency_ratio",
                   base_rend > 0 ? m["render_inconsistency"].get<double>() / base_rend : 0.0},
                  {"depth_rmse_delta", m["masked_depth_rmse"].get<double>() - base_depth}};
    if (variant == "independent") {
      checks["inconsistency_at_least_2x"] = entry["image_inconsistency_ratio"].get<double>() >= 2.0;
      checks["depth_rmse_higher"] = m["masked_depth_rmse"].get<double>() > base_depth;
    } else if (variant == "no_depth_warmup") {
      checks["depth_rmse_higher"] = m["masked_depth_rmse"].get<double>() > base_depth;
    }
    entry["checks"] = checks;
    report["variants"][variant] = entry;
    std::string summary;
    for (const auto& [k, v] : checks.items()) summary += k + (v.get<bool>() ? ": yes " : ": NO ");
    row(variant, m, summary);
    json line = {{"stage", "ablate"}, {"variant", variant}, {"checks", checks},
                 {"image_inconsistency_ratio", entry["image_inconsistency_ratio"]},
                 {"depth_rmse_delta", entry["depth_rmse_delta"]}};
    append_metrics(line.dump());
  }
  md << "\nInconsistency ratios compare each variant with the baseline on the preprocessed training images "
        "(image) and on field renders (render).\n";
  write_text(root_ / "ablate" / "report.json", report.dump(1) + "\n");
  write_text(root_ / "ablate" / "report.md", md.str());
  timer.done();
}

}  // namespace seedfill
