#include <CLI11.hpp>
#include <json.hpp>

#include <iostream>

#include "seedfill/pipeline.hpp"
#include "seedfill/run_config.hpp"

int main(int argc, char** argv) {
  using namespace seedfill;
  CLI::App app{"seedfill: seed-view propagation and field fine-tuning for 3D/4D inpainting"};
  std::string config_path, stage = "all", corrector, out;
  std::optional<uint64_t> seed;
  bool print_schema = false, print_config = false;
  app.add_option("--config", config_path, "JSON run configuration (see docs/config.schema.json)");
  app.add_option("--stage", stage, "synth | fit | preprocess | train | render | eval | ablate | all")
      ->check(CLI::IsMember(stage_names()));
  app.add_option("--corrector", corrector, "identity | oracle | jitter | remote:<url>");
  app.add_option("--seed", seed, "rng seed (overrides the config)");
  app.add_option("--out", out, "output directory (overrides the config)");
  app.add_flag("--print-schema", print_schema, "print the configuration schema and exit");
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigInvalid;
  }
  if (print_schema) {
    std::cout << config_schema_text();
    return kExitOk;
  }

  try {
    RunConfig config = config_path.empty() ? parse_run_config("{}") : load_run_config(config_path);
    if (!corrector.empty()) {
      // Reuse the config validation for the override.
      config.corrector = parse_run_config(nlohmann::json{{"corrector", corrector}}.dump()).corrector;
    }
    if (seed) config.rng_seed = *seed;
    if (!out.empty()) config.output_dir = out;
    config.propagate_shared();
    if (print_config) {
      std::cout << run_config_to_json(config) << "\n";
      return kExitOk;
    }
    Pipeline pipeline(config, std::cerr);
    pipeline.run(stage);
    return kExitOk;
  } catch (const std::exception& e) {
    const int code = exit_code_for(std::current_exception());
    std::cerr << "seedfill: error: " << e.what() << "\n";
    return code;
  }
}
