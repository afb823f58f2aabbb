#pragma once

#include <exception>
#include <filesystem>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "seedfill/corrector.hpp"
#include "seedfill/errors.hpp"
#include "seedfill/fixtures.hpp"
#include "seedfill/run_config.hpp"
#include "seedfill/scene_io.hpp"

namespace seedfill {

// A stage was asked to run before the stage producing its inputs.
class MissingPrerequisite : public InvalidState {
 public:
  MissingPrerequisite(const std::string& stage, const std::string& needs, const std::string& missing_path)
      : InvalidState("stage '" + stage + "' needs the outputs of '" + needs + "' (missing " + missing_path + ")"),
        needs_(needs) {}
  const std::string& needs() const { return needs_; }

 private:
  std::string needs_;
};

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfigInvalid = 2,
  kExitMissingStage = 3,
  kExitCorrectorUnavailable = 4,
  kExitTrainingDiverged = 5,
};

// Maps the exception currently being handled (or `e`) to an exit code.
int exit_code_for(std::exception_ptr e);

// Stage names in execution order; "all" runs synth through eval.
const std::vector<std::string>& stage_names();

// Corrector selected by `selection` ({identity, oracle, jitter,
// remote:<url>}). Oracle and a base for jitter need `fixture`.
std::shared_ptr<const Corrector> make_corrector(const std::string& selection, const RunConfig& config,
                                                std::shared_ptr<const FixtureScene> fixture,
                                                const SceneDataset& dataset);

// Stage orchestrator over one output directory. Every stage stamps its
// directory with a hash of its inputs and outputs; rerunning a stage whose
// stamp is current does nothing.
class Pipeline {
 public:
  Pipeline(RunConfig config, std::ostream& log);
  ~Pipeline();

  void run(const std::string& stage);

  void synth();
  void fit();
  void preprocess();
  void train();
  void render();
  void eval();
  void ablate();

  // Stages that were skipped because their stamps were current.
  const std::vector<std::string>& skipped() const { return skipped_; }
  const std::filesystem::path& root() const { return root_; }

 private:
  struct Dirs;
  struct Loaded;

  void run_preprocess(const Dirs& dirs, const std::string& variant);
  void run_train(const Dirs& dirs, const std::string& variant);
  void run_eval(const Dirs& dirs, const std::string& variant);
  void run_render(const Dirs& dirs);

  Loaded& loaded();
  std::shared_ptr<const FixtureScene> fixture();
  std::string stage_hash(const std::string& stage, const std::string& variant,
                         const std::vector<std::filesystem::path>& inputs) const;
  bool current(const std::string& name, const std::filesystem::path& dir, const std::string& hash);
  void append_metrics(const std::string& line) const;

  RunConfig config_;
  std::ostream& log_;
  std::filesystem::path root_;
  std::unique_ptr<Loaded> loaded_;
  std::shared_ptr<const FixtureScene> fixture_;
  std::vector<std::string> skipped_;
};

}  // namespace seedfill
