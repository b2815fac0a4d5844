#pragma once

#include <string>
#include <vector>

#include "capstext/config.hpp"
#include "capstext/train.hpp"

namespace capstext {

// Fully resolved run settings: defaults, then config-file values, then flag
// overrides.
struct RunConfig {
  ModelConfig model;
  TrainConfig trainer;
  std::string data_dir;
  std::string embeddings_path;
  std::string checkpoint_path;
  std::string out_dir = ".";
  std::string input_path;
  std::string split = "test";
  std::string mode = "single";
  bool include_macro = false;
  size_t min_count = 1;
  size_t jobs = 1;
  std::vector<int> ablate_iterations = {1, 3, 5};
  std::vector<std::string> ablate_vary = {"leaky", "orphan", "amend", "shared"};
};

struct AblationRow {
  size_t index = 0;
  int routing = 3;
  bool leaky = true;
  bool shared = false;
  bool orphan = true;
  bool amend = true;
  std::string loss;
  std::string squash;
  double accuracy = 0.0;
};

// Applies "key = value" settings onto a run config; unknown keys are errors.
void apply_kv_settings(RunConfig& config, const std::map<std::string, std::string>& kv,
                       const std::string& source);

// The resolved-config echo printed before any computation.
std::string run_config_echo(const RunConfig& config);

// Runs the ablation grid over the dataset in config.data_dir and returns one
// row per combination; also used directly by tests.
std::vector<AblationRow> run_ablation(const RunConfig& config);

std::string ablation_table(const std::vector<AblationRow>& rows);
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

// Entry point behind main(): parses argv, dispatches the subcommand, maps
// usage errors to exit code 2 and runtime failures to 1.
int run_cli(int argc, const char* const* argv);

}  // namespace capstext
