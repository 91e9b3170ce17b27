#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asalab/corpus.hpp"
#include "asalab/reweight.hpp"
#include "asalab/trainer.hpp"

namespace asalab {

// One experiment = one config file. Command-line flags override file values,
// file values override the defaults below.
struct ExperimentConfig {
  corpus::BenchmarkSpec benchmark;
  trainer::TrainPlan quality_plan;
  trainer::TrainPlan target_plan;
  reweight::ReweightConfig reweight;
  std::vector<std::string> variants = {"real_only", "only_syn", "mix_a1", "mix_a2"};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::string out_dir = "runs";
  int verbosity = 0;
  int hidden_width = 32;
  bool init_target_from_quality = false;
  std::string task_prompt =
      "Do you agree or disagree that technology makes everyday life easier? "
      "Explain your opinion with reasons and examples.";
  double prompt_temperature = 1.5;
  int prompt_examples = 10;

  // Plans as the pipeline runs them, with stage and reweight config attached.
  trainer::TrainPlan effective_quality_plan() const;
  trainer::TrainPlan effective_target_plan() const;
  trainer::ExperimentParams experiment_params() const;

  void validate() const;  // ConfigError / SpecError naming the field
};

ExperimentConfig default_config();

// Strict JSON: unknown keys are rejected with a field-level message. The
// format round-trips losslessly.
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const ExperimentConfig& config, const std::filesystem::path& path);
std::string config_to_json_text(const ExperimentConfig& config);
ExperimentConfig config_from_json_text(const std::string& text);

}  // namespace asalab
