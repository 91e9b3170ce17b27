#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "asalab/config.hpp"

namespace asalab::commands {

// Directory layout under an experiment's out dir:
//   data/       dataset splits, transcripts, manifest
//   prompts/    rendered prompt files + sidecars
//   ablation/   grid rows, aggregate tables, per-cell records
//   train_*/    per-variant training cells
inline constexpr const char* kDataSubdir = "data";
inline constexpr const char* kPromptsSubdir = "prompts";
inline constexpr const char* kAblationSubdir = "ablation";

// Generates the benchmark and writes the JSONL splits, the transcripts and a
// manifest with per-file content hashes. Deterministic under the config.
void gen_data(const ExperimentConfig& config, const std::filesystem::path& out_dir);

struct PromptEmission {
  std::filesystem::path text_path;
  std::filesystem::path sidecar_path;
};

// Emits prompt_L{level}_{seed}.txt plus a sidecar JSON with the level, k,
// temperature, example ids and permutation. Requires generated data.
PromptEmission build_prompts(const ExperimentConfig& config,
                             const std::filesystem::path& out_dir, int level, int k,
                             std::uint64_t seed);

// Stage 1 then Stage 2 for one variant, for every seed in the config.
void train(const ExperimentConfig& config, const std::filesystem::path& out_dir,
           const std::string& variant);

// Full variant x seed grid: EvalRow JSONL, CSV and text tables, summary, and
// per-cell records/checkpoints. Wall times go to separate timing files so all
// other outputs are byte-identical across reruns.
void ablate(const ExperimentConfig& config, const std::filesystem::path& out_dir, int jobs);

struct GradcheckSummary {
  double max_rel_error = 0.0;
  int cases = 0;
  double seconds = 0.0;
  bool pass = false;
};

// Finite-difference verification of the analytic gradients: per case one
// plain-backprop probe plus the reweighted batch gradient in both detach
// modes, on seeded random models, batches and configs.
GradcheckSummary gradcheck(std::uint64_t seed, int cases, double tolerance, std::ostream& log);

// Renders the aggregate tables from a run directory's rows.jsonl.
void report(const std::filesystem::path& run_dir, std::ostream& out);

}  // namespace asalab::commands
