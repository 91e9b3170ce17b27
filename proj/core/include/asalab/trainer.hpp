#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asalab/corpus.hpp"
#include "asalab/eval.hpp"
#include "asalab/numkit.hpp"
#include "asalab/reweight.hpp"

namespace asalab::trainer {

enum class Stage { kQuality, kTarget };

std::string to_string(Stage stage);

struct TrainPlan {
  Stage stage = Stage::kQuality;
  int epochs = 3;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  std::uint64_t shuffle_seed = 0;
  std::optional<reweight::ReweightConfig> reweight;  // target stage only
  bool early_stop = false;  // on validation overall accuracy
  int early_stop_patience = 2;

  void validate() const;  // SpecError
};

struct EpochStats {
  double mean_loss = 0.0;
  double validation_overall_accuracy = 0.0;
  // Target stage only: means over the ratios/weights the steps actually used.
  double mean_ratio_real = 0.0;
  double mean_ratio_synthesized = 0.0;
  double mean_weight_real = 0.0;
  double mean_weight_synthesized = 0.0;
  // End-of-epoch ratios of synthesized instances grouped by quality-distance
  // quartile (0 = closest to the real class mean). Present when the pool
  // carries quality-distance metadata.
  bool has_quartile_ratios = false;
  std::array<double, 4> synth_ratio_by_distance_quartile{};
};

struct RunRecord {
  Stage stage = Stage::kQuality;
  std::vector<EpochStats> epochs;
  TrainPlan plan;
  std::string checkpoint_path;  // filled in by callers that persist the model
  bool initialized_from_quality = false;
  double wall_time_seconds = 0.0;  // serialized separately from the record
};

struct TrainResult {
  numkit::Model model;
  RunRecord record;
};

// Stage 1: plain cross-entropy on real data only. Rejects synthesized
// instances with StageError. The returned model is treated as frozen.
TrainResult train_quality(std::span<const corpus::Instance> real_train,
                          std::span<const corpus::Instance> validation,
                          const TrainPlan& plan, const numkit::Model& initial);

// Stage 2: reweighted loss on the mixed pool against the frozen quality model.
TrainResult train_target(std::span<const corpus::Instance> mixed,
                         const numkit::Model& quality,
                         std::span<const corpus::Instance> validation,
                         const TrainPlan& plan, const numkit::Model& initial);

// Ablation variants: Stage 2 pool composition plus the real-instance weight.
enum class Variant { kOnlySyn, kMixA1, kMixA2, kRealOnly };

std::string to_string(Variant variant);
Variant variant_from_string(const std::string& name);  // ConfigError on unknown

struct ExperimentParams {
  TrainPlan quality_plan;   // stage forced to kQuality
  TrainPlan target_plan;    // stage forced to kTarget
  reweight::ReweightConfig reweight;
  int hidden_width = 32;
  bool init_target_from_quality = false;
};

struct ExperimentCell {
  Variant variant = Variant::kMixA2;
  std::uint64_t seed = 0;
  RunRecord quality_record;
  RunRecord target_record;
  numkit::Model quality_model;
  numkit::Model target_model;
  eval::EvalRow seen_row;
  eval::EvalRow unseen_row;
};

// Stage 1 on real data, Stage 2 on the variant's pool with the variant's
// alpha, then evaluation on the seen and unseen splits. Deterministic in
// (dataset, variant, seed, params).
ExperimentCell run_experiment_cell(const corpus::Dataset& dataset, Variant variant,
                                   std::uint64_t seed, const ExperimentParams& params);

// Full grid; cells may be fanned out over `jobs` worker threads (cells only
// share the immutable dataset). Cell order in the result is variant-major,
// seed-minor regardless of job count.
std::vector<ExperimentCell> run_experiment_grid(const corpus::Dataset& dataset,
                                                std::span<const Variant> variants,
                                                std::span<const std::uint64_t> seeds,
                                                const ExperimentParams& params, int jobs = 1);

// The alpha the variant trains with: 1 for equal-weight mixing, 2 for the
// elevated real-instance weight, base config alpha otherwise.
double variant_alpha(Variant variant, const reweight::ReweightConfig& base);

}  // namespace asalab::trainer
