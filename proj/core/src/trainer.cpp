#include "asalab/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "asalab/errors.hpp"
#include "asalab/rng.hpp"

namespace asalab::trainer {

namespace {

constexpr std::uint64_t kSaltInit = 0xA11;
constexpr std::uint64_t kSaltQualityShuffle = 0xB1;
constexpr std::uint64_t kSaltTargetShuffle = 0xB2;
constexpr std::uint64_t kSaltEpoch = 0xE0;

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> indices(n);
  for (std::size_t i = 0; i < n; ++i) indices[i] = i;
  Rng rng(derive_seed(seed, kSaltEpoch + static_cast<std::uint64_t>(epoch)));
  rng.shuffle(indices);
  return indices;
}

double validation_accuracy(const numkit::Model& model,
                           std::span<const corpus::Instance> validation) {
  return eval::overall_accuracy(model, validation).accuracy;
}

bool should_stop_early(const TrainPlan& plan, const std::vector<EpochStats>& epochs) {
  if (!plan.early_stop) return false;
  if (static_cast<int>(epochs.size()) <= plan.early_stop_patience) return false;
  double best = -1.0;
  std::size_t best_at = 0;
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    if (epochs[i].validation_overall_accuracy > best) {
      best = epochs[i].validation_overall_accuracy;
      best_at = i;
    }
  }
  return epochs.size() - 1 - best_at >= static_cast<std::size_t>(plan.early_stop_patience);
}

}  // namespace

std::string to_string(Stage stage) {
  return stage == Stage::kQuality ? "quality" : "target";
}

void TrainPlan::validate() const {
  if (epochs < 1) throw SpecError("plan.epochs must be >= 1");
  if (batch_size < 1) throw SpecError("plan.batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw SpecError("plan.learning_rate must be > 0");
  if (weight_decay < 0.0) throw SpecError("plan.weight_decay must be >= 0");
  if (early_stop_patience < 1) throw SpecError("plan.early_stop_patience must be >= 1");
  if (stage == Stage::kQuality && reweight.has_value()) {
    throw SpecError("plan: the quality stage carries no reweight config");
  }
  if (stage == Stage::kTarget) {
    if (!reweight.has_value()) throw SpecError("plan: the target stage requires a reweight config");
    reweight->validate();
  }
}

TrainResult train_quality(std::span<const corpus::Instance> real_train,
                          std::span<const corpus::Instance> validation,
                          const TrainPlan& plan, const numkit::Model& initial) {
  plan.validate();
  if (plan.stage != Stage::kQuality) throw SpecError("train_quality: plan stage must be quality");
  if (real_train.empty()) throw EmptyInputError("train_quality: empty training set");
  if (validation.empty()) throw EmptyInputError("train_quality: empty validation set");
  for (const corpus::Instance& instance : real_train) {
    if (instance.origin != corpus::Origin::kReal) {
      throw StageError("train_quality: instance " + instance.id +
                       " is synthesized; the quality stage trains on real data only");
    }
  }

  TrainResult result;
  result.model = initial;
  result.record.stage = Stage::kQuality;
  result.record.plan = plan;
  const int classes = result.model.class_count();
  numkit::OptimState optim =
      numkit::make_optim_state(result.model, plan.learning_rate, plan.weight_decay);

  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    const std::vector<std::size_t> order =
        shuffled_indices(real_train.size(), plan.shuffle_seed, epoch);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(plan.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(plan.batch_size));
      const double inv_b = 1.0 / static_cast<double>(end - start);
      numkit::Gradient grad = numkit::zeros_like(result.model);
      for (std::size_t pos = start; pos < end; ++pos) {
        const corpus::Instance& instance = real_train[order[pos]];
        if (instance.label < 1 || instance.label > classes) {
          throw LabelError("train_quality: instance " + instance.id + " has label " +
                           std::to_string(instance.label));
        }
        const std::vector<double> probs = numkit::forward(result.model, instance.features);
        const auto gold = static_cast<std::size_t>(instance.label - 1);
        loss_sum += -std::log(std::max(probs[gold], 1e-12));
        std::vector<double> upstream(static_cast<std::size_t>(classes));
        for (int j = 0; j < classes; ++j) {
          const double indicator = (static_cast<std::size_t>(j) == gold) ? 1.0 : 0.0;
          upstream[static_cast<std::size_t>(j)] =
              inv_b * (probs[static_cast<std::size_t>(j)] - indicator);
        }
        grad.add(numkit::backward(result.model, instance.features, upstream));
      }
      numkit::adamw_step(result.model, optim, grad);
    }

    EpochStats stats;
    stats.mean_loss = loss_sum / static_cast<double>(real_train.size());
    stats.validation_overall_accuracy = validation_accuracy(result.model, validation);
    result.record.epochs.push_back(stats);
    if (should_stop_early(plan, result.record.epochs)) break;
  }
  return result;
}

TrainResult train_target(std::span<const corpus::Instance> mixed,
                         const numkit::Model& quality,
                         std::span<const corpus::Instance> validation,
                         const TrainPlan& plan, const numkit::Model& initial) {
  plan.validate();
  if (plan.stage != Stage::kTarget) throw SpecError("train_target: plan stage must be target");
  if (mixed.empty()) throw EmptyInputError("train_target: empty training pool");
  if (validation.empty()) throw EmptyInputError("train_target: empty validation set");
  const reweight::ReweightConfig& config = *plan.reweight;

  TrainResult result;
  result.model = initial;
  result.record.stage = Stage::kTarget;
  result.record.plan = plan;
  numkit::OptimState optim =
      numkit::make_optim_state(result.model, plan.learning_rate, plan.weight_decay);

  // Synthesized instances carrying the quality-distance diagnostic, ordered by
  // distance for the per-epoch quartile ratios.
  std::vector<std::size_t> diagnosable;
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    if (mixed[i].origin == corpus::Origin::kSynthesized && mixed[i].meta.quality_distance) {
      diagnosable.push_back(i);
    }
  }
  std::sort(diagnosable.begin(), diagnosable.end(), [&](std::size_t a, std::size_t b) {
    const double da = *mixed[a].meta.quality_distance;
    const double db = *mixed[b].meta.quality_distance;
    if (da != db) return da < db;
    return mixed[a].id < mixed[b].id;
  });

  for (int epoch = 0; epoch < plan.epochs; ++epoch) {
    const std::vector<std::size_t> order =
        shuffled_indices(mixed.size(), plan.shuffle_seed, epoch);
    double loss_sum = 0.0;
    double ratio_sum_real = 0.0, ratio_sum_syn = 0.0;
    double weight_sum_real = 0.0, weight_sum_syn = 0.0;
    std::size_t count_real = 0, count_syn = 0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(plan.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(plan.batch_size));
      std::vector<corpus::Instance> batch;
      batch.reserve(end - start);
      for (std::size_t pos = start; pos < end; ++pos) batch.push_back(mixed[order[pos]]);

      const reweight::BatchLoss bl = reweight::batch_loss(quality, result.model, batch, config);
      loss_sum += bl.loss * static_cast<double>(batch.size());
      for (const reweight::InstanceLossBreakdown& b : bl.breakdowns) {
        if (b.origin == corpus::Origin::kReal) {
          ratio_sum_real += b.ratio;
          weight_sum_real += b.weight;
          ++count_real;
        } else {
          ratio_sum_syn += b.ratio;
          weight_sum_syn += b.weight;
          ++count_syn;
        }
      }
      const numkit::Gradient grad =
          reweight::batch_loss_gradient(quality, result.model, batch, config);
      numkit::adamw_step(result.model, optim, grad);
    }

    EpochStats stats;
    stats.mean_loss = loss_sum / static_cast<double>(mixed.size());
    stats.validation_overall_accuracy = validation_accuracy(result.model, validation);
    if (count_real > 0) {
      stats.mean_ratio_real = ratio_sum_real / static_cast<double>(count_real);
      stats.mean_weight_real = weight_sum_real / static_cast<double>(count_real);
    }
    if (count_syn > 0) {
      stats.mean_ratio_synthesized = ratio_sum_syn / static_cast<double>(count_syn);
      stats.mean_weight_synthesized = weight_sum_syn / static_cast<double>(count_syn);
    }

    if (diagnosable.size() >= 4) {
      stats.has_quartile_ratios = true;
      std::array<double, 4> sums{};
      std::array<std::size_t, 4> counts{};
      for (std::size_t i = 0; i < diagnosable.size(); ++i) {
        const corpus::Instance& instance = mixed[diagnosable[i]];
        const reweight::Confidences c =
            reweight::confidences(quality, result.model, instance, config);
        const double ratio = reweight::importance_ratio(c.p_quality, c.p_target, config);
        const std::size_t quartile = std::min<std::size_t>(3, i * 4 / diagnosable.size());
        sums[quartile] += ratio;
        counts[quartile] += 1;
      }
      for (int q = 0; q < 4; ++q) {
        if (counts[static_cast<std::size_t>(q)] > 0) {
          stats.synth_ratio_by_distance_quartile[static_cast<std::size_t>(q)] =
              sums[static_cast<std::size_t>(q)] /
              static_cast<double>(counts[static_cast<std::size_t>(q)]);
        }
      }
    }

    result.record.epochs.push_back(stats);
    if (should_stop_early(plan, result.record.epochs)) break;
  }
  return result;
}

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::kOnlySyn:
      return "only_syn";
    case Variant::kMixA1:
      return "mix_a1";
    case Variant::kMixA2:
      return "mix_a2";
    case Variant::kRealOnly:
      return "real_only";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& name) {
  if (name == "only_syn") return Variant::kOnlySyn;
  if (name == "mix_a1") return Variant::kMixA1;
  if (name == "mix_a2") return Variant::kMixA2;
  if (name == "real_only") return Variant::kRealOnly;
  throw ConfigError("unknown variant: \"" + name +
                    "\" (expected only_syn, mix_a1, mix_a2 or real_only)");
}

double variant_alpha(Variant variant, const reweight::ReweightConfig& base) {
  switch (variant) {
    case Variant::kMixA1:
      return 1.0;
    case Variant::kMixA2:
      return 2.0;
    case Variant::kOnlySyn:
      return 1.0;  // no real instances in the pool; every weight is 1 anyway
    case Variant::kRealOnly:
      return 1.0;  // surrogate for training on real data alone
  }
  return base.alpha;
}

ExperimentCell run_experiment_cell(const corpus::Dataset& dataset, Variant variant,
                                   std::uint64_t seed, const ExperimentParams& params) {
  ExperimentCell cell;
  cell.variant = variant;
  cell.seed = seed;

  const int feature_dim =
      dataset.train.empty() ? 0 : static_cast<int>(dataset.train.front().features.size());
  const numkit::Model initial(feature_dim, {params.hidden_width}, corpus::kClassCount,
                              derive_seed(seed, kSaltInit));

  TrainPlan quality_plan = params.quality_plan;
  quality_plan.stage = Stage::kQuality;
  quality_plan.reweight.reset();
  quality_plan.shuffle_seed = derive_seed(seed, kSaltQualityShuffle);
  const TrainResult quality =
      train_quality(dataset.train, dataset.validation, quality_plan, initial);
  cell.quality_model = quality.model;
  cell.quality_record = quality.record;

  std::vector<corpus::Instance> pool;
  switch (variant) {
    case Variant::kOnlySyn:
      pool.assign(dataset.synthesized.begin(), dataset.synthesized.end());
      break;
    case Variant::kRealOnly:
      pool.assign(dataset.train.begin(), dataset.train.end());
      break;
    case Variant::kMixA1:
    case Variant::kMixA2:
      pool.assign(dataset.train.begin(), dataset.train.end());
      pool.insert(pool.end(), dataset.synthesized.begin(), dataset.synthesized.end());
      break;
  }

  reweight::ReweightConfig config = params.reweight;
  config.alpha = variant_alpha(variant, params.reweight);

  TrainPlan target_plan = params.target_plan;
  target_plan.stage = Stage::kTarget;
  target_plan.reweight = config;
  target_plan.shuffle_seed = derive_seed(seed, kSaltTargetShuffle);

  const numkit::Model target_initial =
      params.init_target_from_quality ? cell.quality_model : initial;
  TrainResult target =
      train_target(pool, cell.quality_model, dataset.validation, target_plan, target_initial);
  target.record.initialized_from_quality = params.init_target_from_quality;
  cell.target_model = std::move(target.model);
  cell.target_record = std::move(target.record);

  auto make_row = [&](const std::string& split_name,
                      std::span<const corpus::Instance> split) {
    eval::EvalRow row;
    row.variant = to_string(variant);
    row.seed = seed;
    row.split = split_name;
    const eval::Evaluation overall = eval::overall_accuracy(cell.target_model, split);
    row.overall_accuracy = overall.accuracy;
    row.confusion = overall.confusion;
    row.pass_fail_accuracy = eval::pass_fail_accuracy(cell.target_model, split);
    row.instance_count = static_cast<int>(split.size());
    row.alpha = config.alpha;
    return row;
  };
  cell.seen_row = make_row("seen", dataset.seen_test);
  cell.unseen_row = make_row("unseen", dataset.unseen_test);
  return cell;
}

std::vector<ExperimentCell> run_experiment_grid(const corpus::Dataset& dataset,
                                                std::span<const Variant> variants,
                                                std::span<const std::uint64_t> seeds,
                                                const ExperimentParams& params, int jobs) {
  const std::size_t cell_count = variants.size() * seeds.size();
  std::vector<ExperimentCell> cells(cell_count);
  if (cell_count == 0) return cells;
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(cell_count)));

  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    while (true) {
      const std::size_t index = next.fetch_add(1);
      if (index >= cell_count) return;
      const Variant variant = variants[index / seeds.size()];
      const std::uint64_t seed = seeds[index % seeds.size()];
      try {
        cells[index] = run_experiment_cell(dataset, variant, seed, params);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(jobs));
    for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return cells;
}

}  // namespace asalab::trainer
