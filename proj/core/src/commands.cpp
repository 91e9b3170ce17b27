#include "asalab/commands.hpp"

#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>

#include "asalab/errors.hpp"
#include "asalab/rng.hpp"
#include "json.hpp"

namespace asalab::commands {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

double seconds_since(const std::chrono::steady_clock::time_point& start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string hex64(std::uint64_t value) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(value));
  return std::string(buf);
}

std::uint64_t hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("hash: missing file: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
    if (!in) break;
  }
  return h;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out << text;
}

json epoch_to_json(const trainer::EpochStats& stats, trainer::Stage stage) {
  json j;
  j["mean_loss"] = stats.mean_loss;
  j["validation_overall_accuracy"] = stats.validation_overall_accuracy;
  if (stage == trainer::Stage::kTarget) {
    j["mean_ratio_real"] = stats.mean_ratio_real;
    j["mean_ratio_synthesized"] = stats.mean_ratio_synthesized;
    j["mean_weight_real"] = stats.mean_weight_real;
    j["mean_weight_synthesized"] = stats.mean_weight_synthesized;
    if (stats.has_quartile_ratios) {
      j["synth_ratio_by_distance_quartile"] = stats.synth_ratio_by_distance_quartile;
    }
  }
  return j;
}

json record_to_json(const trainer::RunRecord& record) {
  json j;
  j["stage"] = trainer::to_string(record.stage);
  json epochs = json::array();
  for (const trainer::EpochStats& stats : record.epochs) {
    epochs.push_back(epoch_to_json(stats, record.stage));
  }
  j["epochs"] = std::move(epochs);
  json plan;
  plan["stage"] = trainer::to_string(record.plan.stage);
  plan["epochs"] = record.plan.epochs;
  plan["batch_size"] = record.plan.batch_size;
  plan["learning_rate"] = record.plan.learning_rate;
  plan["weight_decay"] = record.plan.weight_decay;
  plan["shuffle_seed"] = record.plan.shuffle_seed;
  plan["early_stop"] = record.plan.early_stop;
  if (record.plan.reweight) {
    json rw;
    rw["alpha"] = record.plan.reweight->alpha;
    rw["eta"] = record.plan.reweight->eta;
    rw["r_max"] = record.plan.reweight->r_max;
    rw["p_floor"] = record.plan.reweight->p_floor;
    rw["detach_ratio"] = record.plan.reweight->detach_ratio;
    plan["reweight"] = std::move(rw);
  }
  j["plan"] = std::move(plan);
  j["initialized_from_quality"] = record.initialized_from_quality;
  if (!record.checkpoint_path.empty()) j["checkpoint"] = record.checkpoint_path;
  // Wall time is intentionally absent: records must be byte-identical across
  // reruns; timings go to a separate file.
  return j;
}

corpus::Dataset load_dataset(const fs::path& data_dir) {
  corpus::Dataset ds;
  ds.train = corpus::load_jsonl(data_dir / "train.jsonl");
  ds.validation = corpus::load_jsonl(data_dir / "validation.jsonl");
  ds.seen_test = corpus::load_jsonl(data_dir / "seen_test.jsonl");
  ds.unseen_test = corpus::load_jsonl(data_dir / "unseen_test.jsonl");
  ds.synthesized = corpus::load_jsonl(data_dir / "synthesized.jsonl");
  return ds;
}

// Per-cell artifacts: checkpoints, records, final-pass breakdowns when asked.
void write_cell(const trainer::ExperimentCell& cell, const fs::path& cell_dir,
                const corpus::Dataset& dataset, const ExperimentConfig& config,
                double cell_seconds) {
  fs::create_directories(cell_dir);
  numkit::save_checkpoint(cell.quality_model, cell.seed,
                          static_cast<std::int64_t>(cell.quality_record.epochs.size()),
                          cell_dir / "quality_checkpoint.json");
  numkit::save_checkpoint(cell.target_model, cell.seed,
                          static_cast<std::int64_t>(cell.target_record.epochs.size()),
                          cell_dir / "target_checkpoint.json");
  trainer::RunRecord quality_record = cell.quality_record;
  quality_record.checkpoint_path = "quality_checkpoint.json";
  trainer::RunRecord target_record = cell.target_record;
  target_record.checkpoint_path = "target_checkpoint.json";
  write_text(cell_dir / "quality_record.json", record_to_json(quality_record).dump(2) + "\n");
  write_text(cell_dir / "target_record.json", record_to_json(target_record).dump(2) + "\n");

  json timing;
  timing["cell_seconds"] = cell_seconds;
  write_text(cell_dir / "timing.json", timing.dump(2) + "\n");

  if (config.verbosity >= 1) {
    // Final-pass breakdown log over the variant's pool for offline diagnosis.
    std::vector<corpus::Instance> pool;
    switch (cell.variant) {
      case trainer::Variant::kOnlySyn:
        pool = dataset.synthesized;
        break;
      case trainer::Variant::kRealOnly:
        pool = dataset.train;
        break;
      default:
        pool = dataset.train;
        pool.insert(pool.end(), dataset.synthesized.begin(), dataset.synthesized.end());
        break;
    }
    reweight::ReweightConfig rw = config.reweight;
    rw.alpha = trainer::variant_alpha(cell.variant, config.reweight);
    const reweight::BatchLoss bl =
        reweight::batch_loss(cell.quality_model, cell.target_model, pool, rw);
    std::ofstream out(cell_dir / "breakdowns.jsonl", std::ios::binary);
    reweight::append_breakdown_log(bl, out);
  }
}

}  // namespace

void gen_data(const ExperimentConfig& config, const fs::path& out_dir) {
  config.validate();
  const corpus::Dataset ds = corpus::generate_benchmark(config.benchmark);
  const fs::path data_dir = out_dir / kDataSubdir;
  fs::create_directories(data_dir);

  corpus::save_jsonl(ds.train, data_dir / "train.jsonl");
  corpus::save_jsonl(ds.validation, data_dir / "validation.jsonl");
  corpus::save_jsonl(ds.seen_test, data_dir / "seen_test.jsonl");
  corpus::save_jsonl(ds.unseen_test, data_dir / "unseen_test.jsonl");
  corpus::save_jsonl(ds.synthesized, data_dir / "synthesized.jsonl");
  corpus::save_transcripts(ds.transcripts, data_dir / "transcripts.jsonl");

  json manifest;
  json files = json::object();
  for (const char* name : {"train.jsonl", "validation.jsonl", "seen_test.jsonl",
                           "unseen_test.jsonl", "synthesized.jsonl", "transcripts.jsonl"}) {
    const fs::path path = data_dir / name;
    json entry;
    entry["fnv1a64"] = hex64(hash_file(path));
    entry["bytes"] = static_cast<std::uint64_t>(fs::file_size(path));
    files[name] = std::move(entry);
  }
  manifest["files"] = std::move(files);
  manifest["benchmark_seed"] = config.benchmark.seed;
  json counts;
  counts["train"] = ds.train.size();
  counts["validation"] = ds.validation.size();
  counts["seen_test"] = ds.seen_test.size();
  counts["unseen_test"] = ds.unseen_test.size();
  counts["synthesized"] = ds.synthesized.size();
  manifest["counts"] = std::move(counts);
  write_text(data_dir / "manifest.json", manifest.dump(2) + "\n");

  save_config(config, out_dir / "config.json");
}

PromptEmission build_prompts(const ExperimentConfig& config, const fs::path& out_dir,
                             int level, int k, std::uint64_t seed) {
  config.validate();
  const fs::path transcripts_path = out_dir / kDataSubdir / "transcripts.jsonl";
  if (!fs::exists(transcripts_path)) {
    throw MissingArtifactError("build_prompts: missing " + transcripts_path.string() +
                               " (run gen-data first)");
  }
  const std::vector<corpus::Transcript> pool = corpus::load_transcripts(transcripts_path);
  const corpus::PromptBundle bundle = corpus::build_prompt(
      config.task_prompt, level, pool, k, config.prompt_temperature, seed);

  const fs::path prompts_dir = out_dir / kPromptsSubdir;
  fs::create_directories(prompts_dir);
  const std::string stem = "prompt_L" + std::to_string(level) + "_" + std::to_string(seed);

  PromptEmission emission;
  emission.text_path = prompts_dir / (stem + ".txt");
  emission.sidecar_path = prompts_dir / (stem + ".json");
  write_text(emission.text_path, bundle.rendered);

  json sidecar;
  sidecar["level"] = bundle.level;
  sidecar["k"] = bundle.example_count;
  sidecar["temperature"] = bundle.temperature;
  sidecar["example_ids"] = bundle.example_ids;
  sidecar["permutation"] = bundle.permutation;
  sidecar["permutation_seed"] = bundle.permutation_seed;
  write_text(emission.sidecar_path, sidecar.dump(2) + "\n");
  return emission;
}

void train(const ExperimentConfig& config, const fs::path& out_dir,
           const std::string& variant_name) {
  config.validate();
  const trainer::Variant variant = trainer::variant_from_string(variant_name);
  const fs::path data_dir = out_dir / kDataSubdir;
  if (!fs::exists(data_dir / "manifest.json")) {
    throw MissingArtifactError("train: missing dataset at " + data_dir.string() +
                               " (run gen-data first)");
  }
  const corpus::Dataset dataset = load_dataset(data_dir);
  const trainer::ExperimentParams params = config.experiment_params();

  for (const std::uint64_t seed : config.seeds) {
    const auto start = std::chrono::steady_clock::now();
    const trainer::ExperimentCell cell =
        trainer::run_experiment_cell(dataset, variant, seed, params);
    const fs::path cell_dir =
        out_dir / ("train_" + variant_name) / ("s" + std::to_string(seed));
    write_cell(cell, cell_dir, dataset, config, seconds_since(start));
    std::vector<eval::EvalRow> rows = {cell.seen_row, cell.unseen_row};
    eval::save_rows_jsonl(rows, cell_dir / "rows.jsonl");
  }
}

void ablate(const ExperimentConfig& config, const fs::path& out_dir, int jobs) {
  config.validate();
  const fs::path data_dir = out_dir / kDataSubdir;
  if (!fs::exists(data_dir / "manifest.json")) {
    throw MissingArtifactError("ablate: missing dataset at " + data_dir.string() +
                               " (run gen-data first)");
  }
  const corpus::Dataset dataset = load_dataset(data_dir);
  const trainer::ExperimentParams params = config.experiment_params();

  std::vector<trainer::Variant> variants;
  for (const std::string& name : config.variants) {
    variants.push_back(trainer::variant_from_string(name));
  }

  const auto start = std::chrono::steady_clock::now();
  const std::vector<trainer::ExperimentCell> cells =
      trainer::run_experiment_grid(dataset, variants, config.seeds, params, jobs);
  const double grid_seconds = seconds_since(start);

  const fs::path ablation_dir = out_dir / kAblationSubdir;
  fs::create_directories(ablation_dir);

  std::vector<eval::EvalRow> rows;
  for (const trainer::ExperimentCell& cell : cells) {
    rows.push_back(cell.seen_row);
    rows.push_back(cell.unseen_row);
    const fs::path cell_dir =
        ablation_dir / "cells" /
        (trainer::to_string(cell.variant) + "_s" + std::to_string(cell.seed));
    write_cell(cell, cell_dir, dataset, config, 0.0);
  }
  eval::save_rows_jsonl(rows, ablation_dir / "rows.jsonl");

  const eval::AblationTable table = eval::ablation_table(rows, config.variants);
  write_text(ablation_dir / "table.csv", eval::render_table_csv(table));
  write_text(ablation_dir / "table.txt", eval::render_table_text(table));

  json summary;
  summary["ordering_holds"] = table.ordering_holds;
  summary["variants"] = config.variants;
  summary["seeds"] = config.seeds;
  json means = json::object();
  for (const eval::AggregateRow& row : table.rows) {
    means[row.variant + "/" + row.split + "/" + row.metric] = row.mean;
  }
  summary["means"] = std::move(means);
  write_text(ablation_dir / "summary.json", summary.dump(2) + "\n");

  json timing;
  timing["grid_seconds"] = grid_seconds;
  timing["jobs"] = jobs;
  write_text(ablation_dir / "timing.json", timing.dump(2) + "\n");
}

GradcheckSummary gradcheck(std::uint64_t seed, int cases, double tolerance,
                           std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  GradcheckSummary summary;
  summary.cases = cases;

  for (int case_index = 0; case_index < cases; ++case_index) {
    const std::uint64_t case_seed =
        derive_seed(seed, 0xfd00 + static_cast<std::uint64_t>(case_index));
    Rng rng(case_seed);
    const int dim = 3 + static_cast<int>(rng.uniform_int(0, 5));
    const int hidden = 4 + static_cast<int>(rng.uniform_int(0, 6));
    const int batch_size = 2 + static_cast<int>(rng.uniform_int(0, 4));

    const numkit::Model quality(dim, {hidden}, corpus::kClassCount, derive_seed(case_seed, 1));
    const numkit::Model target(dim, {hidden}, corpus::kClassCount, derive_seed(case_seed, 2));

    std::vector<corpus::Instance> batch;
    for (int i = 0; i < batch_size; ++i) {
      corpus::Instance inst;
      inst.id = "case" + std::to_string(case_index) + "_" + std::to_string(i);
      inst.label = 1 + static_cast<int>(rng.uniform_int(0, corpus::kClassCount - 1));
      inst.level = inst.label;
      inst.origin = (i % 2 == 0) ? corpus::Origin::kReal : corpus::Origin::kSynthesized;
      inst.prompt_id = "probe";
      inst.features.resize(static_cast<std::size_t>(dim));
      for (double& v : inst.features) v = 1.5 * rng.normal();
      batch.push_back(std::move(inst));
    }

    reweight::ReweightConfig config;
    config.alpha = 1.0 + 2.0 * rng.uniform();
    config.eta = 0.25 + 2.0 * rng.uniform();
    config.r_max = 2.0 + 8.0 * rng.uniform();
    config.p_floor = 1e-7;

    // Plain backprop probe: the loss <upstream, logits> has gradient backward().
    {
      std::vector<double> upstream(corpus::kClassCount);
      for (double& v : upstream) v = rng.normal();
      const corpus::Instance& inst = batch.front();
      const numkit::Gradient analytic = numkit::backward(target, inst.features, upstream);
      const auto loss = [&](const numkit::Model& m) {
        const std::vector<double> logits = numkit::forward_logits(m, inst.features);
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.size(); ++j) sum += upstream[j] * logits[j];
        return sum;
      };
      const numkit::GradCheckReport report =
          numkit::finite_diff_check(target, loss, analytic, tolerance);
      summary.max_rel_error = std::max(summary.max_rel_error, report.max_rel_error);
    }

    for (const bool detach : {true, false}) {
      config.detach_ratio = detach;
      const numkit::Gradient analytic =
          reweight::batch_loss_gradient(quality, target, batch, config);

      std::function<double(const numkit::Model&)> loss;
      if (detach) {
        // Ratios recomputed at the base point, then frozen across probes.
        const reweight::BatchLoss base = reweight::batch_loss(quality, target, batch, config);
        std::vector<double> frozen_rw(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
          frozen_rw[i] = base.breakdowns[i].ratio * base.breakdowns[i].weight;
        }
        loss = [&, frozen_rw](const numkit::Model& m) {
          double sum = 0.0;
          for (std::size_t i = 0; i < batch.size(); ++i) {
            const std::vector<double> probs = numkit::forward(m, batch[i].features);
            const double p = std::max(probs[static_cast<std::size_t>(batch[i].label - 1)],
                                      config.p_floor);
            sum += frozen_rw[i] * (-std::log(p));
          }
          return config.eta * (sum / static_cast<double>(batch.size()));
        };
      } else {
        loss = [&](const numkit::Model& m) {
          return reweight::batch_loss(quality, m, batch, config).loss;
        };
      }
      const numkit::GradCheckReport report =
          numkit::finite_diff_check(target, loss, analytic, tolerance);
      summary.max_rel_error = std::max(summary.max_rel_error, report.max_rel_error);
    }
  }

  summary.seconds = seconds_since(start);
  summary.pass = summary.max_rel_error < tolerance;
  log << "gradcheck: " << cases << " cases, max relative error " << summary.max_rel_error
      << " (tolerance " << tolerance << "), " << summary.seconds << "s -> "
      << (summary.pass ? "pass" : "FAIL") << "\n";
  return summary;
}

void report(const fs::path& run_dir, std::ostream& out) {
  const fs::path rows_path = run_dir / "rows.jsonl";
  if (!fs::exists(rows_path)) {
    throw MissingArtifactError("report: missing " + rows_path.string());
  }
  const std::vector<eval::EvalRow> rows = eval::load_rows_jsonl(rows_path);
  if (rows.empty()) {
    throw MissingArtifactError("report: no rows in " + rows_path.string());
  }
  // Aggregate whatever variants the rows actually contain.
  std::vector<std::string> present;
  for (const eval::EvalRow& row : rows) {
    bool seen = false;
    for (const std::string& v : present) seen = seen || v == row.variant;
    if (!seen) present.push_back(row.variant);
  }
  const eval::AblationTable table = eval::ablation_table(rows, present);
  write_text(run_dir / "table.csv", eval::render_table_csv(table));
  write_text(run_dir / "table.txt", eval::render_table_text(table));
  out << eval::render_table_text(table);
}

}  // namespace asalab::commands
