#include "asalab/config.hpp"

#include <fstream>
#include <set>

#include "asalab/errors.hpp"
#include "json.hpp"

namespace asalab {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& object, const std::set<std::string>& known,
                         const std::string& scope) {
  for (const auto& [key, value] : object.items()) {
    if (known.find(key) == known.end()) {
      throw ConfigError("config: unknown field " + scope + "." + key);
    }
  }
}

template <typename T>
void read_field(const json& object, const char* key, T& into, const std::string& scope) {
  if (!object.contains(key)) return;
  try {
    into = object.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: field " + scope + "." + key + " has the wrong type");
  }
}

void read_counts(const json& object, const char* key,
                 std::array<int, corpus::kClassCount>& into, const std::string& scope) {
  if (!object.contains(key)) return;
  const auto& arr = object.at(key);
  if (!arr.is_array() || arr.size() != corpus::kClassCount) {
    throw ConfigError("config: field " + scope + "." + key + " must be an array of 5 counts");
  }
  for (std::size_t i = 0; i < corpus::kClassCount; ++i) {
    try {
      into[i] = arr.at(i).get<int>();
    } catch (const json::exception&) {
      throw ConfigError("config: field " + scope + "." + key + " must hold integers");
    }
  }
}

json benchmark_to_json(const corpus::BenchmarkSpec& spec) {
  json j;
  j["feature_dim"] = spec.feature_dim;
  j["train_counts"] = spec.train_counts;
  j["validation_counts"] = spec.validation_counts;
  j["seen_test_counts"] = spec.seen_test_counts;
  j["unseen_test_counts"] = spec.unseen_test_counts;
  j["match_synthesized"] = spec.match_synthesized;
  j["synthesized_counts"] = spec.synthesized_counts;
  j["domain_shift"] = spec.domain_shift;
  j["quality_spread"] = spec.quality_spread;
  j["class_separation"] = spec.class_separation;
  j["noise_scale"] = spec.noise_scale;
  j["unseen_shift"] = spec.unseen_shift;
  j["style_dim"] = spec.style_dim;
  j["seed"] = spec.seed;
  return j;
}

corpus::BenchmarkSpec benchmark_from_json(const json& j) {
  corpus::BenchmarkSpec spec;
  reject_unknown_keys(j,
                      {"feature_dim", "train_counts", "validation_counts", "seen_test_counts",
                       "unseen_test_counts", "match_synthesized", "synthesized_counts",
                       "domain_shift", "quality_spread", "class_separation", "noise_scale",
                       "unseen_shift", "style_dim", "seed"},
                      "benchmark");
  read_field(j, "feature_dim", spec.feature_dim, "benchmark");
  read_counts(j, "train_counts", spec.train_counts, "benchmark");
  read_counts(j, "validation_counts", spec.validation_counts, "benchmark");
  read_counts(j, "seen_test_counts", spec.seen_test_counts, "benchmark");
  read_counts(j, "unseen_test_counts", spec.unseen_test_counts, "benchmark");
  read_field(j, "match_synthesized", spec.match_synthesized, "benchmark");
  read_counts(j, "synthesized_counts", spec.synthesized_counts, "benchmark");
  read_field(j, "domain_shift", spec.domain_shift, "benchmark");
  read_field(j, "quality_spread", spec.quality_spread, "benchmark");
  read_field(j, "class_separation", spec.class_separation, "benchmark");
  read_field(j, "noise_scale", spec.noise_scale, "benchmark");
  read_field(j, "unseen_shift", spec.unseen_shift, "benchmark");
  read_field(j, "style_dim", spec.style_dim, "benchmark");
  read_field(j, "seed", spec.seed, "benchmark");
  return spec;
}

json plan_to_json(const trainer::TrainPlan& plan) {
  json j;
  j["epochs"] = plan.epochs;
  j["batch_size"] = plan.batch_size;
  j["learning_rate"] = plan.learning_rate;
  j["weight_decay"] = plan.weight_decay;
  j["early_stop"] = plan.early_stop;
  j["early_stop_patience"] = plan.early_stop_patience;
  return j;
}

trainer::TrainPlan plan_from_json(const json& j, const std::string& scope) {
  trainer::TrainPlan plan;
  reject_unknown_keys(j,
                      {"epochs", "batch_size", "learning_rate", "weight_decay", "early_stop",
                       "early_stop_patience"},
                      scope);
  read_field(j, "epochs", plan.epochs, scope);
  read_field(j, "batch_size", plan.batch_size, scope);
  read_field(j, "learning_rate", plan.learning_rate, scope);
  read_field(j, "weight_decay", plan.weight_decay, scope);
  read_field(j, "early_stop", plan.early_stop, scope);
  read_field(j, "early_stop_patience", plan.early_stop_patience, scope);
  return plan;
}

json reweight_to_json(const reweight::ReweightConfig& config) {
  json j;
  j["alpha"] = config.alpha;
  j["eta"] = config.eta;
  j["r_max"] = config.r_max;
  j["p_floor"] = config.p_floor;
  j["detach_ratio"] = config.detach_ratio;
  return j;
}

reweight::ReweightConfig reweight_from_json(const json& j) {
  reweight::ReweightConfig config;
  reject_unknown_keys(j, {"alpha", "eta", "r_max", "p_floor", "detach_ratio"}, "reweight");
  read_field(j, "alpha", config.alpha, "reweight");
  read_field(j, "eta", config.eta, "reweight");
  read_field(j, "r_max", config.r_max, "reweight");
  read_field(j, "p_floor", config.p_floor, "reweight");
  read_field(j, "detach_ratio", config.detach_ratio, "reweight");
  return config;
}

json config_to_json(const ExperimentConfig& config) {
  json j;
  j["benchmark"] = benchmark_to_json(config.benchmark);
  j["quality_plan"] = plan_to_json(config.quality_plan);
  j["target_plan"] = plan_to_json(config.target_plan);
  j["reweight"] = reweight_to_json(config.reweight);
  j["variants"] = config.variants;
  j["seeds"] = config.seeds;
  j["out_dir"] = config.out_dir;
  j["verbosity"] = config.verbosity;
  j["hidden_width"] = config.hidden_width;
  j["init_target_from_quality"] = config.init_target_from_quality;
  j["task_prompt"] = config.task_prompt;
  j["prompt_temperature"] = config.prompt_temperature;
  j["prompt_examples"] = config.prompt_examples;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig config;
  reject_unknown_keys(j,
                      {"benchmark", "quality_plan", "target_plan", "reweight", "variants",
                       "seeds", "out_dir", "verbosity", "hidden_width",
                       "init_target_from_quality", "task_prompt", "prompt_temperature",
                       "prompt_examples"},
                      "");
  if (j.contains("benchmark")) config.benchmark = benchmark_from_json(j.at("benchmark"));
  if (j.contains("quality_plan")) {
    config.quality_plan = plan_from_json(j.at("quality_plan"), "quality_plan");
  }
  if (j.contains("target_plan")) {
    config.target_plan = plan_from_json(j.at("target_plan"), "target_plan");
  }
  if (j.contains("reweight")) config.reweight = reweight_from_json(j.at("reweight"));
  read_field(j, "variants", config.variants, "");
  read_field(j, "seeds", config.seeds, "");
  read_field(j, "out_dir", config.out_dir, "");
  read_field(j, "verbosity", config.verbosity, "");
  read_field(j, "hidden_width", config.hidden_width, "");
  read_field(j, "init_target_from_quality", config.init_target_from_quality, "");
  read_field(j, "task_prompt", config.task_prompt, "");
  read_field(j, "prompt_temperature", config.prompt_temperature, "");
  read_field(j, "prompt_examples", config.prompt_examples, "");
  return config;
}

}  // namespace

trainer::TrainPlan ExperimentConfig::effective_quality_plan() const {
  trainer::TrainPlan plan = quality_plan;
  plan.stage = trainer::Stage::kQuality;
  plan.reweight.reset();
  return plan;
}

trainer::TrainPlan ExperimentConfig::effective_target_plan() const {
  trainer::TrainPlan plan = target_plan;
  plan.stage = trainer::Stage::kTarget;
  plan.reweight = reweight;
  return plan;
}

trainer::ExperimentParams ExperimentConfig::experiment_params() const {
  trainer::ExperimentParams params;
  params.quality_plan = effective_quality_plan();
  params.target_plan = effective_target_plan();
  params.reweight = reweight;
  params.hidden_width = hidden_width;
  params.init_target_from_quality = init_target_from_quality;
  return params;
}

void ExperimentConfig::validate() const {
  benchmark.validate();
  reweight.validate();
  effective_quality_plan().validate();
  effective_target_plan().validate();
  if (variants.empty()) throw ConfigError("config: variants must not be empty");
  for (const std::string& variant : variants) {
    trainer::variant_from_string(variant);  // throws ConfigError on unknown names
  }
  if (seeds.empty()) throw ConfigError("config: seeds must not be empty");
  if (out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
  if (hidden_width < 1) throw ConfigError("config: hidden_width must be >= 1");
  if (!(prompt_temperature > 0.0)) {
    throw ConfigError("config: prompt_temperature must be > 0");
  }
  if (prompt_examples < 1 || prompt_examples > corpus::kMaxPromptExamples) {
    throw ConfigError("config: prompt_examples must be in 1..10");
  }
  if (task_prompt.empty() || task_prompt.find('\n') != std::string::npos) {
    throw ConfigError("config: task_prompt must be a non-empty single line");
  }
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const ExperimentConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("config: cannot open for writing: " + path.string());
  out << config_to_json(config).dump(2) << "\n";
}

std::string config_to_json_text(const ExperimentConfig& config) {
  return config_to_json(config).dump(2);
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return config_from_json(j);
}

}  // namespace asalab
