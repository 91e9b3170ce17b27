#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace asalab::corpus {

inline constexpr int kClassCount = 5;

enum class Origin { kReal, kSynthesized };

std::string to_string(Origin origin);
Origin origin_from_string(std::string_view text);

struct InstanceMeta {
  // Distance of a synthesized instance from its class's real mean; generation
  // diagnostic, absent on real instances.
  std::optional<double> quality_distance;
  // Id of the real instance whose style the synthesized one was paired with.
  std::optional<std::string> style_source;
};

// One training example.
struct Instance {
  std::string id;
  std::vector<double> features;
  int label = 0;  // score, 1..5
  Origin origin = Origin::kReal;
  int level = 0;  // proficiency level, 1..5; equals label for generated data
  std::string prompt_id;
  InstanceMeta meta;
};

bool operator==(const InstanceMeta& a, const InstanceMeta& b);
bool operator==(const Instance& a, const Instance& b);

// Throws LabelError / ValidationError naming the instance on bad fields.
void validate_instance(const Instance& instance);

// Transcript text attached to a real instance; consumed by the prompt builder
// and the mock generator only.
struct Transcript {
  std::string id;
  int level = 0;
  std::string text;
};

// Synthetic benchmark layout. Per-class counts follow the score scale 1..5;
// class 1 defaults to zero everywhere (the real corpus this mimics never
// assigned it). The split sizes default to an 8:1:1 train/validation/seen-test
// ratio with a separate unseen-test block.
struct BenchmarkSpec {
  int feature_dim = 16;
  std::array<int, kClassCount> train_counts{0, 120, 280, 240, 80};
  std::array<int, kClassCount> validation_counts{0, 15, 35, 30, 10};
  std::array<int, kClassCount> seen_test_counts{0, 15, 35, 30, 10};
  std::array<int, kClassCount> unseen_test_counts{0, 50, 117, 100, 33};
  // When true the synthesized pool copies the real training counts per class;
  // otherwise synthesized_counts is used.
  bool match_synthesized = true;
  std::array<int, kClassCount> synthesized_counts{};
  double domain_shift = 1.5;     // magnitude of the fixed synthesized shift
  double quality_spread = 1.0;   // per-instance synthesis quality drift scale
  double class_separation = 1.4; // distance scale between class means
  double noise_scale = 1.0;
  double unseen_shift = 0.5;     // extra covariate shift on the unseen split
  int style_dim = 8;
  std::uint64_t seed = 1;

  std::array<int, kClassCount> effective_synth_counts() const {
    return match_synthesized ? train_counts : synthesized_counts;
  }
  void validate() const;  // SpecError naming the field
};

struct Dataset {
  std::vector<Instance> train;
  std::vector<Instance> validation;
  std::vector<Instance> seen_test;
  std::vector<Instance> unseen_test;
  std::vector<Instance> synthesized;
  std::vector<Transcript> transcripts;  // one per real training instance
  // Generation metadata, not serialized with the instances.
  std::array<std::vector<double>, kClassCount> class_means;
  std::array<std::vector<double>, kClassCount> shift_directions;
};

// Deterministic under spec.seed: equal specs give bit-identical datasets.
// Real features are per-class Gaussians; synthesized ones are drawn from the
// same class mean shifted by domain_shift along a fixed per-class unit
// direction plus quality noise, each paired with a uniformly chosen real
// training instance of the same level as its style source. The per-class
// directions distort the relative class geometry, so a model fit on the
// synthesized pool alone misplaces its decision boundaries on real data.
Dataset generate_benchmark(const BenchmarkSpec& spec);

// Speaker-style analog: a compact embedding derived from one real instance.
struct StyleVector {
  int level = 0;
  std::vector<double> embedding;
  std::string source_id;
};

// Fixed seeded encoder of the benchmark (style_dim x feature_dim).
std::vector<double> style_encoder(const BenchmarkSpec& spec);
// Fixed seeded projection of the benchmark (feature_dim x style_dim).
std::vector<double> style_projection(const BenchmarkSpec& spec);

StyleVector make_style_vector(const Instance& source, const BenchmarkSpec& spec);

// base + projection(style.embedding) + quality noise of scale quality_spread.
// Throws LevelPairingError when style.level differs from `level`.
std::vector<double> style_condition(std::span<const double> base_features, int level,
                                    const StyleVector& style, const BenchmarkSpec& spec,
                                    std::uint64_t seed);

// In-context prompt bundle. The rendered prompt is the task prompt, the k
// selected examples in permuted order, then the fixed instruction line.
inline constexpr std::string_view kPromptInstruction =
    "Please generate your response in the style of the above examples.";
inline constexpr int kMaxPromptExamples = 10;

struct PromptBundle {
  std::string task_prompt;
  int level = 0;
  int example_count = 0;                  // k
  std::vector<std::string> example_ids;   // selection order
  std::vector<std::string> examples;      // selection order
  std::vector<int> permutation;           // rendered[i] = examples[permutation[i]]
  double temperature = 0.0;
  std::uint64_t permutation_seed = 0;
  std::string rendered;
};

// Selects k transcripts of the level uniformly without replacement (the draw is
// a fixed function of the pool, so different seeds reuse the same example set)
// and permutes them under `seed`.
PromptBundle build_prompt(const std::string& task_prompt, int level,
                          std::span<const Transcript> pool, int k, double temperature,
                          std::uint64_t seed);

// Splits the rendered prompt back into (task prompt, example lines, instruction).
// Used by tests and by the prompt sidecar writer.
struct RenderedPromptParts {
  std::string task_prompt;
  std::vector<std::string> example_lines;
  std::string instruction;
};
RenderedPromptParts parse_rendered_prompt(const std::string& rendered);

// Offline generator stand-in: samples a word-level bigram chain fitted on the
// bundle's examples, with the bundle temperature applied to bigram frequencies.
// Output token count stays within [0.5, 1.5] times the mean example length.
std::string mock_generate(const PromptBundle& bundle, std::uint64_t seed);

// JSONL dataset IO. Round-trips every field bit-exactly.
std::vector<Instance> load_jsonl(const std::filesystem::path& path);
void save_jsonl(std::span<const Instance> instances, const std::filesystem::path& path);

std::vector<Transcript> load_transcripts(const std::filesystem::path& path);
void save_transcripts(std::span<const Transcript> transcripts,
                      const std::filesystem::path& path);

}  // namespace asalab::corpus
