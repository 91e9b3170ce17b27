#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "asalab/corpus.hpp"
#include "asalab/numkit.hpp"

namespace asalab::eval {

// Rows are gold labels, columns are predictions (both 1..5, zero-indexed here).
struct ConfusionMatrix {
  std::array<std::array<int, corpus::kClassCount>, corpus::kClassCount> counts{};

  int total() const;
  int trace() const;
};

// Argmax prediction with ties broken toward the lower score. Returns 1..5.
int predict(const numkit::Model& model, const corpus::Instance& instance);

struct Evaluation {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

// Exact-match accuracy over a non-empty split.
Evaluation overall_accuracy(const numkit::Model& model,
                            std::span<const corpus::Instance> split);

// Binary agreement after mapping scores to pass (>= 4) / fail (<= 3).
double pass_fail_accuracy(const numkit::Model& model,
                          std::span<const corpus::Instance> split);

inline constexpr int kPassThreshold = 4;
inline bool is_pass(int score) { return score >= kPassThreshold; }

struct EvalRow {
  std::string variant;
  std::uint64_t seed = 0;
  std::string split;  // "seen" or "unseen"
  double overall_accuracy = 0.0;
  double pass_fail_accuracy = 0.0;
  int instance_count = 0;
  ConfusionMatrix confusion;
  double alpha = 1.0;  // real-instance weight the run used
};

void save_rows_jsonl(std::span<const EvalRow> rows, const std::filesystem::path& path);
std::vector<EvalRow> load_rows_jsonl(const std::filesystem::path& path);

// Mean and std (over seeds) per variant x split x metric.
struct AggregateRow {
  std::string variant;
  std::string split;
  std::string metric;  // "overall" or "pass_fail"
  double mean = 0.0;
  double stddev = 0.0;
  int n_seeds = 0;
};

struct AblationTable {
  std::vector<AggregateRow> rows;
  // Whether mean seen overall accuracy satisfies only_syn < mix_a1 <= mix_a2.
  bool ordering_holds = false;

  double mean_of(const std::string& variant, const std::string& split,
                 const std::string& metric) const;
};

inline const std::vector<std::string> kCoreVariants = {"only_syn", "mix_a1", "mix_a2"};

// Aggregates across seeds. Every required variant must appear in the rows for
// both splits; otherwise throws GridError.
AblationTable ablation_table(std::span<const EvalRow> rows,
                             std::span<const std::string> required_variants);
AblationTable ablation_table(std::span<const EvalRow> rows);

// CSV with columns variant,split,metric,mean,std,n_seeds (fractions).
std::string render_table_csv(const AblationTable& table);
// Aligned plain text with percentages to two decimals.
std::string render_table_text(const AblationTable& table);

}  // namespace asalab::eval
