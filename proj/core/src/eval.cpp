#include "asalab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "asalab/errors.hpp"
#include "json.hpp"

namespace asalab::eval {

int ConfusionMatrix::total() const {
  int sum = 0;
  for (const auto& row : counts) {
    for (int v : row) sum += v;
  }
  return sum;
}

int ConfusionMatrix::trace() const {
  int sum = 0;
  for (int c = 0; c < corpus::kClassCount; ++c) {
    sum += counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(c)];
  }
  return sum;
}

int predict(const numkit::Model& model, const corpus::Instance& instance) {
  const std::vector<double> probs = numkit::forward(model, instance.features);
  std::size_t best = 0;
  for (std::size_t j = 1; j < probs.size(); ++j) {
    if (probs[j] > probs[best]) best = j;  // strict: ties stay on the lower score
  }
  return static_cast<int>(best) + 1;
}

Evaluation overall_accuracy(const numkit::Model& model,
                            std::span<const corpus::Instance> split) {
  if (split.empty()) throw EmptyInputError("overall_accuracy: empty split");
  Evaluation result;
  int correct = 0;
  for (const corpus::Instance& instance : split) {
    if (instance.label < 1 || instance.label > corpus::kClassCount) {
      throw LabelError("overall_accuracy: instance " + instance.id + " has label " +
                       std::to_string(instance.label));
    }
    const int predicted = predict(model, instance);
    result.confusion.counts[static_cast<std::size_t>(instance.label - 1)]
                           [static_cast<std::size_t>(predicted - 1)] += 1;
    if (predicted == instance.label) ++correct;
  }
  result.accuracy = static_cast<double>(correct) / static_cast<double>(split.size());
  return result;
}

double pass_fail_accuracy(const numkit::Model& model,
                          std::span<const corpus::Instance> split) {
  if (split.empty()) throw EmptyInputError("pass_fail_accuracy: empty split");
  int matches = 0;
  for (const corpus::Instance& instance : split) {
    if (is_pass(predict(model, instance)) == is_pass(instance.label)) ++matches;
  }
  return static_cast<double>(matches) / static_cast<double>(split.size());
}

namespace {

nlohmann::json row_to_json(const EvalRow& row) {
  nlohmann::json j;
  j["variant"] = row.variant;
  j["seed"] = row.seed;
  j["split"] = row.split;
  j["overall_accuracy"] = row.overall_accuracy;
  j["pass_fail_accuracy"] = row.pass_fail_accuracy;
  j["instance_count"] = row.instance_count;
  j["alpha"] = row.alpha;
  nlohmann::json confusion = nlohmann::json::array();
  for (const auto& cm_row : row.confusion.counts) {
    confusion.push_back(std::vector<int>(cm_row.begin(), cm_row.end()));
  }
  j["confusion"] = std::move(confusion);
  return j;
}

EvalRow row_from_json(const nlohmann::json& j) {
  EvalRow row;
  row.variant = j.at("variant").get<std::string>();
  row.seed = j.at("seed").get<std::uint64_t>();
  row.split = j.at("split").get<std::string>();
  row.overall_accuracy = j.at("overall_accuracy").get<double>();
  row.pass_fail_accuracy = j.at("pass_fail_accuracy").get<double>();
  row.instance_count = j.at("instance_count").get<int>();
  row.alpha = j.at("alpha").get<double>();
  const auto& confusion = j.at("confusion");
  for (int r = 0; r < corpus::kClassCount; ++r) {
    for (int c = 0; c < corpus::kClassCount; ++c) {
      row.confusion.counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
          confusion.at(static_cast<std::size_t>(r)).at(static_cast<std::size_t>(c)).get<int>();
    }
  }
  return row;
}

}  // namespace

void save_rows_jsonl(std::span<const EvalRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("eval rows: cannot open for writing: " + path.string());
  for (const EvalRow& row : rows) out << row_to_json(row).dump() << "\n";
}

std::vector<EvalRow> load_rows_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("eval rows: missing file: " + path.string());
  std::vector<EvalRow> rows;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      rows.push_back(row_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
    }
  }
  return rows;
}

double AblationTable::mean_of(const std::string& variant, const std::string& split,
                              const std::string& metric) const {
  for (const AggregateRow& row : rows) {
    if (row.variant == variant && row.split == split && row.metric == metric) return row.mean;
  }
  throw GridError("ablation table: no aggregate for " + variant + "/" + split + "/" + metric);
}

AblationTable ablation_table(std::span<const EvalRow> rows,
                             std::span<const std::string> required_variants) {
  // Values are sorted before accumulation so aggregation is invariant to the
  // order the rows arrive in.
  std::map<std::string, std::map<std::string, std::map<std::string, std::vector<double>>>>
      groups;  // variant -> split -> metric -> values
  std::vector<std::string> variant_order;
  for (const EvalRow& row : rows) {
    if (groups.find(row.variant) == groups.end()) variant_order.push_back(row.variant);
    groups[row.variant][row.split]["overall"].push_back(row.overall_accuracy);
    groups[row.variant][row.split]["pass_fail"].push_back(row.pass_fail_accuracy);
  }

  for (const std::string& variant : required_variants) {
    const auto it = groups.find(variant);
    if (it == groups.end() || it->second.find("seen") == it->second.end() ||
        it->second.find("unseen") == it->second.end()) {
      throw GridError("ablation table: missing variant " + variant);
    }
  }

  AblationTable table;
  for (const std::string& variant : variant_order) {
    for (const char* split : {"seen", "unseen"}) {
      const auto split_it = groups[variant].find(split);
      if (split_it == groups[variant].end()) continue;
      for (const char* metric : {"overall", "pass_fail"}) {
        std::vector<double> values = split_it->second[metric];
        std::sort(values.begin(), values.end());
        AggregateRow agg;
        agg.variant = variant;
        agg.split = split;
        agg.metric = metric;
        agg.n_seeds = static_cast<int>(values.size());
        double sum = 0.0;
        for (double v : values) sum += v;
        agg.mean = sum / static_cast<double>(values.size());
        if (values.size() > 1) {
          double sq = 0.0;
          for (double v : values) sq += (v - agg.mean) * (v - agg.mean);
          agg.stddev = std::sqrt(sq / static_cast<double>(values.size() - 1));
        }
        table.rows.push_back(std::move(agg));
      }
    }
  }

  const bool has_core = groups.count("only_syn") && groups.count("mix_a1") &&
                        groups.count("mix_a2") && groups["only_syn"].count("seen") &&
                        groups["mix_a1"].count("seen") && groups["mix_a2"].count("seen");
  if (has_core) {
    const double only_syn = table.mean_of("only_syn", "seen", "overall");
    const double mix_a1 = table.mean_of("mix_a1", "seen", "overall");
    const double mix_a2 = table.mean_of("mix_a2", "seen", "overall");
    table.ordering_holds = only_syn < mix_a1 && mix_a1 <= mix_a2;
  }
  return table;
}

AblationTable ablation_table(std::span<const EvalRow> rows) {
  return ablation_table(rows, kCoreVariants);
}

std::string render_table_csv(const AblationTable& table) {
  std::ostringstream out;
  out << "variant,split,metric,mean,std,n_seeds\n";
  for (const AggregateRow& row : table.rows) {
    out << row.variant << ',' << row.split << ',' << row.metric << ',';
    nlohmann::json mean = row.mean;   // shortest round-trip double formatting
    nlohmann::json stddev = row.stddev;
    out << mean.dump() << ',' << stddev.dump() << ',' << row.n_seeds << "\n";
  }
  return out.str();
}

std::string render_table_text(const AblationTable& table) {
  std::ostringstream out;
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%6.2f%%", 100.0 * v);
    return std::string(buf);
  };
  out << "variant      split    metric      mean       std    seeds\n";
  for (const AggregateRow& row : table.rows) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-12s %-8s %-9s %s  %s  %5d\n", row.variant.c_str(),
                  row.split.c_str(), row.metric.c_str(), pct(row.mean).c_str(),
                  pct(row.stddev).c_str(), row.n_seeds);
    out << line;
  }
  out << "seen overall ordering only_syn < mix_a1 <= mix_a2: "
      << (table.ordering_holds ? "yes" : "no") << "\n";
  return out.str();
}

}  // namespace asalab::eval
