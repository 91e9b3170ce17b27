#include "asalab/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "asalab/errors.hpp"
#include "asalab/rng.hpp"
#include "json.hpp"

namespace asalab::corpus {

namespace {

// Seed salts for the independent generation streams.
constexpr std::uint64_t kSaltGeometry = 0x01;
constexpr std::uint64_t kSaltTrain = 0x100;
constexpr std::uint64_t kSaltValidation = 0x110;
constexpr std::uint64_t kSaltSeenTest = 0x120;
constexpr std::uint64_t kSaltUnseenTest = 0x130;
constexpr std::uint64_t kSaltPairing = 0x200;
constexpr std::uint64_t kSaltSynthesized = 0x300;
constexpr std::uint64_t kSaltTranscripts = 0x400;
constexpr std::uint64_t kSaltEncoder = 0x500;
constexpr std::uint64_t kSaltProjection = 0x510;
constexpr std::uint64_t kSaltStyleNoise = 0x520;
constexpr std::uint64_t kSaltSelection = 0x600;
constexpr std::uint64_t kSaltPermutation = 0x610;
constexpr std::uint64_t kSaltMock = 0x700;

const std::array<std::string, 3> kSeenPromptIds = {"topic_a", "topic_b", "topic_c"};
constexpr std::string_view kUnseenPromptId = "unseen";

std::vector<double> unit_direction(Rng& rng, int dim) {
  std::vector<double> v(static_cast<std::size_t>(dim));
  double norm_sq = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm_sq += x * x;
  }
  const double norm = std::sqrt(norm_sq);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

std::string pad_index(int value) {
  std::string s = std::to_string(value);
  while (s.size() < 4) s.insert(s.begin(), '0');
  return s;
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return std::sqrt(sum);
}

// Word bank for transcript texture. Higher levels produce longer responses.
const std::vector<std::string> kOpeners = {
    "i think", "i believe", "in my opinion", "personally", "from my experience",
    "i would say", "to be honest"};
const std::vector<std::string> kTopics = {
    "school",  "work",   "travel", "music",   "family", "health",
    "the city", "food",   "weather", "friends", "books",  "sports"};
const std::vector<std::string> kVerbPhrases = {
    "is", "seems", "becomes", "helps people", "makes life", "gives us",
    "brings everyone", "needs to be", "shows us", "keeps things"};
const std::vector<std::string> kQualities = {
    "important", "useful",    "difficult", "interesting", "common",
    "popular",   "necessary", "expensive", "healthy",     "modern"};
const std::vector<std::string> kConnectors = {
    "and", "but", "because", "so", "also", "however"};

std::string make_transcript_text(Rng& rng, int level) {
  const int clause_count = 1 + level / 2 + static_cast<int>(rng.uniform_int(0, 1));
  std::string text;
  for (int clause = 0; clause < clause_count; ++clause) {
    if (clause > 0) {
      text += ' ';
      text += kConnectors[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(kConnectors.size()) - 1))];
      text += ' ';
    }
    text += kOpeners[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(kOpeners.size()) - 1))];
    text += ' ';
    text += kTopics[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(kTopics.size()) - 1))];
    text += ' ';
    text += kVerbPhrases[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(kVerbPhrases.size()) - 1))];
    text += ' ';
    text += kQualities[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(kQualities.size()) - 1))];
  }
  return text;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::istringstream stream(text);
  std::string token;
  while (stream >> token) tokens.push_back(token);
  return tokens;
}

}  // namespace

std::string to_string(Origin origin) {
  return origin == Origin::kReal ? "real" : "synthesized";
}

Origin origin_from_string(std::string_view text) {
  if (text == "real") return Origin::kReal;
  if (text == "synthesized") return Origin::kSynthesized;
  throw ParseError("unknown origin value: \"" + std::string(text) + "\"");
}

bool operator==(const InstanceMeta& a, const InstanceMeta& b) {
  return a.quality_distance == b.quality_distance && a.style_source == b.style_source;
}

bool operator==(const Instance& a, const Instance& b) {
  return a.id == b.id && a.features == b.features && a.label == b.label &&
         a.origin == b.origin && a.level == b.level && a.prompt_id == b.prompt_id &&
         a.meta == b.meta;
}

void validate_instance(const Instance& instance) {
  if (instance.id.empty()) throw ValidationError("instance with empty id");
  if (instance.label < 1 || instance.label > kClassCount) {
    throw ValidationError("instance " + instance.id + ": label " +
                          std::to_string(instance.label) + " out of range 1..5");
  }
  if (instance.level < 1 || instance.level > kClassCount) {
    throw ValidationError("instance " + instance.id + ": level " +
                          std::to_string(instance.level) + " out of range 1..5");
  }
  if (instance.features.empty()) {
    throw ValidationError("instance " + instance.id + ": empty feature vector");
  }
  for (double v : instance.features) {
    if (!std::isfinite(v)) {
      throw ValidationError("instance " + instance.id + ": non-finite feature value");
    }
  }
  if (instance.prompt_id.empty()) {
    throw ValidationError("instance " + instance.id + ": empty prompt_id");
  }
}

void BenchmarkSpec::validate() const {
  if (feature_dim < 1) throw SpecError("benchmark.feature_dim must be >= 1");
  auto check_counts = [](const std::array<int, kClassCount>& counts, const char* name) {
    for (int c : counts) {
      if (c < 0) throw SpecError(std::string("benchmark.") + name + " has a negative count");
    }
  };
  check_counts(train_counts, "train_counts");
  check_counts(validation_counts, "validation_counts");
  check_counts(seen_test_counts, "seen_test_counts");
  check_counts(unseen_test_counts, "unseen_test_counts");
  check_counts(synthesized_counts, "synthesized_counts");
  int train_total = 0;
  for (int c : train_counts) train_total += c;
  if (train_total < 1) throw SpecError("benchmark.train_counts must place at least one instance");
  const auto synth = effective_synth_counts();
  for (int c = 0; c < kClassCount; ++c) {
    if (synth[static_cast<std::size_t>(c)] > 0 && train_counts[static_cast<std::size_t>(c)] == 0) {
      throw SpecError("benchmark: class " + std::to_string(c + 1) +
                      " requests synthesized instances but has no real training instances");
    }
  }
  if (domain_shift < 0.0) throw SpecError("benchmark.domain_shift must be >= 0");
  if (quality_spread < 0.0) throw SpecError("benchmark.quality_spread must be >= 0");
  if (class_separation < 0.0) throw SpecError("benchmark.class_separation must be >= 0");
  if (noise_scale < 0.0) throw SpecError("benchmark.noise_scale must be >= 0");
  if (unseen_shift < 0.0) throw SpecError("benchmark.unseen_shift must be >= 0");
  if (style_dim < 1) throw SpecError("benchmark.style_dim must be >= 1");
}

namespace {

std::vector<Instance> generate_real_split(const BenchmarkSpec& spec,
                                          const std::array<int, kClassCount>& counts,
                                          const Dataset& ds, const std::string& split_name,
                                          std::uint64_t salt_base, bool unseen,
                                          const std::vector<double>& unseen_direction) {
  std::vector<Instance> out;
  for (int c = 0; c < kClassCount; ++c) {
    Rng rng(derive_seed(spec.seed, salt_base + static_cast<std::uint64_t>(c)));
    const std::vector<double>& mean = ds.class_means[static_cast<std::size_t>(c)];
    for (int i = 0; i < counts[static_cast<std::size_t>(c)]; ++i) {
      Instance inst;
      inst.id = split_name + "_c" + std::to_string(c + 1) + "_" + pad_index(i);
      inst.label = c + 1;
      inst.level = c + 1;
      inst.origin = Origin::kReal;
      inst.prompt_id = unseen ? std::string(kUnseenPromptId)
                              : kSeenPromptIds[static_cast<std::size_t>(i) % kSeenPromptIds.size()];
      inst.features.resize(static_cast<std::size_t>(spec.feature_dim));
      for (int dim = 0; dim < spec.feature_dim; ++dim) {
        double v = mean[static_cast<std::size_t>(dim)] + spec.noise_scale * rng.normal();
        if (unseen) v += spec.unseen_shift * unseen_direction[static_cast<std::size_t>(dim)];
        inst.features[static_cast<std::size_t>(dim)] = v;
      }
      out.push_back(std::move(inst));
    }
  }
  return out;
}

}  // namespace

Dataset generate_benchmark(const BenchmarkSpec& spec) {
  spec.validate();
  Dataset ds;

  Rng geometry(derive_seed(spec.seed, kSaltGeometry));
  for (int c = 0; c < kClassCount; ++c) {
    std::vector<double> direction = unit_direction(geometry, spec.feature_dim);
    for (double& v : direction) v *= spec.class_separation;
    ds.class_means[static_cast<std::size_t>(c)] = std::move(direction);
  }
  // Synthesis drifts up-scale: generated responses read about one level more
  // fluent than their nominal level, so each class shifts toward the next
  // class mean (the top class overshoots along its approach from below).
  for (int c = 0; c < kClassCount; ++c) {
    const auto& mean = ds.class_means[static_cast<std::size_t>(c)];
    const auto& next = ds.class_means[static_cast<std::size_t>(
        c == kClassCount - 1 ? kClassCount - 2 : c + 1)];
    std::vector<double> direction(static_cast<std::size_t>(spec.feature_dim));
    double norm_sq = 0.0;
    for (int dim = 0; dim < spec.feature_dim; ++dim) {
      double v = next[static_cast<std::size_t>(dim)] - mean[static_cast<std::size_t>(dim)];
      if (c == kClassCount - 1) v = -v;  // past the top, away from class 4
      direction[static_cast<std::size_t>(dim)] = v;
      norm_sq += v * v;
    }
    const double norm = std::sqrt(norm_sq);
    if (norm > 0.0) {
      for (double& v : direction) v /= norm;
    }
    ds.shift_directions[static_cast<std::size_t>(c)] = std::move(direction);
  }
  const std::vector<double> unseen_direction = unit_direction(geometry, spec.feature_dim);

  ds.train = generate_real_split(spec, spec.train_counts, ds, "train", kSaltTrain, false,
                                 unseen_direction);
  ds.validation = generate_real_split(spec, spec.validation_counts, ds, "val", kSaltValidation,
                                      false, unseen_direction);
  ds.seen_test = generate_real_split(spec, spec.seen_test_counts, ds, "seen", kSaltSeenTest,
                                     false, unseen_direction);
  ds.unseen_test = generate_real_split(spec, spec.unseen_test_counts, ds, "unseen",
                                       kSaltUnseenTest, true, unseen_direction);

  // Style pairing pool: real training instances grouped by level.
  std::array<std::vector<std::size_t>, kClassCount> level_pool;
  for (std::size_t i = 0; i < ds.train.size(); ++i) {
    level_pool[static_cast<std::size_t>(ds.train[i].level - 1)].push_back(i);
  }

  const auto synth_counts = spec.effective_synth_counts();
  Rng pairing(derive_seed(spec.seed, kSaltPairing));
  for (int c = 0; c < kClassCount; ++c) {
    const int count = synth_counts[static_cast<std::size_t>(c)];
    if (count == 0) continue;
    const auto& pool = level_pool[static_cast<std::size_t>(c)];
    if (pool.empty()) {
      throw SpecError("benchmark: class " + std::to_string(c + 1) +
                      " requests synthesized instances but has no real training instances");
    }
    Rng rng(derive_seed(spec.seed, kSaltSynthesized + static_cast<std::uint64_t>(c)));
    const std::vector<double>& mean = ds.class_means[static_cast<std::size_t>(c)];
    const std::vector<double>& shift = ds.shift_directions[static_cast<std::size_t>(c)];
    for (int i = 0; i < count; ++i) {
      Instance inst;
      inst.id = "syn_c" + std::to_string(c + 1) + "_" + pad_index(i);
      inst.label = c + 1;
      inst.level = c + 1;
      inst.origin = Origin::kSynthesized;
      inst.prompt_id = kSeenPromptIds[static_cast<std::size_t>(i) % kSeenPromptIds.size()];
      inst.features.resize(static_cast<std::size_t>(spec.feature_dim));
      // Per-instance quality: a one-sided extra drift along the shift
      // direction, so instances range from faithful to strongly over-fluent.
      const double quality_offset = spec.quality_spread * std::abs(rng.normal());
      for (int dim = 0; dim < spec.feature_dim; ++dim) {
        const double noise = spec.noise_scale * rng.normal();
        inst.features[static_cast<std::size_t>(dim)] =
            mean[static_cast<std::size_t>(dim)] +
            (spec.domain_shift + quality_offset) * shift[static_cast<std::size_t>(dim)] +
            noise;
      }
      const std::size_t source_index =
          pool[static_cast<std::size_t>(pairing.uniform_int(
              0, static_cast<std::int64_t>(pool.size()) - 1))];
      inst.meta.quality_distance = l2_distance(inst.features, mean);
      inst.meta.style_source = ds.train[source_index].id;
      ds.synthesized.push_back(std::move(inst));
    }
  }

  Rng transcript_rng(derive_seed(spec.seed, kSaltTranscripts));
  for (const Instance& inst : ds.train) {
    Transcript t;
    t.id = inst.id;
    t.level = inst.level;
    t.text = make_transcript_text(transcript_rng, inst.level);
    ds.transcripts.push_back(std::move(t));
  }

  return ds;
}

std::vector<double> style_encoder(const BenchmarkSpec& spec) {
  Rng rng(derive_seed(spec.seed, kSaltEncoder));
  std::vector<double> enc(static_cast<std::size_t>(spec.style_dim) * spec.feature_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.feature_dim));
  for (double& v : enc) v = scale * rng.normal();
  return enc;
}

std::vector<double> style_projection(const BenchmarkSpec& spec) {
  Rng rng(derive_seed(spec.seed, kSaltProjection));
  std::vector<double> proj(static_cast<std::size_t>(spec.feature_dim) * spec.style_dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.style_dim));
  for (double& v : proj) v = scale * rng.normal();
  return proj;
}

StyleVector make_style_vector(const Instance& source, const BenchmarkSpec& spec) {
  if (static_cast<int>(source.features.size()) != spec.feature_dim) {
    throw ShapeError("style vector: source feature length " +
                     std::to_string(source.features.size()) + " does not match benchmark dim " +
                     std::to_string(spec.feature_dim));
  }
  const std::vector<double> enc = style_encoder(spec);
  StyleVector style;
  style.level = source.level;
  style.source_id = source.id;
  style.embedding.assign(static_cast<std::size_t>(spec.style_dim), 0.0);
  for (int j = 0; j < spec.style_dim; ++j) {
    double sum = 0.0;
    const double* row = enc.data() + static_cast<std::size_t>(j) * spec.feature_dim;
    for (int i = 0; i < spec.feature_dim; ++i) sum += row[i] * source.features[static_cast<std::size_t>(i)];
    style.embedding[static_cast<std::size_t>(j)] = sum;
  }
  return style;
}

std::vector<double> style_condition(std::span<const double> base_features, int level,
                                    const StyleVector& style, const BenchmarkSpec& spec,
                                    std::uint64_t seed) {
  if (style.level != level) {
    throw LevelPairingError("style_condition: style level " + std::to_string(style.level) +
                            " does not match instance level " + std::to_string(level));
  }
  if (static_cast<int>(base_features.size()) != spec.feature_dim) {
    throw ShapeError("style_condition: base feature length does not match benchmark dim");
  }
  if (static_cast<int>(style.embedding.size()) != spec.style_dim) {
    throw ShapeError("style_condition: embedding length does not match benchmark style dim");
  }
  const std::vector<double> proj = style_projection(spec);
  Rng rng(derive_seed(seed, kSaltStyleNoise));
  std::vector<double> out(base_features.begin(), base_features.end());
  for (int i = 0; i < spec.feature_dim; ++i) {
    double sum = 0.0;
    const double* row = proj.data() + static_cast<std::size_t>(i) * spec.style_dim;
    for (int j = 0; j < spec.style_dim; ++j) sum += row[j] * style.embedding[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] += sum + spec.quality_spread * rng.normal();
  }
  return out;
}

PromptBundle build_prompt(const std::string& task_prompt, int level,
                          std::span<const Transcript> pool, int k, double temperature,
                          std::uint64_t seed) {
  if (k < 1 || k > kMaxPromptExamples) {
    throw SpecError("build_prompt: k must be in 1.." + std::to_string(kMaxPromptExamples) +
                    ", got " + std::to_string(k));
  }
  if (!(temperature > 0.0)) throw SpecError("build_prompt: temperature must be > 0");
  if (level < 1 || level > kClassCount) {
    throw SpecError("build_prompt: level " + std::to_string(level) + " out of range 1..5");
  }

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].level == level) candidates.push_back(i);
  }
  if (candidates.size() < static_cast<std::size_t>(k)) {
    throw InsufficientExamplesError(
        "build_prompt: level " + std::to_string(level) + " has " +
        std::to_string(candidates.size()) + " transcripts, need " + std::to_string(k));
  }

  // The example set is a fixed uniform draw per (pool, level, k); only the
  // order varies with the seed, matching repeated shuffled generation rounds.
  std::uint64_t pool_hash = fnv1a64(&level, sizeof(level));
  pool_hash = fnv1a64(&k, sizeof(k), pool_hash);
  for (std::size_t idx : candidates) {
    const Transcript& t = pool[idx];
    pool_hash = fnv1a64(t.id.data(), t.id.size(), pool_hash);
  }
  Rng selection(derive_seed(pool_hash, kSaltSelection));
  const std::vector<std::size_t> picked =
      selection.sample_without_replacement(candidates.size(), static_cast<std::size_t>(k));

  PromptBundle bundle;
  bundle.task_prompt = task_prompt;
  bundle.level = level;
  bundle.example_count = k;
  bundle.temperature = temperature;
  bundle.permutation_seed = seed;
  for (std::size_t p : picked) {
    const Transcript& t = pool[candidates[p]];
    if (t.text.empty() || t.text.find('\n') != std::string::npos) {
      throw ValidationError("build_prompt: transcript " + t.id +
                            " must be a non-empty single line");
    }
    bundle.example_ids.push_back(t.id);
    bundle.examples.push_back(t.text);
  }

  bundle.permutation.resize(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) bundle.permutation[static_cast<std::size_t>(i)] = i;
  Rng permuter(derive_seed(seed, kSaltPermutation));
  permuter.shuffle(bundle.permutation);

  std::string rendered = task_prompt;
  rendered += "\n\n";
  for (int i = 0; i < k; ++i) {
    rendered += bundle.examples[static_cast<std::size_t>(bundle.permutation[static_cast<std::size_t>(i)])];
    rendered += "\n";
  }
  rendered += "\n";
  rendered += kPromptInstruction;
  rendered += "\n";
  bundle.rendered = std::move(rendered);
  return bundle;
}

RenderedPromptParts parse_rendered_prompt(const std::string& rendered) {
  std::vector<std::string> lines;
  std::string current;
  for (char ch : rendered) {
    if (ch == '\n') {
      lines.push_back(current);
      current.clear();
    } else {
      current += ch;
    }
  }
  if (!current.empty()) lines.push_back(current);

  RenderedPromptParts parts;
  std::size_t i = 0;
  for (; i < lines.size() && !lines[i].empty(); ++i) {
    if (!parts.task_prompt.empty()) parts.task_prompt += "\n";
    parts.task_prompt += lines[i];
  }
  ++i;  // blank separator
  for (; i < lines.size() && !lines[i].empty(); ++i) parts.example_lines.push_back(lines[i]);
  ++i;  // blank separator
  if (i < lines.size()) parts.instruction = lines[i];
  return parts;
}

std::string mock_generate(const PromptBundle& bundle, std::uint64_t seed) {
  std::map<std::string, std::map<std::string, int>> successors;
  std::map<std::string, int> starts;
  std::size_t bigram_total = 0;
  std::size_t token_total = 0;
  for (const std::string& example : bundle.examples) {
    const std::vector<std::string> tokens = tokenize(example);
    token_total += tokens.size();
    if (!tokens.empty()) starts[tokens.front()] += 1;
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
      successors[tokens[i]][tokens[i + 1]] += 1;
      ++bigram_total;
    }
  }
  if (bigram_total == 0) {
    throw DegenerateCorpusError("mock_generate: examples provide no bigrams (" +
                                std::to_string(token_total) + " tokens total)");
  }

  const double mean_len =
      static_cast<double>(token_total) / static_cast<double>(bundle.examples.size());
  Rng rng(derive_seed(seed, kSaltMock));
  const auto lo = static_cast<std::int64_t>(std::max(1.0, std::ceil(0.5 * mean_len)));
  const auto hi = std::max(lo, static_cast<std::int64_t>(std::floor(1.5 * mean_len)));
  const auto target_len = rng.uniform_int(lo, hi);

  const bool greedy = bundle.temperature < 1e-6;
  auto pick = [&](const std::map<std::string, int>& weights) -> std::string {
    if (greedy) {
      // Most frequent continuation; ties break to the lexicographically first.
      const std::string* best = nullptr;
      int best_count = -1;
      for (const auto& [word, count] : weights) {
        if (count > best_count) {
          best = &word;
          best_count = count;
        }
      }
      return *best;
    }
    double max_logw = -1e300;
    for (const auto& [word, count] : weights) {
      max_logw = std::max(max_logw, std::log(static_cast<double>(count)) / bundle.temperature);
    }
    double total = 0.0;
    for (const auto& [word, count] : weights) {
      total += std::exp(std::log(static_cast<double>(count)) / bundle.temperature - max_logw);
    }
    double ticket = rng.uniform() * total;
    for (const auto& [word, count] : weights) {
      ticket -= std::exp(std::log(static_cast<double>(count)) / bundle.temperature - max_logw);
      if (ticket <= 0.0) return word;
    }
    return weights.rbegin()->first;
  };

  std::vector<std::string> output;
  output.push_back(pick(starts));
  while (static_cast<std::int64_t>(output.size()) < target_len) {
    const auto it = successors.find(output.back());
    if (it == successors.end() || it->second.empty()) {
      output.push_back(pick(starts));  // dead end: restart the chain
      continue;
    }
    output.push_back(pick(it->second));
  }

  std::string text;
  for (std::size_t i = 0; i < output.size(); ++i) {
    if (i > 0) text += ' ';
    text += output[i];
  }
  return text;
}

namespace {

nlohmann::json instance_to_json(const Instance& inst) {
  nlohmann::json j;
  j["id"] = inst.id;
  j["features"] = inst.features;
  j["label"] = inst.label;
  j["origin"] = to_string(inst.origin);
  j["level"] = inst.level;
  j["prompt_id"] = inst.prompt_id;
  nlohmann::json meta = nlohmann::json::object();
  if (inst.meta.quality_distance) meta["quality_distance"] = *inst.meta.quality_distance;
  if (inst.meta.style_source) meta["style_source"] = *inst.meta.style_source;
  j["meta"] = std::move(meta);
  return j;
}

Instance instance_from_json(const nlohmann::json& j) {
  Instance inst;
  inst.id = j.at("id").get<std::string>();
  inst.features = j.at("features").get<std::vector<double>>();
  inst.label = j.at("label").get<int>();
  inst.origin = origin_from_string(j.at("origin").get<std::string>());
  inst.level = j.at("level").get<int>();
  inst.prompt_id = j.at("prompt_id").get<std::string>();
  if (j.contains("meta")) {
    const auto& meta = j.at("meta");
    if (meta.contains("quality_distance")) {
      inst.meta.quality_distance = meta.at("quality_distance").get<double>();
    }
    if (meta.contains("style_source")) {
      inst.meta.style_source = meta.at("style_source").get<std::string>();
    }
  }
  return inst;
}

}  // namespace

std::vector<Instance> load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("dataset: missing file: " + path.string());
  std::vector<Instance> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    Instance inst;
    try {
      inst = instance_from_json(nlohmann::json::parse(line));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
    }
    validate_instance(inst);
    out.push_back(std::move(inst));
  }
  return out;
}

void save_jsonl(std::span<const Instance> instances, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("dataset: cannot open for writing: " + path.string());
  for (const Instance& inst : instances) {
    out << instance_to_json(inst).dump() << "\n";
  }
}

std::vector<Transcript> load_transcripts(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("transcripts: missing file: " + path.string());
  std::vector<Transcript> out;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      Transcript t;
      t.id = j.at("id").get<std::string>();
      t.level = j.at("level").get<int>();
      t.text = j.at("text").get<std::string>();
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_number) + ": " + e.what());
    }
  }
  return out;
}

void save_transcripts(std::span<const Transcript> transcripts,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("transcripts: cannot open for writing: " + path.string());
  for (const Transcript& t : transcripts) {
    nlohmann::json j;
    j["id"] = t.id;
    j["level"] = t.level;
    j["text"] = t.text;
    out << j.dump() << "\n";
  }
}

}  // namespace asalab::corpus
