#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "asalab/corpus.hpp"
#include "asalab/errors.hpp"
#include "asalab/numkit.hpp"
#include "asalab/rng.hpp"
#include "doctest.h"
#include "testutil.hpp"

using namespace asalab;
using namespace asalab::corpus;

namespace {

bool datasets_equal(const Dataset& a, const Dataset& b) {
  return a.train == b.train && a.validation == b.validation && a.seen_test == b.seen_test &&
         a.unseen_test == b.unseen_test && a.synthesized == b.synthesized;
}

BenchmarkSpec small_spec() {
  BenchmarkSpec spec;
  spec.train_counts = {0, 12, 28, 24, 8};
  spec.validation_counts = {0, 2, 4, 3, 1};
  spec.seen_test_counts = {0, 2, 4, 3, 1};
  spec.unseen_test_counts = {0, 5, 12, 10, 3};
  spec.seed = 5;
  return spec;
}

// Test-local plain cross-entropy trainer; intentionally independent of the
// trainer module so the synthesized-vs-real accuracy check stands on its own.
numkit::Model fit_plain_classifier(const std::vector<Instance>& data, int dim,
                                   std::uint64_t seed) {
  numkit::Model model(dim, {16}, kClassCount, seed);
  numkit::OptimState optim = numkit::make_optim_state(model, 1e-3);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffler(derive_seed(seed, 0x5f));
  for (int epoch = 0; epoch < 3; ++epoch) {
    shuffler.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += 16) {
      const std::size_t end = std::min(order.size(), start + 16);
      numkit::Gradient grad = numkit::zeros_like(model);
      const double inv_b = 1.0 / static_cast<double>(end - start);
      for (std::size_t pos = start; pos < end; ++pos) {
        const Instance& inst = data[order[pos]];
        const std::vector<double> probs = numkit::forward(model, inst.features);
        std::vector<double> upstream(kClassCount);
        for (int j = 0; j < kClassCount; ++j) {
          const double indicator = (j == inst.label - 1) ? 1.0 : 0.0;
          upstream[static_cast<std::size_t>(j)] =
              inv_b * (probs[static_cast<std::size_t>(j)] - indicator);
        }
        grad.add(numkit::backward(model, inst.features, upstream));
      }
      numkit::adamw_step(model, optim, grad);
    }
  }
  return model;
}

double plain_accuracy(const numkit::Model& model, const std::vector<Instance>& split) {
  int correct = 0;
  for (const Instance& inst : split) {
    const std::vector<double> probs = numkit::forward(model, inst.features);
    int best = 0;
    for (int j = 1; j < kClassCount; ++j) {
      if (probs[static_cast<std::size_t>(j)] > probs[static_cast<std::size_t>(best)]) best = j;
    }
    if (best + 1 == inst.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(split.size());
}

}  // namespace

TEST_CASE("benchmark spec validation") {
  BenchmarkSpec spec = small_spec();
  CHECK_NOTHROW(spec.validate());
  SUBCASE("negative shift") {
    spec.domain_shift = -0.5;
    CHECK_THROWS_AS(spec.validate(), SpecError);
  }
  SUBCASE("negative count") {
    spec.train_counts[2] = -1;
    CHECK_THROWS_AS(spec.validate(), SpecError);
  }
  SUBCASE("no real training instances at all") {
    spec.train_counts = {0, 0, 0, 0, 0};
    CHECK_THROWS_AS(spec.validate(), SpecError);
  }
  SUBCASE("synthesized class without real trainers") {
    spec.match_synthesized = false;
    spec.synthesized_counts = {3, 0, 0, 0, 0};  // class 1 has no real instances
    CHECK_THROWS_AS(spec.validate(), SpecError);
    CHECK_THROWS_AS(generate_benchmark(spec), SpecError);
  }
}

TEST_CASE("benchmark generation is deterministic") {
  const BenchmarkSpec spec = small_spec();
  const Dataset a = generate_benchmark(spec);
  const Dataset b = generate_benchmark(spec);
  CHECK(datasets_equal(a, b));

  BenchmarkSpec other = spec;
  other.seed += 1;
  CHECK_FALSE(datasets_equal(a, generate_benchmark(other)));
}

TEST_CASE("benchmark shape and metadata") {
  const BenchmarkSpec spec = small_spec();
  const Dataset ds = generate_benchmark(spec);
  CHECK(ds.train.size() == 72);
  CHECK(ds.synthesized.size() == 72);  // matches the train counts
  CHECK(ds.transcripts.size() == ds.train.size());

  std::set<std::string> train_ids;
  for (const Instance& inst : ds.train) {
    CHECK(inst.origin == Origin::kReal);
    CHECK(inst.level == inst.label);
    CHECK_FALSE(inst.meta.quality_distance.has_value());
    train_ids.insert(inst.id);
  }
  std::map<std::string, int> train_levels;
  for (const Instance& inst : ds.train) train_levels[inst.id] = inst.level;

  for (const Instance& inst : ds.synthesized) {
    CHECK(inst.origin == Origin::kSynthesized);
    CHECK(inst.level == inst.label);
    REQUIRE(inst.meta.quality_distance.has_value());
    REQUIRE(inst.meta.style_source.has_value());
    // Style sources are real training instances of the same level.
    REQUIRE(train_ids.count(*inst.meta.style_source) == 1);
    CHECK(train_levels[*inst.meta.style_source] == inst.level);
    // The recorded quality distance is the distance from the class mean.
    const auto& mean = ds.class_means[static_cast<std::size_t>(inst.label - 1)];
    double sq = 0.0;
    for (std::size_t d = 0; d < mean.size(); ++d) {
      sq += (inst.features[d] - mean[d]) * (inst.features[d] - mean[d]);
    }
    CHECK(*inst.meta.quality_distance == doctest::Approx(std::sqrt(sq)).epsilon(1e-12));
  }

  for (const Instance& inst : ds.unseen_test) CHECK(inst.prompt_id == "unseen");
  for (const Instance& inst : ds.seen_test) CHECK(inst.prompt_id != "unseen");
  for (const Transcript& t : ds.transcripts) {
    CHECK(train_ids.count(t.id) == 1);
    CHECK_FALSE(t.text.empty());
  }
}

TEST_CASE("zero shift and zero spread reproduce the real distribution") {
  BenchmarkSpec spec;
  spec.train_counts = {0, 0, 1000, 0, 0};
  spec.validation_counts = {0, 0, 1, 0, 0};
  spec.seen_test_counts = {0, 0, 1, 0, 0};
  spec.unseen_test_counts = {0, 0, 1, 0, 0};
  spec.domain_shift = 0.0;
  spec.quality_spread = 0.0;
  spec.seed = 11;
  const Dataset ds = generate_benchmark(spec);
  REQUIRE(ds.synthesized.size() == 1000);

  const int dim = spec.feature_dim;
  std::vector<double> mean_real(static_cast<std::size_t>(dim), 0.0);
  std::vector<double> mean_syn(static_cast<std::size_t>(dim), 0.0);
  for (const Instance& inst : ds.train) {
    for (int d = 0; d < dim; ++d) mean_real[static_cast<std::size_t>(d)] += inst.features[static_cast<std::size_t>(d)];
  }
  for (const Instance& inst : ds.synthesized) {
    for (int d = 0; d < dim; ++d) mean_syn[static_cast<std::size_t>(d)] += inst.features[static_cast<std::size_t>(d)];
  }
  double diff_sq = 0.0;
  for (int d = 0; d < dim; ++d) {
    const double delta =
        mean_real[static_cast<std::size_t>(d)] / 1000.0 - mean_syn[static_cast<std::size_t>(d)] / 1000.0;
    diff_sq += delta * delta;
  }
  // ||mean difference|| <= 3 * standard error of a d-dimensional mean gap.
  const double standard_error = spec.noise_scale * std::sqrt(2.0 / 1000.0) * std::sqrt(dim);
  CHECK(std::sqrt(diff_sq) <= 3.0 * standard_error);
}

TEST_CASE("a strong domain shift makes synthesized-only training worse") {
  BenchmarkSpec spec = small_spec();
  spec.train_counts = {0, 40, 80, 60, 20};
  spec.domain_shift = 3.0 * spec.noise_scale;
  spec.seed = 21;
  const Dataset ds = generate_benchmark(spec);

  const numkit::Model on_real = fit_plain_classifier(ds.train, spec.feature_dim, 9);
  const numkit::Model on_syn = fit_plain_classifier(ds.synthesized, spec.feature_dim, 9);
  const double acc_real = plain_accuracy(on_real, ds.seen_test);
  const double acc_syn = plain_accuracy(on_syn, ds.seen_test);
  CHECK(acc_syn < acc_real);
}

TEST_CASE("style pairing draws sources uniformly (chi-square)") {
  BenchmarkSpec spec;
  spec.train_counts = {0, 0, 24, 0, 0};
  spec.validation_counts = {0, 0, 1, 0, 0};
  spec.seen_test_counts = {0, 0, 1, 0, 0};
  spec.unseen_test_counts = {0, 0, 1, 0, 0};
  spec.match_synthesized = false;
  spec.synthesized_counts = {0, 0, 1200, 0, 0};
  spec.seed = 31;
  const Dataset ds = generate_benchmark(spec);
  REQUIRE(ds.synthesized.size() == 1200);

  std::map<std::string, int> counts;
  for (const Instance& inst : ds.synthesized) counts[*inst.meta.style_source] += 1;
  CHECK(counts.size() == 24);
  const double expected = 1200.0 / 24.0;
  double chi_sq = 0.0;
  for (const auto& [id, n] : counts) {
    chi_sq += (n - expected) * (n - expected) / expected;
  }
  // chi-square 0.999 quantile at 23 degrees of freedom.
  CHECK(chi_sq < 49.73);
}

TEST_CASE("style conditioning") {
  const BenchmarkSpec spec = small_spec();
  const Dataset ds = generate_benchmark(spec);
  const Instance& source = ds.train.front();
  const StyleVector style = make_style_vector(source, spec);
  CHECK(style.level == source.level);
  CHECK(style.source_id == source.id);
  CHECK(static_cast<int>(style.embedding.size()) == spec.style_dim);

  Rng rng(41);
  const std::vector<double> base = testutil::random_features(rng, spec.feature_dim);

  SUBCASE("zero embedding and zero spread is the identity") {
    BenchmarkSpec calm = spec;
    calm.quality_spread = 0.0;
    StyleVector zero = style;
    std::fill(zero.embedding.begin(), zero.embedding.end(), 0.0);
    const std::vector<double> out = style_condition(base, zero.level, zero, calm, 1);
    CHECK(out == base);
  }
  SUBCASE("two styles differ by the projected embedding difference") {
    BenchmarkSpec calm = spec;
    calm.quality_spread = 0.0;
    const StyleVector other = make_style_vector(ds.train[1], spec);
    REQUIRE(other.level == style.level);
    const std::vector<double> a = style_condition(base, style.level, style, calm, 1);
    const std::vector<double> b = style_condition(base, other.level, other, calm, 1);
    const std::vector<double> projection = style_projection(calm);
    for (int i = 0; i < calm.feature_dim; ++i) {
      double expected = 0.0;
      for (int j = 0; j < calm.style_dim; ++j) {
        expected += projection[static_cast<std::size_t>(i) * calm.style_dim +
                               static_cast<std::size_t>(j)] *
                    (style.embedding[static_cast<std::size_t>(j)] -
                     other.embedding[static_cast<std::size_t>(j)]);
      }
      CHECK(a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)] ==
            doctest::Approx(expected).epsilon(1e-9));
    }
  }
  SUBCASE("level mismatch is rejected") {
    CHECK_THROWS_AS(style_condition(base, style.level + 1, style, spec, 1), LevelPairingError);
  }
  SUBCASE("deterministic under seed") {
    const std::vector<double> a = style_condition(base, style.level, style, spec, 7);
    const std::vector<double> b = style_condition(base, style.level, style, spec, 7);
    CHECK(a == b);
    const std::vector<double> c = style_condition(base, style.level, style, spec, 8);
    CHECK_FALSE(a == c);
  }
}

TEST_CASE("prompt building") {
  const BenchmarkSpec spec = small_spec();
  const Dataset ds = generate_benchmark(spec);
  const std::string q = "Give your opinion about city life.";

  SUBCASE("k=1 renders task prompt, example, instruction in order") {
    const PromptBundle bundle = build_prompt(q, 3, ds.transcripts, 1, 1.5, 1);
    const RenderedPromptParts parts = parse_rendered_prompt(bundle.rendered);
    CHECK(parts.task_prompt == q);
    REQUIRE(parts.example_lines.size() == 1);
    CHECK(parts.example_lines[0] == bundle.examples[0]);
    CHECK(parts.instruction == std::string(kPromptInstruction));
  }
  SUBCASE("different seeds keep the example set, usually change the order") {
    const PromptBundle a = build_prompt(q, 3, ds.transcripts, 3, 1.5, 1);
    const PromptBundle b = build_prompt(q, 3, ds.transcripts, 3, 1.5, 2);
    CHECK(a.example_ids == b.example_ids);
    CHECK((a.rendered != b.rendered) == (a.permutation != b.permutation));
    bool any_different = false;
    for (std::uint64_t seed = 2; seed < 12; ++seed) {
      if (build_prompt(q, 3, ds.transcripts, 3, 1.5, seed).permutation != a.permutation) {
        any_different = true;
      }
    }
    CHECK(any_different);
  }
  SUBCASE("temperature is recorded for downstream emission") {
    const PromptBundle bundle = build_prompt(q, 3, ds.transcripts, 10, 1.5, 1);
    CHECK(bundle.temperature == 1.5);
    CHECK(bundle.example_count == 10);
  }
  SUBCASE("pool too small") {
    CHECK_THROWS_AS(build_prompt(q, 5, ds.transcripts, 10, 1.5, 1),
                    InsufficientExamplesError);  // level 5 has only 8 transcripts
  }
  SUBCASE("k out of range") {
    CHECK_THROWS_AS(build_prompt(q, 3, ds.transcripts, 0, 1.5, 1), SpecError);
    CHECK_THROWS_AS(build_prompt(q, 3, ds.transcripts, 11, 1.5, 1), SpecError);
  }
  SUBCASE("un-permuting the rendered examples recovers the selection") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const PromptBundle bundle = build_prompt(q, 3, ds.transcripts, 5, 1.5, seed);
      const RenderedPromptParts parts = parse_rendered_prompt(bundle.rendered);
      REQUIRE(parts.example_lines.size() == 5);
      std::vector<std::string> recovered(5);
      for (int i = 0; i < 5; ++i) {
        recovered[static_cast<std::size_t>(bundle.permutation[static_cast<std::size_t>(i)])] =
            parts.example_lines[static_cast<std::size_t>(i)];
      }
      CHECK(recovered == bundle.examples);
    }
  }
}

TEST_CASE("mock generation") {
  PromptBundle bundle;
  bundle.task_prompt = "q";
  bundle.level = 3;
  bundle.temperature = 1.5;

  SUBCASE("single-word examples cannot fit bigrams") {
    bundle.examples = {"alpha", "beta", "gamma"};
    bundle.example_count = 3;
    CHECK_THROWS_AS(mock_generate(bundle, 1), DegenerateCorpusError);
  }
  SUBCASE("greedy limit follows the most frequent continuation") {
    bundle.examples = {"a b c", "a b d", "a b c"};
    bundle.example_count = 3;
    bundle.temperature = 1e-9;
    const std::string text = mock_generate(bundle, 3);
    std::istringstream in(text);
    std::vector<std::string> tokens;
    std::string tok;
    while (in >> tok) tokens.push_back(tok);
    REQUIRE_FALSE(tokens.empty());
    CHECK(tokens[0] == "a");  // the only start token
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
      if (tokens[i] == "a") CHECK(tokens[i + 1] == "b");
      if (tokens[i] == "b") CHECK(tokens[i + 1] == "c");  // c outnumbers d
      if (tokens[i] == "c") CHECK(tokens[i + 1] == "a");  // dead end restarts
    }
  }
  SUBCASE("deterministic under seed and within length bounds") {
    const BenchmarkSpec spec = small_spec();
    const Dataset ds = generate_benchmark(spec);
    const PromptBundle real_bundle =
        build_prompt("q", 3, ds.transcripts, 8, 1.2, 5);
    const std::string a = mock_generate(real_bundle, 9);
    const std::string b = mock_generate(real_bundle, 9);
    CHECK(a == b);

    double mean_len = 0.0;
    for (const std::string& ex : real_bundle.examples) {
      std::istringstream in(ex);
      std::string tok;
      int n = 0;
      while (in >> tok) ++n;
      mean_len += n;
    }
    mean_len /= static_cast<double>(real_bundle.examples.size());
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const std::string text = mock_generate(real_bundle, seed);
      std::istringstream in(text);
      std::string tok;
      int n = 0;
      while (in >> tok) ++n;
      CHECK(n >= static_cast<int>(std::max(1.0, std::ceil(0.5 * mean_len))));
      CHECK(n <= static_cast<int>(std::floor(1.5 * mean_len)));
    }
  }
}

TEST_CASE("jsonl round-trip and validation") {
  testutil::TempDir dir("jsonl");

  SUBCASE("empty file loads as an empty list") {
    const auto path = dir.path() / "empty.jsonl";
    { std::ofstream out(path); }
    CHECK(load_jsonl(path).empty());
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_jsonl(dir.path() / "absent.jsonl"), MissingArtifactError);
  }
  SUBCASE("100 random instances round-trip bit-exactly") {
    Rng rng(51);
    std::vector<Instance> instances;
    for (int i = 0; i < 100; ++i) {
      Instance inst = testutil::random_instance(
          rng, 16, i % 3 == 0 ? Origin::kSynthesized : Origin::kReal, "rt" + std::to_string(i));
      if (inst.origin == Origin::kSynthesized) {
        inst.meta.quality_distance = rng.uniform() * 10.0;
        inst.meta.style_source = "src" + std::to_string(i);
      }
      // A few awkward values that must survive the round trip.
      inst.features[0] = 0.1;
      inst.features[1] = 1e-300;
      inst.features[2] = -12345.678901234567;
      instances.push_back(std::move(inst));
    }
    const auto path = dir.path() / "rt.jsonl";
    save_jsonl(instances, path);
    const std::vector<Instance> loaded = load_jsonl(path);
    REQUIRE(loaded.size() == instances.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) CHECK(loaded[i] == instances[i]);
  }
  SUBCASE("label out of range names the instance") {
    const auto path = dir.path() / "label.jsonl";
    {
      std::ofstream out(path);
      out << R"({"id":"bad_one","features":[1.0],"label":6,"origin":"real","level":3,"prompt_id":"p","meta":{}})"
          << "\n";
    }
    try {
      load_jsonl(path);
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("bad_one") != std::string::npos);
    }
  }
  SUBCASE("malformed line reports its number") {
    const auto path = dir.path() / "broken.jsonl";
    {
      std::ofstream out(path);
      out << R"({"id":"ok","features":[1.0],"label":3,"origin":"real","level":3,"prompt_id":"p","meta":{}})"
          << "\n";
      out << "{this is not json\n";
    }
    try {
      load_jsonl(path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(":2") != std::string::npos);
    }
  }
  SUBCASE("unknown origin is a parse error") {
    const auto path = dir.path() / "origin.jsonl";
    {
      std::ofstream out(path);
      out << R"({"id":"x","features":[1.0],"label":3,"origin":"cloned","level":3,"prompt_id":"p","meta":{}})"
          << "\n";
    }
    CHECK_THROWS_AS(load_jsonl(path), ParseError);
  }
  SUBCASE("transcripts round-trip") {
    const std::vector<Transcript> transcripts = {
        {"t1", 2, "i think work is useful"},
        {"t2", 4, "in my opinion travel makes life interesting"},
    };
    const auto path = dir.path() / "transcripts.jsonl";
    save_transcripts(transcripts, path);
    const std::vector<Transcript> loaded = load_transcripts(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].id == "t1");
    CHECK(loaded[0].level == 2);
    CHECK(loaded[0].text == transcripts[0].text);
    CHECK(loaded[1].text == transcripts[1].text);
  }
}
