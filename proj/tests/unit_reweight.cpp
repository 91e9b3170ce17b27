#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "asalab/errors.hpp"
#include "asalab/reweight.hpp"
#include "asalab/rng.hpp"
#include "doctest.h"
#include "json.hpp"
#include "testutil.hpp"

using namespace asalab;
using namespace asalab::reweight;
using asalab::corpus::Instance;
using asalab::corpus::Origin;
using asalab::numkit::Model;

namespace {

// Independent mean cross-entropy of the target model, used as the reduction
// oracle; deliberately does not share code with the reweight module.
double mean_cross_entropy(const Model& target, const std::vector<Instance>& batch,
                          double p_floor) {
  double sum = 0.0;
  for (const Instance& inst : batch) {
    const std::vector<double> probs = numkit::forward(target, inst.features);
    sum += -std::log(std::max(probs[static_cast<std::size_t>(inst.label - 1)], p_floor));
  }
  return sum / static_cast<double>(batch.size());
}

Model zero_model(int dim) {
  Model model(dim, {}, 5, 0);
  for (auto& w : model.layers[0].weights) w = 0.0;
  return model;
}

}  // namespace

TEST_CASE("config validation") {
  ReweightConfig config;
  CHECK_NOTHROW(config.validate());
  config.alpha = 1.0;
  CHECK_NOTHROW(config.validate());  // equal-weight mixing must be representable
  config.alpha = 0.5;
  CHECK_THROWS_AS(config.validate(), SpecError);
  config = ReweightConfig{};
  config.eta = 0.0;
  CHECK_THROWS_AS(config.validate(), SpecError);
  config = ReweightConfig{};
  config.r_max = 0.5;
  CHECK_THROWS_AS(config.validate(), SpecError);
  config = ReweightConfig{};
  config.p_floor = 0.7;
  CHECK_THROWS_AS(config.validate(), SpecError);
}

TEST_CASE("confidences") {
  const ReweightConfig config;
  Rng rng(5);
  const Instance inst = testutil::random_instance(rng, 6, Origin::kReal, "i0");

  SUBCASE("identical models give identical confidences") {
    const Model model(6, {8}, 5, 4);
    const Confidences c = confidences(model, model, inst, config);
    CHECK(c.p_quality == c.p_target);
  }
  SUBCASE("zero models give 0.2 each") {
    const Model z = zero_model(6);
    const Confidences c = confidences(z, z, inst, config);
    CHECK(c.p_quality == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(c.p_target == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("matches direct composition through forward") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const Model quality(6, {8}, 5, derive_seed(seed, 1));
      const Model target(6, {8}, 5, derive_seed(seed, 2));
      Rng local(seed);
      const Instance probe = testutil::random_instance(local, 6, Origin::kReal, "p");
      const Confidences c = confidences(quality, target, probe, config);
      const auto gold = static_cast<std::size_t>(probe.label - 1);
      CHECK(c.p_quality ==
            std::max(numkit::forward(quality, probe.features)[gold], config.p_floor));
      CHECK(c.p_target ==
            std::max(numkit::forward(target, probe.features)[gold], config.p_floor));
    }
  }
  SUBCASE("label out of range") {
    const Model model(6, {8}, 5, 4);
    Instance bad = inst;
    bad.label = 6;
    CHECK_THROWS_AS(confidences(model, model, bad, config), LabelError);
    bad.label = 0;
    CHECK_THROWS_AS(confidences(model, model, bad, config), LabelError);
  }
  SUBCASE("dimension mismatch") {
    const Model model(6, {8}, 5, 4);
    Instance bad = inst;
    bad.features.resize(3);
    CHECK_THROWS_AS(confidences(model, model, bad, config), ShapeError);
  }
}

TEST_CASE("importance ratio") {
  const ReweightConfig config;
  CHECK(importance_ratio(0.5, 0.5, config) == 1.0);
  CHECK(importance_ratio(0.8, 0.2, config) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(importance_ratio(0.9, 1e-12, config) == 10.0);  // 0.9/1e-7 exceeds the cap

  SUBCASE("total on [0,1]^2, never NaN or inf") {
    Rng rng(9);
    for (int i = 0; i < 2000; ++i) {
      const double pq = rng.uniform();
      const double pt = (i % 3 == 0) ? 0.0 : rng.uniform();
      const double r = importance_ratio(pq, pt, config);
      CHECK(std::isfinite(r));
      CHECK(r >= 0.0);
      CHECK(r <= config.r_max);
    }
    CHECK(std::isfinite(importance_ratio(1.0, 0.0, config)));
    CHECK(std::isfinite(importance_ratio(0.0, 0.0, config)));
  }
}

TEST_CASE("instance loss hand values") {
  ReweightConfig config;  // alpha 2, eta 1

  SUBCASE("equal confidences, synthesized") {
    const InstanceLossBreakdown b = instance_loss(0.5, 0.5, Origin::kSynthesized, config);
    CHECK(b.ratio == 1.0);
    CHECK(b.weight == 1.0);
    CHECK(b.loss == doctest::Approx(0.6931471805599453).epsilon(1e-12));
  }
  SUBCASE("confident quality, real") {
    const InstanceLossBreakdown b = instance_loss(0.8, 0.4, Origin::kReal, config);
    CHECK(b.ratio == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(b.weight == 2.0);
    CHECK(b.loss == doctest::Approx(3.6651629274966204).epsilon(1e-12));
  }
  SUBCASE("perfectly confident target zeroes the loss") {
    CHECK(instance_loss(0.3, 1.0, Origin::kReal, config).loss == 0.0);
    CHECK(instance_loss(0.9, 1.0, Origin::kSynthesized, config).loss == 0.0);
  }
  SUBCASE("breakdown satisfies its invariants on random inputs") {
    Rng rng(31);
    for (int i = 0; i < 200; ++i) {
      config.alpha = 1.0 + 2.0 * rng.uniform();
      config.eta = 0.25 + 2.0 * rng.uniform();
      const double pq = rng.uniform();
      const double pt = rng.uniform();
      const Origin origin = i % 2 == 0 ? Origin::kReal : Origin::kSynthesized;
      const InstanceLossBreakdown b = instance_loss(pq, pt, origin, config);
      CHECK(b.ratio == importance_ratio(pq, pt, config));
      CHECK(b.weight == (origin == Origin::kReal ? config.alpha : 1.0));
      const double nll = -std::log(std::max(pt, config.p_floor));
      CHECK(b.loss == config.eta * (b.ratio * (b.weight * nll)));
      CHECK(b.loss >= 0.0);
    }
  }
}

TEST_CASE("monotone amplification in p_Q until the cap binds") {
  ReweightConfig config;
  config.r_max = 4.0;
  const double pt = 0.1;  // cap binds once p_q reaches r_max * p_t = 0.4
  double previous = -1.0;
  bool capped_seen = false;
  for (double pq = 0.05; pq <= 1.0; pq += 0.05) {
    const double loss = instance_loss(pq, pt, Origin::kSynthesized, config).loss;
    if (pq / pt < config.r_max) {
      CHECK(loss > previous);
    } else {
      capped_seen = true;
      const double cap_loss =
          config.eta * config.r_max * (-std::log(pt));
      CHECK(loss == doctest::Approx(cap_loss).epsilon(1e-12));
    }
    previous = loss;
  }
  CHECK(capped_seen);
}

TEST_CASE("batch loss") {
  const ReweightConfig config;
  const Model quality(5, {6}, 5, 1);
  const Model target(5, {6}, 5, 2);
  Rng rng(13);

  SUBCASE("empty batch") {
    CHECK_THROWS_AS(batch_loss(quality, target, std::vector<Instance>{}, config),
                    EmptyInputError);
    CHECK_THROWS_AS(batch_loss_gradient(quality, target, std::vector<Instance>{}, config),
                    EmptyInputError);
  }
  SUBCASE("single instance equals its own loss") {
    const std::vector<Instance> batch = {testutil::random_instance(rng, 5, Origin::kReal, "a")};
    const BatchLoss bl = batch_loss(quality, target, batch, config);
    CHECK(bl.loss == doctest::Approx(bl.breakdowns[0].loss).epsilon(1e-12));
  }
  SUBCASE("two instances average") {
    const std::vector<Instance> batch = testutil::random_batch(rng, 5, 2);
    const BatchLoss bl = batch_loss(quality, target, batch, config);
    CHECK(bl.loss ==
          doctest::Approx((bl.breakdowns[0].loss + bl.breakdowns[1].loss) / 2.0).epsilon(1e-12));
  }
  SUBCASE("batch of 16 matches the sum-then-divide oracle") {
    const std::vector<Instance> batch = testutil::random_batch(rng, 5, 16);
    const BatchLoss bl = batch_loss(quality, target, batch, config);
    double oracle = 0.0;
    for (const Instance& inst : batch) {
      const Confidences c = confidences(quality, target, inst, config);
      oracle += instance_loss(c.p_quality, c.p_target, inst.origin, config).loss;
    }
    oracle /= static_cast<double>(batch.size());
    CHECK(bl.loss == doctest::Approx(oracle).epsilon(1e-12));
  }
}

TEST_CASE("reduction identity: quality == target and alpha = 1 gives scaled cross-entropy") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(derive_seed(seed, 100));
    const int dim = 3 + static_cast<int>(rng.uniform_int(0, 5));
    const Model model(dim, {6}, 5, seed);
    const std::vector<Instance> batch =
        testutil::random_batch(rng, dim, 2 + static_cast<int>(rng.uniform_int(0, 10)));
    ReweightConfig config;
    config.alpha = 1.0;
    config.eta = 0.25 + 2.0 * rng.uniform();
    const BatchLoss bl = batch_loss(model, model, batch, config);
    const double ce = mean_cross_entropy(model, batch, config.p_floor);
    CHECK(std::abs(bl.loss - config.eta * ce) <= 1e-12 * std::max(1.0, std::abs(bl.loss)));
  }
}

TEST_CASE("eta scaling is exact") {
  Rng rng(17);
  const Model quality(5, {6}, 5, 3);
  const Model target(5, {6}, 5, 4);
  for (int i = 0; i < 50; ++i) {
    const std::vector<Instance> batch = testutil::random_batch(rng, 5, 8);
    ReweightConfig config;
    config.eta = 1.0;
    const double base = batch_loss(quality, target, batch, config).loss;
    for (const double c : {0.3, 2.5, 7.0}) {
      config.eta = c;
      CHECK(batch_loss(quality, target, batch, config).loss == c * base);
    }
  }
}

TEST_CASE("alpha doubling doubles all-real batch losses exactly") {
  Rng rng(19);
  const Model quality(5, {6}, 5, 5);
  const Model target(5, {6}, 5, 6);
  for (int i = 0; i < 50; ++i) {
    const std::vector<Instance> batch = testutil::random_batch(rng, 5, 6, false);  // all real
    ReweightConfig config;
    config.alpha = i % 2 == 0 ? 1.0 : 1.3;
    const double base = batch_loss(quality, target, batch, config).loss;
    config.alpha *= 2.0;
    CHECK(batch_loss(quality, target, batch, config).loss == 2.0 * base);
  }
}

TEST_CASE("detached gradient with r=1, w=1 reduces to the cross-entropy gradient") {
  Rng rng(23);
  const int dim = 5;
  const Model model(dim, {7}, 5, 8);
  const std::vector<Instance> batch = testutil::random_batch(rng, dim, 6);
  ReweightConfig config;
  config.alpha = 1.0;  // w = 1 everywhere
  // quality == target makes every ratio exactly 1.
  const numkit::Gradient grad = batch_loss_gradient(model, model, batch, config);

  numkit::Gradient ce_grad = numkit::zeros_like(model);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const Instance& inst : batch) {
    const std::vector<double> probs = numkit::forward(model, inst.features);
    std::vector<double> upstream(5);
    for (int j = 0; j < 5; ++j) {
      const double indicator = (j == inst.label - 1) ? 1.0 : 0.0;
      upstream[static_cast<std::size_t>(j)] =
          inv_n * (probs[static_cast<std::size_t>(j)] - indicator);
    }
    ce_grad.add(numkit::backward(model, inst.features, upstream));
  }
  CHECK(testutil::gradients_close(grad, ce_grad, 1e-12));
}

TEST_CASE("gradient matches finite differences in both detach modes") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(derive_seed(seed, 200));
    const int dim = 3 + static_cast<int>(rng.uniform_int(0, 4));
    const Model quality(dim, {5}, 5, derive_seed(seed, 201));
    const Model target(dim, {5}, 5, derive_seed(seed, 202));
    const std::vector<Instance> batch =
        testutil::random_batch(rng, dim, 2 + static_cast<int>(rng.uniform_int(0, 4)));
    ReweightConfig config;
    config.alpha = 1.0 + 2.0 * rng.uniform();
    config.eta = 0.25 + 2.0 * rng.uniform();
    config.r_max = 2.0 + 8.0 * rng.uniform();

    for (const bool detach : {true, false}) {
      config.detach_ratio = detach;
      const numkit::Gradient analytic = batch_loss_gradient(quality, target, batch, config);
      std::function<double(const Model&)> loss;
      if (detach) {
        const BatchLoss base = batch_loss(quality, target, batch, config);
        std::vector<double> frozen(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
          frozen[i] = base.breakdowns[i].ratio * base.breakdowns[i].weight;
        }
        loss = [&, frozen](const Model& m) {
          double sum = 0.0;
          for (std::size_t i = 0; i < batch.size(); ++i) {
            const std::vector<double> probs = numkit::forward(m, batch[i].features);
            sum += frozen[i] *
                   (-std::log(std::max(probs[static_cast<std::size_t>(batch[i].label - 1)],
                                       config.p_floor)));
          }
          return config.eta * (sum / static_cast<double>(batch.size()));
        };
      } else {
        loss = [&](const Model& m) { return batch_loss(quality, m, batch, config).loss; };
      }
      const numkit::GradCheckReport report =
          numkit::finite_diff_check(target, loss, analytic, 1e-4);
      CHECK(report.pass);
      worst = std::max(worst, report.max_rel_error);
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("the quality model is a frozen reference") {
  Rng rng(29);
  const Model quality(5, {6}, 5, 10);
  Model target(5, {6}, 5, 11);
  const Model quality_before = quality;
  const std::vector<Instance> batch = testutil::random_batch(rng, 5, 8);
  const ReweightConfig config;

  // The gradient is shaped for the target model only, and computing/applying
  // it leaves the quality model's parameters untouched.
  const numkit::Gradient grad = batch_loss_gradient(quality, target, batch, config);
  CHECK(grad.layers.size() == target.layers.size());
  numkit::OptimState state = numkit::make_optim_state(target, 1e-3);
  numkit::adamw_step(target, state, grad);
  CHECK(numkit::bit_identical(quality, quality_before));
}

TEST_CASE("breakdown log is one JSON record per instance") {
  Rng rng(37);
  const Model quality(4, {5}, 5, 12);
  const Model target(4, {5}, 5, 13);
  const std::vector<Instance> batch = testutil::random_batch(rng, 4, 5);
  const BatchLoss bl = batch_loss(quality, target, batch, ReweightConfig{});

  std::ostringstream out;
  append_breakdown_log(bl, out);
  std::istringstream in(out.str());
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    const nlohmann::json j = nlohmann::json::parse(line);
    for (const char* key : {"id", "origin", "p_q", "p_t", "r", "w", "loss"}) {
      CHECK(j.contains(key));
    }
    CHECK(j.at("id").get<std::string>() == batch[lines].id);
    ++lines;
  }
  CHECK(lines == batch.size());
}
