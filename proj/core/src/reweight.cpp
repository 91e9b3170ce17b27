#include "asalab/reweight.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "asalab/errors.hpp"
#include "json.hpp"

namespace asalab::reweight {

namespace {

void check_label(const corpus::Instance& instance, int class_count) {
  if (instance.label < 1 || instance.label > class_count) {
    throw LabelError("reweight: instance " + instance.id + " has label " +
                     std::to_string(instance.label) + ", expected 1.." +
                     std::to_string(class_count));
  }
}

double weight_for(corpus::Origin origin, const ReweightConfig& config) {
  return origin == corpus::Origin::kReal ? config.alpha : 1.0;
}

}  // namespace

void ReweightConfig::validate() const {
  // alpha = 1 is allowed: it turns the real-instance boost off (the equal-weight
  // mixing variant); the elevated-weight setting uses alpha > 1.
  if (!(alpha >= 1.0)) throw SpecError("reweight.alpha must be >= 1");
  if (!(eta > 0.0)) throw SpecError("reweight.eta must be > 0");
  if (!(r_max >= 1.0)) throw SpecError("reweight.r_max must be >= 1");
  if (!(p_floor > 0.0 && p_floor < 0.5)) throw SpecError("reweight.p_floor must be in (0, 0.5)");
}

Confidences confidences(const numkit::Model& quality, const numkit::Model& target,
                        const corpus::Instance& instance, const ReweightConfig& config) {
  config.validate();
  check_label(instance, quality.class_count());
  check_label(instance, target.class_count());
  const std::vector<double> q_probs = numkit::forward(quality, instance.features);
  const std::vector<double> t_probs = numkit::forward(target, instance.features);
  const auto idx = static_cast<std::size_t>(instance.label - 1);
  Confidences c;
  c.p_quality = std::max(q_probs[idx], config.p_floor);
  c.p_target = std::max(t_probs[idx], config.p_floor);
  return c;
}

double importance_ratio(double p_quality, double p_target, const ReweightConfig& config) {
  const double ratio = p_quality / std::max(p_target, config.p_floor);
  return std::clamp(ratio, 0.0, config.r_max);
}

InstanceLossBreakdown instance_loss(double p_quality, double p_target, corpus::Origin origin,
                                    const ReweightConfig& config) {
  InstanceLossBreakdown b;
  b.origin = origin;
  b.p_quality = p_quality;
  b.p_target = p_target;
  b.ratio = importance_ratio(p_quality, p_target, config);
  b.weight = weight_for(origin, config);
  const double nll = -std::log(std::max(p_target, config.p_floor));
  b.loss = config.eta * (b.ratio * (b.weight * nll));
  return b;
}

BatchLoss batch_loss(const numkit::Model& quality, const numkit::Model& target,
                     std::span<const corpus::Instance> batch, const ReweightConfig& config) {
  if (batch.empty()) throw EmptyInputError("batch_loss: empty batch");
  config.validate();
  BatchLoss result;
  result.breakdowns.reserve(batch.size());
  // eta is factored out of the accumulation so the batch loss is exactly
  // linear in it.
  double base_sum = 0.0;
  for (const corpus::Instance& instance : batch) {
    const Confidences c = confidences(quality, target, instance, config);
    InstanceLossBreakdown b = instance_loss(c.p_quality, c.p_target, instance.origin, config);
    b.instance_id = instance.id;
    const double nll = -std::log(std::max(c.p_target, config.p_floor));
    base_sum += b.ratio * (b.weight * nll);
    result.breakdowns.push_back(std::move(b));
  }
  result.loss = config.eta * (base_sum / static_cast<double>(batch.size()));
  return result;
}

numkit::Gradient batch_loss_gradient(const numkit::Model& quality,
                                     const numkit::Model& target,
                                     std::span<const corpus::Instance> batch,
                                     const ReweightConfig& config) {
  if (batch.empty()) throw EmptyInputError("batch_loss_gradient: empty batch");
  config.validate();

  const int classes = target.class_count();
  numkit::Gradient total = numkit::zeros_like(target);
  const double inv_n = 1.0 / static_cast<double>(batch.size());

  for (const corpus::Instance& instance : batch) {
    check_label(instance, classes);
    const std::vector<double> q_probs = numkit::forward(quality, instance.features);
    const std::vector<double> t_probs = numkit::forward(target, instance.features);
    const auto gold = static_cast<std::size_t>(instance.label - 1);
    const double p_q = std::max(q_probs[gold], config.p_floor);
    const double p_t_raw = t_probs[gold];
    const double p_t = std::max(p_t_raw, config.p_floor);
    const double ratio = std::clamp(p_q / p_t, 0.0, config.r_max);
    const double w = weight_for(instance.origin, config);

    // d(loss_i)/d(p_T), by region of the piecewise definition.
    double dloss_dp = 0.0;
    const bool floored = p_t_raw <= config.p_floor;
    const bool capped = p_q / p_t >= config.r_max;
    if (!floored) {
      if (config.detach_ratio || capped) {
        // loss = eta*w*r * (-log p); r constant.
        dloss_dp = -config.eta * w * ratio / p_t_raw;
      } else {
        // loss = eta*w*p_q * (-log p)/p.
        dloss_dp = config.eta * w * p_q * (std::log(p_t_raw) - 1.0) / (p_t_raw * p_t_raw);
      }
    }
    // Inside the floor both the ratio and the log term are constant in p_T.

    if (dloss_dp != 0.0) {
      // Chain through softmax: d p_y / d z_j = p_y * (1[j=y] - p_j).
      std::vector<double> logit_grad(static_cast<std::size_t>(classes));
      for (int j = 0; j < classes; ++j) {
        const double indicator = (static_cast<std::size_t>(j) == gold) ? 1.0 : 0.0;
        logit_grad[static_cast<std::size_t>(j)] =
            inv_n * dloss_dp * p_t_raw * (indicator - t_probs[static_cast<std::size_t>(j)]);
      }
      total.add(numkit::backward(target, instance.features, logit_grad));
    }
  }
  return total;
}

void append_breakdown_log(const BatchLoss& batch, std::ostream& out) {
  for (const InstanceLossBreakdown& b : batch.breakdowns) {
    nlohmann::json j;
    j["id"] = b.instance_id;
    j["origin"] = corpus::to_string(b.origin);
    j["p_q"] = b.p_quality;
    j["p_t"] = b.p_target;
    j["r"] = b.ratio;
    j["w"] = b.weight;
    j["loss"] = b.loss;
    out << j.dump() << "\n";
  }
}

}  // namespace asalab::reweight
