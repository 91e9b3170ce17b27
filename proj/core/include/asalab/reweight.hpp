#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "asalab/corpus.hpp"
#include "asalab/numkit.hpp"

namespace asalab::reweight {

// Hyperparameters of the importance-reweighted loss.
//
// Per instance i with gold label y_i:
//   p_Q = quality-model probability of y_i, p_T = target-model probability
//   r   = clamp(p_Q / max(p_T, p_floor), 0, r_max)
//   w   = alpha for real instances, 1 for synthesized ones
//   loss = eta * r * w * (-log max(p_T, p_floor))
// The batch loss is the arithmetic mean over the batch.
struct ReweightConfig {
  double alpha = 2.0;   // weight on real instances; >= 1 (1 disables the boost)
  double eta = 1.0;     // loss scale, distinct from the optimizer learning rate
  double r_max = 10.0;  // cap on the importance ratio
  double p_floor = 1e-7;  // confidence floor guarding the ratio and the log
  bool detach_ratio = true;  // treat r as a constant in the gradient

  void validate() const;  // SpecError naming the field
};

struct Confidences {
  double p_quality = 0.0;
  double p_target = 0.0;
};

// Probability each model assigns to the instance's gold label, floored to
// p_floor so both land in (0, 1].
Confidences confidences(const numkit::Model& quality, const numkit::Model& target,
                        const corpus::Instance& instance, const ReweightConfig& config);

// clamp(p_q / max(p_t, p_floor), 0, r_max); total on [0,1]^2, never NaN or inf.
double importance_ratio(double p_quality, double p_target, const ReweightConfig& config);

struct InstanceLossBreakdown {
  std::string instance_id;
  corpus::Origin origin = corpus::Origin::kReal;
  double p_quality = 0.0;
  double p_target = 0.0;
  double ratio = 0.0;
  double weight = 0.0;
  double loss = 0.0;
};

InstanceLossBreakdown instance_loss(double p_quality, double p_target, corpus::Origin origin,
                                    const ReweightConfig& config);

struct BatchLoss {
  double loss = 0.0;
  std::vector<InstanceLossBreakdown> breakdowns;
};

// Mean reweighted loss over a non-empty batch, with per-instance breakdowns.
BatchLoss batch_loss(const numkit::Model& quality, const numkit::Model& target,
                     std::span<const corpus::Instance> batch, const ReweightConfig& config);

// Gradient of the batch loss with respect to the target model's parameters.
// The quality model is a frozen reference: no gradient is produced for it.
// With detach_ratio the ratio is held constant; otherwise its dependence on
// p_T is differentiated through (cap and floor regions contribute zero).
numkit::Gradient batch_loss_gradient(const numkit::Model& quality,
                                     const numkit::Model& target,
                                     std::span<const corpus::Instance> batch,
                                     const ReweightConfig& config);

// One JSON record per instance: {id, origin, p_q, p_t, r, w, loss}.
void append_breakdown_log(const BatchLoss& batch, std::ostream& out);

}  // namespace asalab::reweight
