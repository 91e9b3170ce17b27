#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace asalab::numkit {

// One dense layer. Weights are row-major: weights[o * in + i] connects input i
// to output o.
struct Layer {
  int in = 0;
  int out = 0;
  std::vector<double> weights;
  std::vector<double> bias;
};

// Feed-forward softmax classifier: tanh on every hidden layer, linear head,
// softmax applied by forward(). The layer list may be a single linear layer.
struct Model {
  std::vector<Layer> layers;

  Model() = default;
  // Xavier-uniform weights, zero biases, deterministic under seed.
  Model(int input_dim, const std::vector<int>& hidden_widths, int class_count,
        std::uint64_t seed);

  int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  int class_count() const { return layers.empty() ? 0 : layers.back().out; }
  std::size_t param_count() const;
  bool all_finite() const;
};

bool same_shape(const Model& a, const Model& b);
bool bit_identical(const Model& a, const Model& b);

// Per-parameter values mirroring a model's layer shapes; weights then bias per
// layer. Used for gradients and optimizer moments.
struct Gradient {
  std::vector<Layer> layers;

  std::size_t param_count() const;
  double global_norm() const;
  void add(const Gradient& other);
  void scale(double factor);
};

Gradient zeros_like(const Model& model);

// Class probabilities for one feature vector. Softmax is log-sum-exp
// stabilised; output sums to 1 within 1e-9 for any finite input.
std::vector<double> forward(const Model& model, std::span<const double> features);

// Pre-softmax scores.
std::vector<double> forward_logits(const Model& model, std::span<const double> features);

// Gradient of a scalar loss with respect to every parameter, given the loss
// gradient with respect to the output logits. Recomputes the forward pass.
Gradient backward(const Model& model, std::span<const double> features,
                  std::span<const double> logit_grad);

// AdamW with decoupled weight decay and global-norm gradient clipping applied
// before the moment updates.
struct OptimState {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-7;
  double clip_norm = 1.0;
  double weight_decay = 0.01;
  std::int64_t step = 0;
  Gradient first_moment;
  Gradient second_moment;
};

OptimState make_optim_state(const Model& model, double learning_rate,
                            double weight_decay = 0.01);

// Scales the gradient so its global norm is at most max_norm. Gradients already
// within the bound pass through untouched. Returns the pre-clip norm.
double clip_global_norm(Gradient& gradient, double max_norm);

// One optimizer step, in place. Throws NumericError (naming the layer) on a
// non-finite gradient entry and ShapeError on mismatched shapes.
void adamw_step(Model& model, OptimState& state, const Gradient& gradient);

// Central-difference gradient verification.
struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t params_checked = 0;
  bool pass = false;
  int worst_layer = -1;
  std::size_t worst_param = 0;  // flat index within the layer, weights then bias
};

// Probes each parameter of `model` with central differences of `loss` (step
// `fd_step`) and compares against `analytic`. Models above `max_probed_params`
// parameters are probed on a seeded random subset. The loss must be
// deterministic; if two evaluations at the base point disagree, throws
// OracleError.
GradCheckReport finite_diff_check(const Model& model,
                                  const std::function<double(const Model&)>& loss,
                                  const Gradient& analytic, double tolerance,
                                  double fd_step = 1e-5,
                                  std::size_t max_probed_params = 10000,
                                  std::uint64_t subset_seed = 0);

// Versioned JSON checkpoint: layer shapes, row-major parameter arrays, seed and
// optimizer step counter. Round-trips bit-exactly.
void save_checkpoint(const Model& model, std::uint64_t seed, std::int64_t step,
                     const std::filesystem::path& path);

struct Checkpoint {
  Model model;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace asalab::numkit
