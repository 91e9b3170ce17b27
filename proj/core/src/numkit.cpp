#include "asalab/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "asalab/errors.hpp"
#include "asalab/rng.hpp"
#include "json.hpp"

namespace asalab::numkit {

namespace {

void check_features(const Model& model, std::span<const double> features) {
  if (static_cast<int>(features.size()) != model.input_dim()) {
    throw ShapeError("forward: feature length " + std::to_string(features.size()) +
                     " does not match model input dimension " +
                     std::to_string(model.input_dim()));
  }
  for (double v : features) {
    if (!std::isfinite(v)) throw NumericError("forward: non-finite feature value");
  }
}

// z = W x + b for one layer.
std::vector<double> affine(const Layer& layer, std::span<const double> x) {
  std::vector<double> z(static_cast<std::size_t>(layer.out));
  for (int o = 0; o < layer.out; ++o) {
    double sum = layer.bias[static_cast<std::size_t>(o)];
    const double* row = layer.weights.data() + static_cast<std::size_t>(o) * layer.in;
    for (int i = 0; i < layer.in; ++i) sum += row[i] * x[static_cast<std::size_t>(i)];
    z[static_cast<std::size_t>(o)] = sum;
  }
  return z;
}

std::vector<double> softmax(std::span<const double> logits) {
  double max_logit = logits[0];
  for (double v : logits) max_logit = std::max(max_logit, v);
  std::vector<double> probs(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max_logit);
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

// Pre-activation and activation values for every layer.
struct ForwardTrace {
  std::vector<std::vector<double>> activations;  // activations[0] = input
};

ForwardTrace trace_forward(const Model& model, std::span<const double> features) {
  ForwardTrace trace;
  trace.activations.emplace_back(features.begin(), features.end());
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    std::vector<double> z = affine(model.layers[li], trace.activations.back());
    if (li + 1 < model.layers.size()) {
      for (double& v : z) v = std::tanh(v);
    }
    trace.activations.push_back(std::move(z));
  }
  return trace;
}

}  // namespace

Model::Model(int input_dim, const std::vector<int>& hidden_widths, int class_count,
             std::uint64_t seed) {
  if (input_dim < 1 || class_count < 1) {
    throw SpecError("model: input dimension and class count must be positive");
  }
  for (int h : hidden_widths) {
    if (h < 1) throw SpecError("model: hidden width must be positive");
  }
  Rng rng(derive_seed(seed, 0x10de1));
  std::vector<int> dims;
  dims.push_back(input_dim);
  dims.insert(dims.end(), hidden_widths.begin(), hidden_widths.end());
  dims.push_back(class_count);
  for (std::size_t li = 0; li + 1 < dims.size(); ++li) {
    Layer layer;
    layer.in = dims[li];
    layer.out = dims[li + 1];
    const double bound = std::sqrt(6.0 / (layer.in + layer.out));
    layer.weights.resize(static_cast<std::size_t>(layer.in) * layer.out);
    for (double& w : layer.weights) w = rng.uniform(-bound, bound);
    layer.bias.assign(static_cast<std::size_t>(layer.out), 0.0);
    layers.push_back(std::move(layer));
  }
}

std::size_t Model::param_count() const {
  std::size_t count = 0;
  for (const Layer& layer : layers) {
    count += static_cast<std::size_t>(layer.in + 1) * static_cast<std::size_t>(layer.out);
  }
  return count;
}

bool Model::all_finite() const {
  for (const Layer& layer : layers) {
    for (double w : layer.weights) {
      if (!std::isfinite(w)) return false;
    }
    for (double b : layer.bias) {
      if (!std::isfinite(b)) return false;
    }
  }
  return true;
}

bool same_shape(const Model& a, const Model& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].in != b.layers[i].in || a.layers[i].out != b.layers[i].out) return false;
  }
  return true;
}

bool bit_identical(const Model& a, const Model& b) {
  if (!same_shape(a, b)) return false;
  for (std::size_t i = 0; i < a.layers.size(); ++i) {
    if (a.layers[i].weights != b.layers[i].weights) return false;
    if (a.layers[i].bias != b.layers[i].bias) return false;
  }
  return true;
}

std::size_t Gradient::param_count() const {
  std::size_t count = 0;
  for (const Layer& layer : layers) count += layer.weights.size() + layer.bias.size();
  return count;
}

double Gradient::global_norm() const {
  double sum_sq = 0.0;
  for (const Layer& layer : layers) {
    for (double g : layer.weights) sum_sq += g * g;
    for (double g : layer.bias) sum_sq += g * g;
  }
  return std::sqrt(sum_sq);
}

void Gradient::add(const Gradient& other) {
  if (layers.size() != other.layers.size()) throw ShapeError("gradient add: layer count mismatch");
  for (std::size_t li = 0; li < layers.size(); ++li) {
    if (layers[li].weights.size() != other.layers[li].weights.size() ||
        layers[li].bias.size() != other.layers[li].bias.size()) {
      throw ShapeError("gradient add: shape mismatch in layer " + std::to_string(li));
    }
    for (std::size_t i = 0; i < layers[li].weights.size(); ++i) {
      layers[li].weights[i] += other.layers[li].weights[i];
    }
    for (std::size_t i = 0; i < layers[li].bias.size(); ++i) {
      layers[li].bias[i] += other.layers[li].bias[i];
    }
  }
}

void Gradient::scale(double factor) {
  for (Layer& layer : layers) {
    for (double& g : layer.weights) g *= factor;
    for (double& g : layer.bias) g *= factor;
  }
}

Gradient zeros_like(const Model& model) {
  Gradient grad;
  for (const Layer& layer : model.layers) {
    Layer zero;
    zero.in = layer.in;
    zero.out = layer.out;
    zero.weights.assign(layer.weights.size(), 0.0);
    zero.bias.assign(layer.bias.size(), 0.0);
    grad.layers.push_back(std::move(zero));
  }
  return grad;
}

std::vector<double> forward_logits(const Model& model, std::span<const double> features) {
  if (model.layers.empty()) throw ShapeError("forward: model has no layers");
  check_features(model, features);
  return trace_forward(model, features).activations.back();
}

std::vector<double> forward(const Model& model, std::span<const double> features) {
  return softmax(forward_logits(model, features));
}

Gradient backward(const Model& model, std::span<const double> features,
                  std::span<const double> logit_grad) {
  if (model.layers.empty()) throw ShapeError("backward: model has no layers");
  check_features(model, features);
  if (static_cast<int>(logit_grad.size()) != model.class_count()) {
    throw ShapeError("backward: upstream length " + std::to_string(logit_grad.size()) +
                     " does not match class count " + std::to_string(model.class_count()));
  }

  const ForwardTrace trace = trace_forward(model, features);
  Gradient grad = zeros_like(model);
  std::vector<double> delta(logit_grad.begin(), logit_grad.end());

  for (std::size_t li = model.layers.size(); li-- > 0;) {
    const Layer& layer = model.layers[li];
    Layer& layer_grad = grad.layers[li];
    const std::vector<double>& input = trace.activations[li];
    for (int o = 0; o < layer.out; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      layer_grad.bias[static_cast<std::size_t>(o)] = d;
      double* wrow = layer_grad.weights.data() + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) wrow[i] = d * input[static_cast<std::size_t>(i)];
    }
    if (li == 0) break;
    // Propagate: W^T delta, then through the tanh of the previous layer.
    std::vector<double> prev(static_cast<std::size_t>(layer.in), 0.0);
    for (int o = 0; o < layer.out; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      const double* wrow = layer.weights.data() + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) prev[static_cast<std::size_t>(i)] += wrow[i] * d;
    }
    const std::vector<double>& activated = trace.activations[li];  // tanh already applied
    for (int i = 0; i < layer.in; ++i) {
      const double a = activated[static_cast<std::size_t>(i)];
      prev[static_cast<std::size_t>(i)] *= (1.0 - a * a);
    }
    delta = std::move(prev);
  }
  return grad;
}

OptimState make_optim_state(const Model& model, double learning_rate, double weight_decay) {
  OptimState state;
  state.learning_rate = learning_rate;
  state.weight_decay = weight_decay;
  state.first_moment = zeros_like(model);
  state.second_moment = zeros_like(model);
  return state;
}

double clip_global_norm(Gradient& gradient, double max_norm) {
  const double norm = gradient.global_norm();
  if (norm > max_norm) gradient.scale(max_norm / norm);
  return norm;
}

void adamw_step(Model& model, OptimState& state, const Gradient& gradient) {
  if (gradient.layers.size() != model.layers.size() ||
      state.first_moment.layers.size() != model.layers.size()) {
    throw ShapeError("adamw: layer count mismatch between model, state and gradient");
  }
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    const Layer& g = gradient.layers[li];
    const Layer& m = model.layers[li];
    if (g.weights.size() != m.weights.size() || g.bias.size() != m.bias.size()) {
      throw ShapeError("adamw: gradient shape mismatch in layer " + std::to_string(li));
    }
    for (double v : g.weights) {
      if (!std::isfinite(v)) {
        throw NumericError("adamw: non-finite weight gradient in layer " + std::to_string(li));
      }
    }
    for (double v : g.bias) {
      if (!std::isfinite(v)) {
        throw NumericError("adamw: non-finite bias gradient in layer " + std::to_string(li));
      }
    }
  }

  Gradient clipped = gradient;
  clip_global_norm(clipped, state.clip_norm);

  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    Layer& params = model.layers[li];
    Layer& m1 = state.first_moment.layers[li];
    Layer& m2 = state.second_moment.layers[li];
    const Layer& g = clipped.layers[li];

    auto update = [&](std::vector<double>& theta, std::vector<double>& m,
                      std::vector<double>& v, const std::vector<double>& grad_values) {
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double gi = grad_values[i];
        m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
        v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
        const double m_hat = m[i] / bc1;
        const double v_hat = v[i] / bc2;
        theta[i] -= state.learning_rate *
                    (m_hat / (std::sqrt(v_hat) + state.epsilon) + state.weight_decay * theta[i]);
      }
    };
    update(params.weights, m1.weights, m2.weights, g.weights);
    update(params.bias, m1.bias, m2.bias, g.bias);
  }
}

namespace {

double* param_at(Model& model, std::size_t flat_index, int* layer_out, std::size_t* local_out) {
  std::size_t offset = flat_index;
  for (std::size_t li = 0; li < model.layers.size(); ++li) {
    Layer& layer = model.layers[li];
    if (offset < layer.weights.size()) {
      if (layer_out) *layer_out = static_cast<int>(li);
      if (local_out) *local_out = offset;
      return &layer.weights[offset];
    }
    offset -= layer.weights.size();
    if (offset < layer.bias.size()) {
      if (layer_out) *layer_out = static_cast<int>(li);
      if (local_out) *local_out = layer.weights.size() + offset;
      return &layer.bias[offset];
    }
    offset -= layer.bias.size();
  }
  return nullptr;
}

double analytic_at(const Gradient& grad, std::size_t flat_index) {
  std::size_t offset = flat_index;
  for (const Layer& layer : grad.layers) {
    if (offset < layer.weights.size()) return layer.weights[offset];
    offset -= layer.weights.size();
    if (offset < layer.bias.size()) return layer.bias[offset];
    offset -= layer.bias.size();
  }
  return 0.0;
}

}  // namespace

GradCheckReport finite_diff_check(const Model& model,
                                  const std::function<double(const Model&)>& loss,
                                  const Gradient& analytic, double tolerance, double fd_step,
                                  std::size_t max_probed_params, std::uint64_t subset_seed) {
  const double base_a = loss(model);
  const double base_b = loss(model);
  if (!(base_a == base_b)) {
    throw OracleError("finite_diff_check: loss evaluator is not deterministic (" +
                      std::to_string(base_a) + " vs " + std::to_string(base_b) + ")");
  }

  const std::size_t total = model.param_count();
  std::vector<std::size_t> indices;
  if (total > max_probed_params) {
    Rng rng(derive_seed(subset_seed, 0xfdc));
    indices = rng.sample_without_replacement(total, max_probed_params);
  } else {
    indices.resize(total);
    for (std::size_t i = 0; i < total; ++i) indices[i] = i;
  }

  GradCheckReport report;
  Model probe = model;
  for (std::size_t flat : indices) {
    int layer_index = -1;
    std::size_t local = 0;
    double* slot = param_at(probe, flat, &layer_index, &local);
    const double original = *slot;
    *slot = original + fd_step;
    const double plus = loss(probe);
    *slot = original - fd_step;
    const double minus = loss(probe);
    *slot = original;

    const double fd = (plus - minus) / (2.0 * fd_step);
    const double an = analytic_at(analytic, flat);
    const double denom = std::max({1.0, std::abs(fd), std::abs(an)});
    const double rel = std::abs(fd - an) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_layer = layer_index;
      report.worst_param = local;
    }
    ++report.params_checked;
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

namespace {
constexpr int kCheckpointVersion = 1;
}

void save_checkpoint(const Model& model, std::uint64_t seed, std::int64_t step,
                     const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["format_version"] = kCheckpointVersion;
  doc["seed"] = seed;
  doc["step"] = step;
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& layer : model.layers) {
    nlohmann::json entry;
    entry["in"] = layer.in;
    entry["out"] = layer.out;
    entry["weights"] = layer.weights;
    entry["bias"] = layer.bias;
    layers.push_back(std::move(entry));
  }
  doc["layers"] = std::move(layers);

  std::ofstream out(path);
  if (!out) throw Error("checkpoint: cannot open for writing: " + path.string());
  out << doc.dump() << "\n";
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("checkpoint: missing file: " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint: " + path.string() + ": " + e.what());
  }
  try {
    if (doc.at("format_version").get<int>() != kCheckpointVersion) {
      throw ParseError("checkpoint: unsupported format version in " + path.string());
    }
    Checkpoint ckpt;
    ckpt.seed = doc.at("seed").get<std::uint64_t>();
    ckpt.step = doc.at("step").get<std::int64_t>();
    for (const auto& entry : doc.at("layers")) {
      Layer layer;
      layer.in = entry.at("in").get<int>();
      layer.out = entry.at("out").get<int>();
      layer.weights = entry.at("weights").get<std::vector<double>>();
      layer.bias = entry.at("bias").get<std::vector<double>>();
      if (layer.weights.size() != static_cast<std::size_t>(layer.in) * layer.out ||
          layer.bias.size() != static_cast<std::size_t>(layer.out)) {
        throw ParseError("checkpoint: layer array sizes disagree with shapes in " +
                         path.string());
      }
      ckpt.model.layers.push_back(std::move(layer));
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("checkpoint: " + path.string() + ": " + e.what());
  }
}

}  // namespace asalab::numkit
