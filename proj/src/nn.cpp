#include "ruda/nn.hpp"

#include <cmath>
#include <random>

namespace ruda::nn {

Head parse_head(const std::string& name) {
  if (name == "linear") return Head::Linear;
  if (name == "sigmoid") return Head::Sigmoid;
  if (name == "softmax") return Head::Softmax;
  throw ContractError("unknown output head '" + name + "'");
}

std::string head_name(Head head) {
  switch (head) {
    case Head::Linear: return "linear";
    case Head::Sigmoid: return "sigmoid";
    case Head::Softmax: return "softmax";
  }
  return "linear";
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ContractError("MLP needs at least one layer");
  for (auto w : widths) {
    if (w <= 0) throw ContractError("MLP widths must be positive");
  }
}

bool MlpParams::same_shape(const MlpParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& a = layers[i];
    const auto& b = other.layers[i];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.bias.cols() != b.bias.cols() || a.bias.rows() != b.bias.rows()) {
      return false;
    }
  }
  return true;
}

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

MlpParams init_mlp(const MlpSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  MlpParams params;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const auto fan_in = spec.widths[l];
    const auto fan_out = spec.widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Layer layer;
    layer.weight.resize(fan_in, fan_out);
    for (Eigen::Index i = 0; i < fan_in; ++i) {
      for (Eigen::Index j = 0; j < fan_out; ++j) layer.weight(i, j) = dist(rng);
    }
    layer.bias = Matrix::Zero(1, fan_out);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

BoundMlp bind(ad::Tape& tape, const MlpParams& params) {
  BoundMlp bound;
  for (const auto& layer : params.layers) {
    bound.weights.push_back(tape.leaf(layer.weight));
    bound.biases.push_back(tape.leaf(layer.bias));
  }
  return bound;
}

ad::Var forward(const MlpSpec& spec, const BoundMlp& bound, ad::Var batch) {
  if (batch.cols() != spec.input_width()) {
    throw DimensionError("MLP input width " + std::to_string(spec.input_width()) +
                         " but batch is " + shape_string(batch.value()));
  }
  if (bound.weights.size() != spec.layer_count()) {
    throw DimensionError("MLP parameter layer count does not match spec");
  }
  ad::Var h = batch;
  for (std::size_t l = 0; l < bound.weights.size(); ++l) {
    h = ad::add(ad::matmul(h, bound.weights[l]), bound.biases[l]);
    if (l + 1 < bound.weights.size()) h = ad::relu(h);
  }
  switch (spec.head) {
    case Head::Linear: return h;
    case Head::Sigmoid: return ad::sigmoid(h);
    case Head::Softmax: return ad::softmax_rows(h);
  }
  return h;
}

ad::Var forward(const MlpSpec& spec, const MlpParams& params, ad::Var batch, BoundMlp* bound_out) {
  BoundMlp bound = bind(batch.tape(), params);
  ad::Var out = forward(spec, bound, batch);
  if (bound_out) *bound_out = std::move(bound);
  return out;
}

Matrix predict(const MlpSpec& spec, const MlpParams& params, const Matrix& batch) {
  ad::Tape tape;
  return forward(spec, params, tape.leaf(batch)).value();
}

MlpParams gradients(const BoundMlp& bound) {
  MlpParams g;
  for (std::size_t l = 0; l < bound.weights.size(); ++l) {
    g.layers.push_back({bound.weights[l].grad(), bound.biases[l].grad()});
  }
  return g;
}

void SgdMomentum::step(MlpParams& params, const MlpParams& grads, double lr) {
  if (!params.same_shape(grads)) {
    throw DimensionError("sgd_step: gradient shapes do not match parameters");
  }
  for (const auto& g : grads.layers) {
    if (!g.weight.allFinite() || !g.bias.allFinite()) {
      throw PoisonedUpdateError("sgd_step: non-finite gradient, update aborted");
    }
  }
  if (!initialised_ || !velocity_.same_shape(params)) {
    velocity_ = params;
    for (auto& l : velocity_.layers) {
      l.weight.setZero();
      l.bias.setZero();
    }
    initialised_ = true;
  }
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    auto& p = params.layers[i];
    auto& v = velocity_.layers[i];
    const auto& g = grads.layers[i];
    v.weight = momentum_ * v.weight + g.weight + weight_decay_ * p.weight;
    v.bias = momentum_ * v.bias + g.bias + weight_decay_ * p.bias;
    p.weight -= lr * v.weight;
    p.bias -= lr * v.bias;
  }
}

}  // namespace ruda::nn
