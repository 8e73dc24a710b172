#pragma once

#include "ruda/autodiff.hpp"
#include "ruda/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ruda::nn {

enum class Head { Linear, Sigmoid, Softmax };

Head parse_head(const std::string& name);
std::string head_name(Head head);

/// Fully connected network: ReLU on hidden layers, `head` on the output.
struct MlpSpec {
  std::vector<Eigen::Index> widths;  // input, hidden..., output
  Head head = Head::Linear;
  std::uint64_t seed = 0;

  Eigen::Index input_width() const { return widths.front(); }
  Eigen::Index output_width() const { return widths.back(); }
  std::size_t layer_count() const { return widths.size() - 1; }
  /// Throws ContractError unless there is at least one layer of positive widths.
  void validate() const;
};

struct Layer {
  Matrix weight;  // [fan_in x fan_out]
  Matrix bias;    // [1 x fan_out]
};

/// Parameter set of one network. Value type; copies are deep.
struct MlpParams {
  std::vector<Layer> layers;

  bool same_shape(const MlpParams& other) const;
  std::size_t parameter_count() const;
};

/// Glorot-uniform weights, zero biases. Bit-identical for equal seeds.
MlpParams init_mlp(const MlpSpec& spec);

/// Parameters placed on a tape as leaves, so gradients can be read back.
struct BoundMlp {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
};

BoundMlp bind(ad::Tape& tape, const MlpParams& params);

/// Forward pass on the tape. Throws DimensionError if the batch width differs
/// from the input width.
ad::Var forward(const MlpSpec& spec, const BoundMlp& bound, ad::Var batch);

/// Convenience: binds the parameters and runs the forward pass.
ad::Var forward(const MlpSpec& spec, const MlpParams& params, ad::Var batch,
                BoundMlp* bound_out = nullptr);

/// Plain evaluation without a tape.
Matrix predict(const MlpSpec& spec, const MlpParams& params, const Matrix& batch);

/// Gradients of the bound parameters after Tape::backward, shaped like params.
MlpParams gradients(const BoundMlp& bound);

/// SGD with heavy-ball momentum and L2 weight decay:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
class SgdMomentum {
 public:
  SgdMomentum(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  /// Applies one update. Throws PoisonedUpdateError (leaving params and state
  /// untouched) if any gradient entry is non-finite, DimensionError on shape
  /// mismatch.
  void step(MlpParams& params, const MlpParams& grads, double lr);

  double momentum() const { return momentum_; }
  double weight_decay() const { return weight_decay_; }
  const MlpParams& velocity() const { return velocity_; }

 private:
  double momentum_;
  double weight_decay_;
  MlpParams velocity_;
  bool initialised_ = false;
};

}  // namespace ruda::nn
