#pragma once

#include "lstfuse/ops.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace lstfuse::nn {

using ad::Var;

using Rng = std::mt19937_64;

/// Named, ordered collection of trainable parameters and non-trainable buffers.
template <typename Scalar>
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Var<Scalar> var;
    bool trainable = true;
  };

  Var<Scalar> add_parameter(const std::string& name, Tensor<Scalar> init);
  Var<Scalar> add_buffer(const std::string& name, Tensor<Scalar> init);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Var<Scalar>> trainable() const;
  const Entry* find(const std::string& name) const;

  void zero_grad();
  Index parameter_count() const;
  bool all_finite() const;

 private:
  Var<Scalar> add(const std::string& name, Tensor<Scalar> init, bool trainable);
  std::vector<Entry> entries_;
};

/// Mode switches threaded through every forward pass.
struct ForwardContext {
  bool training = false;
  // Test hook: replaces every temporal-attention mask with this constant.
  std::optional<double> forced_attention;
};

template <typename Scalar>
struct Conv2d {
  Var<Scalar> weight;
  Var<Scalar> bias;
  Index stride = 1;
  Index pad = 0;

  Conv2d() = default;
  Conv2d(ParameterSet<Scalar>& params, const std::string& name, Index in, Index out, Index kernel, Index stride,
         Index pad, Rng& rng, double gain = 1.0, bool with_bias = true);
  Var<Scalar> operator()(const Var<Scalar>& x) const;
};

template <typename Scalar>
struct ConvTranspose2d {
  Var<Scalar> weight;
  Var<Scalar> bias;
  Index stride = 2;
  Index pad = 1;

  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterSet<Scalar>& params, const std::string& name, Index in, Index out, Index kernel,
                  Index stride, Index pad, Rng& rng);
  Var<Scalar> operator()(const Var<Scalar>& x) const;
};

template <typename Scalar>
struct BatchNorm2d {
  Var<Scalar> gamma;
  Var<Scalar> beta;
  ad::BatchNormState<Scalar> state;

  BatchNorm2d() = default;
  BatchNorm2d(ParameterSet<Scalar>& params, const std::string& name, Index channels);
  Var<Scalar> operator()(const Var<Scalar>& x, bool training) const;
};

enum class Activation { kRelu, kLeakyRelu };

template <typename Scalar>
Var<Scalar> activate(const Var<Scalar>& x, Activation act, double slope) {
  return act == Activation::kRelu ? ad::relu(x) : ad::leaky_relu(x, static_cast<Scalar>(slope));
}

/// x + conv(act(conv(x))), no normalization.
template <typename Scalar>
struct ResidualBlock {
  Conv2d<Scalar> first;
  Conv2d<Scalar> second;
  Activation act = Activation::kRelu;
  double slope = 0.2;

  ResidualBlock() = default;
  ResidualBlock(ParameterSet<Scalar>& params, const std::string& name, Index channels, Activation act,
                double slope, Rng& rng);
  Var<Scalar> operator()(const Var<Scalar>& x) const;
};

}  // namespace lstfuse::nn
