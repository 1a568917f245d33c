#pragma once

#include "lstfuse/nn.hpp"

#include "json.hpp"

#include <cstdint>
#include <vector>

namespace lstfuse {

/// Conditional PatchGAN critic. All layers use 4x4 kernels with padding 1; every layer but the last
/// in `channels` has stride 2, the last has stride 1, and a final stride-1 conv maps to one score channel.
struct DiscriminatorConfig {
  std::vector<Index> channels{64, 128, 256, 512};
  double leaky_slope = 0.2;
  Index input_size = 32;

  void validate() const;
  Index output_size() const;
};

void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

template <typename Scalar>
struct ScorePair {
  ad::Var<Scalar> real;
  ad::Var<Scalar> fake;
};

template <typename Scalar>
class Discriminator {
 public:
  Discriminator(DiscriminatorConfig config, std::uint64_t seed);

  const DiscriminatorConfig& config() const { return config_; }
  nn::ParameterSet<Scalar>& parameters() { return params_; }
  const nn::ParameterSet<Scalar>& parameters() const { return params_; }

  /// Raw score map [B,1,S,S] for an LST patch conditioned on the co-located coarse LST.
  ad::Var<Scalar> forward(const ad::Var<Scalar>& lst_mid, const ad::Var<Scalar>& condition,
                          const nn::ForwardContext& ctx) const;

  /// Scores real and fake patches as one batch, so batch statistics are shared between them.
  ScorePair<Scalar> forward_pair(const ad::Var<Scalar>& real, const ad::Var<Scalar>& fake,
                                 const ad::Var<Scalar>& condition, const nn::ForwardContext& ctx) const;

  /// Reporting-only view of the scores.
  static Tensor<Scalar> probability(const Tensor<Scalar>& scores);

 private:
  struct Layer {
    nn::Conv2d<Scalar> conv;
    bool normalized = false;
    nn::BatchNorm2d<Scalar> bn;
  };

  DiscriminatorConfig config_;
  nn::ParameterSet<Scalar> params_;
  std::vector<Layer> layers_;
  nn::Conv2d<Scalar> score_;
};

}  // namespace lstfuse
