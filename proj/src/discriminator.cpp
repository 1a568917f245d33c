#include "lstfuse/discriminator.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace lstfuse {

namespace {

Index conv_out(Index in, Index stride) { return (in + 2 - 4) / stride + 1; }

}  // namespace

void DiscriminatorConfig::validate() const {
  if (channels.empty()) throw std::invalid_argument("discriminator needs at least one layer");
  for (Index c : channels) {
    if (c <= 0) throw std::invalid_argument("discriminator channel widths must be positive");
  }
  if (output_size() < 1) {
    throw std::invalid_argument("discriminator input " + std::to_string(input_size) + " too small for " +
                                std::to_string(channels.size()) + " layers");
  }
}

Index DiscriminatorConfig::output_size() const {
  Index s = input_size;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (s < 3) return 0;
    s = conv_out(s, i + 1 < channels.size() ? 2 : 1);
  }
  if (s < 3) return 0;
  return conv_out(s, 1);
}

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = nlohmann::json{{"channels", c.channels}, {"leaky_slope", c.leaky_slope}, {"input_size", c.input_size}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  c = DiscriminatorConfig{};
  if (j.contains("channels")) c.channels = j.at("channels").get<std::vector<Index>>();
  if (j.contains("leaky_slope")) c.leaky_slope = j.at("leaky_slope").get<double>();
  if (j.contains("input_size")) c.input_size = j.at("input_size").get<Index>();
}

template <typename Scalar>
Discriminator<Scalar>::Discriminator(DiscriminatorConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  nn::Rng rng(seed);
  Index in = 2;
  for (std::size_t i = 0; i < config_.channels.size(); ++i) {
    const std::string name = "layer" + std::to_string(i);
    const Index stride = i + 1 < config_.channels.size() ? 2 : 1;
    Layer layer;
    layer.normalized = i > 0;
    layer.conv = nn::Conv2d<Scalar>(params_, name + ".conv", in, config_.channels[i], 4, stride, 1, rng, 1.0,
                                    !layer.normalized);
    if (layer.normalized) layer.bn = nn::BatchNorm2d<Scalar>(params_, name + ".bn", config_.channels[i]);
    layers_.push_back(std::move(layer));
    in = config_.channels[i];
  }
  score_ = nn::Conv2d<Scalar>(params_, "score", in, 1, 4, 1, 1, rng, 0.5);
  // Start midway between the real and fake targets.
  score_.bias.mutable_value().array().setConstant(Scalar(0.5));
}

template <typename Scalar>
ad::Var<Scalar> Discriminator<Scalar>::forward(const ad::Var<Scalar>& lst_mid, const ad::Var<Scalar>& condition,
                                               const nn::ForwardContext& ctx) const {
  const Shape& a = lst_mid.shape();
  const Shape& b = condition.shape();
  require_shape(a == b, "discriminator: LST " + a.str() + " and condition " + b.str() + " differ");
  require_shape(a.c == 1 && a.h == config_.input_size && a.w == config_.input_size,
                "discriminator: expected [B,1," + std::to_string(config_.input_size) + "," +
                    std::to_string(config_.input_size) + "], got " + a.str());
  const Scalar slope = static_cast<Scalar>(config_.leaky_slope);
  ad::Var<Scalar> h = ad::concat_channels(lst_mid, condition);
  for (const Layer& layer : layers_) {
    h = layer.conv(h);
    if (layer.normalized) h = layer.bn(h, ctx.training);
    h = ad::leaky_relu(h, slope);
  }
  return score_(h);
}

template <typename Scalar>
ScorePair<Scalar> Discriminator<Scalar>::forward_pair(const ad::Var<Scalar>& real, const ad::Var<Scalar>& fake,
                                                      const ad::Var<Scalar>& condition,
                                                      const nn::ForwardContext& ctx) const {
  require_shape(real.shape() == fake.shape(), "discriminator: real " + real.shape().str() + " and fake " +
                                                  fake.shape().str() + " differ");
  const Index n = real.shape().n;
  const ad::Var<Scalar> scores =
      forward(ad::concat_batch(real, fake), ad::concat_batch(condition, condition), ctx);
  return {ad::slice_batch(scores, 0, n), ad::slice_batch(scores, n, n)};
}

template <typename Scalar>
Tensor<Scalar> Discriminator<Scalar>::probability(const Tensor<Scalar>& scores) {
  Tensor<Scalar> out(scores.shape());
  out.array() = Scalar(1) / (Scalar(1) + (-scores.array()).exp());
  return out;
}

template class Discriminator<float>;
template class Discriminator<double>;

}  // namespace lstfuse
