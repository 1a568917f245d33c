#include "lstfuse/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace lstfuse::nn {

namespace {

template <typename Scalar>
Tensor<Scalar> he_normal(Shape shape, Index fan_in, double gain, Rng& rng) {
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<Scalar> t(shape);
  for (Index i = 0; i < t.size(); ++i) t.array()[i] = static_cast<Scalar>(dist(rng));
  return t;
}

}  // namespace

template <typename Scalar>
Var<Scalar> ParameterSet<Scalar>::add(const std::string& name, Tensor<Scalar> init, bool trainable) {
  if (find(name) != nullptr) throw std::invalid_argument("duplicate parameter name: " + name);
  Var<Scalar> v = trainable ? Var<Scalar>::parameter(std::move(init)) : Var<Scalar>::constant(std::move(init));
  entries_.push_back({name, v, trainable});
  return v;
}

template <typename Scalar>
Var<Scalar> ParameterSet<Scalar>::add_parameter(const std::string& name, Tensor<Scalar> init) {
  return add(name, std::move(init), true);
}

template <typename Scalar>
Var<Scalar> ParameterSet<Scalar>::add_buffer(const std::string& name, Tensor<Scalar> init) {
  return add(name, std::move(init), false);
}

template <typename Scalar>
std::vector<Var<Scalar>> ParameterSet<Scalar>::trainable() const {
  std::vector<Var<Scalar>> out;
  for (const auto& e : entries_) {
    if (e.trainable) out.push_back(e.var);
  }
  return out;
}

template <typename Scalar>
const typename ParameterSet<Scalar>::Entry* ParameterSet<Scalar>::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <typename Scalar>
void ParameterSet<Scalar>::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

template <typename Scalar>
Index ParameterSet<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& e : entries_) {
    if (e.trainable) n += e.var.value().size();
  }
  return n;
}

template <typename Scalar>
bool ParameterSet<Scalar>::all_finite() const {
  for (const auto& e : entries_) {
    if (!e.var.value().array().isFinite().all()) return false;
  }
  return true;
}

template <typename Scalar>
Conv2d<Scalar>::Conv2d(ParameterSet<Scalar>& params, const std::string& name, Index in, Index out, Index kernel,
                       Index stride_, Index pad_, Rng& rng, double gain, bool with_bias)
    : stride(stride_), pad(pad_) {
  weight = params.add_parameter(name + ".weight",
                                he_normal<Scalar>(Shape{out, in, kernel, kernel}, in * kernel * kernel, gain, rng));
  if (with_bias) bias = params.add_parameter(name + ".bias", Tensor<Scalar>(Shape{1, out, 1, 1}));
}

template <typename Scalar>
Var<Scalar> Conv2d<Scalar>::operator()(const Var<Scalar>& x) const {
  return ad::conv2d(x, weight, bias, stride, pad);
}

template <typename Scalar>
ConvTranspose2d<Scalar>::ConvTranspose2d(ParameterSet<Scalar>& params, const std::string& name, Index in,
                                         Index out, Index kernel, Index stride_, Index pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
  // Each output pixel receives (kernel/stride)^2 taps per input channel.
  const Index fan_in = in * (kernel / stride) * (kernel / stride);
  weight = params.add_parameter(name + ".weight", he_normal<Scalar>(Shape{in, out, kernel, kernel}, fan_in, 1.0, rng));
  bias = params.add_parameter(name + ".bias", Tensor<Scalar>(Shape{1, out, 1, 1}));
}

template <typename Scalar>
Var<Scalar> ConvTranspose2d<Scalar>::operator()(const Var<Scalar>& x) const {
  return ad::conv_transpose2d(x, weight, bias, stride, pad);
}

template <typename Scalar>
BatchNorm2d<Scalar>::BatchNorm2d(ParameterSet<Scalar>& params, const std::string& name, Index channels) {
  gamma = params.add_parameter(name + ".gamma", Tensor<Scalar>(Shape{1, channels, 1, 1}, Scalar(1)));
  beta = params.add_parameter(name + ".beta", Tensor<Scalar>(Shape{1, channels, 1, 1}));
  state.running_mean = params.add_buffer(name + ".running_mean", Tensor<Scalar>(Shape{1, channels, 1, 1}));
  state.running_var = params.add_buffer(name + ".running_var", Tensor<Scalar>(Shape{1, channels, 1, 1}, Scalar(1)));
}

template <typename Scalar>
Var<Scalar> BatchNorm2d<Scalar>::operator()(const Var<Scalar>& x, bool training) const {
  ad::BatchNormState<Scalar> shared = state;  // shares the running-stat nodes
  return ad::batch_norm(x, gamma, beta, shared, training);
}

template <typename Scalar>
ResidualBlock<Scalar>::ResidualBlock(ParameterSet<Scalar>& params, const std::string& name, Index channels,
                                     Activation act_, double slope_, Rng& rng)
    : first(params, name + ".conv1", channels, channels, 3, 1, 1, rng),
      second(params, name + ".conv2", channels, channels, 3, 1, 1, rng, 0.1),
      act(act_),
      slope(slope_) {}

template <typename Scalar>
Var<Scalar> ResidualBlock<Scalar>::operator()(const Var<Scalar>& x) const {
  return ad::add(x, second(activate(first(x), act, slope)));
}

template class ParameterSet<float>;
template class ParameterSet<double>;
template struct Conv2d<float>;
template struct Conv2d<double>;
template struct ConvTranspose2d<float>;
template struct ConvTranspose2d<double>;
template struct BatchNorm2d<float>;
template struct BatchNorm2d<double>;
template struct ResidualBlock<float>;
template struct ResidualBlock<double>;

}  // namespace lstfuse::nn
