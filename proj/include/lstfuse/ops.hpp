#pragma once

#include "lstfuse/autodiff.hpp"

namespace lstfuse::ad {

// Elementwise arithmetic. Binary ops broadcast numpy-style: each dimension equal or 1.
template <typename Scalar> Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> sub(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> div(const Var<Scalar>& a, const Var<Scalar>& b);
template <typename Scalar> Var<Scalar> add_scalar(const Var<Scalar>& a, Scalar s);
template <typename Scalar> Var<Scalar> scale(const Var<Scalar>& a, Scalar s);
template <typename Scalar> Var<Scalar> square(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> abs(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> pow_scalar(const Var<Scalar>& a, Scalar p);
template <typename Scalar> Var<Scalar> clamp_min(const Var<Scalar>& a, Scalar lo);
template <typename Scalar> Var<Scalar> relu(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> leaky_relu(const Var<Scalar>& a, Scalar slope);
template <typename Scalar> Var<Scalar> sigmoid(const Var<Scalar>& a);

// Reductions.
template <typename Scalar> Var<Scalar> sum(const Var<Scalar>& a);
template <typename Scalar> Var<Scalar> mean(const Var<Scalar>& a);
/// [N,C,H,W] -> [N,C,1,1]
template <typename Scalar> Var<Scalar> mean_spatial(const Var<Scalar>& a);

// Shape manipulation.
template <typename Scalar> Var<Scalar> reshape(const Var<Scalar>& a, Shape s);
template <typename Scalar> Var<Scalar> concat_channels(const Var<Scalar>& a, const Var<Scalar>& b);
/// Stacks b's samples after a's.
template <typename Scalar> Var<Scalar> concat_batch(const Var<Scalar>& a, const Var<Scalar>& b);
/// Samples [start, start + count).
template <typename Scalar> Var<Scalar> slice_batch(const Var<Scalar>& a, Index start, Index count);

// Spatial ops.
/// weight [Cout,Cin,k,k]; bias [1,Cout,1,1] or undefined; zero padding.
template <typename Scalar>
Var<Scalar> conv2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias, Index stride,
                   Index pad);
/// weight [Cin,Cout,k,k]; output side (in-1)*stride - 2*pad + k.
template <typename Scalar>
Var<Scalar> conv_transpose2d(const Var<Scalar>& x, const Var<Scalar>& weight, const Var<Scalar>& bias,
                             Index stride, Index pad);
/// Non-overlapping factor x factor mean pooling.
template <typename Scalar> Var<Scalar> avg_pool(const Var<Scalar>& x, Index factor);
/// Depthwise same-size filtering with reflective padding.
template <typename Scalar> Var<Scalar> filter_reflect(const Var<Scalar>& x, const Plane<Scalar>& kernel);
/// Depthwise filtering without padding; output side = in - k + 1.
template <typename Scalar> Var<Scalar> filter_valid(const Var<Scalar>& x, const Plane<Scalar>& kernel);

/// Running statistics of one batch-normalization layer.
template <typename Scalar>
struct BatchNormState {
  Var<Scalar> running_mean;  // [1,C,1,1]
  Var<Scalar> running_var;   // [1,C,1,1]
  Scalar momentum = Scalar(0.1);
  Scalar eps = Scalar(1e-5);
};

/// Training mode normalizes with batch statistics and updates the running ones.
template <typename Scalar>
Var<Scalar> batch_norm(const Var<Scalar>& x, const Var<Scalar>& gamma, const Var<Scalar>& beta,
                       BatchNormState<Scalar>& state, bool training);

/// Per-pixel cosine of the channel vectors; each norm is floored at eps. Output [N,1,H,W].
template <typename Scalar>
Var<Scalar> cosine_similarity(const Var<Scalar>& u, const Var<Scalar>& v, Scalar eps);

/// Per-sample, per-channel mean/std transfer from style onto content; content std floored at eps.
template <typename Scalar>
Var<Scalar> adain(const Var<Scalar>& content, const Var<Scalar>& style, Scalar eps);

}  // namespace lstfuse::ad
