#include "lstfuse/generator.hpp"

#include "lstfuse/raster.hpp"

#include <stdexcept>
#include <string>

namespace lstfuse {

void GeneratorConfig::validate() const {
  if (channels.size() < 2) throw std::invalid_argument("generator needs at least 2 levels");
  for (Index c : channels) {
    if (c <= 0) throw std::invalid_argument("generator channel widths must be positive");
  }
  if (residual_blocks < 0) throw std::invalid_argument("residual_blocks must be non-negative");
  if (patch_size <= 0 || patch_size % (Index{1} << (levels() - 1)) != 0) {
    throw std::invalid_argument("patch_size " + std::to_string(patch_size) + " must be divisible by 2^(levels-1)");
  }
  if (patch_size % 3 != 0) throw std::invalid_argument("patch_size must be divisible by 3");
  if (patch_size < gaussian_kernel_side(smoothing_sigma)) {
    throw std::invalid_argument("patch_size smaller than the smoothing kernel");
  }
  if (!(smoothing_sigma > 0.0)) throw std::invalid_argument("smoothing_sigma must be positive");
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = nlohmann::json{{"channels", c.channels},
                     {"residual_blocks", c.residual_blocks},
                     {"patch_size", c.patch_size},
                     {"leaky_slope", c.leaky_slope},
                     {"smoothing_sigma", c.smoothing_sigma},
                     {"coarse_residual", c.coarse_residual}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  c = GeneratorConfig{};
  if (j.contains("channels")) c.channels = j.at("channels").get<std::vector<Index>>();
  if (j.contains("residual_blocks")) c.residual_blocks = j.at("residual_blocks").get<Index>();
  if (j.contains("patch_size")) c.patch_size = j.at("patch_size").get<Index>();
  if (j.contains("leaky_slope")) c.leaky_slope = j.at("leaky_slope").get<double>();
  if (j.contains("smoothing_sigma")) c.smoothing_sigma = j.at("smoothing_sigma").get<double>();
  if (j.contains("coarse_residual")) c.coarse_residual = j.at("coarse_residual").get<bool>();
}

template <typename Scalar>
ad::Var<Scalar> cosine_similarity_map(const ad::Var<Scalar>& u, const ad::Var<Scalar>& v) {
  return ad::cosine_similarity(u, v, static_cast<Scalar>(kCosineEps));
}

template <typename Scalar>
FeaturePyramid<Scalar> refine_features(const FeaturePyramid<Scalar>& lst_mid, const FeaturePyramid<Scalar>& idx_mid,
                                       const FeaturePyramid<Scalar>& idx_fine) {
  if (lst_mid.size() != idx_mid.size() || lst_mid.size() != idx_fine.size()) {
    throw ShapeError("refine_features: pyramid level counts differ");
  }
  FeaturePyramid<Scalar> out;
  out.reserve(lst_mid.size());
  for (std::size_t i = 0; i < lst_mid.size(); ++i) {
    const ad::Var<Scalar> sim = cosine_similarity_map(idx_mid[i], idx_fine[i]);
    const Shape& f = lst_mid[i].shape();
    require_shape(sim.shape() == Shape{f.n, 1, f.h, f.w},
                  "refine_features: level " + std::to_string(i) + " spatial shapes differ");
    out.push_back(ad::mul(lst_mid[i], sim));
  }
  return out;
}

template <typename Scalar>
FeaturePyramid<Scalar> adain(const FeaturePyramid<Scalar>& content, const FeaturePyramid<Scalar>& style) {
  if (content.size() != style.size()) throw ShapeError("adain: pyramid level counts differ");
  FeaturePyramid<Scalar> out;
  out.reserve(content.size());
  for (std::size_t i = 0; i < content.size(); ++i) {
    out.push_back(ad::adain(content[i], style[i], static_cast<Scalar>(kAdainEps)));
  }
  return out;
}

template <typename Scalar>
Generator<Scalar>::Generator(GeneratorConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  nn::Rng rng(seed);
  const Index levels = config_.levels();
  const auto& ch = config_.channels;
  const double slope = config_.leaky_slope;

  for (int e = 0; e < 5; ++e) {
    Encoder& enc = encoders_[e];
    const std::string name = "encoder" + std::to_string(e + 1);
    enc.in_channels = e < 2 ? 3 : 1;
    enc.stem = nn::Conv2d<Scalar>(params_, name + ".stem", enc.in_channels, ch[0], 3, 1, 1, rng);
    enc.blocks.resize(static_cast<std::size_t>(levels));
    for (Index l = 0; l < levels; ++l) {
      const std::string lname = name + ".level" + std::to_string(l);
      if (l > 0) enc.down.emplace_back(params_, lname + ".down", ch[l - 1], ch[l], 3, 2, 1, rng);
      for (Index b = 0; b < config_.residual_blocks; ++b) {
        enc.blocks[l].emplace_back(params_, lname + ".res" + std::to_string(b), ch[l], nn::Activation::kLeakyRelu,
                                   slope, rng);
      }
    }
  }

  for (Index l = 0; l < levels; ++l) {
    const std::string name = "attention.level" + std::to_string(l);
    AttentionLevel a;
    a.project = nn::Conv2d<Scalar>(params_, name + ".project", ch[l], ch[l], 1, 1, 0, rng);
    a.project_bn = nn::BatchNorm2d<Scalar>(params_, name + ".project_bn", ch[l]);
    a.mask = nn::Conv2d<Scalar>(params_, name + ".mask", ch[l], ch[l], 1, 1, 0, rng);
    a.mask_bn = nn::BatchNorm2d<Scalar>(params_, name + ".mask_bn", ch[l]);
    attention_.push_back(std::move(a));
  }

  decoder_.resize(static_cast<std::size_t>(levels));
  for (Index l = levels - 1; l >= 0; --l) {
    const std::string name = "decoder.level" + std::to_string(l);
    DecoderLevel& d = decoder_[l];
    if (l < levels - 1) d.up = nn::ConvTranspose2d<Scalar>(params_, name + ".up", ch[l + 1], ch[l], 4, 2, 1, rng);
    d.merge = nn::Conv2d<Scalar>(params_, name + ".merge", 2 * ch[l], ch[l], 3, 1, 1, rng);
    for (Index b = 0; b < config_.residual_blocks; ++b) {
      d.blocks.emplace_back(params_, name + ".res" + std::to_string(b), ch[l], nn::Activation::kRelu, slope, rng);
    }
  }
  head_ = nn::Conv2d<Scalar>(params_, "decoder.head", ch[0], 1, 3, 1, 1, rng, 0.1);
  smoothing_kernel_ = gaussian_kernel<Scalar>(config_.smoothing_sigma);
}

template <typename Scalar>
void Generator<Scalar>::check_pyramid(const FeaturePyramid<Scalar>& p, const char* what) const {
  if (static_cast<Index>(p.size()) != config_.levels()) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(config_.levels()) + " levels, got " +
                     std::to_string(p.size()));
  }
  for (Index l = 0; l < config_.levels(); ++l) {
    const Shape& s = p[l].shape();
    const Index side = config_.level_size(l);
    require_shape(s.c == config_.channels[l] && s.h == side && s.w == side,
                  std::string(what) + ": level " + std::to_string(l) + " has shape " + s.str());
  }
}

template <typename Scalar>
FeaturePyramid<Scalar> Generator<Scalar>::encode(const ad::Var<Scalar>& x, EncoderId id,
                                                 const nn::ForwardContext&) const {
  const int e = static_cast<int>(id) - 1;
  if (e < 0 || e >= 5) throw std::invalid_argument("encoder id must be in 1..5");
  const Encoder& enc = encoders_[e];
  const Shape& s = x.shape();
  if (s.c != enc.in_channels) {
    throw ShapeError("encoder " + std::to_string(e + 1) + " expects " + std::to_string(enc.in_channels) +
                     " channels, got " + std::to_string(s.c));
  }
  require_shape(s.h == config_.patch_size && s.w == config_.patch_size,
                "encoder input must be " + std::to_string(config_.patch_size) + "x" +
                    std::to_string(config_.patch_size) + ", got " + s.str());
  const Scalar slope = static_cast<Scalar>(config_.leaky_slope);
  FeaturePyramid<Scalar> out;
  ad::Var<Scalar> h = ad::leaky_relu(enc.stem(x), slope);
  for (Index l = 0; l < config_.levels(); ++l) {
    if (l > 0) h = ad::leaky_relu(enc.down[l - 1](h), slope);
    for (const auto& block : enc.blocks[l]) h = block(h);
    out.push_back(h);
  }
  return out;
}

template <typename Scalar>
FeaturePyramid<Scalar> Generator<Scalar>::temporal_attention(const FeaturePyramid<Scalar>& coarse_t1,
                                                             const FeaturePyramid<Scalar>& coarse_t2,
                                                             const FeaturePyramid<Scalar>& normalized,
                                                             const nn::ForwardContext& ctx) const {
  check_pyramid(coarse_t1, "temporal_attention(coarse_t1)");
  check_pyramid(coarse_t2, "temporal_attention(coarse_t2)");
  check_pyramid(normalized, "temporal_attention(normalized)");
  FeaturePyramid<Scalar> out;
  for (Index l = 0; l < config_.levels(); ++l) {
    require_shape(coarse_t1[l].shape() == coarse_t2[l].shape() && coarse_t2[l].shape() == normalized[l].shape(),
                  "temporal_attention: batch sizes differ at level " + std::to_string(l));
    ad::Var<Scalar> theta;
    if (ctx.forced_attention) {
      theta = ad::Var<Scalar>::constant(
          Tensor<Scalar>(coarse_t2[l].shape(), static_cast<Scalar>(*ctx.forced_attention)));
    } else {
      const AttentionLevel& a = attention_[l];
      // Both dates share one normalization pass so their mean difference survives.
      const Index n = coarse_t1[l].shape().n;
      const ad::Var<Scalar> both = a.project_bn(a.project(ad::concat_batch(coarse_t1[l], coarse_t2[l])), ctx.training);
      const ad::Var<Scalar> delta = ad::sub(ad::slice_batch(both, 0, n), ad::slice_batch(both, n, n));
      theta = ad::sigmoid(a.mask_bn(a.mask(delta), ctx.training));
    }
    const ad::Var<Scalar> keep = ad::add_scalar(ad::scale(theta, Scalar(-1)), Scalar(1));
    out.push_back(ad::add(ad::mul(coarse_t2[l], theta), ad::mul(normalized[l], keep)));
  }
  return out;
}

template <typename Scalar>
ad::Var<Scalar> Generator<Scalar>::decode(const FeaturePyramid<Scalar>& fused, const FeaturePyramid<Scalar>& coarse_t2,
                                          const nn::ForwardContext&) const {
  check_pyramid(fused, "decode(fused)");
  check_pyramid(coarse_t2, "decode(coarse_t2)");
  const Index deepest = config_.levels() - 1;
  ad::Var<Scalar> h = ad::relu(decoder_[deepest].merge(ad::concat_channels(fused[deepest], coarse_t2[deepest])));
  for (const auto& block : decoder_[deepest].blocks) h = block(h);
  for (Index l = deepest - 1; l >= 0; --l) {
    const DecoderLevel& d = decoder_[l];
    h = ad::relu(d.up(h));
    h = ad::relu(d.merge(ad::concat_channels(h, fused[l])));
    for (const auto& block : d.blocks) h = block(h);
  }
  return head_(h);
}

template <typename Scalar>
GeneratorOutput<Scalar> Generator<Scalar>::forward(const GeneratorInputs<Scalar>& in,
                                                   const nn::ForwardContext& ctx) const {
  const FeaturePyramid<Scalar> idx_fine = encode(in.fine_indices, EncoderId::kFineIndices, ctx);
  const FeaturePyramid<Scalar> idx_mid = encode(in.mid_indices, EncoderId::kMidIndices, ctx);
  const FeaturePyramid<Scalar> lst_mid = encode(in.mid_lst_t1, EncoderId::kMidLst, ctx);
  const FeaturePyramid<Scalar> coarse_t1 = encode(in.coarse_lst_t1, EncoderId::kCoarseLstT1, ctx);
  const FeaturePyramid<Scalar> coarse_t2 = encode(in.coarse_lst_t2, EncoderId::kCoarseLstT2, ctx);

  const FeaturePyramid<Scalar> refined = refine_features(lst_mid, idx_mid, idx_fine);
  const FeaturePyramid<Scalar> normalized = adain(refined, coarse_t2);
  const FeaturePyramid<Scalar> fused = temporal_attention(coarse_t1, coarse_t2, normalized, ctx);

  GeneratorOutput<Scalar> out;
  out.decoded = decode(fused, coarse_t2, ctx);
  if (config_.coarse_residual) out.decoded = ad::add(out.decoded, in.coarse_lst_t2);
  out.smoothed = ad::filter_reflect(out.decoded, smoothing_kernel_);
  return out;
}

template ad::Var<float> cosine_similarity_map(const ad::Var<float>&, const ad::Var<float>&);
template ad::Var<double> cosine_similarity_map(const ad::Var<double>&, const ad::Var<double>&);
template FeaturePyramid<float> refine_features(const FeaturePyramid<float>&, const FeaturePyramid<float>&,
                                               const FeaturePyramid<float>&);
template FeaturePyramid<double> refine_features(const FeaturePyramid<double>&, const FeaturePyramid<double>&,
                                                const FeaturePyramid<double>&);
template FeaturePyramid<float> adain(const FeaturePyramid<float>&, const FeaturePyramid<float>&);
template FeaturePyramid<double> adain(const FeaturePyramid<double>&, const FeaturePyramid<double>&);
template class Generator<float>;
template class Generator<double>;

}  // namespace lstfuse
