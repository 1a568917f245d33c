#pragma once

#include "lstfuse/nn.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace lstfuse {

struct GeneratorConfig {
  std::vector<Index> channels{32, 64, 128, 192, 256};
  Index residual_blocks = 2;
  Index patch_size = 96;
  double leaky_slope = 0.2;
  double smoothing_sigma = 1.0;
  // Decoder output is added to the target-date coarse input instead of standing alone.
  bool coarse_residual = true;

  Index levels() const { return static_cast<Index>(channels.size()); }
  Index level_size(Index level) const { return patch_size >> level; }
  void validate() const;
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

/// One multi-channel feature map per level; level i has spatial side patch_size / 2^i.
template <typename Scalar>
using FeaturePyramid = std::vector<ad::Var<Scalar>>;

inline constexpr double kCosineEps = 1e-8;
inline constexpr double kAdainEps = 1e-5;

/// Per-pixel cosine between channel vectors, norms floored at 1e-8. Output [N,1,H,W].
template <typename Scalar>
ad::Var<Scalar> cosine_similarity_map(const ad::Var<Scalar>& u, const ad::Var<Scalar>& v);

/// Level-wise F_mid * cos(L_mid, L_fine): refines mid-resolution LST features with index agreement.
template <typename Scalar>
FeaturePyramid<Scalar> refine_features(const FeaturePyramid<Scalar>& lst_mid, const FeaturePyramid<Scalar>& idx_mid,
                                       const FeaturePyramid<Scalar>& idx_fine);

/// Level-wise adaptive instance normalization of content onto style statistics.
template <typename Scalar>
FeaturePyramid<Scalar> adain(const FeaturePyramid<Scalar>& content, const FeaturePyramid<Scalar>& style);

/// The five generator inputs, all on the fine grid, normalized to [-1, 1].
template <typename Scalar>
struct GeneratorInputs {
  ad::Var<Scalar> fine_indices;   // [B,3,P,P] fine-sensor NDVI/NDBI/NDWI at t1
  ad::Var<Scalar> mid_indices;    // [B,3,P,P] mid-sensor indices at t1
  ad::Var<Scalar> mid_lst_t1;     // [B,1,P,P]
  ad::Var<Scalar> coarse_lst_t1;  // [B,1,P,P]
  ad::Var<Scalar> coarse_lst_t2;  // [B,1,P,P]
};

template <typename Scalar>
struct GeneratorOutput {
  ad::Var<Scalar> decoded;   // before noise suppression
  ad::Var<Scalar> smoothed;  // the prediction
};

enum class EncoderId { kFineIndices = 1, kMidIndices = 2, kMidLst = 3, kCoarseLstT1 = 4, kCoarseLstT2 = 5 };

template <typename Scalar>
class Generator {
 public:
  Generator(GeneratorConfig config, std::uint64_t seed);

  const GeneratorConfig& config() const { return config_; }
  nn::ParameterSet<Scalar>& parameters() { return params_; }
  const nn::ParameterSet<Scalar>& parameters() const { return params_; }

  FeaturePyramid<Scalar> encode(const ad::Var<Scalar>& x, EncoderId id, const nn::ForwardContext& ctx) const;

  /// Blends target-date coarse features with normalized spatial features through a learned sigmoid mask.
  FeaturePyramid<Scalar> temporal_attention(const FeaturePyramid<Scalar>& coarse_t1,
                                            const FeaturePyramid<Scalar>& coarse_t2,
                                            const FeaturePyramid<Scalar>& normalized,
                                            const nn::ForwardContext& ctx) const;

  ad::Var<Scalar> decode(const FeaturePyramid<Scalar>& fused, const FeaturePyramid<Scalar>& coarse_t2,
                         const nn::ForwardContext& ctx) const;

  GeneratorOutput<Scalar> forward(const GeneratorInputs<Scalar>& in, const nn::ForwardContext& ctx) const;

 private:
  struct Encoder {
    Index in_channels = 0;
    nn::Conv2d<Scalar> stem;
    std::vector<nn::Conv2d<Scalar>> down;  // levels 1..N-1
    std::vector<std::vector<nn::ResidualBlock<Scalar>>> blocks;
  };
  struct AttentionLevel {
    nn::Conv2d<Scalar> project;
    nn::BatchNorm2d<Scalar> project_bn;
    nn::Conv2d<Scalar> mask;
    nn::BatchNorm2d<Scalar> mask_bn;
  };
  struct DecoderLevel {
    nn::ConvTranspose2d<Scalar> up;  // unused at the deepest level
    nn::Conv2d<Scalar> merge;
    std::vector<nn::ResidualBlock<Scalar>> blocks;
  };

  void check_pyramid(const FeaturePyramid<Scalar>& p, const char* what) const;

  GeneratorConfig config_;
  nn::ParameterSet<Scalar> params_;
  std::array<Encoder, 5> encoders_;
  std::vector<AttentionLevel> attention_;
  std::vector<DecoderLevel> decoder_;
  nn::Conv2d<Scalar> head_;
  Plane<Scalar> smoothing_kernel_;
};

}  // namespace lstfuse
