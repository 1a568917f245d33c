#pragma once

#include "lstfuse/dataset.hpp"
#include "lstfuse/generator.hpp"

#include <vector>

namespace lstfuse {

/// Tile origins every `stride`, with one more tile flush against the far edge when the grid leaves a remainder.
std::vector<Index> tile_origins(Index extent, Index size, Index stride);

/// Blend weight for offset i inside a tile of side `size`: min(i, size - 1 - i) + 1.
double tent_weight(Index i, Index size);

struct InferenceOptions {
  Index stride = 48;
  Index batch = 8;
};

/// Whole-scene prediction in normalized units [1,1,H,W]. Tiles run in inference mode and overlapping
/// predictions are averaged with separable tent weights.
Tensor<float> predict_normalized(const Generator<float>& gen, const PreparedScene& scene,
                                 const InferenceOptions& opt = {});

/// Kelvin prediction on the scene's fine grid.
Raster predict_scene(const Generator<float>& gen, const PreparedScene& scene, const Normalization& norm,
                     const InferenceOptions& opt = {});

/// The bicubic baseline: target-date coarse LST resampled to the fine grid, in Kelvin.
Raster bicubic_baseline(const PreparedScene& scene, const Normalization& norm);

}  // namespace lstfuse
