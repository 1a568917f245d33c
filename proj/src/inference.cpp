#include "lstfuse/inference.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <memory>

namespace lstfuse {

std::vector<Index> tile_origins(Index extent, Index size, Index stride) {
  if (size <= 0 || stride <= 0) throw std::invalid_argument("tile size and stride must be positive");
  if (extent < size) throw std::invalid_argument(fmt::format("scene side {} is smaller than the tile side {}", extent, size));
  if (stride > size) throw std::invalid_argument("tile stride larger than the tile leaves gaps");
  std::vector<Index> out = patch_origins(extent, size, stride);
  if (out.back() + size < extent) out.push_back(extent - size);
  return out;
}

double tent_weight(Index i, Index size) { return static_cast<double>(std::min(i, size - 1 - i) + 1); }

Tensor<float> predict_normalized(const Generator<float>& gen, const PreparedScene& scene, const InferenceOptions& opt) {
  const Index p = gen.config().patch_size;
  if (opt.stride % 3 != 0 || opt.batch <= 0) throw std::invalid_argument("stride must be a multiple of 3, batch positive");
  const std::vector<Index> rows = tile_origins(scene.height(), p, opt.stride);
  const std::vector<Index> cols = tile_origins(scene.width(), p, opt.stride);

  // Non-owning handle so the scene can go through the batch assembler.
  std::vector<std::shared_ptr<const PreparedScene>> scenes{
      std::shared_ptr<const PreparedScene>(std::shared_ptr<const PreparedScene>(), &scene)};
  std::vector<PatchRef> refs;
  for (Index r : rows) {
    for (Index c : cols) {
      if (r % 3 != 0 || c % 3 != 0) throw std::invalid_argument("scene sides must be multiples of 3");
      refs.push_back({0, r, c});
    }
  }

  std::vector<double> w1(static_cast<std::size_t>(p));
  for (Index i = 0; i < p; ++i) w1[static_cast<std::size_t>(i)] = tent_weight(i, p);
  Plane<double> acc = Plane<double>::Zero(scene.height(), scene.width());
  Plane<double> wsum = Plane<double>::Zero(scene.height(), scene.width());

  const nn::ForwardContext ctx{};
  for (std::size_t start = 0; start < refs.size(); start += static_cast<std::size_t>(opt.batch)) {
    const std::size_t end = std::min(refs.size(), start + static_cast<std::size_t>(opt.batch));
    const TrainingBatch batch = assemble_batch(scenes, std::span<const PatchRef>(refs).subspan(start, end - start), p);
    GeneratorInputs<float> in{ad::Var<float>::constant(batch.fine_indices), ad::Var<float>::constant(batch.mid_indices),
                              ad::Var<float>::constant(batch.mid_lst_t1), ad::Var<float>::constant(batch.coarse_t1),
                              ad::Var<float>::constant(batch.coarse_t2)};
    const Tensor<float> out = gen.forward(in, ctx).smoothed.value();
    for (std::size_t k = start; k < end; ++k) {
      const PatchRef& r = refs[k];
      const auto tile = out.plane(static_cast<Index>(k - start), 0);
      for (Index y = 0; y < p; ++y) {
        for (Index x = 0; x < p; ++x) {
          const double w = w1[static_cast<std::size_t>(y)] * w1[static_cast<std::size_t>(x)];
          acc(r.row + y, r.col + x) += w * static_cast<double>(tile(y, x));
          wsum(r.row + y, r.col + x) += w;
        }
      }
    }
  }

  Tensor<float> result(Shape{1, 1, scene.height(), scene.width()});
  result.plane(0, 0) = (acc / wsum).cast<float>();
  return result;
}

Raster predict_scene(const Generator<float>& gen, const PreparedScene& scene, const Normalization& norm,
                     const InferenceOptions& opt) {
  const Tensor<float> t = predict_normalized(gen, scene, opt);
  return denormalize_lst(Raster(scene.fine_grid, {Plane<float>(t.plane(0, 0))}), norm.lo_k, norm.hi_k);
}

Raster bicubic_baseline(const PreparedScene& scene, const Normalization& norm) {
  return denormalize_lst(Raster(scene.fine_grid, {Plane<float>(scene.coarse_t2.plane(0, 0))}), norm.lo_k, norm.hi_k);
}

}  // namespace lstfuse
