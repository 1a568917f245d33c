#include "lstfuse/raster.hpp"

#include <algorithm>
#include <array>

namespace lstfuse {

void GridSpec::validate() const {
  if (width <= 0 || height <= 0) {
    throw RasterError("grid dimensions must be positive, got " + std::to_string(width) + "x" +
                      std::to_string(height));
  }
  if (!(pixel_size > 0.0)) throw RasterError("grid pixel_size must be positive");
}

bool GridSpec::overlaps(const GridSpec& other) const {
  return min_x() < other.max_x() && other.min_x() < max_x() && min_y() < other.max_y() &&
         other.min_y() < max_y();
}

GridSpec GridSpec::coarsened(Index factor) const {
  GridSpec g = *this;
  g.width = width / factor;
  g.height = height / factor;
  g.pixel_size = pixel_size * static_cast<double>(factor);
  return g;
}

GridSpec GridSpec::refined(Index factor) const {
  GridSpec g = *this;
  g.width = width * factor;
  g.height = height * factor;
  g.pixel_size = pixel_size / static_cast<double>(factor);
  return g;
}

GridSpec GridSpec::window(Index row, Index col, Index rows, Index cols) const {
  GridSpec g = *this;
  g.width = cols;
  g.height = rows;
  g.origin_x = origin_x + static_cast<double>(col) * pixel_size;
  g.origin_y = origin_y - static_cast<double>(row) * pixel_size;
  return g;
}

Raster::Raster(GridSpec grid, Index bands, float fill) : grid_(std::move(grid)) {
  grid_.validate();
  if (bands <= 0) throw RasterError("raster needs at least one band");
  bands_.assign(static_cast<std::size_t>(bands), Plane<float>::Constant(grid_.height, grid_.width, fill));
  mask_ = Mask::Constant(grid_.height, grid_.width, true);
}

Raster::Raster(GridSpec grid, std::vector<Plane<float>> bands)
    : grid_(std::move(grid)), bands_(std::move(bands)) {
  grid_.validate();
  mask_ = Mask::Constant(grid_.height, grid_.width, true);
  check_layout();
  for (const auto& b : bands_) {
    if (!b.isFinite().all()) throw RasterError("all-valid raster constructed with non-finite values");
  }
}

Raster::Raster(GridSpec grid, std::vector<Plane<float>> bands, Mask mask)
    : grid_(std::move(grid)), bands_(std::move(bands)), mask_(std::move(mask)) {
  grid_.validate();
  check_layout();
  for (auto& b : bands_) b = mask_.select(b, Plane<float>::Constant(b.rows(), b.cols(), kNoData));
}

void Raster::check_layout() const {
  if (bands_.empty()) throw RasterError("raster needs at least one band");
  if (mask_.rows() != grid_.height || mask_.cols() != grid_.width) {
    throw RasterError("mask shape does not match grid");
  }
  for (const auto& b : bands_) {
    if (b.rows() != grid_.height || b.cols() != grid_.width) {
      throw RasterError("band shape " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()) +
                        " does not match grid " + std::to_string(grid_.height) + "x" +
                        std::to_string(grid_.width));
    }
  }
}

void Raster::invalidate(Index row, Index col) {
  mask_(row, col) = false;
  for (auto& b : bands_) b(row, col) = kNoData;
}

void Raster::set_valid(Index row, Index col, std::span<const float> values) {
  if (static_cast<Index>(values.size()) != bands()) throw RasterError("set_valid: band count mismatch");
  mask_(row, col) = true;
  for (std::size_t b = 0; b < bands_.size(); ++b) bands_[b](row, col) = values[b];
}

Raster Raster::select_band(Index b) const { return Raster(grid_, {band(b)}, mask_); }

Raster Raster::window(Index row, Index col, Index rows, Index cols) const {
  if (row < 0 || col < 0 || row + rows > height() || col + cols > width()) {
    throw RasterError("window outside raster");
  }
  std::vector<Plane<float>> out;
  out.reserve(bands_.size());
  for (const auto& b : bands_) out.emplace_back(b.block(row, col, rows, cols));
  return Raster(grid_.window(row, col, rows, cols), std::move(out), mask_.block(row, col, rows, cols));
}

Raster block_average(const Raster& r, Index factor) {
  if (factor <= 0) throw RasterError("block_average: factor must be positive");
  if (r.width() % factor != 0 || r.height() % factor != 0) {
    throw RasterError("block_average: " + std::to_string(r.height()) + "x" + std::to_string(r.width()) +
                      " not divisible by factor " + std::to_string(factor));
  }
  if (!r.fully_valid()) throw RasterError("block_average: raster has masked pixels; gap-fill first");
  const GridSpec g = r.grid().coarsened(factor);
  const double inv = 1.0 / static_cast<double>(factor * factor);
  std::vector<Plane<float>> out;
  for (Index b = 0; b < r.bands(); ++b) {
    const Plane<float>& src = r.band(b);
    Plane<float> dst(g.height, g.width);
    for (Index y = 0; y < g.height; ++y) {
      for (Index x = 0; x < g.width; ++x) {
        double acc = 0.0;
        for (Index i = 0; i < factor; ++i) {
          for (Index j = 0; j < factor; ++j) acc += src(y * factor + i, x * factor + j);
        }
        dst(y, x) = static_cast<float>(acc * inv);
      }
    }
    out.push_back(std::move(dst));
  }
  return Raster(g, std::move(out));
}

namespace {

double keys_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

struct Taps {
  std::array<Index, 4> index;
  std::array<double, 4> weight;
};

Taps cubic_taps(double pos, Index n) {
  const double base = std::floor(pos);
  const double frac = pos - base;
  Taps t{};
  for (int k = 0; k < 4; ++k) {
    const Index i = static_cast<Index>(base) + k - 1;
    t.index[k] = std::clamp<Index>(i, 0, n - 1);
    t.weight[k] = keys_weight(frac - static_cast<double>(k - 1));
  }
  return t;
}

}  // namespace

Raster resample_bicubic(const Raster& r, const GridSpec& target) {
  target.validate();
  if (!r.fully_valid()) throw RasterError("resample_bicubic: raster has masked pixels; gap-fill first");
  if (!r.grid().overlaps(target)) throw RasterError("resample_bicubic: target grid does not overlap source");
  const GridSpec& src = r.grid();
  std::vector<Taps> cols(static_cast<std::size_t>(target.width));
  std::vector<Taps> rows(static_cast<std::size_t>(target.height));
  for (Index x = 0; x < target.width; ++x) cols[x] = cubic_taps(src.col_of(target.x_of(x)), src.width);
  for (Index y = 0; y < target.height; ++y) rows[y] = cubic_taps(src.row_of(target.y_of(y)), src.height);

  std::vector<Plane<float>> out;
  for (Index b = 0; b < r.bands(); ++b) {
    const Plane<float>& s = r.band(b);
    Plane<float> dst(target.height, target.width);
    for (Index y = 0; y < target.height; ++y) {
      const Taps& ty = rows[y];
      for (Index x = 0; x < target.width; ++x) {
        const Taps& tx = cols[x];
        double acc = 0.0;
        for (int i = 0; i < 4; ++i) {
          double row_acc = 0.0;
          for (int j = 0; j < 4; ++j) row_acc += tx.weight[j] * s(ty.index[i], tx.index[j]);
          acc += ty.weight[i] * row_acc;
        }
        dst(y, x) = static_cast<float>(acc);
      }
    }
    out.push_back(std::move(dst));
  }
  return Raster(target, std::move(out));
}

Raster replicate_upsample(const Raster& r, Index factor) {
  if (factor <= 0) throw RasterError("replicate_upsample: factor must be positive");
  const GridSpec g = r.grid().refined(factor);
  std::vector<Plane<float>> out;
  for (Index b = 0; b < r.bands(); ++b) {
    const Plane<float>& s = r.band(b);
    Plane<float> dst(g.height, g.width);
    for (Index y = 0; y < g.height; ++y) {
      for (Index x = 0; x < g.width; ++x) dst(y, x) = s(y / factor, x / factor);
    }
    out.push_back(std::move(dst));
  }
  Mask m(g.height, g.width);
  for (Index y = 0; y < g.height; ++y) {
    for (Index x = 0; x < g.width; ++x) m(y, x) = r.mask()(y / factor, x / factor);
  }
  return Raster(g, std::move(out), std::move(m));
}

Raster fill_gaps_adaptive(const Raster& r) {
  if (r.valid_count() == 0) throw RasterError("fill_gaps_adaptive: raster has no valid pixel");
  if (r.fully_valid()) return r;
  const Index h = r.height(), w = r.width();
  const Mask& valid = r.mask();
  std::vector<Plane<float>> bands;
  for (Index b = 0; b < r.bands(); ++b) bands.push_back(r.band(b));
  std::vector<double> sums(static_cast<std::size_t>(r.bands()));
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      if (valid(y, x)) continue;
      for (Index radius = 1;; ++radius) {
        const Index y0 = std::max<Index>(0, y - radius), y1 = std::min<Index>(h - 1, y + radius);
        const Index x0 = std::max<Index>(0, x - radius), x1 = std::min<Index>(w - 1, x + radius);
        std::fill(sums.begin(), sums.end(), 0.0);
        Index count = 0;
        for (Index yy = y0; yy <= y1; ++yy) {
          for (Index xx = x0; xx <= x1; ++xx) {
            if (!valid(yy, xx)) continue;
            ++count;
            for (Index b = 0; b < r.bands(); ++b) sums[b] += r.band(b)(yy, xx);
          }
        }
        if (count > 0) {
          for (Index b = 0; b < r.bands(); ++b) {
            bands[b](y, x) = static_cast<float>(sums[b] / static_cast<double>(count));
          }
          break;
        }
      }
    }
  }
  return Raster(r.grid(), std::move(bands));
}

}  // namespace lstfuse
