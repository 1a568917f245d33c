#pragma once

#include "lstfuse/tensor.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lstfuse {

class RasterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// North-up pixel grid in a projected CRS. The origin is the outer top-left corner.
struct GridSpec {
  Index width = 0;
  Index height = 0;
  double pixel_size = 0.0;
  double origin_x = 0.0;
  double origin_y = 0.0;
  std::string crs_id;

  void validate() const;

  double min_x() const { return origin_x; }
  double max_x() const { return origin_x + static_cast<double>(width) * pixel_size; }
  double max_y() const { return origin_y; }
  double min_y() const { return origin_y - static_cast<double>(height) * pixel_size; }

  // Continuous pixel coordinates with pixel centers at integers.
  double col_of(double x) const { return (x - origin_x) / pixel_size - 0.5; }
  double row_of(double y) const { return (origin_y - y) / pixel_size - 0.5; }
  double x_of(double col) const { return origin_x + (col + 0.5) * pixel_size; }
  double y_of(double row) const { return origin_y - (row + 0.5) * pixel_size; }

  bool overlaps(const GridSpec& other) const;
  GridSpec coarsened(Index factor) const;
  GridSpec refined(Index factor) const;
  GridSpec window(Index row, Index col, Index rows, Index cols) const;

  bool operator==(const GridSpec&) const = default;
};

using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Multi-band float grid with a shared validity mask. Invalid pixels hold NaN in every band.
class Raster {
 public:
  static constexpr float kNoData = std::numeric_limits<float>::quiet_NaN();

  Raster() = default;
  Raster(GridSpec grid, Index bands, float fill = 0.0f);
  Raster(GridSpec grid, std::vector<Plane<float>> bands);
  Raster(GridSpec grid, std::vector<Plane<float>> bands, Mask mask);

  const GridSpec& grid() const { return grid_; }
  Index bands() const { return static_cast<Index>(bands_.size()); }
  Index width() const { return grid_.width; }
  Index height() const { return grid_.height; }

  Plane<float>& band(Index b) { return bands_.at(static_cast<std::size_t>(b)); }
  const Plane<float>& band(Index b) const { return bands_.at(static_cast<std::size_t>(b)); }
  const Mask& mask() const { return mask_; }

  bool valid(Index row, Index col) const { return mask_(row, col); }
  void invalidate(Index row, Index col);
  void set_valid(Index row, Index col, std::span<const float> values);

  Index valid_count() const { return mask_.count(); }
  bool fully_valid() const { return mask_.all(); }

  Raster select_band(Index b) const;
  Raster window(Index row, Index col, Index rows, Index cols) const;

 private:
  void check_layout() const;

  GridSpec grid_;
  std::vector<Plane<float>> bands_;
  Mask mask_;
};

/// Non-overlapping factor x factor means (the 3x3 pooling identity relating fine and mid LST).
Raster block_average(const Raster& r, Index factor);

/// Keys cubic convolution (a = -0.5) onto an arbitrary target grid; edge samples are clamped.
Raster resample_bicubic(const Raster& r, const GridSpec& target);

/// Each factor x factor block of the output repeats one input pixel.
Raster replicate_upsample(const Raster& r, Index factor);

/// Fills masked pixels with the mean of originally-valid pixels in the smallest square window
/// (3x3, 5x5, ...) containing at least one of them.
Raster fill_gaps_adaptive(const Raster& r);

inline Index reflect_index(Index i, Index n) {
  if (n == 1) return 0;
  const Index period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

inline Index gaussian_kernel_side(double sigma) {
  return 2 * static_cast<Index>(std::ceil(3.0 * sigma)) + 1;
}

/// Sampled isotropic Gaussian of side 2*ceil(3 sigma)+1, renormalized to unit sum.
template <typename Scalar>
Plane<Scalar> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  const Index k = gaussian_kernel_side(sigma);
  const Index r = k / 2;
  Plane<Scalar> kern(k, k);
  const double norm = 1.0 / (2.0 * M_PI * sigma * sigma);
  double total = 0.0;
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < k; ++j) {
      const double dx = static_cast<double>(j - r);
      const double dy = static_cast<double>(i - r);
      const double g = norm * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      kern(i, j) = static_cast<Scalar>(g);
      total += g;
    }
  }
  kern /= static_cast<Scalar>(total);
  return kern;
}

// Same-size correlation with reflective padding; the kernel is symmetric so this is a convolution.
template <typename Scalar, typename In, typename Out>
void smooth_plane_reflect(const In& in, const Plane<Scalar>& kern, Out& out) {
  const Index h = in.rows(), w = in.cols(), k = kern.rows(), r = k / 2;
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      Scalar acc(0);
      for (Index a = 0; a < k; ++a) {
        const Index yy = reflect_index(y + a - r, h);
        for (Index b = 0; b < k; ++b) acc += kern(a, b) * in(yy, reflect_index(x + b - r, w));
      }
      out(y, x) = acc;
    }
  }
}

// Adjoint of smooth_plane_reflect: accumulates into grad_in.
template <typename Scalar, typename GradOut, typename GradIn>
void smooth_plane_reflect_adjoint(const GradOut& grad_out, const Plane<Scalar>& kern, GradIn& grad_in) {
  const Index h = grad_out.rows(), w = grad_out.cols(), k = kern.rows(), r = k / 2;
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      const Scalar g = grad_out(y, x);
      for (Index a = 0; a < k; ++a) {
        const Index yy = reflect_index(y + a - r, h);
        for (Index b = 0; b < k; ++b) grad_in(yy, reflect_index(x + b - r, w)) += kern(a, b) * g;
      }
    }
  }
}

/// Depthwise Gaussian smoothing with reflective padding; output shape equals input shape.
template <typename Scalar>
Tensor<Scalar> gaussian_smooth(const Tensor<Scalar>& x, double sigma) {
  const Plane<Scalar> kern = gaussian_kernel<Scalar>(sigma);
  const Shape& s = x.shape();
  if (s.h < kern.rows() || s.w < kern.cols()) {
    throw std::invalid_argument("gaussian_smooth: input " + s.str() + " smaller than kernel side " +
                                std::to_string(kern.rows()));
  }
  Tensor<Scalar> out(s);
  for (Index n = 0; n < s.n; ++n) {
    for (Index c = 0; c < s.c; ++c) {
      auto dst = out.plane(n, c);
      smooth_plane_reflect<Scalar>(x.plane(n, c), kern, dst);
    }
  }
  return out;
}

}  // namespace lstfuse
