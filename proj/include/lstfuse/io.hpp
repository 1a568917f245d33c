#pragma once

#include "lstfuse/raster.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lstfuse {

/// Reads a stripped GeoTIFF (8/16-bit integer or 32/64-bit float samples, any band count).
/// Pixels equal to the GDAL nodata value, or NaN, become masked in every band.
Raster read_geotiff(const std::filesystem::path& path);

/// Writes float32, pixel-interleaved, uncompressed, with model tiepoint/scale, EPSG key and nodata "nan".
/// Output bytes depend only on the raster.
void write_geotiff(const std::filesystem::path& path, const Raster& r);

/// "EPSG:32631" -> 32631; 0 when the id has another form.
int epsg_code(const std::string& crs_id);

struct RgbImage {
  Index width = 0;
  Index height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB

  RgbImage() = default;
  RgbImage(Index w, Index h, std::uint8_t fill = 255)
      : width(w), height(h), pixels(static_cast<std::size_t>(w * h * 3), fill) {}
  void set(Index x, Index y, std::array<std::uint8_t, 3> c);
};

void write_png(const std::filesystem::path& path, const RgbImage& image);

/// Maps band 0 through a perceptual blue-to-yellow ramp on [lo, hi]; masked pixels are black.
RgbImage colorize(const Raster& r, double lo, double hi);

}  // namespace lstfuse
