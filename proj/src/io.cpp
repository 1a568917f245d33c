#include "lstfuse/io.hpp"

#include <png.h>
#include <tiffio.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>
#include <mutex>

namespace lstfuse {

namespace {

constexpr ttag_t kModelPixelScale = 33550;
constexpr ttag_t kModelTiepoint = 33922;
constexpr ttag_t kGeoKeyDirectory = 34735;
constexpr ttag_t kGdalNoData = 42113;

constexpr std::uint16_t kGtModelType = 1024;
constexpr std::uint16_t kGtRasterType = 1025;
constexpr std::uint16_t kProjectedCsType = 3072;

const TIFFFieldInfo kGeoFields[] = {
    {kModelPixelScale, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char*>("ModelPixelScaleTag")},
    {kModelTiepoint, -1, -1, TIFF_DOUBLE, FIELD_CUSTOM, 1, 1, const_cast<char*>("ModelTiepointTag")},
    {kGeoKeyDirectory, -1, -1, TIFF_SHORT, FIELD_CUSTOM, 1, 1, const_cast<char*>("GeoKeyDirectoryTag")},
    {kGdalNoData, -1, -1, TIFF_ASCII, FIELD_CUSTOM, 1, 0, const_cast<char*>("GDALNoDataValue")},
};

TIFFExtendProc parent_extender = nullptr;

void geo_extender(TIFF* tif) {
  TIFFMergeFieldInfo(tif, kGeoFields, sizeof(kGeoFields) / sizeof(kGeoFields[0]));
  if (parent_extender) parent_extender(tif);
}

void register_geo_tags() {
  static std::once_flag once;
  std::call_once(once, [] {
    parent_extender = TIFFSetTagExtender(geo_extender);
    TIFFSetWarningHandler(nullptr);
  });
}

struct TiffCloser {
  void operator()(TIFF* t) const { TIFFClose(t); }
};
using TiffPtr = std::unique_ptr<TIFF, TiffCloser>;

TiffPtr open_tiff(const std::filesystem::path& path, const char* mode) {
  register_geo_tags();
  TiffPtr t(TIFFOpen(path.c_str(), mode));
  if (!t) throw RasterError("cannot open GeoTIFF " + path.string());
  return t;
}

template <typename T>
float sample_at(const unsigned char* buf, std::size_t i) {
  T v;
  std::memcpy(&v, buf + i * sizeof(T), sizeof(T));
  return static_cast<float>(v);
}

}  // namespace

int epsg_code(const std::string& crs_id) {
  if (crs_id.rfind("EPSG:", 0) != 0) return 0;
  try {
    return std::stoi(crs_id.substr(5));
  } catch (const std::exception&) {
    return 0;
  }
}

Raster read_geotiff(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw RasterError("GeoTIFF not found: " + path.string());
  TiffPtr tif = open_tiff(path, "r");
  TIFF* t = tif.get();
  std::uint32_t width = 0, height = 0;
  std::uint16_t spp = 1, bps = 0, format = SAMPLEFORMAT_UINT, planar = PLANARCONFIG_CONTIG;
  TIFFGetField(t, TIFFTAG_IMAGEWIDTH, &width);
  TIFFGetField(t, TIFFTAG_IMAGELENGTH, &height);
  TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLESPERPIXEL, &spp);
  TIFFGetFieldDefaulted(t, TIFFTAG_BITSPERSAMPLE, &bps);
  TIFFGetFieldDefaulted(t, TIFFTAG_SAMPLEFORMAT, &format);
  TIFFGetFieldDefaulted(t, TIFFTAG_PLANARCONFIG, &planar);
  if (TIFFIsTiled(t)) throw RasterError(path.string() + ": tiled GeoTIFFs are not supported; re-save with strips");

  GridSpec grid;
  grid.width = width;
  grid.height = height;
  std::uint32_t count = 0;
  double* scale = nullptr;
  double* tie = nullptr;
  if (!TIFFGetField(t, kModelPixelScale, &count, &scale) || count < 2) {
    throw RasterError(path.string() + ": missing ModelPixelScale tag");
  }
  if (std::abs(scale[0] - scale[1]) > 1e-9 * scale[0]) {
    throw RasterError(path.string() + ": non-square pixels are not supported");
  }
  grid.pixel_size = scale[0];
  if (!TIFFGetField(t, kModelTiepoint, &count, &tie) || count < 6) {
    throw RasterError(path.string() + ": missing ModelTiepoint tag");
  }
  grid.origin_x = tie[3] - tie[0] * grid.pixel_size;
  grid.origin_y = tie[4] + tie[1] * grid.pixel_size;
  std::uint16_t* keys = nullptr;
  if (TIFFGetField(t, kGeoKeyDirectory, &count, &keys) && count >= 4) {
    const std::uint32_t n = std::min<std::uint32_t>(keys[3], (count - 4) / 4);
    for (std::uint32_t k = 0; k < n; ++k) {
      const std::uint16_t* e = keys + 4 + 4 * k;
      if (e[0] == kProjectedCsType && e[1] == 0) grid.crs_id = "EPSG:" + std::to_string(e[3]);
    }
  }
  double nodata = std::nan("");
  char* nodata_text = nullptr;
  if (TIFFGetField(t, kGdalNoData, &nodata_text) && nodata_text) nodata = std::strtod(nodata_text, nullptr);

  auto convert = [&](const unsigned char* buf, std::size_t i) -> float {
    if (format == SAMPLEFORMAT_IEEEFP && bps == 32) return sample_at<float>(buf, i);
    if (format == SAMPLEFORMAT_IEEEFP && bps == 64) return sample_at<double>(buf, i);
    if (format == SAMPLEFORMAT_INT && bps == 16) return sample_at<std::int16_t>(buf, i);
    if (format == SAMPLEFORMAT_UINT && bps == 16) return sample_at<std::uint16_t>(buf, i);
    if (format == SAMPLEFORMAT_UINT && bps == 8) return sample_at<std::uint8_t>(buf, i);
    throw RasterError(path.string() + ": unsupported sample format " + std::to_string(format) + "/" +
                      std::to_string(bps) + " bits");
  };

  std::vector<Plane<float>> bands(spp, Plane<float>(grid.height, grid.width));
  Mask mask = Mask::Constant(grid.height, grid.width, true);
  std::vector<unsigned char> line(static_cast<std::size_t>(TIFFScanlineSize(t)));
  auto take = [&](Index b, Index y, Index x, float v) {
    if (std::isnan(v) || (!std::isnan(nodata) && v == static_cast<float>(nodata))) mask(y, x) = false;
    bands[b](y, x) = v;
  };
  if (planar == PLANARCONFIG_CONTIG) {
    for (std::uint32_t y = 0; y < height; ++y) {
      if (TIFFReadScanline(t, line.data(), y, 0) < 0) throw RasterError(path.string() + ": read error");
      for (std::uint32_t x = 0; x < width; ++x) {
        for (std::uint16_t b = 0; b < spp; ++b) take(b, y, x, convert(line.data(), std::size_t{x} * spp + b));
      }
    }
  } else {
    for (std::uint16_t b = 0; b < spp; ++b) {
      for (std::uint32_t y = 0; y < height; ++y) {
        if (TIFFReadScanline(t, line.data(), y, b) < 0) throw RasterError(path.string() + ": read error");
        for (std::uint32_t x = 0; x < width; ++x) take(b, y, x, convert(line.data(), x));
      }
    }
  }
  return Raster(grid, std::move(bands), std::move(mask));
}

void write_geotiff(const std::filesystem::path& path, const Raster& r) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  TiffPtr tif = open_tiff(path, "w");
  TIFF* t = tif.get();
  const auto spp = static_cast<std::uint16_t>(r.bands());
  TIFFSetField(t, TIFFTAG_IMAGEWIDTH, static_cast<std::uint32_t>(r.width()));
  TIFFSetField(t, TIFFTAG_IMAGELENGTH, static_cast<std::uint32_t>(r.height()));
  TIFFSetField(t, TIFFTAG_SAMPLESPERPIXEL, spp);
  TIFFSetField(t, TIFFTAG_BITSPERSAMPLE, 32);
  TIFFSetField(t, TIFFTAG_SAMPLEFORMAT, SAMPLEFORMAT_IEEEFP);
  TIFFSetField(t, TIFFTAG_PLANARCONFIG, PLANARCONFIG_CONTIG);
  TIFFSetField(t, TIFFTAG_PHOTOMETRIC, PHOTOMETRIC_MINISBLACK);
  TIFFSetField(t, TIFFTAG_COMPRESSION, COMPRESSION_NONE);
  TIFFSetField(t, TIFFTAG_ROWSPERSTRIP, 16);
  if (spp > 1) {
    std::vector<std::uint16_t> extra(spp - 1, EXTRASAMPLE_UNSPECIFIED);
    TIFFSetField(t, TIFFTAG_EXTRASAMPLES, static_cast<std::uint16_t>(extra.size()), extra.data());
  }
  const GridSpec& g = r.grid();
  double scale[3] = {g.pixel_size, g.pixel_size, 0.0};
  double tie[6] = {0.0, 0.0, 0.0, g.origin_x, g.origin_y, 0.0};
  TIFFSetField(t, kModelPixelScale, 3, scale);
  TIFFSetField(t, kModelTiepoint, 6, tie);
  std::vector<std::uint16_t> keys{1, 1, 0, 2, kGtModelType, 0, 1, 1, kGtRasterType, 0, 1, 1};
  if (const int code = epsg_code(g.crs_id); code > 0) {
    keys[3] = 3;
    keys.insert(keys.end(), {kProjectedCsType, 0, 1, static_cast<std::uint16_t>(code)});
  }
  TIFFSetField(t, kGeoKeyDirectory, static_cast<std::uint32_t>(keys.size()), keys.data());
  TIFFSetField(t, kGdalNoData, "nan");

  std::vector<float> line(static_cast<std::size_t>(r.width()) * spp);
  for (Index y = 0; y < r.height(); ++y) {
    for (Index x = 0; x < r.width(); ++x) {
      for (Index b = 0; b < spp; ++b) line[static_cast<std::size_t>(x * spp + b)] = r.band(b)(y, x);
    }
    if (TIFFWriteScanline(t, line.data(), static_cast<std::uint32_t>(y), 0) < 0) {
      throw RasterError("write error in " + path.string());
    }
  }
}

void RgbImage::set(Index x, Index y, std::array<std::uint8_t, 3> c) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  std::copy(c.begin(), c.end(), pixels.begin() + (y * width + x) * 3);
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw std::runtime_error("libpng initialization failed");
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Index y = 0; y < image.height; ++y) {
    png_write_row(png, image.pixels.data() + y * image.width * 3);
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RgbImage colorize(const Raster& r, double lo, double hi) {
  // Anchors of a blue-purple-orange-yellow ramp, evenly spaced.
  static constexpr std::array<std::array<double, 3>, 6> kRamp{{{13, 8, 135},
                                                               {106, 0, 168},
                                                               {177, 42, 144},
                                                               {225, 100, 98},
                                                               {252, 166, 54},
                                                               {240, 249, 33}}};
  RgbImage img(r.width(), r.height(), 0);
  const double span = hi > lo ? hi - lo : 1.0;
  for (Index y = 0; y < r.height(); ++y) {
    for (Index x = 0; x < r.width(); ++x) {
      if (!r.valid(y, x)) continue;
      const double u = std::clamp((r.band(0)(y, x) - lo) / span, 0.0, 1.0) * (kRamp.size() - 1);
      const auto i = std::min(static_cast<std::size_t>(u), kRamp.size() - 2);
      const double f = u - static_cast<double>(i);
      std::array<std::uint8_t, 3> c{};
      for (int k = 0; k < 3; ++k) {
        c[k] = static_cast<std::uint8_t>(std::lround(kRamp[i][k] * (1.0 - f) + kRamp[i + 1][k] * f));
      }
      img.set(x, y, c);
    }
  }
  return img;
}

}  // namespace lstfuse
