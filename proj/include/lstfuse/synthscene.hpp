#pragma once

#include "lstfuse/dataset.hpp"
#include "lstfuse/raster.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lstfuse {

/// Landcover classes: 0 water, 1 vegetation, 2 urban, 3 bare soil (extra classes reuse the last signature).
struct SynthConfig {
  std::uint64_t seed = 0;
  Index size = 288;
  Index classes = 4;
  double base_temperature_k = 293.0;
  std::vector<double> class_offsets_k{-6.0, -2.5, 6.0, 3.0};
  std::vector<double> class_drift_k{0.5, 1.5, 4.0, 3.0};
  double field_amplitude_k = 1.5;
  double correlation_length = 10.0;  // fine pixels
  double drift_amplitude_k = 2.0;
  double drift_mean_k = 2.0;
  double drift_length = 48.0;
  double ndvi_coupling_k = 6.0;  // LST falls by this much per unit NDVI above the class signature
  double index_noise = 0.04;
  Index coarse_factor = 12;
  double pixel_size = 10.0;
  double origin_x = 440000.0;
  double origin_y = 5310000.0;
  std::string crs_id = "EPSG:32631";

  void validate() const;
};

/// Everything generated for one scene; LST in Kelvin.
struct SynthScene {
  Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> landcover;
  Raster fine_reflectance_t1;  // bands green, red, nir, swir
  Raster mid_reflectance_t1;
  Raster fine_indices_t1;  // NDVI, NDBI, NDWI
  Raster fine_lst_t1;
  Raster fine_lst_t2;  // ground truth
  Raster mid_lst_t1;
  Raster mid_lst_t2;
  Raster coarse_lst_t1;  // native coarse grid
  Raster coarse_lst_t2;
};

SynthScene generate_scene(const SynthConfig& cfg);

/// Smooth zero-mean unit-variance field from Gaussian-filtered white noise.
Plane<float> smooth_field(Index height, Index width, double length, std::uint64_t seed);

struct SynthDatasetSpec {
  SynthConfig base;
  Index train_scenes = 8;
  Index test_scenes = 2;
};

/// Writes GeoTIFFs for each scene and a manifest.json under `dir`; returns the manifest. Scene i uses
/// seed base.seed * 1000 + i; dates are chained so no training reference date equals another target date.
Manifest write_synthetic_dataset(const std::filesystem::path& dir, const SynthDatasetSpec& spec);

}  // namespace lstfuse
