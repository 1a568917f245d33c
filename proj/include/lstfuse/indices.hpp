#pragma once

#include "lstfuse/raster.hpp"

#include "json.hpp"

#include <array>
#include <optional>
#include <string>

namespace lstfuse {

enum class BandRole { kGreen = 0, kRed = 1, kNir = 2, kSwir = 3 };

inline constexpr std::array<BandRole, 4> kBandRoles{BandRole::kGreen, BandRole::kRed, BandRole::kNir, BandRole::kSwir};

const char* role_name(BandRole role);

/// Reflectance bands by role, all on one grid.
struct BandSet {
  std::string sensor;
  std::array<std::optional<Raster>, 4> bands;

  const Raster& at(BandRole role) const;
  void set(BandRole role, Raster r) { bands[static_cast<std::size_t>(role)] = std::move(r); }
};

/// Where each role lives in a multi-band reflectance file, plus the ingest scaling
/// reflectance = scale * stored + offset.
struct BandRoles {
  std::string sensor = "custom";
  std::array<Index, 4> band_numbers{1, 2, 3, 4};  // 1-based, ordered like kBandRoles
  double scale = 1.0;
  double offset = 0.0;
};

/// Landsat 8 OLI: green B3, red B4, NIR B5, SWIR1 B6 in a B1..B7 stack.
/// Sentinel-2 MSI: green B3, red B4, NIR B8, SWIR B11 in the stack B1..B8, B8A, B9, B11, B12.
BandRoles preset_roles(const std::string& sensor);

void to_json(nlohmann::json& j, const BandRoles& r);
/// Accepts {"sensor": "landsat8"} for a preset, optionally overridden by "green"/"red"/"nir"/"swir" band numbers.
void from_json(const nlohmann::json& j, BandRoles& r);

BandSet band_set_from_stack(const Raster& stack, const BandRoles& roles);

/// (a - b) / (a + b). Pixels where a + b = 0 or the ratio leaves [-1, 1] are masked.
Raster normalized_difference(const Raster& a, const Raster& b);

/// Three bands in the order NDVI, NDBI, NDWI. A pixel masked in any index is masked in all three.
Raster compute_indices(const BandSet& bs);

}  // namespace lstfuse
