#pragma once

#include "lstfuse/metrics.hpp"
#include "lstfuse/raster.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lstfuse {

struct UtmZone {
  int zone = 0;
  bool north = true;
};

/// Zone for EPSG 326xx / 327xx (WGS 84 / UTM); nullopt for anything else.
std::optional<UtmZone> utm_zone(const std::string& crs_id);

/// WGS 84 geographic degrees to UTM easting/northing in meters (transverse Mercator series, k0 0.9996).
std::pair<double, double> utm_forward(double lat_deg, double lon_deg, const UtmZone& zone);

/// Pixel (row, col) holding the projected point, or nullopt when it falls outside the grid.
std::optional<std::pair<Index, Index>> pixel_at(const GridSpec& g, double x, double y);

struct SensorReading {
  std::string sensor_id;
  double lat = 0.0;
  double lon = 0.0;
  std::string timestamp;  // ISO 8601
  double air_temperature_c = 0.0;
};

/// Columns sensor_id, lat, lon, timestamp_iso8601, t_a_celsius; a header row is required.
std::vector<SensorReading> read_sensor_csv(const std::filesystem::path& path);

struct DatedPrediction {
  std::string date;  // YYYY-MM-DD
  Raster lst_k;      // fine grid
};

/// Pairs each reading with the predicted pixel under the sensor on the reading's date. Readings whose
/// date has no prediction, or whose pixel is off-grid or masked, are skipped. One series per sensor,
/// in order of first appearance.
std::vector<metrics::SensorSeries> build_sensor_series(const std::vector<SensorReading>& readings,
                                                       const std::vector<DatedPrediction>& predictions);

}  // namespace lstfuse
