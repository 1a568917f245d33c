#include "lstfuse/geo.hpp"

#include "lstfuse/io.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace lstfuse {

std::optional<UtmZone> utm_zone(const std::string& crs_id) {
  const int code = epsg_code(crs_id);
  if (code > 32600 && code <= 32660) return UtmZone{code - 32600, true};
  if (code > 32700 && code <= 32760) return UtmZone{code - 32700, false};
  return std::nullopt;
}

std::pair<double, double> utm_forward(double lat_deg, double lon_deg, const UtmZone& zone) {
  if (zone.zone < 1 || zone.zone > 60) throw std::invalid_argument("UTM zone must be in 1..60");
  if (!(std::abs(lat_deg) <= 84.0)) throw std::invalid_argument(fmt::format("latitude {} outside UTM coverage", lat_deg));
  constexpr double a = 6378137.0;
  constexpr double f = 1.0 / 298.257223563;
  constexpr double k0 = 0.9996;
  constexpr double e2 = f * (2.0 - f);
  constexpr double e4 = e2 * e2;
  constexpr double e6 = e4 * e2;
  constexpr double ep2 = e2 / (1.0 - e2);
  constexpr double deg = std::numbers::pi / 180.0;

  const double phi = lat_deg * deg;
  const double lon0 = (6.0 * zone.zone - 183.0) * deg;
  const double s = std::sin(phi), c = std::cos(phi), t = std::tan(phi);
  const double n = a / std::sqrt(1.0 - e2 * s * s);
  const double tt = t * t;
  const double cc = ep2 * c * c;
  const double aa = (lon_deg * deg - lon0) * c;
  const double m = a * ((1.0 - e2 / 4.0 - 3.0 * e4 / 64.0 - 5.0 * e6 / 256.0) * phi -
                        (3.0 * e2 / 8.0 + 3.0 * e4 / 32.0 + 45.0 * e6 / 1024.0) * std::sin(2.0 * phi) +
                        (15.0 * e4 / 256.0 + 45.0 * e6 / 1024.0) * std::sin(4.0 * phi) -
                        (35.0 * e6 / 3072.0) * std::sin(6.0 * phi));
  const double a2 = aa * aa, a3 = a2 * aa, a4 = a3 * aa, a5 = a4 * aa, a6 = a5 * aa;
  const double x = k0 * n * (aa + (1.0 - tt + cc) * a3 / 6.0 + (5.0 - 18.0 * tt + tt * tt + 72.0 * cc - 58.0 * ep2) * a5 / 120.0) +
                   500000.0;
  double y = k0 * (m + n * t *
                           (a2 / 2.0 + (5.0 - tt + 9.0 * cc + 4.0 * cc * cc) * a4 / 24.0 +
                            (61.0 - 58.0 * tt + tt * tt + 600.0 * cc - 330.0 * ep2) * a6 / 720.0));
  if (!zone.north) y += 10000000.0;
  return {x, y};
}

std::optional<std::pair<Index, Index>> pixel_at(const GridSpec& g, double x, double y) {
  const double col = std::floor((x - g.origin_x) / g.pixel_size);
  const double row = std::floor((g.origin_y - y) / g.pixel_size);
  if (col < 0.0 || row < 0.0 || col >= static_cast<double>(g.width) || row >= static_cast<double>(g.height)) {
    return std::nullopt;
  }
  return std::pair<Index, Index>{static_cast<Index>(row), static_cast<Index>(col)};
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw std::runtime_error(fmt::format("{}:{}: '{}' is not a number", path.string(), line, s));
  return v;
}

}  // namespace

std::vector<SensorReading> read_sensor_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open sensor file {}", path.string()));
  std::string line;
  std::size_t lineno = 0;
  std::map<std::string, std::size_t> col;
  const std::vector<std::string> needed{"sensor_id", "lat", "lon", "timestamp_iso8601", "t_a_celsius"};
  std::vector<SensorReading> out;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    if (col.empty()) {
      for (std::size_t i = 0; i < cells.size(); ++i) col[cells[i]] = i;
      for (const auto& k : needed) {
        if (!col.count(k)) throw std::runtime_error(fmt::format("{}: header lacks column '{}'", path.string(), k));
      }
      continue;
    }
    auto cell = [&](const std::string& k) -> const std::string& {
      const std::size_t i = col.at(k);
      if (i >= cells.size()) throw std::runtime_error(fmt::format("{}:{}: missing field '{}'", path.string(), lineno, k));
      return cells[i];
    };
    SensorReading r;
    r.sensor_id = cell("sensor_id");
    r.lat = to_double(cell("lat"), path, lineno);
    r.lon = to_double(cell("lon"), path, lineno);
    r.timestamp = cell("timestamp_iso8601");
    r.air_temperature_c = to_double(cell("t_a_celsius"), path, lineno);
    if (r.timestamp.size() < 10) throw std::runtime_error(fmt::format("{}:{}: bad timestamp '{}'", path.string(), lineno, r.timestamp));
    out.push_back(std::move(r));
  }
  if (col.empty()) throw std::runtime_error(fmt::format("{}: empty sensor file", path.string()));
  return out;
}

std::vector<metrics::SensorSeries> build_sensor_series(const std::vector<SensorReading>& readings,
                                                       const std::vector<DatedPrediction>& predictions) {
  std::map<std::string, const DatedPrediction*> by_date;
  for (const auto& p : predictions) by_date[p.date] = &p;
  std::vector<metrics::SensorSeries> out;
  std::map<std::string, std::size_t> index;
  for (const auto& r : readings) {
    auto it = index.find(r.sensor_id);
    if (it == index.end()) {
      it = index.emplace(r.sensor_id, out.size()).first;
      out.push_back({r.sensor_id, r.lat, r.lon, {}});
    }
    const auto pit = by_date.find(r.timestamp.substr(0, 10));
    if (pit == by_date.end()) continue;
    const Raster& lst = pit->second->lst_k;
    const auto zone = utm_zone(lst.grid().crs_id);
    if (!zone) throw std::runtime_error(fmt::format("sensor lookup needs a UTM grid, got '{}'", lst.grid().crs_id));
    const auto [x, y] = utm_forward(r.lat, r.lon, *zone);
    const auto px = pixel_at(lst.grid(), x, y);
    if (!px || !lst.valid(px->first, px->second)) continue;
    out[it->second].samples.push_back(
        {r.timestamp, r.air_temperature_c, static_cast<double>(lst.band(0)(px->first, px->second)) - metrics::kKelvinOffset});
  }
  return out;
}

}  // namespace lstfuse
