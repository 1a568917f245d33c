#include "lstfuse/indices.hpp"

#include <stdexcept>

namespace lstfuse {

const char* role_name(BandRole role) {
  switch (role) {
    case BandRole::kGreen: return "green";
    case BandRole::kRed: return "red";
    case BandRole::kNir: return "nir";
    case BandRole::kSwir: return "swir";
  }
  return "?";
}

const Raster& BandSet::at(BandRole role) const {
  const auto& b = bands[static_cast<std::size_t>(role)];
  if (!b) throw RasterError(std::string("band set '") + sensor + "' is missing the " + role_name(role) + " band");
  return *b;
}

BandRoles preset_roles(const std::string& sensor) {
  BandRoles r;
  r.sensor = sensor;
  if (sensor == "landsat8") {
    r.band_numbers = {3, 4, 5, 6};
  } else if (sensor == "sentinel2") {
    r.band_numbers = {3, 4, 8, 11};
  } else if (sensor != "custom") {
    throw std::invalid_argument("unknown sensor preset '" + sensor + "'");
  }
  return r;
}

void to_json(nlohmann::json& j, const BandRoles& r) {
  j = nlohmann::json{{"sensor", r.sensor}, {"scale", r.scale}, {"offset", r.offset}};
  for (BandRole role : kBandRoles) j[role_name(role)] = r.band_numbers[static_cast<std::size_t>(role)];
}

void from_json(const nlohmann::json& j, BandRoles& r) {
  r = preset_roles(j.value("sensor", std::string("custom")));
  for (BandRole role : kBandRoles) {
    if (j.contains(role_name(role))) r.band_numbers[static_cast<std::size_t>(role)] = j.at(role_name(role)).get<Index>();
  }
  r.scale = j.value("scale", 1.0);
  r.offset = j.value("offset", 0.0);
}

BandSet band_set_from_stack(const Raster& stack, const BandRoles& roles) {
  BandSet bs;
  bs.sensor = roles.sensor;
  for (BandRole role : kBandRoles) {
    const Index number = roles.band_numbers[static_cast<std::size_t>(role)];
    if (number < 1 || number > stack.bands()) {
      throw RasterError(std::string(role_name(role)) + " band " + std::to_string(number) + " not present in a " +
                        std::to_string(stack.bands()) + "-band stack");
    }
    Raster band = stack.select_band(number - 1);
    if (roles.scale != 1.0 || roles.offset != 0.0) {
      band.band(0) = band.band(0) * static_cast<float>(roles.scale) + static_cast<float>(roles.offset);
    }
    bs.set(role, std::move(band));
  }
  return bs;
}

Raster normalized_difference(const Raster& a, const Raster& b) {
  if (!(a.grid() == b.grid())) throw RasterError("normalized_difference: band grids differ");
  Raster out(a.grid(), 1);
  const Plane<float>& pa = a.band(0);
  const Plane<float>& pb = b.band(0);
  for (Index y = 0; y < a.height(); ++y) {
    for (Index x = 0; x < a.width(); ++x) {
      if (!a.valid(y, x) || !b.valid(y, x)) {
        out.invalidate(y, x);
        continue;
      }
      const double va = pa(y, x), vb = pb(y, x), den = va + vb;
      const double v = den == 0.0 ? 2.0 : (va - vb) / den;
      if (v < -1.0 || v > 1.0) {
        out.invalidate(y, x);
      } else {
        out.band(0)(y, x) = static_cast<float>(v);
      }
    }
  }
  return out;
}

Raster compute_indices(const BandSet& bs) {
  const Raster& green = bs.at(BandRole::kGreen);
  const Raster& red = bs.at(BandRole::kRed);
  const Raster& nir = bs.at(BandRole::kNir);
  const Raster& swir = bs.at(BandRole::kSwir);
  const Raster ndvi = normalized_difference(nir, red);
  const Raster ndbi = normalized_difference(swir, nir);
  const Raster ndwi = normalized_difference(green, nir);
  Mask mask = ndvi.mask() && ndbi.mask() && ndwi.mask();
  return Raster(nir.grid(), {ndvi.band(0), ndbi.band(0), ndwi.band(0)}, std::move(mask));
}

}  // namespace lstfuse
