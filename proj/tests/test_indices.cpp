#include "lstfuse/indices.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace lstfuse;

namespace {

GridSpec grid(Index w, Index h) { return {w, h, 10.0, 0.0, 0.0, "EPSG:32631"}; }

Raster constant(Index w, Index h, float v) { return Raster(grid(w, h), 1, v); }

}  // namespace

TEST(Indices, NormalizedDifferenceByHand) {
  const Raster nd = normalized_difference(constant(2, 2, 0.4f), constant(2, 2, 0.1f));
  EXPECT_NEAR(nd.band(0)(1, 1), 0.3 / 0.5, 1e-6);
  const Raster same = normalized_difference(constant(2, 2, 0.2f), constant(2, 2, 0.2f));
  EXPECT_EQ(same.band(0)(0, 0), 0.0f);
}

TEST(Indices, ZeroSumAndNegativeReflectanceAreMasked) {
  Plane<float> a(1, 3), b(1, 3);
  a << 0.0f, 0.3f, -0.2f;
  b << 0.0f, 0.1f, 0.1f;
  const Raster nd = normalized_difference(Raster(grid(3, 1), {a}), Raster(grid(3, 1), {b}));
  EXPECT_FALSE(nd.valid(0, 0));
  EXPECT_TRUE(nd.valid(0, 1));
  EXPECT_FALSE(nd.valid(0, 2));  // (-0.3)/(-0.1) = 3 lies outside [-1, 1]
}

TEST(Indices, GridMismatchRejected) {
  EXPECT_THROW(normalized_difference(constant(2, 2, 0.1f), constant(3, 2, 0.1f)), std::exception);
}

TEST(Indices, FormulasAndRange) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(0.01f, 0.6f);
  BandSet bs;
  bs.sensor = "test";
  std::array<Plane<float>, 4> p;
  for (auto& plane : p) {
    plane.resize(6, 6);
    for (Index i = 0; i < plane.size(); ++i) plane.data()[i] = u(rng);
  }
  for (BandRole r : kBandRoles) bs.set(r, Raster(grid(6, 6), {p[static_cast<std::size_t>(r)]}));
  const Raster idx = compute_indices(bs);
  ASSERT_EQ(idx.bands(), 3);
  const auto& g = p[0];
  const auto& red = p[1];
  const auto& nir = p[2];
  const auto& swir = p[3];
  for (Index i = 0; i < 6; ++i) {
    for (Index j = 0; j < 6; ++j) {
      EXPECT_NEAR(idx.band(0)(i, j), (nir(i, j) - red(i, j)) / (nir(i, j) + red(i, j)), 1e-6);
      EXPECT_NEAR(idx.band(1)(i, j), (swir(i, j) - nir(i, j)) / (swir(i, j) + nir(i, j)), 1e-6);
      EXPECT_NEAR(idx.band(2)(i, j), (g(i, j) - nir(i, j)) / (g(i, j) + nir(i, j)), 1e-6);
      for (Index b = 0; b < 3; ++b) {
        EXPECT_GE(idx.band(b)(i, j), -1.0f);
        EXPECT_LE(idx.band(b)(i, j), 1.0f);
      }
    }
  }
}

TEST(Indices, MaskSharedAcrossIndices) {
  BandSet bs;
  for (BandRole r : kBandRoles) bs.set(r, constant(3, 3, 0.2f));
  Raster red = constant(3, 3, 0.2f);
  red.invalidate(1, 1);
  bs.set(BandRole::kRed, red);
  const Raster idx = compute_indices(bs);
  EXPECT_FALSE(idx.valid(1, 1));
  EXPECT_TRUE(std::isnan(idx.band(1)(1, 1)));  // NDBI does not use red but is masked too
  EXPECT_TRUE(idx.valid(0, 0));
}

TEST(Indices, MissingRoleNamed) {
  BandSet bs;
  bs.set(BandRole::kRed, constant(2, 2, 0.1f));
  try {
    compute_indices(bs);
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_NE(std::string(e.what()).find("green"), std::string::npos) << e.what();
  }
}

TEST(Indices, PresetsAndStackSelection) {
  EXPECT_EQ(preset_roles("landsat8").band_numbers, (std::array<Index, 4>{3, 4, 5, 6}));
  EXPECT_EQ(preset_roles("sentinel2").band_numbers, (std::array<Index, 4>{3, 4, 8, 11}));
  EXPECT_THROW(preset_roles("avhrr"), std::invalid_argument);

  std::vector<Plane<float>> planes;
  for (int b = 1; b <= 7; ++b) planes.push_back(Plane<float>::Constant(2, 2, static_cast<float>(b)));
  BandRoles roles = preset_roles("landsat8");
  roles.scale = 0.5;
  roles.offset = 1.0;
  const BandSet bs = band_set_from_stack(Raster(grid(2, 2), planes), roles);
  EXPECT_FLOAT_EQ(bs.at(BandRole::kNir).band(0)(0, 0), 0.5f * 5.0f + 1.0f);
  EXPECT_FLOAT_EQ(bs.at(BandRole::kSwir).band(0)(1, 1), 0.5f * 6.0f + 1.0f);
  EXPECT_THROW(band_set_from_stack(Raster(grid(2, 2), planes), preset_roles("sentinel2")), RasterError);

  nlohmann::json j = {{"sensor", "sentinel2"}, {"swir", 12}};
  const BandRoles parsed = j.get<BandRoles>();
  EXPECT_EQ(parsed.band_numbers, (std::array<Index, 4>{3, 4, 8, 12}));
  const nlohmann::json back = parsed;
  EXPECT_EQ(back.get<BandRoles>().band_numbers, parsed.band_numbers);
}
