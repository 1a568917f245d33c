#include "lstfuse/geo.hpp"
#include "lstfuse/plot.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace lstfuse;
using fixtures::TempDir;

// Reference coordinates below were produced once with PROJ (EPSG:4326 -> EPSG:326xx/327xx).
TEST(Utm, MatchesReferenceProjection) {
  struct Case {
    double lat, lon;
    int zone;
    bool north;
    double e, n;
  };
  const Case cases[] = {
      {47.9, 1.9, 31, true, 417787.0004, 5305771.3299},
      {45.0, 3.0, 31, true, 500000.0000, 4982950.4002},
      {47.9, 5.5, 31, true, 686842.9427, 5308211.1549},
      {43.2, 0.1, 31, true, 264387.4132, 4787108.4129},
      {-33.9, 15.5, 33, false, 546228.1763, 6248819.2302},
  };
  for (const auto& c : cases) {
    const auto [e, n] = utm_forward(c.lat, c.lon, {c.zone, c.north});
    EXPECT_NEAR(e, c.e, 0.01) << c.lat << "," << c.lon;
    EXPECT_NEAR(n, c.n, 0.01) << c.lat << "," << c.lon;
  }
  // On the equator at the central meridian the projection is exact.
  const auto [e0, n0] = utm_forward(0.0, 3.0, {31, true});
  EXPECT_NEAR(e0, 500000.0, 1e-6);
  EXPECT_NEAR(n0, 0.0, 1e-6);
  EXPECT_THROW(utm_forward(86.0, 0.0, {31, true}), std::invalid_argument);
}

TEST(Utm, ZoneFromCrs) {
  ASSERT_TRUE(utm_zone("EPSG:32631").has_value());
  EXPECT_EQ(utm_zone("EPSG:32631")->zone, 31);
  EXPECT_TRUE(utm_zone("EPSG:32631")->north);
  EXPECT_FALSE(utm_zone("EPSG:32733")->north);
  EXPECT_FALSE(utm_zone("EPSG:4326").has_value());
}

TEST(Utm, PixelLookup) {
  const GridSpec g{10, 10, 10.0, 1000.0, 2000.0, "EPSG:32631"};
  EXPECT_EQ(pixel_at(g, 1000.0, 2000.0), (std::pair<Index, Index>{0, 0}));
  EXPECT_EQ(pixel_at(g, 1055.0, 1921.0), (std::pair<Index, Index>{7, 5}));
  EXPECT_FALSE(pixel_at(g, 999.0, 1990.0).has_value());
  EXPECT_FALSE(pixel_at(g, 1050.0, 1900.0).has_value());
}

TEST(Sensors, CsvParsingAndSeries) {
  TempDir dir("sensors");
  const auto csv = dir.path() / "s.csv";
  std::ofstream(csv) << "sensor_id, lat, lon, timestamp_iso8601, t_a_celsius\n"
                        "S01, 47.927104799077, 2.216937485964, 2024-09-19T10:00:00Z, 18.5\n"
                        "S01, 47.927104799077, 2.216937485964, 2024-10-05T10:00:00Z, 15.0\n"
                        "S01, 47.927104799077, 2.216937485964, 2024-10-21T10:00:00Z, 12.0\n"
                        "S01, 47.927104799077, 2.216937485964, 2024-11-01T10:00:00Z, 9.0\n"
                        "S02, 10.0, 2.0, 2024-09-19T10:00:00Z, 20.0\n";
  const auto readings = read_sensor_csv(csv);
  ASSERT_EQ(readings.size(), 5u);
  EXPECT_EQ(readings[0].sensor_id, "S01");
  EXPECT_DOUBLE_EQ(readings[4].air_temperature_c, 20.0);

  // The sensor sits at the centre of pixel (150, 150), easting 441505, northing 5308495.
  const GridSpec g{288, 288, 10.0, 440000.0, 5310000.0, "EPSG:32631"};
  std::vector<DatedPrediction> preds;
  const double values[] = {300.0, 296.0, 294.0};
  const char* dates[] = {"2024-09-19", "2024-10-05", "2024-10-21"};
  for (int k = 0; k < 3; ++k) {
    Raster r(g, 1, 280.0f);
    r.band(0)(150, 150) = static_cast<float>(values[k]);
    preds.push_back({dates[k], r});
  }
  const auto series = build_sensor_series(readings, preds);
  ASSERT_EQ(series.size(), 2u);
  ASSERT_EQ(series[0].samples.size(), 3u);  // the November reading has no prediction
  EXPECT_NEAR(series[0].samples[0].lst_c, 300.0 - 273.15, 1e-4);
  EXPECT_NEAR(series[0].samples[2].lst_c, 294.0 - 273.15, 1e-4);
  EXPECT_TRUE(series[1].samples.empty());  // off the grid
  const auto rc = metrics::rank_correlations(series[0]);
  EXPECT_NEAR(rc.srcc, 1.0, 1e-12);
}

TEST(Sensors, MalformedFilesRejected) {
  TempDir dir("badsensors");
  std::ofstream(dir.path() / "a.csv") << "sensor_id,lat,lon,t_a_celsius\nS1,1,2,3\n";
  EXPECT_THROW(read_sensor_csv(dir.path() / "a.csv"), std::runtime_error);
  std::ofstream(dir.path() / "b.csv") << "sensor_id,lat,lon,timestamp_iso8601,t_a_celsius\nS1,north,2,2024-01-01,3\n";
  EXPECT_THROW(read_sensor_csv(dir.path() / "b.csv"), std::runtime_error);
  EXPECT_THROW(read_sensor_csv(dir.path() / "none.csv"), std::runtime_error);
}

TEST(Plot, MovingAverageAndRendering) {
  const std::vector<double> v{1, 2, 3, 4, 5};
  const auto m = moving_average(v, 2);
  EXPECT_DOUBLE_EQ(m[0], 1.0);
  EXPECT_DOUBLE_EQ(m[1], 1.5);
  EXPECT_DOUBLE_EQ(m[4], 4.5);
  EXPECT_THROW(moving_average(v, 0), std::invalid_argument);

  LossTrace t;
  for (int s = 1; s <= 300; ++s) t.append({s, 10.0 / s + 1.0, 0.25 - 0.2 / s, 0.3, 0.01, 0.1, 0.2});
  const RgbImage im = render_loss_curves(t, 50);
  EXPECT_EQ(im.width, 900);
  std::size_t dark = 0;
  for (std::size_t i = 0; i < im.pixels.size(); i += 3) dark += im.pixels[i] < 128 ? 1 : 0;
  EXPECT_GT(dark, 1000u);
  EXPECT_THROW(render_loss_curves(LossTrace{}), std::invalid_argument);
}
