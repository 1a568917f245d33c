#pragma once

#include "lstfuse/raster.hpp"

#include "json.hpp"

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lstfuse::metrics {

class MetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

inline constexpr double kKelvinOffset = 273.15;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;
inline constexpr double kSsimSigma = 1.5;
inline constexpr Index kSsimWindow = 11;
inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
// Smallest image side at which an MS-SSIM scale is still evaluated.
inline constexpr Index kMsSsimMinSide = 6;
// Lower bound applied to each MS-SSIM factor before exponentiation.
inline constexpr double kMsSsimFloor = 1e-6;

/// Gaussian window side used on an image whose smaller side is `side`: 11, or the largest odd number
/// that fits.
Index ssim_window_side(Index side);

/// Number of MS-SSIM scales evaluated for an image whose smaller side is `side` (at most 5).
Index ms_ssim_scales(Index side);

/// Standard MS-SSIM exponents truncated to `scales` entries and renormalized to unit sum.
std::vector<double> ms_ssim_weights(Index scales);

/// Unit-sum Gaussian window of the given side with sigma 1.5.
Plane<double> ssim_window(Index side);

double rmse(const Plane<double>& pred, const Plane<double>& ref);
/// 20 log10(range / rmse); +infinity when rmse is zero.
double psnr(const Plane<double>& pred, const Plane<double>& ref, double dynamic_range);
/// 100 * ratio * rmse / |mean(ref)| for one band.
double ergas(const Plane<double>& pred, const Plane<double>& ref, double resolution_ratio);
/// Mean SSIM over valid window positions.
double ssim(const Plane<double>& a, const Plane<double>& b, double dynamic_range);
double ms_ssim(const Plane<double>& a, const Plane<double>& b, double dynamic_range);
/// Angle in degrees between the two images taken as flat vectors.
double sam_degrees(const Plane<double>& a, const Plane<double>& b);
double pearson(std::span<const double> a, std::span<const double> b);
/// Ranks starting at 1; ties receive the mean of their positions.
std::vector<double> mid_ranks(std::span<const double> v);
double spearman(std::span<const double> a, std::span<const double> b);

struct ErrorMetrics {
  double rmse = 0.0;
  double psnr = 0.0;
  double ergas = 0.0;
};

struct SimilarityMetrics {
  double ssim = 0.0;
  double ms_ssim = 0.0;
  double sam = 0.0;
  double cc = 0.0;
};

/// Band 0 of each raster, co-located, values in degrees Celsius.
ErrorMetrics error_metrics(const Raster& pred, const Raster& ref, double resolution_ratio = 1.0 / 3.0);
SimilarityMetrics similarity_metrics(const Raster& pred, const Raster& ref);

struct SensorSample {
  std::string timestamp;
  double air_temperature_c = 0.0;
  double lst_c = 0.0;
};

struct SensorSeries {
  std::string sensor_id;
  double lat = 0.0;
  double lon = 0.0;
  std::vector<SensorSample> samples;
};

struct RankCorrelation {
  double pcc = 0.0;
  double srcc = 0.0;
};

RankCorrelation rank_correlations(const SensorSeries& series);

struct MetricsEntry {
  std::string date;
  std::string method;
  double rmse = 0.0;
  double ssim = 0.0;
  double psnr = 0.0;
  double sam = 0.0;
  double cc = 0.0;
  double ergas = 0.0;
  double ms_ssim = 0.0;
  // Fine-grid RMSE against a ground-truth raster when one exists (synthetic scenes only).
  std::optional<double> fine_rmse;
};

/// Pools the fine prediction by 3x3 means, converts both rasters from Kelvin to Celsius, and scores.
MetricsEntry evaluate_against_reference(const Raster& pred_fine_k, const Raster& ref_mid_k);

struct MetricsReport {
  std::vector<MetricsEntry> entries;

  std::vector<std::string> methods() const;
  MetricsEntry average(const std::string& method) const;
  nlohmann::json to_json() const;
  /// Metric rows by (date, method) columns, plus per-method averages.
  std::string to_table() const;
};

struct CorrelationRow {
  std::string sensor_id;
  std::size_t pairs = 0;
  RankCorrelation value;
};

std::string correlation_table(const std::vector<CorrelationRow>& rows);

}  // namespace lstfuse::metrics
