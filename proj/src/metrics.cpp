#include "lstfuse/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace lstfuse::metrics {

namespace {

void require_same(const Plane<double>& a, const Plane<double>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw MetricError(fmt::format("{}: shapes {}x{} and {}x{} differ", what, a.rows(), a.cols(), b.rows(), b.cols()));
  }
  if (a.size() == 0) throw MetricError(fmt::format("{}: empty image", what));
}

Plane<double> filter_valid(const Plane<double>& x, const Plane<double>& w) {
  const Index k = w.rows();
  Plane<double> out(x.rows() - k + 1, x.cols() - k + 1);
  for (Index y = 0; y < out.rows(); ++y) {
    for (Index c = 0; c < out.cols(); ++c) out(y, c) = (x.block(y, c, k, k) * w).sum();
  }
  return out;
}

struct SsimMaps {
  Plane<double> luminance;
  Plane<double> contrast_structure;
};

SsimMaps ssim_maps(const Plane<double>& a, const Plane<double>& b, double dynamic_range) {
  const Index side = std::min(a.rows(), a.cols());
  const Plane<double> w = ssim_window(ssim_window_side(side));
  const double c1 = std::pow(kSsimK1 * dynamic_range, 2);
  const double c2 = std::pow(kSsimK2 * dynamic_range, 2);
  const Plane<double> mu_a = filter_valid(a, w);
  const Plane<double> mu_b = filter_valid(b, w);
  const Plane<double> var_a = filter_valid(a * a, w) - mu_a.square();
  const Plane<double> var_b = filter_valid(b * b, w) - mu_b.square();
  const Plane<double> cov = filter_valid(a * b, w) - mu_a * mu_b;
  SsimMaps m;
  m.luminance = (2.0 * mu_a * mu_b + c1) / (mu_a.square() + mu_b.square() + c1);
  m.contrast_structure = (2.0 * cov + c2) / (var_a + var_b + c2);
  return m;
}

Plane<double> downsample2(const Plane<double>& x) {
  Plane<double> out(x.rows() / 2, x.cols() / 2);
  for (Index y = 0; y < out.rows(); ++y) {
    for (Index c = 0; c < out.cols(); ++c) out(y, c) = x.block(2 * y, 2 * c, 2, 2).mean();
  }
  return out;
}

Plane<double> band_celsius(const Raster& r) {
  if (!r.fully_valid()) throw MetricError("metrics require fully valid rasters");
  return r.band(0).cast<double>() - kKelvinOffset;
}

Plane<double> band_values(const Raster& r) {
  if (!r.fully_valid()) throw MetricError("metrics require fully valid rasters");
  return r.band(0).cast<double>();
}

double dynamic_range_of(const Plane<double>& ref) {
  const double range = ref.maxCoeff() - ref.minCoeff();
  return range > 0.0 ? range : 1.0;
}

}  // namespace

Index ssim_window_side(Index side) {
  if (side < 1) throw MetricError("ssim: empty image");
  const Index fit = side % 2 == 1 ? side : side - 1;
  return std::min(kSsimWindow, fit);
}

Index ms_ssim_scales(Index side) {
  Index scales = 0;
  while (scales < static_cast<Index>(kMsSsimWeights.size()) && side >= kMsSsimMinSide) {
    ++scales;
    side /= 2;
  }
  return std::max<Index>(scales, 1);
}

std::vector<double> ms_ssim_weights(Index scales) {
  std::vector<double> w(kMsSsimWeights.begin(), kMsSsimWeights.begin() + scales);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return w;
}

Plane<double> ssim_window(Index side) {
  Plane<double> w(side, side);
  const double r = static_cast<double>(side / 2);
  for (Index i = 0; i < side; ++i) {
    for (Index j = 0; j < side; ++j) {
      const double dy = static_cast<double>(i) - r, dx = static_cast<double>(j) - r;
      w(i, j) = std::exp(-(dx * dx + dy * dy) / (2.0 * kSsimSigma * kSsimSigma));
    }
  }
  return w / w.sum();
}

double rmse(const Plane<double>& pred, const Plane<double>& ref) {
  require_same(pred, ref, "rmse");
  return std::sqrt((pred - ref).square().mean());
}

double psnr(const Plane<double>& pred, const Plane<double>& ref, double dynamic_range) {
  const double e = rmse(pred, ref);
  if (e == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(dynamic_range / e);
}

double ergas(const Plane<double>& pred, const Plane<double>& ref, double resolution_ratio) {
  const double mu = ref.mean();
  if (mu == 0.0) throw MetricError("ergas: reference mean is zero");
  const double e = rmse(pred, ref);
  return 100.0 * resolution_ratio * std::sqrt((e / mu) * (e / mu));
}

double ssim(const Plane<double>& a, const Plane<double>& b, double dynamic_range) {
  require_same(a, b, "ssim");
  const SsimMaps m = ssim_maps(a, b, dynamic_range);
  return (m.luminance * m.contrast_structure).mean();
}

double ms_ssim(const Plane<double>& a, const Plane<double>& b, double dynamic_range) {
  require_same(a, b, "ms_ssim");
  const Index scales = ms_ssim_scales(std::min(a.rows(), a.cols()));
  const std::vector<double> weights = ms_ssim_weights(scales);
  Plane<double> x = a, y = b;
  double result = 1.0;
  for (Index s = 0; s < scales; ++s) {
    const SsimMaps m = ssim_maps(x, y, dynamic_range);
    const double factor = s + 1 < scales ? m.contrast_structure.mean() : (m.luminance * m.contrast_structure).mean();
    result *= std::pow(std::max(factor, kMsSsimFloor), weights[s]);
    if (s + 1 < scales) {
      x = downsample2(x);
      y = downsample2(y);
    }
  }
  return result;
}

double sam_degrees(const Plane<double>& a, const Plane<double>& b) {
  require_same(a, b, "sam");
  const double na = std::sqrt(a.square().sum()), nb = std::sqrt(b.square().sum());
  if (na == 0.0 || nb == 0.0) throw MetricError("sam: zero-norm image");
  const double c = std::clamp((a * b).sum() / (na * nb), -1.0, 1.0);
  return std::acos(c) * 180.0 / M_PI;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw MetricError("pearson: series lengths differ or are empty");
  const Eigen::Map<const Eigen::ArrayXd> x(a.data(), static_cast<Index>(a.size()));
  const Eigen::Map<const Eigen::ArrayXd> y(b.data(), static_cast<Index>(b.size()));
  const Eigen::ArrayXd dx = x - x.mean(), dy = y - y.mean();
  const double sx = std::sqrt(dx.square().mean()), sy = std::sqrt(dy.square().mean());
  if (sx == 0.0 || sy == 0.0) throw MetricError("pearson: constant series");
  return (dx * dy).mean() / (sx * sy);
}

std::vector<double> mid_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw MetricError("spearman: series lengths differ");
  const std::size_t m = a.size();
  if (m < 2) throw MetricError("spearman: need at least two pairs");
  const auto ra = mid_ranks(a), rb = mid_ranks(b);
  if (std::all_of(ra.begin(), ra.end(), [&](double r) { return r == ra.front(); }) ||
      std::all_of(rb.begin(), rb.end(), [&](double r) { return r == rb.front(); })) {
    throw MetricError("spearman: constant series");
  }
  double d2 = 0.0;
  for (std::size_t i = 0; i < m; ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
  const double md = static_cast<double>(m);
  return 1.0 - 6.0 * d2 / (md * (md * md - 1.0));
}

ErrorMetrics error_metrics(const Raster& pred, const Raster& ref, double resolution_ratio) {
  if (!(pred.grid() == ref.grid())) throw MetricError("error_metrics: rasters are not co-located");
  const Plane<double> p = band_values(pred), r = band_values(ref);
  return {rmse(p, r), psnr(p, r, dynamic_range_of(r)), ergas(p, r, resolution_ratio)};
}

SimilarityMetrics similarity_metrics(const Raster& pred, const Raster& ref) {
  if (!(pred.grid() == ref.grid())) throw MetricError("similarity_metrics: rasters are not co-located");
  const Plane<double> p = band_values(pred), r = band_values(ref);
  const double range = dynamic_range_of(r);
  const std::span<const double> ps(p.data(), static_cast<std::size_t>(p.size()));
  const std::span<const double> rs(r.data(), static_cast<std::size_t>(r.size()));
  return {ssim(p, r, range), ms_ssim(p, r, range), sam_degrees(p, r), pearson(ps, rs)};
}

RankCorrelation rank_correlations(const SensorSeries& series) {
  if (series.samples.size() < 3) {
    throw MetricError(fmt::format("sensor {}: need at least 3 pairs, got {}", series.sensor_id, series.samples.size()));
  }
  std::vector<double> ta, lst;
  for (const auto& s : series.samples) {
    ta.push_back(s.air_temperature_c);
    lst.push_back(s.lst_c);
  }
  return {pearson(ta, lst), spearman(ta, lst)};
}

MetricsEntry evaluate_against_reference(const Raster& pred_fine_k, const Raster& ref_mid_k) {
  const Raster pooled = block_average(pred_fine_k, 3);
  if (pooled.width() != ref_mid_k.width() || pooled.height() != ref_mid_k.height()) {
    throw MetricError("evaluate_against_reference: pooled prediction does not match the reference grid");
  }
  const Plane<double> p = band_celsius(pooled), r = band_celsius(ref_mid_k);
  const std::span<const double> ps(p.data(), static_cast<std::size_t>(p.size()));
  const std::span<const double> rs(r.data(), static_cast<std::size_t>(r.size()));
  const double range = dynamic_range_of(r);
  MetricsEntry e;
  e.rmse = rmse(p, r);
  e.psnr = psnr(p, r, range);
  e.ergas = ergas(p, r, 1.0 / 3.0);
  e.ssim = ssim(p, r, range);
  e.ms_ssim = ms_ssim(p, r, range);
  e.sam = sam_degrees(p, r);
  e.cc = pearson(ps, rs);
  return e;
}

std::vector<std::string> MetricsReport::methods() const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    if (std::find(out.begin(), out.end(), e.method) == out.end()) out.push_back(e.method);
  }
  return out;
}

MetricsEntry MetricsReport::average(const std::string& method) const {
  MetricsEntry avg;
  avg.date = "average";
  avg.method = method;
  std::size_t n = 0, n_fine = 0;
  double fine = 0.0;
  for (const auto& e : entries) {
    if (e.method != method) continue;
    ++n;
    avg.rmse += e.rmse;
    avg.ssim += e.ssim;
    avg.psnr += e.psnr;
    avg.sam += e.sam;
    avg.cc += e.cc;
    avg.ergas += e.ergas;
    avg.ms_ssim += e.ms_ssim;
    if (e.fine_rmse) {
      fine += *e.fine_rmse;
      ++n_fine;
    }
  }
  if (n == 0) throw MetricError("no entries for method " + method);
  const double inv = 1.0 / static_cast<double>(n);
  avg.rmse *= inv;
  avg.ssim *= inv;
  avg.psnr *= inv;
  avg.sam *= inv;
  avg.cc *= inv;
  avg.ergas *= inv;
  avg.ms_ssim *= inv;
  if (n_fine > 0) avg.fine_rmse = fine / static_cast<double>(n_fine);
  return avg;
}

namespace {

nlohmann::json number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return nullptr;
  return v;
}

nlohmann::json entry_json(const MetricsEntry& e) {
  nlohmann::json j{{"date", e.date},       {"method", e.method},     {"rmse", number(e.rmse)},
                   {"ssim", number(e.ssim)}, {"psnr", number(e.psnr)}, {"sam", number(e.sam)},
                   {"cc", number(e.cc)},     {"ergas", number(e.ergas)}, {"ms_ssim", number(e.ms_ssim)}};
  if (e.fine_rmse) j["fine_rmse"] = number(*e.fine_rmse);
  return j;
}

}  // namespace

nlohmann::json MetricsReport::to_json() const {
  nlohmann::json j;
  j["metadata"] = {{"units", "celsius"},
                   {"rmse", "sqrt(mean((pred-ref)^2)) on 3x3-pooled prediction vs mid-resolution reference"},
                   {"psnr_dynamic_range", "max(ref) - min(ref) per date"},
                   {"ergas", "100 * (1/3) * rmse / mean(ref), single band"},
                   {"sam", "angle in degrees between flattened images"},
                   {"ssim", "K1=0.01 K2=0.03, 11x11 Gaussian window sigma 1.5, range from reference"}};
  j["entries"] = nlohmann::json::array();
  for (const auto& e : entries) j["entries"].push_back(entry_json(e));
  j["averages"] = nlohmann::json::array();
  for (const auto& m : methods()) j["averages"].push_back(entry_json(average(m)));
  return j;
}

std::string MetricsReport::to_table() const {
  std::vector<MetricsEntry> cols = entries;
  for (const auto& m : methods()) cols.push_back(average(m));
  std::string out = fmt::format("{:<10}", "Metric");
  for (const auto& c : cols) out += fmt::format(" {:>22}", c.date + "/" + c.method);
  out += '\n';
  auto row = [&](const char* name, auto field) {
    out += fmt::format("{:<10}", name);
    for (const auto& c : cols) out += fmt::format(" {:>22.3f}", field(c));
    out += '\n';
  };
  row("RMSE", [](const MetricsEntry& e) { return e.rmse; });
  row("SSIM", [](const MetricsEntry& e) { return e.ssim; });
  row("PSNR", [](const MetricsEntry& e) { return e.psnr; });
  row("SAM", [](const MetricsEntry& e) { return e.sam; });
  row("CC", [](const MetricsEntry& e) { return e.cc; });
  row("ERGAS", [](const MetricsEntry& e) { return e.ergas; });
  row("MS-SSIM", [](const MetricsEntry& e) { return e.ms_ssim; });
  if (std::any_of(cols.begin(), cols.end(), [](const MetricsEntry& e) { return e.fine_rmse.has_value(); })) {
    row("FINE_RMSE", [](const MetricsEntry& e) { return e.fine_rmse.value_or(std::nan("")); });
  }
  return out;
}

std::string correlation_table(const std::vector<CorrelationRow>& rows) {
  std::string out = fmt::format("{:<16} {:>6} {:>8} {:>8}\n", "Sensor", "Pairs", "PCC", "SRCC");
  for (const auto& r : rows) {
    out += fmt::format("{:<16} {:>6} {:>8.3f} {:>8.3f}\n", r.sensor_id, r.pairs, r.value.pcc, r.value.srcc);
  }
  return out;
}

}  // namespace lstfuse::metrics
