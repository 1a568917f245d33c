#include "lstfuse/metrics.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace lstfuse;
using namespace lstfuse::metrics;

namespace {

Plane<double> to_plane(const oracle::Image& im) {
  Plane<double> p(static_cast<Index>(im.size()), static_cast<Index>(im[0].size()));
  for (Index i = 0; i < p.rows(); ++i) {
    for (Index j = 0; j < p.cols(); ++j) p(i, j) = im[i][j];
  }
  return p;
}

std::span<const double> view(const std::vector<double>& v) { return {v.data(), v.size()}; }

Raster raster_of(const Plane<double>& p, double pixel = 30.0) {
  GridSpec g{p.cols(), p.rows(), pixel, 0.0, 0.0, "EPSG:32631"};
  return Raster(g, {p.cast<float>()});
}

double range_of(const oracle::Image& im) {
  const auto f = oracle::flatten(im);
  return *std::max_element(f.begin(), f.end()) - *std::min_element(f.begin(), f.end());
}

}  // namespace

TEST(Metrics, RandomPairsMatchOracles) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 50; ++t) {
    const auto ref = oracle::random_image(8, 8, rng, 10.0, 40.0);
    auto pred = ref;
    std::normal_distribution<double> n(0.0, 2.0);
    for (auto& row : pred) {
      for (double& v : row) v += n(rng);
    }
    const Plane<double> p = to_plane(pred), r = to_plane(ref);
    const double range = range_of(ref);
    EXPECT_NEAR(rmse(p, r), oracle::rmse(pred, ref), 1e-9);
    EXPECT_NEAR(psnr(p, r, range), oracle::psnr(pred, ref), 1e-9);
    EXPECT_NEAR(ergas(p, r, 1.0 / 3.0), oracle::ergas(pred, ref, 1.0 / 3.0), 1e-9);
    EXPECT_NEAR(ssim(p, r, range), oracle::ssim(pred, ref, range), 1e-9);
    EXPECT_NEAR(ms_ssim(p, r, range), oracle::ms_ssim(pred, ref, range), 1e-9);
    EXPECT_NEAR(sam_degrees(p, r), oracle::sam_degrees(pred, ref), 1e-7);
    const auto fp = oracle::flatten(pred), fr = oracle::flatten(ref);
    EXPECT_NEAR(pearson(view(fp), view(fr)), oracle::pearson(fp, fr), 1e-9);
  }
}

TEST(Metrics, MultiScaleMatchesOracleOnLargerImages) {
  std::mt19937_64 rng(5);
  for (int side : {16, 24, 32, 64, 200}) {
    const auto a = oracle::random_image(side, side, rng, 0.0, 1.0);
    auto b = a;
    for (auto& row : b) {
      for (double& v : row) v = 0.7 * v + 0.2 * std::sin(10 * v);
    }
    const double range = range_of(a);
    EXPECT_NEAR(ms_ssim(to_plane(a), to_plane(b), range), oracle::ms_ssim(a, b, range), 1e-9) << side;
  }
}

TEST(Metrics, ScaleAndWindowRules) {
  EXPECT_EQ(ssim_window_side(8), 7);
  EXPECT_EQ(ssim_window_side(32), 11);
  EXPECT_EQ(ssim_window_side(5), 5);
  EXPECT_EQ(ms_ssim_scales(32), 3);
  EXPECT_EQ(ms_ssim_scales(96), 5);
  EXPECT_EQ(ms_ssim_scales(8), 1);
  const auto w = ms_ssim_weights(3);
  ASSERT_EQ(w.size(), 3u);
  const double total = 0.0448 + 0.2856 + 0.3001;
  EXPECT_NEAR(w[0], 0.0448 / total, 1e-15);
  EXPECT_NEAR(w[2], 0.3001 / total, 1e-15);
  EXPECT_NEAR(ssim_window(11).sum(), 1.0, 1e-12);
}

TEST(Metrics, IdentityAndDegenerateCases) {
  std::mt19937_64 rng(3);
  const Plane<double> a = to_plane(oracle::random_image(12, 12, rng, 1.0, 5.0));
  EXPECT_EQ(rmse(a, a), 0.0);
  EXPECT_TRUE(std::isinf(psnr(a, a, 4.0)));
  EXPECT_NEAR(ssim(a, a, 4.0), 1.0, 1e-12);
  EXPECT_NEAR(ms_ssim(a, a, 4.0), 1.0, 1e-12);
  EXPECT_NEAR(sam_degrees(a, a), 0.0, 1e-5);
  EXPECT_NEAR(sam_degrees(a, -a), 180.0, 1e-5);
  EXPECT_THROW(sam_degrees(a, Plane<double>::Zero(12, 12)), MetricError);
  EXPECT_THROW(ergas(a, Plane<double>::Zero(12, 12), 1.0), MetricError);
  EXPECT_THROW(rmse(a, Plane<double>::Zero(4, 4)), MetricError);
}

TEST(Metrics, UniformOffsetGivesExactRmseAndUnitCorrelation) {
  std::mt19937_64 rng(8);
  const Plane<double> ref = to_plane(oracle::random_image(9, 9, rng, 20.0, 30.0));
  const Plane<double> pred = ref + 1.5;
  EXPECT_NEAR(rmse(pred, ref), 1.5, 1e-12);
  std::vector<double> p(pred.data(), pred.data() + pred.size()), r(ref.data(), ref.data() + ref.size());
  EXPECT_NEAR(pearson(view(p), view(r)), 1.0, 1e-12);
}

TEST(Metrics, Properties) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 20; ++t) {
    const Plane<double> a = to_plane(oracle::random_image(10, 10, rng, -3.0, 3.0));
    const Plane<double> b = to_plane(oracle::random_image(10, 10, rng, -3.0, 3.0));
    const Plane<double> c = to_plane(oracle::random_image(10, 10, rng, -3.0, 3.0));
    EXPECT_DOUBLE_EQ(rmse(a, b), rmse(b, a));
    // rmse is a scaled Euclidean distance, so the triangle inequality holds.
    EXPECT_LE(rmse(a, c), rmse(a, b) + rmse(b, c) + 1e-12);
    EXPECT_NEAR(ssim(a, b, 6.0), ssim(b, a, 6.0), 1e-12);
  }
  // ERGAS grows linearly with a uniform error at a fixed reference.
  const Plane<double> ref = to_plane(oracle::random_image(10, 10, rng, 10.0, 20.0));
  const double e1 = ergas(ref + 1.0, ref, 1.0 / 3.0), e3 = ergas(ref + 3.0, ref, 1.0 / 3.0);
  EXPECT_NEAR(e3, 3.0 * e1, 1e-9);
}

TEST(Metrics, RankCorrelationExamples) {
  std::vector<double> x, lin, cube, rev;
  for (int i = -10; i <= 10; ++i) {
    x.push_back(i);
    lin.push_back(2.0 * i + 1.0);
    cube.push_back(static_cast<double>(i) * i * i);
    rev.push_back(-i);
  }
  EXPECT_NEAR(pearson(view(x), view(lin)), 1.0, 1e-12);
  EXPECT_NEAR(spearman(view(x), view(lin)), 1.0, 1e-12);
  EXPECT_NEAR(spearman(view(x), view(cube)), 1.0, 1e-12);
  EXPECT_LT(pearson(view(x), view(cube)), 1.0 - 1e-3);
  EXPECT_NEAR(spearman(view(x), view(rev)), -1.0, 1e-12);
  const std::vector<double> flat(21, 4.0);
  EXPECT_THROW(pearson(view(x), view(flat)), MetricError);
  EXPECT_THROW(spearman(view(x), view(flat)), MetricError);
}

TEST(Metrics, RankCorrelationsMatchOracleWithTies) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> u(0, 6);
  for (int t = 0; t < 30; ++t) {
    std::vector<double> a(20), b(20);
    for (int i = 0; i < 20; ++i) {
      a[i] = u(rng);
      b[i] = a[i] + u(rng);
    }
    EXPECT_NEAR(spearman(view(a), view(b)), oracle::spearman(a, b), 1e-12);
    EXPECT_NEAR(pearson(view(a), view(b)), oracle::pearson(a, b), 1e-9);
    const auto r = mid_ranks(view(a));
    const auto ro = oracle::ranks(a);
    for (std::size_t i = 0; i < r.size(); ++i) EXPECT_DOUBLE_EQ(r[i], ro[i]);
  }
}

TEST(Metrics, CorrelationInvariances) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> a(25), b(25);
  for (int i = 0; i < 25; ++i) {
    a[i] = n(rng);
    b[i] = a[i] + 0.5 * n(rng);
  }
  std::vector<double> mono(25), affine(25), neg(25);
  for (int i = 0; i < 25; ++i) {
    mono[i] = std::exp(3.0 * b[i]);
    affine[i] = 4.0 * b[i] - 7.0;
    neg[i] = -b[i];
  }
  EXPECT_NEAR(spearman(view(a), view(mono)), spearman(view(a), view(b)), 1e-12);
  EXPECT_NEAR(pearson(view(a), view(affine)), pearson(view(a), view(b)), 1e-12);
  EXPECT_NEAR(pearson(view(a), view(neg)), -pearson(view(a), view(b)), 1e-12);
}

TEST(Metrics, SensorSeriesNeedsThreePairs) {
  SensorSeries s{"s1", 47.9, 1.9, {{"2025-04-01", 10.0, 20.0}, {"2025-04-02", 12.0, 23.0}}};
  EXPECT_THROW(rank_correlations(s), MetricError);
  s.samples.push_back({"2025-04-03", 14.0, 24.0});
  const auto rc = rank_correlations(s);
  EXPECT_NEAR(rc.srcc, 1.0, 1e-12);
  EXPECT_GT(rc.pcc, 0.9);
}

TEST(Metrics, ReplicatedReferenceScoresPerfectly) {
  std::mt19937_64 rng(2);
  const Plane<double> mid = to_plane(oracle::random_image(12, 12, rng, 285.0, 300.0));
  const Raster ref = raster_of(mid, 30.0);
  const Raster fine = replicate_upsample(ref, 3);
  const MetricsEntry e = evaluate_against_reference(fine, ref);
  EXPECT_NEAR(e.rmse, 0.0, 1e-5);
  EXPECT_NEAR(e.ssim, 1.0, 1e-6);
  EXPECT_NEAR(e.cc, 1.0, 1e-6);
  EXPECT_TRUE(std::isinf(e.psnr));
}

TEST(Metrics, EvaluationWorksInCelsius) {
  std::mt19937_64 rng(6);
  const Plane<double> mid = to_plane(oracle::random_image(12, 12, rng, 285.0, 300.0));
  const Raster ref = raster_of(mid, 30.0);
  const Raster fine = replicate_upsample(raster_of(mid.array() + 2.0, 30.0), 3);
  const MetricsEntry e = evaluate_against_reference(fine, ref);
  const Plane<double> c = mid - kKelvinOffset;
  EXPECT_NEAR(e.rmse, 2.0, 1e-4);
  EXPECT_NEAR(e.ergas, 100.0 / 3.0 * 2.0 / c.mean(), 1e-4);
  EXPECT_THROW(evaluate_against_reference(fine, raster_of(Plane<double>::Constant(5, 5, 290.0))), MetricError);
}

TEST(Metrics, ReportJsonAndTable) {
  MetricsReport rep;
  rep.entries.push_back({"2024-09-19", "fused", 2.0, 0.8, 30.0, 4.0, 0.9, 3.0, 0.85, std::nullopt});
  rep.entries.push_back({"2024-09-19", "bicubic", 3.0, 0.6, std::numeric_limits<double>::infinity(), 5.0, 0.8, 4.0,
                         0.7, 1.5});
  rep.entries.push_back({"2024-10-05", "fused", 4.0, 0.6, 26.0, 6.0, 0.7, 5.0, 0.65, std::nullopt});
  const auto avg = rep.average("fused");
  EXPECT_DOUBLE_EQ(avg.rmse, 3.0);
  EXPECT_DOUBLE_EQ(avg.ssim, 0.7);
  const auto j = rep.to_json();
  EXPECT_EQ(j.dump().find("Infinity"), std::string::npos);
  EXPECT_NE(j.dump().find("\"inf\""), std::string::npos);
  const std::string table = rep.to_table();
  for (const char* key : {"RMSE", "SSIM", "PSNR", "SAM", "CC", "ERGAS"}) EXPECT_NE(table.find(key), std::string::npos);
  EXPECT_EQ(rep.methods(), (std::vector<std::string>{"fused", "bicubic"}));
}
