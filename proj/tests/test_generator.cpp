#include "lstfuse/generator.hpp"

#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace lstfuse;
using ad::Var;

namespace {

GeneratorConfig tiny_config() {
  GeneratorConfig c;
  c.channels = {2, 3, 4, 4};
  c.residual_blocks = 1;
  c.patch_size = 24;
  return c;
}

template <typename Scalar>
Var<Scalar> random_var(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return Var<Scalar>::constant(gradcheck::random_tensor(s, rng, lo, hi).template cast<Scalar>());
}

template <typename Scalar>
GeneratorInputs<Scalar> random_inputs(Index batch, Index p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GeneratorInputs<Scalar> in;
  in.fine_indices = random_var<Scalar>({batch, 3, p, p}, rng);
  in.mid_indices = random_var<Scalar>({batch, 3, p, p}, rng);
  in.mid_lst_t1 = random_var<Scalar>({batch, 1, p, p}, rng);
  in.coarse_lst_t1 = random_var<Scalar>({batch, 1, p, p}, rng);
  in.coarse_lst_t2 = random_var<Scalar>({batch, 1, p, p}, rng);
  return in;
}

FeaturePyramid<double> random_pyramid(const std::vector<Index>& channels, Index batch, Index side,
                                      std::mt19937_64& rng) {
  FeaturePyramid<double> p;
  for (std::size_t l = 0; l < channels.size(); ++l) {
    p.push_back(random_var<double>({batch, channels[l], side >> l, side >> l}, rng));
  }
  return p;
}

double laplacian_energy(const Tensor<float>& t) {
  double e = 0.0;
  const auto p = t.plane(0, 0);
  for (Index y = 1; y + 1 < p.rows(); ++y) {
    for (Index x = 1; x + 1 < p.cols(); ++x) {
      const double l = 4.0 * p(y, x) - p(y - 1, x) - p(y + 1, x) - p(y, x - 1) - p(y, x + 1);
      e += l * l;
    }
  }
  return e;
}

}  // namespace

TEST(GeneratorConfig, Validation) {
  GeneratorConfig c;
  EXPECT_NO_THROW(c.validate());
  c.channels = {8};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = GeneratorConfig{};
  c.patch_size = 90;  // not divisible by 16
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = GeneratorConfig{};
  c.channels = {8, 0};
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(GeneratorConfig, JsonRoundTrip) {
  GeneratorConfig c = tiny_config();
  c.smoothing_sigma = 1.5;
  nlohmann::json j = c;
  const auto back = j.get<GeneratorConfig>();
  EXPECT_EQ(back.channels, c.channels);
  EXPECT_EQ(back.residual_blocks, c.residual_blocks);
  EXPECT_EQ(back.patch_size, c.patch_size);
  EXPECT_DOUBLE_EQ(back.smoothing_sigma, 1.5);
}

TEST(Encoder, DefaultPyramidShapes) {
  GeneratorConfig c;
  c.residual_blocks = 0;
  Generator<float> gen(c, 1);
  std::mt19937_64 rng(2);
  const auto x = random_var<float>({1, 3, 96, 96}, rng);
  const auto pyr = gen.encode(x, EncoderId::kFineIndices, {});
  ASSERT_EQ(pyr.size(), 5u);
  const Index sides[] = {96, 48, 24, 12, 6};
  for (std::size_t l = 0; l < 5; ++l) {
    EXPECT_EQ(pyr[l].shape(), (Shape{1, c.channels[l], sides[l], sides[l]})) << "level " << l;
  }
}

TEST(Encoder, WrongChannelCountThrows) {
  Generator<double> gen(tiny_config(), 1);
  std::mt19937_64 rng(3);
  EXPECT_THROW(gen.encode(random_var<double>({1, 1, 24, 24}, rng), EncoderId::kMidIndices, {}), ShapeError);
  EXPECT_THROW(gen.encode(random_var<double>({1, 3, 24, 24}, rng), EncoderId::kMidLst, {}), ShapeError);
}

TEST(Encoder, ZeroInputWithZeroBiasGivesZeroPyramid) {
  Generator<double> gen(tiny_config(), 4);
  for (const auto& e : gen.parameters().entries()) {
    if (e.name.find("bias") != std::string::npos) {
      Var<double> v = e.var;
      v.mutable_value().set_zero();
    }
  }
  const auto x = Var<double>::constant(Tensor<double>(Shape{1, 1, 24, 24}));
  for (const auto& level : gen.encode(x, EncoderId::kCoarseLstT2, {})) {
    EXPECT_EQ(level.value().array().abs().maxCoeff(), 0.0);
  }
}

TEST(Encoder, Deterministic) {
  Generator<float> a(tiny_config(), 9), b(tiny_config(), 9);
  std::mt19937_64 rng(5);
  const auto x = random_var<float>({2, 3, 24, 24}, rng);
  const auto pa = a.encode(x, EncoderId::kFineIndices, {});
  const auto pb = b.encode(x, EncoderId::kFineIndices, {});
  for (std::size_t l = 0; l < pa.size(); ++l) {
    EXPECT_TRUE((pa[l].value().array() == pb[l].value().array()).all());
  }
}

TEST(CosineSimilarityMap, TrivialCases) {
  std::mt19937_64 rng(6);
  const auto u = random_var<double>({2, 4, 5, 5}, rng, 0.1, 1.0);
  const auto same = cosine_similarity_map(u, u).value();
  EXPECT_EQ(same.shape(), (Shape{2, 1, 5, 5}));
  EXPECT_NEAR((same.array() - 1.0).abs().maxCoeff(), 0.0, 1e-12);
  const auto opposite = cosine_similarity_map(u, ad::scale(u, -1.0)).value();
  EXPECT_NEAR((opposite.array() + 1.0).abs().maxCoeff(), 0.0, 1e-12);

  Tensor<double> e1(Shape{1, 2, 3, 3}), e2(Shape{1, 2, 3, 3});
  e1.plane(0, 0).setOnes();
  e2.plane(0, 1).setOnes();
  const auto ortho = cosine_similarity_map(Var<double>::constant(e1), Var<double>::constant(e2)).value();
  EXPECT_EQ(ortho.array().abs().maxCoeff(), 0.0);

  const auto zero = Var<double>::constant(Tensor<double>(Shape{1, 2, 3, 3}));
  const auto guarded = cosine_similarity_map(zero, Var<double>::constant(e1)).value();
  EXPECT_TRUE(guarded.array().isFinite().all());
  EXPECT_EQ(guarded.array().abs().maxCoeff(), 0.0);

  EXPECT_THROW(cosine_similarity_map(u, zero), ShapeError);
}

TEST(CosineSimilarityMap, BoundedOnRandomInputs) {
  std::mt19937_64 rng(7);
  const auto u = random_var<double>({3, 5, 6, 6}, rng);
  const auto v = random_var<double>({3, 5, 6, 6}, rng);
  const auto c = cosine_similarity_map(u, v).value();
  EXPECT_LE(c.array().maxCoeff(), 1.0);
  EXPECT_GE(c.array().minCoeff(), -1.0);
}

TEST(RefineFeatures, MatchesBruteForce) {
  std::mt19937_64 rng(8);
  const std::vector<Index> ch{3, 4};
  const auto f = random_pyramid(ch, 2, 8, rng);
  const auto lm = random_pyramid(ch, 2, 8, rng);
  const auto lf = random_pyramid(ch, 2, 8, rng);
  const auto out = refine_features(f, lm, lf);
  ASSERT_EQ(out.size(), 2u);
  for (std::size_t l = 0; l < 2; ++l) {
    const auto& a = lm[l].value();
    const auto& b = lf[l].value();
    const Shape s = a.shape();
    for (Index n = 0; n < s.n; ++n) {
      for (Index y = 0; y < s.h; ++y) {
        for (Index x = 0; x < s.w; ++x) {
          double dot = 0.0, na = 0.0, nb = 0.0;
          for (Index c = 0; c < s.c; ++c) {
            dot += a(n, c, y, x) * b(n, c, y, x);
            na += a(n, c, y, x) * a(n, c, y, x);
            nb += b(n, c, y, x) * b(n, c, y, x);
          }
          const double cos = dot / (std::max(std::sqrt(na), 1e-8) * std::max(std::sqrt(nb), 1e-8));
          for (Index c = 0; c < s.c; ++c) {
            EXPECT_NEAR(out[l].value()(n, c, y, x), f[l].value()(n, c, y, x) * cos, 1e-6);
          }
        }
      }
    }
  }
}

TEST(RefineFeatures, IdentityAndNegation) {
  std::mt19937_64 rng(9);
  const std::vector<Index> ch{2, 3, 3};
  const auto f = random_pyramid(ch, 1, 8, rng);
  const auto l = random_pyramid(ch, 1, 8, rng);
  FeaturePyramid<double> neg;
  for (const auto& v : l) neg.push_back(ad::scale(v, -1.0));
  const auto same = refine_features(f, l, l);
  const auto flipped = refine_features(f, neg, l);
  for (std::size_t i = 0; i < f.size(); ++i) {
    EXPECT_NEAR((same[i].value().array() - f[i].value().array()).abs().maxCoeff(), 0.0, 1e-12);
    EXPECT_NEAR((flipped[i].value().array() + f[i].value().array()).abs().maxCoeff(), 0.0, 1e-12);
  }
  FeaturePyramid<double> short_pyr(l.begin(), l.end() - 1);
  EXPECT_THROW(refine_features(f, short_pyr, l), ShapeError);
}

TEST(Adain, StyleStatisticsTransfer) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor<double> content(Shape{1, 1, 32, 32}), style(Shape{1, 1, 32, 32});
  for (Index i = 0; i < content.size(); ++i) {
    content.array()[i] = g(rng);
    style.array()[i] = 5.0 + 2.0 * g(rng);
  }
  // Standardize content exactly, then give style exact moments 5 and 2.
  auto standardize = [](Tensor<double>& t, double mu, double sigma) {
    auto& a = t.array();
    const double m = a.mean();
    const double s = std::sqrt((a - m).square().mean());
    a = (a - m) / s * sigma + mu;
  };
  standardize(content, 0.0, 1.0);
  standardize(style, 5.0, 2.0);
  const auto out = adain(FeaturePyramid<double>{Var<double>::constant(content)},
                         FeaturePyramid<double>{Var<double>::constant(style)})[0]
                       .value()
                       .array();
  EXPECT_NEAR(out.mean(), 5.0, 1e-4);
  EXPECT_NEAR(std::sqrt((out - out.mean()).square().mean()), 2.0, 1e-4);
}

TEST(Adain, IdentityAndConstantContent) {
  std::mt19937_64 rng(11);
  const auto x = random_pyramid({2, 3}, 2, 8, rng);
  const auto same = adain(x, x);
  for (std::size_t l = 0; l < x.size(); ++l) {
    EXPECT_NEAR((same[l].value().array() - x[l].value().array()).abs().maxCoeff(), 0.0, 1e-5);
  }

  const auto style = random_var<double>({1, 1, 6, 6}, rng);
  const auto flat = Var<double>::constant(Tensor<double>(Shape{1, 1, 6, 6}, 3.0));
  const auto out = adain(FeaturePyramid<double>{flat}, FeaturePyramid<double>{style})[0].value().array();
  const double style_mean = style.value().array().mean();
  EXPECT_NEAR((out - style_mean).abs().maxCoeff(), 0.0, 1e-12);

  EXPECT_THROW(adain(FeaturePyramid<double>{flat}, FeaturePyramid<double>{random_var<double>({1, 1, 5, 5}, rng)}),
               ShapeError);
}

TEST(TemporalAttention, OutputIsConvexCombination) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Generator<double> gen(tiny_config(), seed);
    std::mt19937_64 rng(seed + 1000);
    const std::vector<Index> ch = tiny_config().channels;
    const auto c1 = random_pyramid(ch, 2, 24, rng);
    const auto c2 = random_pyramid(ch, 2, 24, rng);
    const auto nz = random_pyramid(ch, 2, 24, rng);
    nn::ForwardContext ctx;
    ctx.training = seed % 2 == 0;
    const auto out = gen.temporal_attention(c1, c2, nz, ctx);
    for (std::size_t l = 0; l < ch.size(); ++l) {
      const auto& a = c2[l].value().array();
      const auto& b = nz[l].value().array();
      const auto& o = out[l].value().array();
      const double tol = 1e-12;
      ASSERT_TRUE((o >= a.min(b) - tol).all() && (o <= a.max(b) + tol).all()) << "seed " << seed << " level " << l;
    }
  }
}

TEST(TemporalAttention, ForcedMask) {
  Generator<double> gen(tiny_config(), 12);
  std::mt19937_64 rng(13);
  const std::vector<Index> ch = tiny_config().channels;
  const auto c1 = random_pyramid(ch, 1, 24, rng);
  const auto c2 = random_pyramid(ch, 1, 24, rng);
  const auto nz = random_pyramid(ch, 1, 24, rng);
  nn::ForwardContext ctx;
  ctx.forced_attention = 1.0;
  const auto ones = gen.temporal_attention(c1, c2, nz, ctx);
  ctx.forced_attention = 0.0;
  const auto zeros = gen.temporal_attention(c1, c2, nz, ctx);
  for (std::size_t l = 0; l < ch.size(); ++l) {
    EXPECT_EQ((ones[l].value().array() - c2[l].value().array()).abs().maxCoeff(), 0.0);
    EXPECT_EQ((zeros[l].value().array() - nz[l].value().array()).abs().maxCoeff(), 0.0);
  }
}

TEST(Generator, ForwardShapeAndDeterminism) {
  GeneratorConfig c;
  c.channels = {8, 16, 32};
  c.residual_blocks = 1;
  Generator<float> a(c, 21), b(c, 21);
  const auto in = random_inputs<float>(2, 96, 22);
  const auto oa = a.forward(in, {});
  const auto ob = b.forward(in, {});
  EXPECT_EQ(oa.smoothed.shape(), (Shape{2, 1, 96, 96}));
  EXPECT_TRUE(oa.smoothed.value().array().isFinite().all());
  EXPECT_TRUE((oa.smoothed.value().array() == ob.smoothed.value().array()).all());
  const auto again = a.forward(in, {});
  EXPECT_TRUE((again.smoothed.value().array() == oa.smoothed.value().array()).all());
}

TEST(Generator, DifferentSeedsDiffer) {
  Generator<float> a(tiny_config(), 1), b(tiny_config(), 2);
  const auto in = random_inputs<float>(1, 24, 3);
  EXPECT_FALSE((a.forward(in, {}).smoothed.value().array() == b.forward(in, {}).smoothed.value().array()).all());
}

TEST(Generator, SmoothingReducesLaplacianEnergy) {
  GeneratorConfig c;
  c.channels = {8, 16, 32};
  c.residual_blocks = 1;
  Generator<float> gen(c, 31);
  const auto out = gen.forward(random_inputs<float>(1, 96, 32), {});
  EXPECT_LT(laplacian_energy(out.smoothed.value()), laplacian_energy(out.decoded.value()));
}

TEST(Generator, ParametersFinite) {
  Generator<float> gen(GeneratorConfig{}, 5);
  EXPECT_TRUE(gen.parameters().all_finite());
  EXPECT_GT(gen.parameters().parameter_count(), 0);
}

TEST(Generator, GradientMatchesFiniteDifferences) {
  Generator<double> gen(tiny_config(), 41);
  const auto in = random_inputs<double>(2, 24, 42);
  std::mt19937_64 rng(43);
  const auto target = Var<double>::constant(gradcheck::random_tensor({2, 1, 24, 24}, rng));
  nn::ForwardContext ctx;
  ctx.training = true;
  const auto loss = [&] {
    const auto out = gen.forward(in, ctx);
    return ad::mean(ad::square(ad::sub(out.smoothed, target)));
  };
  gen.parameters().zero_grad();
  const auto r = gradcheck::check(gradcheck::trainable(gen.parameters()), loss, 3, 44);
  EXPECT_GT(r.checked, 100);
  EXPECT_LT(r.max_relative, 1e-3) << r.worst;
}

TEST(Generator, DecoderGradientMatchesFiniteDifferences) {
  Generator<double> gen(tiny_config(), 51);
  std::mt19937_64 rng(52);
  const auto fused = random_pyramid(tiny_config().channels, 1, 24, rng);
  const auto coarse = random_pyramid(tiny_config().channels, 1, 24, rng);
  const auto loss = [&] { return ad::sum(ad::square(gen.decode(fused, coarse, {}))); };
  std::vector<std::pair<std::string, Var<double>>> decoder;
  for (const auto& p : gradcheck::trainable(gen.parameters())) {
    if (p.first.rfind("decoder", 0) == 0 || p.first.rfind("head", 0) == 0) decoder.push_back(p);
  }
  ASSERT_FALSE(decoder.empty());
  gen.parameters().zero_grad();
  const auto r = gradcheck::check(decoder, loss, 100000, 53);
  EXPECT_LT(r.max_relative, 1e-3) << r.worst;
}
