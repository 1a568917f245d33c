#include "lstfuse/checkpoint.hpp"
#include "lstfuse/raster.hpp"
#include "lstfuse/training.hpp"

#include "fixtures.hpp"
#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace lstfuse;
using ad::Var;
using fixtures::TempDir;

namespace {

Var<double> constant(Shape s, double v) { return Var<double>::constant(Tensor<double>(s, v)); }

Var<double> random_var(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  return Var<double>::constant(gradcheck::random_tensor(s, rng, lo, hi));
}

GeneratorConfig tiny_generator() {
  GeneratorConfig c;
  c.channels = {4, 8, 8};
  c.residual_blocks = 1;
  c.patch_size = 24;
  return c;
}

DiscriminatorConfig tiny_discriminator() {
  DiscriminatorConfig c;
  c.channels = {8, 16};
  c.input_size = 8;
  return c;
}

TrainConfig tiny_train(Index steps) {
  TrainConfig t;
  t.batch_size = 4;
  t.steps = steps;
  t.seed = 17;
  return t;
}

}  // namespace

TEST(WeakSupervisionPool, HandCases) {
  const auto flat = weak_supervision_pool(constant({1, 1, 96, 96}, 7.0));
  EXPECT_EQ(flat.shape(), (Shape{1, 1, 32, 32}));
  EXPECT_NEAR((flat.value().array() - 7.0).abs().maxCoeff(), 0.0, 1e-12);

  Tensor<double> delta(Shape{1, 1, 9, 9});
  delta(0, 0, 4, 5) = 9.0;
  const auto pooled = weak_supervision_pool(Var<double>::constant(delta)).value();
  for (Index y = 0; y < 3; ++y) {
    for (Index x = 0; x < 3; ++x) EXPECT_DOUBLE_EQ(pooled(0, 0, y, x), (y == 1 && x == 1) ? 1.0 : 0.0);
  }
  EXPECT_THROW(weak_supervision_pool(constant({1, 1, 10, 9}, 0.0)), ShapeError);
}

TEST(WeakSupervisionPool, MatchesBlockAverage) {
  std::mt19937_64 rng(1);
  const auto x = random_var({1, 1, 24, 24}, rng, 280.0, 320.0);
  Plane<float> plane = x.value().plane(0, 0).cast<float>();
  const Raster r(GridSpec{24, 24, 10.0, 0.0, 0.0, "EPSG:32631"}, {plane});
  const Raster avg = block_average(r, 3);
  const auto pooled = weak_supervision_pool(x).value();
  for (Index y = 0; y < 8; ++y) {
    for (Index c = 0; c < 8; ++c) EXPECT_NEAR(pooled(0, 0, y, c), avg.band(0)(y, c), 1e-4);
  }
}

TEST(WeakSupervisionPool, GradientIsOneNinth) {
  std::mt19937_64 rng(2);
  auto x = Var<double>::parameter(gradcheck::random_tensor({2, 1, 12, 12}, rng));
  const auto weights = random_var({2, 1, 4, 4}, rng);
  ad::backward(ad::sum(ad::mul(weak_supervision_pool(x), weights)));
  for (Index n = 0; n < 2; ++n) {
    for (Index y = 0; y < 12; ++y) {
      for (Index c = 0; c < 12; ++c) {
        EXPECT_NEAR(x.grad()(n, 0, y, c), weights.value()(n, 0, y / 3, c / 3) / 9.0, 1e-15);
      }
    }
  }
}

TEST(DiscriminatorLoss, HandValues) {
  const Shape s{2, 1, 2, 2};
  EXPECT_DOUBLE_EQ(discriminator_loss(constant(s, 1.0), constant(s, 0.0)).item(), 0.0);
  EXPECT_DOUBLE_EQ(discriminator_loss(constant(s, 0.5), constant(s, 0.5)).item(), 0.25);
  EXPECT_DOUBLE_EQ(discriminator_loss(constant(s, 0.0), constant(s, 1.0)).item(), 1.0);
  EXPECT_THROW(discriminator_loss(constant(s, 0.0), constant({2, 1, 3, 3}, 0.0)), ShapeError);
}

TEST(GeneratorLoss, JointOptimumIsZero) {
  std::mt19937_64 rng(3);
  const auto ref = random_var({2, 1, 32, 32}, rng);
  const auto lg = generator_loss(constant({2, 1, 2, 2}, 1.0), ref, ref, LossWeights{});
  EXPECT_NEAR(lg.total.item(), 0.0, 1e-6);
}

TEST(GeneratorLoss, SingleTermHandValues) {
  std::mt19937_64 rng(4);
  const auto ref = random_var({2, 1, 32, 32}, rng);
  const auto scores = constant({2, 1, 2, 2}, 0.0);

  const auto shifted = ad::add_scalar(ref, 0.1);
  const auto content = generator_loss(scores, shifted, ref, LossWeights{0.0, 1.0, 0.0, 0.0});
  EXPECT_NEAR(content.total.item(), 0.1, 1e-12);

  const auto spectrum = generator_loss(scores, ad::scale(ref, -1.0), ref, LossWeights{0.0, 0.0, 1.0, 0.0});
  EXPECT_NEAR(spectrum.total.item(), 2.0, 1e-12);

  const auto gan = generator_loss(scores, ref, ref, LossWeights{1.0, 0.0, 0.0, 0.0});
  EXPECT_NEAR(gan.total.item(), 1.0, 1e-12);
}

TEST(GeneratorLoss, TermsStayInRangeAndSumWithWeights) {
  std::mt19937_64 rng(5);
  const LossWeights w{0.5, 20.0, 2.0, 3.0};
  for (int t = 0; t < 20; ++t) {
    const auto ref = random_var({2, 1, 32, 32}, rng);
    const auto gen = random_var({2, 1, 32, 32}, rng);
    const auto scores = random_var({2, 1, 2, 2}, rng, -2.0, 2.0);
    const auto lg = generator_loss(scores, gen, ref, w);
    EXPECT_GE(lg.gan.item(), 0.0);
    EXPECT_GE(lg.content.item(), 0.0);
    EXPECT_GE(lg.spectrum.item(), 0.0);
    EXPECT_LE(lg.spectrum.item(), 2.0);
    EXPECT_GE(lg.vision.item(), 0.0);
    EXPECT_LE(lg.vision.item(), 2.0);
    const double expected = 0.5 * lg.gan.item() + 20.0 * lg.content.item() + 2.0 * lg.spectrum.item() +
                            3.0 * lg.vision.item();
    EXPECT_NEAR(lg.total.item(), expected, 1e-10);
  }
}

TEST(GeneratorLoss, ZeroNormPatchIsGuarded) {
  const auto zero = constant({1, 1, 32, 32}, 0.0);
  std::mt19937_64 rng(6);
  const auto ref = random_var({1, 1, 32, 32}, rng);
  const auto lg = generator_loss(constant({1, 1, 2, 2}, 1.0), zero, ref, LossWeights{});
  EXPECT_TRUE(std::isfinite(lg.total.item()));
  EXPECT_EQ(lg.zero_norm_samples, 1);
}

TEST(GeneratorLoss, ZeroWeightRemovesGradientExactly) {
  std::mt19937_64 rng(7);
  const auto ref = random_var({2, 1, 24, 24}, rng);
  const Tensor<double> g0 = gradcheck::random_tensor({2, 1, 24, 24}, rng);
  const Tensor<double> s0 = gradcheck::random_tensor({2, 1, 2, 2}, rng);

  auto grads = [&](const LossWeights& w) {
    auto gen = Var<double>::parameter(g0);
    auto scores = Var<double>::parameter(s0);
    ad::backward(generator_loss(scores, gen, ref, w).total);
    return std::make_pair(gen.grad(), scores.grad());
  };
  const LossWeights full{1.0, 100.0, 1.0, 1.0};
  const char* names[] = {"alpha", "beta", "gamma", "delta"};
  for (int term = 0; term < 4; ++term) {
    LossWeights without = full;
    LossWeights only{0.0, 0.0, 0.0, 0.0};
    double* wf[] = {&without.alpha, &without.beta, &without.gamma, &without.delta};
    double* wo[] = {&only.alpha, &only.beta, &only.gamma, &only.delta};
    *wf[term] = 0.0;
    *wo[term] = *(&full.alpha + term);
    // The remaining terms plus the single term must reproduce the full gradient.
    const auto [a_gen, a_scores] = grads(full);
    const auto [b_gen, b_scores] = grads(without);
    const auto [c_gen, c_scores] = grads(only);
    auto dense = [](const Tensor<double>& t, Shape s) { return t.empty() ? Tensor<double>(s) : t; };
    const Tensor<double> bg = dense(b_gen, g0.shape()), cg = dense(c_gen, g0.shape());
    const Tensor<double> bs = dense(b_scores, s0.shape()), cs = dense(c_scores, s0.shape());
    EXPECT_LT((a_gen.array() - bg.array() - cg.array()).abs().maxCoeff(), 1e-10) << names[term];
    EXPECT_LT((a_scores.array() - bs.array() - cs.array()).abs().maxCoeff(), 1e-10) << names[term];
  }
  // With alpha = 0 nothing flows into the scores at all.
  auto scores = Var<double>::parameter(s0);
  ad::backward(generator_loss(scores, Var<double>::parameter(g0), ref, LossWeights{0.0, 1.0, 1.0, 1.0}).total);
  EXPECT_TRUE(scores.grad().empty() || scores.grad().array().abs().maxCoeff() == 0.0);
}

TEST(GeneratorLoss, CompositeGradientMatchesFiniteDifferences) {
  Generator<double> gen(tiny_generator(), 31);
  Discriminator<double> disc(tiny_discriminator(), 32);
  std::mt19937_64 rng(33);
  GeneratorInputs<double> in{random_var({2, 3, 24, 24}, rng), random_var({2, 3, 24, 24}, rng),
                             random_var({2, 1, 24, 24}, rng), random_var({2, 1, 24, 24}, rng),
                             random_var({2, 1, 24, 24}, rng)};
  const auto cond = ad::avg_pool(in.coarse_lst_t2, Index{3});
  const auto ref = random_var({2, 1, 8, 8}, rng, -0.5, 0.5);
  const nn::ForwardContext ctx{true, {}};
  const LossWeights w{1.0, 100.0, 1.0, 1.0};
  const auto loss = [&] {
    const auto pooled = weak_supervision_pool(gen.forward(in, ctx).smoothed);
    return generator_loss(disc.forward(pooled, cond, ctx), pooled, ref, w).total;
  };
  gen.parameters().zero_grad();
  const auto r = gradcheck::check(gradcheck::trainable(gen.parameters()), loss, 3, 34);
  EXPECT_GT(r.checked, 100);
  EXPECT_LT(r.max_relative, 1e-3) << r.worst;
}

TEST(DiscriminatorLoss, GradientMatchesFiniteDifferences) {
  Discriminator<double> disc(tiny_discriminator(), 41);
  std::mt19937_64 rng(42);
  const auto real = random_var({3, 1, 8, 8}, rng);
  const auto fake = random_var({3, 1, 8, 8}, rng);
  const auto cond = random_var({3, 1, 8, 8}, rng);
  const nn::ForwardContext ctx{true, {}};
  const auto loss = [&] { return discriminator_loss(disc.forward(real, cond, ctx), disc.forward(fake, cond, ctx)); };
  disc.parameters().zero_grad();
  const auto r = gradcheck::check(gradcheck::trainable(disc.parameters()), loss, 6, 43);
  EXPECT_LT(r.max_relative, 1e-3) << r.worst;
}

TEST(LossWeights, ParseAndValidate) {
  const auto w = LossWeights::parse("1,50,0.5,2");
  EXPECT_DOUBLE_EQ(w.alpha, 1.0);
  EXPECT_DOUBLE_EQ(w.beta, 50.0);
  EXPECT_DOUBLE_EQ(w.gamma, 0.5);
  EXPECT_DOUBLE_EQ(w.delta, 2.0);
  EXPECT_THROW(LossWeights::parse("1,2,3"), std::invalid_argument);
  EXPECT_THROW(LossWeights::parse("1,-2,3,4"), std::invalid_argument);
  EXPECT_THROW(LossWeights::parse("0,0,0,0"), std::invalid_argument);
  EXPECT_THROW(LossWeights::parse("a,b,c,d"), std::invalid_argument);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  nlohmann::json j = TrainConfig{};
  EXPECT_DOUBLE_EQ(j.at("learning_rate").get<double>(), 2e-4);
  EXPECT_EQ(j.at("batch_size").get<Index>(), 32);
}

TEST(LossTrace, CsvRoundTripAndOrdering) {
  TempDir dir("trace");
  LossTrace t;
  t.append({1, 2.5, 0.25, 0.9, 0.0125, 0.5, 0.75});
  t.append({2, 2.25, 0.3, 0.8, 0.01, 0.4, 0.7});
  EXPECT_EQ(t.csv().substr(0, t.csv().find('\n')), "step,loss_G,loss_D,l_gan,l_content,l_spectrum,l_vision");
  t.write_csv(dir.path() / "loss.csv");
  const LossTrace back = LossTrace::read_csv(dir.path() / "loss.csv");
  ASSERT_EQ(back.records.size(), 2u);
  EXPECT_EQ(back.records[1].step, 2);
  EXPECT_DOUBLE_EQ(back.records[0].content, 0.0125);
  EXPECT_DOUBLE_EQ(back.records[1].loss_d, 0.3);

  EXPECT_THROW(t.append({2, 1, 1, 1, 1, 1, 1}), std::invalid_argument);
  EXPECT_THROW(t.append({3, std::numeric_limits<double>::quiet_NaN(), 1, 1, 1, 1, 1}), std::invalid_argument);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto p = Var<double>::parameter(Tensor<double>(Shape{1, 1, 1, 3}));
  p.mutable_value().array() << 1.0, -2.0, 0.5;
  Adam<double> opt({p}, 0.01, 0.5, 0.999, 1e-8);
  p.mutable_grad().array() << 4.0, -0.001, 0.0;
  opt.step();
  // Bias-corrected first step: lr * g / (|g| + eps).
  EXPECT_NEAR(p.value().array()[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p.value().array()[1], -2.0 + 0.01, 1e-7);
  EXPECT_DOUBLE_EQ(p.value().array()[2], 0.5);
  EXPECT_EQ(opt.steps_taken(), 1);
}

TEST(Trainer, RejectsMismatchedDiscriminatorSize) {
  DiscriminatorConfig d = tiny_discriminator();
  d.input_size = 16;
  EXPECT_THROW(Trainer(tiny_generator(), d, tiny_train(1), LossWeights{}), std::invalid_argument);
}

TEST(Trainer, OneStepIsReproducible) {
  TempDir dir("determinism");
  const PatchSet ps = fixtures::synthetic_patches(dir.path(), 1, 48, 24, 24);
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const TrainingBatch b = ps.batch(idx);
  Trainer a(tiny_generator(), tiny_discriminator(), tiny_train(1), LossWeights{});
  Trainer c(tiny_generator(), tiny_discriminator(), tiny_train(1), LossWeights{});
  const LossRecord ra = a.step(b), rc = c.step(b);
  EXPECT_EQ(ra.loss_g, rc.loss_g);
  EXPECT_EQ(ra.loss_d, rc.loss_d);
  EXPECT_EQ(a.trace().csv(), c.trace().csv());
  const auto& pa = a.generator().parameters().entries();
  const auto& pc = c.generator().parameters().entries();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    ASSERT_TRUE((pa[i].var.value().array() == pc[i].var.value().array()).all()) << pa[i].name;
  }
}

TEST(Trainer, GradientReachesGeneratorThroughPooling) {
  TempDir dir("reach");
  const PatchSet ps = fixtures::synthetic_patches(dir.path(), 1, 48, 24, 24);
  Trainer t(tiny_generator(), tiny_discriminator(), tiny_train(1), LossWeights{0.0, 1.0, 0.0, 0.0});
  std::vector<Tensor<float>> before;
  for (const auto& e : t.generator().parameters().entries()) before.push_back(e.var.value());
  const std::vector<std::size_t> idx{0, 1};
  t.step(ps.batch(idx));
  Index changed = 0;
  const auto& entries = t.generator().parameters().entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].trainable && !(entries[i].var.value().array() == before[i].array()).all()) ++changed;
  }
  EXPECT_GT(changed, 0);
  // The head feeds the output directly, so it must always move.
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name.rfind("decoder.head", 0) == 0) {
      EXPECT_FALSE((entries[i].var.value().array() == before[i].array()).all()) << entries[i].name;
    }
  }
}

TEST(Trainer, NonFiniteLossRaisesWithSnapshot) {
  TempDir dir("nonfinite");
  const PatchSet ps = fixtures::synthetic_patches(dir.path(), 1, 48, 24, 24);
  const std::vector<std::size_t> idx{0, 3};
  TrainingBatch b = ps.batch(idx);
  b.reference(1, 0, 2, 2) = std::numeric_limits<float>::quiet_NaN();
  Trainer t(tiny_generator(), tiny_discriminator(), tiny_train(1), LossWeights{});
  try {
    t.step(b);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    ASSERT_EQ(e.snapshot.at("patches").size(), 2u);
    EXPECT_EQ(e.snapshot["patches"][1]["row"], 24);
    EXPECT_EQ(e.snapshot["inputs"]["reference"]["non_finite"], 1);
  }
  EXPECT_TRUE(t.trace().records.empty());
}

TEST(Trainer, CheckpointRoundTripIsBitwise) {
  TempDir dir("checkpoint");
  const PatchSet ps = fixtures::synthetic_patches(dir.path(), 1, 48, 24, 24);
  TrainConfig tc = tiny_train(3);
  tc.checkpoint_dir = dir.path() / "ckpt";
  Trainer t(tiny_generator(), tiny_discriminator(), tc, LossWeights{});
  t.run(ps);
  ASSERT_EQ(t.trace().records.size(), 3u);
  const Checkpoint ck = read_checkpoint(dir.path() / "ckpt" / "checkpoint.lstf");
  EXPECT_EQ(ck.generator.channels, tiny_generator().channels);
  ASSERT_TRUE(ck.discriminator.has_value());
  EXPECT_DOUBLE_EQ(ck.normalization.lo_k, ps.normalization().lo_k);
  const auto loaded = ck.make_generator();
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const auto in = generator_inputs(ps.batch(idx));
  const auto a = t.generator().forward(in, {}).smoothed.value();
  const auto b = loaded->forward(in, {}).smoothed.value();
  EXPECT_TRUE((a.array() == b.array()).all());
  const auto& pa = t.discriminator().parameters().entries();
  const auto disc = ck.make_discriminator();
  const auto& pb = disc->parameters().entries();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE((pa[i].var.value().array() == pb[i].var.value().array()).all()) << pa[i].name;
  }
}
