#include "lstfuse/discriminator.hpp"

#include "gradcheck.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace lstfuse;
using ad::Var;

namespace {

Var<double> random_var(Shape s, std::mt19937_64& rng) {
  return Var<double>::constant(gradcheck::random_tensor(s, rng));
}

}  // namespace

TEST(DiscriminatorConfig, OutputSizeArithmetic) {
  DiscriminatorConfig c;
  EXPECT_EQ(c.output_size(), 2);
  c.channels = {8, 16};
  c.input_size = 8;
  EXPECT_EQ(c.output_size(), 2);
  c.input_size = 4;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = DiscriminatorConfig{};
  c.channels.clear();
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Discriminator, ScoreMapShapeAndDeterminism) {
  Discriminator<float> a(DiscriminatorConfig{}, 3), b(DiscriminatorConfig{}, 3);
  std::mt19937_64 rng(4);
  const auto x = Var<float>::constant(gradcheck::random_tensor({2, 1, 32, 32}, rng).cast<float>());
  const auto c = Var<float>::constant(gradcheck::random_tensor({2, 1, 32, 32}, rng).cast<float>());
  const auto sa = a.forward(x, c, {});
  EXPECT_EQ(sa.shape(), (Shape{2, 1, 2, 2}));
  EXPECT_TRUE(sa.value().array().isFinite().all());
  EXPECT_TRUE((sa.value().array() == b.forward(x, c, {}).value().array()).all());

  const Tensor<float> prob = Discriminator<float>::probability(sa.value());
  EXPECT_TRUE((prob.array() > 0.0f).all() && (prob.array() < 1.0f).all());
}

TEST(Discriminator, RespondsToItsInputs) {
  Discriminator<double> d(DiscriminatorConfig{}, 5);
  std::mt19937_64 rng(6);
  const auto real = random_var({1, 1, 32, 32}, rng);
  const auto fake = random_var({1, 1, 32, 32}, rng);
  const auto cond = random_var({1, 1, 32, 32}, rng);
  const auto a = d.forward(real, cond, {}).value();
  const auto b = d.forward(fake, cond, {}).value();
  EXPECT_GT((a.array() - b.array()).abs().maxCoeff(), 1e-9);
}

TEST(Discriminator, ShapeMismatchThrows) {
  Discriminator<double> d(DiscriminatorConfig{}, 7);
  std::mt19937_64 rng(8);
  EXPECT_THROW(d.forward(random_var({1, 1, 32, 32}, rng), random_var({1, 1, 16, 16}, rng), {}), ShapeError);
  EXPECT_THROW(d.forward(random_var({1, 1, 16, 16}, rng), random_var({1, 1, 16, 16}, rng), {}), ShapeError);
}

TEST(Discriminator, InputGradientMatchesFiniteDifferences) {
  DiscriminatorConfig c;
  c.channels = {4, 8};
  c.input_size = 8;
  Discriminator<double> d(c, 9);
  std::mt19937_64 rng(10);
  auto x = Var<double>::parameter(gradcheck::random_tensor({2, 1, 8, 8}, rng));
  auto cond = Var<double>::parameter(gradcheck::random_tensor({2, 1, 8, 8}, rng));
  const nn::ForwardContext ctx{true, {}};
  const auto loss = [&] { return ad::sum(ad::square(d.forward(x, cond, ctx))); };
  std::vector<std::pair<std::string, Var<double>>> inputs{{"lst", x}, {"condition", cond}};
  for (const auto& p : gradcheck::trainable(d.parameters())) inputs.push_back(p);
  const auto r = gradcheck::check(inputs, loss, 8, 11);
  EXPECT_LT(r.max_relative, 1e-3) << r.worst;
}
