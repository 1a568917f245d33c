#include "lstfuse/training.hpp"

#include "lstfuse/checkpoint.hpp"
#include "lstfuse/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace lstfuse {

void LossWeights::validate() const {
  for (double v : {alpha, beta, gamma, delta}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("loss weights must be finite and non-negative");
  }
  if (alpha + beta + gamma + delta <= 0.0) throw std::invalid_argument("at least one loss weight must be positive");
}

LossWeights LossWeights::parse(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw std::invalid_argument("bad loss weight '" + item + "'");
    }
  }
  if (v.size() != 4) throw std::invalid_argument("expected four loss weights a,b,g,d, got '" + text + "'");
  LossWeights w{v[0], v[1], v[2], v[3]};
  w.validate();
  return w;
}

void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"alpha", w.alpha}, {"beta", w.beta}, {"gamma", w.gamma}, {"delta", w.delta}};
}

void from_json(const nlohmann::json& j, LossWeights& w) {
  w = LossWeights{};
  w.alpha = j.value("alpha", w.alpha);
  w.beta = j.value("beta", w.beta);
  w.gamma = j.value("gamma", w.gamma);
  w.delta = j.value("delta", w.delta);
}

template <typename Scalar>
ad::Var<Scalar> weak_supervision_pool(const ad::Var<Scalar>& fine) {
  const Shape& s = fine.shape();
  if (s.h % 3 != 0 || s.w % 3 != 0) {
    throw ShapeError("weak_supervision_pool: " + s.str() + " is not divisible by 3");
  }
  return ad::avg_pool(fine, 3);
}

template <typename Scalar>
ad::Var<Scalar> discriminator_loss(const ad::Var<Scalar>& real_scores, const ad::Var<Scalar>& fake_scores) {
  require_shape(real_scores.shape() == fake_scores.shape(), "discriminator_loss: score maps differ in shape");
  const ad::Var<Scalar> fake = ad::mean(ad::square(fake_scores));
  const ad::Var<Scalar> real = ad::mean(ad::square(ad::add_scalar(real_scores, Scalar(-1))));
  return ad::scale(ad::add(fake, real), Scalar(0.5));
}

template <typename Scalar>
ad::Var<Scalar> ms_ssim_index(const ad::Var<Scalar>& x, const ad::Var<Scalar>& y, double dynamic_range) {
  require_shape(x.shape() == y.shape() && x.shape().c == 1, "ms_ssim_index: expects matching [N,1,H,W] maps");
  const Index scales = metrics::ms_ssim_scales(std::min(x.shape().h, x.shape().w));
  const std::vector<double> weights = metrics::ms_ssim_weights(scales);
  const auto c1 = static_cast<Scalar>(std::pow(metrics::kSsimK1 * dynamic_range, 2));
  const auto c2 = static_cast<Scalar>(std::pow(metrics::kSsimK2 * dynamic_range, 2));

  ad::Var<Scalar> a = x, b = y, product;
  for (Index s = 0; s < scales; ++s) {
    const Index side = std::min(a.shape().h, a.shape().w);
    const Plane<Scalar> win = metrics::ssim_window(metrics::ssim_window_side(side)).template cast<Scalar>();
    const auto mu_a = ad::filter_valid(a, win);
    const auto mu_b = ad::filter_valid(b, win);
    const auto mu_aa = ad::square(mu_a), mu_bb = ad::square(mu_b), mu_ab = ad::mul(mu_a, mu_b);
    const auto var_a = ad::sub(ad::filter_valid(ad::square(a), win), mu_aa);
    const auto var_b = ad::sub(ad::filter_valid(ad::square(b), win), mu_bb);
    const auto cov = ad::sub(ad::filter_valid(ad::mul(a, b), win), mu_ab);
    auto cs = ad::div(ad::add_scalar(ad::scale(cov, Scalar(2)), c2), ad::add_scalar(ad::add(var_a, var_b), c2));
    if (s + 1 == scales) {
      const auto lum =
          ad::div(ad::add_scalar(ad::scale(mu_ab, Scalar(2)), c1), ad::add_scalar(ad::add(mu_aa, mu_bb), c1));
      cs = ad::mul(lum, cs);
    }
    const auto factor = ad::clamp_min(ad::mean_spatial(cs), static_cast<Scalar>(metrics::kMsSsimFloor));
    const auto term = ad::pow_scalar(factor, static_cast<Scalar>(weights[static_cast<std::size_t>(s)]));
    product = product.defined() ? ad::mul(product, term) : term;
    if (s + 1 < scales) {
      a = ad::avg_pool(a, 2);
      b = ad::avg_pool(b, 2);
    }
  }
  return ad::mean(product);
}

template <typename Scalar>
GeneratorLoss<Scalar> generator_loss(const ad::Var<Scalar>& fake_scores, const ad::Var<Scalar>& gen_pooled,
                                     const ad::Var<Scalar>& ref_mid, const LossWeights& w) {
  w.validate();
  require_shape(gen_pooled.shape() == ref_mid.shape(),
                "generator_loss: pooled output " + gen_pooled.shape().str() + " vs reference " + ref_mid.shape().str());
  GeneratorLoss<Scalar> out;
  out.gan = ad::mean(ad::square(ad::add_scalar(fake_scores, Scalar(-1))));
  out.content = ad::mean(ad::abs(ad::sub(gen_pooled, ref_mid)));

  const Shape& s = gen_pooled.shape();
  const Shape flat{s.n, s.c * s.h * s.w, 1, 1};
  const ad::Var<Scalar> g = ad::reshape(gen_pooled, flat), r = ad::reshape(ref_mid, flat);
  const ad::Var<Scalar> cos = ad::cosine_similarity(g, r, static_cast<Scalar>(kSpectrumEps));
  out.spectrum = ad::add_scalar(ad::scale(ad::mean(cos), Scalar(-1)), Scalar(1));
  for (Index n = 0; n < s.n; ++n) {
    const auto gn = gen_pooled.value().array().segment(n * flat.c, flat.c).matrix().norm();
    const auto rn = ref_mid.value().array().segment(n * flat.c, flat.c).matrix().norm();
    if (gn < kSpectrumEps || rn < kSpectrumEps) ++out.zero_norm_samples;
  }

  out.vision = ad::add_scalar(ad::scale(ms_ssim_index(gen_pooled, ref_mid, kLossDynamicRange), Scalar(-1)), Scalar(1));

  const std::pair<double, ad::Var<Scalar>> terms[] = {
      {w.alpha, out.gan}, {w.beta, out.content}, {w.gamma, out.spectrum}, {w.delta, out.vision}};
  for (const auto& [weight, term] : terms) {
    if (weight == 0.0) continue;
    const ad::Var<Scalar> weighted = ad::scale(term, static_cast<Scalar>(weight));
    out.total = out.total.defined() ? ad::add(out.total, weighted) : weighted;
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (steps < 0) throw std::invalid_argument("steps must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (checkpoint_every < 0) throw std::invalid_argument("checkpoint_every must be non-negative");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"beta1", c.beta1},
       {"beta2", c.beta2},                 {"adam_eps", c.adam_eps},     {"steps", c.steps},
       {"seed", c.seed},                   {"checkpoint_every", c.checkpoint_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.adam_eps = j.value("adam_eps", c.adam_eps);
  c.steps = j.value("steps", c.steps);
  c.seed = j.value("seed", c.seed);
  c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
}

bool LossRecord::finite() const {
  return std::isfinite(loss_g) && std::isfinite(loss_d) && std::isfinite(gan) && std::isfinite(content) &&
         std::isfinite(spectrum) && std::isfinite(vision);
}

void LossTrace::append(const LossRecord& r) {
  if (!r.finite()) throw std::invalid_argument(fmt::format("non-finite loss at step {}", r.step));
  if (!records.empty() && r.step <= records.back().step) {
    throw std::invalid_argument(fmt::format("loss trace step {} does not follow {}", r.step, records.back().step));
  }
  records.push_back(r);
}

std::string LossTrace::csv() const {
  std::string out = "step,loss_G,loss_D,l_gan,l_content,l_spectrum,l_vision\n";
  for (const auto& r : records) {
    out += fmt::format("{},{},{},{},{},{},{}\n", r.step, r.loss_g, r.loss_d, r.gan, r.content, r.spectrum, r.vision);
  }
  return out;
}

void LossTrace::write_csv(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << csv();
}

LossTrace LossTrace::read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  LossTrace t;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    LossRecord r;
    if (std::sscanf(line.c_str(), "%ld,%lf,%lf,%lf,%lf,%lf,%lf", &r.step, &r.loss_g, &r.loss_d, &r.gan, &r.content,
                    &r.spectrum, &r.vision) != 7) {
      throw std::runtime_error("malformed loss trace line: " + line);
    }
    t.append(r);
  }
  return t;
}

template <typename Scalar>
Adam<Scalar>::Adam(std::vector<ad::Var<Scalar>> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

template <typename Scalar>
void Adam<Scalar>::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const auto b1 = static_cast<Scalar>(beta1_), b2 = static_cast<Scalar>(beta2_);
  const auto rate = static_cast<Scalar>(lr_ / c1);
  const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
  const auto eps = static_cast<Scalar>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Tensor<Scalar>& g = params_[i].grad();
    if (g.empty()) continue;
    auto m = m_[i].array();
    auto v = v_[i].array();
    m = b1 * m + (Scalar(1) - b1) * g.array();
    v = b2 * v + (Scalar(1) - b2) * g.array().square();
    params_[i].mutable_value().array() -= rate * m / ((v * inv_c2).sqrt() + eps);
  }
}

nn::ForwardContext training_context() { return nn::ForwardContext{true, {}}; }

GeneratorInputs<float> generator_inputs(const TrainingBatch& batch) {
  using V = ad::Var<float>;
  return {V::constant(batch.fine_indices), V::constant(batch.mid_indices), V::constant(batch.mid_lst_t1),
          V::constant(batch.coarse_t1), V::constant(batch.coarse_t2)};
}

Trainer::Trainer(GeneratorConfig gcfg, DiscriminatorConfig dcfg, TrainConfig tcfg, LossWeights weights)
    : gen_(std::make_unique<Generator<float>>(std::move(gcfg), tcfg.seed)),
      disc_(std::make_unique<Discriminator<float>>(std::move(dcfg), tcfg.seed + 1)),
      tcfg_(std::move(tcfg)),
      weights_(weights),
      adam_g_(gen_->parameters().trainable(), tcfg_.learning_rate, tcfg_.beta1, tcfg_.beta2, tcfg_.adam_eps),
      adam_d_(disc_->parameters().trainable(), tcfg_.learning_rate, tcfg_.beta1, tcfg_.beta2, tcfg_.adam_eps) {
  tcfg_.validate();
  weights_.validate();
  if (disc_->config().input_size != gen_->config().patch_size / 3) {
    throw std::invalid_argument("discriminator input size must be the generator patch size / 3");
  }
}

namespace {

nlohmann::json tensor_summary(const Tensor<float>& t) {
  if (t.empty()) return nullptr;
  const auto a = t.array();
  const Index bad = a.size() - a.isFinite().count();
  const auto finite = a.isFinite().select(a, 0.0f);
  return {{"shape", t.shape().str()},
          {"min", finite.minCoeff()},
          {"max", finite.maxCoeff()},
          {"mean", static_cast<double>(finite.sum()) / static_cast<double>(a.size())},
          {"non_finite", bad}};
}

nlohmann::json batch_snapshot(const TrainingBatch& b, const LossRecord& r) {
  nlohmann::json j;
  j["step"] = r.step;
  j["losses"] = {{"loss_G", r.loss_g}, {"loss_D", r.loss_d}, {"l_gan", r.gan},
                 {"l_content", r.content}, {"l_spectrum", r.spectrum}, {"l_vision", r.vision}};
  j["patches"] = nlohmann::json::array();
  for (const auto& p : b.refs) j["patches"].push_back({{"scene", p.scene}, {"row", p.row}, {"col", p.col}});
  j["inputs"] = {{"fine_indices", tensor_summary(b.fine_indices)}, {"mid_indices", tensor_summary(b.mid_indices)},
                 {"mid_lst_t1", tensor_summary(b.mid_lst_t1)},     {"coarse_t1", tensor_summary(b.coarse_t1)},
                 {"coarse_t2", tensor_summary(b.coarse_t2)},       {"condition", tensor_summary(b.condition)},
                 {"reference", tensor_summary(b.reference)}};
  return j;
}

}  // namespace

LossRecord Trainer::step(const TrainingBatch& batch) {
  if (batch.reference.empty()) throw std::invalid_argument("training batch has no mid-resolution reference at t2");
  const nn::ForwardContext ctx = training_context();
  const GeneratorOutput<float> out = gen_->forward(generator_inputs(batch), ctx);
  const ad::Var<float> pooled = weak_supervision_pool(out.smoothed);
  const ad::Var<float> cond = ad::Var<float>::constant(batch.condition);
  const ad::Var<float> ref = ad::Var<float>::constant(batch.reference);

  LossRecord rec;
  rec.step = ++step_;

  disc_->parameters().zero_grad();
  const ScorePair<float> d_scores = disc_->forward_pair(ref, pooled.detach(), cond, ctx);
  const ad::Var<float> loss_d = discriminator_loss(d_scores.real, d_scores.fake);
  rec.loss_d = loss_d.item();
  if (!std::isfinite(rec.loss_d)) {
    throw TrainingError(fmt::format("discriminator loss is not finite at step {}", rec.step), batch_snapshot(batch, rec));
  }
  ad::backward(loss_d);
  adam_d_.step();

  gen_->parameters().zero_grad();
  const ad::Var<float> scores = disc_->forward_pair(ref, pooled, cond, ctx).fake;
  const GeneratorLoss<float> lg = generator_loss(scores, pooled, ref, weights_);
  rec.loss_g = lg.total.item();
  rec.gan = lg.gan.item();
  rec.content = lg.content.item();
  rec.spectrum = lg.spectrum.item();
  rec.vision = lg.vision.item();
  if (!rec.finite()) {
    throw TrainingError(fmt::format("generator loss is not finite at step {}", rec.step), batch_snapshot(batch, rec));
  }
  if (lg.zero_norm_samples > 0) {
    fmt::print(stderr, "step {}: {} patch(es) with near-zero norm in the spectrum term\n", rec.step,
               lg.zero_norm_samples);
  }
  ad::backward(lg.total);
  adam_g_.step();
  trace_.append(rec);
  return rec;
}

void Trainer::run(const PatchSet& patches, const std::function<void(const LossRecord&)>& on_step) {
  if (patches.empty()) throw std::invalid_argument("cannot train on an empty patch set");
  if (patches.fine_size() != gen_->config().patch_size) {
    throw std::invalid_argument(fmt::format("patch size {} does not match the generator patch size {}",
                                            patches.fine_size(), gen_->config().patch_size));
  }
  norm_ = patches.normalization();
  const std::size_t batch = std::min<std::size_t>(static_cast<std::size_t>(tcfg_.batch_size), patches.size());
  std::mt19937_64 rng(tcfg_.seed ^ 0x5eedULL);
  std::vector<std::size_t> order(patches.size());
  std::size_t cursor = order.size();
  const bool checkpoints = !tcfg_.checkpoint_dir.empty();

  for (Index s = 0; s < tcfg_.steps; ++s) {
    if (cursor + batch > order.size()) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const TrainingBatch b = patches.batch(std::span<const std::size_t>(order.data() + cursor, batch));
    cursor += batch;
    const LossRecord rec = step(b);
    if (on_step) on_step(rec);
    if (checkpoints && tcfg_.checkpoint_every > 0 && rec.step % tcfg_.checkpoint_every == 0) {
      save_checkpoint(tcfg_.checkpoint_dir / fmt::format("checkpoint_step{:06d}.lstf", rec.step), *gen_, disc_.get(),
                      norm_);
    }
  }
  if (checkpoints) save_checkpoint(tcfg_.checkpoint_dir / "checkpoint.lstf", *gen_, disc_.get(), norm_);
}

#define LSTFUSE_INSTANTIATE(T)                                                                               \
  template ad::Var<T> weak_supervision_pool(const ad::Var<T>&);                                              \
  template ad::Var<T> discriminator_loss(const ad::Var<T>&, const ad::Var<T>&);                              \
  template ad::Var<T> ms_ssim_index(const ad::Var<T>&, const ad::Var<T>&, double);                           \
  template GeneratorLoss<T> generator_loss(const ad::Var<T>&, const ad::Var<T>&, const ad::Var<T>&,          \
                                           const LossWeights&);                                              \
  template class Adam<T>;

LSTFUSE_INSTANTIATE(float)
LSTFUSE_INSTANTIATE(double)

#undef LSTFUSE_INSTANTIATE

}  // namespace lstfuse
