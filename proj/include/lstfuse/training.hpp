#pragma once

#include "lstfuse/dataset.hpp"
#include "lstfuse/discriminator.hpp"
#include "lstfuse/generator.hpp"

#include "json.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace lstfuse {

/// Coefficients of the adversarial, L1 content, cosine spectrum and MS-SSIM vision terms.
struct LossWeights {
  double alpha = 1.0;
  double beta = 100.0;
  double gamma = 1.0;
  double delta = 1.0;

  void validate() const;
  /// "a,b,g,d"
  static LossWeights parse(const std::string& text);
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

/// Loss-side MS-SSIM sees normalized LST in [-1, 1].
inline constexpr double kLossDynamicRange = 2.0;
inline constexpr double kSpectrumEps = 1e-8;

/// Non-overlapping 3x3 means taking a fine map to the mid grid.
template <typename Scalar>
ad::Var<Scalar> weak_supervision_pool(const ad::Var<Scalar>& fine);

/// Least squares: 0.5 mean(fake^2) + 0.5 mean((real - 1)^2).
template <typename Scalar>
ad::Var<Scalar> discriminator_loss(const ad::Var<Scalar>& real_scores, const ad::Var<Scalar>& fake_scores);

/// Batch mean of per-sample MS-SSIM for [N,1,H,W] maps, differentiable. Same window and scale rules
/// as metrics::ms_ssim; sides must stay even across the scales used.
template <typename Scalar>
ad::Var<Scalar> ms_ssim_index(const ad::Var<Scalar>& x, const ad::Var<Scalar>& y, double dynamic_range);

template <typename Scalar>
struct GeneratorLoss {
  ad::Var<Scalar> total;
  ad::Var<Scalar> gan;
  ad::Var<Scalar> content;
  ad::Var<Scalar> spectrum;
  ad::Var<Scalar> vision;
  Index zero_norm_samples = 0;  // spectrum samples whose norm hit the epsilon floor
};

/// Terms with zero weight are left out of the total, so they contribute no gradient.
template <typename Scalar>
GeneratorLoss<Scalar> generator_loss(const ad::Var<Scalar>& fake_scores, const ad::Var<Scalar>& gen_pooled,
                                     const ad::Var<Scalar>& ref_mid, const LossWeights& w);

struct TrainConfig {
  double learning_rate = 2e-4;
  Index batch_size = 32;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  Index steps = 1000;
  std::uint64_t seed = 0;
  Index checkpoint_every = 0;  // 0: only the final checkpoint
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct LossRecord {
  Index step = 0;
  double loss_g = 0.0;
  double loss_d = 0.0;
  double gan = 0.0;
  double content = 0.0;
  double spectrum = 0.0;
  double vision = 0.0;

  bool finite() const;
};

struct LossTrace {
  std::vector<LossRecord> records;

  /// Rejects non-finite values and steps that do not increase.
  void append(const LossRecord& r);
  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
  static LossTrace read_csv(const std::filesystem::path& path);
};

/// Adaptive moment estimation with bias correction over a fixed parameter list.
template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<ad::Var<Scalar>> params, double lr, double beta1, double beta2, double eps);
  void step();
  Index steps_taken() const { return t_; }

 private:
  std::vector<ad::Var<Scalar>> params_;
  std::vector<Tensor<Scalar>> m_;
  std::vector<Tensor<Scalar>> v_;
  double lr_, beta1_, beta2_, eps_;
  Index t_ = 0;
};

/// Raised when a loss turns non-finite; `snapshot` describes the offending batch.
class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, nlohmann::json snapshot)
      : std::runtime_error(what), snapshot(std::move(snapshot)) {}
  nlohmann::json snapshot;
};

/// Alternating least-squares adversarial training: one discriminator step then one generator step per batch.
class Trainer {
 public:
  Trainer(GeneratorConfig gcfg, DiscriminatorConfig dcfg, TrainConfig tcfg, LossWeights weights);

  Generator<float>& generator() { return *gen_; }
  Discriminator<float>& discriminator() { return *disc_; }
  const TrainConfig& config() const { return tcfg_; }
  const LossWeights& weights() const { return weights_; }
  const LossTrace& trace() const { return trace_; }

  LossRecord step(const TrainingBatch& batch);

  /// Runs config().steps steps over shuffled batches, writing checkpoints when a directory is configured.
  void run(const PatchSet& patches, const std::function<void(const LossRecord&)>& on_step = {});

 private:
  std::unique_ptr<Generator<float>> gen_;
  std::unique_ptr<Discriminator<float>> disc_;
  TrainConfig tcfg_;
  LossWeights weights_;
  Adam<float> adam_g_;
  Adam<float> adam_d_;
  LossTrace trace_;
  Index step_ = 0;
  Normalization norm_;
};

nn::ForwardContext training_context();
GeneratorInputs<float> generator_inputs(const TrainingBatch& batch);

}  // namespace lstfuse
