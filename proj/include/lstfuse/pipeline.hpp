#pragma once

#include "lstfuse/dataset.hpp"
#include "lstfuse/discriminator.hpp"
#include "lstfuse/generator.hpp"
#include "lstfuse/metrics.hpp"
#include "lstfuse/synthscene.hpp"
#include "lstfuse/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

// The command-line stages as library calls. Progress goes to `log`; failures throw.
namespace lstfuse::pipeline {

namespace fs = std::filesystem;

struct SynthOptions {
  fs::path out;
  SynthDatasetSpec spec;
};

Manifest synth(const SynthOptions& opt, std::ostream& log);

struct PreprocessOptions {
  fs::path manifest;
  fs::path out;  // patch archive directory
  std::string split = "train";
  Index patch_size = 96;
  Index stride = 24;
  bool allow_leakage = false;
};

struct PreprocessResult {
  ValidationReport validation;
  LeakageReport leakage;
  std::size_t patches = 0;
  Index clamped = 0;
};

/// Validates the manifest, checks leakage, prepares every scene of the split and writes the patch archive.
/// Constraint violations, and leakage unless allowed, are errors.
PreprocessResult preprocess(const PreprocessOptions& opt, std::ostream& log);

struct TrainOptions {
  fs::path patches;   // archive from preprocess
  fs::path manifest;  // used when no archive is given
  fs::path out;
  GeneratorConfig generator;
  DiscriminatorConfig discriminator;
  TrainConfig train;
  LossWeights weights;
  Index log_every = 50;
};

/// Writes checkpoint.lstf (plus periodic ones), loss.csv, loss.png and train_config.json into `out`.
/// A non-finite loss leaves failure_snapshot.json and the partial loss.csv there before rethrowing.
LossTrace train(const TrainOptions& opt, std::ostream& log);

struct InferOptions {
  fs::path checkpoint;
  fs::path manifest;
  fs::path out;
  std::optional<std::string> date;  // target date; all samples of `split` when unset
  std::string split = "test";
  Index stride = 48;
};

struct Prediction {
  std::string id;
  std::string date;
  fs::path fused;
  fs::path bicubic;
  fs::path png;
};

/// Writes <id>_fused.tif, <id>_fused.png, <id>_bicubic.tif and predictions.json into `out`.
std::vector<Prediction> infer(const InferOptions& opt, std::ostream& log);

struct EvaluateOptions {
  fs::path predictions;  // directory holding predictions.json
  fs::path manifest;
  fs::path out;  // defaults to the predictions directory
  std::optional<fs::path> sensors_csv;
};

struct EvaluateResult {
  metrics::MetricsReport report;
  std::vector<metrics::CorrelationRow> correlations;
};

/// Scores fused and bicubic predictions against the target-date mid LST; writes metrics.json and
/// metrics.txt, plus correlations.json and correlations.txt when a sensor file is given.
EvaluateResult evaluate(const EvaluateOptions& opt, std::ostream& log);

/// Crop of `r` covering `target`, which must lie on the same pixel lattice.
Raster crop_to(const Raster& r, const GridSpec& target);

}  // namespace lstfuse::pipeline
