// Command-line front end: synth, preprocess, train, infer, evaluate.
#include "lstfuse/pipeline.hpp"

#include "CLI11.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace lstfuse;
namespace fs = std::filesystem;

std::vector<Index> parse_channels(const std::string& text, const char* flag) {
  std::vector<Index> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    long long v = 0;
    try {
      v = std::stoll(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v <= 0) throw CLI::ValidationError(flag, "expected positive integers, got '" + text + "'");
    out.push_back(static_cast<Index>(v));
  }
  if (out.empty()) throw CLI::ValidationError(flag, "empty channel list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-resolution land surface temperature by weakly supervised spatio-temporal fusion"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Expand all help");

  // synth
  auto* synth = app.add_subcommand("synth", "Write a seeded synthetic dataset (GeoTIFFs + manifest.json)");
  pipeline::SynthOptions so;
  synth->add_option("--out", so.out, "Output directory")->required();
  synth->add_option("--seed", so.spec.base.seed, "Random seed");
  synth->add_option("--train-scenes", so.spec.train_scenes, "Training scenes")->check(CLI::PositiveNumber);
  synth->add_option("--test-scenes", so.spec.test_scenes, "Test scenes")->check(CLI::NonNegativeNumber);
  synth->add_option("--size", so.spec.base.size, "Fine scene side in pixels");
  synth->add_option("--coarse-factor", so.spec.base.coarse_factor, "Fine pixels per coarse pixel");

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "Validate a manifest and cut training patches");
  pipeline::PreprocessOptions po;
  prep->add_option("--manifest", po.manifest, "Dataset manifest")->required();
  prep->add_option("--out", po.out, "Patch archive directory")->required();
  prep->add_option("--split", po.split, "Manifest split to patch");
  prep->add_option("--patch-size", po.patch_size, "Fine patch side");
  prep->add_option("--stride", po.stride, "Fine patch stride");
  prep->add_flag("--allow-leakage", po.allow_leakage, "Continue when training dates leak");
  std::uint64_t prep_seed = 0;
  prep->add_option("--seed", prep_seed, "Accepted for symmetry; preprocessing is not random");

  // train
  auto* tr = app.add_subcommand("train", "Train the generator and discriminator");
  pipeline::TrainOptions to;
  std::string weights_text = "1,100,1,1";
  std::string gen_channels, disc_channels;
  fs::path config_path;
  tr->add_option("--patches", to.patches, "Patch archive from preprocess");
  tr->add_option("--manifest", to.manifest, "Manifest (patches are cut on the fly)");
  tr->add_option("--out", to.out, "Run directory for checkpoints, loss.csv and loss.png")->required();
  tr->add_option("--config", config_path, "JSON with generator/discriminator/train/loss_weights blocks")
      ->check(CLI::ExistingFile);
  auto* o_seed = tr->add_option("--seed", to.train.seed, "Random seed");
  auto* o_steps = tr->add_option("--steps", to.train.steps, "Training steps");
  auto* o_batch = tr->add_option("--batch-size", to.train.batch_size, "Patches per batch");
  auto* o_lr = tr->add_option("--lr", to.train.learning_rate, "Learning rate");
  auto* o_lw = tr->add_option("--loss-weights", weights_text, "alpha,beta,gamma,delta");
  auto* o_gc = tr->add_option("--gen-channels", gen_channels, "Generator channels per level, e.g. 32,64,128,192,256");
  Index res_blocks = 0;
  bool coarse_residual = true;
  auto* o_rb = tr->add_option("--res-blocks", res_blocks, "Residual blocks per level");
  auto* o_cr = tr->add_option("--coarse-residual", coarse_residual,
                              "Add the decoder output to the target-date coarse input (true/false)");
  auto* o_dc = tr->add_option("--disc-channels", disc_channels, "Discriminator channels, e.g. 64,128,256,512");
  auto* o_ce = tr->add_option("--checkpoint-every", to.train.checkpoint_every, "Steps between checkpoints (0: final only)");
  tr->add_option("--log-every", to.log_every, "Steps between progress lines");

  // infer
  auto* inf = app.add_subcommand("infer", "Predict fine LST for target dates");
  pipeline::InferOptions io;
  std::string date;
  inf->add_option("--checkpoint", io.checkpoint, "Trained checkpoint")->required();
  inf->add_option("--manifest", io.manifest, "Dataset manifest")->required();
  inf->add_option("--out", io.out, "Output directory")->required();
  inf->add_option("--date", date, "Target date YYYY-MM-DD (default: every sample of --split)");
  inf->add_option("--split", io.split, "Split predicted when no date is given");
  inf->add_option("--stride", io.stride, "Tile stride in fine pixels");
  std::uint64_t infer_seed = 0;
  inf->add_option("--seed", infer_seed, "Accepted for symmetry; inference is not random");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score predictions against target-date mid LST");
  pipeline::EvaluateOptions eo;
  fs::path sensors;
  ev->add_option("--pred", eo.predictions, "Directory written by infer")->required();
  ev->add_option("--manifest", eo.manifest, "Dataset manifest")->required();
  ev->add_option("--out", eo.out, "Output directory (default: --pred)");
  ev->add_option("--sensors-csv", sensors, "Ground sensor CSV for PCC/SRCC");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, std::cout, std::cerr);
  }

  try {
    if (*synth) {
      pipeline::synth(so, std::cerr);
    } else if (*prep) {
      pipeline::preprocess(po, std::cerr);
    } else if (*tr) {
      if (to.patches.empty() && to.manifest.empty()) throw std::invalid_argument("train needs --patches or --manifest");
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        nlohmann::json j;
        in >> j;
        if (j.contains("generator")) to.generator = j["generator"].get<GeneratorConfig>();
        if (j.contains("discriminator")) to.discriminator = j["discriminator"].get<DiscriminatorConfig>();
        if (j.contains("loss_weights")) to.weights = j["loss_weights"].get<LossWeights>();
        if (j.contains("train")) {
          // Flags given on the command line win over the file.
          const TrainConfig flags = to.train;
          to.train = j["train"].get<TrainConfig>();
          if (*o_seed) to.train.seed = flags.seed;
          if (*o_steps) to.train.steps = flags.steps;
          if (*o_batch) to.train.batch_size = flags.batch_size;
          if (*o_lr) to.train.learning_rate = flags.learning_rate;
          if (*o_ce) to.train.checkpoint_every = flags.checkpoint_every;
        }
      }
      if (*o_lw || config_path.empty()) to.weights = LossWeights::parse(weights_text);
      if (*o_rb) to.generator.residual_blocks = res_blocks;
      if (*o_cr) to.generator.coarse_residual = coarse_residual;
      if (*o_gc) to.generator.channels = parse_channels(gen_channels, "--gen-channels");
      if (*o_dc) to.discriminator.channels = parse_channels(disc_channels, "--disc-channels");
      pipeline::train(to, std::cerr);
    } else if (*inf) {
      if (!date.empty()) io.date = date;
      pipeline::infer(io, std::cerr);
    } else if (*ev) {
      if (!sensors.empty()) eo.sensors_csv = sensors;
      pipeline::evaluate(eo, std::cerr);
    }
  } catch (const std::exception& e) {
    fmt::print(std::cerr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
