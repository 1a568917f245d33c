#pragma once

#include "lstfuse/dataset.hpp"
#include "lstfuse/discriminator.hpp"
#include "lstfuse/generator.hpp"

#include "json.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

namespace lstfuse {

/// One file: 8-byte magic, little-endian uint64 header length, JSON header, then raw float32 arrays
/// at the offsets the header lists. Generator arrays are prefixed "generator.", discriminator ones
/// "discriminator.".
struct Checkpoint {
  GeneratorConfig generator;
  std::optional<DiscriminatorConfig> discriminator;
  Normalization normalization;
  nlohmann::json header;
  std::map<std::string, Tensor<float>> arrays;

  std::unique_ptr<Generator<float>> make_generator() const;
  std::unique_ptr<Discriminator<float>> make_discriminator() const;
};

void save_checkpoint(const std::filesystem::path& path, const Generator<float>& gen, const Discriminator<float>* disc,
                     const Normalization& norm, const nlohmann::json& extra = nlohmann::json::object());

Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Overwrites every entry of `params` with the array named prefix + entry name.
void load_parameters(nn::ParameterSet<float>& params, const std::map<std::string, Tensor<float>>& arrays,
                     const std::string& prefix);

}  // namespace lstfuse
