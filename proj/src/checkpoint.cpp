#include "lstfuse/checkpoint.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace lstfuse {

namespace {

constexpr std::array<char, 8> kMagic{'L', 'S', 'T', 'F', 'C', 'K', 'P', '1'};

void append_params(const nn::ParameterSet<float>& params, const std::string& prefix, nlohmann::json& table,
                   std::vector<const Tensor<float>*>& blobs, std::uint64_t& offset) {
  for (const auto& e : params.entries()) {
    const Tensor<float>& t = e.var.value();
    const Shape& s = t.shape();
    const std::uint64_t bytes = static_cast<std::uint64_t>(t.size()) * sizeof(float);
    table.push_back({{"name", prefix + e.name},
                     {"shape", {s.n, s.c, s.h, s.w}},
                     {"dtype", "float32"},
                     {"trainable", e.trainable},
                     {"offset", offset},
                     {"bytes", bytes}});
    blobs.push_back(&t);
    offset += bytes;
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Generator<float>& gen, const Discriminator<float>* disc,
                     const Normalization& norm, const nlohmann::json& extra) {
  nlohmann::json header;
  header["format"] = "lstfuse-checkpoint";
  header["version"] = 1;
  header["generator"] = gen.config();
  if (disc) header["discriminator"] = disc->config();
  header["normalization"] = {{"lo_k", norm.lo_k}, {"hi_k", norm.hi_k}};
  header["extra"] = extra;
  nlohmann::json table = nlohmann::json::array();
  std::vector<const Tensor<float>*> blobs;
  std::uint64_t offset = 0;
  append_params(gen.parameters(), "generator.", table, blobs, offset);
  if (disc) append_params(disc->parameters(), "discriminator.", table, blobs, offset);
  header["arrays"] = table;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  out.write(kMagic.data(), kMagic.size());
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Tensor<float>* t : blobs) {
    out.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  std::uint64_t len = 0;
  in.read(magic.data(), magic.size());
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || magic != kMagic) throw std::runtime_error(path.string() + " is not a checkpoint");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw std::runtime_error(path.string() + ": truncated header");

  Checkpoint c;
  c.header = nlohmann::json::parse(text);
  c.generator = c.header.at("generator").get<GeneratorConfig>();
  if (c.header.contains("discriminator")) c.discriminator = c.header["discriminator"].get<DiscriminatorConfig>();
  c.normalization.lo_k = c.header.at("normalization").at("lo_k").get<double>();
  c.normalization.hi_k = c.header.at("normalization").at("hi_k").get<double>();
  const std::streamoff base = in.tellg();
  for (const auto& a : c.header.at("arrays")) {
    const auto dims = a.at("shape").get<std::vector<Index>>();
    Tensor<float> t(Shape{dims.at(0), dims.at(1), dims.at(2), dims.at(3)});
    const auto bytes = a.at("bytes").get<std::uint64_t>();
    if (bytes != static_cast<std::uint64_t>(t.size()) * sizeof(float)) {
      throw std::runtime_error(path.string() + ": size mismatch for " + a.at("name").get<std::string>());
    }
    in.seekg(base + static_cast<std::streamoff>(a.at("offset").get<std::uint64_t>()));
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw std::runtime_error(path.string() + ": truncated array " + a.at("name").get<std::string>());
    c.arrays.emplace(a.at("name").get<std::string>(), std::move(t));
  }
  return c;
}

void load_parameters(nn::ParameterSet<float>& params, const std::map<std::string, Tensor<float>>& arrays,
                     const std::string& prefix) {
  for (const auto& e : params.entries()) {
    auto it = arrays.find(prefix + e.name);
    if (it == arrays.end()) throw std::runtime_error("checkpoint lacks " + prefix + e.name);
    if (it->second.shape() != e.var.shape()) {
      throw std::runtime_error("checkpoint shape mismatch for " + prefix + e.name + ": " + it->second.shape().str() +
                               " vs " + e.var.shape().str());
    }
    ad::Var<float> v = e.var;
    v.mutable_value() = it->second;
  }
}

std::unique_ptr<Generator<float>> Checkpoint::make_generator() const {
  auto g = std::make_unique<Generator<float>>(generator, 0);
  load_parameters(g->parameters(), arrays, "generator.");
  return g;
}

std::unique_ptr<Discriminator<float>> Checkpoint::make_discriminator() const {
  if (!discriminator) throw std::runtime_error("checkpoint holds no discriminator");
  auto d = std::make_unique<Discriminator<float>>(*discriminator, 0);
  load_parameters(d->parameters(), arrays, "discriminator.");
  return d;
}

}  // namespace lstfuse
