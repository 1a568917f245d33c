#include "lstfuse/synthscene.hpp"

#include "lstfuse/indices.hpp"
#include "lstfuse/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace lstfuse {

namespace fs = std::filesystem;

void SynthConfig::validate() const {
  if (size <= 0 || size % 3 != 0) throw std::invalid_argument("synthetic scene size must be a positive multiple of 3");
  if (coarse_factor <= 0 || size % coarse_factor != 0) {
    throw std::invalid_argument("synthetic scene size must be divisible by the coarse factor");
  }
  if (classes < 2) throw std::invalid_argument("synthetic scenes need at least 2 landcover classes");
  if (class_offsets_k.empty() || class_drift_k.empty()) throw std::invalid_argument("class offsets must not be empty");
  if (!(correlation_length > 0.0 && drift_length > 0.0)) throw std::invalid_argument("field lengths must be positive");
  if (!(pixel_size > 0.0)) throw std::invalid_argument("pixel_size must be positive");
  if (index_noise < 0.0) throw std::invalid_argument("index_noise must be non-negative");
}

namespace {

struct Signature {
  double ndvi, ndbi, ndwi, nir;
};

constexpr std::array<Signature, 4> kSignatures{{
    {-0.30, -0.40, 0.50, 0.05},  // water
    {0.70, -0.30, -0.60, 0.40},  // vegetation
    {0.10, 0.25, -0.25, 0.20},   // urban
    {0.20, 0.05, -0.30, 0.25},   // bare soil
}};

const Signature& signature(Index c) { return kSignatures[std::min<std::size_t>(static_cast<std::size_t>(c), 3)]; }

double per_class(const std::vector<double>& v, Index c) {
  return v[std::min(static_cast<std::size_t>(c), v.size() - 1)];
}

// Separable Gaussian filter, reflective borders.
Plane<float> blur(const Plane<float>& in, double sigma) {
  const auto radius = static_cast<Index>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (Index i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    total += k[static_cast<std::size_t>(i + radius)];
  }
  for (double& v : k) v /= total;
  const Index h = in.rows(), w = in.cols();
  Plane<float> tmp(h, w), out(h, w);
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (Index i = -radius; i <= radius; ++i) acc += k[static_cast<std::size_t>(i + radius)] * in(y, reflect_index(x + i, w));
      tmp(y, x) = static_cast<float>(acc);
    }
  }
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      double acc = 0.0;
      for (Index i = -radius; i <= radius; ++i) acc += k[static_cast<std::size_t>(i + radius)] * tmp(reflect_index(y + i, h), x);
      out(y, x) = static_cast<float>(acc);
    }
  }
  return out;
}

Plane<float> white_noise(Index h, Index w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Plane<float> p(h, w);
  for (Index i = 0; i < p.size(); ++i) p.data()[i] = static_cast<float>(n(rng));
  return p;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + stream + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

Plane<float> smooth_field(Index height, Index width, double length, std::uint64_t seed) {
  Plane<float> f = blur(white_noise(height, width, seed), length);
  const double mean = f.cast<double>().mean();
  const double sd = std::sqrt((f.cast<double>() - mean).square().mean());
  return ((f.cast<double>() - mean) / (sd > 0.0 ? sd : 1.0)).cast<float>();
}

SynthScene generate_scene(const SynthConfig& cfg) {
  cfg.validate();
  const Index n = cfg.size;
  GridSpec grid{n, n, cfg.pixel_size, cfg.origin_x, cfg.origin_y, cfg.crs_id};
  SynthScene s;

  std::vector<Plane<float>> cover;
  for (Index c = 0; c < cfg.classes; ++c) cover.push_back(smooth_field(n, n, cfg.correlation_length, mix(cfg.seed, c)));
  s.landcover.resize(n, n);
  for (Index y = 0; y < n; ++y) {
    for (Index x = 0; x < n; ++x) {
      Index best = 0;
      for (Index c = 1; c < cfg.classes; ++c) {
        if (cover[c](y, x) > cover[best](y, x)) best = c;
      }
      s.landcover(y, x) = static_cast<int>(best);
    }
  }

  const Plane<float> warm = smooth_field(n, n, cfg.correlation_length, mix(cfg.seed, 100));
  const Plane<float> drift = smooth_field(n, n, cfg.drift_length, mix(cfg.seed, 101));
  std::array<Plane<float>, 3> smooth_idx;
  std::array<Plane<float>, 4> white;
  for (int i = 0; i < 3; ++i) smooth_idx[i] = smooth_field(n, n, cfg.correlation_length / 2.0, mix(cfg.seed, 200 + i));
  for (int i = 0; i < 4; ++i) white[i] = white_noise(n, n, mix(cfg.seed, 300 + i));

  std::vector<Plane<float>> refl(4, Plane<float>(n, n));
  Plane<float> lst1(n, n), lst2(n, n);
  for (Index y = 0; y < n; ++y) {
    for (Index x = 0; x < n; ++x) {
      const Index c = s.landcover(y, x);
      const Signature& sig = signature(c);
      std::array<double, 3> idx{sig.ndvi, sig.ndbi, sig.ndwi};
      for (int i = 0; i < 3; ++i) {
        idx[i] += cfg.index_noise * (smooth_idx[i](y, x) + 0.5 * white[i](y, x));
        idx[i] = std::clamp(idx[i], -0.9, 0.9);
      }
      const double nir = sig.nir * (1.0 + 0.1 * std::clamp<double>(white[3](y, x), -3.0, 3.0));
      refl[0](y, x) = static_cast<float>(nir * (1.0 + idx[2]) / (1.0 - idx[2]));  // green from NDWI
      refl[1](y, x) = static_cast<float>(nir * (1.0 - idx[0]) / (1.0 + idx[0]));  // red from NDVI
      refl[2](y, x) = static_cast<float>(nir);
      refl[3](y, x) = static_cast<float>(nir * (1.0 + idx[1]) / (1.0 - idx[1]));  // swir from NDBI
      const double t1 = cfg.base_temperature_k + per_class(cfg.class_offsets_k, c) +
                        cfg.field_amplitude_k * warm(y, x) - cfg.ndvi_coupling_k * (idx[0] - sig.ndvi);
      lst1(y, x) = static_cast<float>(t1);
      lst2(y, x) = static_cast<float>(t1 + cfg.drift_mean_k + cfg.drift_amplitude_k * drift(y, x) +
                                      per_class(cfg.class_drift_k, c));
    }
  }

  s.fine_reflectance_t1 = Raster(grid, std::move(refl));
  s.mid_reflectance_t1 = block_average(s.fine_reflectance_t1, 3);
  BandSet bs;
  bs.sensor = "synthetic";
  for (BandRole role : kBandRoles) bs.set(role, s.fine_reflectance_t1.select_band(static_cast<Index>(role)));
  s.fine_indices_t1 = compute_indices(bs);
  s.fine_lst_t1 = Raster(grid, {lst1});
  s.fine_lst_t2 = Raster(grid, {lst2});
  s.mid_lst_t1 = block_average(s.fine_lst_t1, 3);
  s.mid_lst_t2 = block_average(s.fine_lst_t2, 3);
  s.coarse_lst_t1 = block_average(s.fine_lst_t1, cfg.coarse_factor);
  s.coarse_lst_t2 = block_average(s.fine_lst_t2, cfg.coarse_factor);
  return s;
}

namespace {

std::string iso(std::chrono::sys_days d) {
  const std::chrono::year_month_day ymd{d};
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                     static_cast<unsigned>(ymd.day()));
}

}  // namespace

Manifest write_synthetic_dataset(const fs::path& dir, const SynthDatasetSpec& spec) {
  spec.base.validate();
  fs::create_directories(dir);
  Manifest m;
  m.base_dir = fs::absolute(dir);
  m.coarse = {"synthetic coarse", spec.base.pixel_size * static_cast<double>(spec.base.coarse_factor), 1.0, true};
  m.mid = {"synthetic mid", spec.base.pixel_size * 3.0, 16.0, true};
  m.fine = {"synthetic fine", spec.base.pixel_size, 5.0, false};
  m.fine_roles = BandRoles{"custom", {1, 2, 3, 4}, 1.0, 0.0};
  m.mid_roles = m.fine_roles;

  const auto train_start = parse_date("2021-03-01");
  const auto test_start = parse_date("2023-06-01");
  const Index total = spec.train_scenes + spec.test_scenes;
  for (Index i = 0; i < total; ++i) {
    const bool train = i < spec.train_scenes;
    SynthConfig cfg = spec.base;
    cfg.seed = spec.base.seed * 1000 + static_cast<std::uint64_t>(i);
    const SynthScene scene = generate_scene(cfg);

    SampleEntry e;
    e.id = fmt::format("scene{:02d}", i);
    e.split = train ? "train" : "test";
    const auto t1 = (train ? train_start : test_start) + std::chrono::days{30 * (train ? i : i - spec.train_scenes)};
    e.t1 = iso(t1);
    e.t2 = iso(t1 + std::chrono::days{16});
    e.acquisition_t1 = {{"coarse", "11:30"}, {"mid", "10:45"}, {"fine", "11:05"}};
    const fs::path sdir = m.base_dir / e.id;
    auto put = [&](const std::string& key, const Raster& r) {
      const fs::path p = sdir / (key + ".tif");
      write_geotiff(p, r);
      e.paths[key] = p;
    };
    put("fine_reflectance_t1", scene.fine_reflectance_t1);
    put("mid_reflectance_t1", scene.mid_reflectance_t1);
    put("mid_lst_t1", scene.mid_lst_t1);
    put("coarse_lst_t1", scene.coarse_lst_t1);
    put("coarse_lst_t2", scene.coarse_lst_t2);
    put("mid_lst_t2", scene.mid_lst_t2);
    put("fine_lst_t2_truth", scene.fine_lst_t2);
    m.samples.push_back(std::move(e));
  }
  m.save(m.base_dir / "manifest.json");
  return m;
}

}  // namespace lstfuse
