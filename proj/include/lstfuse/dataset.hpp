#pragma once

#include "lstfuse/indices.hpp"
#include "lstfuse/raster.hpp"

#include "json.hpp"

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lstfuse {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fixed LST range mapped affinely onto [-1, 1].
struct Normalization {
  double lo_k = 263.15;
  double hi_k = 323.15;

  void validate() const;
  double normalize(double kelvin) const { return 2.0 * (kelvin - lo_k) / (hi_k - lo_k) - 1.0; }
  double denormalize(double v) const { return lo_k + (v + 1.0) * 0.5 * (hi_k - lo_k); }
};

struct NormalizedRaster {
  Raster raster;
  Index clamped = 0;  // valid pixels that fell outside [lo, hi]
};

NormalizedRaster normalize_lst(const Raster& kelvin, double lo_k, double hi_k);
Raster denormalize_lst(const Raster& normalized, double lo_k, double hi_k);

std::chrono::sys_days parse_date(const std::string& iso);
/// "HH:MM" -> minutes after midnight.
int parse_clock(const std::string& hhmm);

struct SensorSpec {
  std::string name;
  double pixel_size_m = 0.0;
  double revisit_days = 0.0;
  bool has_tir = false;
};

struct SampleEntry {
  std::string id;
  std::string t1;
  std::string t2;
  std::string split = "train";
  // Acquisition clock times at t1 keyed by tier ("coarse", "mid", "fine").
  std::map<std::string, std::string> acquisition_t1;
  // Keys: fine_reflectance_t1 | fine_indices_t1, mid_reflectance_t1 | mid_indices_t1, mid_lst_t1,
  // coarse_lst_t1, coarse_lst_t2, and optionally mid_lst_t2, fine_lst_t2_truth. Absolute after loading.
  std::map<std::string, std::filesystem::path> paths;

  bool has(const std::string& key) const { return paths.count(key) != 0; }
};

struct Manifest {
  std::filesystem::path base_dir;
  Normalization normalization;
  double co_acquisition_window_min = 75.0;
  SensorSpec coarse{"MODIS Terra", 1000.0, 1.0, true};
  SensorSpec mid{"Landsat 8", 30.0, 16.0, true};
  SensorSpec fine{"Sentinel-2", 10.0, 5.0, false};
  BandRoles fine_roles = preset_roles("sentinel2");
  BandRoles mid_roles = preset_roles("landsat8");
  std::vector<SampleEntry> samples;

  static Manifest load(const std::filesystem::path& path);
  static Manifest from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  /// Paths are written relative to base_dir when they lie under it.
  nlohmann::json to_json() const;
  void save(const std::filesystem::path& path) const;

  std::vector<const SampleEntry*> split(const std::string& name) const;
  const SampleEntry& sample(const std::string& id) const;
};

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> notes;

  bool ok() const { return violations.empty(); }
  std::string str() const;
};

/// Resolution ordering, 10 m-class fine tier, exact 3x fine/mid ratio, daily coarse cadence finer than
/// the mid cadence, thermal bands on coarse and mid, t1 < t2, co-acquisition window at t1, unique ids,
/// and presence of every required file.
ValidationReport validate_constraints(const Manifest& m);

struct LeakageReport {
  struct Flag {
    std::string first;
    std::string second;
    std::string date;
    bool consecutive = false;
  };
  std::vector<Flag> flags;

  bool clean() const { return flags.empty(); }
  std::string str() const;
};

/// Flags training samples whose reference date equals another training sample's target date.
/// `consecutive` marks pairs adjacent in manifest order (i-1, i).
LeakageReport check_leakage(const Manifest& m);

/// Rasters of one prior triple plus the target-date coarse observation, at native grids, Kelvin for LST.
struct SampleTriple {
  std::string id;
  std::string t1;
  std::string t2;
  Raster t1_indices_fine;
  Raster t1_indices_mid;
  Raster t1_lst_mid;
  Raster t1_lst_coarse;
  Raster t2_lst_coarse;
  std::optional<Raster> t2_lst_mid;
  std::optional<Raster> t2_lst_fine_truth;
};

SampleTriple load_sample(const Manifest& m, const SampleEntry& e);

/// One scene ready for patching: gap-filled, cropped so the fine grid is exactly 3x the mid grid,
/// coarse LST resampled onto the fine grid, every LST band normalized. Tensors have batch size 1.
struct PreparedScene {
  std::string id;
  std::string t1;
  std::string t2;
  std::string split;
  GridSpec fine_grid;
  Tensor<float> fine_indices;  // [1,3,H,W]
  Tensor<float> mid_indices;   // [1,3,H/3,W/3]
  Tensor<float> mid_lst_t1;    // [1,1,H/3,W/3]
  Tensor<float> coarse_t1;     // [1,1,H,W]
  Tensor<float> coarse_t2;     // [1,1,H,W]
  std::optional<Tensor<float>> mid_lst_t2;  // [1,1,H/3,W/3]
  Index clamped = 0;

  Index height() const { return fine_grid.height; }
  Index width() const { return fine_grid.width; }
  GridSpec mid_grid() const { return fine_grid.coarsened(3); }
};

PreparedScene prepare_scene(const SampleTriple& s, const std::string& split, const Normalization& norm);

/// Windows of `size` placed every `stride`: floor((extent - size) / stride) + 1 origins.
std::vector<Index> patch_origins(Index extent, Index size, Index stride);

struct PatchRef {
  std::size_t scene = 0;
  Index row = 0;  // fine-grid top-left
  Index col = 0;
};

/// Network-ready tensors for a batch of fine-grid windows.
struct TrainingBatch {
  Tensor<float> fine_indices;  // [B,3,P,P]
  Tensor<float> mid_indices;   // [B,3,P,P], mid pixels replicated 3x3
  Tensor<float> mid_lst_t1;    // [B,1,P,P], replicated
  Tensor<float> coarse_t1;     // [B,1,P,P]
  Tensor<float> coarse_t2;     // [B,1,P,P]
  Tensor<float> condition;     // [B,1,P/3,P/3], 3x3 means of coarse_t2
  Tensor<float> reference;     // [B,1,P/3,P/3], mid LST at t2; empty when the scene has none
  std::vector<PatchRef> refs;

  Index size() const { return fine_indices.shape().n; }
};

TrainingBatch assemble_batch(const std::vector<std::shared_ptr<const PreparedScene>>& scenes,
                             std::span<const PatchRef> refs, Index size);

/// Sliding-window patches over prepared scenes. Patches are cut lazily from the shared scenes.
class PatchSet {
 public:
  PatchSet() = default;
  PatchSet(std::vector<std::shared_ptr<const PreparedScene>> scenes, Index fine_size, Index fine_stride,
           Normalization norm);

  std::size_t size() const { return refs_.size(); }
  bool empty() const { return refs_.empty(); }
  Index fine_size() const { return fine_size_; }
  Index fine_stride() const { return fine_stride_; }
  Index mid_size() const { return fine_size_ / 3; }
  Index mid_stride() const { return fine_stride_ / 3; }
  const Normalization& normalization() const { return norm_; }
  const std::vector<PatchRef>& refs() const { return refs_; }
  const std::vector<std::shared_ptr<const PreparedScene>>& scenes() const { return scenes_; }

  TrainingBatch batch(std::span<const std::size_t> indices) const;

  /// header.json plus one little-endian float32 file per named array per scene.
  void save(const std::filesystem::path& dir) const;
  static PatchSet load(const std::filesystem::path& dir);

 private:
  std::vector<std::shared_ptr<const PreparedScene>> scenes_;
  std::vector<PatchRef> refs_;
  Index fine_size_ = 96;
  Index fine_stride_ = 24;
  Normalization norm_;
};

PatchSet extract_patches(std::vector<PreparedScene> scenes, const Normalization& norm, Index fine_size = 96,
                         Index fine_stride = 24);

nlohmann::json grid_to_json(const GridSpec& g);
GridSpec grid_from_json(const nlohmann::json& j);

}  // namespace lstfuse
