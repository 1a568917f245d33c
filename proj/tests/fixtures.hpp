#pragma once

#include "lstfuse/dataset.hpp"
#include "lstfuse/synthscene.hpp"

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

namespace fixtures {

namespace fs = std::filesystem;

// Fresh directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("lstfuse_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

struct TableRow {
  const char* t1;
  const char* modis;
  const char* landsat;
  const char* sentinel;
  const char* t2;
};

// The eleven field-campaign sample dates with their t1 overpass times; the first seven are training samples.
inline const std::vector<TableRow>& campaign_samples() {
  static const std::vector<TableRow> rows{
      {"2017-04-09", "11:54", "10:40", "11:05", "2018-02-23"}, {"2018-10-21", "11:54", "10:41", "11:06", "2019-02-26"},
      {"2019-09-06", "11:54", "10:41", "11:07", "2020-04-01"}, {"2020-07-22", "11:54", "10:41", "11:07", "2020-08-07"},
      {"2022-03-06", "11:48", "10:41", "10:57", "2022-03-22"}, {"2022-08-13", "11:42", "10:41", "10:57", "2022-08-29"},
      {"2023-05-28", "11:10", "10:40", "11:07", "2023-06-13"}, {"2024-04-12", "10:35", "10:40", "11:07", "2024-09-19"},
      {"2024-09-19", "10:00", "10:41", "11:07", "2024-10-05"}, {"2024-09-19", "10:00", "10:41", "11:07", "2024-10-21"},
      {"2024-09-19", "10:00", "10:41", "11:07", "2025-05-01"},
  };
  return rows;
}

// Manifest over the field-campaign dates. File paths are set but point at `dir`, where nothing is written.
inline lstfuse::Manifest campaign_manifest(const fs::path& dir) {
  lstfuse::Manifest m;
  m.base_dir = dir;
  const auto& rows = campaign_samples();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    lstfuse::SampleEntry e;
    e.id = "sample" + std::to_string(i + 1);
    e.t1 = rows[i].t1;
    e.t2 = rows[i].t2;
    e.split = i < 7 ? "train" : "test";
    e.acquisition_t1 = {{"coarse", rows[i].modis}, {"mid", rows[i].landsat}, {"fine", rows[i].sentinel}};
    for (const char* key : {"fine_reflectance_t1", "mid_reflectance_t1", "mid_lst_t1", "coarse_lst_t1",
                            "coarse_lst_t2", "mid_lst_t2"}) {
      e.paths[key] = dir / e.id / (std::string(key) + ".tif");
    }
    m.samples.push_back(std::move(e));
  }
  return m;
}

// Synthetic scenes of side `scene_size` written under dir, prepared and cut into patches.
inline lstfuse::PatchSet synthetic_patches(const fs::path& dir, lstfuse::Index scenes, lstfuse::Index scene_size,
                                           lstfuse::Index patch, lstfuse::Index stride, std::uint64_t seed = 5) {
  lstfuse::SynthDatasetSpec spec;
  spec.base.size = scene_size;
  spec.base.seed = seed;
  spec.train_scenes = scenes;
  spec.test_scenes = 0;
  const lstfuse::Manifest m = lstfuse::write_synthetic_dataset(dir, spec);
  std::vector<lstfuse::PreparedScene> prepared;
  for (const auto& e : m.samples) {
    prepared.push_back(lstfuse::prepare_scene(lstfuse::load_sample(m, e), e.split, m.normalization));
  }
  return lstfuse::extract_patches(std::move(prepared), m.normalization, patch, stride);
}

}  // namespace fixtures
