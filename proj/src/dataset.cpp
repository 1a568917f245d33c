#include "lstfuse/dataset.hpp"

#include "lstfuse/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace lstfuse {

static_assert(std::endian::native == std::endian::little, "patch archives assume a little-endian host");

namespace fs = std::filesystem;

void Normalization::validate() const {
  if (!(lo_k < hi_k)) throw DatasetError(fmt::format("normalization range [{}, {}] is empty", lo_k, hi_k));
}

NormalizedRaster normalize_lst(const Raster& kelvin, double lo_k, double hi_k) {
  const Normalization norm{lo_k, hi_k};
  norm.validate();
  NormalizedRaster out{kelvin, 0};
  for (Index b = 0; b < kelvin.bands(); ++b) {
    Plane<float>& p = out.raster.band(b);
    for (Index y = 0; y < p.rows(); ++y) {
      for (Index x = 0; x < p.cols(); ++x) {
        if (!kelvin.valid(y, x)) continue;
        double v = norm.normalize(p(y, x));
        if (v < -1.0 || v > 1.0) {
          ++out.clamped;
          v = std::clamp(v, -1.0, 1.0);
        }
        p(y, x) = static_cast<float>(v);
      }
    }
  }
  return out;
}

Raster denormalize_lst(const Raster& normalized, double lo_k, double hi_k) {
  const Normalization norm{lo_k, hi_k};
  norm.validate();
  Raster out = normalized;
  for (Index b = 0; b < out.bands(); ++b) {
    Plane<float>& p = out.band(b);
    for (Index y = 0; y < p.rows(); ++y) {
      for (Index x = 0; x < p.cols(); ++x) {
        if (normalized.valid(y, x)) p(y, x) = static_cast<float>(norm.denormalize(p(y, x)));
      }
    }
  }
  return out;
}

std::chrono::sys_days parse_date(const std::string& iso) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(iso.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
    throw DatasetError("bad date '" + iso + "', expected YYYY-MM-DD");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw DatasetError("invalid calendar date '" + iso + "'");
  return std::chrono::sys_days{ymd};
}

int parse_clock(const std::string& hhmm) {
  int h = -1, m = -1;
  char tail = 0;
  if (std::sscanf(hhmm.c_str(), "%2d:%2d%c", &h, &m, &tail) != 2 || h < 0 || h > 23 || m < 0 || m > 59) {
    throw DatasetError("bad time '" + hhmm + "', expected HH:MM");
  }
  return 60 * h + m;
}

namespace {

const std::vector<std::string> kTiers{"coarse", "mid", "fine"};

SensorSpec sensor_from_json(const nlohmann::json& j, SensorSpec s) {
  s.name = j.value("name", s.name);
  s.pixel_size_m = j.value("pixel_size_m", s.pixel_size_m);
  s.revisit_days = j.value("revisit_days", s.revisit_days);
  s.has_tir = j.value("has_tir", s.has_tir);
  return s;
}

nlohmann::json sensor_to_json(const SensorSpec& s) {
  return {{"name", s.name}, {"pixel_size_m", s.pixel_size_m}, {"revisit_days", s.revisit_days}, {"has_tir", s.has_tir}};
}

std::vector<std::string> required_keys(const SampleEntry& e) {
  std::vector<std::string> keys{"mid_lst_t1", "coarse_lst_t1", "coarse_lst_t2"};
  keys.push_back(e.has("fine_indices_t1") ? "fine_indices_t1" : "fine_reflectance_t1");
  keys.push_back(e.has("mid_indices_t1") ? "mid_indices_t1" : "mid_reflectance_t1");
  if (e.split == "train") keys.push_back("mid_lst_t2");
  return keys;
}

}  // namespace

Manifest Manifest::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  Manifest m;
  m.base_dir = base_dir;
  if (j.contains("normalization")) {
    m.normalization.lo_k = j["normalization"].value("lo_k", m.normalization.lo_k);
    m.normalization.hi_k = j["normalization"].value("hi_k", m.normalization.hi_k);
  }
  m.normalization.validate();
  m.co_acquisition_window_min = j.value("co_acquisition_window_min", m.co_acquisition_window_min);
  if (j.contains("sensors")) {
    const auto& s = j["sensors"];
    if (s.contains("coarse")) m.coarse = sensor_from_json(s["coarse"], m.coarse);
    if (s.contains("mid")) m.mid = sensor_from_json(s["mid"], m.mid);
    if (s.contains("fine")) m.fine = sensor_from_json(s["fine"], m.fine);
  }
  if (j.contains("band_roles")) {
    const auto& r = j["band_roles"];
    if (r.contains("fine")) m.fine_roles = r["fine"].get<BandRoles>();
    if (r.contains("mid")) m.mid_roles = r["mid"].get<BandRoles>();
  }
  if (!j.contains("samples") || !j["samples"].is_array()) throw DatasetError("manifest has no samples array");
  for (const auto& s : j["samples"]) {
    SampleEntry e;
    e.id = s.at("id").get<std::string>();
    e.t1 = s.at("t1").get<std::string>();
    e.t2 = s.at("t2").get<std::string>();
    e.split = s.value("split", std::string("train"));
    if (s.contains("acquisition_t1")) {
      for (const auto& [tier, clock] : s["acquisition_t1"].items()) e.acquisition_t1[tier] = clock.get<std::string>();
    }
    for (const auto& [key, p] : s.at("paths").items()) {
      const fs::path path = p.get<std::string>();
      e.paths[key] = path.is_absolute() ? path : base_dir / path;
    }
    m.samples.push_back(std::move(e));
  }
  return m;
}

Manifest Manifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

nlohmann::json Manifest::to_json() const {
  nlohmann::json j;
  j["normalization"] = {{"lo_k", normalization.lo_k}, {"hi_k", normalization.hi_k}};
  j["co_acquisition_window_min"] = co_acquisition_window_min;
  j["sensors"] = {{"coarse", sensor_to_json(coarse)}, {"mid", sensor_to_json(mid)}, {"fine", sensor_to_json(fine)}};
  j["band_roles"] = {{"fine", fine_roles}, {"mid", mid_roles}};
  j["samples"] = nlohmann::json::array();
  for (const auto& e : samples) {
    nlohmann::json s{{"id", e.id}, {"t1", e.t1}, {"t2", e.t2}, {"split", e.split}};
    if (!e.acquisition_t1.empty()) s["acquisition_t1"] = e.acquisition_t1;
    for (const auto& [key, p] : e.paths) {
      const fs::path rel = p.lexically_relative(base_dir);
      const bool inside = !rel.empty() && *rel.begin() != "..";
      s["paths"][key] = (inside ? rel : p).generic_string();
    }
    j["samples"].push_back(std::move(s));
  }
  return j;
}

void Manifest::save(const fs::path& path) const {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DatasetError("cannot write manifest " + path.string());
  out << to_json().dump(2) << '\n';
}

std::vector<const SampleEntry*> Manifest::split(const std::string& name) const {
  std::vector<const SampleEntry*> out;
  for (const auto& e : samples) {
    if (e.split == name) out.push_back(&e);
  }
  return out;
}

const SampleEntry& Manifest::sample(const std::string& id) const {
  for (const auto& e : samples) {
    if (e.id == id) return e;
  }
  throw DatasetError("manifest has no sample '" + id + "'");
}

std::string ValidationReport::str() const {
  if (ok() && notes.empty()) return "constraints: ok\n";
  std::string out = ok() ? "constraints: ok\n" : fmt::format("constraints: {} violation(s)\n", violations.size());
  for (const auto& v : violations) out += "  violation: " + v + "\n";
  for (const auto& n : notes) out += "  note: " + n + "\n";
  return out;
}

ValidationReport validate_constraints(const Manifest& m) {
  ValidationReport r;
  auto violate = [&](std::string s) { r.violations.push_back(std::move(s)); };
  const double rc = m.coarse.pixel_size_m, rm = m.mid.pixel_size_m, rf = m.fine.pixel_size_m;
  if (!(rc > rm && rm > rf)) {
    violate(fmt::format("spatial resolution ordering coarse > mid > fine fails ({} m, {} m, {} m)", rc, rm, rf));
  }
  if (!(rf >= 7.5 && rf < 15.0)) violate(fmt::format("fine tier must be 10 m-class, got {} m", rf));
  if (rf > 0.0 && std::abs(rm / rf - 3.0) > 1e-6) {
    violate(fmt::format("mid/fine pixel ratio must be exactly 3, got {}", rf > 0.0 ? rm / rf : 0.0));
  }
  if (m.coarse.revisit_days != 1.0) {
    violate(fmt::format("coarse tier must be daily, declared revisit {} days", m.coarse.revisit_days));
  }
  if (!(m.coarse.revisit_days < m.mid.revisit_days)) {
    violate(fmt::format("coarse revisit ({} d) must be more frequent than mid revisit ({} d)", m.coarse.revisit_days,
                        m.mid.revisit_days));
  }
  if (!m.coarse.has_tir) violate("coarse tier " + m.coarse.name + " has no thermal infrared bands");
  if (!m.mid.has_tir) violate("mid tier " + m.mid.name + " has no thermal infrared bands");
  if (m.samples.empty()) violate("manifest lists no samples");

  std::set<std::string> ids;
  for (const auto& e : m.samples) {
    const std::string tag = "sample " + e.id;
    if (!ids.insert(e.id).second) violate(tag + ": duplicate id");
    if (e.split != "train" && e.split != "test") violate(tag + ": split must be train or test, got " + e.split);
    try {
      if (!(parse_date(e.t1) < parse_date(e.t2))) violate(tag + ": t1 " + e.t1 + " is not before t2 " + e.t2);
    } catch (const DatasetError& err) {
      violate(tag + ": " + err.what());
    }
    bool all_times = true;
    int lo = 24 * 60, hi = -1;
    for (const auto& tier : kTiers) {
      auto it = e.acquisition_t1.find(tier);
      if (it == e.acquisition_t1.end()) {
        all_times = false;
        continue;
      }
      try {
        const int t = parse_clock(it->second);
        lo = std::min(lo, t);
        hi = std::max(hi, t);
      } catch (const DatasetError& err) {
        violate(tag + ": " + err.what());
      }
    }
    if (!all_times) {
      r.notes.push_back(tag + ": acquisition times at t1 incomplete; co-acquisition window not checked");
    } else if (hi >= lo && hi - lo > m.co_acquisition_window_min) {
      violate(fmt::format("{}: acquisitions at t1 span {} min, above the {} min window", tag, hi - lo,
                          m.co_acquisition_window_min));
    }
    for (const auto& key : required_keys(e)) {
      if (!e.has(key)) violate(tag + ": missing path " + key);
    }
    for (const auto& [key, p] : e.paths) {
      if (!fs::exists(p)) violate(tag + ": file not found for " + key + ": " + p.string());
    }
  }
  return r;
}

std::string LeakageReport::str() const {
  if (clean()) return "leakage: clean\n";
  std::string out = fmt::format("leakage: {} overlapping pair(s)\n", flags.size());
  for (const auto& f : flags) {
    out += fmt::format("  {} and {} share {}{}\n", f.first, f.second, f.date, f.consecutive ? " (consecutive)" : "");
  }
  return out;
}

LeakageReport check_leakage(const Manifest& m) {
  LeakageReport r;
  const auto train = m.split("train");
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      const SampleEntry& a = *train[k];
      const SampleEntry& b = *train[i];
      const bool consecutive = k + 1 == i;
      if (b.t1 == a.t2) r.flags.push_back({a.id, b.id, b.t1, consecutive});
      if (b.t2 == a.t1) r.flags.push_back({a.id, b.id, b.t2, consecutive});
    }
  }
  return r;
}

namespace {

Raster load_indices(const SampleEntry& e, const std::string& tier, const BandRoles& roles) {
  if (e.has(tier + "_indices_t1")) {
    Raster r = read_geotiff(e.paths.at(tier + "_indices_t1"));
    if (r.bands() != 3) throw DatasetError(e.id + ": " + tier + " index file must have 3 bands (NDVI, NDBI, NDWI)");
    return r;
  }
  auto it = e.paths.find(tier + "_reflectance_t1");
  if (it == e.paths.end()) throw DatasetError(e.id + ": no " + tier + " reflectance or index file");
  return compute_indices(band_set_from_stack(read_geotiff(it->second), roles));
}

Raster load_lst(const SampleEntry& e, const std::string& key) {
  auto it = e.paths.find(key);
  if (it == e.paths.end()) throw DatasetError(e.id + ": missing path " + key);
  Raster r = read_geotiff(it->second);
  return r.bands() == 1 ? r : r.select_band(0);
}

}  // namespace

SampleTriple load_sample(const Manifest& m, const SampleEntry& e) {
  SampleTriple s;
  s.id = e.id;
  s.t1 = e.t1;
  s.t2 = e.t2;
  s.t1_indices_fine = load_indices(e, "fine", m.fine_roles);
  s.t1_indices_mid = load_indices(e, "mid", m.mid_roles);
  s.t1_lst_mid = load_lst(e, "mid_lst_t1");
  s.t1_lst_coarse = load_lst(e, "coarse_lst_t1");
  s.t2_lst_coarse = load_lst(e, "coarse_lst_t2");
  if (e.has("mid_lst_t2")) s.t2_lst_mid = load_lst(e, "mid_lst_t2");
  if (e.has("fine_lst_t2_truth")) s.t2_lst_fine_truth = load_lst(e, "fine_lst_t2_truth");
  return s;
}

namespace {

void copy_plane(const Plane<float>& p, Tensor<float>& t, Index c) { t.plane(0, c) = p; }

Tensor<float> to_tensor(const Raster& r) {
  Tensor<float> t(Shape{1, r.bands(), r.height(), r.width()});
  for (Index b = 0; b < r.bands(); ++b) copy_plane(r.band(b), t, b);
  return t;
}

bool near(double a, double b, double scale) { return std::abs(a - b) <= 1e-6 * std::max(1.0, std::abs(scale)); }

// Window [first, first + count) of fine pixels aligned with mid pixels, given the mid origin offset
// measured in fine pixels.
struct Span1d {
  Index fine0 = 0;
  Index mid0 = 0;
  Index mids = 0;
};

Span1d aligned_span(double offset_fine_px, Index fine_extent, Index mid_extent, const std::string& what) {
  const double rounded = std::round(offset_fine_px);
  if (std::abs(offset_fine_px - rounded) > 1e-6) {
    throw DatasetError(what + ": mid grid is not aligned with the fine grid");
  }
  const auto off = static_cast<Index>(rounded);
  Span1d s;
  s.mid0 = off >= 0 ? 0 : (-off + 2) / 3;
  s.fine0 = off + 3 * s.mid0;
  s.mids = std::min(mid_extent - s.mid0, (fine_extent - s.fine0) / 3);
  if (s.mids <= 0) throw DatasetError(what + ": fine and mid grids do not overlap");
  return s;
}

}  // namespace

PreparedScene prepare_scene(const SampleTriple& s, const std::string& split, const Normalization& norm) {
  norm.validate();
  const GridSpec& fg = s.t1_indices_fine.grid();
  const GridSpec& mg = s.t1_lst_mid.grid();
  if (!near(mg.pixel_size, 3.0 * fg.pixel_size, mg.pixel_size)) {
    throw DatasetError(fmt::format("{}: mid pixel {} m is not 3x the fine pixel {} m", s.id, mg.pixel_size,
                                   fg.pixel_size));
  }
  if (!(s.t1_indices_mid.grid() == mg)) throw DatasetError(s.id + ": mid index and mid LST grids differ");
  if (s.t2_lst_mid && !(s.t2_lst_mid->grid() == mg)) throw DatasetError(s.id + ": mid LST grids at t1 and t2 differ");
  if (!(s.t1_lst_coarse.grid() == s.t2_lst_coarse.grid())) {
    throw DatasetError(s.id + ": coarse LST grids at t1 and t2 differ");
  }

  const Span1d cols = aligned_span((mg.origin_x - fg.origin_x) / fg.pixel_size, fg.width, mg.width, s.id);
  const Span1d rows = aligned_span((fg.origin_y - mg.origin_y) / fg.pixel_size, fg.height, mg.height, s.id);

  PreparedScene p;
  p.id = s.id;
  p.t1 = s.t1;
  p.t2 = s.t2;
  p.split = split;
  const Raster fine_idx =
      fill_gaps_adaptive(s.t1_indices_fine.window(rows.fine0, cols.fine0, 3 * rows.mids, 3 * cols.mids));
  p.fine_grid = fine_idx.grid();
  const GridSpec mid_grid = p.fine_grid.coarsened(3);

  auto mid_window = [&](const Raster& r) {
    Raster w = fill_gaps_adaptive(r.window(rows.mid0, cols.mid0, rows.mids, cols.mids));
    std::vector<Plane<float>> bands;
    for (Index b = 0; b < w.bands(); ++b) bands.push_back(w.band(b));
    return Raster(mid_grid, std::move(bands));
  };
  auto normalized = [&](const Raster& kelvin) {
    NormalizedRaster n = normalize_lst(kelvin, norm.lo_k, norm.hi_k);
    p.clamped += n.clamped;
    return to_tensor(n.raster);
  };

  p.fine_indices = to_tensor(fine_idx);
  p.mid_indices = to_tensor(mid_window(s.t1_indices_mid));
  p.mid_lst_t1 = normalized(mid_window(s.t1_lst_mid));
  if (s.t2_lst_mid) p.mid_lst_t2 = normalized(mid_window(*s.t2_lst_mid));
  p.coarse_t1 = normalized(resample_bicubic(fill_gaps_adaptive(s.t1_lst_coarse), p.fine_grid));
  p.coarse_t2 = normalized(resample_bicubic(fill_gaps_adaptive(s.t2_lst_coarse), p.fine_grid));
  return p;
}

std::vector<Index> patch_origins(Index extent, Index size, Index stride) {
  if (size <= 0 || stride <= 0) throw DatasetError("patch size and stride must be positive");
  if (extent < size) {
    throw DatasetError(fmt::format("raster extent {} is smaller than the patch size {}", extent, size));
  }
  std::vector<Index> out;
  for (Index o = 0; o + size <= extent; o += stride) out.push_back(o);
  return out;
}

namespace {

void copy_window(const Tensor<float>& src, Index row, Index col, Tensor<float>& dst, Index n) {
  const Shape& d = dst.shape();
  for (Index c = 0; c < d.c; ++c) dst.plane(n, c) = src.plane(0, c).block(row, col, d.h, d.w);
}

void copy_replicated(const Tensor<float>& src, Index mid_row, Index mid_col, Tensor<float>& dst, Index n) {
  const Shape& d = dst.shape();
  for (Index c = 0; c < d.c; ++c) {
    const auto s = src.plane(0, c);
    auto o = dst.plane(n, c);
    for (Index y = 0; y < d.h; ++y) {
      for (Index x = 0; x < d.w; ++x) o(y, x) = s(mid_row + y / 3, mid_col + x / 3);
    }
  }
}

}  // namespace

TrainingBatch assemble_batch(const std::vector<std::shared_ptr<const PreparedScene>>& scenes,
                             std::span<const PatchRef> refs, Index size) {
  if (refs.empty()) throw DatasetError("empty batch");
  if (size % 3 != 0) throw DatasetError("patch size must be divisible by 3");
  const auto b = static_cast<Index>(refs.size());
  const Index m = size / 3;
  TrainingBatch out;
  out.fine_indices = Tensor<float>(Shape{b, 3, size, size});
  out.mid_indices = Tensor<float>(Shape{b, 3, size, size});
  out.mid_lst_t1 = Tensor<float>(Shape{b, 1, size, size});
  out.coarse_t1 = Tensor<float>(Shape{b, 1, size, size});
  out.coarse_t2 = Tensor<float>(Shape{b, 1, size, size});
  out.condition = Tensor<float>(Shape{b, 1, m, m});
  const bool with_reference =
      std::all_of(refs.begin(), refs.end(), [&](const PatchRef& r) { return scenes.at(r.scene)->mid_lst_t2.has_value(); });
  if (with_reference) out.reference = Tensor<float>(Shape{b, 1, m, m});
  for (Index n = 0; n < b; ++n) {
    const PatchRef& r = refs[static_cast<std::size_t>(n)];
    const PreparedScene& s = *scenes.at(r.scene);
    if (r.row % 3 != 0 || r.col % 3 != 0 || r.row + size > s.height() || r.col + size > s.width()) {
      throw DatasetError(fmt::format("patch at ({}, {}) does not fit scene {}", r.row, r.col, s.id));
    }
    copy_window(s.fine_indices, r.row, r.col, out.fine_indices, n);
    copy_replicated(s.mid_indices, r.row / 3, r.col / 3, out.mid_indices, n);
    copy_replicated(s.mid_lst_t1, r.row / 3, r.col / 3, out.mid_lst_t1, n);
    copy_window(s.coarse_t1, r.row, r.col, out.coarse_t1, n);
    copy_window(s.coarse_t2, r.row, r.col, out.coarse_t2, n);
    const auto c2 = out.coarse_t2.plane(n, 0);
    auto cond = out.condition.plane(n, 0);
    for (Index y = 0; y < m; ++y) {
      for (Index x = 0; x < m; ++x) cond(y, x) = c2.block(3 * y, 3 * x, 3, 3).mean();
    }
    if (with_reference) copy_window(*s.mid_lst_t2, r.row / 3, r.col / 3, out.reference, n);
    out.refs.push_back(r);
  }
  return out;
}

PatchSet::PatchSet(std::vector<std::shared_ptr<const PreparedScene>> scenes, Index fine_size, Index fine_stride,
                   Normalization norm)
    : scenes_(std::move(scenes)), fine_size_(fine_size), fine_stride_(fine_stride), norm_(norm) {
  if (fine_size % 3 != 0 || fine_stride % 3 != 0) {
    throw DatasetError("fine patch size and stride must be multiples of 3 so mid patches align");
  }
  for (std::size_t i = 0; i < scenes_.size(); ++i) {
    const PreparedScene& s = *scenes_[i];
    for (Index row : patch_origins(s.height(), fine_size, fine_stride)) {
      for (Index col : patch_origins(s.width(), fine_size, fine_stride)) refs_.push_back({i, row, col});
    }
  }
}

TrainingBatch PatchSet::batch(std::span<const std::size_t> indices) const {
  std::vector<PatchRef> refs;
  refs.reserve(indices.size());
  for (std::size_t i : indices) refs.push_back(refs_.at(i));
  return assemble_batch(scenes_, refs, fine_size_);
}

PatchSet extract_patches(std::vector<PreparedScene> scenes, const Normalization& norm, Index fine_size,
                         Index fine_stride) {
  std::vector<std::shared_ptr<const PreparedScene>> shared;
  for (auto& s : scenes) shared.push_back(std::make_shared<const PreparedScene>(std::move(s)));
  return PatchSet(std::move(shared), fine_size, fine_stride, norm);
}

nlohmann::json grid_to_json(const GridSpec& g) {
  return {{"width", g.width},       {"height", g.height},     {"pixel_size", g.pixel_size},
          {"origin_x", g.origin_x}, {"origin_y", g.origin_y}, {"crs_id", g.crs_id}};
}

GridSpec grid_from_json(const nlohmann::json& j) {
  GridSpec g;
  g.width = j.at("width").get<Index>();
  g.height = j.at("height").get<Index>();
  g.pixel_size = j.at("pixel_size").get<double>();
  g.origin_x = j.at("origin_x").get<double>();
  g.origin_y = j.at("origin_y").get<double>();
  g.crs_id = j.value("crs_id", std::string());
  g.validate();
  return g;
}

namespace {

constexpr const char* kArchiveFormat = "lstfuse-patches";

nlohmann::json write_blob(const fs::path& dir, const std::string& file, const Tensor<float>& t) {
  std::ofstream out(dir / file, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + (dir / file).string());
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  const Shape& s = t.shape();
  return {{"file", file}, {"shape", {s.n, s.c, s.h, s.w}}, {"dtype", "float32"}};
}

Tensor<float> read_blob(const fs::path& dir, const nlohmann::json& meta) {
  if (meta.at("dtype").get<std::string>() != "float32") throw DatasetError("unsupported archive dtype");
  const auto dims = meta.at("shape").get<std::vector<Index>>();
  if (dims.size() != 4) throw DatasetError("archive arrays must be 4-dimensional");
  Tensor<float> t(Shape{dims[0], dims[1], dims[2], dims[3]});
  const fs::path path = dir / meta.at("file").get<std::string>();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(t.size() * sizeof(float))) {
    throw DatasetError(path.string() + " is truncated");
  }
  return t;
}

}  // namespace

void PatchSet::save(const fs::path& dir) const {
  fs::create_directories(dir);
  nlohmann::json h;
  h["format"] = kArchiveFormat;
  h["version"] = 1;
  h["normalization"] = {{"lo_k", norm_.lo_k}, {"hi_k", norm_.hi_k}};
  h["fine_size"] = fine_size_;
  h["fine_stride"] = fine_stride_;
  h["mid_size"] = mid_size();
  h["mid_stride"] = mid_stride();
  h["scenes"] = nlohmann::json::array();
  for (std::size_t i = 0; i < scenes_.size(); ++i) {
    const PreparedScene& s = *scenes_[i];
    const std::string stem = fmt::format("scene{:03d}_", i);
    nlohmann::json arrays;
    arrays["fine_indices"] = write_blob(dir, stem + "fine_indices.f32", s.fine_indices);
    arrays["mid_indices"] = write_blob(dir, stem + "mid_indices.f32", s.mid_indices);
    arrays["mid_lst_t1"] = write_blob(dir, stem + "mid_lst_t1.f32", s.mid_lst_t1);
    arrays["coarse_t1"] = write_blob(dir, stem + "coarse_t1.f32", s.coarse_t1);
    arrays["coarse_t2"] = write_blob(dir, stem + "coarse_t2.f32", s.coarse_t2);
    if (s.mid_lst_t2) arrays["mid_lst_t2"] = write_blob(dir, stem + "mid_lst_t2.f32", *s.mid_lst_t2);
    h["scenes"].push_back({{"id", s.id},
                           {"t1", s.t1},
                           {"t2", s.t2},
                           {"split", s.split},
                           {"fine_grid", grid_to_json(s.fine_grid)},
                           {"mid_grid", grid_to_json(s.mid_grid())},
                           {"clamped", s.clamped},
                           {"arrays", arrays}});
  }
  h["patches"] = nlohmann::json::array();
  for (const auto& r : refs_) h["patches"].push_back({r.scene, r.row, r.col});
  std::ofstream out(dir / "header.json");
  if (!out) throw DatasetError("cannot write " + (dir / "header.json").string());
  out << h.dump(1) << '\n';
}

PatchSet PatchSet::load(const fs::path& dir) {
  std::ifstream in(dir / "header.json");
  if (!in) throw DatasetError("no patch archive at " + dir.string());
  nlohmann::json h;
  in >> h;
  if (h.value("format", std::string()) != kArchiveFormat) {
    throw DatasetError(dir.string() + " is not a patch archive");
  }
  PatchSet p;
  p.fine_size_ = h.at("fine_size").get<Index>();
  p.fine_stride_ = h.at("fine_stride").get<Index>();
  p.norm_.lo_k = h.at("normalization").at("lo_k").get<double>();
  p.norm_.hi_k = h.at("normalization").at("hi_k").get<double>();
  for (const auto& sj : h.at("scenes")) {
    PreparedScene s;
    s.id = sj.at("id").get<std::string>();
    s.t1 = sj.at("t1").get<std::string>();
    s.t2 = sj.at("t2").get<std::string>();
    s.split = sj.value("split", std::string("train"));
    s.fine_grid = grid_from_json(sj.at("fine_grid"));
    s.clamped = sj.value("clamped", Index{0});
    const auto& a = sj.at("arrays");
    s.fine_indices = read_blob(dir, a.at("fine_indices"));
    s.mid_indices = read_blob(dir, a.at("mid_indices"));
    s.mid_lst_t1 = read_blob(dir, a.at("mid_lst_t1"));
    s.coarse_t1 = read_blob(dir, a.at("coarse_t1"));
    s.coarse_t2 = read_blob(dir, a.at("coarse_t2"));
    if (a.contains("mid_lst_t2")) s.mid_lst_t2 = read_blob(dir, a.at("mid_lst_t2"));
    p.scenes_.push_back(std::make_shared<const PreparedScene>(std::move(s)));
  }
  for (const auto& r : h.at("patches")) {
    PatchRef ref{r.at(0).get<std::size_t>(), r.at(1).get<Index>(), r.at(2).get<Index>()};
    if (ref.scene >= p.scenes_.size()) throw DatasetError("patch index refers to a missing scene");
    p.refs_.push_back(ref);
  }
  return p;
}

}  // namespace lstfuse
