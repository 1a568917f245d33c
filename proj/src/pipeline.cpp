#include "lstfuse/pipeline.hpp"

#include "lstfuse/checkpoint.hpp"
#include "lstfuse/geo.hpp"
#include "lstfuse/inference.hpp"
#include "lstfuse/io.hpp"
#include "lstfuse/plot.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <cmath>
#include <fstream>
#include <memory>
#include <ostream>
#include <stdexcept>

namespace lstfuse::pipeline {

namespace {

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw std::runtime_error(fmt::format("{} not found: {}", what, p.string()));
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << s;
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  nlohmann::json j;
  in >> j;
  return j;
}

std::vector<PreparedScene> prepare_split(const Manifest& m, const std::string& split, std::ostream& log) {
  std::vector<PreparedScene> scenes;
  for (const SampleEntry* e : m.split(split)) {
    PreparedScene s = prepare_scene(load_sample(m, *e), split, m.normalization);
    if (s.clamped > 0) {
      fmt::print(log, "warning: {}: {} LST pixels clamped to [{}, {}] K\n", s.id, s.clamped, m.normalization.lo_k,
                 m.normalization.hi_k);
    }
    scenes.push_back(std::move(s));
  }
  if (scenes.empty()) throw std::runtime_error(fmt::format("manifest has no '{}' samples", split));
  return scenes;
}

}  // namespace

Raster crop_to(const Raster& r, const GridSpec& target) {
  const GridSpec& g = r.grid();
  if (std::abs(g.pixel_size - target.pixel_size) > 1e-9 * g.pixel_size) {
    throw std::runtime_error("crop_to: pixel sizes differ");
  }
  const double fc = (target.origin_x - g.origin_x) / g.pixel_size;
  const double fr = (g.origin_y - target.origin_y) / g.pixel_size;
  const auto col = static_cast<Index>(std::llround(fc));
  const auto row = static_cast<Index>(std::llround(fr));
  if (std::abs(fc - static_cast<double>(col)) > 1e-6 || std::abs(fr - static_cast<double>(row)) > 1e-6) {
    throw std::runtime_error("crop_to: grids are not aligned");
  }
  return r.window(row, col, target.height, target.width);
}

Manifest synth(const SynthOptions& opt, std::ostream& log) {
  if (opt.out.empty()) throw std::invalid_argument("synth needs an output directory");
  Manifest m = write_synthetic_dataset(opt.out, opt.spec);
  fmt::print(log, "wrote {} scenes and {}\n", m.samples.size(), (m.base_dir / "manifest.json").string());
  return m;
}

PreprocessResult preprocess(const PreprocessOptions& opt, std::ostream& log) {
  require_file(opt.manifest, "manifest");
  if (opt.out.empty()) throw std::invalid_argument("preprocess needs an output directory");
  const Manifest m = Manifest::load(opt.manifest);
  PreprocessResult res;
  res.validation = validate_constraints(m);
  res.leakage = check_leakage(m);
  fmt::print(log, "{}", res.validation.str());
  fmt::print(log, "{}", res.leakage.str());
  if (!res.validation.ok()) throw DatasetError("manifest violates the input constraints");
  if (!res.leakage.clean() && !opt.allow_leakage) throw DatasetError("training dates leak between samples");

  std::vector<PreparedScene> scenes = prepare_split(m, opt.split, log);
  for (const auto& s : scenes) res.clamped += s.clamped;
  const PatchSet patches = extract_patches(std::move(scenes), m.normalization, opt.patch_size, opt.stride);
  if (patches.empty()) throw DatasetError("scenes are smaller than one patch");
  patches.save(opt.out);
  res.patches = patches.size();
  fmt::print(log, "{} patches of {} px from {} scenes -> {}\n", patches.size(), opt.patch_size, patches.scenes().size(),
             opt.out.string());
  return res;
}

LossTrace train(const TrainOptions& opt, std::ostream& log) {
  if (opt.out.empty()) throw std::invalid_argument("train needs an output directory");
  PatchSet patches;
  if (!opt.patches.empty()) {
    require_file(opt.patches / "header.json", "patch archive");
    patches = PatchSet::load(opt.patches);
  } else {
    require_file(opt.manifest, "manifest");
    const Manifest m = Manifest::load(opt.manifest);
    patches = extract_patches(prepare_split(m, "train", log), m.normalization, opt.generator.patch_size, 24);
  }
  fs::create_directories(opt.out);
  TrainConfig tcfg = opt.train;
  tcfg.checkpoint_dir = opt.out;
  DiscriminatorConfig dcfg = opt.discriminator;
  dcfg.input_size = opt.generator.patch_size / 3;

  nlohmann::json cfg{{"generator", opt.generator},
                     {"discriminator", dcfg},
                     {"train", tcfg},
                     {"loss_weights", opt.weights},
                     {"patches", patches.size()}};
  cfg["train"].erase("checkpoint_dir");
  write_text(opt.out / "train_config.json", cfg.dump(2) + "\n");

  Trainer trainer(opt.generator, dcfg, tcfg, opt.weights);
  fmt::print(log, "training on {} patches: {} steps, batch {}, {} generator parameters\n", patches.size(), tcfg.steps,
             std::min<std::size_t>(static_cast<std::size_t>(tcfg.batch_size), patches.size()),
             trainer.generator().parameters().parameter_count());
  try {
    trainer.run(patches, [&](const LossRecord& r) {
      if (opt.log_every > 0 && (r.step % opt.log_every == 0 || r.step == 1)) {
        fmt::print(log, "step {:6d}  loss_G {:.5f}  loss_D {:.5f}  content {:.5f}\n", r.step, r.loss_g, r.loss_d,
                   r.content);
      }
    });
  } catch (const TrainingError& e) {
    const fs::path snap = opt.out / "failure_snapshot.json";
    write_text(snap, e.snapshot.dump(2) + "\n");
    trainer.trace().write_csv(opt.out / "loss.csv");
    throw TrainingError(fmt::format("{} (batch snapshot in {})", e.what(), snap.string()), e.snapshot);
  }
  const LossTrace& trace = trainer.trace();
  trace.write_csv(opt.out / "loss.csv");
  write_loss_plot(opt.out / "loss.png", trace, 100);
  fmt::print(log, "wrote {}\n", (opt.out / "checkpoint.lstf").string());
  return trace;
}

std::vector<Prediction> infer(const InferOptions& opt, std::ostream& log) {
  require_file(opt.checkpoint, "checkpoint");
  require_file(opt.manifest, "manifest");
  if (opt.out.empty()) throw std::invalid_argument("infer needs an output directory");
  const Checkpoint ckpt = read_checkpoint(opt.checkpoint);
  const auto gen = ckpt.make_generator();
  const Manifest m = Manifest::load(opt.manifest);

  std::vector<const SampleEntry*> targets;
  for (const SampleEntry& e : m.samples) {
    if (opt.date ? e.t2 == *opt.date : e.split == opt.split) targets.push_back(&e);
  }
  if (targets.empty()) {
    throw std::runtime_error(opt.date ? fmt::format("no sample targets {} in {}", *opt.date, opt.manifest.string())
                                      : fmt::format("manifest has no '{}' samples", opt.split));
  }

  fs::create_directories(opt.out);
  std::vector<Prediction> out;
  nlohmann::json index = nlohmann::json::array();
  for (const SampleEntry* e : targets) {
    const PreparedScene scene = prepare_scene(load_sample(m, *e), e->split, ckpt.normalization);
    const Raster fused = predict_scene(*gen, scene, ckpt.normalization, {opt.stride, 8});
    const Raster bicubic = bicubic_baseline(scene, ckpt.normalization);
    Prediction p{e->id, e->t2, opt.out / (e->id + "_fused.tif"), opt.out / (e->id + "_bicubic.tif"),
                 opt.out / (e->id + "_fused.png")};
    write_geotiff(p.fused, fused);
    write_geotiff(p.bicubic, bicubic);
    const auto& b = fused.band(0);
    write_png(p.png, colorize(fused, b.minCoeff(), b.maxCoeff()));
    fmt::print(log, "{} ({}): {} x {} px, {:.2f} to {:.2f} K\n", e->id, e->t2, fused.width(), fused.height(),
               b.minCoeff(), b.maxCoeff());
    index.push_back({{"id", p.id},
                     {"date", p.date},
                     {"fused", p.fused.filename().string()},
                     {"bicubic", p.bicubic.filename().string()},
                     {"png", p.png.filename().string()}});
    out.push_back(std::move(p));
  }
  write_text(opt.out / "predictions.json", nlohmann::json{{"checkpoint", fs::absolute(opt.checkpoint).string()},
                                                           {"predictions", index}}
                                                   .dump(2) +
                                               "\n");
  return out;
}

EvaluateResult evaluate(const EvaluateOptions& opt, std::ostream& log) {
  const fs::path index_path = opt.predictions / "predictions.json";
  require_file(index_path, "prediction index");
  require_file(opt.manifest, "manifest");
  if (opt.sensors_csv) require_file(*opt.sensors_csv, "sensor file");
  const Manifest m = Manifest::load(opt.manifest);
  const nlohmann::json index = read_json(index_path);
  const fs::path out_dir = opt.out.empty() ? opt.predictions : opt.out;
  fs::create_directories(out_dir);

  EvaluateResult res;
  std::vector<DatedPrediction> dated;
  for (const auto& pj : index.at("predictions")) {
    const SampleEntry& e = m.sample(pj.at("id").get<std::string>());
    const Raster fused = read_geotiff(opt.predictions / pj.at("fused").get<std::string>());
    dated.push_back({e.t2, fused});
    if (!e.has("mid_lst_t2")) {
      fmt::print(log, "note: {} has no target-date mid LST; skipped in the metrics table\n", e.id);
      continue;
    }
    const Raster ref_full = read_geotiff(e.paths.at("mid_lst_t2"));
    const Raster ref = crop_to(ref_full, fused.grid().coarsened(3));
    if (!ref.fully_valid()) {
      fmt::print(log, "note: {} target-date mid LST has gaps; skipped in the metrics table\n", e.id);
      continue;
    }
    std::optional<Raster> truth;
    if (e.has("fine_lst_t2_truth")) truth = crop_to(read_geotiff(e.paths.at("fine_lst_t2_truth")), fused.grid());

    const std::pair<std::string, std::string> methods[] = {{"fused", "fused"}, {"bicubic", "bicubic"}};
    for (const auto& [key, label] : methods) {
      const Raster pred = key == "fused" ? fused : read_geotiff(opt.predictions / pj.at(key).get<std::string>());
      metrics::MetricsEntry entry = metrics::evaluate_against_reference(pred, ref);
      entry.date = e.t2;
      entry.method = label;
      if (truth && truth->fully_valid()) {
        const Plane<double> a = pred.band(0).cast<double>(), b = truth->band(0).cast<double>();
        entry.fine_rmse = metrics::rmse(a, b);
      }
      res.report.entries.push_back(entry);
    }
  }
  if (res.report.entries.empty()) fmt::print(log, "note: no prediction had a usable reference\n");
  write_text(out_dir / "metrics.json", res.report.to_json().dump(2) + "\n");
  write_text(out_dir / "metrics.txt", res.report.to_table());
  fmt::print(log, "{}", res.report.to_table());

  if (opt.sensors_csv) {
    const auto series = build_sensor_series(read_sensor_csv(*opt.sensors_csv), dated);
    nlohmann::json cj = nlohmann::json::array();
    for (const auto& s : series) {
      if (s.samples.size() < 3) {
        fmt::print(log, "note: sensor {} has {} paired samples; at least 3 are needed\n", s.sensor_id, s.samples.size());
        continue;
      }
      try {
        const metrics::RankCorrelation rc = metrics::rank_correlations(s);
        res.correlations.push_back({s.sensor_id, s.samples.size(), rc});
        cj.push_back({{"sensor_id", s.sensor_id}, {"pairs", s.samples.size()}, {"pcc", rc.pcc}, {"srcc", rc.srcc}});
      } catch (const metrics::MetricError& err) {
        fmt::print(log, "note: sensor {}: {}\n", s.sensor_id, err.what());
      }
    }
    write_text(out_dir / "correlations.json", cj.dump(2) + "\n");
    const std::string table = metrics::correlation_table(res.correlations);
    write_text(out_dir / "correlations.txt", table);
    fmt::print(log, "{}", table);
  }
  return res;
}

}  // namespace lstfuse::pipeline
