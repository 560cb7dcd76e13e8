#pragma once

// Run configuration and the gen / train / eval / predict / bench commands.
// Commands throw hmnet::Error subclasses; tools/hmnet.cpp maps them to exit codes.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "eval_metrics.hpp"
#include "io.hpp"
#include "synth_gen.hpp"
#include "train.hpp"

namespace hmnet::cli {

namespace fs = std::filesystem;

struct RunConfig {
  // generator
  TemplateKind template_kind = TemplateKind::body;
  int resolution = 8;
  int raster_size = 32;
  std::size_t n_samples = 2000;
  NoiseMode noise = NoiseMode::clean;
  // training
  TrainConfig train;
  double held_out_fraction = 0.1;
  // evaluation / export
  bool branch_joints = false;
  ProcrustesMode procrustes = ProcrustesMode::joint;
  std::string eval_split = "all";  // all | train | held_out
  std::size_t sample_index = 0;
  bool export_gt = false;
  bool export_unsmoothed = false;
  std::size_t bench_samples = 1000;
  std::vector<std::size_t> bench_batch_sizes = {1, 64};
  int bench_repetitions = 5;
  // paths
  fs::path out = ".";
  fs::path dataset;     // default: <out>/dataset.hmnk
  fs::path checkpoint;  // default: <out>/best.ckpt
  fs::path resume;      // empty = fresh run

  fs::path dataset_path() const { return dataset.empty() ? out / "dataset.hmnk" : dataset; }
  fs::path checkpoint_path() const { return checkpoint.empty() ? out / "best.ckpt" : checkpoint; }

  void validate() const {
    if (resolution < 4) throw ConfigError("resolution must be >= 4");
    if (raster_size < 8) throw ConfigError("raster_size must be >= 8");
    if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
    if (!(held_out_fraction >= 0.0 && held_out_fraction < 1.0)) throw ConfigError("held_out_fraction must be in [0, 1)");
    if (eval_split != "all" && eval_split != "train" && eval_split != "held_out") {
      throw ConfigError("eval_split must be all, train or held_out");
    }
    if (bench_samples < 1 || bench_repetitions < 1 || bench_batch_sizes.empty()) throw ConfigError("bad bench settings");
    for (std::size_t b : bench_batch_sizes)
      if (b < 1) throw ConfigError("bench batch sizes must be >= 1");
    train.validate();
  }
};

namespace detail {

template <class T>
T get_as(const nlohmann::json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

inline std::optional<double> lambda_value(const nlohmann::json& v, const std::string& key) {
  if (v.is_string()) {
    if (v.get<std::string>() == "auto") return std::nullopt;
    throw ConfigError("config key '" + key + "' must be a number or \"auto\"");
  }
  return get_as<double>(v, key);
}

}  // namespace detail

// Applies every key of `j` onto `cfg`; unknown keys are an error.
inline void apply_json(RunConfig& cfg, const nlohmann::json& j) {
  using detail::get_as;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig& t = cfg.train;
  for (const auto& [key, v] : j.items()) {
    if (key == "template") cfg.template_kind = parse_template_kind(get_as<std::string>(v, key));
    else if (key == "resolution") cfg.resolution = get_as<int>(v, key);
    else if (key == "raster_size") cfg.raster_size = get_as<int>(v, key);
    else if (key == "n_samples") {
      const auto n = get_as<long long>(v, key);
      if (n < 1) throw ConfigError("n_samples must be >= 1");
      cfg.n_samples = static_cast<std::size_t>(n);
    }
    else if (key == "noise") cfg.noise = parse_noise_mode(get_as<std::string>(v, key));
    else if (key == "seed") t.seed = get_as<std::uint64_t>(v, key);
    else if (key == "batch_size") {
      const auto b = get_as<long long>(v, key);
      if (b < 1) throw ConfigError("batch_size must be >= 1");
      t.batch_size = static_cast<std::size_t>(b);
    }
    else if (key == "learning_rate") t.learning_rate = get_as<double>(v, key);
    else if (key == "epochs") t.epochs = get_as<int>(v, key);
    else if (key == "lambda1") t.lambda1 = detail::lambda_value(v, key);
    else if (key == "lambda2") t.lambda2 = detail::lambda_value(v, key);
    else if (key == "mode") t.mode = parse_train_mode(get_as<std::string>(v, key));
    else if (key == "smoothing") t.smoothing = get_as<bool>(v, key);
    else if (key == "smoothing_iterations") t.smoothing_iterations = get_as<int>(v, key);
    else if (key == "smooth_at_inference") t.smooth_at_inference = get_as<bool>(v, key);
    else if (key == "subsample_target") {
      if (v.is_null()) t.subsample_target.reset();
      else t.subsample_target = get_as<int>(v, key);
    }
    else if (key == "encoder_hidden") t.encoder_hidden = get_as<int>(v, key);
    else if (key == "embed_width") t.embed_width = get_as<int>(v, key);
    else if (key == "trunk_width") t.trunk_width = get_as<int>(v, key);
    else if (key == "branch_hidden") t.branch_hidden = get_as<int>(v, key);
    else if (key == "detach_joint_branch") t.detach_joint_branch = get_as<bool>(v, key);
    else if (key == "detach_surface_branch") t.detach_surface_branch = get_as<bool>(v, key);
    else if (key == "one_hot_parts") t.one_hot_parts = get_as<bool>(v, key);
    else if (key == "held_out_fraction") cfg.held_out_fraction = get_as<double>(v, key);
    else if (key == "branch_joints") cfg.branch_joints = get_as<bool>(v, key);
    else if (key == "procrustes") {
      const auto s = get_as<std::string>(v, key);
      if (s == "joint") cfg.procrustes = ProcrustesMode::joint;
      else if (s == "two_stage") cfg.procrustes = ProcrustesMode::two_stage;
      else throw ConfigError("procrustes must be joint or two_stage");
    }
    else if (key == "eval_split") cfg.eval_split = get_as<std::string>(v, key);
    else if (key == "sample_index") cfg.sample_index = get_as<std::size_t>(v, key);
    else if (key == "export_gt") cfg.export_gt = get_as<bool>(v, key);
    else if (key == "export_unsmoothed") cfg.export_unsmoothed = get_as<bool>(v, key);
    else if (key == "bench_samples") cfg.bench_samples = get_as<std::size_t>(v, key);
    else if (key == "bench_batch_sizes") cfg.bench_batch_sizes = get_as<std::vector<std::size_t>>(v, key);
    else if (key == "bench_repetitions") cfg.bench_repetitions = get_as<int>(v, key);
    else if (key == "out") cfg.out = get_as<std::string>(v, key);
    else if (key == "dataset") cfg.dataset = get_as<std::string>(v, key);
    else if (key == "checkpoint") cfg.checkpoint = get_as<std::string>(v, key);
    else if (key == "resume") cfg.resume = get_as<std::string>(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

inline RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  RunConfig cfg;
  apply_json(cfg, j);
  return cfg;
}

// Fingerprint of everything that shapes a training run except the epoch budget
// and file locations, so a longer run can resume a shorter one.
inline std::uint64_t config_hash(const RunConfig& c) {
  const TrainConfig& t = c.train;
  Fnv1a h;
  h.str("hmnet-train-v1");
  h.u64(static_cast<std::uint64_t>(c.template_kind));
  h.u64(static_cast<std::uint64_t>(c.resolution));
  h.u64(static_cast<std::uint64_t>(c.raster_size));
  h.f64(c.held_out_fraction);
  h.u64(t.batch_size);
  h.f64(t.learning_rate);
  h.f64(t.lambda1.value_or(-1.0));
  h.f64(t.lambda2.value_or(-1.0));
  h.str(to_string(t.mode));
  h.u64(t.smoothing);
  h.u64(static_cast<std::uint64_t>(t.smoothing_iterations));
  h.u64(t.smooth_at_inference);
  h.u64(static_cast<std::uint64_t>(t.subsample_target.value_or(-1)));
  h.u64(t.seed);
  for (int w : {t.encoder_hidden, t.embed_width, t.trunk_width, t.branch_hidden}) h.u64(static_cast<std::uint64_t>(w));
  h.u64(t.detach_joint_branch);
  h.u64(t.detach_surface_branch);
  h.u64(t.one_hot_parts);
  return h.value();
}

inline void ensure_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".hmnet_write_probe";
  {
    std::ofstream p(probe);
    if (!p) throw ConfigError("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe, ec);
}

inline void require_file(const fs::path& p, const char* what) {
  if (!fs::is_regular_file(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
}

// Dataset split used by train: the last ceil(n * fraction) samples are held out.
struct SplitDatasets {
  Dataset train;
  Dataset held_out;
};

inline SplitDatasets split_dataset(const Dataset& ds, double held_out_fraction) {
  const auto n = ds.size();
  std::size_t h = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * held_out_fraction));
  if (held_out_fraction > 0.0 && h >= n) h = n - 1;
  SplitDatasets s{ds, ds};
  s.train.samples.assign(ds.samples.begin(), ds.samples.end() - static_cast<std::ptrdiff_t>(h));
  s.held_out.samples.assign(ds.samples.end() - static_cast<std::ptrdiff_t>(h), ds.samples.end());
  s.held_out.split = Split::test;
  return s;
}

inline ArticulatedTemplate template_for(const RunConfig& c) { return build_template(c.template_kind, c.resolution); }

inline Dataset load_checked_dataset(const RunConfig& c, const ArticulatedTemplate& tpl) {
  Dataset ds = io::load_dataset(c.dataset_path(), &tpl);
  if (ds.raster_height != c.raster_size || ds.raster_width != c.raster_size) {
    throw DataError("dataset raster size differs from the config");
  }
  return ds;
}

// Network weights from a checkpoint, checked against what the config implies.
inline NetworkParams load_network(const RunConfig& c, const ArticulatedTemplate& tpl, const MeshTopology& topo) {
  const TrainState st = io::restore_state(io::load_checkpoint(c.checkpoint_path()));
  const ArchConfig expected = arch_for(c.train, topo, c.raster_size * c.raster_size, tpl.n_parts);
  if (!(st.params.arch == expected)) {
    throw ShapeError("checkpoint architecture is incompatible with the config and template");
  }
  return st.params;
}

inline int cmd_gen(const RunConfig& c, std::ostream& log) {
  c.validate();
  ensure_out_dir(c.out);
  const ArticulatedTemplate tpl = template_for(c);
  GenerateOptions opt;
  opt.noise = c.noise;
  opt.raster_height = c.raster_size;
  opt.raster_width = c.raster_size;
  const Dataset ds = generate(tpl, c.n_samples, c.train.seed, opt);
  io::save_dataset(c.dataset_path(), ds, tpl);
  const io::DatasetLayout lay = io::layout_of(tpl, c.raster_size, c.raster_size);
  log << "wrote " << c.dataset_path().string() << "\n"
      << "  samples        " << ds.size() << "\n"
      << "  template       " << to_string(tpl.kind) << " (resolution " << tpl.resolution << ")\n"
      << "  vertices       " << tpl.mesh.vertex_count() << "\n"
      << "  faces          " << tpl.mesh.faces.size() << "\n"
      << "  joints         " << tpl.joint_count() << "\n"
      << "  parts          " << tpl.n_parts << "\n"
      << "  record stride  " << lay.record_stride() << " bytes\n";
  return 0;
}

inline std::string render_train_log(const std::vector<BatchLogRow>& rows) {
  std::string s = io::train_log_header();
  for (const BatchLogRow& r : rows) s += io::train_log_row(r);
  return s;
}

inline std::string render_epoch_log(const std::vector<EpochLogRow>& rows) {
  std::string s = io::epoch_metrics_header();
  for (const EpochLogRow& r : rows) s += io::epoch_metrics_row(r);
  return s;
}

namespace detail {

inline std::vector<BatchLogRow> parse_train_log(const fs::path& p, int max_epoch) {
  std::vector<BatchLogRow> rows;
  if (!fs::exists(p)) return rows;
  const auto csv = io::read_csv(p);
  for (std::size_t i = 1; i < csv.size(); ++i) {
    const auto& c = csv[i];
    if (c.size() != 7) throw DataError("malformed training log " + p.string());
    BatchLogRow r;
    r.epoch = std::stoi(c[0]);
    if (r.epoch > max_epoch) continue;
    r.step = std::stoull(c[1]);
    r.loss.l_s = std::stod(c[2]);
    r.loss.l_j = std::stod(c[3]);
    r.loss.l_js = std::stod(c[4]);
    r.loss.combined = std::stod(c[5]);
    r.lr = std::stod(c[6]);
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<EpochLogRow> parse_epoch_log(const fs::path& p, int max_epoch) {
  std::vector<EpochLogRow> rows;
  if (!fs::exists(p)) return rows;
  const auto csv = io::read_csv(p);
  for (std::size_t i = 1; i < csv.size(); ++i) {
    const auto& c = csv[i];
    if (c.size() != 6) throw DataError("malformed epoch log " + p.string());
    EpochLogRow r;
    r.epoch = std::stoi(c[0]);
    if (r.epoch > max_epoch) continue;
    r.mean_combined = std::stod(c[1]);
    r.has_metrics = true;
    r.held_out = {std::stod(c[2]), std::stod(c[3]), std::stod(c[4]), std::stod(c[5])};
    rows.push_back(r);
  }
  return rows;
}

}  // namespace detail

// Writes <out>/last.ckpt every epoch, <out>/best.ckpt whenever the held-out PA
// surface error improves, plus train_log.csv (one row per batch) and
// epoch_metrics.csv (one row per epoch).
inline int cmd_train(const RunConfig& c, std::ostream& log) {
  c.validate();
  require_file(c.dataset_path(), "dataset");
  if (!c.resume.empty()) require_file(c.resume, "resume checkpoint");
  ensure_out_dir(c.out);
  const ArticulatedTemplate tpl = template_for(c);
  const Dataset ds = load_checked_dataset(c, tpl);
  const SplitDatasets split = split_dataset(ds, c.held_out_fraction);
  const std::uint64_t hash = config_hash(c);

  std::optional<TrainState> resume;
  std::vector<BatchLogRow> batch_rows;
  std::vector<EpochLogRow> epoch_rows;
  if (!c.resume.empty()) {
    const io::Checkpoint ck = io::load_checkpoint(c.resume);
    if (ck.config_hash != hash) throw DataError("resume checkpoint was written by a different config");
    resume = io::restore_state(ck);
    batch_rows = detail::parse_train_log(c.out / "train_log.csv", resume->epochs_done);
    epoch_rows = detail::parse_epoch_log(c.out / "epoch_metrics.csv", resume->epochs_done);
    log << "resuming after epoch " << resume->epochs_done << "\n";
  }

  TrainHooks hooks;
  std::vector<BatchLogRow> all_batches = batch_rows;
  hooks.on_epoch_end = [&](const TrainState& st, const EpochLogRow& row, bool is_best) {
    const io::Checkpoint ck = io::make_checkpoint(st, hash);
    io::save_checkpoint(c.out / "last.ckpt", ck);
    if (is_best || split.held_out.size() == 0) io::save_checkpoint(c.out / "best.ckpt", ck);
    epoch_rows.push_back(row);
    io::write_file_atomic(c.out / "epoch_metrics.csv", render_epoch_log(epoch_rows));
    char buf[256];
    std::snprintf(buf, sizeof buf, "epoch %3d  combined %.4f  held-out PA surface %.3f (x1000)%s\n", row.epoch,
                  row.mean_combined, 1000.0 * row.held_out.pa_surface_error, is_best ? "  *" : "");
    log << buf << std::flush;
  };

  // Batch rows are only known after train() returns; re-emit the CSV then. The
  // per-epoch hook above keeps checkpoints and epoch metrics current.
  const TrainResult res =
      train(split.train, split.held_out.size() ? &split.held_out : nullptr, tpl, c.train, hooks, std::move(resume));
  all_batches.insert(all_batches.end(), res.log.batches.begin(), res.log.batches.end());
  io::write_file_atomic(c.out / "train_log.csv", render_train_log(all_batches));
  if (res.state.epochs_done == 0) {
    io::save_checkpoint(c.out / "last.ckpt", io::make_checkpoint(res.state, hash));
    io::save_checkpoint(c.out / "best.ckpt", io::make_checkpoint(res.state, hash));
  }
  log << "trained " << res.log.epochs.size() << " epoch(s); lambda1 " << res.state.weights.lambda1 << ", lambda2 "
      << res.state.weights.lambda2 << "\n";
  return 0;
}

inline int cmd_eval(const RunConfig& c, std::ostream& log) {
  c.validate();
  require_file(c.dataset_path(), "dataset");
  require_file(c.checkpoint_path(), "checkpoint");
  ensure_out_dir(c.out);
  const ArticulatedTemplate tpl = template_for(c);
  const MeshTopology topo = topology_for(tpl, c.train);
  const NetworkParams params = load_network(c, tpl, topo);
  Dataset ds = load_checked_dataset(c, tpl);
  if (c.eval_split != "all") {
    SplitDatasets s = split_dataset(ds, c.held_out_fraction);
    ds = c.eval_split == "train" ? std::move(s.train) : std::move(s.held_out);
  }
  EvalOptions opt;
  opt.branch_joints = c.branch_joints;
  opt.smoothing = c.train.smoothing && c.train.smooth_at_inference;
  opt.smoothing_iterations = c.train.smoothing_iterations;
  opt.procrustes = c.procrustes;
  const MetricsReport rep = evaluate(params, ds, topo, tpl.n_parts, opt);
  io::write_file_atomic(c.out / "metrics.csv", io::metrics_csv(rep));
  const std::string summary = io::metrics_summary(rep);
  io::write_file_atomic(c.out / "summary.txt", summary);
  log << summary;
  return 0;
}

inline int cmd_predict(const RunConfig& c, std::ostream& log) {
  c.validate();
  require_file(c.dataset_path(), "dataset");
  require_file(c.checkpoint_path(), "checkpoint");
  ensure_out_dir(c.out);
  const ArticulatedTemplate tpl = template_for(c);
  const MeshTopology topo = topology_for(tpl, c.train);
  const NetworkParams params = load_network(c, tpl, topo);
  const Dataset ds = load_checked_dataset(c, tpl);
  if (c.sample_index >= ds.size()) {
    throw ParameterError("sample index " + std::to_string(c.sample_index) + " out of range (dataset has " +
                         std::to_string(ds.size()) + ")");
  }
  std::vector<Face> faces = tpl.mesh.faces;
  if (topo.is_subsampled()) faces = subsample_map(tpl.mesh, *c.train.subsample_target, c.train.seed).reduced_faces;

  Dataset one = ds;
  one.samples = {ds.samples[c.sample_index]};
  const std::string stem = "sample_" + std::to_string(c.sample_index);
  const bool smooth = c.train.smoothing && c.train.smooth_at_inference;
  const Predictions p = predict(params, one, topo, tpl.n_parts, smooth, c.train.smoothing_iterations);
  io::write_obj(c.out / (stem + "_pred.obj"), p.vertices[0], faces);
  log << "wrote " << (c.out / (stem + "_pred.obj")).string() << "\n";
  if (c.export_unsmoothed) {
    const Predictions raw = predict(params, one, topo, tpl.n_parts, false, 0);
    io::write_obj(c.out / (stem + "_pred_unsmoothed.obj"), raw.vertices[0], faces);
    log << "wrote " << (c.out / (stem + "_pred_unsmoothed.obj")).string() << "\n";
  }
  if (c.export_gt) {
    const SampleTargets t = targets_for(ds.samples[c.sample_index], topo);
    io::write_obj(c.out / (stem + "_gt.obj"), t.vertices, faces);
    log << "wrote " << (c.out / (stem + "_gt.obj")).string() << "\n";
  }
  return 0;
}

struct BenchRow {
  std::size_t batch = 0;
  int repetition = 0;
  std::size_t samples = 0;
  double seconds = 0.0;
  double samples_per_second = 0.0;
};

struct BenchSummary {
  std::size_t batch = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::vector<BenchSummary> summary;
};

inline BenchReport run_bench(const NetworkParams& params, const Dataset& ds, const MeshTopology& topo, int n_parts,
                             const SmoothingSpec& smoothing, std::size_t n_samples,
                             const std::vector<std::size_t>& batch_sizes, int repetitions) {
  BenchReport rep;
  for (std::size_t bs : batch_sizes) {
    // Batches are built up front so only the forward pass is timed.
    std::vector<Batch> batches;
    std::vector<std::size_t> idx;
    for (std::size_t done = 0; done < n_samples; done += bs) {
      idx.clear();
      for (std::size_t k = done; k < std::min(n_samples, done + bs); ++k) idx.push_back(k % ds.size());
      batches.push_back(make_batch(ds, idx, n_parts, params.arch.part_channels));
    }
    std::vector<double> rates;
    for (int r = 0; r < repetitions; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      double sink = 0.0;
      for (const Batch& b : batches) sink += forward(params, b, smoothing).vertices(0, 0);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      if (!std::isfinite(sink)) throw TrainingError("non-finite network output during benchmark");
      rates.push_back(static_cast<double>(n_samples) / secs);
      rep.rows.push_back({bs, r + 1, n_samples, secs, rates.back()});
    }
    double mean = 0.0;
    for (double x : rates) mean += x;
    mean /= static_cast<double>(rates.size());
    double var = 0.0;
    for (double x : rates) var += (x - mean) * (x - mean);
    var = rates.size() > 1 ? var / static_cast<double>(rates.size() - 1) : 0.0;
    rep.summary.push_back({bs, mean, std::sqrt(var)});
  }
  (void)topo;
  return rep;
}

inline std::string bench_csv(const BenchReport& rep) {
  std::string s = "batch,repetition,samples,seconds,samples_per_second\n";
  for (const BenchRow& r : rep.rows) {
    s += std::to_string(r.batch) + "," + std::to_string(r.repetition) + "," + std::to_string(r.samples) + "," +
         io::fmt_real(r.seconds) + "," + io::fmt_real(r.samples_per_second) + "\n";
  }
  for (const BenchSummary& m : rep.summary) {
    s += std::to_string(m.batch) + ",summary," + std::to_string(rep.rows.empty() ? 0 : rep.rows.front().samples) +
         ",," + io::fmt_real(m.mean) + " +- " + io::fmt_real(m.stddev) + "\n";
  }
  return s;
}

inline int cmd_bench(const RunConfig& c, std::ostream& log) {
  c.validate();
  require_file(c.dataset_path(), "dataset");
  require_file(c.checkpoint_path(), "checkpoint");
  ensure_out_dir(c.out);
  const ArticulatedTemplate tpl = template_for(c);
  const MeshTopology topo = topology_for(tpl, c.train);
  const NetworkParams params = load_network(c, tpl, topo);
  const Dataset ds = load_checked_dataset(c, tpl);
  const SmoothingSpec smoothing{c.train.smoothing && c.train.smooth_at_inference ? &topo.adjacency : nullptr,
                                c.train.smoothing_iterations};
  const BenchReport rep = run_bench(params, ds, topo, tpl.n_parts, smoothing, std::max<std::size_t>(c.bench_samples, 1000),
                                    c.bench_batch_sizes, c.bench_repetitions);
  io::write_file_atomic(c.out / "bench.csv", bench_csv(rep));
  for (const BenchRow& r : rep.rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "batch %4zu  rep %d  %zu samples  %.4f s  %.1f samples/s\n", r.batch, r.repetition,
                  r.samples, r.seconds, r.samples_per_second);
    log << buf;
  }
  for (const BenchSummary& m : rep.summary) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "batch %4zu  mean %.1f +- %.1f samples/s\n", m.batch, m.mean, m.stddev);
    log << buf;
  }
  return 0;
}

}  // namespace hmnet::cli
