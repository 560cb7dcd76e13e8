#pragma once

// Minibatch Adam training with the baseline / single-task / multi-branch
// ablation modes.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"
#include "eval_metrics.hpp"
#include "losses.hpp"
#include "mesh_core.hpp"
#include "net.hpp"
#include "synth_gen.hpp"
#include "util.hpp"

namespace hmnet {

enum class TrainMode {
  baseline,             // density raster only, vertex branch only
  single_task_surface,  // full network, surface loss only
  multi_branch,         // full network, surface + joint + consistency losses
};

inline std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::baseline: return "baseline";
    case TrainMode::single_task_surface: return "single_task_surface";
    case TrainMode::multi_branch: return "multi_branch";
  }
  return "?";
}

inline TrainMode parse_train_mode(std::string_view s) {
  if (s == "baseline") return TrainMode::baseline;
  if (s == "single_task_surface") return TrainMode::single_task_surface;
  if (s == "multi_branch") return TrainMode::multi_branch;
  throw ConfigError("unknown training mode '" + std::string(s) + "'");
}

struct TrainConfig {
  std::size_t batch_size = 64;
  double learning_rate = 1e-4;
  int epochs = 30;
  // nullopt ("auto"): set to L_S / L_J (resp. L_S / L_JS) on the first batch
  // at initialization, then frozen.
  std::optional<double> lambda1 = 1.0;
  std::optional<double> lambda2 = 1.0;
  TrainMode mode = TrainMode::multi_branch;
  bool smoothing = true;
  int smoothing_iterations = 1;
  bool smooth_at_inference = true;
  std::optional<int> subsample_target;
  std::uint64_t seed = 0;
  int encoder_hidden = 128;
  int embed_width = 128;
  int trunk_width = 256;
  int branch_hidden = 256;
  bool detach_joint_branch = false;    // consistency loss does not update the joint branch
  bool detach_surface_branch = false;  // consistency loss does not update the vertex branch
  bool one_hot_parts = true;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be > 0");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (smoothing_iterations < 0) throw ConfigError("smoothing_iterations must be >= 0");
    for (const auto& l : {lambda1, lambda2}) {
      if (l && (!(*l >= 0.0) || !std::isfinite(*l))) throw ConfigError("loss weights must be finite and >= 0");
    }
  }
};

inline MeshTopology topology_for(const ArticulatedTemplate& tpl, const TrainConfig& cfg) {
  if (!cfg.subsample_target) return full_topology(tpl.mesh);
  return reduced_topology(tpl.mesh, subsample_map(tpl.mesh, *cfg.subsample_target, cfg.seed));
}

inline ArchConfig arch_for(const TrainConfig& cfg, const MeshTopology& topo, int raster_cells, int n_parts) {
  ArchConfig a;
  a.raster_cells = raster_cells;
  a.part_channels = cfg.one_hot_parts ? n_parts : 1;
  a.encoder_hidden = cfg.encoder_hidden;
  a.embed_width = cfg.embed_width;
  a.trunk_width = cfg.trunk_width;
  a.branch_hidden = cfg.branch_hidden;
  a.n_vertices = topo.vertex_count();
  a.n_joints = topo.joint_count();
  a.part_encoder = cfg.mode != TrainMode::baseline;
  a.joint_branch = cfg.mode != TrainMode::baseline;
  return a;
}

struct AdamState {
  LayerStack m;
  LayerStack v;
  std::uint64_t step = 0;

  static AdamState zeros_for(const NetworkParams& p) { return {zeros_like(p.layers), zeros_like(p.layers), 0}; }
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

inline void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state, double lr,
                      const AdamHyper& h = {}) {
  if (grads.layers.size() != params.layers.size() || state.m.size() != params.layers.size()) {
    throw ShapeError("adam: gradient/state layout does not match parameters");
  }
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    const Layer& g = grads.layers[i];
    if (g.weight.rows() != params.layers[i].weight.rows() || g.weight.cols() != params.layers[i].weight.cols() ||
        g.bias.size() != params.layers[i].bias.size()) {
      throw ShapeError("adam: gradient shape mismatch in layer " + params.layers[i].name);
    }
    if (!g.weight.allFinite() || !g.bias.allFinite()) {
      throw TrainingError("non-finite gradient in layer " + params.layers[i].name + " at step " +
                          std::to_string(state.step + 1));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    m = h.beta1 * m + (1.0 - h.beta1) * grad;
    v = h.beta2 * v + (1.0 - h.beta2) * grad.cwiseAbs2();
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + h.eps);
  };
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    update(params.layers[i].weight, grads.layers[i].weight, state.m[i].weight, state.v[i].weight);
    update(params.layers[i].bias, grads.layers[i].bias, state.m[i].bias, state.v[i].bias);
  }
  ++params.version;
}

// Dense per-dataset training targets, one column per sample.
struct TargetMatrix {
  Eigen::MatrixXd vertices;  // 3 * n_vertices x n
  Eigen::MatrixXd joints;    // 3 * n_joints x n
};

inline TargetMatrix target_matrix(const Dataset& ds, const MeshTopology& topo) {
  TargetMatrix t;
  t.vertices.resize(3 * topo.vertex_count(), static_cast<Eigen::Index>(ds.size()));
  t.joints.resize(3 * topo.joint_count(), static_cast<Eigen::Index>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const SampleTargets s = targets_for(ds.samples[i], topo);
    if (s.vertices.cols() != topo.vertex_count() || s.joints.cols() != topo.joint_count()) {
      throw ShapeError("dataset sample does not match the mesh topology");
    }
    t.vertices.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(s.vertices.data(), s.vertices.size());
    t.joints.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(s.joints.data(), s.joints.size());
  }
  return t;
}

struct BatchObjective {
  LossReport report;  // batch means of the per-sample losses
  Eigen::MatrixXd grad_vertices;
  Eigen::MatrixXd grad_joints;
};

struct ObjectiveOptions {
  TrainMode mode = TrainMode::multi_branch;
  LossWeights weights;
  bool detach_joint_branch = false;
  bool detach_surface_branch = false;
};

inline BatchObjective batch_objective(const ForwardResult& fr, const TargetMatrix& targets,
                                      std::span<const std::size_t> indices, const JointRegressor& regressor,
                                      const ObjectiveOptions& opt) {
  const auto nb = static_cast<Eigen::Index>(indices.size());
  const Eigen::Index nv = fr.vertices.rows() / 3;
  const bool joints = opt.mode != TrainMode::baseline;
  const LossWeights w = opt.mode == TrainMode::multi_branch ? opt.weights : LossWeights{0.0, 0.0};
  const double inv = 1.0 / static_cast<double>(nb);

  BatchObjective out;
  out.grad_vertices = Eigen::MatrixXd::Zero(fr.vertices.rows(), nb);
  if (joints) out.grad_joints = Eigen::MatrixXd::Zero(fr.joints.rows(), nb);
  double ls = 0.0, lj = 0.0, ljs = 0.0;
  for (Eigen::Index b = 0; b < nb; ++b) {
    const auto col = static_cast<Eigen::Index>(indices[b]);
    Eigen::Map<const VertexSet> gt_v(targets.vertices.col(col).data(), 3, nv);
    Eigen::Map<VertexSet> gv(out.grad_vertices.col(b).data(), 3, nv);
    const NormLoss s = surface_loss(fr.vertex_set(b), gt_v);
    ls += s.value;
    gv = s.gradient * inv;
    if (!joints) continue;

    const Eigen::Index nj = fr.joints.rows() / 3;
    Eigen::Map<const JointSet> gt_j(targets.joints.col(col).data(), 3, nj);
    Eigen::Map<JointSet> gj(out.grad_joints.col(b).data(), 3, nj);
    const NormLoss j = joint_loss(fr.joint_set(b), gt_j);
    const ConsistencyLoss c = consistency_loss(fr.joint_set(b), fr.vertex_set(b), regressor);
    lj += j.value;
    ljs += c.value;
    gj = (w.lambda1 * inv) * j.gradient;
    if (!opt.detach_joint_branch) gj += (w.lambda2 * inv) * c.grad_joints;
    if (!opt.detach_surface_branch) gv += (w.lambda2 * inv) * c.grad_vertices;
  }
  out.report = combined_loss(ls * inv, lj * inv, ljs * inv, w);
  return out;
}

struct BatchLogRow {
  int epoch = 0;
  std::uint64_t step = 0;
  LossReport loss;
  double lr = 0.0;
};

struct EpochLogRow {
  int epoch = 0;
  double mean_combined = 0.0;
  bool has_metrics = false;
  SampleMetrics held_out;  // means over the held-out split
};

struct TrainingLog {
  std::vector<BatchLogRow> batches;
  std::vector<EpochLogRow> epochs;
};

struct TrainState {
  NetworkParams params;
  AdamState adam;
  int epochs_done = 0;
  bool weights_fixed = false;
  LossWeights weights;
  double best_metric = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
};

struct TrainHooks {
  std::function<void(const TrainState&, const EpochLogRow&, bool is_best)> on_epoch_end;
};

struct TrainResult {
  TrainState state;
  TrainingLog log;
  MeshTopology topology;
};

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(derive_seed(seed, 0x73687566ULL), static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  return order;
}

inline TrainState initial_state(const TrainConfig& cfg, const MeshTopology& topo, int raster_cells, int n_parts) {
  TrainState s;
  s.params = init_params(arch_for(cfg, topo, raster_cells, n_parts), cfg.seed);
  s.adam = AdamState::zeros_for(s.params);
  return s;
}

inline LossWeights equalizing_weights(const LossReport& r) {
  auto ratio = [&](double denom) { return denom > 1e-12 ? r.l_s / denom : 1.0; };
  return {ratio(r.l_j), ratio(r.l_js)};
}

// Runs epochs [resume.epochs_done + 1, cfg.epochs]. held_out may be null.
inline TrainResult train(const Dataset& train_set, const Dataset* held_out, const ArticulatedTemplate& tpl,
                         const TrainConfig& cfg, const TrainHooks& hooks = {},
                         std::optional<TrainState> resume = std::nullopt) {
  cfg.validate();
  if (train_set.template_hash != tpl.hash() || (held_out && held_out->template_hash != tpl.hash())) {
    throw DataError("dataset was generated for a different template");
  }
  if (train_set.size() == 0) throw ConfigError("training set is empty");

  TrainResult res;
  res.topology = topology_for(tpl, cfg);
  const MeshTopology& topo = res.topology;
  const int cells = train_set.raster_height * train_set.raster_width;
  res.state = resume ? std::move(*resume) : initial_state(cfg, topo, cells, tpl.n_parts);
  TrainState& st = res.state;
  if (st.params.arch != arch_for(cfg, topo, cells, tpl.n_parts)) throw ShapeError("resumed parameters do not match the config");

  const TargetMatrix targets = target_matrix(train_set, topo);
  const SmoothingSpec smoothing{cfg.smoothing ? &topo.adjacency : nullptr, cfg.smoothing_iterations};
  EvalOptions eval_opt;
  eval_opt.smoothing = cfg.smoothing && cfg.smooth_at_inference;
  eval_opt.smoothing_iterations = cfg.smoothing_iterations;

  ObjectiveOptions obj;
  obj.mode = cfg.mode;
  obj.detach_joint_branch = cfg.detach_joint_branch;
  obj.detach_surface_branch = cfg.detach_surface_branch;

  const std::size_t n = train_set.size();
  for (int epoch = st.epochs_done + 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<std::size_t> order = epoch_order(n, cfg.seed, epoch);
    double combined_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(cfg.batch_size, n - start));
      const ForwardResult fr = forward(st.params, make_batch(train_set, idx, tpl.n_parts, st.params.arch.part_channels), smoothing);

      if (!st.weights_fixed) {
        if (cfg.mode == TrainMode::multi_branch && (!cfg.lambda1 || !cfg.lambda2)) {
          obj.weights = {};
          const LossWeights eq = equalizing_weights(batch_objective(fr, targets, idx, topo.regressor, obj).report);
          st.weights = {cfg.lambda1.value_or(eq.lambda1), cfg.lambda2.value_or(eq.lambda2)};
        } else {
          st.weights = {cfg.lambda1.value_or(1.0), cfg.lambda2.value_or(1.0)};
        }
        st.weights_fixed = true;
      }
      obj.weights = st.weights;

      const BatchObjective bo = batch_objective(fr, targets, idx, topo.regressor, obj);
      const Gradients g = backward(st.params, fr.trace, bo.grad_vertices, bo.grad_joints);
      adam_step(st.params, g, st.adam, cfg.learning_rate);
      res.log.batches.push_back({epoch, st.adam.step, bo.report, cfg.learning_rate});
      combined_sum += bo.report.combined;
      ++batches;
    }

    EpochLogRow row;
    row.epoch = epoch;
    row.mean_combined = combined_sum / static_cast<double>(batches);
    bool is_best = false;
    if (held_out && held_out->size() > 0) {
      row.has_metrics = true;
      row.held_out = evaluate(st.params, *held_out, topo, tpl.n_parts, eval_opt).mean;
      if (row.held_out.pa_surface_error < st.best_metric) {
        st.best_metric = row.held_out.pa_surface_error;
        st.best_epoch = epoch;
        is_best = true;
      }
    }
    st.epochs_done = epoch;
    res.log.epochs.push_back(row);
    if (hooks.on_epoch_end) hooks.on_epoch_end(st, row, is_best);
  }
  return res;
}

}  // namespace hmnet
