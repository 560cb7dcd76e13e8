#pragma once

// Dual-encoder network over the part raster and the density raster. The two
// embeddings are concatenated, pass a fusion layer, and feed a vertex branch
// and a joint branch. Reverse mode is written out by hand.

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "errors.hpp"
#include "mesh_core.hpp"
#include "synth_gen.hpp"
#include "util.hpp"

namespace hmnet {

struct ArchConfig {
  int raster_cells = 32 * 32;
  // Part raster encoding: 1 feeds label / n_parts per cell, n_parts feeds a
  // one-hot channel per foreground label.
  int part_channels = 1;
  int encoder_hidden = 128;
  int embed_width = 128;
  int trunk_width = 256;
  int branch_hidden = 256;
  int n_vertices = 0;
  int n_joints = 0;
  // Baseline networks drop the part-raster encoder and the joint branch and
  // regress vertices from the density raster alone.
  bool part_encoder = true;
  bool joint_branch = true;

  bool operator==(const ArchConfig&) const = default;
};

struct Layer {
  std::string name;
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

using LayerStack = std::vector<Layer>;

struct NetworkParams {
  ArchConfig arch;
  LayerStack layers;
  // Bumped on every in-place update; a ForwardTrace taken before the bump is stale.
  std::uint64_t version = 0;

  const Layer& layer(const std::string& name) const {
    for (const Layer& l : layers)
      if (l.name == name) return l;
    throw ShapeError("no layer named " + name);
  }
  Layer& layer(const std::string& name) {
    return const_cast<Layer&>(static_cast<const NetworkParams&>(*this).layer(name));
  }
};

struct Gradients {
  LayerStack layers;
};

inline LayerStack zeros_like(const LayerStack& ref) {
  LayerStack out;
  out.reserve(ref.size());
  for (const Layer& l : ref) {
    out.push_back({l.name, Eigen::MatrixXd::Zero(l.weight.rows(), l.weight.cols()),
                   Eigen::VectorXd::Zero(l.bias.size())});
  }
  return out;
}

inline std::size_t parameter_count(const LayerStack& layers) {
  std::size_t n = 0;
  for (const Layer& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

// Flat addressing: per layer, weights in column-major order, then biases.
inline double& parameter_at(LayerStack& layers, std::size_t index) {
  for (Layer& l : layers) {
    const auto nw = static_cast<std::size_t>(l.weight.size());
    if (index < nw) return l.weight.data()[index];
    index -= nw;
    const auto nb = static_cast<std::size_t>(l.bias.size());
    if (index < nb) return l.bias.data()[index];
    index -= nb;
  }
  throw ShapeError("parameter index out of range");
}

inline double parameter_at(const LayerStack& layers, std::size_t index) {
  return parameter_at(const_cast<LayerStack&>(layers), index);
}

namespace detail {

inline std::vector<std::pair<std::string, std::pair<int, int>>> layer_plan(const ArchConfig& a) {
  std::vector<std::pair<std::string, std::pair<int, int>>> plan;  // name, (out, in)
  if (a.part_encoder) {
    plan.push_back({"part_enc.0", {a.encoder_hidden, a.raster_cells * a.part_channels}});
    plan.push_back({"part_enc.1", {a.embed_width, a.encoder_hidden}});
  }
  plan.push_back({"density_enc.0", {a.encoder_hidden, a.raster_cells}});
  plan.push_back({"density_enc.1", {a.embed_width, a.encoder_hidden}});
  plan.push_back({"trunk", {a.trunk_width, (a.part_encoder ? 2 : 1) * a.embed_width}});
  plan.push_back({"vert.0", {a.branch_hidden, a.trunk_width}});
  plan.push_back({"vert.1", {a.branch_hidden, a.branch_hidden}});
  plan.push_back({"vert.out", {3 * a.n_vertices, a.branch_hidden}});
  if (a.joint_branch) {
    plan.push_back({"joint.0", {a.branch_hidden, a.trunk_width}});
    plan.push_back({"joint.1", {a.branch_hidden, a.branch_hidden}});
    plan.push_back({"joint.out", {3 * a.n_joints, a.branch_hidden}});
  }
  return plan;
}

}  // namespace detail

// Glorot-uniform weights, zero biases; layers drawn in order from one stream.
inline NetworkParams init_params(const ArchConfig& arch, std::uint64_t seed) {
  NetworkParams p;
  p.arch = arch;
  std::mt19937_64 rng(derive_seed(seed, 0x6e6574ULL));
  for (const auto& [name, dims] : detail::layer_plan(arch)) {
    const auto [out, in] = dims;
    if (out <= 0 || in <= 0) throw ConfigError("layer " + name + " has a zero dimension");
    const double a = std::sqrt(6.0 / (in + out));
    Layer l{name, Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = uniform(rng, -a, a);
    p.layers.push_back(std::move(l));
  }
  return p;
}

// Column b holds sample b. Part rows are cell-major: row c * channels + k.
// Rasters are mostly background, so both inputs are kept sparse.
using SparseInput = Eigen::SparseMatrix<double, Eigen::ColMajor>;

struct Batch {
  SparseInput part;
  SparseInput density;

  Eigen::Index size() const { return density.cols(); }
};

inline Batch make_batch(const Dataset& ds, std::span<const std::size_t> indices, int n_parts,
                        int part_channels = 1) {
  const Eigen::Index cells = static_cast<Eigen::Index>(ds.raster_height) * ds.raster_width;
  const auto nb = static_cast<Eigen::Index>(indices.size());
  std::vector<Eigen::Triplet<double>> part, density;
  const double inv = 1.0 / n_parts;
  for (Eigen::Index k = 0; k < nb; ++k) {
    const Rasters& r = ds.samples[indices[k]].rasters;
    if (static_cast<Eigen::Index>(r.part.size()) != cells) throw ShapeError("raster size differs from dataset header");
    for (Eigen::Index c = 0; c < cells; ++c) {
      const int label = r.part[c];
      if (label > 0) {
        if (part_channels == 1) {
          part.emplace_back(c, k, label * inv);
        } else {
          if (label > part_channels) throw ShapeError("part label exceeds the encoder's channel count");
          part.emplace_back(c * part_channels + label - 1, k, 1.0);
        }
      }
      if (r.density[c] != 0.0) density.emplace_back(c, k, r.density[c]);
    }
  }
  Batch b{SparseInput(cells * part_channels, nb), SparseInput(cells, nb)};
  b.part.setFromTriplets(part.begin(), part.end());
  b.density.setFromTriplets(density.begin(), density.end());
  return b;
}

struct SmoothingSpec {
  const Adjacency* adjacency = nullptr;  // null = off
  int iterations = 1;

  bool enabled() const { return adjacency != nullptr && iterations > 0; }
};

struct ForwardTrace {
  const NetworkParams* params = nullptr;
  std::uint64_t version = 0;
  Eigen::Index batch = 0;
  // inputs[i] is the input of layers[i] (empty for the raster layers, whose
  // inputs are the sparse batch); pre[i] is its affine output before ReLU.
  std::vector<Eigen::MatrixXd> inputs;
  SparseInput part_input;
  SparseInput density_input;
  std::vector<Eigen::MatrixXd> pre;
  SmoothingSpec smoothing;
};

struct ForwardResult {
  Eigen::MatrixXd vertices;  // 3*n_vertices x batch, after smoothing when enabled
  Eigen::MatrixXd joints;    // 3*n_joints x batch; empty without a joint branch
  ForwardTrace trace;

  Eigen::Map<const VertexSet> vertex_set(Eigen::Index b) const {
    return {vertices.col(b).data(), 3, vertices.rows() / 3};
  }
  Eigen::Map<const JointSet> joint_set(Eigen::Index b) const {
    return {joints.col(b).data(), 3, joints.rows() / 3};
  }
};

namespace detail {

inline void smooth_columns(Eigen::MatrixXd& m, const SmoothingSpec& s, bool transpose) {
  const Eigen::Index n = m.rows() / 3;
  for (Eigen::Index b = 0; b < m.cols(); ++b) {
    Eigen::Map<VertexSet> col(m.col(b).data(), 3, n);
    VertexSet out = transpose ? laplacian_smooth_transpose(col, *s.adjacency, s.iterations)
                              : laplacian_smooth(VertexSet(col), *s.adjacency, s.iterations);
    col = out;
  }
}

}  // namespace detail

inline ForwardResult forward(const NetworkParams& params, const Batch& batch,
                             const SmoothingSpec& smoothing = {}) {
  const ArchConfig& a = params.arch;
  const Eigen::Index nb = batch.size();
  if (batch.density.rows() != a.raster_cells || (a.part_encoder && (batch.part.rows() != a.raster_cells * a.part_channels ||
                                                                    batch.part.cols() != nb))) {
    throw ShapeError("raster size does not match the network input");
  }
  if (smoothing.enabled() && smoothing.adjacency->size() != a.n_vertices) {
    throw ShapeError("smoothing adjacency does not match the vertex branch");
  }

  ForwardResult res;
  ForwardTrace& tr = res.trace;
  tr.part_input = batch.part;
  tr.density_input = batch.density;
  tr.params = &params;
  tr.version = params.version;
  tr.batch = nb;
  tr.smoothing = smoothing;
  tr.inputs.resize(params.layers.size());
  tr.pre.resize(params.layers.size());

  std::size_t li = 0;
  auto finish = [&](Eigen::MatrixXd z, bool relu) {
    z.colwise() += params.layers[li].bias;
    tr.pre[li] = z;
    ++li;
    if (relu) z = z.cwiseMax(0.0);
    return z;
  };
  auto affine = [&](const Eigen::MatrixXd& x, bool relu) {
    tr.inputs[li] = x;
    return finish(params.layers[li].weight * x, relu);
  };
  auto raster_layer = [&](const SparseInput& x) {
    return finish(params.layers[li].weight * x, true);
  };

  Eigen::MatrixXd fused;
  if (a.part_encoder) {
    const Eigen::MatrixXd ea = affine(raster_layer(batch.part), true);
    const Eigen::MatrixXd eb = affine(raster_layer(batch.density), true);
    fused.resize(ea.rows() + eb.rows(), nb);
    fused << ea, eb;
  } else {
    fused = affine(raster_layer(batch.density), true);
  }
  const Eigen::MatrixXd trunk = affine(fused, true);
  res.vertices = affine(affine(affine(trunk, true), true), false);
  if (a.joint_branch) res.joints = affine(affine(affine(trunk, true), true), false);
  if (smoothing.enabled()) detail::smooth_columns(res.vertices, smoothing, false);
  return res;
}

// Exact reverse mode of the traced forward pass. grad_vertices is taken with
// respect to the (smoothed) vertex output; grad_joints may be empty when the
// network has no joint branch.
inline Gradients backward(const NetworkParams& params, const ForwardTrace& trace,
                          const Eigen::MatrixXd& grad_vertices, const Eigen::MatrixXd& grad_joints) {
  if (trace.params != &params || trace.version != params.version) {
    throw ContractError("forward trace is stale: parameters changed since the forward pass");
  }
  const ArchConfig& a = params.arch;
  if (grad_vertices.rows() != 3 * a.n_vertices || grad_vertices.cols() != trace.batch) {
    throw ShapeError("vertex gradient shape mismatch");
  }
  if (a.joint_branch && (grad_joints.rows() != 3 * a.n_joints || grad_joints.cols() != trace.batch)) {
    throw ShapeError("joint gradient shape mismatch");
  }

  Gradients g{zeros_like(params.layers)};
  // Back through layer i given dL/d(output of layer i); returns dL/d(input).
  auto masked = [&](std::size_t i, Eigen::MatrixXd upstream, bool relu) {
    if (relu) upstream = upstream.cwiseProduct((trace.pre[i].array() > 0.0).cast<double>().matrix());
    g.layers[i].bias = upstream.rowwise().sum();
    return upstream;
  };
  auto back = [&](std::size_t i, const Eigen::MatrixXd& upstream, bool relu) {
    const Eigen::MatrixXd d = masked(i, upstream, relu);
    g.layers[i].weight.noalias() = d * trace.inputs[i].transpose();
    return Eigen::MatrixXd(params.layers[i].weight.transpose() * d);
  };
  auto back_raster = [&](std::size_t i, const Eigen::MatrixXd& upstream, const SparseInput& x) {
    const Eigen::MatrixXd d = masked(i, upstream, true);
    g.layers[i].weight = d * x.transpose();
  };

  const std::size_t enc = a.part_encoder ? 4 : 2;
  const std::size_t trunk = enc;
  const std::size_t vert0 = trunk + 1;

  Eigen::MatrixXd gv = grad_vertices;
  if (trace.smoothing.enabled()) detail::smooth_columns(gv, trace.smoothing, true);
  Eigen::MatrixXd d_trunk = back(vert0, back(vert0 + 1, back(vert0 + 2, gv, false), true), true);
  if (a.joint_branch) {
    const std::size_t j0 = vert0 + 3;
    d_trunk += back(j0, back(j0 + 1, back(j0 + 2, grad_joints, false), true), true);
  }
  const Eigen::MatrixXd d_fused = back(trunk, d_trunk, true);
  if (a.part_encoder) {
    const Eigen::Index e = a.embed_width;
    back_raster(0, back(1, d_fused.topRows(e), true), trace.part_input);
    back_raster(2, back(3, d_fused.bottomRows(e), true), trace.density_input);
  } else {
    back_raster(0, back(1, d_fused, true), trace.density_input);
  }
  return g;
}

}  // namespace hmnet
