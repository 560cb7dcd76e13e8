#pragma once

// Mean per-point errors, similarity Procrustes alignment, and dataset evaluation.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "mesh_core.hpp"
#include "net.hpp"
#include "synth_gen.hpp"

namespace hmnet {

inline double mean_point_error(const Eigen::Ref<const PointSet>& pred, const Eigen::Ref<const PointSet>& gt) {
  if (pred.cols() != gt.cols()) throw ShapeError("point count mismatch");
  if (pred.cols() < 1) throw ShapeError("empty point set");
  return (pred - gt).colwise().norm().mean();
}

enum class ProcrustesMode {
  joint,      // least-squares optimal rotation and scale together
  two_stage,  // match the RMS size first, then fit the rotation
};

struct ProcrustesResult {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  double scale = 1.0;
  Point translation = Point::Zero();  // aligned = scale * rotation * pred + translation
  PointSet aligned;
};

// Similarity fit of pred onto gt without reflection. Reflections are rejected by
// flipping the sign of the weakest singular direction.
inline ProcrustesResult procrustes_align(const Eigen::Ref<const PointSet>& pred, const Eigen::Ref<const PointSet>& gt,
                                         ProcrustesMode mode = ProcrustesMode::joint) {
  if (pred.cols() != gt.cols()) throw ShapeError("point count mismatch");
  if (pred.cols() < 3) throw AlignmentError("alignment needs at least three points");

  const Point mu_p = pred.rowwise().mean();
  const Point mu_g = gt.rowwise().mean();
  const PointSet pc = pred.colwise() - mu_p;
  const PointSet gc = gt.colwise() - mu_g;
  const Eigen::Matrix3d cov = pc * gc.transpose();

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d sv = svd.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0)) {
    throw AlignmentError("degenerate configuration: cross-covariance rank < 2");
  }
  const Eigen::Matrix3d& u = svd.matrixU();
  const Eigen::Matrix3d& v = svd.matrixV();
  Eigen::Vector3d d(1.0, 1.0, (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0);

  ProcrustesResult r;
  r.rotation = v * d.asDiagonal() * u.transpose();
  const double pred_ss = pc.squaredNorm();
  if (mode == ProcrustesMode::joint) {
    r.scale = sv.dot(d) / pred_ss;
  } else {
    r.scale = std::sqrt(gc.squaredNorm() / pred_ss);
  }
  if (!(r.scale > 0.0)) throw AlignmentError("non-positive alignment scale");
  r.translation = mu_g - r.scale * r.rotation * mu_p;
  r.aligned = (r.scale * r.rotation * pc).colwise() + mu_g;
  return r;
}

inline double pa_error(const Eigen::Ref<const PointSet>& pred, const Eigen::Ref<const PointSet>& gt,
                       ProcrustesMode mode = ProcrustesMode::joint) {
  return mean_point_error(procrustes_align(pred, gt, mode).aligned, gt);
}

struct SampleMetrics {
  double surface_error = 0.0;
  double joint_error = 0.0;
  double pa_surface_error = 0.0;
  double pa_joint_error = 0.0;
};

struct MetricsReport {
  std::vector<SampleMetrics> per_sample;
  SampleMetrics mean;
};

inline SampleMetrics aggregate_mean(const std::vector<SampleMetrics>& rows) {
  SampleMetrics m;
  if (rows.empty()) return m;
  for (const SampleMetrics& s : rows) {
    m.surface_error += s.surface_error;
    m.joint_error += s.joint_error;
    m.pa_surface_error += s.pa_surface_error;
    m.pa_joint_error += s.pa_joint_error;
  }
  const double n = static_cast<double>(rows.size());
  m.surface_error /= n;
  m.joint_error /= n;
  m.pa_surface_error /= n;
  m.pa_joint_error /= n;
  return m;
}

// Ground truth restricted to the vertices a topology regresses. For a
// subsampled topology the joints are re-regressed from the kept vertices so
// targets and predictions share one regressor.
struct SampleTargets {
  VertexSet vertices;
  JointSet joints;
};

inline SampleTargets targets_for(const PoseSample& s, const MeshTopology& topo) {
  if (!topo.is_subsampled()) return {s.gt_vertices, s.gt_joints};
  SampleTargets t;
  t.vertices = select_columns(s.gt_vertices, topo.kept_indices);
  t.joints = regress_joints(t.vertices, topo.regressor);
  return t;
}

struct EvalOptions {
  bool branch_joints = false;  // score the joint branch instead of mesh-regressed joints
  bool smoothing = true;
  int smoothing_iterations = 1;
  ProcrustesMode procrustes = ProcrustesMode::joint;
};

inline SampleMetrics score_sample(const Eigen::Ref<const VertexSet>& pred_vertices, const Eigen::Ref<const JointSet>& pred_joints,
                                  const SampleTargets& t, ProcrustesMode mode) {
  SampleMetrics m;
  m.surface_error = mean_point_error(pred_vertices, t.vertices);
  m.joint_error = mean_point_error(pred_joints, t.joints);
  m.pa_surface_error = pa_error(pred_vertices, t.vertices, mode);
  m.pa_joint_error = pa_error(pred_joints, t.joints, mode);
  return m;
}

// Scores precomputed predictions; evaluate() below runs the network first.
inline MetricsReport evaluate_predictions(const std::vector<VertexSet>& pred_vertices,
                                          const std::vector<JointSet>& branch_joints, const Dataset& ds,
                                          const MeshTopology& topo, const EvalOptions& opt = {}) {
  if (pred_vertices.size() != ds.size()) throw ShapeError("prediction count does not match dataset");
  if (opt.branch_joints && branch_joints.size() != ds.size()) throw ShapeError("branch joint count mismatch");
  MetricsReport rep;
  rep.per_sample.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const SampleTargets t = targets_for(ds.samples[i], topo);
    const JointSet joints = opt.branch_joints ? branch_joints[i] : regress_joints(pred_vertices[i], topo.regressor);
    rep.per_sample.push_back(score_sample(pred_vertices[i], joints, t, opt.procrustes));
  }
  rep.mean = aggregate_mean(rep.per_sample);
  return rep;
}

struct Predictions {
  std::vector<VertexSet> vertices;
  std::vector<JointSet> joints;  // empty when the network has no joint branch
};

inline Predictions predict(const NetworkParams& params, const Dataset& ds, const MeshTopology& topo, int n_parts,
                           bool smoothing, int smoothing_iterations, std::size_t chunk = 256) {
  if (params.arch.n_vertices != topo.vertex_count()) throw ShapeError("network and topology disagree on vertex count");
  Predictions out;
  const SmoothingSpec spec{smoothing ? &topo.adjacency : nullptr, smoothing_iterations};
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += chunk) {
    idx.clear();
    for (std::size_t i = start; i < std::min(ds.size(), start + chunk); ++i) idx.push_back(i);
    const ForwardResult fr = forward(params, make_batch(ds, idx, n_parts, params.arch.part_channels), spec);
    for (Eigen::Index b = 0; b < static_cast<Eigen::Index>(idx.size()); ++b) {
      out.vertices.emplace_back(fr.vertex_set(b));
      if (params.arch.joint_branch) out.joints.emplace_back(fr.joint_set(b));
    }
  }
  return out;
}

inline MetricsReport evaluate(const NetworkParams& params, const Dataset& ds, const MeshTopology& topo, int n_parts,
                              const EvalOptions& opt = {}) {
  if (ds.size() == 0) throw ShapeError("cannot evaluate an empty split");
  if (opt.branch_joints && !params.arch.joint_branch) {
    throw ShapeError("network has no joint branch to evaluate");
  }
  const Predictions p = predict(params, ds, topo, n_parts, opt.smoothing, opt.smoothing_iterations);
  return evaluate_predictions(p.vertices, p.joints, ds, topo, opt);
}

}  // namespace hmnet
