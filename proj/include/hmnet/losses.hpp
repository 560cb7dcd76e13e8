#pragma once

// Surface, joint and branch-consistency losses (sums of unsquared Euclidean
// norms) and their weighted combination.

#include <cmath>
#include <string>

#include "errors.hpp"
#include "mesh_core.hpp"

namespace hmnet {

// Below this distance a point's contribution is treated as exactly zero and
// gets a zero gradient.
inline constexpr double kNormFloor = 1e-12;

struct NormLoss {
  double value = 0.0;
  PointSet gradient;  // d value / d pred
};

// sum_i ||pred_i - gt_i||
inline NormLoss sum_of_distances(const Eigen::Ref<const PointSet>& pred, const Eigen::Ref<const PointSet>& gt) {
  if (pred.cols() != gt.cols()) {
    throw ShapeError("point count mismatch: " + std::to_string(pred.cols()) + " vs " + std::to_string(gt.cols()));
  }
  NormLoss out;
  out.gradient = PointSet::Zero(3, pred.cols());
  for (Eigen::Index i = 0; i < pred.cols(); ++i) {
    const Point d = pred.col(i) - gt.col(i);
    const double n = d.norm();
    if (n < kNormFloor) continue;
    out.value += n;
    out.gradient.col(i) = d / n;
  }
  return out;
}

inline NormLoss surface_loss(const Eigen::Ref<const VertexSet>& pred, const Eigen::Ref<const VertexSet>& gt) {
  return sum_of_distances(pred, gt);
}

inline NormLoss joint_loss(const Eigen::Ref<const JointSet>& pred, const Eigen::Ref<const JointSet>& gt) {
  return sum_of_distances(pred, gt);
}

struct ConsistencyLoss {
  double value = 0.0;
  JointSet grad_joints;     // d value / d branch joints
  VertexSet grad_vertices;  // d value / d vertices, through the regressor
};

// Distance between branch-predicted joints and the joints regressed from the
// predicted surface.
inline ConsistencyLoss consistency_loss(const Eigen::Ref<const JointSet>& branch_joints,
                                        const Eigen::Ref<const VertexSet>& verts,
                                        const JointRegressor& regressor) {
  if (regressor.cols() != verts.cols() || regressor.rows() != branch_joints.cols()) {
    throw ShapeError("consistency loss: regressor is " + std::to_string(regressor.rows()) + "x" +
                     std::to_string(regressor.cols()) + ", inputs have " + std::to_string(branch_joints.cols()) +
                     " joints and " + std::to_string(verts.cols()) + " vertices");
  }
  const JointSet surface_joints = verts * regressor.transpose();
  NormLoss d = sum_of_distances(branch_joints, surface_joints);
  ConsistencyLoss out;
  out.value = d.value;
  out.grad_vertices = -(d.gradient * regressor);
  out.grad_joints = std::move(d.gradient);
  return out;
}

struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
};

struct LossReport {
  double l_s = 0.0;
  double l_j = 0.0;
  double l_js = 0.0;
  double combined = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

inline LossReport combined_loss(double l_s, double l_j, double l_js, const LossWeights& w) {
  if (!(w.lambda1 >= 0.0) || !(w.lambda2 >= 0.0) || !std::isfinite(w.lambda1) || !std::isfinite(w.lambda2)) {
    throw ParameterError("loss weights must be finite and nonnegative");
  }
  return {l_s, l_j, l_js, l_s + w.lambda1 * l_j + w.lambda2 * l_js, w.lambda1, w.lambda2};
}

}  // namespace hmnet
