#pragma once

// Fixed-topology template mesh: neighborhoods, uniform Laplacian smoothing,
// sparse joint regression and farthest-point vertex subsampling.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "errors.hpp"

namespace hmnet {

using Point = Eigen::Vector3d;
// One column per point. A VertexSet has one column per mesh vertex, a JointSet one per joint.
using PointSet = Eigen::Matrix3Xd;
using VertexSet = PointSet;
using JointSet = PointSet;

using Face = std::array<int, 3>;
using JointRegressor = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct SkinWeight {
  int joint = 0;
  double weight = 0.0;
};

struct Adjacency {
  std::vector<std::vector<int>> neighbors;

  int size() const { return static_cast<int>(neighbors.size()); }
};

inline void check_faces(const std::vector<Face>& faces, int n_vertices) {
  for (const Face& f : faces) {
    for (int idx : f) {
      if (idx < 0 || idx >= n_vertices) {
        throw TopologyError("face index " + std::to_string(idx) + " out of range for " +
                            std::to_string(n_vertices) + " vertices");
      }
    }
    if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
      throw TopologyError("degenerate face with repeated vertex index");
    }
  }
}

// Neighbor lists from face edges, sorted and deduplicated. Every vertex must
// belong to at least one face.
inline Adjacency build_adjacency(const std::vector<Face>& faces, int n_vertices) {
  if (n_vertices < 1) throw TopologyError("mesh has no vertices");
  check_faces(faces, n_vertices);
  Adjacency adj;
  adj.neighbors.resize(static_cast<std::size_t>(n_vertices));
  for (const Face& f : faces) {
    for (int a = 0; a < 3; ++a) {
      const int i = f[a];
      const int j = f[(a + 1) % 3];
      adj.neighbors[i].push_back(j);
      adj.neighbors[j].push_back(i);
    }
  }
  for (int v = 0; v < n_vertices; ++v) {
    auto& nb = adj.neighbors[v];
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    if (nb.empty()) throw TopologyError("vertex " + std::to_string(v) + " is isolated");
  }
  return adj;
}

// One Jacobi sweep of uniform (umbrella) smoothing: every output vertex is the
// mean of its neighbors' input positions.
inline VertexSet laplacian_smooth(const VertexSet& verts, const Adjacency& adj) {
  if (verts.cols() != adj.size()) {
    throw ShapeError("adjacency has " + std::to_string(adj.size()) + " vertices, vertex set has " +
                     std::to_string(verts.cols()));
  }
  VertexSet out(3, verts.cols());
  for (int i = 0; i < adj.size(); ++i) {
    const auto& nb = adj.neighbors[i];
    if (nb.empty()) throw TopologyError("vertex " + std::to_string(i) + " has no neighbors");
    Point acc = Point::Zero();
    for (int j : nb) acc += verts.col(j);
    out.col(i) = acc / static_cast<double>(nb.size());
  }
  return out;
}

// Transpose of laplacian_smooth viewed as a linear operator on vertex columns.
// For symmetric adjacency: out[j] = sum over i in N(j) of g[i] / |N(i)|.
inline VertexSet laplacian_smooth_transpose(const VertexSet& grad, const Adjacency& adj) {
  if (grad.cols() != adj.size()) throw ShapeError("adjacency/gradient size mismatch");
  VertexSet out = VertexSet::Zero(3, grad.cols());
  for (int i = 0; i < adj.size(); ++i) {
    const auto& nb = adj.neighbors[i];
    if (nb.empty()) throw TopologyError("vertex " + std::to_string(i) + " has no neighbors");
    const Point share = grad.col(i) / static_cast<double>(nb.size());
    for (int j : nb) out.col(j) += share;
  }
  return out;
}

inline VertexSet laplacian_smooth(const VertexSet& verts, const Adjacency& adj, int iterations) {
  VertexSet out = verts;
  for (int k = 0; k < iterations; ++k) out = laplacian_smooth(out, adj);
  return out;
}

inline VertexSet laplacian_smooth_transpose(const VertexSet& grad, const Adjacency& adj,
                                            int iterations) {
  VertexSet out = grad;
  for (int k = 0; k < iterations; ++k) out = laplacian_smooth_transpose(out, adj);
  return out;
}

// Mean norm of the umbrella Laplacian v_i - mean(N(v_i)); a roughness measure.
inline double mean_laplacian_magnitude(const VertexSet& verts, const Adjacency& adj) {
  const VertexSet avg = laplacian_smooth(verts, adj);
  return (verts - avg).colwise().norm().mean();
}

inline JointSet regress_joints(const VertexSet& verts, const JointRegressor& regressor) {
  if (regressor.cols() != verts.cols()) {
    throw ShapeError("joint regressor expects " + std::to_string(regressor.cols()) +
                     " vertices, got " + std::to_string(verts.cols()));
  }
  return verts * regressor.transpose();
}

// Row-stochastic regressor: each joint is the mean of the k vertices skinned most
// strongly to it. Ties go to the lower vertex index.
inline JointRegressor build_topk_regressor(const std::vector<std::vector<SkinWeight>>& skin_weights,
                                           int n_joints, int k = 8) {
  const int n = static_cast<int>(skin_weights.size());
  std::vector<std::vector<std::pair<double, int>>> per_joint(static_cast<std::size_t>(n_joints));
  for (int v = 0; v < n; ++v) {
    for (const SkinWeight& sw : skin_weights[v]) {
      if (sw.weight > 0.0) per_joint[sw.joint].push_back({sw.weight, v});
    }
  }
  std::vector<Eigen::Triplet<double>> trips;
  for (int j = 0; j < n_joints; ++j) {
    auto& cand = per_joint[j];
    if (cand.empty()) {
      throw TopologyError("joint " + std::to_string(j) + " has no skinned vertices");
    }
    std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    const int take = std::min<int>(k, static_cast<int>(cand.size()));
    for (int t = 0; t < take; ++t) trips.emplace_back(j, cand[t].second, 1.0 / take);
  }
  JointRegressor reg(n_joints, n);
  reg.setFromTriplets(trips.begin(), trips.end());
  reg.makeCompressed();
  return reg;
}

struct TemplateMesh {
  PointSet rest_vertices;
  std::vector<Face> faces;
  int n_joints = 0;
  std::vector<std::vector<SkinWeight>> skin_weights;
  JointRegressor joint_regressor;

  int vertex_count() const { return static_cast<int>(rest_vertices.cols()); }

  // Throws on any broken invariant; returns the adjacency it had to build anyway.
  Adjacency validate() const {
    const int n = vertex_count();
    Adjacency adj = build_adjacency(faces, n);
    if (static_cast<int>(skin_weights.size()) != n) throw ShapeError("skin weight rows != vertices");
    for (int v = 0; v < n; ++v) {
      double sum = 0.0;
      for (const SkinWeight& sw : skin_weights[v]) {
        if (sw.joint < 0 || sw.joint >= n_joints) throw TopologyError("skin weight joint out of range");
        if (!(sw.weight >= 0.0)) throw ParameterError("negative skin weight");
        sum += sw.weight;
      }
      if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("skin weights do not sum to 1");
    }
    if (joint_regressor.rows() != n_joints || joint_regressor.cols() != n) {
      throw ShapeError("joint regressor has wrong dimensions");
    }
    for (int j = 0; j < n_joints; ++j) {
      double sum = 0.0;
      for (JointRegressor::InnerIterator it(joint_regressor, j); it; ++it) {
        if (!(it.value() >= 0.0)) throw ParameterError("negative joint regressor entry");
        sum += it.value();
      }
      if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("joint regressor row does not sum to 1");
    }
    return adj;
  }
};

struct SubsampleMap {
  std::vector<int> kept_indices;  // strictly increasing
  std::vector<Face> reduced_faces;
  // Reduced neighborhoods: edges of reduced_faces plus nearest-kept-neighbor
  // links for vertices no reduced face touches.
  Adjacency adjacency;
};

inline SubsampleMap subsample_map(const TemplateMesh& mesh, int target_count,
                                  std::uint64_t /*seed*/) {
  const int n = mesh.vertex_count();
  if (target_count < 4 || target_count > n) {
    throw ParameterError("subsample target " + std::to_string(target_count) +
                         " outside [4, " + std::to_string(n) + "]");
  }
  const PointSet& p = mesh.rest_vertices;
  SubsampleMap map;
  if (target_count == n) {
    map.kept_indices.resize(static_cast<std::size_t>(n));
    std::iota(map.kept_indices.begin(), map.kept_indices.end(), 0);
    map.reduced_faces = mesh.faces;
    map.adjacency = build_adjacency(mesh.faces, n);
    return map;
  }

  // Farthest-point sampling from vertex 0; ties resolve to the lowest index, so
  // the selection is fully determined by the mesh.
  std::vector<double> min_dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<char> taken(static_cast<std::size_t>(n), 0);
  std::vector<int> picked;
  picked.reserve(static_cast<std::size_t>(target_count));
  int current = 0;
  for (int step = 0; step < target_count; ++step) {
    picked.push_back(current);
    taken[current] = 1;
    int best = -1;
    double best_d = -1.0;
    for (int v = 0; v < n; ++v) {
      min_dist[v] = std::min(min_dist[v], (p.col(v) - p.col(current)).norm());
      if (!taken[v] && min_dist[v] > best_d) {
        best_d = min_dist[v];
        best = v;
      }
    }
    current = best;
  }
  std::sort(picked.begin(), picked.end());
  map.kept_indices = picked;

  std::vector<int> remap(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < target_count; ++i) remap[picked[i]] = i;
  for (const Face& f : mesh.faces) {
    if (remap[f[0]] >= 0 && remap[f[1]] >= 0 && remap[f[2]] >= 0) {
      map.reduced_faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
    }
  }

  Adjacency& adj = map.adjacency;
  adj.neighbors.resize(static_cast<std::size_t>(target_count));
  for (const Face& f : map.reduced_faces) {
    for (int a = 0; a < 3; ++a) {
      adj.neighbors[f[a]].push_back(f[(a + 1) % 3]);
      adj.neighbors[f[(a + 1) % 3]].push_back(f[a]);
    }
  }
  std::vector<int> isolated;
  for (int i = 0; i < target_count; ++i) {
    if (adj.neighbors[i].empty()) isolated.push_back(i);
  }
  for (int i : isolated) {
    int nearest = -1;
    double nearest_d = std::numeric_limits<double>::infinity();
    for (int j = 0; j < target_count; ++j) {
      if (j == i) continue;
      const double d = (p.col(picked[i]) - p.col(picked[j])).norm();
      if (d < nearest_d) {
        nearest_d = d;
        nearest = j;
      }
    }
    adj.neighbors[i].push_back(nearest);
    adj.neighbors[nearest].push_back(i);
  }
  for (auto& nb : adj.neighbors) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
  return map;
}

// What the network and losses need to know about the mesh they regress: the
// neighborhoods used for smoothing and the vertex-to-joint regressor. For a
// subsampled template, kept_indices selects the regressed vertices out of the
// full mesh.
struct MeshTopology {
  Adjacency adjacency;
  JointRegressor regressor;
  std::vector<int> kept_indices;  // empty = all vertices

  int vertex_count() const { return adjacency.size(); }
  int joint_count() const { return static_cast<int>(regressor.rows()); }
  bool is_subsampled() const { return !kept_indices.empty(); }
};

inline MeshTopology full_topology(const TemplateMesh& mesh) {
  MeshTopology topo;
  topo.adjacency = mesh.validate();
  topo.regressor = mesh.joint_regressor;
  return topo;
}

// The reduced regressor is rebuilt with the same top-k construction restricted
// to the kept vertices, so every row keeps its support.
inline MeshTopology reduced_topology(const TemplateMesh& mesh, const SubsampleMap& map, int k = 8) {
  if (static_cast<int>(map.kept_indices.size()) == mesh.vertex_count()) return full_topology(mesh);
  MeshTopology topo;
  topo.adjacency = map.adjacency;
  topo.kept_indices = map.kept_indices;
  std::vector<std::vector<SkinWeight>> weights;
  weights.reserve(map.kept_indices.size());
  for (int v : map.kept_indices) weights.push_back(mesh.skin_weights[v]);
  topo.regressor = build_topk_regressor(weights, mesh.n_joints, k);
  return topo;
}

inline PointSet select_columns(const PointSet& pts, const std::vector<int>& indices) {
  PointSet out(3, static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = pts.col(indices[i]);
  return out;
}

}  // namespace hmnet
