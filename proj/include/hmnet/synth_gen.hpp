#pragma once

// Procedural articulated templates (humanoid body or hand), linear blend
// skinning, and the two input rasters a sample is rendered to.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Geometry>

#include "errors.hpp"
#include "mesh_core.hpp"
#include "util.hpp"

namespace hmnet {

enum class TemplateKind : std::uint8_t { body = 0, hand = 1 };

inline std::string_view to_string(TemplateKind k) { return k == TemplateKind::body ? "body" : "hand"; }

inline TemplateKind parse_template_kind(std::string_view s) {
  if (s == "body") return TemplateKind::body;
  if (s == "hand") return TemplateKind::hand;
  throw ConfigError("unknown template kind '" + std::string(s) + "'");
}

struct ArticulatedTemplate {
  TemplateKind kind = TemplateKind::body;
  int resolution = 0;
  TemplateMesh mesh;
  std::vector<int> parents;  // parents[0] == -1, parents[i] < i
  PointSet rest_offsets;     // joint position relative to its parent; root is absolute
  // One tube segment per non-root joint c, spanning parents[c] -> c. Segment s
  // belongs to joint s + 1; it is also the unit that shape scales act on.
  std::vector<int> vertex_segment;
  std::vector<int> part_label;  // == vertex_segment, in [0, n_parts)
  int n_parts = 0;

  int joint_count() const { return static_cast<int>(parents.size()); }
  int segment_count() const { return joint_count() - 1; }

  PointSet rest_joints() const {
    PointSet p(3, joint_count());
    p.col(0) = rest_offsets.col(0);
    for (int j = 1; j < joint_count(); ++j) p.col(j) = p.col(parents[j]) + rest_offsets.col(j);
    return p;
  }

  std::uint64_t hash() const {
    Fnv1a h;
    h.u64(static_cast<std::uint64_t>(kind));
    h.u64(static_cast<std::uint64_t>(resolution));
    h.u64(static_cast<std::uint64_t>(mesh.vertex_count()));
    for (Eigen::Index i = 0; i < mesh.rest_vertices.size(); ++i) h.f64(mesh.rest_vertices.data()[i]);
    h.u64(mesh.faces.size());
    for (const Face& f : mesh.faces)
      for (int idx : f) h.u64(static_cast<std::uint64_t>(idx));
    for (const auto& row : mesh.skin_weights) {
      h.u64(row.size());
      for (const SkinWeight& sw : row) {
        h.u64(static_cast<std::uint64_t>(sw.joint));
        h.f64(sw.weight);
      }
    }
    for (int k = 0; k < mesh.joint_regressor.outerSize(); ++k)
      for (JointRegressor::InnerIterator it(mesh.joint_regressor, k); it; ++it) {
        h.u64(static_cast<std::uint64_t>(it.col()));
        h.f64(it.value());
      }
    for (int p : parents) h.u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(p)));
    for (Eigen::Index i = 0; i < rest_offsets.size(); ++i) h.f64(rest_offsets.data()[i]);
    for (int l : part_label) h.u64(static_cast<std::uint64_t>(l));
    return h.value();
  }
};

namespace detail {

struct SegmentSpec {
  double radius;
};

// Capsule-like tube around every parent->child segment: `rings` rings of
// `resolution` vertices plus a pole at each end. Vertices near the child end
// blend toward the child joint.
inline void build_tubes(ArticulatedTemplate& tpl, const std::vector<double>& radii) {
  const int res = tpl.resolution;
  const int rings = res / 2 + 1;
  const PointSet joints = tpl.rest_joints();
  std::vector<Point> verts;
  std::vector<Face> faces;
  std::vector<std::vector<SkinWeight>> weights;
  std::vector<int> segment_of;

  auto child_weight = [](double t) {
    const double x = std::clamp((t - 0.5) / 0.5, 0.0, 1.0);
    return 0.5 * x * x * (3.0 - 2.0 * x);
  };
  auto add_vertex = [&](const Point& p, int seg, double t) {
    const int parent = tpl.parents[seg + 1];
    const int child = seg + 1;
    const double wc = child_weight(t);
    std::vector<SkinWeight> w;
    w.push_back({parent, 1.0 - wc});
    if (wc > 0.0) w.push_back({child, wc});
    verts.push_back(p);
    weights.push_back(std::move(w));
    segment_of.push_back(seg);
    return static_cast<int>(verts.size()) - 1;
  };

  for (int seg = 0; seg < tpl.segment_count(); ++seg) {
    const int child = seg + 1;
    const Point a = joints.col(tpl.parents[child]);
    const Point b = joints.col(child);
    const Point axis = (b - a).normalized();
    const Point helper = std::abs(axis.z()) < 0.9 ? Point::UnitZ() : Point::UnitX();
    const Point e1 = axis.cross(helper).normalized();
    const Point e2 = axis.cross(e1);
    const double r = radii[seg];
    const double len = (b - a).norm();

    const int pole0 = add_vertex(a - axis * (0.5 * r), seg, -0.5 * r / len);
    std::vector<int> ring_start;
    for (int i = 0; i < rings; ++i) {
      const double t = static_cast<double>(i) / (rings - 1);
      ring_start.push_back(static_cast<int>(verts.size()));
      for (int k = 0; k < res; ++k) {
        const double phi = 2.0 * std::numbers::pi * k / res;
        add_vertex(a + t * (b - a) + r * (std::cos(phi) * e1 + std::sin(phi) * e2), seg, t);
      }
    }
    const int pole1 = add_vertex(b + axis * (0.5 * r), seg, 1.0 + 0.5 * r / len);

    for (int k = 0; k < res; ++k) {
      const int k1 = (k + 1) % res;
      faces.push_back({pole0, ring_start[0] + k1, ring_start[0] + k});
      for (int i = 0; i + 1 < rings; ++i) {
        const int r0 = ring_start[i];
        const int r1 = ring_start[i + 1];
        faces.push_back({r0 + k, r0 + k1, r1 + k});
        faces.push_back({r0 + k1, r1 + k1, r1 + k});
      }
      faces.push_back({pole1, ring_start[rings - 1] + k, ring_start[rings - 1] + k1});
    }
  }

  tpl.mesh.rest_vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i) tpl.mesh.rest_vertices.col(static_cast<Eigen::Index>(i)) = verts[i];
  tpl.mesh.faces = std::move(faces);
  tpl.mesh.n_joints = tpl.joint_count();
  tpl.mesh.skin_weights = std::move(weights);
  tpl.mesh.joint_regressor = build_topk_regressor(tpl.mesh.skin_weights, tpl.mesh.n_joints, 8);
  tpl.vertex_segment = segment_of;
  tpl.part_label = std::move(segment_of);
  tpl.n_parts = tpl.segment_count();
}

inline void set_skeleton(ArticulatedTemplate& tpl, const std::vector<int>& parents,
                         const std::vector<Point>& positions) {
  tpl.parents = parents;
  tpl.rest_offsets.resize(3, static_cast<Eigen::Index>(positions.size()));
  for (std::size_t j = 0; j < positions.size(); ++j) {
    const Point rel = parents[j] < 0 ? positions[j] : Point(positions[j] - positions[parents[j]]);
    tpl.rest_offsets.col(static_cast<Eigen::Index>(j)) = rel;
  }
}

}  // namespace detail

// Humanoid: pelvis root, torso/neck/head chain, two 3-joint arms and two 3-joint
// legs (16 joints, 15 segments). Hand: wrist root with five 3-joint digit chains.
inline ArticulatedTemplate build_template(TemplateKind kind, int resolution = 8) {
  if (resolution < 4) throw ParameterError("template resolution must be >= 4");
  ArticulatedTemplate tpl;
  tpl.kind = kind;
  tpl.resolution = resolution;
  if (kind == TemplateKind::body) {
    const double y0 = 0.95;
    std::vector<Point> pos = {
        {0.0, 0.95, 0.0},   {0.0, 1.30, 0.0},  {0.0, 1.50, 0.0},  {0.0, 1.75, 0.0},
        {0.20, 1.42, 0.0},  {0.48, 1.42, 0.0}, {0.74, 1.42, 0.0},
        {-0.20, 1.42, 0.0}, {-0.48, 1.42, 0.0}, {-0.74, 1.42, 0.0},
        {0.10, 0.85, 0.0},  {0.10, 0.48, 0.0}, {0.10, 0.08, 0.0},
        {-0.10, 0.85, 0.0}, {-0.10, 0.48, 0.0}, {-0.10, 0.08, 0.0},
    };
    for (Point& p : pos) p.y() -= y0;
    const std::vector<int> parents = {-1, 0, 1, 2, 1, 4, 5, 1, 7, 8, 0, 10, 11, 0, 13, 14};
    detail::set_skeleton(tpl, parents, pos);
    // Radius of the segment ending at joint s + 1.
    const std::vector<double> radii = {0.13, 0.06, 0.10, 0.05, 0.05, 0.04, 0.05, 0.05, 0.04,
                                       0.07, 0.07, 0.05, 0.07, 0.07, 0.05};
    detail::build_tubes(tpl, radii);
  } else {
    std::vector<Point> pos = {{0.0, 0.0, 0.0}};
    std::vector<int> parents = {-1};
    std::vector<double> radii;
    const double base_x[5] = {0.45, 0.27, 0.09, -0.09, -0.27};
    const double base_y[5] = {0.30, 0.80, 0.85, 0.80, 0.70};
    const double lengths[5][2] = {{0.30, 0.25}, {0.35, 0.25}, {0.38, 0.28}, {0.35, 0.25}, {0.28, 0.20}};
    for (int d = 0; d < 5; ++d) {
      const Point dir = d == 0 ? Point(1.0, 1.0, 0.0).normalized() : Point::UnitY();
      const Point mcp(base_x[d], base_y[d], 0.0);
      const Point pip = mcp + lengths[d][0] * dir;
      const Point dip = pip + lengths[d][1] * dir;
      const int first = static_cast<int>(pos.size());
      pos.push_back(mcp);
      pos.push_back(pip);
      pos.push_back(dip);
      parents.push_back(0);
      parents.push_back(first);
      parents.push_back(first + 1);
      radii.push_back(0.08);
      radii.push_back(0.06);
      radii.push_back(0.05);
    }
    detail::set_skeleton(tpl, parents, pos);
    detail::build_tubes(tpl, radii);
  }
  tpl.mesh.validate();
  return tpl;
}

struct PoseShapeParams {
  PointSet joint_rotations;  // axis-angle per joint, radians
  Eigen::VectorXd shape_scales;  // one per segment
  Point global_rotation = Point::Zero();
  Point global_translation = Point::Zero();

  static PoseShapeParams identity(const ArticulatedTemplate& tpl) {
    PoseShapeParams p;
    p.joint_rotations = PointSet::Zero(3, tpl.joint_count());
    p.shape_scales = Eigen::VectorXd::Ones(tpl.segment_count());
    return p;
  }
};

inline Eigen::Matrix3d axis_angle_matrix(const Point& aa) {
  const double angle = aa.norm();
  if (angle < 1e-300) return Eigen::Matrix3d::Identity();
  return Eigen::AngleAxisd(angle, aa / angle).toRotationMatrix();
}

struct SkinResult {
  VertexSet vertices;
  JointSet joints;  // regressed from vertices
};

// Scale segment offsets, pose by forward kinematics root-to-leaf, blend, then
// apply the global rigid motion.
inline SkinResult skin(const ArticulatedTemplate& tpl, const PoseShapeParams& params) {
  const int nj = tpl.joint_count();
  if (params.joint_rotations.cols() != nj || params.shape_scales.size() != tpl.segment_count()) {
    throw ShapeError("pose parameters do not match the template skeleton");
  }
  const PointSet rest = tpl.rest_joints();

  PointSet shaped(3, nj);
  shaped.col(0) = rest.col(0);
  for (int j = 1; j < nj; ++j) {
    shaped.col(j) = shaped.col(tpl.parents[j]) + params.shape_scales[j - 1] * tpl.rest_offsets.col(j);
  }

  std::vector<Eigen::Matrix3d> world_rot(static_cast<std::size_t>(nj));
  PointSet posed(3, nj);
  world_rot[0] = axis_angle_matrix(params.joint_rotations.col(0));
  posed.col(0) = shaped.col(0);
  for (int j = 1; j < nj; ++j) {
    const int p = tpl.parents[j];
    world_rot[j] = world_rot[p] * axis_angle_matrix(params.joint_rotations.col(j));
    posed.col(j) = posed.col(p) + world_rot[p] * (shaped.col(j) - shaped.col(p));
  }

  const Eigen::Matrix3d global = axis_angle_matrix(params.global_rotation);
  const int nv = tpl.mesh.vertex_count();
  VertexSet out(3, nv);
  for (int v = 0; v < nv; ++v) {
    const int seg = tpl.vertex_segment[v];
    const int child = seg + 1;
    const int parent = tpl.parents[child];
    const Point axis = tpl.rest_offsets.col(child).normalized();
    const Point d = tpl.mesh.rest_vertices.col(v) - rest.col(parent);
    const double along = d.dot(axis);
    const Point shaped_v = shaped.col(parent) + params.shape_scales[seg] * along * axis + (d - along * axis);

    Point acc = Point::Zero();
    for (const SkinWeight& sw : tpl.mesh.skin_weights[v]) {
      acc += sw.weight * (world_rot[sw.joint] * (shaped_v - shaped.col(sw.joint)) + posed.col(sw.joint));
    }
    out.col(v) = global * acc + params.global_translation;
  }
  SkinResult r;
  r.joints = regress_joints(out, tpl.mesh.joint_regressor);
  r.vertices = std::move(out);
  return r;
}

struct Camera {
  double scale = 1.0;  // grid cells per model unit
  double offset_x = 0.0;
  double offset_y = 0.0;
};

// Frames the rest pose with enough margin for posed samples.
inline Camera default_camera(const ArticulatedTemplate& tpl, int height, int width) {
  const PointSet& v = tpl.mesh.rest_vertices;
  const Point lo = v.rowwise().minCoeff();
  const Point hi = v.rowwise().maxCoeff();
  const Point center = 0.5 * (lo + hi);
  const double radius = (v.colwise() - center).colwise().norm().maxCoeff() * 1.15;
  Camera cam;
  cam.scale = std::min(height, width) / (2.0 * radius);
  cam.offset_x = 0.5 * width - center.x() * cam.scale;
  cam.offset_y = 0.5 * height - center.y() * cam.scale;
  return cam;
}

struct Rasters {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> part;  // 0 = background, else part label + 1
  std::vector<double> density;     // vertex count / max count, in [0, 1]
};

// Orthographic projection (drop z). Within a cell the vertex with the smallest z
// wins; equal z keeps the lower vertex index.
inline Rasters rasterize(const VertexSet& verts, const std::vector<int>& part_label, int height,
                         int width, const Camera& cam) {
  if (height < 8 || width < 8) throw ParameterError("raster grid must be at least 8x8");
  if (static_cast<Eigen::Index>(part_label.size()) != verts.cols()) {
    throw ShapeError("part labels do not match vertex count");
  }
  Rasters r;
  r.height = height;
  r.width = width;
  const std::size_t cells = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  r.part.assign(cells, 0);
  r.density.assign(cells, 0.0);
  std::vector<double> depth(cells, std::numeric_limits<double>::infinity());
  std::vector<int> count(cells, 0);
  int max_count = 0;
  for (Eigen::Index v = 0; v < verts.cols(); ++v) {
    const double gx = std::floor(verts(0, v) * cam.scale + cam.offset_x);
    const double gy = std::floor(verts(1, v) * cam.scale + cam.offset_y);
    if (!(gx >= 0 && gx < width && gy >= 0 && gy < height)) continue;
    const std::size_t cell = static_cast<std::size_t>(gy) * width + static_cast<std::size_t>(gx);
    if (verts(2, v) < depth[cell]) {
      depth[cell] = verts(2, v);
      r.part[cell] = static_cast<std::uint8_t>(part_label[v] + 1);
    }
    max_count = std::max(max_count, ++count[cell]);
  }
  if (max_count == 0) throw DegenerateSampleError("every vertex projects outside the raster grid");
  for (std::size_t c = 0; c < cells; ++c) r.density[c] = static_cast<double>(count[c]) / max_count;
  return r;
}

struct PoseSample {
  PoseShapeParams params;
  VertexSet gt_vertices;
  JointSet gt_joints;
  Rasters rasters;
};

enum class NoiseMode : std::uint8_t { clean = 0, noisy_raster = 1 };
enum class Split : std::uint8_t { train = 0, test = 1 };

inline NoiseMode parse_noise_mode(std::string_view s) {
  if (s == "clean") return NoiseMode::clean;
  if (s == "noisy_raster") return NoiseMode::noisy_raster;
  throw ConfigError("unknown noise mode '" + std::string(s) + "'");
}

struct Dataset {
  TemplateKind kind = TemplateKind::body;
  int resolution = 0;
  std::uint64_t template_hash = 0;
  std::uint64_t seed = 0;
  Split split = Split::train;
  NoiseMode noise = NoiseMode::clean;
  int raster_height = 32;
  int raster_width = 32;
  std::vector<PoseSample> samples;

  std::size_t size() const { return samples.size(); }
};

struct GenerateOptions {
  NoiseMode noise = NoiseMode::clean;
  Split split = Split::train;
  int raster_height = 32;
  int raster_width = 32;
  double flip_probability = 0.05;
  int max_retries = 100;
};

inline PoseShapeParams sample_params(const ArticulatedTemplate& tpl, std::mt19937_64& rng) {
  constexpr double kRot = std::numbers::pi / 3.0;
  PoseShapeParams p;
  p.joint_rotations.resize(3, tpl.joint_count());
  for (Eigen::Index i = 0; i < p.joint_rotations.size(); ++i) p.joint_rotations.data()[i] = uniform(rng, -kRot, kRot);
  p.shape_scales.resize(tpl.segment_count());
  for (Eigen::Index i = 0; i < p.shape_scales.size(); ++i) p.shape_scales[i] = uniform(rng, 0.8, 1.2);
  p.global_rotation = Point(0.0, uniform(rng, -std::numbers::pi, std::numbers::pi), 0.0);
  p.global_translation = Point(uniform(rng, -0.1, 0.1), uniform(rng, -0.1, 0.1), 0.0);
  return p;
}

// Flip each foreground cell to a uniformly chosen different part with probability p.
inline void corrupt_part_raster(std::vector<std::uint8_t>& part, int n_parts, double p,
                                std::mt19937_64& rng) {
  for (auto& cell : part) {
    if (cell == 0) continue;
    if (uniform01(rng) < p) {
      const auto r = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(n_parts - 1))) + 1;
      cell = static_cast<std::uint8_t>(r < cell ? r : r + 1);
    }
  }
}

// Sample i of a split draws from its own stream keyed by (seed, split, i), so
// samples can be produced independently and the clean and noisy datasets of a
// seed share poses.
inline PoseSample generate_sample(const ArticulatedTemplate& tpl, std::uint64_t seed, std::size_t index,
                                  const GenerateOptions& opt) {
  const std::uint64_t stream = derive_seed(derive_seed(seed, static_cast<std::uint64_t>(opt.split)), index);
  std::mt19937_64 rng(stream);
  const Camera cam = default_camera(tpl, opt.raster_height, opt.raster_width);
  for (int attempt = 0; attempt < opt.max_retries; ++attempt) {
    PoseSample s;
    s.params = sample_params(tpl, rng);
    SkinResult posed = skin(tpl, s.params);
    try {
      s.rasters = rasterize(posed.vertices, tpl.part_label, opt.raster_height, opt.raster_width, cam);
    } catch (const DegenerateSampleError&) {
      continue;
    }
    s.gt_vertices = std::move(posed.vertices);
    s.gt_joints = std::move(posed.joints);
    if (opt.noise == NoiseMode::noisy_raster) {
      std::mt19937_64 noise_rng(derive_seed(stream, 0x6e6f697365ULL));
      corrupt_part_raster(s.rasters.part, tpl.n_parts, opt.flip_probability, noise_rng);
    }
    return s;
  }
  throw GenerationError("sample " + std::to_string(index) + " stayed degenerate after " +
                        std::to_string(opt.max_retries) + " retries");
}

inline Dataset generate(const ArticulatedTemplate& tpl, std::size_t n_samples, std::uint64_t seed,
                        const GenerateOptions& opt = {}) {
  if (n_samples < 1) throw ConfigError("dataset needs at least one sample");
  Dataset ds;
  ds.kind = tpl.kind;
  ds.resolution = tpl.resolution;
  ds.template_hash = tpl.hash();
  ds.seed = seed;
  ds.split = opt.split;
  ds.noise = opt.noise;
  ds.raster_height = opt.raster_height;
  ds.raster_width = opt.raster_width;
  ds.samples.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) ds.samples.push_back(generate_sample(tpl, seed, i, opt));
  return ds;
}

}  // namespace hmnet
