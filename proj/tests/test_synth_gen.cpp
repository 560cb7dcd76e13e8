#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include "hmnet/synth_gen.hpp"

using namespace hmnet;

namespace {

bool bitwise_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

PoseShapeParams random_pose(const ArticulatedTemplate& tpl, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PoseShapeParams p = sample_params(tpl, rng);
  p.global_rotation = Point::Zero();
  p.global_translation = Point::Zero();
  return p;
}

}  // namespace

TEST(BuildTemplate, Deterministic) {
  const ArticulatedTemplate a = build_template(TemplateKind::body, 6);
  const ArticulatedTemplate b = build_template(TemplateKind::body, 6);
  EXPECT_TRUE(bitwise_equal(a.mesh.rest_vertices, b.mesh.rest_vertices));
  EXPECT_EQ(a.mesh.faces, b.mesh.faces);
  EXPECT_EQ(a.parents, b.parents);
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), build_template(TemplateKind::body, 8).hash());
}

TEST(BuildTemplate, BodySkeletonIsTree) {
  const ArticulatedTemplate t = build_template(TemplateKind::body, 6);
  int roots = 0, edges = 0;
  for (int j = 0; j < t.joint_count(); ++j) {
    if (t.parents[j] < 0) ++roots;
    else {
      EXPECT_LT(t.parents[j], j);
      ++edges;
    }
  }
  EXPECT_EQ(roots, 1);
  EXPECT_EQ(t.parents[0], -1);
  EXPECT_EQ(edges, t.joint_count() - 1);
  EXPECT_GE(t.joint_count(), 14);
  EXPECT_LE(t.joint_count(), 18);
}

TEST(BuildTemplate, BodySizeAtDefaultResolution) {
  const ArticulatedTemplate t = build_template(TemplateKind::body);
  EXPECT_GE(t.mesh.vertex_count(), 400);
  EXPECT_LE(t.mesh.vertex_count(), 900);
  EXPECT_NO_THROW(t.mesh.validate());
}

TEST(BuildTemplate, HandHasFiveEqualChains) {
  const ArticulatedTemplate t = build_template(TemplateKind::hand, 6);
  std::vector<int> children_of_root;
  for (int j = 1; j < t.joint_count(); ++j)
    if (t.parents[j] == 0) children_of_root.push_back(j);
  ASSERT_EQ(children_of_root.size(), 5u);
  std::vector<int> lengths;
  for (int start : children_of_root) {
    int len = 1, cur = start;
    for (;;) {
      int next = -1, n_children = 0;
      for (int j = 1; j < t.joint_count(); ++j)
        if (t.parents[j] == cur) {
          next = j;
          ++n_children;
        }
      ASSERT_LE(n_children, 1);
      if (next < 0) break;
      cur = next;
      ++len;
    }
    lengths.push_back(len);
  }
  for (int l : lengths) EXPECT_EQ(l, lengths.front());
  EXPECT_NO_THROW(t.mesh.validate());
}

TEST(BuildTemplate, Invariants) {
  for (TemplateKind k : {TemplateKind::body, TemplateKind::hand}) {
    const ArticulatedTemplate t = build_template(k, 8);
    std::vector<int> per_part(t.n_parts, 0);
    for (int p : t.part_label) {
      ASSERT_GE(p, 0);
      ASSERT_LT(p, t.n_parts);
      ++per_part[p];
    }
    for (int c : per_part) EXPECT_GE(c, 1);
    for (int v = 0; v < t.mesh.vertex_count(); ++v) {
      const int child = t.vertex_segment[v] + 1;
      for (const SkinWeight& sw : t.mesh.skin_weights[v]) {
        if (sw.weight == 0.0) continue;
        EXPECT_TRUE(sw.joint == child || sw.joint == t.parents[child]) << "vertex " << v;
      }
    }
  }
}

TEST(BuildTemplate, ResolutionTooSmall) { EXPECT_THROW(build_template(TemplateKind::body, 3), ParameterError); }

TEST(Skin, IdentityPoseReturnsRest) {
  for (TemplateKind k : {TemplateKind::body, TemplateKind::hand}) {
    const ArticulatedTemplate t = build_template(k, 8);
    const SkinResult r = skin(t, PoseShapeParams::identity(t));
    EXPECT_LE((r.vertices - t.mesh.rest_vertices).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(r.joints, regress_joints(r.vertices, t.mesh.joint_regressor));
  }
}

TEST(Skin, GlobalRotationOfZeroPose) {
  const ArticulatedTemplate t = build_template(TemplateKind::body, 8);
  PoseShapeParams p = PoseShapeParams::identity(t);
  p.global_rotation = Point(0.3, -1.2, 0.5);
  const Eigen::Matrix3d R = Eigen::AngleAxisd(p.global_rotation.norm(), p.global_rotation.normalized()).toRotationMatrix();
  EXPECT_LE((skin(t, p).vertices - R * t.mesh.rest_vertices).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Skin, GlobalRigidEquivariance) {
  const ArticulatedTemplate t = build_template(TemplateKind::body, 8);
  std::mt19937_64 rng(99);
  for (int i = 0; i < 50; ++i) {
    PoseShapeParams p = random_pose(t, 1000 + i);
    const VertexSet base = skin(t, p).vertices;
    p.global_rotation = Point(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    p.global_translation = Point(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1));
    const Eigen::Matrix3d R = axis_angle_matrix(p.global_rotation);
    const VertexSet want = (R * base).colwise() + p.global_translation;
    EXPECT_LE((skin(t, p).vertices - want).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Skin, SingleJointRotationMatchesForwardKinematicsOracle) {
  const ArticulatedTemplate t = build_template(TemplateKind::body, 8);
  // Pick a joint with a single child whose distal segment has one-hot weights.
  const PointSet rest = t.rest_joints();
  const int nj = t.joint_count();
  for (int elbow = 1; elbow < nj; ++elbow) {
    int child = -1, n_children = 0;
    for (int j = 1; j < nj; ++j)
      if (t.parents[j] == elbow) {
        child = j;
        ++n_children;
      }
    if (n_children != 1) continue;
    // Is child a leaf?
    bool leaf = true;
    for (int j = 1; j < nj; ++j)
      if (t.parents[j] == child) leaf = false;
    if (!leaf) continue;

    PoseShapeParams p = PoseShapeParams::identity(t);
    p.joint_rotations.col(elbow) = Point(0, 0, std::numbers::pi / 2);
    const VertexSet out = skin(t, p).vertices;
    const Eigen::Matrix3d Rz = Eigen::AngleAxisd(std::numbers::pi / 2, Point::UnitZ()).toRotationMatrix();
    int checked = 0;
    for (int v = 0; v < t.mesh.vertex_count(); ++v) {
      if (t.vertex_segment[v] != child - 1) continue;
      double w_elbow = 0.0;
      for (const SkinWeight& sw : t.mesh.skin_weights[v])
        if (sw.joint == elbow || sw.joint == child) w_elbow += sw.weight;
      if (std::abs(w_elbow - 1.0) > 1e-12) continue;
      // Both the elbow and the leaf frame move with the elbow rotation.
      const Point want = rest.col(elbow) + Rz * (t.mesh.rest_vertices.col(v) - rest.col(elbow));
      EXPECT_LE((out.col(v) - want).cwiseAbs().maxCoeff(), 1e-12);
      ++checked;
    }
    EXPECT_GT(checked, 0);
    // Vertices on segments proximal to the elbow are untouched.
    for (int v = 0; v < t.mesh.vertex_count(); ++v) {
      bool involved = false;
      for (const SkinWeight& sw : t.mesh.skin_weights[v])
        if ((sw.joint == elbow || sw.joint == child) && sw.weight > 0) involved = true;
      if (!involved) EXPECT_LE((out.col(v) - t.mesh.rest_vertices.col(v)).cwiseAbs().maxCoeff(), 1e-12);
    }
    return;
  }
  FAIL() << "no joint with a single leaf child";
}

TEST(Skin, DimensionMismatchThrows) {
  const ArticulatedTemplate t = build_template(TemplateKind::body, 6);
  PoseShapeParams p = PoseShapeParams::identity(t);
  p.shape_scales.resize(3);
  EXPECT_THROW(skin(t, p), ShapeError);
}

TEST(Rasterize, EmptyCellsAreBackground) {
  VertexSet v(3, 1);
  v << 0.5, 0.5, 0.0;
  const Rasters r = rasterize(v, {2}, 8, 8, Camera{1.0, 3.0, 4.0});
  int nonzero = 0;
  for (std::size_t c = 0; c < r.part.size(); ++c) {
    if (r.part[c] != 0) {
      ++nonzero;
      EXPECT_EQ(c, 4u * 8u + 3u);
      EXPECT_EQ(r.part[c], 3);
      EXPECT_EQ(r.density[c], 1.0);
    } else {
      EXPECT_EQ(r.density[c], 0.0);
    }
  }
  EXPECT_EQ(nonzero, 1);
}

TEST(Rasterize, PaintersOrderPicksNearestZ) {
  VertexSet v(3, 2);
  v << 0.2, 0.4,
       0.2, 0.3,
       2.0, 1.0;
  const Rasters r = rasterize(v, {5, 9}, 8, 8, Camera{1.0, 0.0, 0.0});
  // Oracle: among the two candidates the smaller z wins.
  const int want = (v(2, 0) < v(2, 1) ? 5 : 9) + 1;
  EXPECT_EQ(r.part[0], want);
  EXPECT_EQ(r.density[0], 1.0);
}

TEST(Rasterize, AllOutsideIsDegenerate) {
  VertexSet v(3, 2);
  v << 100, 200, 100, 200, 0, 0;
  EXPECT_THROW(rasterize(v, {0, 1}, 8, 8, Camera{}), DegenerateSampleError);
  EXPECT_THROW(rasterize(v, {0, 1}, 4, 8, Camera{}), ParameterError);
}

TEST(Rasterize, TranslationCovariant) {
  const ArticulatedTemplate t = build_template(TemplateKind::body, 8);
  Camera cam = default_camera(t, 32, 32);
  cam.scale *= 0.7;  // keep the silhouette well inside the grid
  cam.offset_x = 16.0 - 0.5 * cam.scale * (t.mesh.rest_vertices.row(0).maxCoeff() + t.mesh.rest_vertices.row(0).minCoeff());
  const Rasters a = rasterize(t.mesh.rest_vertices, t.part_label, 32, 32, cam);
  Camera shifted = cam;
  shifted.offset_x += 1.0;
  shifted.offset_y += 1.0;
  const Rasters b = rasterize(t.mesh.rest_vertices, t.part_label, 32, 32, shifted);
  for (int y = 0; y + 1 < 32; ++y)
    for (int x = 0; x + 1 < 32; ++x) {
      EXPECT_EQ(a.part[y * 32 + x], b.part[(y + 1) * 32 + x + 1]);
      EXPECT_EQ(a.density[y * 32 + x], b.density[(y + 1) * 32 + x + 1]);
    }
}

TEST(Generate, DeterministicAndConsistent) {
  const ArticulatedTemplate t = build_template(TemplateKind::body, 8);
  const Dataset a = generate(t, 20, 5);
  const Dataset b = generate(t, 20, 5);
  ASSERT_EQ(a.size(), 20u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_TRUE(bitwise_equal(a.samples[i].gt_vertices, b.samples[i].gt_vertices));
    EXPECT_EQ(a.samples[i].rasters.part, b.samples[i].rasters.part);
    EXPECT_EQ(a.samples[i].gt_joints, regress_joints(a.samples[i].gt_vertices, t.mesh.joint_regressor));
    for (std::uint8_t c : a.samples[i].rasters.part) EXPECT_LE(c, t.n_parts);
    for (double d : a.samples[i].rasters.density) {
      EXPECT_GE(d, 0.0);
      EXPECT_LE(d, 1.0);
    }
  }
  EXPECT_NE(generate(t, 1, 6).samples[0].gt_vertices, a.samples[0].gt_vertices);
}

TEST(Generate, SplitsUseDisjointStreams) {
  const ArticulatedTemplate t = build_template(TemplateKind::body, 6);
  GenerateOptions test;
  test.split = Split::test;
  const Dataset a = generate(t, 10, 1);
  const Dataset b = generate(t, 10, 1, test);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 10; ++j) EXPECT_NE(a.samples[i].gt_vertices, b.samples[j].gt_vertices);
}

TEST(Generate, ParameterRanges) {
  const ArticulatedTemplate t = build_template(TemplateKind::body, 6);
  const Dataset d = generate(t, 50, 2);
  for (const PoseSample& s : d.samples) {
    EXPECT_LE(s.params.joint_rotations.cwiseAbs().maxCoeff(), std::numbers::pi / 3);
    EXPECT_GE(s.params.shape_scales.minCoeff(), 0.8);
    EXPECT_LE(s.params.shape_scales.maxCoeff(), 1.2);
    EXPECT_LE(std::abs(s.params.global_rotation.y()), std::numbers::pi);
    EXPECT_EQ(s.params.global_rotation.x(), 0.0);
    EXPECT_EQ(s.params.global_rotation.z(), 0.0);
  }
}

TEST(Generate, NoisyRasterFlipRate) {
  const ArticulatedTemplate t = build_template(TemplateKind::body, 8);
  GenerateOptions noisy;
  noisy.noise = NoiseMode::noisy_raster;
  const Dataset clean = generate(t, 1000, 3);
  const Dataset dirty = generate(t, 1000, 3, noisy);
  std::size_t fg = 0, flipped = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const auto& c = clean.samples[i].rasters.part;
    const auto& d = dirty.samples[i].rasters.part;
    EXPECT_EQ(clean.samples[i].rasters.density, dirty.samples[i].rasters.density);
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (c[k] == 0) {
        EXPECT_EQ(d[k], 0);
        continue;
      }
      ++fg;
      EXPECT_GE(d[k], 1);
      EXPECT_LE(d[k], t.n_parts);
      if (c[k] != d[k]) ++flipped;
    }
  }
  const double rate = static_cast<double>(flipped) / static_cast<double>(fg);
  EXPECT_NEAR(rate, 0.05, 0.01);
}

TEST(Generate, ZeroSamplesRejected) {
  EXPECT_THROW(generate(build_template(TemplateKind::body, 6), 0, 1), ConfigError);
}
