#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "hmnet/train.hpp"

using namespace hmnet;

namespace {

bool same_bits(const LayerStack& a, const LayerStack& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].weight.size() != b[i].weight.size() || a[i].bias.size() != b[i].bias.size()) return false;
    if (std::memcmp(a[i].weight.data(), b[i].weight.data(), sizeof(double) * a[i].weight.size()) != 0) return false;
    if (std::memcmp(a[i].bias.data(), b[i].bias.data(), sizeof(double) * a[i].bias.size()) != 0) return false;
  }
  return true;
}

TrainConfig small_config(TrainMode mode) {
  TrainConfig c;
  c.mode = mode;
  c.encoder_hidden = 16;
  c.embed_width = 16;
  c.trunk_width = 32;
  c.branch_hidden = 32;
  c.batch_size = 16;
  c.learning_rate = 1e-3;
  c.epochs = 3;
  c.seed = 5;
  return c;
}

struct Fixture {
  ArticulatedTemplate tpl = build_template(TemplateKind::body, 6);
  Dataset train_set = generate(tpl, 64, 1);
  Dataset held_out = [this] {
    GenerateOptions o;
    o.split = Split::test;
    return generate(tpl, 16, 1, o);
  }();
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST(TrainConfigTest, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.learning_rate = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lambda1 = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_train_mode("baseline"), TrainMode::baseline);
  EXPECT_THROW(parse_train_mode("nope"), ConfigError);
}

TEST(Adam, ZeroGradientFirstStep) {
  ArchConfig a;
  a.raster_cells = 4;
  a.encoder_hidden = a.embed_width = a.trunk_width = a.branch_hidden = 3;
  a.n_vertices = 2;
  a.n_joints = 1;
  NetworkParams p = init_params(a, 0);
  const NetworkParams before = p;
  AdamState s = AdamState::zeros_for(p);
  adam_step(p, Gradients{zeros_like(p.layers)}, s, 1e-3);
  EXPECT_TRUE(same_bits(p.layers, before.layers));
  for (const Layer& l : s.m) EXPECT_TRUE(l.weight.isZero(0.0));
  for (const Layer& l : s.v) EXPECT_TRUE(l.weight.isZero(0.0));
  EXPECT_EQ(s.step, 1u);
  EXPECT_EQ(p.version, before.version + 1);
}

TEST(Adam, FirstStepClosedForm) {
  ArchConfig a;
  a.raster_cells = 4;
  a.encoder_hidden = a.embed_width = a.trunk_width = a.branch_hidden = 3;
  a.n_vertices = 2;
  a.n_joints = 1;
  NetworkParams p = init_params(a, 0);
  const NetworkParams before = p;
  AdamState s = AdamState::zeros_for(p);
  Gradients g{zeros_like(p.layers)};
  const double lr = 1e-3, gval = 0.37;
  for (Layer& l : g.layers) {
    l.weight.setConstant(gval);
    l.bias.setConstant(-gval);
  }
  adam_step(p, g, s, lr);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  const double step = lr * gval / (gval + 1e-8);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    EXPECT_LT((before.layers[i].weight.array() - step - p.layers[i].weight.array()).abs().maxCoeff(), 1e-15);
    EXPECT_LT((before.layers[i].bias.array() + step - p.layers[i].bias.array()).abs().maxCoeff(), 1e-15);
    EXPECT_NEAR(s.m[i].weight(0, 0), 0.1 * gval, 1e-15);
    EXPECT_NEAR(s.v[i].weight(0, 0), 0.001 * gval * gval, 1e-15);
  }
}

TEST(Adam, NonFiniteGradientAborts) {
  ArchConfig a;
  a.raster_cells = 4;
  a.encoder_hidden = a.embed_width = a.trunk_width = a.branch_hidden = 3;
  a.n_vertices = 2;
  a.n_joints = 1;
  NetworkParams p = init_params(a, 0);
  AdamState s = AdamState::zeros_for(p);
  Gradients g{zeros_like(p.layers)};
  g.layers[3].bias(1) = std::nan("");
  EXPECT_THROW(adam_step(p, g, s, 1e-3), TrainingError);
  EXPECT_EQ(s.step, 0u);
}

TEST(EpochOrder, PermutationKeyedBySeedAndEpoch) {
  const auto a = epoch_order(100, 1, 1);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 100; ++i) EXPECT_EQ(sorted[i], i);
  EXPECT_EQ(a, epoch_order(100, 1, 1));
  EXPECT_NE(a, epoch_order(100, 1, 2));
  EXPECT_NE(a, epoch_order(100, 2, 1));
}

TEST(Train, ZeroEpochsReturnsInitParams) {
  Fixture& f = fixture();
  TrainConfig c = small_config(TrainMode::multi_branch);
  c.epochs = 0;
  const TrainResult r = train(f.train_set, &f.held_out, f.tpl, c);
  EXPECT_TRUE(r.log.batches.empty());
  EXPECT_TRUE(r.log.epochs.empty());
  const NetworkParams init = init_params(arch_for(c, r.topology, 32 * 32, f.tpl.n_parts), c.seed);
  EXPECT_TRUE(same_bits(r.state.params.layers, init.layers));
}

TEST(Train, DeterministicReplay) {
  Fixture& f = fixture();
  const TrainConfig c = small_config(TrainMode::multi_branch);
  const TrainResult a = train(f.train_set, &f.held_out, f.tpl, c);
  const TrainResult b = train(f.train_set, &f.held_out, f.tpl, c);
  EXPECT_TRUE(same_bits(a.state.params.layers, b.state.params.layers));
  EXPECT_TRUE(same_bits(a.state.adam.m, b.state.adam.m));
  ASSERT_EQ(a.log.batches.size(), 3u * 4u);
  for (std::size_t i = 0; i < a.log.batches.size(); ++i) EXPECT_EQ(a.log.batches[i].loss.combined, b.log.batches[i].loss.combined);
  const TrainResult other = train(f.train_set, &f.held_out, f.tpl, [&] {
    TrainConfig d = c;
    d.seed = 6;
    return d;
  }());
  EXPECT_FALSE(same_bits(a.state.params.layers, other.state.params.layers));
}

TEST(Train, ResumeMatchesUninterrupted) {
  Fixture& f = fixture();
  TrainConfig c = small_config(TrainMode::multi_branch);
  const TrainResult full = train(f.train_set, &f.held_out, f.tpl, c);
  c.epochs = 1;
  TrainResult part = train(f.train_set, &f.held_out, f.tpl, c);
  c.epochs = 3;
  const TrainResult rest = train(f.train_set, &f.held_out, f.tpl, c, {}, std::move(part.state));
  EXPECT_TRUE(same_bits(full.state.params.layers, rest.state.params.layers));
  EXPECT_TRUE(same_bits(full.state.adam.v, rest.state.adam.v));
  EXPECT_EQ(full.state.best_metric, rest.state.best_metric);
  EXPECT_EQ(rest.log.epochs.size(), 2u);
}

TEST(Train, ModeNesting) {
  Fixture& f = fixture();
  TrainConfig single = small_config(TrainMode::single_task_surface);
  TrainConfig multi = small_config(TrainMode::multi_branch);
  multi.lambda1 = 0.0;
  multi.lambda2 = 0.0;
  multi.detach_joint_branch = true;
  multi.detach_surface_branch = true;
  const TrainResult a = train(f.train_set, nullptr, f.tpl, single);
  const TrainResult b = train(f.train_set, nullptr, f.tpl, multi);
  ASSERT_EQ(a.log.batches.size(), b.log.batches.size());
  for (std::size_t i = 0; i < a.log.batches.size(); ++i) {
    EXPECT_EQ(a.log.batches[i].loss.l_s, b.log.batches[i].loss.l_s);
    EXPECT_EQ(a.log.batches[i].loss.combined, b.log.batches[i].loss.combined);
  }
}

TEST(Train, ModesUseTheirLossTerms) {
  Fixture& f = fixture();
  TrainConfig c = small_config(TrainMode::single_task_surface);
  c.epochs = 1;
  const TrainResult single = train(f.train_set, nullptr, f.tpl, c);
  for (const BatchLogRow& r : single.log.batches) {
    EXPECT_EQ(r.loss.lambda1, 0.0);
    EXPECT_EQ(r.loss.lambda2, 0.0);
    EXPECT_EQ(r.loss.combined, r.loss.l_s);
  }
  c.mode = TrainMode::baseline;
  const TrainResult base = train(f.train_set, nullptr, f.tpl, c);
  EXPECT_FALSE(base.state.params.arch.part_encoder);
  EXPECT_FALSE(base.state.params.arch.joint_branch);
  for (const BatchLogRow& r : base.log.batches) {
    EXPECT_EQ(r.loss.l_j, 0.0);
    EXPECT_EQ(r.loss.combined, r.loss.l_s);
  }
  c.mode = TrainMode::multi_branch;
  c.lambda1 = 0.5;
  c.lambda2 = 2.0;
  const TrainResult multi = train(f.train_set, nullptr, f.tpl, c);
  for (const BatchLogRow& r : multi.log.batches) {
    EXPECT_NEAR(r.loss.combined, r.loss.l_s + 0.5 * r.loss.l_j + 2.0 * r.loss.l_js, 1e-9);
    EXPECT_GT(r.loss.l_j, 0.0);
  }
}

TEST(Train, AutoEqualizedWeights) {
  Fixture& f = fixture();
  TrainConfig c = small_config(TrainMode::multi_branch);
  c.epochs = 1;
  c.lambda1.reset();
  c.lambda2.reset();
  const TrainResult r = train(f.train_set, nullptr, f.tpl, c);
  const LossReport& first = r.log.batches.front().loss;
  // Weights are measured at init on the first batch, which is the batch logged first.
  EXPECT_NEAR(first.lambda1 * first.l_j, first.l_s, 1e-9 * first.l_s);
  EXPECT_NEAR(first.lambda2 * first.l_js, first.l_s, 1e-9 * first.l_s);
  for (const BatchLogRow& b : r.log.batches) EXPECT_EQ(b.loss.lambda1, first.lambda1);
}

TEST(BatchObjective, GradientsMatchFiniteDifferences) {
  Fixture& f = fixture();
  const MeshTopology topo = full_topology(f.tpl.mesh);
  const TargetMatrix targets = target_matrix(f.train_set, topo);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  const std::vector<std::size_t> idx{3, 7, 11};
  ForwardResult fr;
  fr.vertices.resize(3 * topo.vertex_count(), 3);
  fr.joints.resize(3 * topo.joint_count(), 3);
  for (Eigen::Index i = 0; i < fr.vertices.size(); ++i) fr.vertices.data()[i] = 0.1 * g(rng);
  for (Eigen::Index i = 0; i < fr.joints.size(); ++i) fr.joints.data()[i] = 0.1 * g(rng);
  ObjectiveOptions opt;
  opt.weights = {0.7, 1.9};
  const BatchObjective bo = batch_objective(fr, targets, idx, topo.regressor, opt);
  const double eps = 1e-6;
  for (int k = 0; k < 60; ++k) {
    const bool joint = k % 2;
    Eigen::MatrixXd& m = joint ? fr.joints : fr.vertices;
    const Eigen::Index i = static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(m.size()));
    const double s = m.data()[i];
    m.data()[i] = s + eps;
    const double up = batch_objective(fr, targets, idx, topo.regressor, opt).report.combined;
    m.data()[i] = s - eps;
    const double down = batch_objective(fr, targets, idx, topo.regressor, opt).report.combined;
    m.data()[i] = s;
    const double fd = (up - down) / (2 * eps);
    const double an = (joint ? bo.grad_joints : bo.grad_vertices).data()[i];
    EXPECT_NEAR(an, fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Train, EpochMeanLossDecreasesOnSmallTask) {
  const ArticulatedTemplate tpl = build_template(TemplateKind::body, 6);
  const Dataset ds = generate(tpl, 256, 2);
  TrainConfig c = small_config(TrainMode::multi_branch);
  c.epochs = 10;
  const TrainResult r = train(ds, nullptr, tpl, c);
  ASSERT_EQ(r.log.epochs.size(), 10u);
  EXPECT_LT(r.log.epochs.back().mean_combined, r.log.epochs.front().mean_combined);
}

TEST(Train, RejectsForeignTemplate) {
  Fixture& f = fixture();
  const ArticulatedTemplate hand = build_template(TemplateKind::hand, 6);
  EXPECT_THROW(train(f.train_set, nullptr, hand, small_config(TrainMode::multi_branch)), DataError);
}
