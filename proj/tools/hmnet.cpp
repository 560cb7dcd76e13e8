// hmnet command line: gen, train, eval, predict, bench.
// Exit codes: 0 success, 1 usage or config error, 2 data or contract error.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hmnet/cli.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> dataset;
  std::optional<std::string> checkpoint;
  std::optional<std::string> resume;
  std::optional<std::string> template_kind;
  std::optional<std::string> mode;
  std::optional<std::string> noise;
  std::optional<long long> n_samples;
  std::optional<int> epochs;
  std::optional<std::size_t> index;
  std::optional<std::string> split;
  bool export_gt = false;
  bool export_unsmoothed = false;
  bool branch_joints = false;
};

hmnet::cli::RunConfig resolve(const Overrides& o) {
  using hmnet::ConfigError;
  hmnet::cli::RunConfig c = o.config.empty() ? hmnet::cli::RunConfig{} : hmnet::cli::load_config(o.config);
  if (o.seed) c.train.seed = *o.seed;
  if (o.out) c.out = *o.out;
  if (o.dataset) c.dataset = *o.dataset;
  if (o.checkpoint) c.checkpoint = *o.checkpoint;
  if (o.resume) c.resume = *o.resume;
  if (o.template_kind) c.template_kind = hmnet::parse_template_kind(*o.template_kind);
  if (o.mode) c.train.mode = hmnet::parse_train_mode(*o.mode);
  if (o.noise) c.noise = hmnet::parse_noise_mode(*o.noise);
  if (o.n_samples) {
    if (*o.n_samples < 1) throw ConfigError("--n must be >= 1");
    c.n_samples = static_cast<std::size_t>(*o.n_samples);
  }
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.index) c.sample_index = *o.index;
  if (o.split) c.eval_split = *o.split;
  if (o.export_gt) c.export_gt = true;
  if (o.export_unsmoothed) c.export_unsmoothed = true;
  if (o.branch_joints) c.branch_joints = true;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hmnet: structured point cloud regression of articulated meshes"};
  app.require_subcommand(1, 1);
  Overrides o;
  app.add_option("--config", o.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", o.seed, "master seed");
  app.add_option("--out", o.out, "output directory");

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--n", o.n_samples, "number of samples");
  gen->add_option("--template", o.template_kind, "body or hand");
  gen->add_option("--noise", o.noise, "clean or label_flip");
  gen->add_option("--dataset", o.dataset, "dataset file to write");

  auto* train = app.add_subcommand("train", "train a network");
  train->add_option("--dataset", o.dataset, "dataset file");
  train->add_option("--template", o.template_kind, "body or hand");
  train->add_option("--mode", o.mode, "baseline, single_task_surface or multi_branch");
  train->add_option("--epochs", o.epochs, "total epoch count");
  train->add_option("--resume", o.resume, "checkpoint to resume from");

  auto* eval = app.add_subcommand("eval", "score a checkpoint on a dataset");
  eval->add_option("--dataset", o.dataset, "dataset file");
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file");
  eval->add_option("--template", o.template_kind, "body or hand");
  eval->add_option("--mode", o.mode, "architecture mode of the checkpoint");
  eval->add_option("--split", o.split, "all, train or held_out");
  eval->add_flag("--branch-joints", o.branch_joints, "score the joint branch output");

  auto* predict = app.add_subcommand("predict", "export one prediction as OBJ");
  predict->add_option("--dataset", o.dataset, "dataset file");
  predict->add_option("--checkpoint", o.checkpoint, "checkpoint file");
  predict->add_option("--template", o.template_kind, "body or hand");
  predict->add_option("--mode", o.mode, "architecture mode of the checkpoint");
  predict->add_option("--index", o.index, "sample index");
  predict->add_flag("--gt", o.export_gt, "also export the ground truth mesh");
  predict->add_flag("--unsmoothed", o.export_unsmoothed, "also export the unsmoothed prediction");

  auto* bench = app.add_subcommand("bench", "time the forward pass");
  bench->add_option("--dataset", o.dataset, "dataset file");
  bench->add_option("--checkpoint", o.checkpoint, "checkpoint file");
  bench->add_option("--template", o.template_kind, "body or hand");
  bench->add_option("--mode", o.mode, "architecture mode of the checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const hmnet::cli::RunConfig cfg = resolve(o);
    if (gen->parsed()) return hmnet::cli::cmd_gen(cfg, std::cout);
    if (train->parsed()) return hmnet::cli::cmd_train(cfg, std::cout);
    if (eval->parsed()) return hmnet::cli::cmd_eval(cfg, std::cout);
    if (predict->parsed()) return hmnet::cli::cmd_predict(cfg, std::cout);
    if (bench->parsed()) return hmnet::cli::cmd_bench(cfg, std::cout);
  } catch (const hmnet::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const hmnet::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
