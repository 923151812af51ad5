// Command-line front end: dataset generation, model training, planning,
// metrics, and the ablation/comparison harnesses.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include "flowplan/evaluation.hpp"
#include "flowplan/lyapunov.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 1;
  std::string seeds;  // "A..B" inclusive
  std::string sampler = "sad";
  double t0 = -1.0;
  double c = -1.0;
  int ode_steps = -1;
  bool robust = false;
  bool trace = false;
};

struct Config {
  int horizon = 24;
  std::string world_path;

  int dataset_count = 2000;
  std::uint64_t dataset_seed = 1;

  std::vector<int> flow_hidden = {128, 128, 128, 128};
  int flow_epochs = 60;
  int flow_batch = 32;
  double flow_lr = 2e-4;
  double flow_momentum = 0.9;
  int time_embed_dim = 32;
  std::uint64_t flow_seed = 7;

  std::vector<int> forward_hidden = {64, 64, 64};
  int forward_epochs = 30;
  int forward_batch = 256;
  double forward_lr = 1e-3;
  std::uint64_t forward_seed = 11;

  flowplan::GuidanceConfig guidance;
  double gradient_gain = 1.0;
  int robust_margin_horizon = 1;
};

Config load_config(const std::string& path) {
  Config cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config: " + path);
  json j = json::parse(in);
  cfg.horizon = j.value("horizon", cfg.horizon);
  cfg.world_path = j.value("world", cfg.world_path);
  if (j.contains("dataset")) {
    cfg.dataset_count = j["dataset"].value("count", cfg.dataset_count);
    cfg.dataset_seed = j["dataset"].value("seed", cfg.dataset_seed);
  }
  if (j.contains("flow")) {
    const auto& f = j["flow"];
    cfg.flow_hidden = f.value("hidden", cfg.flow_hidden);
    cfg.flow_epochs = f.value("epochs", cfg.flow_epochs);
    cfg.flow_batch = f.value("batch_size", cfg.flow_batch);
    cfg.flow_lr = f.value("learning_rate", cfg.flow_lr);
    cfg.flow_momentum = f.value("momentum", cfg.flow_momentum);
    cfg.time_embed_dim = f.value("time_embed_dim", cfg.time_embed_dim);
    cfg.flow_seed = f.value("seed", cfg.flow_seed);
  }
  if (j.contains("forward")) {
    const auto& f = j["forward"];
    cfg.forward_hidden = f.value("hidden", cfg.forward_hidden);
    cfg.forward_epochs = f.value("epochs", cfg.forward_epochs);
    cfg.forward_batch = f.value("batch_size", cfg.forward_batch);
    cfg.forward_lr = f.value("learning_rate", cfg.forward_lr);
    cfg.forward_seed = f.value("seed", cfg.forward_seed);
  }
  if (j.contains("guidance")) {
    const auto& g = j["guidance"];
    cfg.guidance.c = g.value("c", cfg.guidance.c);
    cfg.guidance.t0 = g.value("t0", cfg.guidance.t0);
    cfg.guidance.ode_steps = g.value("ode_steps", cfg.guidance.ode_steps);
    cfg.guidance.slack_penalty = g.value("slack_penalty", cfg.guidance.slack_penalty);
    cfg.guidance.robust = g.value("robust", cfg.guidance.robust);
    cfg.guidance.control_norm_bound =
        g.value("control_norm_bound", cfg.guidance.control_norm_bound);
    cfg.guidance.kkt_tolerance = g.value("kkt_tolerance", cfg.guidance.kkt_tolerance);
    if (g.contains("clf_gain")) cfg.guidance.clf_gain = g["clf_gain"].get<double>();
  }
  cfg.gradient_gain = j.value("gradient_gain", cfg.gradient_gain);
  cfg.robust_margin_horizon = j.value("robust_margin_horizon", cfg.robust_margin_horizon);
  return cfg;
}

std::string resolve_out_dir(const CliOptions& opts) {
  if (!opts.out_dir.empty()) return opts.out_dir;
  if (const char* env = std::getenv("FLOWPLAN_OUT"); env != nullptr && *env != '\0') {
    return env;
  }
  return "out";
}

std::vector<std::uint64_t> resolve_seeds(const CliOptions& opts) {
  if (opts.seeds.empty()) return {opts.seed};
  const auto sep = opts.seeds.find("..");
  if (sep == std::string::npos) {
    return {static_cast<std::uint64_t>(std::stoull(opts.seeds))};
  }
  const std::uint64_t lo = std::stoull(opts.seeds.substr(0, sep));
  const std::uint64_t hi = std::stoull(opts.seeds.substr(sep + 2));
  if (hi < lo) throw std::runtime_error("--seeds range is empty");
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
  return seeds;
}

flowplan::MazeWorld resolve_world(const Config& cfg, const std::string& out_dir) {
  if (!cfg.world_path.empty()) return flowplan::MazeWorld::load(cfg.world_path);
  const fs::path generated = fs::path(out_dir) / "world.json";
  if (fs::exists(generated)) return flowplan::MazeWorld::load(generated.string());
  return flowplan::MazeWorld::desk_default();
}

flowplan::GuidanceConfig resolve_guidance(const Config& cfg, const CliOptions& opts) {
  flowplan::GuidanceConfig g = cfg.guidance;
  if (opts.t0 > 0.0) g.t0 = opts.t0;
  if (opts.c > 0.0) g.c = opts.c;
  if (opts.ode_steps > 0) g.ode_steps = opts.ode_steps;
  if (opts.robust) g.robust = true;
  return g;
}

struct LoadedModels {
  std::unique_ptr<flowplan::VectorFieldModel> flow;
  std::unique_ptr<flowplan::ForwardModelNet> forward;  // null without a checkpoint
  flowplan::DoubleIntegrator analytic;
  double forward_zeta = 0.0;
};

LoadedModels load_models(const std::string& out_dir, bool need_forward) {
  LoadedModels models;
  const fs::path flow_path = fs::path(out_dir) / "flow_model.bin";
  if (!fs::exists(flow_path)) {
    throw std::runtime_error("missing checkpoint " + flow_path.string() +
                             " (run train-flow first)");
  }
  models.flow = std::make_unique<flowplan::VectorFieldModel>(
      flowplan::VectorFieldModel::load(flow_path.string()));

  const fs::path fwd_path = fs::path(out_dir) / "forward_model.bin";
  if (fs::exists(fwd_path)) {
    models.forward = std::make_unique<flowplan::ForwardModelNet>(
        flowplan::ForwardModelNet::load(fwd_path.string()));
    std::ifstream meta(fwd_path.string() + ".json");
    if (meta) {
      json sidecar = json::parse(meta);
      models.forward_zeta = sidecar.value("zeta", 0.0);
    }
  } else if (need_forward) {
    throw std::runtime_error("missing checkpoint " + fwd_path.string() +
                             " (run train-forward first)");
  }
  return models;
}

// Robust mode plans against the learned model with RCBF margins; otherwise
// the analytic model drives the consistency row.
void configure_robust(flowplan::ConstraintSpec& spec, const LoadedModels& models,
                      const Config& cfg, const flowplan::GuidanceConfig& guidance) {
  if (!guidance.robust) return;
  if (models.forward == nullptr) {
    throw std::runtime_error("--robust requires a trained forward model");
  }
  spec.robust = true;
  spec.robust_margin = flowplan::estimate_lipschitz(
      *models.forward, models.forward_zeta, cfg.robust_margin_horizon);
}

void print_metrics(const flowplan::MetricsRow& row) {
  std::cout << "safety_violation=" << row.safety_violation
            << " admissibility_violation=" << row.admissibility_violation
            << " dyn_consistency=" << row.dyn_consistency << " reward=" << row.reward
            << " wall_seconds=" << row.wall_seconds << "\n";
}

int cmd_gen_data(const Config& cfg, const CliOptions& opts) {
  const std::string out_dir = resolve_out_dir(opts);
  fs::create_directories(out_dir);
  const flowplan::MazeWorld world = resolve_world(cfg, out_dir);
  world.save((fs::path(out_dir) / "world.json").string());
  const flowplan::Dataset dataset = flowplan::generate_expert(
      world, cfg.dataset_count, cfg.horizon, cfg.dataset_seed);
  flowplan::save_dataset(dataset, (fs::path(out_dir) / "dataset.bin").string());
  std::cout << "wrote " << dataset.trajectories.size() << " trajectories (H="
            << cfg.horizon << ") to " << out_dir << "/dataset.bin\n";
  return 0;
}

int cmd_train_flow(const Config& cfg, const CliOptions& opts) {
  const std::string out_dir = resolve_out_dir(opts);
  const flowplan::Dataset dataset =
      flowplan::load_dataset((fs::path(out_dir) / "dataset.bin").string());

  flowplan::VectorFieldConfig model_cfg;
  model_cfg.hidden_sizes = cfg.flow_hidden;
  model_cfg.time_embed_dim = cfg.time_embed_dim;
  model_cfg.seed = cfg.flow_seed;
  flowplan::VectorFieldModel model(dataset.layout, model_cfg);

  flowplan::FlowTrainOptions train_opts;
  train_opts.epochs = cfg.flow_epochs;
  train_opts.batch_size = cfg.flow_batch;
  train_opts.learning_rate = cfg.flow_lr;
  train_opts.momentum = cfg.flow_momentum;
  train_opts.seed = cfg.flow_seed;

  flowplan::PriorSpec prior{dataset.layout, flowplan::ConditioningMask::none()};
  const flowplan::FlowTrainReport report =
      flowplan::train(model, dataset.trajectories, prior, train_opts);

  model.save((fs::path(out_dir) / "flow_model.bin").string());
  flowplan::write_loss_history_csv((fs::path(out_dir) / "flow_loss.csv").string(),
                                   report.epoch_loss);
  std::cout << "final epoch mean loss " << report.epoch_loss.back() << ", checkpoint "
            << out_dir << "/flow_model.bin\n";
  return 0;
}

int cmd_train_forward(const Config& cfg, const CliOptions& opts) {
  const std::string out_dir = resolve_out_dir(opts);
  const flowplan::Dataset dataset =
      flowplan::load_dataset((fs::path(out_dir) / "dataset.bin").string());
  const std::vector<flowplan::Transition> transitions =
      flowplan::dataset_transitions(dataset);

  flowplan::ForwardModelTrainConfig fit_cfg;
  fit_cfg.hidden_sizes = cfg.forward_hidden;
  fit_cfg.epochs = cfg.forward_epochs;
  fit_cfg.batch_size = cfg.forward_batch;
  fit_cfg.learning_rate = cfg.forward_lr;
  fit_cfg.seed = cfg.forward_seed;
  const flowplan::ForwardModelFit fit = flowplan::fit_forward_model(transitions, fit_cfg);

  // 99th-percentile one-step residual on a held-out style pass over all
  // transitions, stored as the zeta estimate for robust margins.
  std::vector<double> residuals;
  residuals.reserve(transitions.size());
  for (const auto& tr : transitions) {
    residuals.push_back((fit.model.step(tr.s, tr.a) - tr.s_next).norm());
  }
  std::sort(residuals.begin(), residuals.end());
  const double zeta =
      residuals[static_cast<std::size_t>(0.99 * (residuals.size() - 1))];

  const std::string path = (fs::path(out_dir) / "forward_model.bin").string();
  fit.model.save(path);
  {
    std::ifstream in(path + ".json");
    json sidecar = json::parse(in);
    in.close();
    sidecar["zeta"] = zeta;
    sidecar["holdout_mse"] = fit.holdout_mse;
    std::ofstream out(path + ".json");
    out << sidecar.dump(2) << "\n";
  }
  flowplan::write_loss_history_csv((fs::path(out_dir) / "forward_loss.csv").string(),
                                   fit.epoch_loss);
  std::cout << "holdout MSE " << fit.holdout_mse << ", zeta(p99) " << zeta
            << ", checkpoint " << path << "\n";
  return 0;
}

int cmd_plan(const Config& cfg, const CliOptions& opts, bool plot_only) {
  const std::string out_dir = resolve_out_dir(opts);
  const flowplan::MazeWorld world = resolve_world(cfg, out_dir);
  const flowplan::GuidanceConfig guidance = resolve_guidance(cfg, opts);
  const LoadedModels models = load_models(out_dir, guidance.robust);

  flowplan::ConstraintSpec spec = world.test_constraints;
  configure_robust(spec, models, cfg, guidance);

  flowplan::EvalContext ctx;
  ctx.flow = models.flow.get();
  ctx.dynamics = guidance.robust ? static_cast<const flowplan::DynamicsModel*>(
                                       models.forward.get())
                                 : &models.analytic;
  ctx.world = &world;
  ctx.guidance = guidance;
  ctx.gradient_gain = cfg.gradient_gain;

  const flowplan::SamplerKind kind = flowplan::sampler_kind_from_cli(opts.sampler);
  const Eigen::VectorXd s0 = flowplan::sample_start_state(world, opts.seed);
  const flowplan::PlanResult result = flowplan::run_sampler(kind, ctx, spec, s0, opts.seed);

  std::ostringstream stem;
  stem << "plan_" << opts.sampler << "_" << opts.seed;
  if (plot_only) {
    const std::string svg = (fs::path(out_dir) / (stem.str() + ".svg")).string();
    flowplan::plot_trajectory(result, world, svg);
    std::cout << "wrote " << svg << "\n";
    return 0;
  }

  const std::string path = (fs::path(out_dir) / (stem.str() + ".json")).string();
  result.save_json(path);
  if (opts.trace) {
    flowplan::append_qp_trace(result,
                              (fs::path(out_dir) / "qp_trace.jsonl").string());
  }
  print_metrics(flowplan::evaluate(result, spec, models.analytic, world));
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_eval(const Config& cfg, const CliOptions& opts) {
  const std::string out_dir = resolve_out_dir(opts);
  const flowplan::MazeWorld world = resolve_world(cfg, out_dir);
  const flowplan::GuidanceConfig guidance = resolve_guidance(cfg, opts);
  const LoadedModels models = load_models(out_dir, guidance.robust);

  flowplan::ConstraintSpec spec = world.test_constraints;
  configure_robust(spec, models, cfg, guidance);

  flowplan::EvalContext ctx;
  ctx.flow = models.flow.get();
  ctx.dynamics = guidance.robust ? static_cast<const flowplan::DynamicsModel*>(
                                       models.forward.get())
                                 : &models.analytic;
  ctx.world = &world;
  ctx.guidance = guidance;
  ctx.gradient_gain = cfg.gradient_gain;

  const flowplan::SamplerKind kind = flowplan::sampler_kind_from_cli(opts.sampler);
  const std::string csv_path = (fs::path(out_dir) / "eval.csv").string();
  std::ofstream csv(csv_path);
  csv << "seed,safety_violation,admissibility_violation,dyn_consistency,reward,"
         "wall_seconds\n";
  for (std::uint64_t seed : resolve_seeds(opts)) {
    const Eigen::VectorXd s0 = flowplan::sample_start_state(world, seed);
    const flowplan::PlanResult result = flowplan::run_sampler(kind, ctx, spec, s0, seed);
    if (opts.trace) {
      flowplan::append_qp_trace(result,
                                (fs::path(out_dir) / "qp_trace.jsonl").string());
    }
    const flowplan::MetricsRow row =
        flowplan::evaluate(result, spec, models.analytic, world);
    csv << seed << "," << row.safety_violation << "," << row.admissibility_violation
        << "," << row.dyn_consistency << "," << row.reward << "," << row.wall_seconds
        << "\n";
  }
  std::cout << "wrote " << csv_path << "\n";
  return 0;
}

int cmd_compare(const Config& cfg, const CliOptions& opts) {
  const std::string out_dir = resolve_out_dir(opts);
  const flowplan::MazeWorld world = resolve_world(cfg, out_dir);
  const flowplan::GuidanceConfig guidance = resolve_guidance(cfg, opts);
  const LoadedModels models = load_models(out_dir, guidance.robust);

  flowplan::EvalContext ctx;
  ctx.flow = models.flow.get();
  ctx.dynamics = &models.analytic;
  ctx.world = &world;
  ctx.guidance = guidance;
  ctx.gradient_gain = cfg.gradient_gain;

  const std::string csv = flowplan::run_comparison(
      ctx,
      {flowplan::SamplerKind::kGuided, flowplan::SamplerKind::kUncontrolled,
       flowplan::SamplerKind::kTruncation, flowplan::SamplerKind::kGradient},
      resolve_seeds(opts), (fs::path(out_dir) / "metrics.csv").string());
  std::cout << csv;
  return 0;
}

int cmd_ablate(const Config& cfg, const CliOptions& opts, const std::string& kind_name,
               const std::string& grid_text) {
  const std::string out_dir = resolve_out_dir(opts);
  const flowplan::MazeWorld world = resolve_world(cfg, out_dir);
  const LoadedModels models = load_models(out_dir, false);

  std::vector<double> grid;
  std::stringstream ss(grid_text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) grid.push_back(std::stod(item));
  }

  const flowplan::AblationKind kind = flowplan::ablation_kind_from_name(kind_name);

  flowplan::Dataset dataset;
  flowplan::EvalContext ctx;
  ctx.flow = models.flow.get();
  ctx.dynamics = &models.analytic;
  ctx.world = &world;
  ctx.guidance = resolve_guidance(cfg, opts);
  ctx.gradient_gain = cfg.gradient_gain;
  if (kind == flowplan::AblationKind::kDataFraction) {
    dataset = flowplan::load_dataset((fs::path(out_dir) / "dataset.bin").string());
    ctx.dataset = &dataset;
  }

  const std::string stem = "ablation_" + kind_name;
  const std::string csv = flowplan::run_ablation(
      kind, grid, ctx, resolve_seeds(opts),
      (fs::path(out_dir) / (stem + ".csv")).string(),
      (fs::path(out_dir) / (stem + ".svg")).string());
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"control-guided flow-matching trajectory planner"};
  app.require_subcommand(1);

  CliOptions opts;
  app.add_option("--config", opts.config_path, "JSON config file");
  app.add_option("--out", opts.out_dir, "output directory (default $FLOWPLAN_OUT or ./out)");
  app.add_option("--seed", opts.seed, "seed for single-run commands");
  app.add_option("--seeds", opts.seeds, "inclusive seed range A..B for batch commands");
  app.add_option("--sampler", opts.sampler, "sampler: sad|fm|trunc|grad")
      ->check(CLI::IsMember({"sad", "fm", "trunc", "grad"}));
  app.add_option("--t0", opts.t0, "controller activation time override");
  app.add_option("--c", opts.c, "scheduling gain override");
  app.add_option("--ode-steps", opts.ode_steps, "ODE step count override");
  app.add_flag("--robust", opts.robust, "robust state-row margins (needs forward model)");
  app.add_flag("--trace", opts.trace, "append per-step QP diagnostics to qp_trace.jsonl");

  auto* gen = app.add_subcommand("gen-data", "generate the expert dataset and world");
  auto* train_flow = app.add_subcommand("train-flow", "train the velocity field");
  auto* train_forward = app.add_subcommand("train-forward", "fit the forward dynamics model");
  auto* plan = app.add_subcommand("plan", "sample one plan and write it as JSON");
  auto* eval = app.add_subcommand("eval", "per-seed metrics for one sampler");
  auto* compare = app.add_subcommand("compare", "aggregate metrics for all samplers");
  auto* ablate = app.add_subcommand("ablate", "sweep one knob of the guided sampler");
  auto* plot = app.add_subcommand("plot", "sample one plan and draw the trajectory SVG");

  std::string ablate_kind = "t0";
  std::string ablate_grid = "0.2,0.4,0.6,0.8";
  ablate->add_option("--kind", ablate_kind, "t0|ode_steps|c_gain|tighten|data_fraction");
  ablate->add_option("--grid", ablate_grid, "comma-separated grid values");

  CLI11_PARSE(app, argc, argv);

  try {
    const Config cfg = load_config(opts.config_path);
    if (gen->parsed()) return cmd_gen_data(cfg, opts);
    if (train_flow->parsed()) return cmd_train_flow(cfg, opts);
    if (train_forward->parsed()) return cmd_train_forward(cfg, opts);
    if (plan->parsed()) return cmd_plan(cfg, opts, false);
    if (plot->parsed()) return cmd_plan(cfg, opts, true);
    if (eval->parsed()) return cmd_eval(cfg, opts);
    if (compare->parsed()) return cmd_compare(cfg, opts);
    if (ablate->parsed()) return cmd_ablate(cfg, opts, ablate_kind, ablate_grid);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
