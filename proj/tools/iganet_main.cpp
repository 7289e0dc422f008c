// Command-line front end: train, eval, predict, gradcheck, ablate, synth.
// Exit codes: 0 success, 1 check/runtime failure, 2 usage error, 3 divergence.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "iganet/data.hpp"
#include "iganet/gradcheck.hpp"
#include "iganet/metrics.hpp"
#include "iganet/model.hpp"
#include "iganet/skeleton.hpp"
#include "iganet/training.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

iganet::SkeletonGraph resolve_graph(const std::string& graph_path, iganet::AdjacencyNorm norm) {
  if (graph_path.empty()) return iganet::build_h36m_17(norm);
  return iganet::load_graph(graph_path, norm);
}

iganet::ModelConfig load_model_config(const std::string& config_path) {
  if (config_path.empty()) return {};
  std::ifstream in(config_path);
  if (!in) throw std::runtime_error("cannot open config " + config_path);
  nlohmann::json j;
  in >> j;
  return iganet::ModelConfig::from_json(j);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << text;
}

void print_warnings(const iganet::Dataset& ds) {
  for (const std::string& w : ds.warnings) std::cerr << "warning: " << w << '\n';
}

struct TrainArgs {
  std::string data, val, config, out = "run", graph;
  iganet::TrainConfig tcfg;
};

int cmd_train(const TrainArgs& args) {
  iganet::ModelConfig mcfg = load_model_config(args.config);
  iganet::SkeletonGraph graph = resolve_graph(args.graph, mcfg.adjacency_norm);
  mcfg.joints = graph.num_joints;

  iganet::Dataset train_ds = iganet::load_dataset(args.data, graph);
  print_warnings(train_ds);
  iganet::Dataset val_ds;
  const bool has_val = !args.val.empty();
  if (has_val) {
    val_ds = iganet::load_dataset(args.val, graph);
    print_warnings(val_ds);
  }

  iganet::TrainResult result =
      iganet::train(train_ds, has_val ? &val_ds : nullptr, mcfg, args.tcfg, graph);

  std::filesystem::create_directories(args.out);
  const std::string ckpt_path = args.out + "/model.ckpt";
  iganet::save_params(ckpt_path, mcfg, result.best_params);
  write_text(args.out + "/train_log.jsonl", iganet::train_log_jsonl(result.log));

  if (result.diverged) {
    std::cerr << "training diverged; last good parameters kept in " << ckpt_path << '\n';
    return kExitDiverged;
  }
  std::cout << "checkpoint written to " << ckpt_path << " (" << result.steps << " steps)\n";
  if (!result.log.empty()) {
    std::cout << "final train loss " << result.log.back().train_loss << " mm";
    if (!std::isnan(result.log.back().eval_mpjpe)) {
      std::cout << ", eval MPJPE " << result.log.back().eval_mpjpe << " mm";
    }
    std::cout << '\n';
  }
  return kExitOk;
}

struct EvalArgs {
  std::string data, ckpt, out, csv, graph;
  bool no_flip_merge = false;
  bool per_action = false;
  bool row_mean_avg = false;
  bool verbose = false;
};

int cmd_eval(const EvalArgs& args) {
  iganet::Checkpoint ckpt = iganet::load_params(args.ckpt);
  iganet::SkeletonGraph graph = resolve_graph(args.graph, ckpt.config.adjacency_norm);
  if (graph.num_joints != ckpt.config.joints) {
    throw std::runtime_error("checkpoint was trained for " + std::to_string(ckpt.config.joints) +
                             " joints but graph has " + std::to_string(graph.num_joints));
  }
  iganet::Dataset ds = iganet::load_dataset(args.data, graph);
  print_warnings(ds);

  iganet::EvalOptions opt;
  opt.flip_merge = !args.no_flip_merge;
  opt.per_action = args.per_action;
  opt.report_no_flip = args.verbose && opt.flip_merge;
  iganet::EvalReport report = iganet::evaluate(ds, ckpt.params, ckpt.config, graph, opt);

  std::cout << "MPJPE " << report.mpjpe_mm << " mm  PCK@150 " << report.pck_pct << " %  AUC "
            << report.auc_pct << " %\n";
  if (report.mpjpe_no_flip_mm >= 0.0) {
    std::cout << "MPJPE without flip merge " << report.mpjpe_no_flip_mm << " mm\n";
  }
  if (args.per_action) {
    std::vector<std::string> actions;
    for (const auto& s : ds.samples) actions.push_back(s.action);
    iganet::ActionTable table =
        iganet::per_action_table(report.per_sample, actions, args.row_mean_avg);
    for (const std::string& w : table.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << table.to_text();
    if (!args.csv.empty()) write_text(args.csv, table.to_csv());
  } else if (!args.csv.empty()) {
    std::ostringstream os;
    os << "mpjpe_mm,pck_pct,auc_pct\n"
       << std::setprecision(17) << report.mpjpe_mm << ',' << report.pck_pct << ','
       << report.auc_pct << '\n';
    write_text(args.csv, os.str());
  }
  if (!args.out.empty()) write_text(args.out, report.to_json().dump(2) + "\n");
  return kExitOk;
}

struct PredictArgs {
  std::string data, ckpt, out, graph;
  bool flip_merge = false;
};

int cmd_predict(const PredictArgs& args) {
  iganet::Checkpoint ckpt = iganet::load_params(args.ckpt);
  iganet::SkeletonGraph graph = resolve_graph(args.graph, ckpt.config.adjacency_norm);
  if (graph.num_joints != ckpt.config.joints) {
    throw std::runtime_error("checkpoint was trained for " + std::to_string(ckpt.config.joints) +
                             " joints but graph has " + std::to_string(graph.num_joints));
  }
  iganet::Dataset ds = iganet::load_dataset(args.data, graph);
  print_warnings(ds);
  if (ds.samples.empty()) throw std::runtime_error("predict: no samples in " + args.data);

  for (iganet::PoseSample& s : ds.samples) {
    iganet::Pose3d pred = iganet::predict_pose(s.input2d, ckpt.params, ckpt.config, graph);
    if (args.flip_merge) {
      iganet::Pose3d flipped_pred = iganet::predict_pose(
          iganet::horizontal_flip(s.input2d, graph), ckpt.params, ckpt.config, graph);
      iganet::Pose3d unflipped = iganet::horizontal_flip(flipped_pred, graph);
      for (std::size_t j = 0; j < pred.size(); ++j) {
        pred[j].x = 0.5 * (pred[j].x + unflipped[j].x);
        pred[j].y = 0.5 * (pred[j].y + unflipped[j].y);
        pred[j].z = 0.5 * (pred[j].z + unflipped[j].z);
      }
    }
    s.target3d = std::move(pred);
    s.has_target = true;
  }
  iganet::save_dataset(args.out, ds);
  std::cout << "wrote " << ds.samples.size() << " predictions to " << args.out << '\n';
  return kExitOk;
}

struct GradcheckArgs {
  std::string config;
  iganet::GradCheckConfig gc;
};

int cmd_gradcheck(const GradcheckArgs& args) {
  std::vector<iganet::GradCheckResult> results;
  if (args.config.empty()) {
    results = iganet::gradcheck_all(args.gc);
  } else {
    iganet::ModelConfig mcfg = load_model_config(args.config);
    results = iganet::gradcheck_layers(args.gc);
    for (auto& r : iganet::gradcheck_model(mcfg, args.gc)) {
      r.group = "model." + r.group;
      results.push_back(std::move(r));
    }
  }
  double worst = 0.0;
  std::string worst_group;
  for (const auto& r : results) {
    std::cout << (r.max_rel_err < args.gc.tol ? "[ok]   " : "[FAIL] ") << r.group
              << "  max_rel_err " << r.max_rel_err << "  (" << r.coords_checked << " coords)\n";
    if (r.max_rel_err > worst) {
      worst = r.max_rel_err;
      worst_group = r.group;
    }
  }
  std::cout << "worst " << worst << " in '" << worst_group << "', tolerance " << args.gc.tol
            << '\n';
  if (!iganet::gradcheck_passed(results, args.gc.tol)) {
    std::cerr << "gradient check failed: '" << worst_group << "' exceeds tolerance\n";
    return kExitCheckFailed;
  }
  return kExitOk;
}

struct AblateArgs {
  std::string data, val, grid, out = "ablation", config, graph;
  iganet::TrainConfig tcfg;
};

std::vector<iganet::AblationRow> load_grid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open grid " + path);
  nlohmann::json j;
  in >> j;
  if (!j.is_array()) throw std::runtime_error("grid must be a json array");
  std::vector<iganet::AblationRow> grid;
  for (const auto& row : j) {
    iganet::AblationRow r;
    r.name = row.value("name", "row" + std::to_string(grid.size()));
    r.use_gcn = row.value("use_gcn", true);
    r.use_g2a = row.value("use_g2a", true);
    r.use_a2g = row.value("use_a2g", true);
    r.use_umlp = row.value("use_umlp", true);
    grid.push_back(std::move(r));
  }
  return grid;
}

int cmd_ablate(const AblateArgs& args) {
  iganet::ModelConfig mcfg = load_model_config(args.config);
  iganet::SkeletonGraph graph = resolve_graph(args.graph, mcfg.adjacency_norm);
  mcfg.joints = graph.num_joints;

  std::vector<iganet::AblationRow> grid =
      args.grid.empty() ? iganet::default_ablation_grid() : load_grid(args.grid);
  if (grid.empty()) {
    std::cerr << "error: ablation grid is empty\n";
    return kExitUsage;
  }

  iganet::Dataset train_ds = iganet::load_dataset(args.data, graph);
  print_warnings(train_ds);
  iganet::Dataset val_ds;
  const bool has_val = !args.val.empty();
  if (has_val) {
    val_ds = iganet::load_dataset(args.val, graph);
    print_warnings(val_ds);
  }

  std::vector<iganet::AblationResult> results = iganet::run_ablation(
      grid, train_ds, has_val ? &val_ds : nullptr, mcfg, args.tcfg, graph);

  const std::string table = iganet::ablation_table_text(results);
  std::cout << table;
  std::filesystem::create_directories(args.out);
  write_text(args.out + "/ablation.txt", table);
  write_text(args.out + "/ablation.csv", iganet::ablation_table_csv(results));
  std::cout << "results written to " << args.out << "/ablation.{txt,csv}\n";
  return kExitOk;
}

struct SynthArgs {
  std::string out, graph;
  int n = 256;
  std::uint64_t seed = 42;
};

int cmd_synth(const SynthArgs& args) {
  iganet::SkeletonGraph graph = resolve_graph(args.graph, iganet::AdjacencyNorm::Row);
  iganet::Dataset ds = iganet::synth_generate(args.n, args.seed, graph);
  iganet::save_dataset(args.out, ds);
  std::cout << "wrote " << ds.samples.size() << " synthetic samples to " << args.out << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2D-to-3D human pose lifting with interweaved graph convolution and attention"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train a model on a pose-v1 dataset");
  train->add_option("--data", train_args.data, "training dataset (pose-v1)")->required();
  train->add_option("--val", train_args.val, "validation dataset (pose-v1)");
  train->add_option("--config", train_args.config, "model config json");
  train->add_option("--out", train_args.out, "output directory")->capture_default_str();
  train->add_option("--seed", train_args.tcfg.seed, "rng seed")->capture_default_str();
  train->add_option("--epochs", train_args.tcfg.epochs, "training epochs")->capture_default_str();
  train->add_option("--batch", train_args.tcfg.batch_size, "batch size")->capture_default_str();
  train->add_option("--lr", train_args.tcfg.lr0, "initial learning rate")->capture_default_str();
  train->add_option("--lr-decay", train_args.tcfg.lr_decay, "per-epoch lr decay factor")
      ->capture_default_str();
  train->add_option("--flip-prob", train_args.tcfg.flip_prob, "flip augmentation probability")
      ->capture_default_str();
  train->add_flag("--no-augment", [&train_args](std::int64_t) { train_args.tcfg.augment = false; },
                  "disable flip augmentation");
  train->add_option("--max-steps", train_args.tcfg.max_steps, "stop after this many steps (0 = off)")
      ->capture_default_str();
  train->add_option("--eval-every", train_args.tcfg.eval_every, "epochs between eval passes")
      ->capture_default_str();
  train->add_flag("--verbose", train_args.tcfg.verbose, "log every epoch to stderr");
  train->add_option("--graph", train_args.graph, "skeleton graph json (default: builtin 17-joint)");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint (MPJPE / PCK@150 / AUC)");
  eval->add_option("--data", eval_args.data, "dataset (pose-v1, with targets)")->required();
  eval->add_option("--ckpt", eval_args.ckpt, "checkpoint file")->required();
  eval->add_option("--out", eval_args.out, "write the full report json here");
  eval->add_option("--csv", eval_args.csv, "write a csv summary here");
  eval->add_flag("--no-flip-merge", eval_args.no_flip_merge,
                 "disable test-time flip averaging (on by default)");
  eval->add_flag("--per-action", eval_args.per_action, "print the per-action table");
  eval->add_flag("--row-mean-avg", eval_args.row_mean_avg,
                 "average per-action rows instead of pooling samples");
  eval->add_flag("--verbose", eval_args.verbose, "also report the no-flip-merge MPJPE");
  eval->add_option("--graph", eval_args.graph, "skeleton graph json");

  PredictArgs predict_args;
  CLI::App* predict = app.add_subcommand("predict", "Lift 2D-only pose-v1 lines to 3D");
  predict->add_option("--data", predict_args.data, "input dataset (pose-v1, 2D-only lines ok)")
      ->required();
  predict->add_option("--ckpt", predict_args.ckpt, "checkpoint file")->required();
  predict->add_option("--out", predict_args.out, "output dataset path")->required();
  predict->add_flag("--flip-merge", predict_args.flip_merge, "average with the flipped input");
  predict->add_option("--graph", predict_args.graph, "skeleton graph json");

  GradcheckArgs gc_args;
  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "Finite-difference check of every layer and the end-to-end model");
  gradcheck->add_option("--config", gc_args.config, "model config json for the end-to-end pass");
  gradcheck->add_option("--seed", gc_args.gc.seed, "rng seed")->capture_default_str();
  gradcheck->add_option("--eps", gc_args.gc.eps, "finite-difference step")->capture_default_str();
  gradcheck->add_option("--tol", gc_args.gc.tol, "max relative error allowed")
      ->capture_default_str();
  gradcheck->add_option("--coords", gc_args.gc.max_coords_per_tensor,
                        "sampled coordinates per tensor (<=0 checks all)")
      ->capture_default_str();

  AblateArgs ablate_args;
  CLI::App* ablate = app.add_subcommand("ablate", "Train and compare a grid of ablation flags");
  ablate->add_option("--data", ablate_args.data, "training dataset (pose-v1)")->required();
  ablate->add_option("--val", ablate_args.val, "validation dataset (pose-v1)");
  ablate->add_option("--grid", ablate_args.grid,
                     "grid json (array of {name,use_gcn,use_g2a,use_a2g,use_umlp}); "
                     "default: the builtin 7-row design grid");
  ablate->add_option("--config", ablate_args.config, "base model config json");
  ablate->add_option("--out", ablate_args.out, "output directory")->capture_default_str();
  ablate->add_option("--seed", ablate_args.tcfg.seed, "rng seed")->capture_default_str();
  ablate->add_option("--epochs", ablate_args.tcfg.epochs, "epochs per configuration")
      ->capture_default_str();
  ablate->add_option("--batch", ablate_args.tcfg.batch_size, "batch size")->capture_default_str();
  ablate->add_option("--lr", ablate_args.tcfg.lr0, "initial learning rate")->capture_default_str();
  ablate->add_option("--lr-decay", ablate_args.tcfg.lr_decay, "per-epoch lr decay factor")
      ->capture_default_str();
  ablate->add_option("--graph", ablate_args.graph, "skeleton graph json");

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic pose-v1 dataset");
  synth->add_option("--n", synth_args.n, "number of samples")->capture_default_str();
  synth->add_option("--seed", synth_args.seed, "rng seed")->capture_default_str();
  synth->add_option("--out", synth_args.out, "output dataset path")->required();
  synth->add_option("--graph", synth_args.graph, "skeleton graph json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (predict->parsed()) return cmd_predict(predict_args);
    if (gradcheck->parsed()) return cmd_gradcheck(gc_args);
    if (ablate->parsed()) return cmd_ablate(ablate_args);
    if (synth->parsed()) return cmd_synth(synth_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  return kExitUsage;
}
