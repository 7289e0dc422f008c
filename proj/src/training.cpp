#include "iganet/training.hpp"

#include <cmath>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>

namespace iganet {

OptimState init_optim(const ModelParams& params, double lr0) {
  OptimState st;
  st.lr = lr0;
  visit_params(params, [&st](const std::string&, const Tensor& t) {
    st.m.emplace_back(t.values().size(), 0.0);
    st.v.emplace_back(t.values().size(), 0.0);
  });
  return st;
}

GradSet collect_grads(Tape& tape, const ModelParams& attached) {
  GradSet gs;
  visit_params(attached, [&](const std::string& name, const Tensor& t) {
    auto g = tape.grad(t);
    gs.names.push_back(name);
    gs.grads.emplace_back(g.begin(), g.end());
  });
  return gs;
}

void adam_step(ModelParams& params, const GradSet& grads, OptimState& state) {
  if (grads.grads.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: gradient count does not match optimizer state");
  }
  for (std::size_t i = 0; i < grads.grads.size(); ++i) {
    for (double g : grads.grads[i]) {
      if (!std::isfinite(g)) {
        throw std::runtime_error("adam_step: non-finite gradient in '" + grads.names[i] +
                                 "'; step aborted");
      }
    }
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  std::size_t slot = 0;
  visit_params(params, [&](const std::string&, Tensor& t) {
    auto& m = state.m[slot];
    auto& v = state.v[slot];
    const auto& g = grads.grads[slot];
    auto& p = t.mutable_values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      p[k] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    ++slot;
  });
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: negative epoch");
  return cfg.lr0 * std::pow(cfg.lr_decay, static_cast<double>(epoch));
}

Tensor mpjpe_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw std::invalid_argument("mpjpe_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                                shape_str(target.shape()));
  }
  Tensor diff = sub(pred, target);
  Tensor sq = sum_lastdim(mul(diff, diff));
  // tiny shift keeps the sqrt differentiable when a joint is predicted exactly
  return mean_all(sqrt_el(add_scalar(sq, 1e-12)));
}

namespace {

std::vector<PoseSample> gather(const std::vector<PoseSample>& samples, const std::vector<int>& idx,
                               std::size_t lo, std::size_t hi) {
  std::vector<PoseSample> out;
  out.reserve(hi - lo);
  for (std::size_t i = lo; i < hi; ++i) out.push_back(samples[static_cast<std::size_t>(idx[i])]);
  return out;
}

std::vector<int> iota_indices(std::size_t n) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

TrainResult train(const Dataset& train_ds, const Dataset* val_ds, const ModelConfig& mcfg,
                  const TrainConfig& tcfg, const SkeletonGraph& graph) {
  if (train_ds.samples.empty()) throw std::invalid_argument("train: dataset is empty");
  mcfg.validate();

  Rng rng(tcfg.seed);
  const std::uint64_t init_seed = rng.next_u64();
  TrainResult result;
  result.params = init_params(mcfg, init_seed);
  result.best_params = clone_params(result.params);
  OptimState optim = init_optim(result.params, tcfg.lr0);

  std::vector<int> indices = iota_indices(train_ds.samples.size());
  bool stop = false;
  for (int epoch = 0; epoch < tcfg.epochs && !stop; ++epoch) {
    optim.lr = lr_schedule(epoch, tcfg);
    rng.shuffle(indices.begin(), indices.end());

    double loss_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < indices.size() && !stop;
         start += static_cast<std::size_t>(tcfg.batch_size)) {
      const std::size_t end =
          std::min(indices.size(), start + static_cast<std::size_t>(tcfg.batch_size));
      std::vector<PoseSample> batch = gather(train_ds.samples, indices, start, end);
      if (tcfg.augment && tcfg.flip_prob > 0.0) {
        augment_flip(batch, graph, tcfg.flip_prob, rng);
      }
      const std::vector<int> all = iota_indices(batch.size());
      Tensor x = batch_inputs(batch, all);
      Tensor target = batch_targets(batch, all);

      Tape tape;
      ModelParams live = attach_params(result.params, tape);
      Tensor pred = forward(x, live, mcfg, graph, {true, &rng});
      Tensor loss = mpjpe_loss(pred, target);
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        result.diverged = true;
        stop = true;
        break;
      }
      tape.backward(loss);
      GradSet grads = collect_grads(tape, live);
      try {
        adam_step(result.params, grads, optim);
      } catch (const std::runtime_error&) {
        result.diverged = true;
        stop = true;
        break;
      }
      loss_sum += loss_value;
      ++batches;
      ++result.steps;
      if (tcfg.stop_at_train_mpjpe > 0.0 && loss_value < tcfg.stop_at_train_mpjpe) stop = true;
      if (tcfg.max_steps > 0 && result.steps >= tcfg.max_steps) stop = true;
    }
    if (batches == 0) break;

    EpochLog entry;
    entry.epoch = epoch;
    entry.lr = optim.lr;
    entry.train_loss = loss_sum / batches;
    const bool do_eval =
        val_ds != nullptr && (epoch % std::max(1, tcfg.eval_every) == 0 || epoch == tcfg.epochs - 1);
    if (do_eval) {
      entry.eval_mpjpe = evaluate(*val_ds, result.params, mcfg, graph).mpjpe_mm;
    }
    result.log.push_back(entry);

    const double metric = val_ds ? entry.eval_mpjpe : entry.train_loss;
    if (!std::isnan(metric) && metric < result.best_metric) {
      result.best_metric = metric;
      result.best_params = clone_params(result.params);
    }
    if (tcfg.verbose) {
      std::cerr << "epoch " << epoch << " lr " << entry.lr << " train " << entry.train_loss;
      if (!std::isnan(entry.eval_mpjpe)) std::cerr << " eval " << entry.eval_mpjpe;
      std::cerr << '\n';
    }
  }
  if (result.diverged) {
    // parameters were not touched by the failed step; keep them as last-good
    result.best_params = clone_params(result.params);
  }
  return result;
}

EvalReport evaluate(const Dataset& ds, const ModelParams& params, const ModelConfig& cfg,
                    const SkeletonGraph& graph, const EvalOptions& opt) {
  if (ds.samples.empty()) throw std::invalid_argument("evaluate: dataset is empty");
  for (const PoseSample& s : ds.samples) {
    if (!s.has_target) throw std::invalid_argument("evaluate: dataset has 2D-only samples");
  }

  std::vector<Pose3d> preds, plain_preds, gts;
  preds.reserve(ds.samples.size());
  gts.reserve(ds.samples.size());

  for (std::size_t start = 0; start < ds.samples.size();
       start += static_cast<std::size_t>(opt.batch_size)) {
    const std::size_t end =
        std::min(ds.samples.size(), start + static_cast<std::size_t>(opt.batch_size));
    std::vector<int> idx(end - start);
    std::iota(idx.begin(), idx.end(), static_cast<int>(start));
    Tensor x = batch_inputs(ds.samples, idx);
    std::vector<Pose3d> out = tensor_to_poses(forward(x, params, cfg, graph));

    if (opt.flip_merge) {
      std::vector<PoseSample> flipped;
      flipped.reserve(idx.size());
      for (int i : idx) {
        PoseSample s = ds.samples[static_cast<std::size_t>(i)];
        s.input2d = horizontal_flip(s.input2d, graph);
        flipped.push_back(std::move(s));
      }
      const std::vector<int> all = iota_indices(flipped.size());
      std::vector<Pose3d> out_f = tensor_to_poses(forward(batch_inputs(flipped, all), params, cfg, graph));
      for (std::size_t i = 0; i < out.size(); ++i) {
        const Pose3d unflipped = horizontal_flip(out_f[i], graph);
        if (opt.report_no_flip) plain_preds.push_back(out[i]);
        for (std::size_t jt = 0; jt < out[i].size(); ++jt) {
          out[i][jt].x = 0.5 * (out[i][jt].x + unflipped[jt].x);
          out[i][jt].y = 0.5 * (out[i][jt].y + unflipped[jt].y);
          out[i][jt].z = 0.5 * (out[i][jt].z + unflipped[jt].z);
        }
      }
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      preds.push_back(std::move(out[i]));
      gts.push_back(ds.samples[start + i].target3d);
    }
  }

  EvalReport report;
  report.mpjpe_mm = mpjpe(preds, gts);
  report.pck_pct = pck(preds, gts);
  report.auc_pct = auc(preds, gts);
  report.per_sample = per_sample_mpjpe(preds, gts);
  if (opt.flip_merge && opt.report_no_flip) report.mpjpe_no_flip_mm = mpjpe(plain_preds, gts);
  if (opt.per_action) {
    std::vector<std::string> actions;
    actions.reserve(ds.samples.size());
    for (const PoseSample& s : ds.samples) actions.push_back(s.action);
    ActionTable table = per_action_table(report.per_sample, actions);
    for (const ActionRow& r : table.rows) {
      report.per_action[r.action] = r.mpjpe_mm;
      report.per_action_count[r.action] = r.count;
    }
  }
  return report;
}

std::string train_log_jsonl(const std::vector<EpochLog>& log) {
  std::ostringstream os;
  for (const EpochLog& e : log) {
    nlohmann::json j{{"epoch", e.epoch}, {"lr", e.lr}, {"train_loss", e.train_loss}};
    if (!std::isnan(e.eval_mpjpe)) j["eval_mpjpe"] = e.eval_mpjpe;
    os << j.dump() << '\n';
  }
  return os.str();
}

std::vector<AblationRow> default_ablation_grid() {
  return {
      {"attention-only", false, false, false, false},
      {"attention+gcn", true, false, false, false},
      {"attention+gcn+g2a", true, true, false, false},
      {"attention+gcn+a2g", true, false, true, false},
      {"attention+gcn+g2a+umlp", true, true, false, true},
      {"attention+gcn+a2g+umlp", true, false, true, true},
      {"full", true, true, true, true},
  };
}

std::vector<AblationResult> run_ablation(const std::vector<AblationRow>& grid,
                                         const Dataset& train_ds, const Dataset* val_ds,
                                         ModelConfig base, TrainConfig tcfg,
                                         const SkeletonGraph& graph) {
  if (grid.empty()) throw std::invalid_argument("run_ablation: empty grid");
  std::vector<AblationResult> results;
  for (const AblationRow& row : grid) {
    ModelConfig cfg = base;
    cfg.use_gcn = row.use_gcn;
    cfg.use_g2a = row.use_g2a;
    cfg.use_a2g = row.use_a2g;
    cfg.use_umlp = row.use_umlp;
    TrainResult tr = train(train_ds, val_ds, cfg, tcfg, graph);
    const Dataset& eval_ds = val_ds ? *val_ds : train_ds;
    AblationResult res;
    res.row = row;
    res.eval_mpjpe = evaluate(eval_ds, tr.best_params, cfg, graph).mpjpe_mm;
    res.final_train_loss = tr.log.empty() ? 0.0 : tr.log.back().train_loss;
    res.param_count = count_params(cfg);
    results.push_back(std::move(res));
  }
  return results;
}

namespace {
const char* mark(bool b) { return b ? "x" : " "; }
}

std::string ablation_table_text(const std::vector<AblationResult>& results) {
  std::size_t w = 4;
  for (const auto& r : results) w = std::max(w, r.row.name.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w + 2)) << "name"
     << " attn gcn g2a a2g umlp   mpjpe_mm\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& r : results) {
    os << std::left << std::setw(static_cast<int>(w + 2)) << r.row.name << "   " << mark(true)
       << "   " << mark(r.row.use_gcn) << "   " << mark(r.row.use_g2a) << "   "
       << mark(r.row.use_a2g) << "    " << mark(r.row.use_umlp) << "   " << std::right
       << std::setw(10) << r.eval_mpjpe << '\n'
       << std::left;
  }
  return os.str();
}

std::string ablation_table_csv(const std::vector<AblationResult>& results) {
  std::ostringstream os;
  os << "name,attention,gcn,g2a,a2g,umlp,mpjpe_mm,final_train_loss,param_count\n";
  os << std::setprecision(17);
  for (const auto& r : results) {
    os << r.row.name << ",1," << r.row.use_gcn << ',' << r.row.use_g2a << ',' << r.row.use_a2g
       << ',' << r.row.use_umlp << ',' << r.eval_mpjpe << ',' << r.final_train_loss << ','
       << r.param_count << '\n';
  }
  return os.str();
}

}  // namespace iganet
