#include "iganet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "iganet/data.hpp"
#include "iganet/layers.hpp"
#include "iganet/training.hpp"

namespace iganet {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = rng.uniform(lo, hi);
  return t;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

double eval_loss(const std::vector<Tensor>& params, const LossBuilder& build) {
  Tape tape;
  std::vector<Tensor> watched;
  watched.reserve(params.size());
  for (const Tensor& p : params) watched.push_back(tape.watch(p));
  return build(tape, watched).item();
}

}  // namespace

GradCheckResult check_gradients(const std::string& group, std::vector<Tensor> params,
                                const LossBuilder& build, const GradCheckConfig& cfg) {
  // analytic gradients
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    std::vector<Tensor> watched;
    watched.reserve(params.size());
    for (const Tensor& p : params) watched.push_back(tape.watch(p));
    Tensor loss = build(tape, watched);
    tape.backward(loss);
    for (const Tensor& w : watched) {
      auto g = tape.grad(w);
      analytic.emplace_back(g.begin(), g.end());
    }
  }

  GradCheckResult result{group, 0.0, 0};
  Rng pick(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& values = params[pi].mutable_values();
    const int n = static_cast<int>(values.size());
    std::vector<int> coords;
    if (cfg.max_coords_per_tensor <= 0 || n <= cfg.max_coords_per_tensor) {
      coords.resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      for (int i = 0; i < cfg.max_coords_per_tensor; ++i) coords.push_back(pick.uniform_int(0, n - 1));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
    for (int c : coords) {
      const double saved = values[static_cast<std::size_t>(c)];
      values[static_cast<std::size_t>(c)] = saved + cfg.eps;
      const double plus = eval_loss(params, build);
      values[static_cast<std::size_t>(c)] = saved - cfg.eps;
      const double minus = eval_loss(params, build);
      values[static_cast<std::size_t>(c)] = saved;
      const double fd = (plus - minus) / (2.0 * cfg.eps);
      result.max_rel_err = std::max(result.max_rel_err, rel_err(fd, analytic[pi][static_cast<std::size_t>(c)]));
      ++result.coords_checked;
    }
  }
  return result;
}

// Each probe reduces the op output to a scalar through a random-weighted sum
// so that every output coordinate influences the loss.
std::vector<GradCheckResult> gradcheck_layers(const GradCheckConfig& cfg) {
  std::vector<GradCheckResult> results;
  Rng rng(cfg.seed);
  const SkeletonGraph graph = build_h36m_17();
  const int J = graph.num_joints;
  const int C = 16;
  const int heads = 4;

  {
    Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
    Tensor w = random_tensor({3, 2}, rng);
    results.push_back(check_gradients(
        "matmul", {a, b},
        [w](Tape&, std::vector<Tensor>& p) { return sum_all(mul(matmul(p[0], p[1]), w)); }, cfg));
  }
  {
    Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({4, 5}, rng);
    Tensor w = random_tensor({2, 3, 5}, rng);
    results.push_back(check_gradients(
        "matmul_batched", {a, b},
        [w](Tape&, std::vector<Tensor>& p) { return sum_all(mul(matmul(p[0], p[1]), w)); }, cfg));
  }
  {
    Tensor x = random_tensor({3, 5}, rng);
    Tensor w = random_tensor({3, 5}, rng);
    results.push_back(check_gradients(
        "softmax_lastdim", {x},
        [w](Tape&, std::vector<Tensor>& p) { return sum_all(mul(softmax_lastdim(p[0]), w)); },
        cfg));
  }
  {
    Tensor x = random_tensor({4, 6}, rng);
    Tensor w = random_tensor({4, 6}, rng);
    results.push_back(check_gradients(
        "gelu", {x}, [w](Tape&, std::vector<Tensor>& p) { return sum_all(mul(gelu(p[0]), w)); },
        cfg));
  }
  {
    Tensor x = random_tensor({4, 8}, rng);
    Tensor gamma = random_tensor({8}, rng, 0.5, 1.5);
    Tensor beta = random_tensor({8}, rng);
    Tensor w = random_tensor({4, 8}, rng);
    results.push_back(check_gradients(
        "layer_norm", {x, gamma, beta},
        [w](Tape&, std::vector<Tensor>& p) {
          return sum_all(mul(layer_norm(p[0], p[1], p[2]), w));
        },
        cfg));
  }
  {
    Tensor x = random_tensor({5, 6}, rng);
    Tensor wgt = random_tensor({6, 3}, rng);
    Tensor bias = random_tensor({3}, rng);
    Tensor w = random_tensor({5, 3}, rng);
    results.push_back(check_gradients(
        "linear", {x, wgt, bias},
        [w](Tape&, std::vector<Tensor>& p) { return sum_all(mul(linear(p[0], p[1], p[2]), w)); },
        cfg));
  }
  {
    Tensor x = random_tensor({2, J, C}, rng);
    Tensor w = random_tensor({2, J, C}, rng);
    results.push_back(check_gradients(
        "split_merge_heads", {x},
        [w, heads](Tape&, std::vector<Tensor>& p) {
          return sum_all(mul(merge_heads(scale(split_heads(p[0], heads), 1.5), heads), w));
        },
        cfg));
  }
  {
    Rng prng(cfg.seed + 1);
    GcnLayerParams gcn = make_gcn_params(C, C, prng);
    Tensor x = random_tensor({J, C}, rng);
    Tensor w = random_tensor({J, C}, rng);
    results.push_back(check_gradients(
        "gcn_forward", {x, gcn.weight, gcn.bias},
        [w, &graph](Tape&, std::vector<Tensor>& p) {
          GcnLayerParams live{p[1], p[2]};
          return sum_all(mul(gcn_forward(p[0], live, graph, true), w));
        },
        cfg));
  }
  {
    Rng prng(cfg.seed + 2);
    AttentionParams attn = make_attention_params(C, C, heads, prng);
    Tensor x = random_tensor({J, C}, rng);
    Tensor f = random_tensor({J, C}, rng);
    Tensor s = Tensor::scalar(0.5);
    Tensor w = random_tensor({J, C}, rng);
    results.push_back(check_gradients(
        "attention_g2a", {x, f, attn.wq, attn.wk, attn.wv, s},
        [w, heads](Tape&, std::vector<Tensor>& p) {
          AttentionParams live;
          live.wq = p[2];
          live.wk = p[3];
          live.wv = p[4];
          live.heads = heads;
          return sum_all(mul(attention_g2a(p[0], p[1], live, p[5]), w));
        },
        cfg));
  }
  {
    Tensor g1 = random_tensor({J, C}, rng);
    Tensor f = random_tensor({J, C}, rng);
    Tensor s = Tensor::scalar(0.8);
    Tensor w = random_tensor({J, C}, rng);
    results.push_back(check_gradients(
        "a2g_inject", {g1, f, s},
        [w](Tape&, std::vector<Tensor>& p) { return sum_all(mul(a2g_inject(p[0], p[1], p[2]), w)); },
        cfg));
  }
  {
    // full block with gradients flowing into the injection scales
    Rng prng(cfg.seed + 3);
    IgaBlockParams block = make_iga_params(C, heads, 0.5, 0.8, prng);
    Tensor x = random_tensor({J, C}, rng);
    Tensor w = random_tensor({J, C}, rng);
    results.push_back(check_gradients(
        "iga_forward", {x, block.s_g2a, block.s_a2g},
        [w, block, &graph](Tape&, std::vector<Tensor>& p) {
          IgaBlockParams live = block;
          live.s_g2a = p[1];
          live.s_a2g = p[2];
          return sum_all(mul(iga_forward(p[0], live, graph), w));
        },
        cfg));
  }
  {
    Rng prng(cfg.seed + 4);
    UmlpParams umlp = make_umlp_params(C, C / 2, prng);
    Tensor x = random_tensor({J, C}, rng);
    Tensor w = random_tensor({J, C}, rng);
    results.push_back(check_gradients(
        "umlp_forward", {x, umlp.down.weight, umlp.mid.weight, umlp.up.weight},
        [w, umlp](Tape&, std::vector<Tensor>& p) {
          UmlpParams live = umlp;
          live.down.weight = p[1];
          live.mid.weight = p[2];
          live.up.weight = p[3];
          return sum_all(mul(umlp_forward(p[0], live), w));
        },
        cfg));
  }
  {
    Tensor p2d = random_tensor({J, 2}, rng);
    Tensor we = random_tensor({2, C}, rng);
    Tensor pos = random_tensor({J, C}, rng);
    Tensor w = random_tensor({J, C}, rng);
    results.push_back(check_gradients(
        "patch_embed", {p2d, we, pos},
        [w](Tape&, std::vector<Tensor>& p) { return sum_all(mul(patch_embed(p[0], p[1], p[2]), w)); },
        cfg));
  }
  {
    Tensor x = random_tensor({J, C}, rng);
    Tensor wr = random_tensor({C, 3}, rng);
    Tensor br = random_tensor({3}, rng);
    Tensor w = random_tensor({J, 3}, rng);
    results.push_back(check_gradients(
        "regress_head", {x, wr, br},
        [w](Tape&, std::vector<Tensor>& p) { return sum_all(mul(regress_head(p[0], p[1], p[2]), w)); },
        cfg));
  }
  {
    Tensor pred = random_tensor({2, J, 3}, rng);
    Tensor target = random_tensor({2, J, 3}, rng);
    results.push_back(check_gradients(
        "mpjpe_loss", {pred},
        [target](Tape&, std::vector<Tensor>& p) { return mpjpe_loss(p[0], target); }, cfg));
  }
  return results;
}

std::vector<GradCheckResult> gradcheck_model(const ModelConfig& mcfg, const GradCheckConfig& cfg) {
  mcfg.validate();
  const SkeletonGraph graph = build_h36m_17(mcfg.adjacency_norm);
  if (graph.num_joints != mcfg.joints) {
    throw std::invalid_argument("gradcheck_model: config joints must match the builtin graph");
  }
  Rng rng(cfg.seed);
  ModelParams params = init_params(mcfg, rng.next_u64());
  const int B = 2;
  Tensor x = random_tensor({B, mcfg.joints, 2}, rng);
  Tensor target = random_tensor({B, mcfg.joints, 3}, rng, -100.0, 100.0);

  // analytic pass
  std::vector<std::string> names;
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    ModelParams live = attach_params(params, tape);
    Tensor loss = mpjpe_loss(forward(x, live, mcfg, graph), target);
    tape.backward(loss);
    visit_params(live, [&](const std::string& name, const Tensor& t) {
      auto g = tape.grad(t);
      names.push_back(name);
      analytic.emplace_back(g.begin(), g.end());
    });
  }

  auto loss_value = [&]() {
    Tape tape;
    ModelParams live = attach_params(params, tape);
    return mpjpe_loss(forward(x, live, mcfg, graph), target).item();
  };

  std::vector<GradCheckResult> results;
  Rng pick(cfg.seed ^ 0x51f2cc9e03b2a741ULL);
  std::size_t slot = 0;
  visit_params(params, [&](const std::string& name, Tensor& t) {
    auto& values = t.mutable_values();
    const int n = static_cast<int>(values.size());
    std::vector<int> coords;
    if (cfg.max_coords_per_tensor <= 0 || n <= cfg.max_coords_per_tensor) {
      coords.resize(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
      for (int i = 0; i < cfg.max_coords_per_tensor; ++i) coords.push_back(pick.uniform_int(0, n - 1));
      std::sort(coords.begin(), coords.end());
      coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
    }
    GradCheckResult res{name, 0.0, 0};
    for (int c : coords) {
      const double saved = values[static_cast<std::size_t>(c)];
      values[static_cast<std::size_t>(c)] = saved + cfg.eps;
      const double plus = loss_value();
      values[static_cast<std::size_t>(c)] = saved - cfg.eps;
      const double minus = loss_value();
      values[static_cast<std::size_t>(c)] = saved;
      const double fd = (plus - minus) / (2.0 * cfg.eps);
      res.max_rel_err = std::max(res.max_rel_err, rel_err(fd, analytic[slot][static_cast<std::size_t>(c)]));
      ++res.coords_checked;
    }
    results.push_back(std::move(res));
    ++slot;
  });
  return results;
}

std::vector<GradCheckResult> gradcheck_all(const GradCheckConfig& cfg) {
  std::vector<GradCheckResult> results = gradcheck_layers(cfg);

  ModelConfig probe;
  probe.joints = 17;
  probe.channels = 16;
  probe.heads = 4;
  probe.bottleneck = 8;
  probe.blocks = 2;
  std::vector<GradCheckResult> model = gradcheck_model(probe, cfg);
  for (auto& r : model) {
    r.group = "model." + r.group;
    results.push_back(std::move(r));
  }
  return results;
}

bool gradcheck_passed(const std::vector<GradCheckResult>& results, double tol) {
  for (const auto& r : results) {
    if (!(r.max_rel_err < tol)) return false;
  }
  return true;
}

}  // namespace iganet
