#include "iganet/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace iganet {

namespace {

Tensor apply_activation(const Tensor& x, Activation act) {
  return act == Activation::Gelu ? gelu(x) : relu(x);
}

Tensor adjacency_tensor(const SkeletonGraph& g) {
  return Tensor({g.num_joints, g.num_joints}, g.adj_norm);
}

Tensor maybe_dropout(const Tensor& x, double p, Rng* rng) {
  if (p <= 0.0 || rng == nullptr) return x;
  return dropout(x, p, *rng);
}

}  // namespace

Tensor gcn_forward(const Tensor& x, const GcnLayerParams& p, const SkeletonGraph& g,
                   bool apply_act, Activation act) {
  if (x.dim(x.rank() - 2) != g.num_joints) {
    throw std::invalid_argument("gcn_forward: input " + shape_str(x.shape()) + " has " +
                                std::to_string(x.dim(x.rank() - 2)) + " joints, graph expects " +
                                std::to_string(g.num_joints));
  }
  Tensor pre = add_bias(matmul(adjacency_tensor(g), matmul(x, p.weight)), p.bias);
  return apply_act ? apply_activation(pre, act) : pre;
}

Tensor multihead_attention(const Tensor& x, const AttentionParams& p) {
  const bool was_rank2 = x.rank() == 2;
  Tensor x3 = was_rank2 ? reshape(x, {1, x.dim(0), x.dim(1)}) : x;
  const int d_model = p.wq.dim(1);
  if (d_model % p.heads != 0) {
    throw std::invalid_argument("attention: d_model " + std::to_string(d_model) +
                                " not divisible by " + std::to_string(p.heads) + " heads");
  }
  const int d = d_model / p.heads;

  Tensor q = split_heads(matmul(x3, p.wq), p.heads);
  Tensor k = split_heads(matmul(x3, p.wk), p.heads);
  Tensor v = split_heads(matmul(x3, p.wv), p.heads);

  Tensor scores = scale(matmul(q, transpose_last(k)), 1.0 / std::sqrt(static_cast<double>(d)));
  Tensor weights = softmax_lastdim(scores);
  Tensor out = merge_heads(matmul(weights, v), p.heads);
  return was_rank2 ? reshape(out, {x.dim(0), d_model}) : out;
}

Tensor attention_g2a(const Tensor& x, const Tensor& f_graph, const AttentionParams& p,
                     const Tensor& s_g2a) {
  Tensor att = multihead_attention(x, p);
  if (f_graph.shape() != att.shape()) {
    throw std::invalid_argument("attention_g2a: graph features " + shape_str(f_graph.shape()) +
                                " do not match attention output " + shape_str(att.shape()));
  }
  return add(att, mul_scalar(f_graph, s_g2a));
}

Tensor a2g_inject(const Tensor& g1_out, const Tensor& f_global, const Tensor& s_a2g) {
  if (g1_out.shape() != f_global.shape()) {
    throw std::invalid_argument("a2g_inject: shape mismatch " + shape_str(g1_out.shape()) +
                                " vs " + shape_str(f_global.shape()));
  }
  return add(g1_out, mul_scalar(f_global, s_a2g));
}

Tensor iga_forward(const Tensor& x, const IgaBlockParams& p, const SkeletonGraph& g,
                   const IgaOptions& opt) {
  Tensor xn = layer_norm(x, p.norm_in.gamma, p.norm_in.beta);

  if (!opt.use_gcn) {
    // attention-only block: both guidance paths vanish with the GCN
    Tensor att = multihead_attention(xn, p.attn);
    Tensor proj = maybe_dropout(linear(att, p.attn.wo, p.attn.wo_bias), opt.dropout, opt.rng);
    return add(proj, x);
  }

  Tensor g1 = gcn_forward(xn, p.gcn1, g, true, opt.gcn_activation);
  Tensor att = multihead_attention(xn, p.attn);
  Tensor x_g2a = opt.use_g2a ? add(att, mul_scalar(g1, p.s_g2a)) : att;
  Tensor f_global = opt.a2g_pre_injection ? att : x_g2a;
  Tensor x_a2g = opt.use_a2g ? a2g_inject(g1, f_global, p.s_a2g) : g1;
  Tensor g2 = gcn_forward(x_a2g, p.gcn2, g, false);
  Tensor proj = maybe_dropout(linear(x_g2a, p.attn.wo, p.attn.wo_bias), opt.dropout, opt.rng);
  return add(add(g2, proj), x);
}

Tensor umlp_forward(const Tensor& x_iga, const UmlpParams& p, double drop, Rng* rng) {
  Tensor xn = layer_norm(x_iga, p.norm.gamma, p.norm.beta);
  Tensor down = gelu(linear(xn, p.down.weight, p.down.bias));
  Tensor mid = add(gelu(linear(down, p.mid.weight, p.mid.bias)), down);
  Tensor up = maybe_dropout(linear(mid, p.up.weight, p.up.bias), drop, rng);
  return add(up, x_iga);
}

Tensor mlp_forward(const Tensor& x, const MlpParams& p, double drop, Rng* rng) {
  Tensor xn = layer_norm(x, p.norm.gamma, p.norm.beta);
  Tensor hidden = gelu(linear(xn, p.fc1.weight, p.fc1.bias));
  Tensor out = maybe_dropout(linear(hidden, p.fc2.weight, p.fc2.bias), drop, rng);
  return add(out, x);
}

Tensor patch_embed(const Tensor& p2d, const Tensor& w_embed, const Tensor& pos) {
  if (p2d.dim(p2d.rank() - 2) != pos.dim(0)) {
    throw std::invalid_argument("patch_embed: pose has " +
                                std::to_string(p2d.dim(p2d.rank() - 2)) +
                                " joints, positional table has " + std::to_string(pos.dim(0)));
  }
  return add(matmul(p2d, w_embed), pos);
}

Tensor regress_head(const Tensor& x, const Tensor& w, const Tensor& b) {
  return linear(x, w, b);
}

// --- parameter construction --------------------------------------------------

Tensor xavier_uniform(int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (double& v : t.mutable_values()) v = rng.uniform(-limit, limit);
  return t;
}

LayerNormParams make_layer_norm_params(int c) {
  return {Tensor::full({c}, 1.0), Tensor::zeros({c})};
}

LinearParams make_linear_params(int in, int out, Rng& rng) {
  return {xavier_uniform(in, out, rng), Tensor::zeros({out})};
}

GcnLayerParams make_gcn_params(int c_in, int c_out, Rng& rng) {
  return {xavier_uniform(c_in, c_out, rng), Tensor::zeros({c_out})};
}

AttentionParams make_attention_params(int c, int d_model, int heads, Rng& rng) {
  if (heads < 1 || d_model % heads != 0) {
    throw std::invalid_argument("attention params: d_model " + std::to_string(d_model) +
                                " not divisible by " + std::to_string(heads) + " heads");
  }
  AttentionParams p;
  p.wq = xavier_uniform(c, d_model, rng);
  p.wk = xavier_uniform(c, d_model, rng);
  p.wv = xavier_uniform(c, d_model, rng);
  p.wo = xavier_uniform(d_model, c, rng);
  p.wo_bias = Tensor::zeros({c});
  p.heads = heads;
  return p;
}

IgaBlockParams make_iga_params(int c, int heads, double s_g2a, double s_a2g, Rng& rng) {
  IgaBlockParams p;
  p.norm_in = make_layer_norm_params(c);
  p.gcn1 = make_gcn_params(c, c, rng);
  p.gcn2 = make_gcn_params(c, c, rng);
  p.attn = make_attention_params(c, c, heads, rng);
  p.s_g2a = Tensor::scalar(s_g2a);
  p.s_a2g = Tensor::scalar(s_a2g);
  return p;
}

UmlpParams make_umlp_params(int c, int c_b, Rng& rng) {
  if (c_b >= c) {
    throw std::invalid_argument("umlp params: bottleneck " + std::to_string(c_b) +
                                " must be smaller than channel dim " + std::to_string(c));
  }
  UmlpParams p;
  p.norm = make_layer_norm_params(c);
  p.down = make_linear_params(c, c_b, rng);
  p.mid = make_linear_params(c_b, c_b, rng);
  p.up = make_linear_params(c_b, c, rng);
  return p;
}

MlpParams make_mlp_params(int c, int hidden, Rng& rng) {
  MlpParams p;
  p.norm = make_layer_norm_params(c);
  p.fc1 = make_linear_params(c, hidden, rng);
  p.fc2 = make_linear_params(hidden, c, rng);
  return p;
}

}  // namespace iganet
