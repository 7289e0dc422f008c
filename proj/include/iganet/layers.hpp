#pragma once

#include "iganet/rng.hpp"
#include "iganet/skeleton.hpp"
#include "iganet/tensor.hpp"

namespace iganet {

enum class Activation { Gelu, Relu };

struct LayerNormParams {
  Tensor gamma;  // [C], init 1
  Tensor beta;   // [C], init 0
};

struct LinearParams {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
};

struct GcnLayerParams {
  Tensor weight;  // [C_in x C_out]
  Tensor bias;    // [C_out]
};

// Query/key/value projections are bias-free; the output projection is a full
// linear layer applied by the block (not inside the attention op itself).
struct AttentionParams {
  Tensor wq, wk, wv;  // [C x d_model]
  Tensor wo;          // [d_model x C]
  Tensor wo_bias;     // [C]
  int heads = 1;
};

// One interweaved graph/attention block: a two-layer GCN path and a
// multi-head attention path exchanging features through two scaled
// injections (graph->attention and attention->graph). The scales are
// learnable scalars.
struct IgaBlockParams {
  LayerNormParams norm_in;
  GcnLayerParams gcn1, gcn2;
  AttentionParams attn;
  Tensor s_g2a;  // {1}
  Tensor s_a2g;  // {1}
};

// U-shaped MLP: channel bottleneck down -> mid (same width, inner shortcut)
// -> up, with the outer residual added by the caller-visible op.
struct UmlpParams {
  LayerNormParams norm;
  LinearParams down;  // C -> C_b
  LinearParams mid;   // C_b -> C_b
  LinearParams up;    // C_b -> C
};

// Conventional inverted-bottleneck MLP, used when the uMLP is ablated.
struct MlpParams {
  LayerNormParams norm;
  LinearParams fc1;  // C -> H
  LinearParams fc2;  // H -> C
};

// Dataflow toggles threaded from the model config.
struct IgaOptions {
  bool use_gcn = true;
  bool use_g2a = true;
  bool use_a2g = true;
  Activation gcn_activation = Activation::Gelu;
  // When true, the attention->graph injection feeds the attention output
  // before the graph->attention term is added, instead of after.
  bool a2g_pre_injection = false;
  double dropout = 0.0;  // active only when rng != nullptr (training)
  Rng* rng = nullptr;
};

// sigma(A_norm . X . W + b); X is [J x C_in] or [B x J x C_in].
Tensor gcn_forward(const Tensor& x, const GcnLayerParams& p, const SkeletonGraph& g,
                   bool apply_act, Activation act = Activation::Gelu);

// Multi-head Softmax(Q K^T / sqrt(d)) V with heads merged. No output
// projection; the block applies it after the graph->attention injection.
Tensor multihead_attention(const Tensor& x, const AttentionParams& p);

// Attention with the graph features injected: MHA(x) + s_g2a * f_graph.
Tensor attention_g2a(const Tensor& x, const Tensor& f_graph, const AttentionParams& p,
                     const Tensor& s_g2a);

// Graph path with the global features injected: g1_out + s_a2g * f_global.
Tensor a2g_inject(const Tensor& g1_out, const Tensor& f_global, const Tensor& s_a2g);

// Full block. Pre-norm, both injections, mixed as
// gcn2(X_A2G) + proj(X_G2A) + X  with proj the attention output projection.
Tensor iga_forward(const Tensor& x, const IgaBlockParams& p, const SkeletonGraph& g,
                   const IgaOptions& opt = {});

Tensor umlp_forward(const Tensor& x_iga, const UmlpParams& p, double drop = 0.0,
                    Rng* rng = nullptr);
Tensor mlp_forward(const Tensor& x, const MlpParams& p, double drop = 0.0, Rng* rng = nullptr);

// Per-joint linear lift of 2D keypoints plus a learned positional row per joint.
Tensor patch_embed(const Tensor& p2d, const Tensor& w_embed, const Tensor& pos);

// Per-joint linear map to root-relative millimeter offsets.
Tensor regress_head(const Tensor& x, const Tensor& w, const Tensor& b);

// --- parameter construction -------------------------------------------------
// Xavier-uniform for weight matrices, zeros for biases, gamma 1 / beta 0.

Tensor xavier_uniform(int fan_in, int fan_out, Rng& rng);
LayerNormParams make_layer_norm_params(int c);
LinearParams make_linear_params(int in, int out, Rng& rng);
GcnLayerParams make_gcn_params(int c_in, int c_out, Rng& rng);
AttentionParams make_attention_params(int c, int d_model, int heads, Rng& rng);
IgaBlockParams make_iga_params(int c, int heads, double s_g2a, double s_a2g, Rng& rng);
UmlpParams make_umlp_params(int c, int c_b, Rng& rng);
MlpParams make_mlp_params(int c, int hidden, Rng& rng);

}  // namespace iganet
