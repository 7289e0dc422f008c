#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "iganet/layers.hpp"
#include "iganet/pose.hpp"
#include "iganet/skeleton.hpp"
#include "iganet/tensor.hpp"

namespace iganet {

struct ModelConfig {
  int joints = 17;
  int channels = 256;      // C
  int heads = 8;
  int bottleneck = 128;    // uMLP C_b
  int blocks = 3;          // N
  double s_g2a = 0.5;
  double s_a2g = 0.8;
  AdjacencyNorm adjacency_norm = AdjacencyNorm::Row;
  bool use_gcn = true;
  bool use_g2a = true;
  bool use_a2g = true;
  bool use_umlp = true;
  Activation gcn_activation = Activation::Gelu;
  int mlp_hidden = 0;  // width of the conventional MLP when use_umlp=false; 0 -> 4*channels
  bool a2g_pre_injection = false;
  double dropout = 0.0;

  int effective_mlp_hidden() const { return mlp_hidden > 0 ? mlp_hidden : 4 * channels; }
  void validate() const;

  static ModelConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct BlockParams {
  IgaBlockParams iga;
  std::optional<UmlpParams> umlp;  // present when use_umlp
  std::optional<MlpParams> mlp;    // present when !use_umlp
};

struct ModelParams {
  Tensor embed_weight;  // [2 x C]
  Tensor pos;           // [J x C]
  std::vector<BlockParams> blocks;
  Tensor head_weight;  // [C x 3]
  Tensor head_bias;    // [3]
};

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
ModelParams zero_params(const ModelConfig& cfg);  // allocated shapes, all zeros

// Visits every parameter tensor in a fixed canonical order (also the
// checkpoint array order). Names look like "blocks.0.iga.gcn1.weight".
void visit_params(ModelParams& p, const std::function<void(const std::string&, Tensor&)>& fn);
void visit_params(const ModelParams& p,
                  const std::function<void(const std::string&, const Tensor&)>& fn);

ModelParams attach_params(const ModelParams& p, Tape& tape);  // watch every tensor
ModelParams clone_params(const ModelParams& p);               // deep copy

std::int64_t count_params(const ModelConfig& cfg);  // closed form

struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;
};

// patch_embed -> N x (IGA -> MLP) -> regression head.
// p2d is [J x 2] or [B x J x 2]; the result has matching rank with last dim 3.
Tensor forward(const Tensor& p2d, const ModelParams& params, const ModelConfig& cfg,
               const SkeletonGraph& graph, const ForwardOptions& opt = {});

Pose3d predict_pose(const Pose2d& pose, const ModelParams& params, const ModelConfig& cfg,
                    const SkeletonGraph& graph);

// --- checkpoints -------------------------------------------------------------
// Self-describing binary: magic, format version, the config as embedded JSON,
// then named flat float64 arrays with shapes. See docs/checkpoint_format.md.

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckpointVersionError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CheckpointShapeError : CheckpointError {
  using CheckpointError::CheckpointError;
};
struct CheckpointCorruptError : CheckpointError {
  using CheckpointError::CheckpointError;
};

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

void save_params(const std::string& path, const ModelConfig& cfg, const ModelParams& params);
Checkpoint load_params(const std::string& path);

}  // namespace iganet
