#include "iganet/model.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

namespace iganet {

void ModelConfig::validate() const {
  if (joints < 1) throw std::invalid_argument("config: joints must be >= 1");
  if (blocks < 1) throw std::invalid_argument("config: blocks must be >= 1");
  if (channels < 1 || heads < 1 || channels % heads != 0) {
    throw std::invalid_argument("config: channels (" + std::to_string(channels) +
                                ") must be divisible by heads (" + std::to_string(heads) + ")");
  }
  if (use_umlp && (bottleneck < 1 || bottleneck >= channels)) {
    throw std::invalid_argument("config: bottleneck must be in [1, channels)");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("config: dropout must be in [0, 1)");
}

namespace {

std::string activation_name(Activation a) { return a == Activation::Gelu ? "gelu" : "relu"; }

Activation activation_from(const std::string& s) {
  if (s == "gelu") return Activation::Gelu;
  if (s == "relu") return Activation::Relu;
  throw std::invalid_argument("config: unknown activation '" + s + "'");
}

std::string adjacency_name(AdjacencyNorm n) {
  return n == AdjacencyNorm::Row ? "row" : "symmetric";
}

AdjacencyNorm adjacency_from(const std::string& s) {
  if (s == "row") return AdjacencyNorm::Row;
  if (s == "symmetric") return AdjacencyNorm::Symmetric;
  throw std::invalid_argument("config: unknown adjacency normalization '" + s + "'");
}

}  // namespace

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.joints = j.value("joints", c.joints);
  c.channels = j.value("channels", c.channels);
  c.heads = j.value("heads", c.heads);
  c.bottleneck = j.value("bottleneck", c.bottleneck);
  c.blocks = j.value("blocks", c.blocks);
  c.s_g2a = j.value("s_g2a", c.s_g2a);
  c.s_a2g = j.value("s_a2g", c.s_a2g);
  if (j.contains("adjacency_norm")) c.adjacency_norm = adjacency_from(j.at("adjacency_norm"));
  c.use_gcn = j.value("use_gcn", c.use_gcn);
  c.use_g2a = j.value("use_g2a", c.use_g2a);
  c.use_a2g = j.value("use_a2g", c.use_a2g);
  c.use_umlp = j.value("use_umlp", c.use_umlp);
  if (j.contains("gcn_activation")) c.gcn_activation = activation_from(j.at("gcn_activation"));
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  c.a2g_pre_injection = j.value("a2g_pre_injection", c.a2g_pre_injection);
  c.dropout = j.value("dropout", c.dropout);
  c.validate();
  return c;
}

nlohmann::json ModelConfig::to_json() const {
  return nlohmann::json{{"joints", joints},
                        {"channels", channels},
                        {"heads", heads},
                        {"bottleneck", bottleneck},
                        {"blocks", blocks},
                        {"s_g2a", s_g2a},
                        {"s_a2g", s_a2g},
                        {"adjacency_norm", adjacency_name(adjacency_norm)},
                        {"use_gcn", use_gcn},
                        {"use_g2a", use_g2a},
                        {"use_a2g", use_a2g},
                        {"use_umlp", use_umlp},
                        {"gcn_activation", activation_name(gcn_activation)},
                        {"mlp_hidden", mlp_hidden},
                        {"a2g_pre_injection", a2g_pre_injection},
                        {"dropout", dropout}};
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ModelParams p;
  p.embed_weight = xavier_uniform(2, cfg.channels, rng);
  p.pos = Tensor({cfg.joints, cfg.channels});
  for (double& v : p.pos.mutable_values()) v = rng.normal(0.0, 0.02);
  for (int i = 0; i < cfg.blocks; ++i) {
    BlockParams b;
    b.iga = make_iga_params(cfg.channels, cfg.heads, cfg.s_g2a, cfg.s_a2g, rng);
    if (cfg.use_umlp) {
      b.umlp = make_umlp_params(cfg.channels, cfg.bottleneck, rng);
    } else {
      b.mlp = make_mlp_params(cfg.channels, cfg.effective_mlp_hidden(), rng);
    }
    p.blocks.push_back(std::move(b));
  }
  p.head_weight = xavier_uniform(cfg.channels, 3, rng);
  p.head_bias = Tensor::zeros({3});
  return p;
}

ModelParams zero_params(const ModelConfig& cfg) {
  ModelParams p = init_params(cfg, 0);
  visit_params(p, [](const std::string&, Tensor& t) {
    for (double& v : t.mutable_values()) v = 0.0;
  });
  return p;
}

namespace {

template <class Params, class Fn>
void visit_impl(Params& p, const Fn& fn) {
  fn("embed.weight", p.embed_weight);
  fn("embed.pos", p.pos);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    const std::string prefix = "blocks." + std::to_string(i) + ".";
    auto& b = p.blocks[i];
    fn(prefix + "iga.norm_in.gamma", b.iga.norm_in.gamma);
    fn(prefix + "iga.norm_in.beta", b.iga.norm_in.beta);
    fn(prefix + "iga.gcn1.weight", b.iga.gcn1.weight);
    fn(prefix + "iga.gcn1.bias", b.iga.gcn1.bias);
    fn(prefix + "iga.gcn2.weight", b.iga.gcn2.weight);
    fn(prefix + "iga.gcn2.bias", b.iga.gcn2.bias);
    fn(prefix + "iga.attn.wq", b.iga.attn.wq);
    fn(prefix + "iga.attn.wk", b.iga.attn.wk);
    fn(prefix + "iga.attn.wv", b.iga.attn.wv);
    fn(prefix + "iga.attn.wo", b.iga.attn.wo);
    fn(prefix + "iga.attn.wo_bias", b.iga.attn.wo_bias);
    fn(prefix + "iga.s_g2a", b.iga.s_g2a);
    fn(prefix + "iga.s_a2g", b.iga.s_a2g);
    if (b.umlp) {
      fn(prefix + "umlp.norm.gamma", b.umlp->norm.gamma);
      fn(prefix + "umlp.norm.beta", b.umlp->norm.beta);
      fn(prefix + "umlp.down.weight", b.umlp->down.weight);
      fn(prefix + "umlp.down.bias", b.umlp->down.bias);
      fn(prefix + "umlp.mid.weight", b.umlp->mid.weight);
      fn(prefix + "umlp.mid.bias", b.umlp->mid.bias);
      fn(prefix + "umlp.up.weight", b.umlp->up.weight);
      fn(prefix + "umlp.up.bias", b.umlp->up.bias);
    }
    if (b.mlp) {
      fn(prefix + "mlp.norm.gamma", b.mlp->norm.gamma);
      fn(prefix + "mlp.norm.beta", b.mlp->norm.beta);
      fn(prefix + "mlp.fc1.weight", b.mlp->fc1.weight);
      fn(prefix + "mlp.fc1.bias", b.mlp->fc1.bias);
      fn(prefix + "mlp.fc2.weight", b.mlp->fc2.weight);
      fn(prefix + "mlp.fc2.bias", b.mlp->fc2.bias);
    }
  }
  fn("head.weight", p.head_weight);
  fn("head.bias", p.head_bias);
}

}  // namespace

void visit_params(ModelParams& p, const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_impl(p, fn);
}

void visit_params(const ModelParams& p,
                  const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit_impl(p, fn);
}

ModelParams attach_params(const ModelParams& p, Tape& tape) {
  ModelParams out = p;  // shallow copies sharing storage
  visit_params(out, [&tape](const std::string& name, Tensor& t) { t = tape.watch(t, name); });
  return out;
}

ModelParams clone_params(const ModelParams& p) {
  ModelParams out = p;
  visit_params(out, [](const std::string&, Tensor& t) { t = t.clone(); });
  return out;
}

std::int64_t count_params(const ModelConfig& cfg) {
  const std::int64_t c = cfg.channels;
  const std::int64_t j = cfg.joints;
  const std::int64_t cb = cfg.bottleneck;
  const std::int64_t h = cfg.effective_mlp_hidden();

  const std::int64_t embed = 2 * c + j * c;
  const std::int64_t iga = 2 * c            // entry norm
                           + 2 * (c * c + c)  // two GCN layers
                           + 3 * c * c        // q, k, v projections
                           + c * c + c        // output projection + bias
                           + 2;               // injection scales
  const std::int64_t ffn = cfg.use_umlp
                               ? 2 * c + (c * cb + cb) + (cb * cb + cb) + (cb * c + c)
                               : 2 * c + (c * h + h) + (h * c + c);
  const std::int64_t head = c * 3 + 3;
  return embed + cfg.blocks * (iga + ffn) + head;
}

Tensor forward(const Tensor& p2d, const ModelParams& params, const ModelConfig& cfg,
               const SkeletonGraph& graph, const ForwardOptions& opt) {
  if (graph.num_joints != cfg.joints) {
    throw std::invalid_argument("forward: graph has " + std::to_string(graph.num_joints) +
                                " joints, config expects " + std::to_string(cfg.joints));
  }
  if (p2d.dim(p2d.rank() - 1) != 2 || p2d.dim(p2d.rank() - 2) != cfg.joints) {
    throw std::invalid_argument("forward: input " + shape_str(p2d.shape()) +
                                " is not [.. x " + std::to_string(cfg.joints) + " x 2]");
  }
  if (static_cast<int>(params.blocks.size()) != cfg.blocks) {
    throw std::invalid_argument("forward: params have " + std::to_string(params.blocks.size()) +
                                " blocks, config expects " + std::to_string(cfg.blocks));
  }

  IgaOptions iga_opt;
  iga_opt.use_gcn = cfg.use_gcn;
  iga_opt.use_g2a = cfg.use_g2a;
  iga_opt.use_a2g = cfg.use_a2g;
  iga_opt.gcn_activation = cfg.gcn_activation;
  iga_opt.a2g_pre_injection = cfg.a2g_pre_injection;
  iga_opt.dropout = opt.training ? cfg.dropout : 0.0;
  iga_opt.rng = opt.training ? opt.rng : nullptr;

  Tensor x = patch_embed(p2d, params.embed_weight, params.pos);
  for (const BlockParams& b : params.blocks) {
    x = iga_forward(x, b.iga, graph, iga_opt);
    if (cfg.use_umlp) {
      x = umlp_forward(x, *b.umlp, iga_opt.dropout, iga_opt.rng);
    } else {
      x = mlp_forward(x, *b.mlp, iga_opt.dropout, iga_opt.rng);
    }
  }
  return regress_head(x, params.head_weight, params.head_bias);
}

Pose3d predict_pose(const Pose2d& pose, const ModelParams& params, const ModelConfig& cfg,
                    const SkeletonGraph& graph) {
  std::vector<double> in;
  in.reserve(pose.size() * 2);
  for (const Joint2& jt : pose) {
    in.push_back(jt.x);
    in.push_back(jt.y);
  }
  Tensor x({static_cast<int>(pose.size()), 2}, std::move(in));
  Tensor y = forward(x, params, cfg, graph);
  Pose3d out(pose.size());
  const auto& v = y.values();
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = {v[j * 3], v[j * 3 + 1], v[j * 3 + 2]};
  }
  return out;
}

// --- checkpoint io -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'I', 'G', 'N', 'P', 'O', 'S', 'E', '1'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw CheckpointCorruptError("checkpoint: unexpected end of file");
  return v;
}

}  // namespace

void save_params(const std::string& path, const ModelConfig& cfg, const ModelParams& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_params: cannot open " + path + " for writing");

  os.write(kMagic, sizeof(kMagic));
  write_pod(os, kVersion);
  const std::string cfg_json = cfg.to_json().dump();
  write_pod(os, static_cast<std::uint64_t>(cfg_json.size()));
  os.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));

  std::uint64_t count = 0;
  visit_params(params, [&count](const std::string&, const Tensor&) { ++count; });
  write_pod(os, count);

  visit_params(params, [&os](const std::string& name, const Tensor& t) {
    write_pod(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(os, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) write_pod(os, static_cast<std::uint64_t>(t.dim(i)));
    os.write(reinterpret_cast<const char*>(t.values().data()),
             static_cast<std::streamsize>(t.values().size() * sizeof(double)));
  });
  if (!os) throw std::runtime_error("save_params: write to " + path + " failed");
}

Checkpoint load_params(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_params: cannot open " + path);

  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointCorruptError("checkpoint: bad magic bytes in " + path);
  }
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kVersion) {
    throw CheckpointVersionError("checkpoint: format version " + std::to_string(version) +
                                 " is not supported (expected " + std::to_string(kVersion) + ")");
  }
  const auto json_len = read_pod<std::uint64_t>(is);
  std::string cfg_json(json_len, '\0');
  is.read(cfg_json.data(), static_cast<std::streamsize>(json_len));
  if (!is) throw CheckpointCorruptError("checkpoint: truncated config block");

  Checkpoint ckpt;
  try {
    ckpt.config = ModelConfig::from_json(nlohmann::json::parse(cfg_json));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointCorruptError(std::string("checkpoint: bad config json: ") + e.what());
  }
  ckpt.params = zero_params(ckpt.config);

  const auto n_arrays = read_pod<std::uint64_t>(is);
  std::uint64_t expected = 0;
  visit_params(ckpt.params, [&expected](const std::string&, const Tensor&) { ++expected; });
  if (n_arrays != expected) {
    throw CheckpointShapeError("checkpoint: has " + std::to_string(n_arrays) +
                               " arrays, config implies " + std::to_string(expected));
  }

  // arrays are stored in canonical visitation order
  std::vector<std::pair<std::string, Tensor*>> slots;
  visit_params(ckpt.params,
               [&slots](const std::string& name, Tensor& t) { slots.emplace_back(name, &t); });

  for (auto& [name, tensor] : slots) {
    const auto name_len = read_pod<std::uint32_t>(is);
    std::string file_name(name_len, '\0');
    is.read(file_name.data(), name_len);
    if (!is) throw CheckpointCorruptError("checkpoint: truncated array header");
    if (file_name != name) {
      throw CheckpointShapeError("checkpoint: expected array '" + name + "', file has '" +
                                 file_name + "'");
    }
    const auto rank = read_pod<std::uint32_t>(is);
    Shape dims;
    for (std::uint32_t i = 0; i < rank; ++i) dims.push_back(static_cast<int>(read_pod<std::uint64_t>(is)));
    if (dims != tensor->shape()) {
      throw CheckpointShapeError("checkpoint: array '" + name + "' has shape " + shape_str(dims) +
                                 ", config implies " + shape_str(tensor->shape()));
    }
    auto& vals = tensor->mutable_values();
    is.read(reinterpret_cast<char*>(vals.data()),
            static_cast<std::streamsize>(vals.size() * sizeof(double)));
    if (!is) throw CheckpointCorruptError("checkpoint: truncated array data for '" + name + "'");
  }
  return ckpt;
}

}  // namespace iganet
