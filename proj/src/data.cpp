#include "iganet/data.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace iganet {

namespace {

bool finite_pose(const Pose2d& p) {
  for (const auto& j : p)
    if (!std::isfinite(j.x) || !std::isfinite(j.y)) return false;
  return true;
}

bool finite_pose(const Pose3d& p) {
  for (const auto& j : p)
    if (!std::isfinite(j.x) || !std::isfinite(j.y) || !std::isfinite(j.z)) return false;
  return true;
}

}  // namespace

Dataset load_dataset(const std::string& path, const SkeletonGraph& graph) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_dataset: cannot open " + path);

  std::string header;
  if (!std::getline(in, header)) throw std::runtime_error("load_dataset: " + path + " is empty");
  std::istringstream hs(header);
  std::string tag, jfield, gfield;
  hs >> tag >> jfield >> gfield;
  if (tag != "#pose-v1" || jfield.rfind("J=", 0) != 0 || gfield.rfind("graph=", 0) != 0) {
    throw std::runtime_error("load_dataset: " + path + " line 1: expected header '#pose-v1 J=<n> graph=<name>'");
  }
  Dataset ds;
  ds.joints = std::stoi(jfield.substr(2));
  ds.graph_name = gfield.substr(6);
  if (ds.joints != graph.num_joints) {
    throw std::runtime_error("load_dataset: file declares J=" + std::to_string(ds.joints) +
                             " but graph '" + graph.name + "' has " +
                             std::to_string(graph.num_joints) + " joints");
  }

  std::string line;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_dataset: " + path + " line " + std::to_string(lineno) +
                               ": bad json: " + e.what());
    }
    PoseSample s;
    try {
      const auto& in2d = j.at("in");
      if (static_cast<int>(in2d.size()) != ds.joints) {
        throw std::runtime_error("'in' has " + std::to_string(in2d.size()) + " joints, expected " +
                                 std::to_string(ds.joints));
      }
      for (const auto& row : in2d) s.input2d.push_back({row.at(0).get<double>(), row.at(1).get<double>()});
      if (j.contains("out")) {
        const auto& out3d = j.at("out");
        if (static_cast<int>(out3d.size()) != ds.joints) {
          throw std::runtime_error("'out' has " + std::to_string(out3d.size()) +
                                   " joints, expected " + std::to_string(ds.joints));
        }
        for (const auto& row : out3d) {
          s.target3d.push_back({row.at(0).get<double>(), row.at(1).get<double>(), row.at(2).get<double>()});
        }
      } else {
        s.has_target = false;
        s.target3d.assign(static_cast<std::size_t>(ds.joints), Joint3{});
      }
      s.action = j.value("action", std::string());
      s.subject = j.value("subject", std::string());
    } catch (const std::exception& e) {
      throw std::runtime_error("load_dataset: " + path + " line " + std::to_string(lineno) +
                               ": malformed sample: " + e.what());
    }

    if (!finite_pose(s.input2d) || !finite_pose(s.target3d)) {
      throw std::runtime_error("load_dataset: " + path + " line " + std::to_string(lineno) +
                               ": non-finite coordinate");
    }
    if (s.has_target) {
      const Joint3 root = s.target3d[static_cast<std::size_t>(graph.root_index)];
      if (root.x != 0.0 || root.y != 0.0 || root.z != 0.0) {
        for (auto& jt : s.target3d) {
          jt.x -= root.x;
          jt.y -= root.y;
          jt.z -= root.z;
        }
        std::ostringstream w;
        w << "line " << lineno << ": target root offset (" << root.x << ", " << root.y << ", "
          << root.z << ") re-centered";
        ds.warnings.push_back(w.str());
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("save_dataset: cannot open " + path + " for writing");
  os << "#pose-v1 J=" << ds.joints << " graph=" << ds.graph_name << '\n';
  for (const PoseSample& s : ds.samples) {
    nlohmann::json j;
    auto& in2d = j["in"] = nlohmann::json::array();
    for (const auto& jt : s.input2d) in2d.push_back({jt.x, jt.y});
    if (s.has_target) {
      auto& out3d = j["out"] = nlohmann::json::array();
      for (const auto& jt : s.target3d) out3d.push_back({jt.x, jt.y, jt.z});
    }
    if (!s.action.empty()) j["action"] = s.action;
    if (!s.subject.empty()) j["subject"] = s.subject;
    os << j.dump() << '\n';
  }
  if (!os) throw std::runtime_error("save_dataset: write to " + path + " failed");
}

std::vector<int> kinematic_parents(const SkeletonGraph& graph) {
  const int j = graph.num_joints;
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(j));
  for (const auto& [u, v] : graph.edges) {
    adj[static_cast<std::size_t>(u)].push_back(v);
    adj[static_cast<std::size_t>(v)].push_back(u);
  }
  for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());

  std::vector<int> parent(static_cast<std::size_t>(j), -2);
  std::deque<int> queue{graph.root_index};
  parent[static_cast<std::size_t>(graph.root_index)] = -1;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    for (int v : adj[static_cast<std::size_t>(u)]) {
      if (parent[static_cast<std::size_t>(v)] == -2) {
        parent[static_cast<std::size_t>(v)] = u;
        queue.push_back(v);
      }
    }
  }
  for (int i = 0; i < j; ++i) {
    if (parent[static_cast<std::size_t>(i)] == -2) {
      throw std::invalid_argument("kinematic_parents: joint " + std::to_string(i) +
                                  " is not reachable from the root");
    }
  }
  return parent;
}

SynthSpec default_synth_spec(const SkeletonGraph& graph) {
  SynthSpec spec;
  const std::size_t j = static_cast<std::size_t>(graph.num_joints);
  spec.length_mm.assign(j, 300.0);
  spec.base_dir.assign(j, {0.0, -1.0, 0.35});
  spec.length_mm[static_cast<std::size_t>(graph.root_index)] = 0.0;

  if (graph.name == "h36m17" && graph.num_joints == 17) {
    spec.length_mm = {0,   132, 443, 454, 132, 443, 454, 233, 257,
                      121, 115, 151, 279, 252, 151, 279, 252};
    spec.base_dir = {{0, 0, 0},           // hip (root)
                     {-1, 0, 0.35},       // right_hip
                     {0, -1, 0.35},       // right_knee
                     {0, -1, 0.35},       // right_ankle
                     {1, 0, 0.35},        // left_hip
                     {0, -1, 0.35},       // left_knee
                     {0, -1, 0.35},       // left_ankle
                     {0, 1, 0.35},        // spine
                     {0, 1, 0.35},        // thorax
                     {0, 1, 0.35},        // neck
                     {0, 1, 0.35},        // head
                     {1, 0, 0.35},        // left_shoulder
                     {0.25, -1, 0.35},    // left_elbow
                     {0, -1, 0.35},       // left_wrist
                     {-1, 0, 0.35},       // right_shoulder
                     {-0.25, -1, 0.35},   // right_elbow
                     {0, -1, 0.35}};      // right_wrist
  } else {
    // generic fallback: spread bones around while keeping the depth tilt
    for (std::size_t i = 0; i < j; ++i) {
      const double a = 0.9 * static_cast<double>(i);
      spec.base_dir[i] = {std::sin(a), -std::cos(a), 0.35};
    }
  }
  return spec;
}

Dataset synth_generate(int n, std::uint64_t seed, const SkeletonGraph& graph,
                       const SynthSpec* spec_in) {
  if (n < 1) throw std::invalid_argument("synth_generate: need n >= 1");
  const SynthSpec spec = spec_in ? *spec_in : default_synth_spec(graph);
  const std::size_t j = static_cast<std::size_t>(graph.num_joints);
  if (spec.length_mm.size() != j || spec.base_dir.size() != j) {
    throw std::invalid_argument("synth_generate: spec tables do not match joint count");
  }
  const std::vector<int> parent = kinematic_parents(graph);

  // generation order: parents before children
  std::vector<int> order;
  order.reserve(j);
  {
    std::deque<int> queue{graph.root_index};
    std::vector<char> seen(j, 0);
    seen[static_cast<std::size_t>(graph.root_index)] = 1;
    while (!queue.empty()) {
      const int u = queue.front();
      queue.pop_front();
      order.push_back(u);
      for (int v = 0; v < graph.num_joints; ++v) {
        if (!seen[static_cast<std::size_t>(v)] && parent[static_cast<std::size_t>(v)] == u) {
          seen[static_cast<std::size_t>(v)] = 1;
          queue.push_back(v);
        }
      }
    }
  }

  Rng rng(seed);
  Dataset ds;
  ds.graph_name = graph.name;
  ds.joints = graph.num_joints;
  ds.samples.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    Pose3d pose(j);
    for (int joint : order) {
      const std::size_t ji = static_cast<std::size_t>(joint);
      if (joint == graph.root_index) {
        pose[ji] = {0.0, 0.0, 0.0};
        continue;
      }
      const auto& base = spec.base_dir[ji];
      double dx = base[0] + rng.uniform(-spec.jitter, spec.jitter);
      double dy = base[1] + rng.uniform(-spec.jitter, spec.jitter);
      double dz = base[2] + rng.uniform(-spec.jitter, spec.jitter);
      const double norm = std::sqrt(dx * dx + dy * dy + dz * dz);
      const double len = spec.length_mm[ji];
      const Joint3& par = pose[static_cast<std::size_t>(parent[ji])];
      pose[ji] = {par.x + len * dx / norm, par.y + len * dy / norm, par.z + len * dz / norm};
    }
    PoseSample sample;
    sample.target3d = pose;  // root-relative by construction (root at origin)
    sample.input2d.resize(j);
    for (std::size_t ji = 0; ji < j; ++ji) {
      sample.input2d[ji] = {pose[ji].x * spec.scale_2d, pose[ji].y * spec.scale_2d};
    }
    sample.action = "synth";
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

void augment_flip(std::vector<PoseSample>& batch, const SkeletonGraph& graph, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw std::invalid_argument("augment_flip: p must be in [0, 1]");
  for (PoseSample& s : batch) {
    if (!rng.bernoulli(p)) continue;
    s.input2d = horizontal_flip(s.input2d, graph);
    if (s.has_target) s.target3d = horizontal_flip(s.target3d, graph);
  }
}

Tensor batch_inputs(const std::vector<PoseSample>& samples, const std::vector<int>& idx) {
  if (idx.empty()) throw std::invalid_argument("batch_inputs: empty index list");
  const int j = static_cast<int>(samples[static_cast<std::size_t>(idx[0])].input2d.size());
  std::vector<double> data;
  data.reserve(idx.size() * static_cast<std::size_t>(j) * 2);
  for (int i : idx) {
    for (const auto& jt : samples[static_cast<std::size_t>(i)].input2d) {
      data.push_back(jt.x);
      data.push_back(jt.y);
    }
  }
  return Tensor({static_cast<int>(idx.size()), j, 2}, std::move(data));
}

Tensor batch_targets(const std::vector<PoseSample>& samples, const std::vector<int>& idx) {
  if (idx.empty()) throw std::invalid_argument("batch_targets: empty index list");
  const int j = static_cast<int>(samples[static_cast<std::size_t>(idx[0])].target3d.size());
  std::vector<double> data;
  data.reserve(idx.size() * static_cast<std::size_t>(j) * 3);
  for (int i : idx) {
    for (const auto& jt : samples[static_cast<std::size_t>(i)].target3d) {
      data.push_back(jt.x);
      data.push_back(jt.y);
      data.push_back(jt.z);
    }
  }
  return Tensor({static_cast<int>(idx.size()), j, 3}, std::move(data));
}

std::vector<Pose3d> tensor_to_poses(const Tensor& y) {
  if (y.dim(y.rank() - 1) != 3 || (y.rank() != 2 && y.rank() != 3)) {
    throw std::invalid_argument("tensor_to_poses: expected [.. x J x 3], got " +
                                shape_str(y.shape()));
  }
  const int b = y.rank() == 3 ? y.dim(0) : 1;
  const int j = y.dim(y.rank() - 2);
  const auto& v = y.values();
  std::vector<Pose3d> out(static_cast<std::size_t>(b));
  std::size_t k = 0;
  for (int i = 0; i < b; ++i) {
    out[static_cast<std::size_t>(i)].resize(static_cast<std::size_t>(j));
    for (int jj = 0; jj < j; ++jj) {
      out[static_cast<std::size_t>(i)][static_cast<std::size_t>(jj)] = {v[k], v[k + 1], v[k + 2]};
      k += 3;
    }
  }
  return out;
}

}  // namespace iganet
