#include "iganet/skeleton.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace iganet {

bool SkeletonGraph::is_flip_listed(int joint) const {
  for (const auto& [l, r] : flip_pairs) {
    if (l == joint || r == joint) return true;
  }
  return false;
}

std::vector<double> normalize_adjacency(const std::vector<double>& a, int num_joints,
                                        AdjacencyNorm norm) {
  const std::size_t j = static_cast<std::size_t>(num_joints);
  if (a.size() != j * j) {
    throw std::invalid_argument("normalize_adjacency: matrix size does not match joint count");
  }
  for (std::size_t r = 0; r < j; ++r) {
    if (a[r * j + r] != 0.0) {
      throw std::invalid_argument("normalize_adjacency: adjacency has a self-loop at joint " +
                                  std::to_string(r));
    }
    for (std::size_t c = 0; c < j; ++c) {
      const double v = a[r * j + c];
      if (v != 0.0 && v != 1.0) {
        throw std::invalid_argument("normalize_adjacency: entries must be 0 or 1");
      }
      if (v != a[c * j + r]) {
        throw std::invalid_argument("normalize_adjacency: adjacency is not symmetric at (" +
                                    std::to_string(r) + "," + std::to_string(c) + ")");
      }
    }
  }

  std::vector<double> tilde(a);
  for (std::size_t r = 0; r < j; ++r) tilde[r * j + r] = 1.0;  // self-connections
  std::vector<double> degree(j, 0.0);
  for (std::size_t r = 0; r < j; ++r) {
    for (std::size_t c = 0; c < j; ++c) degree[r] += tilde[r * j + c];
  }
  std::vector<double> out(j * j, 0.0);
  if (norm == AdjacencyNorm::Row) {
    for (std::size_t r = 0; r < j; ++r)
      for (std::size_t c = 0; c < j; ++c) out[r * j + c] = tilde[r * j + c] / degree[r];
  } else {
    for (std::size_t r = 0; r < j; ++r)
      for (std::size_t c = 0; c < j; ++c)
        out[r * j + c] = tilde[r * j + c] / std::sqrt(degree[r] * degree[c]);
  }
  return out;
}

SkeletonGraph make_graph(std::string name, int num_joints, std::vector<std::pair<int, int>> edges,
                         std::vector<std::pair<int, int>> flip_pairs, int root_index,
                         AdjacencyNorm norm, std::vector<std::string> joint_names) {
  if (num_joints < 1) throw std::invalid_argument("make_graph: need at least one joint");
  if (root_index < 0 || root_index >= num_joints) {
    throw std::invalid_argument("make_graph: root index out of range");
  }
  const std::size_t j = static_cast<std::size_t>(num_joints);
  std::vector<double> a(j * j, 0.0);
  for (const auto& [u, v] : edges) {
    if (u < 0 || u >= num_joints || v < 0 || v >= num_joints || u == v) {
      throw std::invalid_argument("make_graph: bad edge (" + std::to_string(u) + "," +
                                  std::to_string(v) + ")");
    }
    a[static_cast<std::size_t>(u) * j + static_cast<std::size_t>(v)] = 1.0;
    a[static_cast<std::size_t>(v) * j + static_cast<std::size_t>(u)] = 1.0;
  }

  // flip pairs must be a pairwise involution: no joint appears twice
  std::vector<int> seen(j, 0);
  for (const auto& [l, r] : flip_pairs) {
    if (l < 0 || l >= num_joints || r < 0 || r >= num_joints || l == r) {
      throw std::invalid_argument("make_graph: bad flip pair (" + std::to_string(l) + "," +
                                  std::to_string(r) + ")");
    }
    if (seen[static_cast<std::size_t>(l)]++ || seen[static_cast<std::size_t>(r)]++) {
      throw std::invalid_argument("make_graph: joint listed in more than one flip pair");
    }
  }
  if (!joint_names.empty() && static_cast<int>(joint_names.size()) != num_joints) {
    throw std::invalid_argument("make_graph: joint name count does not match joint count");
  }

  SkeletonGraph g;
  g.name = std::move(name);
  g.num_joints = num_joints;
  g.joint_names = std::move(joint_names);
  g.edges = std::move(edges);
  g.adj_norm = normalize_adjacency(a, num_joints, norm);
  g.flip_pairs = std::move(flip_pairs);
  g.root_index = root_index;
  g.norm = norm;
  return g;
}

SkeletonGraph build_h36m_17(AdjacencyNorm norm) {
  std::vector<std::string> names = {
      "hip",          "right_hip",   "right_knee",  "right_ankle", "left_hip",      "left_knee",
      "left_ankle",   "spine",       "thorax",      "neck",        "head",          "left_shoulder",
      "left_elbow",   "left_wrist",  "right_shoulder", "right_elbow", "right_wrist"};
  std::vector<std::pair<int, int>> edges = {
      {0, 1}, {1, 2}, {2, 3},                    // right leg
      {0, 4}, {4, 5}, {5, 6},                    // left leg
      {0, 7}, {7, 8}, {8, 9}, {9, 10},           // spine chain
      {8, 11}, {11, 12}, {12, 13},               // left arm
      {8, 14}, {14, 15}, {15, 16}};              // right arm
  std::vector<std::pair<int, int>> flips = {{4, 1}, {5, 2}, {6, 3}, {11, 14}, {12, 15}, {13, 16}};
  return make_graph("h36m17", 17, std::move(edges), std::move(flips), 0, norm, std::move(names));
}

SkeletonGraph parse_graph_json(const std::string& text, AdjacencyNorm norm) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("graph json: ") + e.what());
  }
  int joints = 0;
  std::vector<std::string> names;
  if (doc.at("joints").is_number_integer()) {
    joints = doc.at("joints").get<int>();
  } else {
    names = doc.at("joints").get<std::vector<std::string>>();
    joints = static_cast<int>(names.size());
  }
  std::vector<std::pair<int, int>> edges;
  for (const auto& e : doc.at("edges")) edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  std::vector<std::pair<int, int>> flips;
  if (doc.contains("flip_pairs")) {
    for (const auto& p : doc.at("flip_pairs")) flips.emplace_back(p.at(0).get<int>(), p.at(1).get<int>());
  }
  const int root = doc.value("root", 0);
  std::string name = doc.value("name", std::string("custom"));
  return make_graph(std::move(name), joints, std::move(edges), std::move(flips), root, norm,
                    std::move(names));
}

SkeletonGraph load_graph(const std::string& path, AdjacencyNorm norm) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_graph: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_graph_json(buf.str(), norm);
}

namespace {

template <class Pose>
Pose flip_impl(const Pose& pose, const SkeletonGraph& graph) {
  if (static_cast<int>(pose.size()) != graph.num_joints) {
    throw std::invalid_argument("horizontal_flip: pose has " + std::to_string(pose.size()) +
                                " joints, graph expects " + std::to_string(graph.num_joints));
  }
  Pose out(pose);
  for (auto& jt : out) jt.x = -jt.x;
  for (const auto& [l, r] : graph.flip_pairs) {
    std::swap(out[static_cast<std::size_t>(l)], out[static_cast<std::size_t>(r)]);
  }
  return out;
}

}  // namespace

Pose2d horizontal_flip(const Pose2d& pose, const SkeletonGraph& graph) {
  return flip_impl(pose, graph);
}

Pose3d horizontal_flip(const Pose3d& pose, const SkeletonGraph& graph) {
  return flip_impl(pose, graph);
}

}  // namespace iganet
