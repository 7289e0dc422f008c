#pragma once

#include <string>
#include <utility>
#include <vector>

#include "iganet/pose.hpp"

namespace iganet {

enum class AdjacencyNorm { Row, Symmetric };

// Immutable description of a skeleton: joint topology plus the normalized
// adjacency (self-connections added) that every graph-convolution layer
// multiplies by. Freely shareable across threads once built.
struct SkeletonGraph {
  std::string name;
  int num_joints = 0;
  std::vector<std::string> joint_names;             // may be empty
  std::vector<std::pair<int, int>> edges;           // unordered joint pairs
  std::vector<double> adj_norm;                     // J*J row-major, normalized A + I
  std::vector<std::pair<int, int>> flip_pairs;      // (left, right); unlisted joints are midline
  int root_index = 0;
  AdjacencyNorm norm = AdjacencyNorm::Row;

  bool is_flip_listed(int joint) const;
};

// Normalizes a binary adjacency after adding self-connections.
//   Row:       D^-1 (A + I)            (rows sum to 1)
//   Symmetric: D^-1/2 (A + I) D^-1/2
// A must be symmetric with zero diagonal and 0/1 entries.
std::vector<double> normalize_adjacency(const std::vector<double>& a, int num_joints,
                                        AdjacencyNorm norm);

// Builds a graph from parts, validating symmetry/involution invariants.
SkeletonGraph make_graph(std::string name, int num_joints, std::vector<std::pair<int, int>> edges,
                         std::vector<std::pair<int, int>> flip_pairs, int root_index,
                         AdjacencyNorm norm = AdjacencyNorm::Row,
                         std::vector<std::string> joint_names = {});

// The standard 17-joint Human3.6M skeleton: pelvis -> hips -> knees -> ankles,
// pelvis -> spine -> thorax -> neck -> head, thorax -> shoulders -> elbows -> wrists.
SkeletonGraph build_h36m_17(AdjacencyNorm norm = AdjacencyNorm::Row);

// Loads a graph from a JSON document with fields
// {"name", "joints" (count or name list), "edges", "flip_pairs", "root"}.
SkeletonGraph load_graph(const std::string& path, AdjacencyNorm norm = AdjacencyNorm::Row);
SkeletonGraph parse_graph_json(const std::string& text, AdjacencyNorm norm = AdjacencyNorm::Row);

// Mirrors a pose across the lateral (first) axis: negates that coordinate for
// every joint, then swaps each flip pair. An involution and an isometry.
Pose2d horizontal_flip(const Pose2d& pose, const SkeletonGraph& graph);
Pose3d horizontal_flip(const Pose3d& pose, const SkeletonGraph& graph);

}  // namespace iganet
