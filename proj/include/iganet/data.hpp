#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "iganet/pose.hpp"
#include "iganet/rng.hpp"
#include "iganet/skeleton.hpp"
#include "iganet/tensor.hpp"

namespace iganet {

struct PoseSample {
  Pose2d input2d;    // J x 2, normalized image coords in [-1, 1]
  Pose3d target3d;   // J x 3, millimeters, root-relative
  std::string action;
  std::string subject;
  bool has_target = true;  // false for prediction-only inputs
};

struct Dataset {
  std::vector<PoseSample> samples;
  std::string graph_name;
  int joints = 0;
  std::vector<std::string> warnings;  // collected during load (e.g. re-centered roots)
};

// pose-v1 text format: a header line
//   #pose-v1 J=<n> graph=<name>
// followed by one JSON object per line:
//   {"in":[[x,y] * J], "out":[[x,y,z] * J], "action":"...", "subject":"..."}
// "out", "action" and "subject" are optional ("out" absent marks a 2D-only
// line, as consumed by the predict command).
Dataset load_dataset(const std::string& path, const SkeletonGraph& graph);
void save_dataset(const std::string& path, const Dataset& ds);

// Bone table for the synthetic generator: per-joint bone length (to the
// parent) and a base direction whose positive depth tilt keeps every bone's
// depth sign fixed, so the 3D pose is a smooth function of its 2D projection.
struct SynthSpec {
  std::vector<double> length_mm;                  // per joint; root entry 0
  std::vector<std::array<double, 3>> base_dir;    // per joint; root entry unused
  double jitter = 0.22;                           // direction perturbation bound
  double scale_2d = 1.0 / 1250.0;                 // mm -> normalized image coords
};

SynthSpec default_synth_spec(const SkeletonGraph& graph);

// Parent of each joint in the kinematic tree rooted at graph.root_index
// (root's parent is -1), derived from the edge list by BFS.
std::vector<int> kinematic_parents(const SkeletonGraph& graph);

// Deterministic-by-seed synthetic poses: fixed bone lengths, jittered bone
// directions, 2D input as the orthographic x-y projection of the 3D target.
Dataset synth_generate(int n, std::uint64_t seed, const SkeletonGraph& graph,
                       const SynthSpec* spec = nullptr);

// Flips each sample (input and target coherently) with probability p.
void augment_flip(std::vector<PoseSample>& batch, const SkeletonGraph& graph, double p, Rng& rng);

// --- tensor bridging ---------------------------------------------------------

Tensor batch_inputs(const std::vector<PoseSample>& samples, const std::vector<int>& idx);
Tensor batch_targets(const std::vector<PoseSample>& samples, const std::vector<int>& idx);
std::vector<Pose3d> tensor_to_poses(const Tensor& y);  // [B x J x 3] or [J x 3]

}  // namespace iganet
