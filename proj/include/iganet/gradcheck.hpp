#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "iganet/model.hpp"
#include "iganet/tensor.hpp"

namespace iganet {

struct GradCheckConfig {
  double eps = 1e-4;  // central-difference step
  double tol = 1e-4;  // max relative error allowed
  std::uint64_t seed = 1;
  int max_coords_per_tensor = 64;  // sampled coordinates; <= 0 checks all
};

struct GradCheckResult {
  std::string group;
  double max_rel_err = 0.0;
  int coords_checked = 0;
};

// Builds a scalar loss from the watched aliases of `params` (same order).
// The builder must be a pure function of the current parameter values so the
// finite-difference probe can re-evaluate it after perturbations.
using LossBuilder = std::function<Tensor(Tape&, std::vector<Tensor>&)>;

// Compares the tape gradient of the loss against central finite differences
// on sampled coordinates of every parameter. Relative error is
// |fd - analytic| / max(1, |fd|, |analytic|).
GradCheckResult check_gradients(const std::string& group, std::vector<Tensor> params,
                                const LossBuilder& build, const GradCheckConfig& cfg);

// Per-op checks on small random probes (matmul, softmax, gelu, layer norm,
// attention, the block ops, embedding and head, the loss itself).
std::vector<GradCheckResult> gradcheck_layers(const GradCheckConfig& cfg);

// End-to-end check of d(loss)/d(theta) for every parameter tensor of a model.
std::vector<GradCheckResult> gradcheck_model(const ModelConfig& mcfg, const GradCheckConfig& cfg);

// Layer probes plus an end-to-end pass on a J=17, C=16, N=2 model.
std::vector<GradCheckResult> gradcheck_all(const GradCheckConfig& cfg);

bool gradcheck_passed(const std::vector<GradCheckResult>& results, double tol);

}  // namespace iganet
