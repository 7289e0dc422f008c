// Test-only reference implementations, written as straight-line loops over
// raw double vectors so they stay independent of the library's tensor ops.
#pragma once

#include <vector>

#include "iganet/layers.hpp"
#include "iganet/pose.hpp"
#include "iganet/skeleton.hpp"

namespace oracle {

// row-major [M x K] * [K x N]
std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, int M,
                           int K, int N);

double gelu(double x);

std::vector<double> layer_norm(const std::vector<double>& x, int rows, int c,
                               const std::vector<double>& gamma, const std::vector<double>& beta);

// per-node neighbor aggregation from the edge list (row-normalized A + I),
// then the linear map and optional activation
std::vector<double> gcn(const std::vector<double>& x, int c_in, const iganet::SkeletonGraph& g,
                        const std::vector<double>& w, int c_out, const std::vector<double>& bias,
                        bool activate);

// multi-head attention via contiguous column slices per head; no projection
std::vector<double> mha(const std::vector<double>& x, int J, int C,
                        const std::vector<double>& wq, const std::vector<double>& wk,
                        const std::vector<double>& wv, int heads);

// single-head scaled dot-product attention plus the scaled graph term
std::vector<double> attention_g2a_single_head(const std::vector<double>& x,
                                              const std::vector<double>& f_graph, int J, int C,
                                              const std::vector<double>& wq,
                                              const std::vector<double>& wk,
                                              const std::vector<double>& wv, double s_g2a);

// the decoupled baseline: gcn2(gcn1(LN(x))) + proj(mha(LN(x))) + x
std::vector<double> parallel_block(const std::vector<double>& x, int J, int C,
                                   const iganet::IgaBlockParams& p,
                                   const iganet::SkeletonGraph& g);

std::vector<double> umlp(const std::vector<double>& x, int J, int C, int Cb,
                         const iganet::UmlpParams& p);

// extended-precision softmax of one row, no max subtraction
std::vector<long double> softmax_row_ld(const std::vector<long double>& x);

double mpjpe_brute(const std::vector<iganet::Pose3d>& pred, const std::vector<iganet::Pose3d>& gt);
double pck_brute(const std::vector<iganet::Pose3d>& pred, const std::vector<iganet::Pose3d>& gt,
                 double threshold);
double auc_brute(const std::vector<iganet::Pose3d>& pred, const std::vector<iganet::Pose3d>& gt);

// canonical bias-corrected Adam over a flat vector
struct AdamRef {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long t = 0;
  std::vector<double> m, v;
  explicit AdamRef(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  void step(std::vector<double>& params, const std::vector<double>& grads, double lr);
};

}  // namespace oracle
