#include "oracles.hpp"

#include <cmath>

namespace oracle {

std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b, int M,
                           int K, int N) {
  std::vector<double> c(static_cast<std::size_t>(M) * N, 0.0);
  for (int i = 0; i < M; ++i)
    for (int j = 0; j < N; ++j) {
      double s = 0.0;
      for (int k = 0; k < K; ++k)
        s += a[static_cast<std::size_t>(i) * K + k] * b[static_cast<std::size_t>(k) * N + j];
      c[static_cast<std::size_t>(i) * N + j] = s;
    }
  return c;
}

double gelu(double x) { return x * 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<double> layer_norm(const std::vector<double>& x, int rows, int c,
                               const std::vector<double>& gamma, const std::vector<double>& beta) {
  std::vector<double> out(x.size());
  for (int r = 0; r < rows; ++r) {
    const double* xp = x.data() + static_cast<std::size_t>(r) * c;
    double mean = 0.0;
    for (int i = 0; i < c; ++i) mean += xp[i];
    mean /= c;
    double var = 0.0;
    for (int i = 0; i < c; ++i) var += (xp[i] - mean) * (xp[i] - mean);
    var /= c;
    const double denom = std::sqrt(var + 1e-5);
    for (int i = 0; i < c; ++i) {
      out[static_cast<std::size_t>(r) * c + i] =
          (xp[i] - mean) / denom * gamma[static_cast<std::size_t>(i)] + beta[static_cast<std::size_t>(i)];
    }
  }
  return out;
}

std::vector<double> gcn(const std::vector<double>& x, int c_in, const iganet::SkeletonGraph& g,
                        const std::vector<double>& w, int c_out, const std::vector<double>& bias,
                        bool activate) {
  const int J = g.num_joints;
  std::vector<std::vector<int>> neighbors(static_cast<std::size_t>(J));
  for (const auto& [u, v] : g.edges) {
    neighbors[static_cast<std::size_t>(u)].push_back(v);
    neighbors[static_cast<std::size_t>(v)].push_back(u);
  }
  // aggregate self + neighbors with row normalization, then the linear map
  std::vector<double> agg(static_cast<std::size_t>(J) * c_in, 0.0);
  for (int i = 0; i < J; ++i) {
    const double denom = 1.0 + static_cast<double>(neighbors[static_cast<std::size_t>(i)].size());
    for (int k = 0; k < c_in; ++k) {
      double s = x[static_cast<std::size_t>(i) * c_in + k];
      for (int nb : neighbors[static_cast<std::size_t>(i)]) {
        s += x[static_cast<std::size_t>(nb) * c_in + k];
      }
      agg[static_cast<std::size_t>(i) * c_in + k] = s / denom;
    }
  }
  std::vector<double> out = matmul(agg, w, J, c_in, c_out);
  for (int i = 0; i < J; ++i)
    for (int k = 0; k < c_out; ++k) {
      double& v = out[static_cast<std::size_t>(i) * c_out + k];
      v += bias[static_cast<std::size_t>(k)];
      if (activate) v = gelu(v);
    }
  return out;
}

namespace {

void softmax_rows_inplace(std::vector<double>& x, int rows, int n) {
  for (int r = 0; r < rows; ++r) {
    double* xp = x.data() + static_cast<std::size_t>(r) * n;
    double mx = xp[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, xp[i]);
    double denom = 0.0;
    for (int i = 0; i < n; ++i) {
      xp[i] = std::exp(xp[i] - mx);
      denom += xp[i];
    }
    for (int i = 0; i < n; ++i) xp[i] /= denom;
  }
}

}  // namespace

std::vector<double> mha(const std::vector<double>& x, int J, int C,
                        const std::vector<double>& wq, const std::vector<double>& wk,
                        const std::vector<double>& wv, int heads) {
  const int d = C / heads;
  const std::vector<double> q = matmul(x, wq, J, C, C);
  const std::vector<double> k = matmul(x, wk, J, C, C);
  const std::vector<double> v = matmul(x, wv, J, C, C);
  std::vector<double> out(static_cast<std::size_t>(J) * C, 0.0);
  for (int h = 0; h < heads; ++h) {
    const int off = h * d;
    std::vector<double> scores(static_cast<std::size_t>(J) * J, 0.0);
    for (int i = 0; i < J; ++i)
      for (int j = 0; j < J; ++j) {
        double s = 0.0;
        for (int kk = 0; kk < d; ++kk) {
          s += q[static_cast<std::size_t>(i) * C + off + kk] *
               k[static_cast<std::size_t>(j) * C + off + kk];
        }
        scores[static_cast<std::size_t>(i) * J + j] = s / std::sqrt(static_cast<double>(d));
      }
    softmax_rows_inplace(scores, J, J);
    for (int i = 0; i < J; ++i)
      for (int kk = 0; kk < d; ++kk) {
        double s = 0.0;
        for (int j = 0; j < J; ++j) {
          s += scores[static_cast<std::size_t>(i) * J + j] *
               v[static_cast<std::size_t>(j) * C + off + kk];
        }
        out[static_cast<std::size_t>(i) * C + off + kk] = s;
      }
  }
  return out;
}

std::vector<double> attention_g2a_single_head(const std::vector<double>& x,
                                              const std::vector<double>& f_graph, int J, int C,
                                              const std::vector<double>& wq,
                                              const std::vector<double>& wk,
                                              const std::vector<double>& wv, double s_g2a) {
  std::vector<double> out = mha(x, J, C, wq, wk, wv, 1);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s_g2a * f_graph[i];
  return out;
}

std::vector<double> parallel_block(const std::vector<double>& x, int J, int C,
                                   const iganet::IgaBlockParams& p,
                                   const iganet::SkeletonGraph& g) {
  const std::vector<double> xn =
      layer_norm(x, J, C, p.norm_in.gamma.values(), p.norm_in.beta.values());
  const std::vector<double> g1 =
      gcn(xn, C, g, p.gcn1.weight.values(), C, p.gcn1.bias.values(), true);
  const std::vector<double> g2 =
      gcn(g1, C, g, p.gcn2.weight.values(), C, p.gcn2.bias.values(), false);
  const std::vector<double> att =
      mha(xn, J, C, p.attn.wq.values(), p.attn.wk.values(), p.attn.wv.values(), p.attn.heads);
  std::vector<double> proj = matmul(att, p.attn.wo.values(), J, C, C);
  std::vector<double> out(x.size());
  for (int i = 0; i < J; ++i)
    for (int k = 0; k < C; ++k) {
      const std::size_t idx = static_cast<std::size_t>(i) * C + k;
      out[idx] = g2[idx] + proj[idx] + p.attn.wo_bias.values()[static_cast<std::size_t>(k)] + x[idx];
    }
  return out;
}

std::vector<double> umlp(const std::vector<double>& x, int J, int C, int Cb,
                         const iganet::UmlpParams& p) {
  const std::vector<double> xn = layer_norm(x, J, C, p.norm.gamma.values(), p.norm.beta.values());
  std::vector<double> down = matmul(xn, p.down.weight.values(), J, C, Cb);
  for (int i = 0; i < J; ++i)
    for (int k = 0; k < Cb; ++k) {
      double& v = down[static_cast<std::size_t>(i) * Cb + k];
      v = gelu(v + p.down.bias.values()[static_cast<std::size_t>(k)]);
    }
  std::vector<double> mid = matmul(down, p.mid.weight.values(), J, Cb, Cb);
  for (int i = 0; i < J; ++i)
    for (int k = 0; k < Cb; ++k) {
      const std::size_t idx = static_cast<std::size_t>(i) * Cb + k;
      mid[idx] = gelu(mid[idx] + p.mid.bias.values()[static_cast<std::size_t>(k)]) + down[idx];
    }
  std::vector<double> up = matmul(mid, p.up.weight.values(), J, Cb, C);
  std::vector<double> out(x.size());
  for (int i = 0; i < J; ++i)
    for (int k = 0; k < C; ++k) {
      const std::size_t idx = static_cast<std::size_t>(i) * C + k;
      out[idx] = up[idx] + p.up.bias.values()[static_cast<std::size_t>(k)] + x[idx];
    }
  return out;
}

std::vector<long double> softmax_row_ld(const std::vector<long double>& x) {
  long double denom = 0.0L;
  std::vector<long double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i]);
    denom += out[i];
  }
  for (auto& v : out) v /= denom;
  return out;
}

double mpjpe_brute(const std::vector<iganet::Pose3d>& pred,
                   const std::vector<iganet::Pose3d>& gt) {
  double acc = 0.0;
  long n = 0;
  for (std::size_t b = 0; b < pred.size(); ++b)
    for (std::size_t j = 0; j < pred[b].size(); ++j) {
      const double dx = pred[b][j].x - gt[b][j].x;
      const double dy = pred[b][j].y - gt[b][j].y;
      const double dz = pred[b][j].z - gt[b][j].z;
      acc += std::sqrt(dx * dx + dy * dy + dz * dz);
      ++n;
    }
  return acc / static_cast<double>(n);
}

double pck_brute(const std::vector<iganet::Pose3d>& pred, const std::vector<iganet::Pose3d>& gt,
                 double threshold) {
  long hit = 0, n = 0;
  for (std::size_t b = 0; b < pred.size(); ++b)
    for (std::size_t j = 0; j < pred[b].size(); ++j) {
      const double dx = pred[b][j].x - gt[b][j].x;
      const double dy = pred[b][j].y - gt[b][j].y;
      const double dz = pred[b][j].z - gt[b][j].z;
      if (std::sqrt(dx * dx + dy * dy + dz * dz) <= threshold) ++hit;
      ++n;
    }
  return 100.0 * static_cast<double>(hit) / static_cast<double>(n);
}

double auc_brute(const std::vector<iganet::Pose3d>& pred, const std::vector<iganet::Pose3d>& gt) {
  double acc = 0.0;
  int points = 0;
  for (double t = 0.0; t <= 150.0 + 1e-9; t += 5.0) {
    acc += pck_brute(pred, gt, t);
    ++points;
  }
  return acc / points;
}

void AdamRef::step(std::vector<double>& params, const std::vector<double>& grads, double lr) {
  t += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
    params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
  }
}

}  // namespace oracle
