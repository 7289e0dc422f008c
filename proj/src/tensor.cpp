#include "iganet/tensor.hpp"

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace iganet {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw std::invalid_argument("tensor shape must have rank >= 1");
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor shape has non-positive dim " + shape_str(shape));
  }
}

Tape* common_tape(std::initializer_list<const Tensor*> ts) {
  Tape* tape = nullptr;
  for (const Tensor* t : ts) {
    if (!t->defined()) throw std::invalid_argument("operation on undefined tensor");
    if (!t->attached()) continue;
    if (!tape) {
      tape = t->tape();
    } else if (tape != t->tape()) {
      throw std::invalid_argument("operands belong to different gradient tapes");
    }
  }
  return tape;
}

std::shared_ptr<std::vector<double>> alloc(std::int64_t n) {
  return std::make_shared<std::vector<double>>(static_cast<std::size_t>(n), 0.0);
}

// c[MxN] += a[MxK] * b[KxN]
void mm_acc(double* c, const double* a, const double* b, int M, int K, int N) {
  for (int i = 0; i < M; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * K;
    double* crow = c + static_cast<std::size_t>(i) * N;
    for (int k = 0; k < K; ++k) {
      const double av = arow[k];
      const double* brow = b + static_cast<std::size_t>(k) * N;
      for (int j = 0; j < N; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[MxK] += g[MxN] * b[KxN]^T
void mm_gbT(double* c, const double* g, const double* b, int M, int N, int K) {
  for (int i = 0; i < M; ++i) {
    const double* grow = g + static_cast<std::size_t>(i) * N;
    double* crow = c + static_cast<std::size_t>(i) * K;
    for (int k = 0; k < K; ++k) {
      const double* brow = b + static_cast<std::size_t>(k) * N;
      double s = 0.0;
      for (int j = 0; j < N; ++j) s += grow[j] * brow[j];
      crow[k] += s;
    }
  }
}

// c[KxN] += a[MxK]^T * g[MxN]
void mm_aTg(double* c, const double* a, const double* g, int M, int K, int N) {
  for (int i = 0; i < M; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * K;
    const double* grow = g + static_cast<std::size_t>(i) * N;
    for (int k = 0; k < K; ++k) {
      const double av = arow[k];
      double* crow = c + static_cast<std::size_t>(k) * N;
      for (int j = 0; j < N; ++j) crow[j] += av * grow[j];
    }
  }
}

double gauss_cdf(double x) { return 0.5 * std::erfc(-x * M_SQRT1_2); }
double gauss_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

}  // namespace

// --- Tensor ----------------------------------------------------------------

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_ = alloc(numel(shape_));
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)) {
  check_shape(shape_);
  if (numel(shape_) != static_cast<std::int64_t>(values.size())) {
    throw std::invalid_argument("value count " + std::to_string(values.size()) +
                                " does not fill shape " + shape_str(shape_));
  }
  data_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::zeros(Shape shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(Shape shape, double value) {
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = value;
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::int64_t Tensor::size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item() on tensor of shape " + shape_str(shape_));
  return (*data_)[0];
}

double Tensor::at(std::initializer_list<int> idx) const {
  if (static_cast<int>(idx.size()) != rank()) {
    throw std::out_of_range("index rank mismatch for shape " + shape_str(shape_));
  }
  std::size_t flat = 0;
  int i = 0;
  for (int v : idx) {
    if (v < 0 || v >= shape_[static_cast<std::size_t>(i)]) throw std::out_of_range("index out of bounds");
    flat = flat * static_cast<std::size_t>(shape_[static_cast<std::size_t>(i)]) + static_cast<std::size_t>(v);
    ++i;
  }
  return (*data_)[flat];
}

Tensor Tensor::clone() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = std::make_shared<std::vector<double>>(*data_);
  return t;
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

// --- Tape ------------------------------------------------------------------

int Tape::push(Shape shape, BackwardFn fn, bool leaf, std::string name) {
  nodes_.push_back(Node{std::move(shape), {}, std::move(fn), leaf, std::move(name)});
  return static_cast<int>(nodes_.size()) - 1;
}

std::vector<double>& Tape::grad_buffer(int node) {
  Node& n = nodes_[static_cast<std::size_t>(node)];
  if (n.grad.empty()) n.grad.assign(static_cast<std::size_t>(numel(n.shape)), 0.0);
  return n.grad;
}

Tensor Tape::watch(const Tensor& t, std::string name) {
  if (!t.defined()) throw std::invalid_argument("watch() on undefined tensor");
  if (t.attached()) throw std::invalid_argument("watch() expects a detached tensor");
  Tensor alias = t.detached();
  alias.tape_ = this;
  alias.node_ = push(t.shape(), {}, true, std::move(name));
  return alias;
}

Tensor Tape::attach_result(Tensor t, Tape* tape, BackwardFn fn) {
  if (!tape) return t;
  t.tape_ = tape;
  t.node_ = tape->push(t.shape(), std::move(fn));
  return t;
}

void Tape::backward(const Tensor& loss) {
  if (loss.tape() != this || loss.node() < 0) {
    throw std::invalid_argument("backward: loss is not on this tape");
  }
  if (numel(loss.shape()) != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
  }
  // Intermediate grads are scratch for this pass; leaf grads persist so that
  // repeated backward calls accumulate.
  for (Node& n : nodes_) {
    if (!n.leaf) n.grad.clear();
  }
  grad_buffer(loss.node())[0] += 1.0;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.backward && !n.grad.empty()) n.backward(*this, n.grad);
  }
}

std::span<const double> Tape::grad(const Tensor& t) {
  if (t.tape() != this || t.node() < 0) {
    throw std::invalid_argument("grad: tensor is not on this tape");
  }
  return grad_buffer(t.node());
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad.clear();
}

// --- ops --------------------------------------------------------------------

namespace {

struct MatmulDims {
  int batch_a = 1, batch_b = 1, batch_out = 1;
  int M = 0, K = 0, N = 0;
  bool rank3_out = false;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b) {
  if ((a.rank() != 2 && a.rank() != 3) || (b.rank() != 2 && b.rank() != 3)) {
    throw std::invalid_argument("matmul: operands must have rank 2 or 3, got " +
                                shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  MatmulDims d;
  d.M = a.dim(a.rank() - 2);
  d.K = a.dim(a.rank() - 1);
  const int bK = b.dim(b.rank() - 2);
  d.N = b.dim(b.rank() - 1);
  if (d.K != bK) {
    throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  d.batch_a = a.rank() == 3 ? a.dim(0) : 1;
  d.batch_b = b.rank() == 3 ? b.dim(0) : 1;
  if (d.batch_a != d.batch_b && d.batch_a != 1 && d.batch_b != 1) {
    throw std::invalid_argument("matmul: batch dimensions disagree: " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
  }
  d.batch_out = std::max(d.batch_a, d.batch_b);
  d.rank3_out = a.rank() == 3 || b.rank() == 3;
  return d;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape* tape = common_tape({&a, &b});
  const MatmulDims d = matmul_dims(a, b);

  Shape out_shape = d.rank3_out ? Shape{d.batch_out, d.M, d.N} : Shape{d.M, d.N};
  auto out = alloc(numel(out_shape));
  const std::size_t sa = static_cast<std::size_t>(d.M) * d.K;
  const std::size_t sb = static_cast<std::size_t>(d.K) * d.N;
  const std::size_t sc = static_cast<std::size_t>(d.M) * d.N;
  const double* ap = a.values().data();
  const double* bp = b.values().data();
  for (int bo = 0; bo < d.batch_out; ++bo) {
    mm_acc(out->data() + bo * sc, ap + (d.batch_a == 1 ? 0 : bo * sa),
           bp + (d.batch_b == 1 ? 0 : bo * sb), d.M, d.K, d.N);
  }

  Tensor result(out_shape, std::move(*out));
  if (!tape) return result;

  const int ia = a.node(), ib = b.node();
  auto av = a.values();
  auto bv = b.values();
  return Tape::attach_result(std::move(result), tape,
                             [=, av = std::move(av), bv = std::move(bv)](Tape& t, const std::vector<double>& g) {
    if (ia >= 0) {
      auto& ga = t.grad_buffer(ia);
      for (int bo = 0; bo < d.batch_out; ++bo) {
        mm_gbT(ga.data() + (d.batch_a == 1 ? 0 : bo * sa), g.data() + bo * sc,
               bv.data() + (d.batch_b == 1 ? 0 : bo * sb), d.M, d.N, d.K);
      }
    }
    if (ib >= 0) {
      auto& gb = t.grad_buffer(ib);
      for (int bo = 0; bo < d.batch_out; ++bo) {
        mm_aTg(gb.data() + (d.batch_b == 1 ? 0 : bo * sb),
               av.data() + (d.batch_a == 1 ? 0 : bo * sa), g.data() + bo * sc, d.M, d.K, d.N);
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tape* tape = common_tape({&a, &b});
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.values());
    const auto& bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    Tensor result(a.shape(), std::move(out));
    if (!tape) return result;
    const int ia = a.node(), ib = b.node();
    return Tape::attach_result(std::move(result), tape, [ia, ib](Tape& t, const std::vector<double>& g) {
      if (ia >= 0) {
        auto& ga = t.grad_buffer(ia);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (ib >= 0) {
        auto& gb = t.grad_buffer(ib);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }

  // batch-dim expansion: big has rank r, small rank r-1 and matches trailing dims
  const Tensor* big = &a;
  const Tensor* small = &b;
  if (a.rank() < b.rank()) std::swap(big, small);
  const bool tail_match =
      big->rank() == small->rank() + 1 &&
      Shape(big->shape().begin() + 1, big->shape().end()) == small->shape();
  if (!tail_match) {
    throw std::invalid_argument("add: incompatible shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()));
  }
  const int batch = big->dim(0);
  const std::size_t slice = static_cast<std::size_t>(numel(small->shape()));
  std::vector<double> out(big->values());
  const auto& sv = small->values();
  for (int bo = 0; bo < batch; ++bo) {
    double* o = out.data() + bo * slice;
    for (std::size_t i = 0; i < slice; ++i) o[i] += sv[i];
  }
  Tensor result(big->shape(), std::move(out));
  if (!tape) return result;
  const int ibig = big->node(), ismall = small->node();
  return Tape::attach_result(std::move(result), tape,
                             [ibig, ismall, batch, slice](Tape& t, const std::vector<double>& g) {
    if (ibig >= 0) {
      auto& gb = t.grad_buffer(ibig);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
    if (ismall >= 0) {
      auto& gs = t.grad_buffer(ismall);
      for (int bo = 0; bo < batch; ++bo) {
        const double* gp = g.data() + bo * slice;
        for (std::size_t i = 0; i < slice; ++i) gs[i] += gp[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tape* tape = common_tape({&a, &b});
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  Tensor result(a.shape(), std::move(out));
  if (!tape) return result;
  const int ia = a.node(), ib = b.node();
  return Tape::attach_result(std::move(result), tape, [ia, ib](Tape& t, const std::vector<double>& g) {
    if (ia >= 0) {
      auto& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (ib >= 0) {
      auto& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tape* tape = common_tape({&a, &b});
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  std::vector<double> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  Tensor result(a.shape(), std::move(out));
  if (!tape) return result;
  const int ia = a.node(), ib = b.node();
  auto av = a.values();
  auto bvc = b.values();
  return Tape::attach_result(std::move(result), tape,
                             [ia, ib, av = std::move(av), bvc = std::move(bvc)](Tape& t, const std::vector<double>& g) {
    if (ia >= 0) {
      auto& ga = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bvc[i];
    }
    if (ib >= 0) {
      auto& gb = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  Tape* tape = common_tape({&x, &bias});
  if (bias.rank() != 1 || bias.dim(0) != x.dim(x.rank() - 1)) {
    throw std::invalid_argument("add_bias: bias " + shape_str(bias.shape()) +
                                " does not match last dim of " + shape_str(x.shape()));
  }
  const std::size_t n = static_cast<std::size_t>(bias.dim(0));
  std::vector<double> out(x.values());
  const auto& bv = bias.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i % n];
  Tensor result(x.shape(), std::move(out));
  if (!tape) return result;
  const int ix = x.node(), ibias = bias.node();
  return Tape::attach_result(std::move(result), tape,
                             [ix, ibias, n](Tape& t, const std::vector<double>& g) {
    if (ix >= 0) {
      auto& gx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (ibias >= 0) {
      auto& gb = t.grad_buffer(ibias);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
    }
  });
}

Tensor scale(const Tensor& x, double c) {
  Tape* tape = common_tape({&x});
  std::vector<double> out(x.values());
  for (double& v : out) v *= c;
  Tensor result(x.shape(), std::move(out));
  if (!tape) return result;
  const int ix = x.node();
  return Tape::attach_result(std::move(result), tape, [ix, c](Tape& t, const std::vector<double>& g) {
    if (ix < 0) return;
    auto& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
  });
}

Tensor add_scalar(const Tensor& x, double c) {
  Tape* tape = common_tape({&x});
  std::vector<double> out(x.values());
  for (double& v : out) v += c;
  Tensor result(x.shape(), std::move(out));
  if (!tape) return result;
  const int ix = x.node();
  return Tape::attach_result(std::move(result), tape, [ix](Tape& t, const std::vector<double>& g) {
    if (ix < 0) return;
    auto& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  Tape* tape = common_tape({&x, &s});
  if (s.size() != 1) {
    throw std::invalid_argument("mul_scalar: scale must have a single element, got " +
                                shape_str(s.shape()));
  }
  const double sv = s.values()[0];
  std::vector<double> out(x.values());
  for (double& v : out) v *= sv;
  Tensor result(x.shape(), std::move(out));
  if (!tape) return result;
  const int ix = x.node(), is = s.node();
  auto xv = x.values();
  return Tape::attach_result(std::move(result), tape,
                             [ix, is, sv, xv = std::move(xv)](Tape& t, const std::vector<double>& g) {
    if (ix >= 0) {
      auto& gx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += sv * g[i];
    }
    if (is >= 0) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * xv[i];
      t.grad_buffer(is)[0] += acc;
    }
  });
}

namespace {

// out[..., j, i] = in[..., i, j]
void transpose_copy(const double* in, double* out, int batch, int rows, int cols) {
  for (int b = 0; b < batch; ++b) {
    const double* ip = in + static_cast<std::size_t>(b) * rows * cols;
    double* op = out + static_cast<std::size_t>(b) * rows * cols;
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) op[static_cast<std::size_t>(j) * rows + i] = ip[static_cast<std::size_t>(i) * cols + j];
  }
}

}  // namespace

Tensor transpose_last(const Tensor& x) {
  Tape* tape = common_tape({&x});
  if (x.rank() < 2) throw std::invalid_argument("transpose_last: rank must be >= 2");
  const int rows = x.dim(x.rank() - 2);
  const int cols = x.dim(x.rank() - 1);
  const int batch = static_cast<int>(numel(x.shape()) / (static_cast<std::int64_t>(rows) * cols));
  Shape out_shape = x.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  std::vector<double> out(x.values().size());
  transpose_copy(x.values().data(), out.data(), batch, rows, cols);
  Tensor result(std::move(out_shape), std::move(out));
  if (!tape) return result;
  const int ix = x.node();
  return Tape::attach_result(std::move(result), tape,
                             [ix, batch, rows, cols](Tape& t, const std::vector<double>& g) {
    if (ix < 0) return;
    auto& gx = t.grad_buffer(ix);
    // gradient of a transpose is the transpose of the gradient
    for (int b = 0; b < batch; ++b) {
      const double* gp = g.data() + static_cast<std::size_t>(b) * rows * cols;
      double* op = gx.data() + static_cast<std::size_t>(b) * rows * cols;
      for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) op[static_cast<std::size_t>(i) * cols + j] += gp[static_cast<std::size_t>(j) * rows + i];
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  Tape* tape = common_tape({&x});
  check_shape(shape);
  if (numel(shape) != x.size()) {
    throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                shape_str(shape));
  }
  Tensor result(std::move(shape), x.values());
  if (!tape) return result;
  const int ix = x.node();
  return Tape::attach_result(std::move(result), tape, [ix](Tape& t, const std::vector<double>& g) {
    if (ix < 0) return;
    auto& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

namespace {

struct HeadDims {
  int B = 1, J = 0, h = 0, d = 0;
};

// forward gather for split_heads: out[(b*h+hh), j, k] = in[b, j, hh*d + k]
void split_copy(const double* in, double* out, const HeadDims& hd, bool inverse) {
  const std::size_t C = static_cast<std::size_t>(hd.h) * hd.d;
  for (int b = 0; b < hd.B; ++b)
    for (int hh = 0; hh < hd.h; ++hh)
      for (int j = 0; j < hd.J; ++j) {
        const std::size_t src = (static_cast<std::size_t>(b) * hd.J + j) * C + static_cast<std::size_t>(hh) * hd.d;
        const std::size_t dst = ((static_cast<std::size_t>(b) * hd.h + hh) * hd.J + j) * hd.d;
        for (int k = 0; k < hd.d; ++k) {
          if (!inverse)
            out[dst + k] = in[src + k];
          else
            out[src + k] += in[dst + k];
        }
      }
}

// forward scatter for merge_heads and accumulate variant for its backward
void merge_copy(const double* in, double* out, const HeadDims& hd, bool inverse) {
  const std::size_t C = static_cast<std::size_t>(hd.h) * hd.d;
  for (int b = 0; b < hd.B; ++b)
    for (int hh = 0; hh < hd.h; ++hh)
      for (int j = 0; j < hd.J; ++j) {
        const std::size_t wide = (static_cast<std::size_t>(b) * hd.J + j) * C + static_cast<std::size_t>(hh) * hd.d;
        const std::size_t narrow = ((static_cast<std::size_t>(b) * hd.h + hh) * hd.J + j) * hd.d;
        for (int k = 0; k < hd.d; ++k) {
          if (!inverse)
            out[wide + k] = in[narrow + k];
          else
            out[narrow + k] += in[wide + k];
        }
      }
}

}  // namespace

Tensor split_heads(const Tensor& x, int heads) {
  Tape* tape = common_tape({&x});
  if (x.rank() != 2 && x.rank() != 3) {
    throw std::invalid_argument("split_heads: rank must be 2 or 3, got " + shape_str(x.shape()));
  }
  HeadDims hd;
  hd.B = x.rank() == 3 ? x.dim(0) : 1;
  hd.J = x.dim(x.rank() - 2);
  const int C = x.dim(x.rank() - 1);
  if (heads < 1 || C % heads != 0) {
    throw std::invalid_argument("split_heads: channel dim " + std::to_string(C) +
                                " not divisible by " + std::to_string(heads) + " heads");
  }
  hd.h = heads;
  hd.d = C / heads;
  std::vector<double> out(x.values().size());
  split_copy(x.values().data(), out.data(), hd, false);
  Tensor result(Shape{hd.B * hd.h, hd.J, hd.d}, std::move(out));
  if (!tape) return result;
  const int ix = x.node();
  return Tape::attach_result(std::move(result), tape, [ix, hd](Tape& t, const std::vector<double>& g) {
    if (ix < 0) return;
    split_copy(g.data(), t.grad_buffer(ix).data(), hd, true);
  });
}

Tensor merge_heads(const Tensor& x, int heads) {
  Tape* tape = common_tape({&x});
  if (x.rank() != 3) throw std::invalid_argument("merge_heads: rank must be 3, got " + shape_str(x.shape()));
  if (heads < 1 || x.dim(0) % heads != 0) {
    throw std::invalid_argument("merge_heads: leading dim " + std::to_string(x.dim(0)) +
                                " not divisible by " + std::to_string(heads) + " heads");
  }
  HeadDims hd;
  hd.B = x.dim(0) / heads;
  hd.h = heads;
  hd.J = x.dim(1);
  hd.d = x.dim(2);
  std::vector<double> out(x.values().size());
  merge_copy(x.values().data(), out.data(), hd, false);
  Tensor result(Shape{hd.B, hd.J, hd.h * hd.d}, std::move(out));
  if (!tape) return result;
  const int ix = x.node();
  return Tape::attach_result(std::move(result), tape, [ix, hd](Tape& t, const std::vector<double>& g) {
    if (ix < 0) return;
    merge_copy(g.data(), t.grad_buffer(ix).data(), hd, true);
  });
}

Tensor sum_all(const Tensor& x) {
  Tape* tape = common_tape({&x});
  double s = 0.0;
  for (double v : x.values()) s += v;
  Tensor result = Tensor::scalar(s);
  if (!tape) return result;
  const int ix = x.node();
  return Tape::attach_result(std::move(result), tape, [ix](Tape& t, const std::vector<double>& g) {
    if (ix < 0) return;
    auto& gx = t.grad_buffer(ix);
    for (double& v : gx) v += g[0];
  });
}

Tensor mean_all(const Tensor& x) {
  Tape* tape = common_tape({&x});
  double s = 0.0;
  for (double v : x.values()) s += v;
  const double n = static_cast<double>(x.size());
  Tensor result = Tensor::scalar(s / n);
  if (!tape) return result;
  const int ix = x.node();
  return Tape::attach_result(std::move(result), tape, [ix, n](Tape& t, const std::vector<double>& g) {
    if (ix < 0) return;
    auto& gx = t.grad_buffer(ix);
    const double gv = g[0] / n;
    for (double& v : gx) v += gv;
  });
}

Tensor sum_lastdim(const Tensor& x) {
  Tape* tape = common_tape({&x});
  const int n = x.dim(x.rank() - 1);
  const std::size_t slices = static_cast<std::size_t>(x.size() / n);
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  std::vector<double> out(slices, 0.0);
  const auto& xv = x.values();
  for (std::size_t s = 0; s < slices; ++s) {
    const double* xp = xv.data() + s * static_cast<std::size_t>(n);
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += xp[i];
    out[s] = acc;
  }
  Tensor result(std::move(out_shape), std::move(out));
  if (!tape) return result;
  const int ix = x.node();
  return Tape::attach_result(std::move(result), tape, [ix, n, slices](Tape& t, const std::vector<double>& g) {
    if (ix < 0) return;
    auto& gx = t.grad_buffer(ix);
    for (std::size_t s = 0; s < slices; ++s) {
      double* gp = gx.data() + s * static_cast<std::size_t>(n);
      for (int i = 0; i < n; ++i) gp[i] += g[s];
    }
  });
}

Tensor sqrt_el(const Tensor& x) {
  Tape* tape = common_tape({&x});
  std::vector<double> out(x.values());
  for (double& v : out) v = std::sqrt(v);
  Tensor result(x.shape(), std::move(out));
  if (!tape) return result;
  const int ix = x.node();
  auto yv = result.values();
  return Tape::attach_result(std::move(result), tape,
                             [ix, yv = std::move(yv)](Tape& t, const std::vector<double>& g) {
    if (ix < 0) return;
    auto& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * 0.5 / yv[i];
  });
}

Tensor relu(const Tensor& x) {
  Tape* tape = common_tape({&x});
  std::vector<double> out(x.values());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  Tensor result(x.shape(), std::move(out));
  if (!tape) return result;
  const int ix = x.node();
  auto xv = x.values();
  return Tape::attach_result(std::move(result), tape,
                             [ix, xv = std::move(xv)](Tape& t, const std::vector<double>& g) {
    if (ix < 0) return;
    auto& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xv[i] > 0.0 ? g[i] : 0.0;
  });
}

Tensor gelu(const Tensor& x) {
  Tape* tape = common_tape({&x});
  std::vector<double> out(x.values());
  for (double& v : out) v = v * gauss_cdf(v);
  Tensor result(x.shape(), std::move(out));
  if (!tape) return result;
  const int ix = x.node();
  auto xv = x.values();
  return Tape::attach_result(std::move(result), tape,
                             [ix, xv = std::move(xv)](Tape& t, const std::vector<double>& g) {
    if (ix < 0) return;
    auto& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xv[i];
      gx[i] += g[i] * (gauss_cdf(v) + v * gauss_pdf(v));
    }
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  Tape* tape = common_tape({&x});
  const int n = x.dim(x.rank() - 1);
  const std::size_t slices = static_cast<std::size_t>(x.size() / n);
  std::vector<double> out(x.values().size());
  const auto& xv = x.values();
  for (std::size_t s = 0; s < slices; ++s) {
    const double* xp = xv.data() + s * static_cast<std::size_t>(n);
    double* op = out.data() + s * static_cast<std::size_t>(n);
    double mx = xp[0];
    for (int i = 1; i < n; ++i) mx = std::max(mx, xp[i]);
    double denom = 0.0;
    for (int i = 0; i < n; ++i) {
      op[i] = std::exp(xp[i] - mx);
      denom += op[i];
    }
    for (int i = 0; i < n; ++i) op[i] /= denom;
  }
  Tensor result(x.shape(), std::move(out));
  if (!tape) return result;
  const int ix = x.node();
  auto yv = result.values();
  return Tape::attach_result(std::move(result), tape,
                             [ix, n, slices, yv = std::move(yv)](Tape& t, const std::vector<double>& g) {
    if (ix < 0) return;
    auto& gx = t.grad_buffer(ix);
    for (std::size_t s = 0; s < slices; ++s) {
      const double* yp = yv.data() + s * static_cast<std::size_t>(n);
      const double* gp = g.data() + s * static_cast<std::size_t>(n);
      double* op = gx.data() + s * static_cast<std::size_t>(n);
      double dot = 0.0;
      for (int i = 0; i < n; ++i) dot += gp[i] * yp[i];
      for (int i = 0; i < n; ++i) op[i] += yp[i] * (gp[i] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  Tape* tape = common_tape({&x, &gamma, &beta});
  const int c = x.dim(x.rank() - 1);
  if (gamma.rank() != 1 || gamma.dim(0) != c || beta.rank() != 1 || beta.dim(0) != c) {
    throw std::invalid_argument("layer_norm: affine params must have shape [" + std::to_string(c) +
                                "], got " + shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  }
  const std::size_t slices = static_cast<std::size_t>(x.size() / c);
  std::vector<double> xhat(x.values().size());
  std::vector<double> inv_std(slices);
  std::vector<double> out(x.values().size());
  const auto& xv = x.values();
  const auto& gv = gamma.values();
  const auto& bv = beta.values();
  for (std::size_t s = 0; s < slices; ++s) {
    const double* xp = xv.data() + s * static_cast<std::size_t>(c);
    double mean = 0.0;
    for (int i = 0; i < c; ++i) mean += xp[i];
    mean /= c;
    double var = 0.0;
    for (int i = 0; i < c; ++i) {
      const double d = xp[i] - mean;
      var += d * d;
    }
    var /= c;
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    inv_std[s] = inv;
    double* hp = xhat.data() + s * static_cast<std::size_t>(c);
    double* op = out.data() + s * static_cast<std::size_t>(c);
    for (int i = 0; i < c; ++i) {
      hp[i] = (xp[i] - mean) * inv;
      op[i] = hp[i] * gv[i] + bv[i];
    }
  }
  Tensor result(x.shape(), std::move(out));
  if (!tape) return result;
  const int ix = x.node(), igamma = gamma.node(), ibeta = beta.node();
  auto gvc = gamma.values();
  return Tape::attach_result(std::move(result), tape,
                             [=, xhat = std::move(xhat), inv_std = std::move(inv_std),
                              gvc = std::move(gvc)](Tape& t, const std::vector<double>& g) {
    const std::size_t cs = static_cast<std::size_t>(c);
    if (ibeta >= 0) {
      auto& gb = t.grad_buffer(ibeta);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % cs] += g[i];
    }
    if (igamma >= 0) {
      auto& gg = t.grad_buffer(igamma);
      for (std::size_t i = 0; i < g.size(); ++i) gg[i % cs] += g[i] * xhat[i];
    }
    if (ix >= 0) {
      auto& gx = t.grad_buffer(ix);
      for (std::size_t s = 0; s < slices; ++s) {
        const double* gp = g.data() + s * cs;
        const double* hp = xhat.data() + s * cs;
        double* op = gx.data() + s * cs;
        double mean_h = 0.0, mean_hx = 0.0;
        for (int i = 0; i < c; ++i) {
          const double hi = gp[i] * gvc[static_cast<std::size_t>(i)];
          mean_h += hi;
          mean_hx += hi * hp[i];
        }
        mean_h /= c;
        mean_hx /= c;
        for (int i = 0; i < c; ++i) {
          const double hi = gp[i] * gvc[static_cast<std::size_t>(i)];
          op[i] += inv_std[s] * (hi - mean_h - hp[i] * mean_hx);
        }
      }
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w) { return matmul(x, w); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_bias(matmul(x, w), b);
}

Tensor dropout(const Tensor& x, double p, Rng& rng) {
  if (p < 0.0 || p >= 1.0) throw std::invalid_argument("dropout: p must be in [0, 1)");
  if (p == 0.0) return x;
  Tape* tape = common_tape({&x});
  const double keep = 1.0 - p;
  std::vector<double> mask(x.values().size());
  for (double& m : mask) m = rng.bernoulli(p) ? 0.0 : 1.0 / keep;
  std::vector<double> out(x.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  Tensor result(x.shape(), std::move(out));
  if (!tape) return result;
  const int ix = x.node();
  return Tape::attach_result(std::move(result), tape,
                             [ix, mask = std::move(mask)](Tape& t, const std::vector<double>& g) {
    if (ix < 0) return;
    auto& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
  });
}

}  // namespace iganet
