#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "iganet/rng.hpp"

namespace iganet {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tape;

// Dense tensor of 64-bit floats, stored contiguously in row-major order.
// Tensors are values: copies share the underlying storage and ops never
// mutate their operands. The one sanctioned mutation path is
// mutable_values(), used by the optimizer between steps and by the
// finite-difference checker; it must not be called while a live tape
// still references the tensor's node.
//
// A tensor is either detached (no tape) or attached to a node of a Tape.
// Ops attach their result whenever at least one operand is attached, so
// gradients only ever flow into tensors that were explicitly watched.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);  // shape {1}

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t size() const;

  const std::vector<double>& values() const { return *data_; }
  std::vector<double>& mutable_values() { return *data_; }
  double item() const;  // requires size() == 1
  double at(std::initializer_list<int> idx) const;

  Tensor clone() const;     // deep copy, detached
  Tensor detached() const;  // shallow copy without tape identity

  bool attached() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

 private:
  std::shared_ptr<std::vector<double>> data_;
  Shape shape_;
  Tape* tape_ = nullptr;
  int node_ = -1;

  friend class Tape;
};

using BackwardFn = std::function<void(Tape&, const std::vector<double>& out_grad)>;

// Record-on-execute gradient tape. Nodes are appended in execution order,
// which is a topological order by construction; backward() walks them once
// in reverse. Leaf nodes are created with watch() and their gradients
// persist across backward() calls (repeated backward accumulates) until
// zero_grad(). A tape is single-owner and not copyable.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers `t` (which must be detached) as a leaf and returns the
  // attached alias sharing the same storage.
  Tensor watch(const Tensor& t, std::string name = {});

  // Seeds d(loss)/d(loss) = 1 and propagates through all recorded nodes.
  // `loss` must be a scalar attached to this tape.
  void backward(const Tensor& loss);

  // Gradient accumulated for an attached tensor (zeros if untouched).
  std::span<const double> grad(const Tensor& t);

  void zero_grad();
  std::size_t node_count() const { return nodes_.size(); }

  // --- op plumbing ---
  int push(Shape shape, BackwardFn fn, bool leaf = false, std::string name = {});
  std::vector<double>& grad_buffer(int node);
  const std::string& node_name(int node) const { return nodes_[static_cast<std::size_t>(node)].name; }
  static Tensor attach_result(Tensor t, Tape* tape, BackwardFn fn);

 private:
  struct Node {
    Shape shape;
    std::vector<double> grad;  // lazily allocated
    BackwardFn backward;       // empty for leaves
    bool leaf = false;
    std::string name;
  };
  std::vector<Node> nodes_;
};

// --- operations -----------------------------------------------------------
// Every op computes its forward value eagerly and, when any operand is
// attached, records the matching backward rule on the tape.

// Batched matrix product. Ranks 2 or 3; with rank-3 operands the leading
// batch dims must agree or broadcast from size 1 (a rank-2 operand acts as
// batch 1 shared across the batch).
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise add. Same shape, or one operand of rank r-1 matching the
// trailing dims of the other (batch-dim expansion).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);    // same shape
Tensor mul(const Tensor& a, const Tensor& b);    // elementwise, same shape
Tensor add_bias(const Tensor& x, const Tensor& bias);  // bias rank 1, last dim
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, const Tensor& s);  // s has size 1

Tensor transpose_last(const Tensor& x);  // swap last two dims
Tensor reshape(const Tensor& x, Shape shape);

// B x J x (h*d) -> (B*h) x J x d and back. Rank-2 input is treated as B=1.
Tensor split_heads(const Tensor& x, int heads);
Tensor merge_heads(const Tensor& x, int heads);

Tensor sum_all(const Tensor& x);      // -> {1}
Tensor mean_all(const Tensor& x);     // -> {1}
Tensor sum_lastdim(const Tensor& x);  // drops the last dim (rank-1 -> {1})

Tensor sqrt_el(const Tensor& x);  // elementwise; inputs must be > 0
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact x * Phi(x)
Tensor softmax_lastdim(const Tensor& x);

inline constexpr double kLayerNormEps = 1e-5;
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);

Tensor linear(const Tensor& x, const Tensor& w);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Inverted dropout; identity when p == 0. Training-time only.
Tensor dropout(const Tensor& x, double p, Rng& rng);

}  // namespace iganet
