#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// A Tensor is a shared handle to a node holding its values, an optional
// gradient buffer, and (for op results that require grad) the closure that
// pushes the node's adjoint into its inputs. Graph edges own their inputs, so
// a forward pass stays alive exactly as long as its result does. backward()
// records the reachable nodes into a Tape in reverse creation order, replays
// the adjoints, and releases the edges.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixalign {

using Shape = std::vector<std::size_t>;
using Axes = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something writes to it
  bool requires_grad = false;
  std::uint64_t seq = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::initializer_list<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(int axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Only leaves may be written in place (parameter updates, data loading).
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad();

  // Seeds d(self)/d(self) = 1 and propagates. self must be a scalar ([] or [1]).
  void backward() const;

  // Same values, cut from the graph.
  Tensor detach() const;
  Tensor clone() const;

  const char* op_name() const;
  detail::Node* node() const { return node_.get(); }

  // Used by op implementations.
  static Tensor make_result(Shape shape, std::vector<double> values, const char* op,
                            std::vector<Tensor> inputs,
                            std::function<void(detail::Node&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend class Tape;
  std::shared_ptr<detail::Node> node_;
};

// Ordered record of the differentiable ops reachable from a root.
class Tape {
 public:
  static Tape record(const Tensor& root);
  // Reverse-mode sweep; root's grad must already be seeded.
  void replay();
  // Drops graph edges so intermediate buffers are freed.
  void release();
  std::size_t size() const { return nodes_.size(); }
  std::vector<const char*> op_names() const;

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;  // reverse creation order
};

// Thread-local switch: when disabled, op results never require grad.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool value);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- elementwise ----

enum class UnaryOp { Neg, Exp, Log, Relu, Sigmoid, Sqrt, Square, Softplus };
enum class BinaryOp { Add, Sub, Mul, Div };

Tensor unary(UnaryOp op, const Tensor& a);
// Trailing-dimension broadcasting; adjoints are sum-reduced back to each input shape.
Tensor binary(BinaryOp op, const Tensor& a, const Tensor& b);
Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// Adjoint is taken as 0 where the output is exactly 0 (subgradient at the kink).
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
// log(1 + exp(a)), evaluated without overflow.
Tensor softplus(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor operator*(const Tensor& a, double s);
Tensor operator*(double s, const Tensor& a);
Tensor operator+(const Tensor& a, double s);

// ---- reductions ----

enum class ReduceOp { Sum, Mean, Max, Variance };

// Empty axes means all axes. Variance is the population variance.
Tensor reduce(ReduceOp op, const Tensor& a, const Axes& axes = {}, bool keep_dims = false);
Tensor sum(const Tensor& a, const Axes& axes = {}, bool keep_dims = false);
Tensor mean(const Tensor& a, const Axes& axes = {}, bool keep_dims = false);
Tensor max(const Tensor& a, const Axes& axes = {}, bool keep_dims = false);
Tensor variance(const Tensor& a, const Axes& axes = {}, bool keep_dims = false);

// ---- linear algebra / conv ----

Tensor matmul(const Tensor& a, const Tensor& b);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// input [B,C,H,W], kernel [C_out,C,kh,kw], zero padding.
Tensor conv2d(const Tensor& input, const Tensor& kernel, Conv2dOptions options = {});
// Non-overlapping window average over [B,C,H,W]; H and W must be multiples of window.
Tensor avg_pool2d(const Tensor& input, std::size_t window);

// ---- softmax ----

Tensor softmax(const Tensor& z, int axis = -1);
Tensor log_softmax(const Tensor& z, int axis = -1);

// ---- shape ----

Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
// Rows along axis 0.
Tensor index_select(const Tensor& a, std::span<const std::size_t> indices);
// Column slice [begin, end) of a 2-D tensor.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);

}  // namespace mixalign
