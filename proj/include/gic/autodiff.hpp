#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gic::ad {

/// Two-dimensional shape. Scalars are 1x1, row vectors 1xn.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major matrix of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<double> data);
  Tensor(std::size_t rows, std::size_t cols, std::initializer_list<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{1, 1}, v); }
  static Tensor row(std::span<const double> values);
  static Tensor from_matrix(const Eigen::MatrixXd& m);

  const Shape& shape() const { return shape_; }
  std::size_t rows() const { return shape_.rows; }
  std::size_t cols() const { return shape_.cols; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_.cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_.cols + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double item() const;

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  Eigen::Map<RowMatrix> map() {
    return {data_.data(), static_cast<Eigen::Index>(shape_.rows), static_cast<Eigen::Index>(shape_.cols)};
  }
  Eigen::Map<const RowMatrix> map() const {
    return {data_.data(), static_cast<Eigen::Index>(shape_.rows), static_cast<Eigen::Index>(shape_.cols)};
  }
  Eigen::MatrixXd to_matrix() const { return map(); }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const;
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Computation record. Nodes are appended in evaluation order, which is a
/// topological order; backward() walks it in reverse. Single-threaded; a Tape
/// must outlive every Var it hands out.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  /// Populates gradients of every requires_grad node with dloss/dnode. The
  /// record can be differentiated once.
  void backward(Var loss);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  const Tensor& value(Var v) const { return nodes_[v.id()].value; }
  /// Gradient after backward(); zeros for nodes that did not receive any.
  const Tensor& grad(Var v) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  /// Appends a primitive application. The backward rule is only kept when
  /// some input requires a gradient.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  /// Gradient accumulator of a node during backward (allocated lazily).
  Tensor& grad_buffer(std::size_t id);
  const Tensor& output_grad(std::size_t id) const { return nodes_[id].grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

enum class Axis {
  rows,  // reduce over rows: result is 1 x cols
  cols,  // reduce over columns: result is rows x 1
};

// Elementwise binary ops broadcast dimensions of size 1.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);

Var negate(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var sqrt(Var a);
/// Gradient is 0 at inputs <= 0.
Var relu(Var a);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);
Var broadcast_to(Var a, Shape shape);

Var sum(Var a);
Var sum(Var a, Axis axis);
/// Max along an axis; indices receive the first maximal position. Gradient
/// routes to that position only.
Var max_reduce(Var a, Axis axis, std::vector<std::size_t>* indices = nullptr);
/// Numerically shifted log-sum-exp along an axis.
Var logsumexp(Var a, Axis axis);

Var concat(std::span<const Var> parts, Axis axis);
inline Var concat(std::initializer_list<Var> parts, Axis axis) {
  return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
}
/// Rows [r0, r1) and columns [c0, c1).
Var slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1);
/// Output row p is input row index[p].
Var gather_rows(Var a, std::span<const std::size_t> index);
/// Output row s is the sum of input rows p with segment[p] == s.
Var segment_sum(Var a, std::span<const std::size_t> segment, std::size_t num_segments);

/// Cross-entropy of a 1 x C logit row against a class index (shifted form).
Var softmax_cross_entropy(Var logits, std::size_t target);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return negate(a); }

/// Softmax of a 1 x C row, computed without recording.
std::vector<double> softmax(std::span<const double> logits);

}  // namespace gic::ad
