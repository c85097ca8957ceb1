#include "gic/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gic/error.hpp"

namespace gic::ad {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << rows << ", " << cols << ")";
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.size()) {
    throw ShapeError("tensor data has " + std::to_string(data_.size()) + " values for shape " + shape_.str());
  }
}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::initializer_list<double> values)
    : Tensor(Shape{rows, cols}, std::vector<double>(values)) {}

Tensor Tensor::row(std::span<const double> values) {
  return Tensor(Shape{1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::from_matrix(const Eigen::MatrixXd& m) {
  Tensor t(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  t.map() = m;
  return t;
}

double Tensor::item() const {
  if (shape_.size() != 1) throw ShapeError("item() on non-scalar tensor of shape " + shape_.str());
  return data_[0];
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Shape& Var::shape() const { return tape_->value(id_).shape(); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  if (consumed_) throw ContractError("cannot record on a tape that has already been differentiated");
  Node n;
  n.value = std::move(value);
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [&](std::size_t i) { return nodes_[i].requires_grad; });
  if (n.requires_grad) n.backward = std::move(backward);
  n.inputs = std::move(inputs);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.size() || n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

const Tensor& Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (!n.requires_grad) throw ContractError("gradient requested for a value that does not require grad");
  if (!consumed_) throw ContractError("gradient requested before backward()");
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("loss belongs to a different tape");
  if (consumed_) throw ContractError("record already consumed by a previous backward()");
  const Node& ln = nodes_[loss.id()];
  if (ln.value.size() != 1) throw ContractError("backward() needs a scalar loss, got shape " + ln.value.shape().str());
  if (!ln.requires_grad) throw ContractError("backward() on a value that does not require grad");
  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad = Tensor(n.value.shape());
  }
  nodes_[loss.id()].grad[0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.requires_grad && n.backward) n.backward(*this, id);
  }
  consumed_ = true;
  // Release closures; values and grads stay readable.
  for (auto& n : nodes_) n.backward = nullptr;
}

namespace {

Tape* common_tape(Var a, Var b) {
  if (!a.valid() || !b.valid()) throw ContractError("operation on an unbound value");
  if (a.tape() != b.tape()) throw ContractError("operands belong to different tapes");
  return a.tape();
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  auto dim = [&](std::size_t x, std::size_t y) {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
  };
  return Shape{dim(a.rows, b.rows), dim(a.cols, b.cols)};
}

inline std::size_t bidx(const Shape& s, std::size_t r, std::size_t c) {
  return (s.rows == 1 ? 0 : r) * s.cols + (s.cols == 1 ? 0 : c);
}

// f(x, y) forward; dx(x, y, z) and dy(x, y, z) are the local partials.
template <class F, class DX, class DY>
Var binary(Var a, Var b, const char* name, F f, DX dx, DY dy) {
  Tape* tape = common_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const Shape sa = x.shape();
  const Shape sb = y.shape();
  const Shape out = broadcast_shape(sa, sb, name);
  Tensor z(out);
  if (sa == out && sb == out) {
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = f(x[i], y[i]);
  } else {
    for (std::size_t r = 0; r < out.rows; ++r)
      for (std::size_t c = 0; c < out.cols; ++c) z(r, c) = f(x[bidx(sa, r, c)], y[bidx(sb, r, c)]);
  }
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape->record(std::move(z), {ia, ib}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    const Tensor& xv = t.value(ia);
    const Tensor& yv = t.value(ib);
    const Tensor& zv = t.value(self);
    const bool need_a = t.requires_grad(ia);
    const bool need_b = t.requires_grad(ib);
    for (std::size_t r = 0; r < out.rows; ++r) {
      for (std::size_t c = 0; c < out.cols; ++c) {
        const std::size_t o = r * out.cols + c;
        const std::size_t pa = bidx(sa, r, c);
        const std::size_t pb = bidx(sb, r, c);
        if (need_a) t.grad_buffer(ia)[pa] += g[o] * dx(xv[pa], yv[pb], zv[o]);
        if (need_b) t.grad_buffer(ib)[pb] += g[o] * dy(xv[pa], yv[pb], zv[o]);
      }
    }
  });
}

// f(x) forward; df(x, y) local derivative.
template <class F, class DF>
Var unary(Var a, F f, DF df) {
  if (!a.valid()) throw ContractError("operation on an unbound value");
  Tape* tape = a.tape();
  const Tensor& x = a.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  return tape->record(std::move(y), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    const Tensor& xv = t.value(ia);
    const Tensor& yv = t.value(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(xv[i], yv[i]);
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double z) { return -z / y; });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var negate(Var a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(Var a) {
  return unary(a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var matmul(Var a, Var b) {
  Tape* tape = common_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.cols() != y.rows()) {
    throw ShapeError("matmul: incompatible shapes " + x.shape().str() + " and " + y.shape().str());
  }
  Tensor z(Shape{x.rows(), y.cols()});
  z.map().noalias() = x.map() * y.map();
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape->record(std::move(z), {ia, ib}, [=](Tape& t, std::size_t self) {
    const auto g = t.output_grad(self).map();
    if (t.requires_grad(ia)) t.grad_buffer(ia).map().noalias() += g * t.value(ib).map().transpose();
    if (t.requires_grad(ib)) t.grad_buffer(ib).map().noalias() += t.value(ia).map().transpose() * g;
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  Tensor z(Shape{x.cols(), x.rows()});
  z.map() = x.map().transpose();
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(z), {ia}, [=](Tape& t, std::size_t self) {
    t.grad_buffer(ia).map() += t.output_grad(self).map().transpose();
  });
}

Var reshape(Var a, Shape shape) {
  const Tensor& x = a.value();
  if (shape.size() != x.size()) {
    throw ShapeError("reshape: cannot view " + x.shape().str() + " as " + shape.str());
  }
  Tensor z(shape, x.storage());
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(z), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var broadcast_to(Var a, Shape shape) {
  const Shape s = a.shape();
  if (broadcast_shape(s, shape, "broadcast_to") != shape) {
    throw ShapeError("broadcast_to: cannot expand " + s.str() + " to " + shape.str());
  }
  Tensor z(shape);
  const Tensor& x = a.value();
  for (std::size_t r = 0; r < shape.rows; ++r)
    for (std::size_t c = 0; c < shape.cols; ++c) z(r, c) = x[bidx(s, r, c)];
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(z), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < shape.rows; ++r)
      for (std::size_t c = 0; c < shape.cols; ++c) ga[bidx(s, r, c)] += g(r, c);
  });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t ia = a.id();
  return a.tape()->record(Tensor::scalar(s), {ia}, [=](Tape& t, std::size_t self) {
    const double g = t.output_grad(self)[0];
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var sum(Var a, Axis axis) {
  const Tensor& x = a.value();
  const Shape s = x.shape();
  const Shape out = axis == Axis::rows ? Shape{1, s.cols} : Shape{s.rows, 1};
  Tensor z(out);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < s.cols; ++c) z[bidx(out, r, c)] += x(r, c);
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(z), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = 0; r < s.rows; ++r)
      for (std::size_t c = 0; c < s.cols; ++c) ga(r, c) += g[bidx(out, r, c)];
  });
}

Var max_reduce(Var a, Axis axis, std::vector<std::size_t>* indices) {
  const Tensor& x = a.value();
  const Shape s = x.shape();
  if (s.size() == 0) throw ShapeError("max_reduce on an empty tensor");
  const bool over_rows = axis == Axis::rows;
  const std::size_t n_out = over_rows ? s.cols : s.rows;
  const std::size_t n_red = over_rows ? s.rows : s.cols;
  Tensor z(over_rows ? Shape{1, s.cols} : Shape{s.rows, 1});
  std::vector<std::size_t> arg(n_out);  // flat positions
  for (std::size_t o = 0; o < n_out; ++o) {
    std::size_t best = over_rows ? o : o * s.cols;
    for (std::size_t k = 1; k < n_red; ++k) {
      const std::size_t p = over_rows ? k * s.cols + o : o * s.cols + k;
      if (x[p] > x[best]) best = p;
    }
    arg[o] = best;
    z[o] = x[best];
  }
  if (indices) {
    indices->resize(n_out);
    for (std::size_t o = 0; o < n_out; ++o) (*indices)[o] = over_rows ? arg[o] / s.cols : arg[o] % s.cols;
  }
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(z), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t o = 0; o < n_out; ++o) ga[arg[o]] += g[o];
  });
}

Var logsumexp(Var a, Axis axis) {
  const Tensor& x = a.value();
  const Shape s = x.shape();
  const bool over_rows = axis == Axis::rows;
  const std::size_t n_out = over_rows ? s.cols : s.rows;
  const std::size_t n_red = over_rows ? s.rows : s.cols;
  auto pos = [=](std::size_t o, std::size_t k) { return over_rows ? k * s.cols + o : o * s.cols + k; };
  Tensor z(over_rows ? Shape{1, s.cols} : Shape{s.rows, 1});
  for (std::size_t o = 0; o < n_out; ++o) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n_red; ++k) mx = std::max(mx, x[pos(o, k)]);
    if (!std::isfinite(mx)) {
      z[o] = mx;
      continue;
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < n_red; ++k) acc += std::exp(x[pos(o, k)] - mx);
    z[o] = mx + std::log(acc);
  }
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(z), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    const Tensor& xv = t.value(ia);
    const Tensor& zv = t.value(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t o = 0; o < n_out; ++o) {
      if (!std::isfinite(zv[o])) continue;
      for (std::size_t k = 0; k < n_red; ++k) {
        const std::size_t p = pos(o, k);
        ga[p] += g[o] * std::exp(xv[p] - zv[o]);
      }
    }
  });
}

Var concat(std::span<const Var> parts, Axis axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Tape* tape = parts[0].tape();
  // Axis::rows stacks vertically, Axis::cols side by side.
  const bool vertical = axis == Axis::rows;
  std::size_t total = 0;
  const Shape first = parts[0].shape();
  for (const Var& p : parts) {
    if (p.tape() != tape) throw ContractError("concat operands belong to different tapes");
    const Shape s = p.shape();
    if ((vertical && s.cols != first.cols) || (!vertical && s.rows != first.rows)) {
      throw ShapeError("concat: incompatible shapes " + first.str() + " and " + s.str());
    }
    total += vertical ? s.rows : s.cols;
  }
  const Shape out = vertical ? Shape{total, first.cols} : Shape{first.rows, total};
  Tensor z(out);
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& x = p.value();
    if (vertical) {
      std::copy(x.data().begin(), x.data().end(), z.data().begin() + static_cast<std::ptrdiff_t>(off * out.cols));
    } else {
      for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) z(r, off + c) = x(r, c);
    }
    ids.push_back(p.id());
    offsets.push_back(off);
    off += vertical ? x.rows() : x.cols();
  }
  return tape->record(std::move(z), ids, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!t.requires_grad(ids[k])) continue;
      Tensor& ga = t.grad_buffer(ids[k]);
      const std::size_t o = offsets[k];
      if (vertical) {
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[o * out.cols + i];
      } else {
        for (std::size_t r = 0; r < ga.rows(); ++r)
          for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += g(r, o + c);
      }
    }
  });
}

Var slice(Var a, std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) {
  const Tensor& x = a.value();
  if (r0 > r1 || c0 > c1 || r1 > x.rows() || c1 > x.cols()) {
    std::ostringstream os;
    os << "slice [" << r0 << "," << r1 << ")x[" << c0 << "," << c1 << ") out of range for " << x.shape().str();
    throw ShapeError(os.str());
  }
  Tensor z(Shape{r1 - r0, c1 - c0});
  for (std::size_t r = r0; r < r1; ++r)
    for (std::size_t c = c0; c < c1; ++c) z(r - r0, c - c0) = x(r, c);
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(z), {ia}, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t r = r0; r < r1; ++r)
      for (std::size_t c = c0; c < c1; ++c) ga(r, c) += g(r - r0, c - c0);
  });
}

Var gather_rows(Var a, std::span<const std::size_t> index) {
  const Tensor& x = a.value();
  const std::size_t cols = x.cols();
  Tensor z(Shape{index.size(), cols});
  for (std::size_t p = 0; p < index.size(); ++p) {
    if (index[p] >= x.rows()) throw IndexError("gather_rows: row " + std::to_string(index[p]) + " out of range");
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(index[p] * cols), cols,
                z.data().begin() + static_cast<std::ptrdiff_t>(p * cols));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(z), {ia}, [=, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t p = 0; p < idx.size(); ++p)
      for (std::size_t c = 0; c < cols; ++c) ga(idx[p], c) += g(p, c);
  });
}

Var segment_sum(Var a, std::span<const std::size_t> segment, std::size_t num_segments) {
  const Tensor& x = a.value();
  if (segment.size() != x.rows()) {
    throw ShapeError("segment_sum: " + std::to_string(segment.size()) + " segment ids for " +
                     std::to_string(x.rows()) + " rows");
  }
  const std::size_t cols = x.cols();
  Tensor z(Shape{num_segments, cols});
  for (std::size_t p = 0; p < segment.size(); ++p) {
    if (segment[p] >= num_segments) throw IndexError("segment_sum: segment id out of range");
    for (std::size_t c = 0; c < cols; ++c) z(segment[p], c) += x(p, c);
  }
  std::vector<std::size_t> seg(segment.begin(), segment.end());
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(z), {ia}, [=, seg = std::move(seg)](Tape& t, std::size_t self) {
    const Tensor& g = t.output_grad(self);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t p = 0; p < seg.size(); ++p)
      for (std::size_t c = 0; c < cols; ++c) ga(p, c) += g(seg[p], c);
  });
}

Var softmax_cross_entropy(Var logits, std::size_t target) {
  const Tensor& x = logits.value();
  if (x.rows() != 1) throw ShapeError("softmax_cross_entropy expects a 1 x C row, got " + x.shape().str());
  if (target >= x.cols()) throw IndexError("class index " + std::to_string(target) + " out of range");
  double mx = x[0];
  for (double v : x.data()) mx = std::max(mx, v);
  double acc = 0.0;
  for (double v : x.data()) acc += std::exp(v - mx);
  const double lse = mx + std::log(acc);
  const std::size_t ia = logits.id();
  return logits.tape()->record(Tensor::scalar(lse - x[target]), {ia}, [=](Tape& t, std::size_t self) {
    const double g = t.output_grad(self)[0];
    const Tensor& xv = t.value(ia);
    Tensor& ga = t.grad_buffer(ia);
    for (std::size_t c = 0; c < xv.size(); ++c) {
      ga[c] += g * (std::exp(xv[c] - lse) - (c == target ? 1.0 : 0.0));
    }
  });
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double acc = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    acc += v;
  }
  for (double& v : p) v /= acc;
  return p;
}

}  // namespace gic::ad
