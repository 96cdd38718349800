#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace recdan {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// A Tensor is a shared handle: copies alias the same storage, which is what
/// lets the tape refer back to inputs and outputs. Use clone() for an
/// independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t size() const { return s_->data.size(); }
  /// Leading extent; 1 for a scalar.
  std::size_t rows() const;
  /// Trailing extent; 1 for rank < 2.
  std::size_t cols() const;
  bool is_scalar() const { return size() == 1; }

  std::span<double> data() { return s_->data; }
  std::span<const double> data() const { return s_->data; }
  double& operator[](std::size_t i) { return s_->data[i]; }
  double operator[](std::size_t i) const { return s_->data[i]; }
  double& at(std::size_t r, std::size_t c) { return s_->data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return s_->data[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool value) { s_->requires_grad = value; }
  bool frozen() const { return s_->frozen; }
  void set_frozen(bool value);

  bool has_grad() const { return !s_->grad.empty(); }
  /// Allocates a zero gradient buffer on first use. Writable through a const
  /// handle, like the storage it points to.
  std::span<double> grad() const;
  void zero_grad() const;
  void drop_grad() { s_->grad.clear(); }

  /// Deep copy of the values; the copy has no gradient and does not require one.
  Tensor clone() const;
  /// Same values, detached from any tape (deep copy).
  Tensor detach() const { return clone(); }
  bool same_storage(const Tensor& other) const { return s_ == other.s_; }
  bool all_finite() const;

 private:
  struct Storage {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
    bool frozen = false;
  };
  std::shared_ptr<Storage> s_;
};

/// Define-by-run record of executed primitives. Backward replays the records
/// in exact reverse order. A tape belongs to a single thread.
class Tape {
 public:
  Tape() = default;
  /// A tape that records nothing, for inference.
  static Tape inference();

  bool enabled() const { return enabled_; }
  /// True when an op with these inputs must be recorded.
  bool wants(std::initializer_list<const Tensor*> inputs) const;
  void record(Tensor output, std::function<void()> backward_fn);

  /// Accumulates d(loss)/d(t) into every requires_grad leaf reachable from
  /// `loss`. Intermediate gradients are reset on every call, so repeated calls
  /// add the same contribution to the leaves again.
  void backward(const Tensor& loss);

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor output;
    std::function<void()> backward_fn;
  };
  std::vector<Node> nodes_;
  bool enabled_ = true;
};

}  // namespace recdan
