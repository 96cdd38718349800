#include "recdan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "recdan/errors.hpp"

namespace recdan {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
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
void check_extents(const Shape& shape) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  }
}
}  // namespace

Tensor::Tensor(Shape shape, double fill, bool requires_grad) : s_(std::make_shared<Storage>()) {
  check_extents(shape);
  s_->data.assign(shape_size(shape), fill);
  s_->shape = std::move(shape);
  s_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : s_(std::make_shared<Storage>()) {
  check_extents(shape);
  if (shape_size(shape) != values.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  s_->shape = std::move(shape);
  s_->data = std::move(values);
  s_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                      bool requires_grad) {
  return Tensor(Shape{rows, cols}, std::move(values), requires_grad);
}

std::size_t Tensor::rows() const { return s_->shape.empty() ? 1 : s_->shape.front(); }

std::size_t Tensor::cols() const { return s_->shape.size() < 2 ? 1 : s_->shape.back(); }

double Tensor::item() const {
  if (size() != 1) throw ArgumentError("item() on non-scalar tensor " + shape_string(shape()));
  return s_->data[0];
}

void Tensor::set_frozen(bool value) {
  s_->frozen = value;
  s_->requires_grad = !value;
  if (value) s_->grad.clear();
}

std::span<double> Tensor::grad() const {
  if (s_->grad.empty()) s_->grad.assign(s_->data.size(), 0.0);
  return s_->grad;
}

void Tensor::zero_grad() const {
  if (!s_->grad.empty()) std::fill(s_->grad.begin(), s_->grad.end(), 0.0);
}

Tensor Tensor::clone() const {
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = s_->shape;
  t.s_->data = s_->data;
  return t;
}

bool Tensor::all_finite() const {
  return std::all_of(s_->data.begin(), s_->data.end(), [](double v) { return std::isfinite(v); });
}

Tape Tape::inference() {
  Tape t;
  t.enabled_ = false;
  return t;
}

bool Tape::wants(std::initializer_list<const Tensor*> inputs) const {
  if (!enabled_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

void Tape::record(Tensor output, std::function<void()> backward_fn) {
  output.set_requires_grad(true);
  nodes_.push_back(Node{std::move(output), std::move(backward_fn)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || !loss.is_scalar()) {
    throw ArgumentError("backward() needs a scalar loss");
  }
  auto it = std::find_if(nodes_.rbegin(), nodes_.rend(),
                         [&](const Node& n) { return n.output.same_storage(loss); });
  if (it == nodes_.rend()) throw ArgumentError("backward(): loss was not produced on this tape");

  for (auto& node : nodes_) node.output.zero_grad();
  Tensor seed = loss;
  seed.grad()[0] = 1.0;
  for (; it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->backward_fn();
  }
}

}  // namespace recdan
