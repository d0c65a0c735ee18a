#include "inet/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace inet {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (shape_numel(shape) != data.size())
    throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor shape " + shape_str(shape) + " has a zero extent");
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return Tensor({1}, {v}, requires_grad); }

std::size_t Tensor::dim(std::size_t i) const {
  if (i >= rank()) throw DimensionError("axis " + std::to_string(i) + " out of range for " + shape_str(shape()));
  return impl_->shape[i];
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

std::span<double> Tensor::grad_buffer() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

Tensor Tensor::clone() const {
  Tensor t(impl_->shape, impl_->data, impl_->requires_grad);
  return t;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != size())
    throw DimensionError("cannot reshape " + shape_str(this->shape()) + " to " + shape_str(shape));
  return Tensor(std::move(shape), impl_->data, false);
}

bool Tape::should_record(std::initializer_list<const Tensor*> inputs) const {
  if (!enabled_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t && t->defined() && t->requires_grad(); });
}

bool Tape::should_record(std::span<const Tensor> inputs) const {
  if (!enabled_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.defined() && t.requires_grad(); });
}

void Tape::record(Tensor& output, std::function<void()> backward) {
  if (consumed_) throw AutodiffError("tape already consumed by backward(); call reset() first");
  output.impl_->requires_grad = true;
  output.impl_->on_tape = true;
  nodes_.push_back({output.impl_, std::move(backward)});
}

void Tape::backward(const Tensor& loss) {
  if (!loss.defined()) throw AutodiffError("backward on an undefined tensor");
  if (loss.size() != 1)
    throw AutodiffError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  if (consumed_) throw AutodiffError("backward called twice on the same tape without reset()");
  auto it = std::find_if(nodes_.rbegin(), nodes_.rend(),
                         [&](const Node& n) { return n.output == loss.impl_; });
  if (it == nodes_.rend()) throw AutodiffError("loss tensor is detached: it was not produced on this tape");

  auto& g = loss.impl_->grad;
  g.assign(1, 1.0);
  // Nodes recorded after the loss cannot contribute to it.
  for (; it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // nothing flows through this node
    it->backward();
  }
  consumed_ = true;
}

void Tape::reset() {
  for (auto& n : nodes_) n.output->on_tape = false;
  nodes_.clear();
  consumed_ = false;
}

}  // namespace inet
