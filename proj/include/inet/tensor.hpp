#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace inet {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AutodiffError : std::logic_error {
  using std::logic_error::logic_error;
};

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool on_tape = false;
};
}  // namespace detail

/// Dense row-major float64 tensor. Copies share storage; use clone() for a
/// deep copy.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t size() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  /// In-place write access. Only optimizers and initializers use this.
  std::span<double> mutable_data() { return impl_->data; }
  double operator[](std::size_t i) const { return impl_->data[i]; }
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }
  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const double> grad() const { return impl_->grad; }
  /// Allocates a zero gradient buffer if absent.
  std::span<double> grad_buffer();
  void zero_grad() { impl_->grad.clear(); }

  Tensor clone() const;
  /// Same data, new shape; shares nothing with *this.
  Tensor reshaped(Shape shape) const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  friend class Tape;
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Records differentiable operations in execution order. Backward replays the
/// records in reverse, so every node is visited after all of its consumers.
///
/// A disabled tape records nothing; ops then behave as pure functions. This is
/// what inference uses.
class Tape {
 public:
  explicit Tape(bool enabled = true) : enabled_(enabled) {}

  bool enabled() const { return enabled_; }
  std::size_t size() const { return nodes_.size(); }

  /// True when `inputs` include a grad-requiring tensor and we are recording.
  bool should_record(std::initializer_list<const Tensor*> inputs) const;
  bool should_record(std::span<const Tensor> inputs) const;

  /// Marks `output` as produced on this tape. `backward` reads output's grad
  /// and accumulates into its inputs' grad buffers.
  void record(Tensor& output, std::function<void()> backward);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule once.
  void backward(const Tensor& loss);

  /// Drops all records so the tape can be reused.
  void reset();

 private:
  struct Node {
    std::shared_ptr<detail::TensorImpl> output;
    std::function<void()> backward;
  };
  bool enabled_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
};

}  // namespace inet
