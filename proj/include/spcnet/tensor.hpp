#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace spcnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);

namespace detail {

/// One value in the differentiation record. Parents are kept alive by the
/// child so the whole record is released with the loss tensor.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until the first gradient arrives
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(std::span<const double> grad_out)> backward;

  /// Allocates a zero gradient buffer on first use and returns it.
  std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major array of doubles with an optional gradient record.
/// Copies share the underlying node; use detach() for an independent leaf.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const { return values().size(); }
  std::size_t dim(std::size_t axis) const;
  /// Extent of axis 0 / axis 1 for rank-2 tensors.
  std::size_t rows() const { return dim(0); }
  std::size_t cols() const { return dim(1); }

  std::span<const double> values() const;
  /// Direct write access. Only meaningful on leaves (parameters, inputs).
  std::span<double> mutable_values();
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  /// Gradient buffer; all zeros if nothing has been accumulated yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Leaf copy of the values, cut from any record.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(std::span<const double>)>);

  std::shared_ptr<detail::Node> node_;
};

/// Records an operation result. The backward closure is kept only if some
/// input requires a gradient; it receives d(loss)/d(result).
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::function<void(std::span<const double>)> backward);

/// Reverse sweep from a scalar loss. Gradients accumulate into every
/// reachable tensor that requires them (call zero_grad between steps).
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Differentiable operations. All inputs are rank-2 [rows, cols] unless noted.

enum class ActivationKind { relu, leaky_relu, tanh, identity };

struct Activation {
  ActivationKind kind = ActivationKind::relu;
  double slope = 0.2;  // leaky_relu only

  static Activation relu() { return {ActivationKind::relu, 0.0}; }
  static Activation leaky(double slope = 0.2) { return {ActivationKind::leaky_relu, slope}; }
  static Activation tanh() { return {ActivationKind::tanh, 0.0}; }
};

/// X·W + b, X [n,d_in], W [d_in,d_out], b [d_out] (b may be undefined).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor activation(const Tensor& x, Activation act);

enum class Mode { train, eval };

struct RunningStats {
  std::vector<double> mean;
  std::vector<double> var;

  static RunningStats fresh(std::size_t channels) {
    return {std::vector<double>(channels, 0.0), std::vector<double>(channels, 1.0)};
  }
};

struct BatchNormOptions {
  double eps = 1e-5;
  double momentum = 0.1;
};

/// Per-column normalisation. Train mode uses (biased) batch statistics and
/// folds them into `stats` (unbiased variance, as is conventional); eval mode
/// reads `stats`.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, RunningStats& stats,
                  Mode mode, BatchNormOptions opts = {});

/// Column-wise maximum, shape [d]. Backward routes to the lowest argmax row.
Tensor reduce_max_rows(const Tensor& x);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> idx);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
/// Tiles a vector [d] (or [1,d]) into [n,d].
Tensor repeat_rows(const Tensor& v, std::size_t n);
Tensor reshape(const Tensor& x, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// Sum of all entries, scalar result.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

}  // namespace spcnet
