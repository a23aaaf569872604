#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ehdnas::diff {

using Shape = std::vector<std::size_t>;

// Value-semantic float64 tensor, row-major. Rank-2 views treat the leading
// dimension as rows and the product of the rest as columns.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value) { return Tensor({1}, {value}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t rows() const noexcept { return shape_.size() >= 2 ? shape_[0] : 1; }
  std::size_t cols() const noexcept { return shape_.size() >= 2 ? size() / shape_[0] : size(); }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  // The single value of a one-element tensor.
  double item() const;
  void fill(double value);

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

std::string shape_string(const Shape& shape);

using NodeId = std::size_t;
using Bindings = std::map<std::string, Tensor, std::less<>>;

enum class Mode { eval, train };

// Gradient of the backward seed(s) with respect to every parameter and input
// that is an ancestor of the seeds. Leaves that do not influence the seeds
// through a differentiable path get zero tensors.
class Gradients {
 public:
  const Tensor& operator[](std::string_view name) const;
  bool contains(std::string_view name) const { return by_name_.find(name) != by_name_.end(); }
  const std::map<std::string, Tensor, std::less<>>& all() const noexcept { return by_name_; }

 private:
  friend class Graph;
  std::map<std::string, Tensor, std::less<>> by_name_;
};

// Static computation graph evaluated on demand. Nodes are appended in
// topological order; parameters are owned by the graph and bound inputs are
// supplied per forward call.
//
// Shape conventions: activations are [batch, features]; affine weights are
// [out, in] with bias [out]; cross-entropy labels are a [batch] tensor of
// class indices; embedding tables are [L, E, K] applied to a [batch, L*K]
// architecture input, producing [batch, L*E].
class Graph {
 public:
  NodeId input(std::string name);
  NodeId parameter(std::string name, Tensor init);

  NodeId affine(NodeId x, NodeId weight, NodeId bias);
  NodeId relu(NodeId x);
  NodeId row_softmax(NodeId x);
  // Per-row standardization (x - mean) / sqrt(var + 1e-5), no affine part.
  NodeId row_normalize(NodeId x);
  NodeId cross_entropy(NodeId logits, NodeId labels);
  // Inverted dropout. `seed` is a bound scalar input; each forward in
  // training mode draws the mask from it, so replays are exact.
  NodeId dropout(NodeId x, double p, NodeId seed);
  NodeId mae(NodeId prediction, NodeId target);
  // Sum over k of weights[row, k] * branches[k].
  NodeId weighted_mix(NodeId weights, std::size_t row, std::vector<NodeId> branches);
  NodeId embedding_apply(NodeId arch, NodeId table);
  NodeId zeros_like(NodeId x);

  // Evaluates `output` and its ancestors. Throws ShapeMismatch on a missing
  // or ill-shaped binding and NumericalError on non-finite intermediates.
  const Tensor& forward(NodeId output, const Bindings& bindings, Mode mode = Mode::eval);

  // Reverse pass from a scalar loss evaluated by the last forward.
  Gradients backward(NodeId loss);
  // Vector-Jacobian product for arbitrary seeds (node, upstream gradient).
  Gradients backward(std::span<const std::pair<NodeId, Tensor>> seeds);

  const Tensor& value(NodeId id) const;
  Tensor& parameter_value(std::string_view name);
  const Tensor& parameter_value(std::string_view name) const;
  std::vector<std::string> parameter_names() const;
  bool is_parameter(std::string_view name) const;
  NodeId find(std::string_view name) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Per-node sign pattern of every kink (relu inputs, MAE residuals) seen by
  // the last forward; used to keep finite differences off non-smooth points.
  std::vector<std::int8_t> kink_signature() const;

 private:
  enum class Op {
    input,
    parameter,
    affine,
    relu,
    row_softmax,
    row_normalize,
    cross_entropy,
    dropout,
    mae,
    weighted_mix,
    embedding_apply,
    zeros_like
  };

  struct Node {
    Op op;
    std::string name;
    std::vector<NodeId> args;
    std::size_t row = 0;
    double p = 0.0;
    Tensor value;
    Tensor mask;  // dropout mask, softmax probabilities or inverse row scales
    bool evaluated = false;
  };

  NodeId add(Node node);
  void check_arg(NodeId id) const;
  void evaluate(NodeId id, const Bindings& bindings, Mode mode);
  void propagate(NodeId id, std::vector<Tensor>& grads, const std::vector<bool>& live) const;
  std::vector<bool> ancestors(std::span<const NodeId> roots) const;

  std::vector<Node> nodes_;
  std::map<std::string, NodeId, std::less<>> names_;
  std::vector<bool> last_live_;
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t compared = 0;
  std::size_t skipped = 0;  // coordinates whose perturbation crosses a kink
};

// Central-difference check of the scalar `loss` against backward(), over
// every coordinate of the named parameters/inputs (all parameters when
// `names` is empty). Error per coordinate is |analytic - numeric| /
// max(1, |numeric|). Always evaluates in eval mode; parameters are restored.
FiniteDiffReport finite_diff_check(Graph& graph, NodeId loss, const Bindings& bindings, double eps,
                                   std::span<const std::string> names = {});

// Adaptive-moment optimizer keyed by parameter name.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double epsilon = 1e-8)
      : lr_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  void step(const std::string& name, Tensor& param, const Tensor& grad);

 private:
  struct Moments {
    Tensor m;
    Tensor v;
    std::uint64_t t = 0;
  };
  double lr_, beta1_, beta2_, epsilon_;
  std::map<std::string, Moments, std::less<>> state_;
};

// Heavy-ball SGD keyed by parameter name.
class SgdMomentum {
 public:
  explicit SgdMomentum(double learning_rate, double momentum = 0.9) : lr_(learning_rate), momentum_(momentum) {}

  void step(const std::string& name, Tensor& param, const Tensor& grad);

 private:
  double lr_, momentum_;
  std::map<std::string, Tensor, std::less<>> velocity_;
};

}  // namespace ehdnas::diff
