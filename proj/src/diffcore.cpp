#include "ehdnas/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ehdnas/errors.hpp"

namespace ehdnas::diff {

namespace {

constexpr double kNormEpsilon = 1e-5;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeMismatch(what);
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  require(values_.size() == product(shape_), "tensor of shape " + shape_string(shape_) + " given " +
                                                 std::to_string(values_.size()) + " values");
}

double Tensor::item() const {
  require(values_.size() == 1, "item() on a tensor of shape " + shape_string(shape_));
  return values_[0];
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

const Tensor& Gradients::operator[](std::string_view name) const {
  const auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ShapeMismatch("no gradient recorded for '" + std::string(name) + "'");
  return it->second;
}

// ---------------------------------------------------------------------------
// Graph construction

NodeId Graph::add(Node node) {
  for (NodeId arg : node.args) check_arg(arg);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

void Graph::check_arg(NodeId id) const {
  if (id >= nodes_.size()) throw ShapeMismatch("node " + std::to_string(id) + " does not exist");
}

NodeId Graph::input(std::string name) {
  if (names_.count(name) != 0) throw InvalidConfig("duplicate graph name '" + name + "'");
  const NodeId id = add(Node{Op::input, name, {}, 0, 0.0, {}, {}, false});
  names_.emplace(std::move(name), id);
  return id;
}

NodeId Graph::parameter(std::string name, Tensor init) {
  if (names_.count(name) != 0) throw InvalidConfig("duplicate graph name '" + name + "'");
  const NodeId id = add(Node{Op::parameter, name, {}, 0, 0.0, std::move(init), {}, false});
  names_.emplace(std::move(name), id);
  return id;
}

NodeId Graph::affine(NodeId x, NodeId weight, NodeId bias) {
  return add(Node{Op::affine, {}, {x, weight, bias}, 0, 0.0, {}, {}, false});
}

NodeId Graph::relu(NodeId x) { return add(Node{Op::relu, {}, {x}, 0, 0.0, {}, {}, false}); }

NodeId Graph::row_softmax(NodeId x) { return add(Node{Op::row_softmax, {}, {x}, 0, 0.0, {}, {}, false}); }

NodeId Graph::row_normalize(NodeId x) { return add(Node{Op::row_normalize, {}, {x}, 0, 0.0, {}, {}, false}); }

NodeId Graph::cross_entropy(NodeId logits, NodeId labels) {
  return add(Node{Op::cross_entropy, {}, {logits, labels}, 0, 0.0, {}, {}, false});
}

NodeId Graph::dropout(NodeId x, double p, NodeId seed) {
  if (!(p >= 0.0 && p < 1.0)) throw InvalidConfig("dropout probability must be in [0, 1)");
  return add(Node{Op::dropout, {}, {x, seed}, 0, p, {}, {}, false});
}

NodeId Graph::mae(NodeId prediction, NodeId target) {
  return add(Node{Op::mae, {}, {prediction, target}, 0, 0.0, {}, {}, false});
}

NodeId Graph::weighted_mix(NodeId weights, std::size_t row, std::vector<NodeId> branches) {
  if (branches.empty()) throw InvalidConfig("weighted_mix needs at least one branch");
  std::vector<NodeId> args{weights};
  args.insert(args.end(), branches.begin(), branches.end());
  return add(Node{Op::weighted_mix, {}, std::move(args), row, 0.0, {}, {}, false});
}

NodeId Graph::embedding_apply(NodeId arch, NodeId table) {
  return add(Node{Op::embedding_apply, {}, {arch, table}, 0, 0.0, {}, {}, false});
}

NodeId Graph::zeros_like(NodeId x) { return add(Node{Op::zeros_like, {}, {x}, 0, 0.0, {}, {}, false}); }

const Tensor& Graph::value(NodeId id) const {
  check_arg(id);
  return nodes_[id].value;
}

Tensor& Graph::parameter_value(std::string_view name) {
  const NodeId id = find(name);
  if (nodes_[id].op != Op::parameter) throw InvalidConfig("'" + std::string(name) + "' is not a parameter");
  return nodes_[id].value;
}

const Tensor& Graph::parameter_value(std::string_view name) const {
  return const_cast<Graph*>(this)->parameter_value(name);
}

std::vector<std::string> Graph::parameter_names() const {
  std::vector<std::string> out;
  for (const auto& n : nodes_) {
    if (n.op == Op::parameter) out.push_back(n.name);
  }
  return out;
}

bool Graph::is_parameter(std::string_view name) const {
  const auto it = names_.find(name);
  return it != names_.end() && nodes_[it->second].op == Op::parameter;
}

NodeId Graph::find(std::string_view name) const {
  const auto it = names_.find(name);
  if (it == names_.end()) throw InvalidConfig("graph has no node named '" + std::string(name) + "'");
  return it->second;
}

std::vector<bool> Graph::ancestors(std::span<const NodeId> roots) const {
  std::vector<bool> live(nodes_.size(), false);
  for (NodeId r : roots) {
    check_arg(r);
    live[r] = true;
  }
  for (std::size_t i = nodes_.size(); i-- > 0;) {
    if (!live[i]) continue;
    for (NodeId a : nodes_[i].args) live[a] = true;
  }
  return live;
}

// ---------------------------------------------------------------------------
// Forward

const Tensor& Graph::forward(NodeId output, const Bindings& bindings, Mode mode) {
  const NodeId roots[] = {output};
  last_live_ = ancestors(roots);
  for (auto& n : nodes_) n.evaluated = false;
  for (NodeId id = 0; id <= output; ++id) {
    if (last_live_[id]) evaluate(id, bindings, mode);
  }
  return nodes_[output].value;
}

void Graph::evaluate(NodeId id, const Bindings& bindings, Mode mode) {
  Node& n = nodes_[id];
  auto arg = [&](std::size_t i) -> const Tensor& { return nodes_[n.args[i]].value; };

  switch (n.op) {
    case Op::input: {
      const auto it = bindings.find(n.name);
      if (it == bindings.end()) throw ShapeMismatch("missing binding for input '" + n.name + "'");
      n.value = it->second;
      break;
    }
    case Op::parameter:
      break;
    case Op::affine: {
      const Tensor& x = arg(0);
      const Tensor& w = arg(1);
      const Tensor& b = arg(2);
      const std::size_t batch = x.rows(), in = x.cols(), out = w.rows();
      require(w.shape().size() == 2 && w.cols() == in && b.size() == out,
              "affine: input " + shape_string(x.shape()) + ", weight " + shape_string(w.shape()) + ", bias " +
                  shape_string(b.shape()));
      n.value = Tensor({batch, out});
      for (std::size_t r = 0; r < batch; ++r) {
        const double* xr = x.data() + r * in;
        double* yr = n.value.data() + r * out;
        for (std::size_t o = 0; o < out; ++o) {
          const double* wo = w.data() + o * in;
          double acc = b[o];
          for (std::size_t i = 0; i < in; ++i) acc += wo[i] * xr[i];
          yr[o] = acc;
        }
      }
      break;
    }
    case Op::relu: {
      n.value = arg(0);
      for (double& v : n.value.values()) v = v > 0.0 ? v : 0.0;
      break;
    }
    case Op::row_softmax: {
      const Tensor& x = arg(0);
      n.value = x;
      const std::size_t rows = x.rows(), cols = x.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        double* row = n.value.data() + r * cols;
        const double peak = *std::max_element(row, row + cols);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          row[c] = std::exp(row[c] - peak);
          total += row[c];
        }
        for (std::size_t c = 0; c < cols; ++c) row[c] /= total;
      }
      break;
    }
    case Op::row_normalize: {
      const Tensor& x = arg(0);
      n.value = x;
      const std::size_t rows = x.rows(), cols = x.cols();
      n.mask = Tensor({rows});
      for (std::size_t r = 0; r < rows; ++r) {
        double* row = n.value.data() + r * cols;
        const double mean = std::accumulate(row, row + cols, 0.0) / static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) var += (row[c] - mean) * (row[c] - mean);
        const double inv = 1.0 / std::sqrt(var / static_cast<double>(cols) + kNormEpsilon);
        for (std::size_t c = 0; c < cols; ++c) row[c] = (row[c] - mean) * inv;
        n.mask[r] = inv;
      }
      break;
    }
    case Op::cross_entropy: {
      const Tensor& logits = arg(0);
      const Tensor& labels = arg(1);
      const std::size_t batch = logits.rows(), classes = logits.cols();
      require(labels.size() == batch, "cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                                          std::to_string(batch));
      n.mask = logits;
      double loss = 0.0;
      for (std::size_t r = 0; r < batch; ++r) {
        double* p = n.mask.data() + r * classes;
        const double peak = *std::max_element(p, p + classes);
        double total = 0.0;
        for (std::size_t c = 0; c < classes; ++c) total += std::exp(p[c] - peak);
        const double log_total = peak + std::log(total);
        const auto label = static_cast<std::size_t>(labels[r]);
        require(labels[r] >= 0.0 && label < classes, "cross_entropy: label out of range");
        loss += log_total - p[label];
        for (std::size_t c = 0; c < classes; ++c) p[c] = std::exp(p[c] - log_total);
      }
      n.value = Tensor::scalar(loss / static_cast<double>(batch));
      break;
    }
    case Op::dropout: {
      const Tensor& x = arg(0);
      n.value = x;
      if (mode == Mode::eval || n.p == 0.0) {
        n.mask = Tensor();
        break;
      }
      const auto seed = static_cast<std::uint64_t>(arg(1).item());
      std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * (id + 1)));
      const double scale = 1.0 / (1.0 - n.p);
      n.mask = Tensor(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        n.mask[i] = u >= n.p ? scale : 0.0;
        n.value[i] *= n.mask[i];
      }
      break;
    }
    case Op::mae: {
      const Tensor& pred = arg(0);
      const Tensor& target = arg(1);
      require(pred.size() == target.size(), "mae: prediction " + shape_string(pred.shape()) + " vs target " +
                                                shape_string(target.shape()));
      double total = 0.0;
      for (std::size_t i = 0; i < pred.size(); ++i) total += std::abs(pred[i] - target[i]);
      n.value = Tensor::scalar(total / static_cast<double>(pred.size()));
      break;
    }
    case Op::weighted_mix: {
      const Tensor& w = arg(0);
      const std::size_t k = n.args.size() - 1;
      require(w.cols() == k && n.row < w.rows(), "weighted_mix: weights " + shape_string(w.shape()) + " for " +
                                                     std::to_string(k) + " branches at row " +
                                                     std::to_string(n.row));
      n.value = Tensor(arg(1).shape());
      for (std::size_t b = 0; b < k; ++b) {
        const Tensor& y = arg(b + 1);
        require(y.size() == n.value.size(), "weighted_mix: branch shapes differ");
        const double a = w.at(n.row, b);
        if (a == 0.0) continue;
        for (std::size_t i = 0; i < y.size(); ++i) n.value[i] += a * y[i];
      }
      break;
    }
    case Op::embedding_apply: {
      const Tensor& a = arg(0);
      const Tensor& table = arg(1);
      require(table.shape().size() == 3, "embedding_apply: table must be [L, E, K]");
      const std::size_t layers = table.shape()[0], dim = table.shape()[1], k = table.shape()[2];
      const std::size_t batch = a.rows();
      require(a.cols() == layers * k, "embedding_apply: architecture " + shape_string(a.shape()) + " vs table " +
                                          shape_string(table.shape()));
      n.value = Tensor({batch, layers * dim});
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t l = 0; l < layers; ++l) {
          const double* col = a.data() + r * layers * k + l * k;
          for (std::size_t e = 0; e < dim; ++e) {
            const double* t = table.data() + (l * dim + e) * k;
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) acc += t[j] * col[j];
            n.value.at(r, l * dim + e) = acc;
          }
        }
      }
      break;
    }
    case Op::zeros_like:
      n.value = Tensor(arg(0).shape());
      break;
  }

  if (n.op != Op::input && n.op != Op::parameter) {
    for (double v : n.value.values()) {
      if (!std::isfinite(v)) throw NumericalError("non-finite value produced by graph node " + std::to_string(id));
    }
  }
  n.evaluated = true;
}

// ---------------------------------------------------------------------------
// Backward

namespace {

Tensor& slot(std::vector<Tensor>& grads, NodeId id, const Shape& shape) {
  if (grads[id].size() == 0 && grads[id].shape().empty()) grads[id] = Tensor(shape);
  return grads[id];
}

}  // namespace

Gradients Graph::backward(NodeId loss) {
  check_arg(loss);
  if (nodes_[loss].value.size() != 1) {
    throw ShapeMismatch("backward needs a scalar loss, got " + shape_string(nodes_[loss].value.shape()));
  }
  const std::pair<NodeId, Tensor> seed{loss, Tensor(nodes_[loss].value.shape(), 1.0)};
  return backward(std::span(&seed, 1));
}

Gradients Graph::backward(std::span<const std::pair<NodeId, Tensor>> seeds) {
  std::vector<NodeId> roots;
  for (const auto& [id, g] : seeds) {
    check_arg(id);
    if (!nodes_[id].evaluated) throw InvalidConfig("backward seed node was not evaluated by the last forward");
    require(g.size() == nodes_[id].value.size(), "backward seed shape " + shape_string(g.shape()) +
                                                    " does not match node " +
                                                    shape_string(nodes_[id].value.shape()));
    roots.push_back(id);
  }
  const auto live = ancestors(roots);
  std::vector<Tensor> grads(nodes_.size());
  for (const auto& [id, g] : seeds) {
    Tensor& dst = slot(grads, id, nodes_[id].value.shape());
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  }
  for (std::size_t id = nodes_.size(); id-- > 0;) {
    if (!live[id] || grads[id].size() == 0) continue;
    propagate(id, grads, live);
  }

  Gradients out;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    const Node& n = nodes_[id];
    if (!live[id] || (n.op != Op::input && n.op != Op::parameter)) continue;
    out.by_name_[n.name] = grads[id].size() == n.value.size() && grads[id].size() > 0 ? std::move(grads[id])
                                                                                        : Tensor(n.value.shape());
  }
  return out;
}

void Graph::propagate(NodeId id, std::vector<Tensor>& grads, const std::vector<bool>& live) const {
  const Node& n = nodes_[id];
  const Tensor& g = grads[id];
  auto arg = [&](std::size_t i) -> const Tensor& { return nodes_[n.args[i]].value; };
  auto grad_of = [&](std::size_t i) -> Tensor& { return slot(grads, n.args[i], arg(i).shape()); };

  switch (n.op) {
    case Op::input:
    case Op::parameter:
    case Op::zeros_like:
      break;
    case Op::affine: {
      const Tensor& x = arg(0);
      const Tensor& w = arg(1);
      const std::size_t batch = x.rows(), in = x.cols(), out = w.rows();
      Tensor& dx = grad_of(0);
      Tensor& dw = grad_of(1);
      Tensor& db = grad_of(2);
      for (std::size_t r = 0; r < batch; ++r) {
        const double* gr = g.data() + r * out;
        const double* xr = x.data() + r * in;
        double* dxr = dx.data() + r * in;
        for (std::size_t o = 0; o < out; ++o) {
          const double go = gr[o];
          if (go == 0.0) continue;
          const double* wo = w.data() + o * in;
          double* dwo = dw.data() + o * in;
          for (std::size_t i = 0; i < in; ++i) {
            dxr[i] += go * wo[i];
            dwo[i] += go * xr[i];
          }
          db[o] += go;
        }
      }
      break;
    }
    case Op::relu: {
      const Tensor& x = arg(0);
      Tensor& dx = grad_of(0);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > 0.0) dx[i] += g[i];
      }
      break;
    }
    case Op::row_softmax: {
      const Tensor& y = n.value;
      Tensor& dx = grad_of(0);
      const std::size_t rows = y.rows(), cols = y.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += g.at(r, c) * y.at(r, c);
        for (std::size_t c = 0; c < cols; ++c) dx.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
      }
      break;
    }
    case Op::row_normalize: {
      const Tensor& y = n.value;
      Tensor& dx = grad_of(0);
      const std::size_t rows = y.rows(), cols = y.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_g = 0.0, mean_gy = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          mean_g += g.at(r, c);
          mean_gy += g.at(r, c) * y.at(r, c);
        }
        mean_g /= static_cast<double>(cols);
        mean_gy /= static_cast<double>(cols);
        for (std::size_t c = 0; c < cols; ++c) {
          dx.at(r, c) += n.mask[r] * (g.at(r, c) - mean_g - y.at(r, c) * mean_gy);
        }
      }
      break;
    }
    case Op::cross_entropy: {
      const Tensor& labels = arg(1);
      const std::size_t batch = n.mask.rows(), classes = n.mask.cols();
      Tensor& dx = grad_of(0);
      const double scale = g.item() / static_cast<double>(batch);
      for (std::size_t r = 0; r < batch; ++r) {
        const auto label = static_cast<std::size_t>(labels[r]);
        for (std::size_t c = 0; c < classes; ++c) {
          dx.at(r, c) += scale * (n.mask.at(r, c) - (c == label ? 1.0 : 0.0));
        }
      }
      break;
    }
    case Op::dropout: {
      Tensor& dx = grad_of(0);
      if (n.mask.size() == 0) {
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * n.mask[i];
      }
      break;
    }
    case Op::mae: {
      const Tensor& pred = arg(0);
      const Tensor& target = arg(1);
      const double scale = g.item() / static_cast<double>(pred.size());
      Tensor& dp = grad_of(0);
      Tensor* dt = live[n.args[1]] ? &grad_of(1) : nullptr;
      for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        dp[i] += scale * s;
        if (dt != nullptr) (*dt)[i] -= scale * s;
      }
      break;
    }
    case Op::weighted_mix: {
      const Tensor& w = arg(0);
      const std::size_t k = n.args.size() - 1;
      Tensor& dw = grad_of(0);
      for (std::size_t b = 0; b < k; ++b) {
        const Tensor& y = arg(b + 1);
        double dot = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
        dw.at(n.row, b) += dot;
        if (nodes_[n.args[b + 1]].op == Op::zeros_like) continue;
        const double a = w.at(n.row, b);
        Tensor& dy = grad_of(b + 1);
        if (a == 0.0) continue;
        for (std::size_t i = 0; i < y.size(); ++i) dy[i] += a * g[i];
      }
      break;
    }
    case Op::embedding_apply: {
      const Tensor& a = arg(0);
      const Tensor& table = arg(1);
      const std::size_t layers = table.shape()[0], dim = table.shape()[1], k = table.shape()[2];
      const std::size_t batch = a.rows();
      Tensor& da = grad_of(0);
      Tensor& dt = grad_of(1);
      for (std::size_t r = 0; r < batch; ++r) {
        for (std::size_t l = 0; l < layers; ++l) {
          const double* col = a.data() + r * layers * k + l * k;
          double* dcol = da.data() + r * layers * k + l * k;
          for (std::size_t e = 0; e < dim; ++e) {
            const double ge = g.at(r, l * dim + e);
            if (ge == 0.0) continue;
            const double* t = table.data() + (l * dim + e) * k;
            double* dtr = dt.data() + (l * dim + e) * k;
            for (std::size_t j = 0; j < k; ++j) {
              dcol[j] += ge * t[j];
              dtr[j] += ge * col[j];
            }
          }
        }
      }
      break;
    }
  }
}

std::vector<std::int8_t> Graph::kink_signature() const {
  std::vector<std::int8_t> sig;
  auto sign = [](double v) -> std::int8_t { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); };
  for (const auto& n : nodes_) {
    if (!n.evaluated) continue;
    if (n.op == Op::relu) {
      for (double v : nodes_[n.args[0]].value.values()) sig.push_back(sign(v));
    } else if (n.op == Op::mae) {
      const Tensor& p = nodes_[n.args[0]].value;
      const Tensor& t = nodes_[n.args[1]].value;
      for (std::size_t i = 0; i < p.size(); ++i) sig.push_back(sign(p[i] - t[i]));
    }
  }
  return sig;
}

// ---------------------------------------------------------------------------

FiniteDiffReport finite_diff_check(Graph& graph, NodeId loss, const Bindings& bindings, double eps,
                                   std::span<const std::string> names) {
  if (!(eps > 0.0)) throw InvalidConfig("finite difference step must be positive");
  std::vector<std::string> targets(names.begin(), names.end());
  if (targets.empty()) targets = graph.parameter_names();

  Bindings local = bindings;
  graph.forward(loss, local, Mode::eval);
  const auto base_signature = graph.kink_signature();
  const Gradients analytic = graph.backward(loss);

  FiniteDiffReport report;
  for (const auto& name : targets) {
    Tensor* values = nullptr;
    if (graph.is_parameter(name)) {
      values = &graph.parameter_value(name);
    } else {
      const auto it = local.find(name);
      if (it == local.end()) throw InvalidConfig("finite_diff_check: no binding named '" + name + "'");
      values = &it->second;
    }
    const Tensor zero_grad(values->shape());
    const Tensor& grad = analytic.contains(name) ? analytic[name] : zero_grad;
    for (std::size_t i = 0; i < values->size(); ++i) {
      const double original = (*values)[i];
      (*values)[i] = original + eps;
      const double up = graph.forward(loss, local, Mode::eval).item();
      const bool smooth_up = graph.kink_signature() == base_signature;
      (*values)[i] = original - eps;
      const double down = graph.forward(loss, local, Mode::eval).item();
      const bool smooth_down = graph.kink_signature() == base_signature;
      (*values)[i] = original;
      if (!smooth_up || !smooth_down) {
        ++report.skipped;
        continue;
      }
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(grad[i] - numeric) / std::max(1.0, std::abs(numeric));
      report.max_rel_error = std::max(report.max_rel_error, err);
      ++report.compared;
    }
  }
  graph.forward(loss, local, Mode::eval);
  return report;
}

void Adam::step(const std::string& name, Tensor& param, const Tensor& grad) {
  require(param.size() == grad.size(), "Adam: gradient shape does not match parameter '" + name + "'");
  auto& s = state_[name];
  if (s.m.size() != param.size()) {
    s.m = Tensor(param.shape());
    s.v = Tensor(param.shape());
    s.t = 0;
  }
  ++s.t;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(s.t));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(s.t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * grad[i];
    s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * grad[i] * grad[i];
    param[i] -= lr_ * (s.m[i] / c1) / (std::sqrt(s.v[i] / c2) + epsilon_);
  }
}

void SgdMomentum::step(const std::string& name, Tensor& param, const Tensor& grad) {
  require(param.size() == grad.size(), "SGD: gradient shape does not match parameter '" + name + "'");
  auto& v = velocity_[name];
  if (v.size() != param.size()) v = Tensor(param.shape());
  for (std::size_t i = 0; i < param.size(); ++i) {
    v[i] = momentum_ * v[i] + grad[i];
    param[i] -= lr_ * v[i];
  }
}

}  // namespace ehdnas::diff
