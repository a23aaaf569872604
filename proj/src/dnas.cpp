#include "ehdnas/dnas.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ehdnas/errors.hpp"
#include "ehdnas/log.hpp"
#include "ehdnas/parallel.hpp"

namespace ehdnas::dnas {

using diff::NodeId;
using diff::Tensor;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Task data

TaskData gen_task_data(std::uint64_t seed, std::size_t n, std::size_t input_dim, std::size_t num_classes,
                       double noise) {
  if (num_classes < 2) throw InvalidConfig("the task needs at least two classes");
  if (n < std::max<std::size_t>(num_classes, 5)) throw InvalidConfig("n must be >= max(C, 5)");
  if (num_classes > input_dim) throw InvalidConfig("unit-spaced centres need C <= d");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw InvalidConfig("noise must be a finite value >= 0");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::normal_distribution<double> gauss(0.0, 1.0);
  const double centre = 1.0 / std::sqrt(2.0);
  std::vector<double> features(n * input_dim);
  std::vector<double> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = order[i] % num_classes;
    labels[i] = static_cast<double>(label);
    for (std::size_t j = 0; j < input_dim; ++j) {
      features[i * input_dim + j] = (j == label ? centre : 0.0) + noise * gauss(rng);
    }
  }

  const std::size_t n_val = std::max<std::size_t>(1, n / 5);
  const std::size_t n_test = std::max<std::size_t>(1, n / 5);
  const std::size_t n_train = n - n_val - n_test;
  auto take = [&](std::size_t start, std::size_t count) {
    TaskSplit s;
    s.features = Tensor({count, input_dim}, std::vector<double>(features.begin() + start * input_dim,
                                                                features.begin() + (start + count) * input_dim));
    s.labels = Tensor({count}, std::vector<double>(labels.begin() + start, labels.begin() + start + count));
    return s;
  };
  TaskData data;
  data.input_dim = input_dim;
  data.num_classes = num_classes;
  data.train = take(0, n_train);
  data.val = take(n_train, n_val);
  data.test = take(n_train + n_val, n_test);
  return data;
}

// ---------------------------------------------------------------------------
// Hardware costs

LutHwCost::LutHwCost(perf::Lut lut) : lut_(std::move(lut)) {
  // Layers are independent under uniform sampling, so variances add.
  const std::size_t k = lut_.num_candidates();
  double var = 0.0;
  for (std::size_t l = 0; l < lut_.num_layers(); ++l) {
    double mean = 0.0;
    for (std::size_t j = 0; j < k; ++j) mean += lut_.entries(j, l);
    mean /= static_cast<double>(k);
    for (std::size_t j = 0; j < k; ++j) var += (lut_.entries(j, l) - mean) * (lut_.entries(j, l) - mean);
  }
  var /= static_cast<double>(k);
  scale_ms_ = var > 0.0 ? std::sqrt(var) : 1.0;
}

arch::RealMatrix LutHwCost::gradient(const arch::ArchMatrix& m) const {
  if (m.num_candidates() != lut_.num_candidates() || m.num_layers() != lut_.num_layers()) {
    throw ShapeMismatch("architecture matrix does not match the LUT");
  }
  return lut_.entries;
}

// ---------------------------------------------------------------------------
// Networks

namespace {

std::uint64_t fnv1a(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(seed >> (8 * i)));
  for (char c : name) mix(static_cast<unsigned char>(c));
  return h;
}

Tensor init_weight(std::uint64_t seed, const std::string& name, std::size_t out, std::size_t in) {
  std::mt19937_64 rng(fnv1a(seed, name));
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor w({out, in});
  for (double& v : w.values()) v = dist(rng);
  return w;
}

NodeId affine_layer(diff::Graph& g, NodeId x, const std::string& prefix, std::size_t out, std::size_t in,
                    std::uint64_t seed, bool zero = false) {
  const auto w = g.parameter(prefix + ".weight", zero ? Tensor({out, in}) : init_weight(seed, prefix + ".weight", out, in));
  const auto b = g.parameter(prefix + ".bias", Tensor({out}));
  return g.affine(x, w, b);
}

// Output of block k at layer l, or nullopt for the zero block.
std::optional<NodeId> block_node(diff::Graph& g, NodeId x, const arch::SearchSpaceSpec& space, std::size_t l,
                                 std::size_t k, std::uint64_t seed) {
  const auto& block = space.catalog[k];
  const std::size_t h = space.hidden_width;
  const std::string prefix = "l" + std::to_string(l) + ".k" + std::to_string(k);
  switch (block.kind) {
    case arch::BlockKind::dense:
      return g.row_normalize(g.relu(affine_layer(g, x, prefix, h, h, seed)));
    case arch::BlockKind::low_rank: {
      const std::size_t r = *block.rank;
      const auto down = affine_layer(g, x, prefix + ".down", r, h, seed);
      return g.row_normalize(g.relu(affine_layer(g, down, prefix + ".up", h, r, seed)));
    }
    case arch::BlockKind::identity:
      return x;
    case arch::BlockKind::zero:
      return std::nullopt;
  }
  return std::nullopt;
}

void check_space(const arch::SearchSpaceSpec& space) {
  if (space.num_layers == 0 || space.num_candidates() == 0 || space.hidden_width == 0 || space.input_dim == 0 ||
      space.num_classes < 2) {
    throw InvalidConfig("search space must have L, K, H, d >= 1 and C >= 2");
  }
}

}  // namespace

Supernet build_supernet(const arch::SearchSpaceSpec& space, std::uint64_t seed, bool freeze_head) {
  check_space(space);
  Supernet net;
  net.space = space;
  net.head_frozen = freeze_head;
  auto& g = net.graph;
  net.x = g.input("x");
  net.labels = g.input("labels");
  net.mix = g.input("mix");
  NodeId h = affine_layer(g, net.x, "stem", space.hidden_width, space.input_dim, seed);
  for (std::size_t l = 0; l < space.num_layers; ++l) {
    std::vector<NodeId> branches;
    for (std::size_t k = 0; k < space.num_candidates(); ++k) {
      const auto out = block_node(g, h, space, l, k, seed);
      branches.push_back(out ? *out : g.zeros_like(h));
    }
    h = g.weighted_mix(net.mix, l, std::move(branches));
  }
  net.scores = affine_layer(g, h, "head", space.num_classes, space.hidden_width, seed, freeze_head);
  net.loss = g.cross_entropy(net.scores, net.labels);
  net.arch_logits = arch::RealMatrix(space.num_candidates(), space.num_layers);
  return net;
}

DiscreteNet build_discrete(const arch::SearchSpaceSpec& space, const arch::DiscreteArch& arch, std::uint64_t seed) {
  check_space(space);
  arch::check_arch(arch, space);
  DiscreteNet net;
  auto& g = net.graph;
  net.x = g.input("x");
  net.labels = g.input("labels");
  NodeId h = affine_layer(g, net.x, "stem", space.hidden_width, space.input_dim, seed);
  for (std::size_t l = 0; l < space.num_layers; ++l) {
    const auto out = block_node(g, h, space, l, arch.ops[l], seed);
    h = out ? *out : g.zeros_like(h);
  }
  net.scores = affine_layer(g, h, "head", space.num_classes, space.hidden_width, seed);
  net.loss = g.cross_entropy(net.scores, net.labels);
  return net;
}

namespace {

Tensor mix_tensor(const arch::ArchMatrix& m) {
  const auto t = m.weights().transposed();
  return Tensor({m.num_layers(), m.num_candidates()}, std::vector<double>(t.values().begin(), t.values().end()));
}

diff::Bindings net_bindings(const Tensor& x, const Tensor& labels) {
  diff::Bindings b;
  b.emplace("x", x);
  b.emplace("labels", labels);
  return b;
}

void check_mix(const Supernet& net, const arch::ArchMatrix& m) {
  if (m.num_candidates() != net.space.num_candidates() || m.num_layers() != net.space.num_layers) {
    throw ShapeMismatch("architecture matrix is " + std::to_string(m.num_candidates()) + "x" +
                        std::to_string(m.num_layers()) + ", supernet expects " +
                        std::to_string(net.space.num_candidates()) + "x" + std::to_string(net.space.num_layers));
  }
}

}  // namespace

Tensor supernet_forward(Supernet& net, const Tensor& x, const arch::ArchMatrix& m) {
  check_mix(net, m);
  auto b = net_bindings(x, Tensor({x.rows()}));
  b.emplace("mix", mix_tensor(m));
  return net.graph.forward(net.scores, b);
}

Tensor discrete_forward(DiscreteNet& net, const Tensor& x) {
  return net.graph.forward(net.scores, net_bindings(x, Tensor({x.rows()})));
}

double accuracy(const Tensor& scores, const Tensor& labels) {
  const std::size_t rows = scores.rows(), cols = scores.cols();
  if (labels.size() != rows) throw ShapeMismatch("label count does not match score rows");
  if (rows == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = scores.data() + r * cols;
    const auto best = static_cast<std::size_t>(std::max_element(row, row + cols) - row);
    if (best == static_cast<std::size_t>(labels[r])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(rows);
}

// ---------------------------------------------------------------------------
// Search

std::string_view to_string(HwLossKind kind) {
  switch (kind) {
    case HwLossKind::none:
      return "none";
    case HwLossKind::deep:
      return "deep";
    case HwLossKind::lut:
      return "lut";
  }
  return "none";
}

HwLossKind parse_hw_loss_kind(std::string_view text) {
  if (text == "none") return HwLossKind::none;
  if (text == "deep") return HwLossKind::deep;
  if (text == "lut") return HwLossKind::lut;
  throw InvalidConfig("hardware loss kind must be deep, lut or none, got '" + std::string(text) + "'");
}

void check_config(const SearchConfig& cfg) {
  if (!(cfg.beta >= 0.0) || !std::isfinite(cfg.beta)) throw InvalidConfig("beta must be a finite value >= 0");
  if (cfg.epochs == 0 || cfg.batch_size == 0) throw InvalidConfig("epochs and batch size must be positive");
  if (!(cfg.lr_weights > 0.0) || !(cfg.lr_arch > 0.0)) throw InvalidConfig("learning rates must be positive");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) throw InvalidConfig("momentum must be in [0, 1)");
}

namespace {

struct Batch {
  Tensor x;
  Tensor labels;
};

// Mini-batches of a split in the given row order.
std::vector<Batch> make_batches(const TaskSplit& split, std::span<const std::size_t> order, std::size_t batch_size) {
  const std::size_t d = split.features.cols();
  std::vector<Batch> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - start);
    Batch b{Tensor({count, d}), Tensor({count})};
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t src = order[start + i];
      std::copy_n(split.features.data() + src * d, d, b.x.data() + i * d);
      b.labels[i] = split.labels[src];
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  return order;
}

void check_task(const TaskData& task, const arch::SearchSpaceSpec& space) {
  if (task.train.size() == 0 || task.val.size() == 0 || task.test.size() == 0) {
    throw EmptyDataset("task data has an empty split");
  }
  if (task.input_dim != space.input_dim || task.num_classes != space.num_classes) {
    throw MismatchedSpace("task data (d, C) does not match the search space");
  }
}

// Small graph carrying the softmax from arch logits to the mixing weights.
struct ArchGraph {
  diff::Graph graph;
  NodeId softmax = 0;
};

ArchGraph make_arch_graph(std::size_t num_layers, std::size_t num_candidates) {
  ArchGraph a;
  const auto logits = a.graph.parameter("arch_logits", Tensor({num_layers, num_candidates}));
  a.softmax = a.graph.row_softmax(logits);
  return a;
}

arch::ArchMatrix current_mix(ArchGraph& a, std::size_t num_candidates, std::size_t num_layers) {
  const Tensor& p = a.graph.forward(a.softmax, {});
  arch::RealMatrix m(num_candidates, num_layers);
  for (std::size_t l = 0; l < num_layers; ++l) {
    for (std::size_t k = 0; k < num_candidates; ++k) m(k, l) = p.at(l, k);
  }
  return arch::ArchMatrix(std::move(m));
}

}  // namespace

SearchResult search(const arch::SearchSpaceSpec& space, const TaskData& task, const HwCost* hw,
                    const SearchConfig& cfg) {
  check_config(cfg);
  check_task(task, space);
  const std::size_t k = space.num_candidates(), layers = space.num_layers;
  const bool use_hw = cfg.hw_loss_kind != HwLossKind::none && cfg.beta > 0.0;
  if (cfg.hw_loss_kind != HwLossKind::none) {
    if (hw == nullptr) throw InvalidConfig("hardware loss kind '" + std::string(to_string(cfg.hw_loss_kind)) +
                                           "' needs a hardware model");
    if (hw->num_candidates() != k || hw->num_layers() != layers) {
      throw MismatchedSpace("hardware model (K, L) = (" + std::to_string(hw->num_candidates()) + ", " +
                            std::to_string(hw->num_layers()) + ") does not match the space (" + std::to_string(k) +
                            ", " + std::to_string(layers) + ")");
    }
  }
  const double hw_weight = use_hw ? cfg.beta / hw->scale_ms() : 0.0;

  Supernet net = build_supernet(space, cfg.seed, cfg.freeze_head);
  ArchGraph arch_graph = make_arch_graph(layers, k);
  diff::SgdMomentum weight_opt(cfg.lr_weights, cfg.momentum);
  diff::Adam arch_opt(cfg.lr_arch);
  std::vector<std::string> weight_params;
  for (auto& name : net.graph.parameter_names()) {
    if (net.head_frozen && name.rfind("head.", 0) == 0) continue;
    weight_params.push_back(std::move(name));
  }

  std::mt19937_64 rng(cfg.seed ^ 0xA0761D6478BD642FULL);
  auto train_order = identity_order(task.train.size());
  const auto val_batches = make_batches(task.val, identity_order(task.val.size()), cfg.batch_size);

  SearchResult result;
  result.beta = cfg.beta;
  result.hw_loss_kind = cfg.hw_loss_kind;
  result.seed = cfg.seed;
  double best_objective = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Weight step at the current relaxed architecture.
    Tensor mix = mix_tensor(current_mix(arch_graph, k, layers));
    std::shuffle(train_order.begin(), train_order.end(), rng);
    double train_loss = 0.0;
    const auto train_batches = make_batches(task.train, train_order, cfg.batch_size);
    for (const auto& batch : train_batches) {
      auto b = net_bindings(batch.x, batch.labels);
      b.emplace("mix", mix);
      train_loss += net.graph.forward(net.loss, b, diff::Mode::train).item();
      const auto grads = net.graph.backward(net.loss);
      for (const auto& name : weight_params) weight_opt.step(name, net.graph.parameter_value(name), grads[name]);
    }
    train_loss /= static_cast<double>(train_batches.size());

    // Architecture step over one pass of the validation split.
    for (const auto& batch : val_batches) {
      const arch::ArchMatrix m = current_mix(arch_graph, k, layers);
      auto b = net_bindings(batch.x, batch.labels);
      b.emplace("mix", mix_tensor(m));
      net.graph.forward(net.loss, b, diff::Mode::train);
      Tensor upstream = net.graph.backward(net.loss)["mix"];
      if (use_hw) {
        const auto g = hw->gradient(m);
        for (std::size_t l = 0; l < layers; ++l) {
          for (std::size_t j = 0; j < k; ++j) upstream.at(l, j) += hw_weight * g(j, l);
        }
      }
      arch_graph.graph.forward(arch_graph.softmax, {});
      const std::pair<NodeId, Tensor> seed{arch_graph.softmax, std::move(upstream)};
      const auto grads = arch_graph.graph.backward(std::span(&seed, 1));
      arch_opt.step("arch_logits", arch_graph.graph.parameter_value("arch_logits"), grads["arch_logits"]);
    }

    // Epoch summary at the updated architecture.
    const arch::ArchMatrix m = current_mix(arch_graph, k, layers);
    mix = mix_tensor(m);
    double val_loss = 0.0;
    for (const auto& batch : val_batches) {
      auto b = net_bindings(batch.x, batch.labels);
      b.emplace("mix", mix);
      val_loss += net.graph.forward(net.loss, b).item() * static_cast<double>(batch.labels.size());
    }
    val_loss /= static_cast<double>(task.val.size());
    EpochRecord record{train_loss, val_loss, std::nullopt};
    double objective = val_loss;
    if (use_hw) {
      record.hw_term_ms = hw->latency_ms(m);
      objective += hw_weight * *record.hw_term_ms;
    }
    result.history.push_back(record);
    logger()->debug("search epoch {}: train CE {:.5f}, val CE {:.5f}{}", epoch, train_loss, val_loss,
                    record.hw_term_ms ? ", hw " + std::to_string(*record.hw_term_ms) + " ms" : std::string());
    if (objective < best_objective) {
      best_objective = objective;
      result.relaxed_final = m;
      result.best_epoch = epoch;
    }
  }

  result.arch = arch::discretize(result.relaxed_final);
  for (const auto& budget : perf::builtin_budgets()) {
    result.searched_latency_ms.emplace_back(budget.name, perf::benchmark_generic(result.arch, space, budget).total_ms);
  }
  if (cfg.final_epochs > 0) {
    FinalTrainConfig final_cfg;
    final_cfg.epochs = cfg.final_epochs;
    final_cfg.learning_rate = cfg.lr_weights;
    final_cfg.momentum = cfg.momentum;
    final_cfg.batch_size = cfg.batch_size;
    result.final_accuracy = train_final(space, result.arch, task, cfg.seed, final_cfg);
  }
  logger()->info("search (beta {}, {}): arch {} at epoch {}", cfg.beta, to_string(cfg.hw_loss_kind),
                 arch::to_string(result.arch), result.best_epoch);
  return result;
}

std::string to_json(const SearchResult& result) {
  json relaxed = json::array();
  const auto& w = result.relaxed_final.weights();
  for (std::size_t r = 0; r < w.rows(); ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < w.cols(); ++c) row.push_back(w(r, c));
    relaxed.push_back(std::move(row));
  }
  json train_loss = json::array(), val_loss = json::array(), hw_term = json::array();
  bool has_hw = false;
  for (const auto& e : result.history) {
    train_loss.push_back(e.train_loss);
    val_loss.push_back(e.val_loss);
    if (e.hw_term_ms) {
      has_hw = true;
      hw_term.push_back(*e.hw_term_ms);
    }
  }
  json history{{"train_loss", std::move(train_loss)}, {"val_loss", std::move(val_loss)}};
  if (has_hw) history["hw_term_ms"] = std::move(hw_term);
  json latency = json::object();
  for (const auto& [name, ms] : result.searched_latency_ms) latency[name] = ms;
  json doc{{"arch", arch::to_string(result.arch)},
           {"relaxed_final", std::move(relaxed)},
           {"history", std::move(history)},
           {"best_epoch", result.best_epoch},
           {"searched_latency_ms", std::move(latency)},
           {"final_accuracy", result.final_accuracy ? json(*result.final_accuracy) : json(nullptr)},
           {"beta", result.beta},
           {"hw_loss_kind", to_string(result.hw_loss_kind)},
           {"seed", result.seed}};
  return doc.dump(2);
}

double train_final(const arch::SearchSpaceSpec& space, const arch::DiscreteArch& arch, const TaskData& task,
                   std::uint64_t seed, const FinalTrainConfig& cfg) {
  check_task(task, space);
  if (cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0)) {
    throw InvalidConfig("final training needs positive epochs, batch size and learning rate");
  }
  DiscreteNet net = build_discrete(space, arch, seed);
  diff::SgdMomentum opt(cfg.learning_rate, cfg.momentum);
  const auto params = net.graph.parameter_names();
  std::mt19937_64 rng(seed ^ 0xE7037ED1A0B428DBULL);
  auto order = identity_order(task.train.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (const auto& batch : make_batches(task.train, order, cfg.batch_size)) {
      net.graph.forward(net.loss, net_bindings(batch.x, batch.labels), diff::Mode::train);
      const auto grads = net.graph.backward(net.loss);
      for (const auto& name : params) opt.step(name, net.graph.parameter_value(name), grads[name]);
    }
  }
  return accuracy(discrete_forward(net, task.test.features), task.test.labels);
}

// ---------------------------------------------------------------------------
// Sweep

std::vector<SweepRow> sweep_beta(const arch::SearchSpaceSpec& space, const TaskData& task, const HwCost* hw,
                                 const SearchConfig& base, std::span<const double> grid,
                                 std::span<const std::uint64_t> seeds, const FinalTrainConfig& final_cfg,
                                 std::size_t threads) {
  if (grid.empty()) throw InvalidConfig("beta grid is empty");
  if (seeds.empty()) throw InvalidConfig("seed list is empty");
  check_config(base);
  for (double beta : grid) {
    if (!(beta >= 0.0) || !std::isfinite(beta)) throw InvalidConfig("beta values must be finite and >= 0");
  }
  std::vector<SweepRow> rows(grid.size() * seeds.size());
  parallel_for(rows.size(), threads, [&](std::size_t i) {
    SearchConfig cfg = base;
    cfg.beta = grid[i / seeds.size()];
    cfg.seed = seeds[i % seeds.size()];
    cfg.final_epochs = 0;
    if (cfg.beta == 0.0) cfg.hw_loss_kind = HwLossKind::none;
    const auto result = search(space, task, hw, cfg);
    SweepRow row;
    row.beta = cfg.beta;
    row.seed = cfg.seed;
    row.arch = result.arch;
    for (const auto& [name, ms] : result.searched_latency_ms) {
      if (name == "small") row.latency_small_ms = ms;
      if (name == "medium") row.latency_medium_ms = ms;
      if (name == "large") row.latency_large_ms = ms;
    }
    row.accuracy = train_final(space, result.arch, task, cfg.seed, final_cfg);
    rows[i] = std::move(row);
  });
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::ostringstream out;
  out.precision(17);
  out << "beta,seed,latency_small_ms,latency_medium_ms,latency_large_ms,accuracy\n";
  for (const auto& r : rows) {
    out << r.beta << ',' << r.seed << ',' << r.latency_small_ms << ',' << r.latency_medium_ms << ','
        << r.latency_large_ms << ',' << r.accuracy << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Oracle and rendering

std::optional<OracleResult> brute_force_min(
    const arch::SearchSpaceSpec& space,
    const std::function<std::optional<double>(const arch::DiscreteArch&)>& objective) {
  if (space.num_candidates() == 0 || space.num_layers == 0) throw InvalidConfig("space is empty");
  if (space.cardinality() > kMaxEnumerable) {
    throw SpaceTooLarge("space has " + std::to_string(space.cardinality()) + " architectures, limit is 1e6");
  }
  std::optional<OracleResult> best;
  arch::for_each_arch(space, [&](const arch::DiscreteArch& a) {
    const auto value = objective(a);
    if (value && (!best || *value < best->latency_ms)) best = OracleResult{a, *value};
  });
  return best;
}

std::optional<OracleResult> brute_force_best(const arch::SearchSpaceSpec& space, const perf::HardwareBudget& budget,
                                             perf::Paradigm paradigm) {
  perf::check_budget(budget);
  return brute_force_min(space, [&](const arch::DiscreteArch& a) -> std::optional<double> {
    const auto report = perf::benchmark(a, space, budget, paradigm);
    if (!report.feasible) return std::nullopt;
    return report.total_ms;
  });
}

std::string export_dot(const arch::DiscreteArch& arch, const arch::SearchSpaceSpec& space) {
  arch::check_arch(arch, space);
  std::ostringstream out;
  out << "digraph arch {\n  rankdir=LR;\n  stem [label=\"stem\"];\n";
  for (std::size_t l = 0; l < arch.ops.size(); ++l) {
    out << "  l" << l << " [label=\"" << space.catalog[arch.ops[l]].name() << "\"];\n";
  }
  out << "  head [label=\"head\"];\n  stem";
  for (std::size_t l = 0; l < arch.ops.size(); ++l) out << " -> l" << l;
  out << " -> head;\n}\n";
  return out.str();
}

}  // namespace ehdnas::dnas
