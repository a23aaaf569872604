#include "ehdnas/hwloss.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ehdnas/errors.hpp"
#include "ehdnas/log.hpp"

namespace ehdnas::hw {

using diff::Tensor;
using nlohmann::json;

void check_config(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0) || cfg.batch_size == 0 || cfg.epochs == 0 || cfg.embedding_size == 0 ||
      cfg.h1 == 0 || cfg.h2 == 0) {
    throw InvalidConfig("training configuration values must be positive");
  }
  if (!(cfg.dropout_p >= 0.0 && cfg.dropout_p < 1.0)) throw InvalidConfig("dropout_p must be in [0, 1)");
}

namespace {

Tensor uniform_tensor(diff::Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

HwLossModel init_model(std::size_t num_candidates, std::size_t num_layers, const TrainConfig& cfg) {
  check_config(cfg);
  if (num_candidates == 0 || num_layers == 0) throw InvalidConfig("model needs K >= 1 and L >= 1");
  HwLossModel m;
  m.num_candidates = num_candidates;
  m.num_layers = num_layers;
  m.embedding_size = cfg.embedding_size;
  m.h1 = cfg.h1;
  m.h2 = cfg.h2;
  m.dropout_p = cfg.dropout_p;
  std::mt19937_64 rng(cfg.seed);
  const std::size_t features = cfg.embedding_size * num_layers;
  m.embeddings = uniform_tensor({num_layers, cfg.embedding_size, num_candidates}, num_candidates, rng);
  m.fc1_weight = uniform_tensor({cfg.h1, features}, features, rng);
  m.fc1_bias = Tensor({cfg.h1});
  m.fc2_weight = uniform_tensor({cfg.h2, cfg.h1}, cfg.h1, rng);
  m.fc2_bias = Tensor({cfg.h2});
  m.fc3_weight = uniform_tensor({1, cfg.h2}, cfg.h2, rng);
  m.fc3_bias = Tensor({1});
  return m;
}

PredictorGraph build_graph(const HwLossModel& model) {
  PredictorGraph p;
  auto& g = p.graph;
  p.arch = g.input("arch");
  p.target = g.input("target");
  p.seed = g.input("seed");
  const auto table = g.parameter("embeddings", model.embeddings);
  const auto w1 = g.parameter("fc1.weight", model.fc1_weight);
  const auto b1 = g.parameter("fc1.bias", model.fc1_bias);
  const auto w2 = g.parameter("fc2.weight", model.fc2_weight);
  const auto b2 = g.parameter("fc2.bias", model.fc2_bias);
  const auto w3 = g.parameter("fc3.weight", model.fc3_weight);
  const auto b3 = g.parameter("fc3.bias", model.fc3_bias);
  const auto e = g.embedding_apply(p.arch, table);
  const auto a1 = g.relu(g.affine(e, w1, b1));
  const auto a2 = g.relu(g.affine(a1, w2, b2));
  const auto dropped = g.dropout(a2, model.dropout_p, p.seed);
  p.output = g.affine(dropped, w3, b3);
  p.loss = g.mae(p.output, p.target);
  return p;
}

void read_parameters(const diff::Graph& graph, HwLossModel& model) {
  model.embeddings = graph.parameter_value("embeddings");
  model.fc1_weight = graph.parameter_value("fc1.weight");
  model.fc1_bias = graph.parameter_value("fc1.bias");
  model.fc2_weight = graph.parameter_value("fc2.weight");
  model.fc2_bias = graph.parameter_value("fc2.bias");
  model.fc3_weight = graph.parameter_value("fc3.weight");
  model.fc3_bias = graph.parameter_value("fc3.bias");
}

Tensor encode(std::span<const arch::DiscreteArch> archs, std::size_t num_candidates) {
  const std::size_t layers = archs.empty() ? 0 : archs.front().ops.size();
  Tensor out({archs.size(), layers * num_candidates});
  for (std::size_t r = 0; r < archs.size(); ++r) {
    if (archs[r].ops.size() != layers) throw ShapeMismatch("architectures in one batch differ in depth");
    for (std::size_t l = 0; l < layers; ++l) {
      if (archs[r].ops[l] >= num_candidates) throw InvalidArch("op index out of range for the model");
      out.at(r, l * num_candidates + archs[r].ops[l]) = 1.0;
    }
  }
  return out;
}

Tensor encode(const arch::ArchMatrix& m) {
  const std::size_t k = m.num_candidates(), layers = m.num_layers();
  Tensor out({1, layers * k});
  for (std::size_t l = 0; l < layers; ++l) {
    for (std::size_t j = 0; j < k; ++j) out[l * k + j] = m(j, l);
  }
  return out;
}

void check_shape(const HwLossModel& model, const arch::ArchMatrix& m) {
  if (m.num_candidates() != model.num_candidates || m.num_layers() != model.num_layers) {
    throw ShapeMismatch("architecture matrix is " + std::to_string(m.num_candidates()) + "x" +
                        std::to_string(m.num_layers()) + ", model expects " + std::to_string(model.num_candidates) +
                        "x" + std::to_string(model.num_layers));
  }
}

std::vector<double> embed(const HwLossModel& model, const arch::ArchMatrix& m) {
  check_shape(model, m);
  const std::size_t k = model.num_candidates, e = model.embedding_size;
  std::vector<double> out(model.num_layers * e, 0.0);
  for (std::size_t l = 0; l < model.num_layers; ++l) {
    for (std::size_t r = 0; r < e; ++r) {
      double acc = 0.0;
      for (std::size_t j = 0; j < k; ++j) acc += model.embeddings[(l * e + r) * k + j] * m(j, l);
      out[l * e + r] = acc;
    }
  }
  return out;
}

namespace {

diff::Bindings query_bindings(Tensor arch) {
  const std::size_t batch = arch.rows();
  diff::Bindings b;
  b.emplace("arch", std::move(arch));
  b.emplace("target", Tensor({batch, 1}));
  b.emplace("seed", Tensor::scalar(0.0));
  return b;
}

}  // namespace

double predict(const HwLossModel& model, const arch::ArchMatrix& m) {
  check_shape(model, m);
  auto p = build_graph(model);
  const double out = p.graph.forward(p.output, query_bindings(encode(m))).item();
  return out * model.std_ms + model.mean_ms;
}

std::vector<double> predict_batch(const HwLossModel& model, std::span<const arch::DiscreteArch> archs) {
  std::vector<double> out;
  out.reserve(archs.size());
  auto p = build_graph(model);
  constexpr std::size_t kChunk = 4096;
  for (std::size_t start = 0; start < archs.size(); start += kChunk) {
    const auto chunk = archs.subspan(start, std::min(kChunk, archs.size() - start));
    for (const auto& a : chunk) {
      if (a.ops.size() != model.num_layers) throw ShapeMismatch("architecture depth does not match the model");
    }
    const Tensor& y = p.graph.forward(p.output, query_bindings(encode(chunk, model.num_candidates)));
    for (double v : y.values()) out.push_back(v * model.std_ms + model.mean_ms);
  }
  return out;
}

arch::RealMatrix grad_arch(const HwLossModel& model, const arch::ArchMatrix& m) {
  check_shape(model, m);
  auto p = build_graph(model);
  p.graph.forward(p.output, query_bindings(encode(m)));
  const auto grads = p.graph.backward(p.output);
  const Tensor& g = grads["arch"];
  const std::size_t k = model.num_candidates;
  arch::RealMatrix out(k, model.num_layers);
  for (std::size_t l = 0; l < model.num_layers; ++l) {
    for (std::size_t j = 0; j < k; ++j) out(j, l) = g[l * k + j] * model.std_ms;
  }
  return out;
}

diff::FiniteDiffReport gradcheck(const HwLossModel& model, const arch::ArchMatrix& m, double eps) {
  check_shape(model, m);
  auto p = build_graph(model);
  const std::string names[] = {"arch"};
  return diff::finite_diff_check(p.graph, p.output, query_bindings(encode(m)), eps, names);
}

namespace {

void check_dataset(const perf::LatencyDataset& ds, const char* what) {
  if (ds.empty()) throw EmptyDataset(std::string(what) + " dataset is empty");
}

// Mean absolute error of the standardized predictions over a pre-encoded set.
double standardized_mae(PredictorGraph& p, const Tensor& archs, const std::vector<double>& targets) {
  const std::size_t n = archs.rows(), width = archs.cols();
  constexpr std::size_t kChunk = 4096;
  double total = 0.0;
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t count = std::min(kChunk, n - start);
    Tensor chunk({count, width},
                 std::vector<double>(archs.data() + start * width, archs.data() + (start + count) * width));
    const Tensor& y = p.graph.forward(p.output, query_bindings(std::move(chunk)));
    for (std::size_t i = 0; i < count; ++i) total += std::abs(y[i] - targets[start + i]);
  }
  return total / static_cast<double>(n);
}

std::vector<arch::DiscreteArch> archs_of(const perf::LatencyDataset& ds) {
  std::vector<arch::DiscreteArch> out;
  out.reserve(ds.size());
  for (const auto& r : ds.records) out.push_back(r.arch);
  return out;
}

}  // namespace

HwLossModel train(const perf::LatencyDataset& train_set, const perf::LatencyDataset& val_set,
                  const TrainConfig& cfg, TrainHistory* history) {
  check_config(cfg);
  check_dataset(train_set, "training");
  check_dataset(val_set, "validation");
  if (train_set.num_candidates != val_set.num_candidates || train_set.num_layers != val_set.num_layers) {
    throw MismatchedSpace("training and validation datasets disagree on (K, L)");
  }
  if (cfg.batch_size > train_set.size()) {
    throw InvalidConfig("batch size " + std::to_string(cfg.batch_size) + " exceeds the " +
                        std::to_string(train_set.size()) + "-record training set");
  }
  const std::size_t k = train_set.num_candidates;
  const std::size_t n = train_set.size();

  HwLossModel model = init_model(k, train_set.num_layers, cfg);
  double mean = 0.0;
  for (const auto& r : train_set.records) mean += r.latency_ms;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (const auto& r : train_set.records) var += (r.latency_ms - mean) * (r.latency_ms - mean);
  const double stddev = std::sqrt(var / static_cast<double>(n));
  model.mean_ms = mean;
  // A constant-latency set has no spread; fall back to unit scale.
  model.std_ms = stddev > 0.0 ? stddev : 1.0;

  const auto standardize = [&](const perf::LatencyDataset& ds) {
    std::vector<double> t;
    t.reserve(ds.size());
    for (const auto& r : ds.records) t.push_back((r.latency_ms - model.mean_ms) / model.std_ms);
    return t;
  };
  const auto train_archs = archs_of(train_set);
  const Tensor train_encoded = encode(train_archs, k);
  const auto train_targets = standardize(train_set);
  const auto val_archs = archs_of(val_set);
  const Tensor val_encoded = encode(val_archs, k);
  const auto val_targets = standardize(val_set);
  const std::size_t width = train_encoded.cols();

  auto p = build_graph(model);
  diff::Adam adam(cfg.learning_rate);
  const auto params = p.graph.parameter_names();
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  double best_val = std::numeric_limits<double>::infinity();
  HwLossModel best = model;
  TrainHistory local_history;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      Tensor batch({count, width});
      Tensor target({count, 1});
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[start + i];
        std::copy_n(train_encoded.data() + src * width, width, batch.data() + i * width);
        target[i] = train_targets[src];
      }
      const auto dropout_seed =
          static_cast<double>((cfg.seed * 1000003ULL + epoch * 7919ULL + batches) & ((1ULL << 52) - 1));
      diff::Bindings bindings;
      bindings.emplace("arch", std::move(batch));
      bindings.emplace("target", std::move(target));
      bindings.emplace("seed", Tensor::scalar(dropout_seed));
      epoch_loss += p.graph.forward(p.loss, bindings, diff::Mode::train).item();
      const auto grads = p.graph.backward(p.loss);
      for (const auto& name : params) adam.step(name, p.graph.parameter_value(name), grads[name]);
      ++batches;
    }
    const double val_mae = standardized_mae(p, val_encoded, val_targets);
    local_history.train_mae.push_back(epoch_loss / static_cast<double>(batches));
    local_history.val_mae.push_back(val_mae);
    logger()->debug("hwloss epoch {}: train MAE {:.5f}, val MAE {:.5f}", epoch, local_history.train_mae.back(),
                    val_mae);
    if (val_mae < best_val) {
      best_val = val_mae;
      read_parameters(p.graph, best);
      local_history.best_epoch = epoch;
    }
  }
  best.mean_ms = model.mean_ms;
  best.std_ms = model.std_ms;
  logger()->info("hwloss trained: best val MAE {:.5f} (std units) at epoch {}", best_val, local_history.best_epoch);
  if (history != nullptr) *history = std::move(local_history);
  return best;
}

EvalReport evaluate_predictions(std::span<const double> predicted, const perf::LatencyDataset& test_set) {
  check_dataset(test_set, "test");
  if (predicted.size() != test_set.size()) throw ShapeMismatch("prediction count does not match the test set");
  struct Row {
    double truth;
    const std::vector<std::size_t>* ops;
    double err;
  };
  std::vector<Row> rows;
  rows.reserve(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double truth = test_set.records[i].latency_ms;
    rows.push_back({truth, &test_set.records[i].arch.ops, std::abs(predicted[i] - truth) / truth});
  }
  std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    if (a.truth != b.truth) return a.truth < b.truth;
    if (*a.ops != *b.ops) return *a.ops < *b.ops;
    return a.err < b.err;
  });
  EvalReport report;
  report.n_samples = rows.size();
  double total = 0.0;
  for (const auto& r : rows) total += r.err;
  report.mean_rel_err = total / static_cast<double>(rows.size());
  const std::size_t buckets = std::min<std::size_t>(10, rows.size());
  std::vector<double> sums(buckets, 0.0);
  std::vector<std::size_t> counts(buckets, 0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t b = i * buckets / rows.size();
    sums[b] += rows[i].err;
    ++counts[b];
  }
  for (std::size_t b = 0; b < buckets; ++b) report.decile_errors.push_back(sums[b] / static_cast<double>(counts[b]));
  return report;
}

EvalReport evaluate(const HwLossModel& model, const perf::LatencyDataset& test_set) {
  check_dataset(test_set, "test");
  if (test_set.num_candidates != model.num_candidates || test_set.num_layers != model.num_layers) {
    throw MismatchedSpace("test dataset (K, L) does not match the model");
  }
  const auto archs = archs_of(test_set);
  const auto predicted = predict_batch(model, archs);
  return evaluate_predictions(predicted, test_set);
}

EvalReport evaluate_lut(const perf::Lut& lut, const perf::LatencyDataset& test_set) {
  check_dataset(test_set, "test");
  std::vector<double> predicted;
  predicted.reserve(test_set.size());
  for (const auto& r : test_set.records) {
    predicted.push_back(perf::lut_latency(lut, arch::one_hot(r.arch, lut.num_candidates())));
  }
  return evaluate_predictions(predicted, test_set);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

json fc_json(const Tensor& weight, const Tensor& bias) {
  return {{"out", weight.shape()[0]}, {"in", weight.shape()[1]}, {"weight", weight.values()}, {"bias", bias.values()}};
}

Tensor read_values(const json& node, diff::Shape shape, const char* what) {
  if (!node.is_array()) throw ParseError(std::string(what) + " must be an array");
  std::vector<double> values;
  values.reserve(node.size());
  for (const auto& v : node) {
    if (!v.is_number()) throw ParseError(std::string(what) + " holds a non-number");
    values.push_back(v.get<double>());
  }
  std::size_t expected = 1;
  for (auto d : shape) expected *= d;
  if (values.size() != expected) throw ParseError(std::string(what) + " has the wrong number of values");
  return Tensor(std::move(shape), std::move(values));
}

void read_fc(const json& node, std::size_t out, std::size_t in, Tensor& weight, Tensor& bias) {
  if (node.at("out").get<std::size_t>() != out || node.at("in").get<std::size_t>() != in) {
    throw ParseError("fully connected layer shape does not match the header");
  }
  weight = read_values(node.at("weight"), {out, in}, "fc weight");
  bias = read_values(node.at("bias"), {out}, "fc bias");
}

}  // namespace

std::string to_json(const HwLossModel& model) {
  json embeddings = json::array();
  const std::size_t per_layer = model.embedding_size * model.num_candidates;
  for (std::size_t l = 0; l < model.num_layers; ++l) {
    const auto begin = model.embeddings.values().begin() + static_cast<std::ptrdiff_t>(l * per_layer);
    embeddings.push_back(std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(per_layer)));
  }
  json doc{{"format", kModelFormat},
           {"K", model.num_candidates},
           {"L", model.num_layers},
           {"E", model.embedding_size},
           {"h1", model.h1},
           {"h2", model.h2},
           {"dropout_p", model.dropout_p},
           {"scaler", {{"mean_ms", model.mean_ms}, {"std_ms", model.std_ms}}},
           {"embeddings", std::move(embeddings)},
           {"fc",
            {fc_json(model.fc1_weight, model.fc1_bias), fc_json(model.fc2_weight, model.fc2_bias),
             fc_json(model.fc3_weight, model.fc3_bias)}}};
  return doc.dump();
}

HwLossModel from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("format") || !doc["format"].is_string()) {
    throw ParseError("model file has no format tag");
  }
  if (doc["format"].get<std::string>() != kModelFormat) {
    throw VersionMismatch("model format '" + doc["format"].get<std::string>() + "' is not " +
                          std::string(kModelFormat));
  }
  try {
    HwLossModel m;
    m.num_candidates = doc.at("K").get<std::size_t>();
    m.num_layers = doc.at("L").get<std::size_t>();
    m.embedding_size = doc.at("E").get<std::size_t>();
    m.h1 = doc.at("h1").get<std::size_t>();
    m.h2 = doc.at("h2").get<std::size_t>();
    m.dropout_p = doc.at("dropout_p").get<double>();
    m.mean_ms = doc.at("scaler").at("mean_ms").get<double>();
    m.std_ms = doc.at("scaler").at("std_ms").get<double>();
    if (!(m.std_ms > 0.0)) throw ParseError("scaler std_ms must be positive");
    if (!(m.dropout_p >= 0.0 && m.dropout_p < 1.0)) throw ParseError("dropout_p must be in [0, 1)");
    const auto& emb = doc.at("embeddings");
    if (!emb.is_array() || emb.size() != m.num_layers) throw ParseError("embeddings must hold L matrices");
    std::vector<double> table;
    for (const auto& layer : emb) {
      const Tensor t = read_values(layer, {m.embedding_size, m.num_candidates}, "embedding matrix");
      table.insert(table.end(), t.values().begin(), t.values().end());
    }
    m.embeddings = Tensor({m.num_layers, m.embedding_size, m.num_candidates}, std::move(table));
    const auto& fc = doc.at("fc");
    if (!fc.is_array() || fc.size() != 3) throw ParseError("fc must hold three layers");
    read_fc(fc[0], m.h1, m.embedding_size * m.num_layers, m.fc1_weight, m.fc1_bias);
    read_fc(fc[1], m.h2, m.h1, m.fc2_weight, m.fc2_bias);
    read_fc(fc[2], 1, m.h2, m.fc3_weight, m.fc3_bias);
    return m;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what());
  }
}

void save(const HwLossModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write model file " + path.string());
  out << to_json(model) << '\n';
}

HwLossModel load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read model file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

}  // namespace ehdnas::hw
