#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ehdnas/archspace.hpp"
#include "ehdnas/diffcore.hpp"
#include "ehdnas/perfmodel.hpp"

namespace ehdnas::hw {

inline constexpr std::string_view kModelFormat = "ehdnas-hwloss-v1";

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  double dropout_p = 0.1;
  std::size_t embedding_size = 10;
  std::size_t h1 = 64;
  std::size_t h2 = 64;
};

void check_config(const TrainConfig& cfg);

// Differentiable latency surrogate: per-layer linear embeddings W_l (E x K),
// concatenated and fed to fc1 -> relu -> fc2 -> relu -> dropout -> fc3.
// The network predicts standardized latency; `mean_ms`/`std_ms` map it back
// to milliseconds.
struct HwLossModel {
  std::size_t num_candidates = 0;  // K
  std::size_t num_layers = 0;      // L
  std::size_t embedding_size = 0;  // E
  std::size_t h1 = 0;
  std::size_t h2 = 0;
  double dropout_p = 0.0;
  double mean_ms = 0.0;
  double std_ms = 1.0;
  diff::Tensor embeddings;  // [L, E, K]
  diff::Tensor fc1_weight, fc1_bias;
  diff::Tensor fc2_weight, fc2_bias;
  diff::Tensor fc3_weight, fc3_bias;

  bool operator==(const HwLossModel&) const = default;
};

// Randomly initialized model with scaler (0, 1).
HwLossModel init_model(std::size_t num_candidates, std::size_t num_layers, const TrainConfig& cfg);

// Throws ShapeMismatch unless m is K x L for the model.
void check_shape(const HwLossModel& model, const arch::ArchMatrix& m);

// Concat_l(W_l a^(l)), length E*L.
std::vector<double> embed(const HwLossModel& model, const arch::ArchMatrix& m);

// Latency in ms, eval mode.
double predict(const HwLossModel& model, const arch::ArchMatrix& m);
std::vector<double> predict_batch(const HwLossModel& model, std::span<const arch::DiscreteArch> archs);

// d predict / d a, K x L, eval mode.
arch::RealMatrix grad_arch(const HwLossModel& model, const arch::ArchMatrix& m);

// Central-difference check of grad_arch on the standardized output.
diff::FiniteDiffReport gradcheck(const HwLossModel& model, const arch::ArchMatrix& m, double eps = 1e-5);

struct TrainHistory {
  std::vector<double> train_mae;  // standardized units, per epoch
  std::vector<double> val_mae;
  std::size_t best_epoch = 0;
};

// MAE regression with Adam on standardized targets; returns the parameters of
// the epoch with the lowest validation MAE.
HwLossModel train(const perf::LatencyDataset& train_set, const perf::LatencyDataset& val_set,
                  const TrainConfig& cfg, TrainHistory* history = nullptr);

struct EvalReport {
  double mean_rel_err = 0.0;
  // Mean relative error within each tenth of the test set ordered by true
  // latency (fewer entries when n < 10).
  std::vector<double> decile_errors;
  std::size_t n_samples = 0;
};

EvalReport evaluate(const HwLossModel& model, const perf::LatencyDataset& test_set);
EvalReport evaluate_lut(const perf::Lut& lut, const perf::LatencyDataset& test_set);
// Shared metric over aligned predictions; independent of record order.
EvalReport evaluate_predictions(std::span<const double> predicted, const perf::LatencyDataset& test_set);

std::string to_json(const HwLossModel& model);
HwLossModel from_json(std::string_view text);
void save(const HwLossModel& model, const std::filesystem::path& path);
HwLossModel load(const std::filesystem::path& path);

// Builds the predictor graph; exposed for tests that inspect it.
struct PredictorGraph {
  diff::Graph graph;
  diff::NodeId arch = 0;
  diff::NodeId target = 0;
  diff::NodeId seed = 0;
  diff::NodeId output = 0;  // [batch, 1], standardized
  diff::NodeId loss = 0;    // MAE against target
};

PredictorGraph build_graph(const HwLossModel& model);
// Copies trained parameters out of a graph built by build_graph.
void read_parameters(const diff::Graph& graph, HwLossModel& model);

// One-hot rows, layer-major ([batch, L*K]).
diff::Tensor encode(std::span<const arch::DiscreteArch> archs, std::size_t num_candidates);
diff::Tensor encode(const arch::ArchMatrix& m);

}  // namespace ehdnas::hw
