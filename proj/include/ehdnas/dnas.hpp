#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ehdnas/archspace.hpp"
#include "ehdnas/diffcore.hpp"
#include "ehdnas/hwloss.hpp"
#include "ehdnas/perfmodel.hpp"

namespace ehdnas::dnas {

struct TaskSplit {
  diff::Tensor features;  // [n, d]
  diff::Tensor labels;    // [n], class indices stored as reals
  std::size_t size() const noexcept { return labels.size(); }
};

struct TaskData {
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  TaskSplit train, val, test;
};

// C Gaussian clusters centred on e_c / sqrt(2) (unit spacing between
// centres), shuffled and split 60/20/20. Requires n >= max(C, 5) and C <= d.
TaskData gen_task_data(std::uint64_t seed, std::size_t n, std::size_t input_dim, std::size_t num_classes,
                       double noise);

// Hardware cost seen by the architecture step. Implementations must be safe
// to call concurrently.
class HwCost {
 public:
  virtual ~HwCost() = default;
  virtual std::size_t num_candidates() const = 0;
  virtual std::size_t num_layers() const = 0;
  virtual double latency_ms(const arch::ArchMatrix& m) const = 0;
  // d latency_ms / d m, K x L.
  virtual arch::RealMatrix gradient(const arch::ArchMatrix& m) const = 0;
  // Typical latency spread; the search divides the hardware term by it.
  virtual double scale_ms() const = 0;
};

class DeepHwCost final : public HwCost {
 public:
  explicit DeepHwCost(hw::HwLossModel model) : model_(std::move(model)) {}
  std::size_t num_candidates() const override { return model_.num_candidates; }
  std::size_t num_layers() const override { return model_.num_layers; }
  double latency_ms(const arch::ArchMatrix& m) const override { return hw::predict(model_, m); }
  arch::RealMatrix gradient(const arch::ArchMatrix& m) const override { return hw::grad_arch(model_, m); }
  double scale_ms() const override { return model_.std_ms; }
  const hw::HwLossModel& model() const noexcept { return model_; }

 private:
  hw::HwLossModel model_;
};

class LutHwCost final : public HwCost {
 public:
  explicit LutHwCost(perf::Lut lut);
  std::size_t num_candidates() const override { return lut_.num_candidates(); }
  std::size_t num_layers() const override { return lut_.num_layers(); }
  double latency_ms(const arch::ArchMatrix& m) const override { return perf::lut_latency(lut_, m); }
  arch::RealMatrix gradient(const arch::ArchMatrix& m) const override;
  // Standard deviation of the LUT latency over uniformly sampled archs.
  double scale_ms() const override { return scale_ms_; }

 private:
  perf::Lut lut_;
  double scale_ms_ = 1.0;
};

// Weight-sharing supernet. Parameter "l{l}.k{k}.*" belongs to block k of
// layer l; every parameter is initialized from (seed, name) alone, so a
// discrete network built with the same seed starts from identical weights.
struct Supernet {
  arch::SearchSpaceSpec space;
  diff::Graph graph;
  diff::NodeId x = 0;       // input "x" [batch, d]
  diff::NodeId labels = 0;  // input "labels" [batch]
  diff::NodeId mix = 0;     // input "mix" [L, K] (the transposed ArchMatrix)
  diff::NodeId scores = 0;  // [batch, C]
  diff::NodeId loss = 0;    // cross-entropy
  arch::RealMatrix arch_logits;  // K x L
  bool head_frozen = false;
};

// freeze_head zeroes the head and keeps it fixed, making the task loss
// constant.
Supernet build_supernet(const arch::SearchSpaceSpec& space, std::uint64_t seed, bool freeze_head = false);

// The network of one discrete architecture; unselected blocks are absent.
struct DiscreteNet {
  diff::Graph graph;
  diff::NodeId x = 0;
  diff::NodeId labels = 0;
  diff::NodeId scores = 0;
  diff::NodeId loss = 0;
};

DiscreteNet build_discrete(const arch::SearchSpaceSpec& space, const arch::DiscreteArch& arch, std::uint64_t seed);

// Class scores [batch, C] of the supernet mixed by m.
diff::Tensor supernet_forward(Supernet& net, const diff::Tensor& x, const arch::ArchMatrix& m);
diff::Tensor discrete_forward(DiscreteNet& net, const diff::Tensor& x);

enum class HwLossKind { none, deep, lut };
std::string_view to_string(HwLossKind kind);
HwLossKind parse_hw_loss_kind(std::string_view text);

struct SearchConfig {
  double beta = 0.0;
  HwLossKind hw_loss_kind = HwLossKind::none;
  std::size_t epochs = 50;
  double lr_weights = 1e-2;
  double momentum = 0.9;
  double lr_arch = 3e-3;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  bool freeze_head = false;
  // Epochs for retraining the result from scratch; 0 skips it.
  std::size_t final_epochs = 0;
};

void check_config(const SearchConfig& cfg);

struct EpochRecord {
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> hw_term_ms;  // absent when the hardware term is off
};

struct SearchResult {
  arch::DiscreteArch arch;
  arch::ArchMatrix relaxed_final;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  // GP latency of `arch` on the built-in budgets, keyed by budget name.
  std::vector<std::pair<std::string, double>> searched_latency_ms;
  std::optional<double> final_accuracy;
  double beta = 0.0;
  HwLossKind hw_loss_kind = HwLossKind::none;
  std::uint64_t seed = 0;
};

std::string to_json(const SearchResult& result);

// Alternating first-order search. `hw` may be null when the kind is none;
// with beta = 0 it is never called.
SearchResult search(const arch::SearchSpaceSpec& space, const TaskData& task, const HwCost* hw,
                    const SearchConfig& cfg);

struct FinalTrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  std::size_t batch_size = 128;
};

// Trains the discrete network from scratch on the train split and returns
// test accuracy.
double train_final(const arch::SearchSpaceSpec& space, const arch::DiscreteArch& arch, const TaskData& task,
                   std::uint64_t seed, const FinalTrainConfig& cfg = {});

// Fraction of rows whose argmax score (lowest index on ties) is the label.
double accuracy(const diff::Tensor& scores, const diff::Tensor& labels);

struct SweepRow {
  double beta = 0.0;
  std::uint64_t seed = 0;
  arch::DiscreteArch arch;
  double latency_small_ms = 0.0;
  double latency_medium_ms = 0.0;
  double latency_large_ms = 0.0;
  double accuracy = 0.0;
};

// One search + retrain per (beta, seed) cell, cells in parallel, rows ordered
// by beta then seed as given. beta = 0 cells run without the hardware term.
std::vector<SweepRow> sweep_beta(const arch::SearchSpaceSpec& space, const TaskData& task, const HwCost* hw,
                                 const SearchConfig& base, std::span<const double> grid,
                                 std::span<const std::uint64_t> seeds, const FinalTrainConfig& final_cfg = {},
                                 std::size_t threads = 1);

std::string sweep_csv(std::span<const SweepRow> rows);

struct OracleResult {
  arch::DiscreteArch arch;
  double latency_ms = 0.0;
};

inline constexpr double kMaxEnumerable = 1e6;

// Exhaustive minimum of `objective` (nullopt marks an inadmissible arch);
// lexicographically first on ties. Throws SpaceTooLarge above 10^6 archs.
std::optional<OracleResult> brute_force_min(
    const arch::SearchSpaceSpec& space, const std::function<std::optional<double>(const arch::DiscreteArch&)>& objective);

// Lowest-latency feasible architecture under the budget and paradigm.
std::optional<OracleResult> brute_force_best(const arch::SearchSpaceSpec& space, const perf::HardwareBudget& budget,
                                             perf::Paradigm paradigm);

std::string export_dot(const arch::DiscreteArch& arch, const arch::SearchSpaceSpec& space);

}  // namespace ehdnas::dnas
