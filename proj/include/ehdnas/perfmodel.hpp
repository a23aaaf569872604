#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ehdnas/archspace.hpp"

namespace ehdnas::perf {

// Fixed per-layer control overhead of the analytical model, in cycles.
inline constexpr double kLayerOverheadCycles = 64.0;
// DDR3-1600 on a 64-bit bus.
inline constexpr double kDdr3BytesPerSec = 12.8e9;
inline constexpr double kClockHz = 200e6;
inline constexpr double kBitsPerMbit = 1024.0 * 1024.0;

struct HardwareBudget {
  std::string name;
  std::uint64_t dsp_count = 0;
  double on_chip_bits = 0.0;
  double dram_bytes_per_sec = 0.0;
  double clock_hz = 0.0;
};

// Throws InvalidConfig unless every field is strictly positive.
void check_budget(const HardwareBudget& budget);

HardwareBudget small_budget();   // 1400 DSPs, 46 Mb
HardwareBudget medium_budget();  // 2400 DSPs, 70 Mb
HardwareBudget large_budget();   // 4800 DSPs, 141 Mb
std::vector<HardwareBudget> builtin_budgets();

// Resolves "small" / "medium" / "large", otherwise reads a budget JSON file
// {"name","dsp_count","on_chip_mbits","dram_gbytes_per_sec","clock_mhz"}.
HardwareBudget resolve_budget(std::string_view name_or_path);
HardwareBudget parse_budget_json(std::string_view text);

struct DenseShape {
  std::uint64_t out_features = 0;
  std::uint64_t in_features = 0;
};

struct LayerWorkload {
  std::string label;
  std::uint64_t macs = 0;
  std::uint64_t weight_bytes = 0;
  std::uint64_t in_bytes = 0;
  std::uint64_t out_bytes = 0;
  std::uint64_t out_features = 0;
  std::uint64_t in_features = 0;
  // Matrix-vector sub-operations executed by the layer (one for dense, two
  // for low-rank, none for identity/zero).
  std::vector<DenseShape> dense_ops;
};

// stem, L mixed layers, head, all at deployment width.
std::vector<LayerWorkload> workload_of(const arch::DiscreteArch& arch, const arch::SearchSpaceSpec& space);
// Workload of one catalog block in a mixed layer.
LayerWorkload block_workload(const arch::CandidateBlock& block, const arch::SearchSpaceSpec& space);

enum class Bound { compute, memory };
std::string_view to_string(Bound bound);

struct LayerLatency {
  double ms = 0.0;
  Bound bound = Bound::compute;
};

// Roofline kernel: max(compute, memory) + fixed overhead, with one MAC per
// DSP per cycle. Throws InvalidConfig when dsp_alloc is 0 and macs > 0.
LayerLatency layer_latency(const LayerWorkload& w, std::uint64_t dsp_alloc, const HardwareBudget& budget,
                           bool weights_resident);
// Same kernel with the compute cycle count already known.
LayerLatency layer_latency_cycles(const LayerWorkload& w, double compute_cycles, const HardwareBudget& budget,
                                  bool weights_resident);

enum class Paradigm { generic, pipeline };
std::string_view to_string(Paradigm paradigm);  // "GP" / "PP"
Paradigm parse_paradigm(std::string_view text);

struct TileConfig {
  std::uint64_t tm = 0;  // output-feature parallelism
  std::uint64_t tn = 0;  // input-feature parallelism

  bool operator==(const TileConfig&) const = default;
};

// Cycles for a layer's dense sub-operations on a Tm x Tn processing array.
std::uint64_t tile_cycles(const LayerWorkload& w, const TileConfig& tile);
// All (Tm, Tn) with power-of-two factors <= 1024 and Tm * Tn <= dsp_count.
std::vector<TileConfig> tile_candidates(std::uint64_t dsp_count);

struct LatencyReport {
  Paradigm paradigm = Paradigm::generic;
  std::string budget;
  bool feasible = true;
  double total_ms = 0.0;
  std::vector<std::string> layer_labels;
  std::vector<double> per_layer_ms;
  std::vector<Bound> bound;
  double io_ms = 0.0;                    // generic only
  double initiation_interval_ms = 0.0;   // pipeline only
  bool weights_resident = false;
  std::optional<TileConfig> tile;        // generic DSE result
  std::vector<std::uint64_t> dsp_alloc;  // pipeline DSE result
  double on_chip_demand_bits = 0.0;
};

// Generic paradigm under one fixed tile.
LatencyReport evaluate_generic(std::span<const LayerWorkload> layers, const HardwareBudget& budget,
                               const TileConfig& tile);
// Generic paradigm DSE over the given tiles; first minimum wins.
LatencyReport dse_generic(std::span<const LayerWorkload> layers, const HardwareBudget& budget,
                          std::span<const TileConfig> candidates);

LatencyReport benchmark_generic(const arch::DiscreteArch& arch, const arch::SearchSpaceSpec& space,
                                const HardwareBudget& budget);
LatencyReport benchmark_pipeline(const arch::DiscreteArch& arch, const arch::SearchSpaceSpec& space,
                                 const HardwareBudget& budget);
LatencyReport benchmark(const arch::DiscreteArch& arch, const arch::SearchSpaceSpec& space,
                        const HardwareBudget& budget, Paradigm paradigm);

std::vector<std::uint64_t> dse_pipeline_alloc(std::span<const std::uint64_t> stage_macs, std::uint64_t dsp_count);

std::string report_to_json(const LatencyReport& report);

// Additive per-block latency table, generic paradigm only.
struct Lut {
  arch::RealMatrix entries;  // K x L, ms
  HardwareBudget budget;
  Paradigm paradigm = Paradigm::generic;

  std::size_t num_candidates() const noexcept { return entries.rows(); }
  std::size_t num_layers() const noexcept { return entries.cols(); }
};

Lut build_lut(const arch::SearchSpaceSpec& space, const HardwareBudget& budget);
double lut_latency(const Lut& lut, const arch::ArchMatrix& m);
std::string lut_to_json(const Lut& lut);
Lut lut_from_json(std::string_view text);

// ---------------------------------------------------------------------------
// Latency datasets

enum class Split { train, val, test };
std::string_view to_string(Split split);

enum class Source { generated, ingested };

struct LatencyRecord {
  arch::DiscreteArch arch;
  double latency_ms = 0.0;
};

struct LatencyDataset {
  std::size_t num_candidates = 0;
  std::size_t num_layers = 0;
  std::string paradigm = "GP";  // "GP", "PP" or "ingested"
  std::string budget;
  Split split = Split::train;
  Source source = Source::generated;
  std::vector<LatencyRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
};

struct GeneratedDatasets {
  LatencyDataset train;
  LatencyDataset val;
  LatencyDataset test;
  std::size_t rejected = 0;  // pipeline-infeasible samples dropped
};

// Samples n_train + n_val + n_test architectures, benchmarks them with up to
// `threads` workers, and splits in sampling order. Deterministic given seed.
GeneratedDatasets gen_dataset(const arch::SearchSpaceSpec& space, const HardwareBudget& budget, Paradigm paradigm,
                              std::size_t n_train, std::size_t n_val, std::size_t n_test, std::uint64_t seed,
                              std::size_t threads = 1);

void write_dataset(const LatencyDataset& ds, std::ostream& out);
void write_dataset(const LatencyDataset& ds, const std::filesystem::path& path);
LatencyDataset read_dataset(std::istream& in);
// Reads and validates a dataset file; the result is tagged as ingested.
LatencyDataset ingest_dataset(const std::filesystem::path& path);

}  // namespace ehdnas::perf
