#include "ehdnas/perfmodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "ehdnas/errors.hpp"

namespace ehdnas::perf {

using arch::BlockKind;
using arch::kBytesPerValue;
using nlohmann::json;

void check_budget(const HardwareBudget& budget) {
  if (budget.dsp_count == 0 || !(budget.on_chip_bits > 0.0) || !(budget.dram_bytes_per_sec > 0.0) ||
      !(budget.clock_hz > 0.0)) {
    throw InvalidConfig("hardware budget '" + budget.name + "' must have strictly positive fields");
  }
}

namespace {

HardwareBudget ddr3_budget(std::string name, std::uint64_t dsps, double mbits) {
  return HardwareBudget{std::move(name), dsps, mbits * kBitsPerMbit, kDdr3BytesPerSec, kClockHz};
}

double to_ms(double seconds) { return seconds * 1e3; }

}  // namespace

HardwareBudget small_budget() { return ddr3_budget("small", 1400, 46.0); }
HardwareBudget medium_budget() { return ddr3_budget("medium", 2400, 70.0); }
HardwareBudget large_budget() { return ddr3_budget("large", 4800, 141.0); }

std::vector<HardwareBudget> builtin_budgets() { return {small_budget(), medium_budget(), large_budget()}; }

HardwareBudget parse_budget_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("budget file: ") + e.what());
  }
  HardwareBudget budget;
  try {
    budget.name = doc.at("name").get<std::string>();
    const double dsp = doc.at("dsp_count").get<double>();
    if (!(dsp >= 1.0) || dsp != std::floor(dsp)) throw ValidationError("budget dsp_count must be a positive integer");
    budget.dsp_count = static_cast<std::uint64_t>(dsp);
    budget.on_chip_bits = doc.at("on_chip_mbits").get<double>() * kBitsPerMbit;
    budget.dram_bytes_per_sec = doc.at("dram_gbytes_per_sec").get<double>() * 1e9;
    budget.clock_hz = doc.at("clock_mhz").get<double>() * 1e6;
  } catch (const json::exception& e) {
    throw ParseError(std::string("budget file: ") + e.what());
  }
  check_budget(budget);
  return budget;
}

HardwareBudget resolve_budget(std::string_view name_or_path) {
  for (auto& b : builtin_budgets()) {
    if (b.name == name_or_path) return b;
  }
  std::ifstream in{std::string(name_or_path)};
  if (!in) throw ValidationError("unknown budget '" + std::string(name_or_path) + "' (not a built-in name or file)");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_budget_json(buffer.str());
}

LayerWorkload block_workload(const arch::CandidateBlock& block, const arch::SearchSpaceSpec& space) {
  const std::uint64_t width = space.deploy_width();
  LayerWorkload w;
  w.label = block.name();
  w.in_features = width;
  w.out_features = width;
  w.macs = block.macs_per_sample;
  w.weight_bytes = block.weight_bytes;
  switch (block.kind) {
    case BlockKind::dense:
      w.in_bytes = width * kBytesPerValue;
      w.out_bytes = block.activation_bytes;
      w.dense_ops = {{width, width}};
      break;
    case BlockKind::low_rank: {
      const std::uint64_t rank = *block.rank * space.deploy_multiplier;
      w.in_bytes = width * kBytesPerValue;
      w.out_bytes = block.activation_bytes;
      w.dense_ops = {{rank, width}, {width, rank}};
      break;
    }
    case BlockKind::identity:
    case BlockKind::zero:
      break;
  }
  return w;
}

namespace {

LayerWorkload dense_layer(std::string label, std::uint64_t in, std::uint64_t out) {
  LayerWorkload w;
  w.label = std::move(label);
  w.in_features = in;
  w.out_features = out;
  w.macs = in * out;
  w.weight_bytes = in * out * kBytesPerValue;
  w.in_bytes = in * kBytesPerValue;
  w.out_bytes = out * kBytesPerValue;
  w.dense_ops = {{out, in}};
  return w;
}

}  // namespace

std::vector<LayerWorkload> workload_of(const arch::DiscreteArch& a, const arch::SearchSpaceSpec& space) {
  arch::check_arch(a, space);
  const std::uint64_t width = space.deploy_width();
  std::vector<LayerWorkload> layers;
  layers.reserve(space.num_layers + 2);
  layers.push_back(dense_layer("stem", space.input_dim, width));
  for (std::size_t l = 0; l < space.num_layers; ++l) {
    layers.push_back(block_workload(space.catalog[a.ops[l]], space));
  }
  layers.push_back(dense_layer("head", width, space.num_classes));
  return layers;
}

std::string_view to_string(Bound bound) { return bound == Bound::compute ? "compute" : "memory"; }

LayerLatency layer_latency_cycles(const LayerWorkload& w, double compute_cycles, const HardwareBudget& budget,
                                  bool weights_resident) {
  const double compute_s = compute_cycles / budget.clock_hz;
  const double streamed = static_cast<double>((weights_resident ? 0 : w.weight_bytes) + w.in_bytes + w.out_bytes);
  const double memory_s = streamed / budget.dram_bytes_per_sec;
  const double overhead_s = kLayerOverheadCycles / budget.clock_hz;
  LayerLatency out;
  out.bound = compute_s >= memory_s ? Bound::compute : Bound::memory;
  out.ms = to_ms(std::max(compute_s, memory_s) + overhead_s);
  return out;
}

LayerLatency layer_latency(const LayerWorkload& w, std::uint64_t dsp_alloc, const HardwareBudget& budget,
                           bool weights_resident) {
  if (w.macs > 0 && dsp_alloc == 0) {
    throw InvalidConfig("layer '" + w.label + "' has " + std::to_string(w.macs) + " MACs but no DSPs");
  }
  const std::uint64_t cycles = w.macs == 0 ? 0 : (w.macs + dsp_alloc - 1) / dsp_alloc;
  return layer_latency_cycles(w, static_cast<double>(cycles), budget, weights_resident);
}

std::string_view to_string(Paradigm paradigm) { return paradigm == Paradigm::generic ? "GP" : "PP"; }

Paradigm parse_paradigm(std::string_view text) {
  if (text == "GP" || text == "gp" || text == "generic") return Paradigm::generic;
  if (text == "PP" || text == "pp" || text == "pipeline") return Paradigm::pipeline;
  throw ValidationError("unknown paradigm '" + std::string(text) + "' (expected GP or PP)");
}

std::uint64_t tile_cycles(const LayerWorkload& w, const TileConfig& tile) {
  std::uint64_t cycles = 0;
  for (const auto& op : w.dense_ops) {
    cycles += ((op.out_features + tile.tm - 1) / tile.tm) * ((op.in_features + tile.tn - 1) / tile.tn);
  }
  return cycles;
}

std::vector<TileConfig> tile_candidates(std::uint64_t dsp_count) {
  std::vector<TileConfig> out;
  for (std::uint64_t tm = 1; tm <= 1024; tm *= 2) {
    for (std::uint64_t tn = 1; tn <= 1024; tn *= 2) {
      if (tm * tn <= dsp_count) out.push_back({tm, tn});
    }
  }
  return out;
}

namespace {

double total_weight_bits(std::span<const LayerWorkload> layers) {
  double bits = 0.0;
  for (const auto& w : layers) bits += static_cast<double>(w.weight_bytes) * 8.0;
  return bits;
}

}  // namespace

LatencyReport evaluate_generic(std::span<const LayerWorkload> layers, const HardwareBudget& budget,
                               const TileConfig& tile) {
  LatencyReport report;
  report.paradigm = Paradigm::generic;
  report.budget = budget.name;
  report.tile = tile;
  report.on_chip_demand_bits = total_weight_bits(layers);
  report.weights_resident = report.on_chip_demand_bits <= budget.on_chip_bits;
  double total = 0.0;
  for (const auto& w : layers) {
    const auto lat =
        layer_latency_cycles(w, static_cast<double>(tile_cycles(w, tile)), budget, report.weights_resident);
    report.layer_labels.push_back(w.label);
    report.per_layer_ms.push_back(lat.ms);
    report.bound.push_back(lat.bound);
    total += lat.ms;
  }
  if (!layers.empty()) {
    const double io_bytes = static_cast<double>(layers.front().in_bytes + layers.back().out_bytes);
    report.io_ms = to_ms(io_bytes / budget.dram_bytes_per_sec);
  }
  report.total_ms = total + report.io_ms;
  return report;
}

LatencyReport dse_generic(std::span<const LayerWorkload> layers, const HardwareBudget& budget,
                          std::span<const TileConfig> candidates) {
  if (candidates.empty()) throw InvalidConfig("no tile configuration fits budget '" + budget.name + "'");
  std::optional<LatencyReport> best;
  for (const auto& tile : candidates) {
    auto report = evaluate_generic(layers, budget, tile);
    if (!best || report.total_ms < best->total_ms) best = std::move(report);
  }
  return *best;
}

LatencyReport benchmark_generic(const arch::DiscreteArch& a, const arch::SearchSpaceSpec& space,
                                const HardwareBudget& budget) {
  check_budget(budget);
  const auto layers = workload_of(a, space);
  const auto tiles = tile_candidates(budget.dsp_count);
  return dse_generic(layers, budget, tiles);
}

std::vector<std::uint64_t> dse_pipeline_alloc(std::span<const std::uint64_t> stage_macs, std::uint64_t dsp_count) {
  const std::size_t n = stage_macs.size();
  std::size_t nonzero = 0;
  unsigned __int128 total_macs = 0;
  for (auto m : stage_macs) {
    if (m > 0) ++nonzero;
    total_macs += m;
  }
  if (dsp_count < nonzero) {
    throw InfeasibleAllocation(std::to_string(dsp_count) + " DSPs cannot cover " + std::to_string(nonzero) +
                               " compute stages");
  }
  std::vector<std::uint64_t> alloc(n, 0);
  if (nonzero == 0) return alloc;

  std::uint64_t used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (stage_macs[i] == 0) continue;
    const auto share = static_cast<std::uint64_t>((static_cast<unsigned __int128>(stage_macs[i]) * dsp_count) /
                                                  total_macs);
    alloc[i] = std::max<std::uint64_t>(1, share);
    used += alloc[i];
  }
  // The min-1 floor can overshoot; take DSPs back from the largest allocation.
  while (used > dsp_count) {
    std::size_t widest = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (alloc[i] > alloc[widest]) widest = i;
    }
    --alloc[widest];
    --used;
  }
  const auto cycles = [&](std::size_t i) { return (stage_macs[i] + alloc[i] - 1) / alloc[i]; };
  for (; used < dsp_count; ++used) {
    std::size_t slowest = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (stage_macs[i] == 0) continue;
      if (slowest == n || cycles(i) > cycles(slowest)) slowest = i;
    }
    ++alloc[slowest];
  }
  return alloc;
}

LatencyReport benchmark_pipeline(const arch::DiscreteArch& a, const arch::SearchSpaceSpec& space,
                                 const HardwareBudget& budget) {
  check_budget(budget);
  const auto layers = workload_of(a, space);
  LatencyReport report;
  report.paradigm = Paradigm::pipeline;
  report.budget = budget.name;
  report.weights_resident = true;

  // Every stage keeps a double-buffered H-wide interface on chip.
  const double buffer_bits = 2.0 * static_cast<double>(space.deploy_width() * kBytesPerValue) * 8.0;
  report.on_chip_demand_bits = total_weight_bits(layers) + buffer_bits * static_cast<double>(layers.size());
  if (report.on_chip_demand_bits > budget.on_chip_bits) {
    report.feasible = false;
    return report;
  }

  std::vector<std::uint64_t> stage_macs;
  for (const auto& w : layers) stage_macs.push_back(w.macs);
  try {
    report.dsp_alloc = dse_pipeline_alloc(stage_macs, budget.dsp_count);
  } catch (const InfeasibleAllocation&) {
    report.feasible = false;
    return report;
  }

  double total = 0.0;
  double slowest = 0.0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto lat = layer_latency(layers[i], report.dsp_alloc[i], budget, true);
    report.layer_labels.push_back(layers[i].label);
    report.per_layer_ms.push_back(lat.ms);
    report.bound.push_back(lat.bound);
    total += lat.ms;
    slowest = std::max(slowest, lat.ms);
  }
  report.total_ms = total;
  report.initiation_interval_ms = slowest;
  return report;
}

LatencyReport benchmark(const arch::DiscreteArch& a, const arch::SearchSpaceSpec& space,
                        const HardwareBudget& budget, Paradigm paradigm) {
  return paradigm == Paradigm::generic ? benchmark_generic(a, space, budget) : benchmark_pipeline(a, space, budget);
}

std::string report_to_json(const LatencyReport& report) {
  json doc;
  doc["paradigm"] = to_string(report.paradigm);
  doc["budget"] = report.budget;
  doc["feasible"] = report.feasible;
  doc["on_chip_demand_bits"] = report.on_chip_demand_bits;
  if (report.feasible) doc["total_ms"] = report.total_ms;
  else doc["total_ms"] = nullptr;
  json layers = json::array();
  for (std::size_t i = 0; i < report.per_layer_ms.size(); ++i) {
    layers.push_back({{"label", report.layer_labels[i]},
                      {"ms", report.per_layer_ms[i]},
                      {"bound", to_string(report.bound[i])}});
  }
  doc["layers"] = std::move(layers);
  doc["weights_resident"] = report.weights_resident;
  if (report.paradigm == Paradigm::generic) {
    doc["io_ms"] = report.io_ms;
    if (report.tile) doc["chosen_config"] = {{"tm", report.tile->tm}, {"tn", report.tile->tn}};
  } else {
    doc["initiation_interval_ms"] = report.initiation_interval_ms;
    doc["chosen_config"] = {{"dsp_alloc", report.dsp_alloc}};
  }
  return doc.dump();
}

Lut build_lut(const arch::SearchSpaceSpec& space, const HardwareBudget& budget) {
  check_budget(budget);
  const auto tiles = tile_candidates(budget.dsp_count);
  if (tiles.empty()) throw InvalidConfig("no tile configuration fits budget '" + budget.name + "'");
  Lut lut{arch::RealMatrix(space.num_candidates(), space.num_layers), budget, Paradigm::generic};
  for (std::size_t k = 0; k < space.num_candidates(); ++k) {
    const auto w = block_workload(space.catalog[k], space);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& tile : tiles) {
      best = std::min(best, layer_latency_cycles(w, static_cast<double>(tile_cycles(w, tile)), budget, true).ms);
    }
    for (std::size_t l = 0; l < space.num_layers; ++l) lut.entries(k, l) = best;
  }
  return lut;
}

double lut_latency(const Lut& lut, const arch::ArchMatrix& m) {
  if (m.num_candidates() != lut.num_candidates() || m.num_layers() != lut.num_layers()) {
    throw ShapeMismatch("architecture matrix is " + std::to_string(m.num_candidates()) + "x" +
                        std::to_string(m.num_layers()) + ", LUT is " + std::to_string(lut.num_candidates()) + "x" +
                        std::to_string(lut.num_layers()));
  }
  double total = 0.0;
  for (std::size_t l = 0; l < lut.num_layers(); ++l) {
    for (std::size_t k = 0; k < lut.num_candidates(); ++k) total += m(k, l) * lut.entries(k, l);
  }
  return total;
}

namespace {

json budget_to_json(const HardwareBudget& b) {
  return {{"name", b.name},
          {"dsp_count", b.dsp_count},
          {"on_chip_mbits", b.on_chip_bits / kBitsPerMbit},
          {"dram_gbytes_per_sec", b.dram_bytes_per_sec / 1e9},
          {"clock_mhz", b.clock_hz / 1e6}};
}

}  // namespace

std::string lut_to_json(const Lut& lut) {
  json rows = json::array();
  for (std::size_t k = 0; k < lut.num_candidates(); ++k) {
    json row = json::array();
    for (std::size_t l = 0; l < lut.num_layers(); ++l) row.push_back(lut.entries(k, l));
    rows.push_back(std::move(row));
  }
  json doc{{"format", "ehdnas-lut-v1"},
           {"K", lut.num_candidates()},
           {"L", lut.num_layers()},
           {"paradigm", "GP"},
           {"budget", budget_to_json(lut.budget)},
           {"entries", std::move(rows)}};
  return doc.dump();
}

Lut lut_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("LUT file: ") + e.what());
  }
  try {
    if (doc.at("format") != "ehdnas-lut-v1") throw VersionMismatch("unsupported LUT format");
    if (doc.at("paradigm") != "GP") throw ValidationError("LUTs exist only for the generic paradigm");
    const auto k = doc.at("K").get<std::size_t>();
    const auto l = doc.at("L").get<std::size_t>();
    Lut lut{arch::RealMatrix(k, l), parse_budget_json(doc.at("budget").dump()), Paradigm::generic};
    const auto& rows = doc.at("entries");
    if (rows.size() != k) throw ParseError("LUT entries have the wrong row count");
    for (std::size_t r = 0; r < k; ++r) {
      if (rows[r].size() != l) throw ParseError("LUT entries have the wrong column count");
      for (std::size_t c = 0; c < l; ++c) {
        lut.entries(r, c) = rows[r][c].get<double>();
        if (!(lut.entries(r, c) >= 0.0)) throw ValidationError("LUT entries must be non-negative");
      }
    }
    return lut;
  } catch (const json::exception& e) {
    throw ParseError(std::string("LUT file: ") + e.what());
  }
}

}  // namespace ehdnas::perf
