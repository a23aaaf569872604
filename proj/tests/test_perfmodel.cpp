#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ehdnas/errors.hpp"
#include "ehdnas/perfmodel.hpp"

using namespace ehdnas;
using namespace ehdnas::perf;
using arch::BlockDesc;
using arch::BlockKind;
using arch::DiscreteArch;

namespace {

arch::SearchSpaceSpec search_width_space(std::size_t layers = 6) {
  const BlockDesc blocks[] = {{BlockKind::dense, 0}, {BlockKind::low_rank, 4}, {BlockKind::low_rank, 8},
                              {BlockKind::identity, 0}, {BlockKind::zero, 0}};
  return arch::make_space(layers, 32, 16, 4, 1, blocks);
}

HardwareBudget roomy_budget(std::uint64_t dsps) {
  return HardwareBudget{"roomy", dsps, 1e12, 1e15, kClockHz};
}

LayerWorkload custom_layer(std::uint64_t out, std::uint64_t in) {
  LayerWorkload w;
  w.label = "custom";
  w.out_features = out;
  w.in_features = in;
  w.macs = out * in;
  w.weight_bytes = out * in * 2;
  w.dense_ops = {{out, in}};
  return w;
}

// Rank of a block's cost: identity/zero < low-rank-4 < low-rank-8 < dense.
int cost_rank(std::size_t op) {
  static const int rank[] = {3, 1, 2, 0, 0};
  return rank[op];
}

}  // namespace

TEST_CASE("built-in budgets") {
  const auto s = small_budget();
  CHECK(s.dsp_count == 1400);
  CHECK(s.on_chip_bits == 46.0 * 1048576.0);
  CHECK(s.dram_bytes_per_sec == 12.8e9);
  CHECK(s.clock_hz == 200e6);
  CHECK(medium_budget().dsp_count == 2400);
  CHECK(medium_budget().on_chip_bits == 70.0 * 1048576.0);
  CHECK(large_budget().dsp_count == 4800);
  CHECK(large_budget().on_chip_bits == 141.0 * 1048576.0);
  CHECK(resolve_budget("medium").name == "medium");
  CHECK_THROWS_AS(resolve_budget("/nonexistent/budget.json"), ValidationError);
}

TEST_CASE("budget JSON") {
  const auto b = parse_budget_json(
      R"({"name":"tiny","dsp_count":64,"on_chip_mbits":1.5,"dram_gbytes_per_sec":6.4,"clock_mhz":100})");
  CHECK(b.name == "tiny");
  CHECK(b.dsp_count == 64);
  CHECK(b.on_chip_bits == 1.5 * 1048576.0);
  CHECK(b.dram_bytes_per_sec == 6.4e9);
  CHECK(b.clock_hz == 100e6);
  CHECK_THROWS_AS(parse_budget_json("{"), ParseError);
  CHECK_THROWS(parse_budget_json(
      R"({"name":"neg","dsp_count":64,"on_chip_mbits":-1,"dram_gbytes_per_sec":6.4,"clock_mhz":100})"));
  CHECK_THROWS_AS(check_budget(HardwareBudget{"zero", 0, 1.0, 1.0, 1.0}), InvalidConfig);
}

TEST_CASE("workload_of examples") {
  const auto s = search_width_space();
  const auto all_dense = workload_of(DiscreteArch{std::vector<std::size_t>(6, 0)}, s);
  REQUIRE(all_dense.size() == 8);
  CHECK(all_dense[0].label == "stem");
  CHECK(all_dense[0].macs == 512);
  CHECK(all_dense[0].weight_bytes == 1024);
  for (std::size_t l = 1; l <= 6; ++l) CHECK(all_dense[l].macs == 1024);
  CHECK(all_dense[7].label == "head");
  CHECK(all_dense[7].macs == 128);

  const auto identity = workload_of(DiscreteArch{std::vector<std::size_t>(6, 3)}, s);
  for (std::size_t l = 1; l <= 6; ++l) {
    CHECK(identity[l].macs == 0);
    CHECK(identity[l].weight_bytes == 0);
    CHECK(identity[l].dense_ops.empty());
  }
  const auto low = workload_of(DiscreteArch{{1, 1, 1, 1, 1, 1}}, s);
  REQUIRE(low[1].dense_ops.size() == 2);
  CHECK(low[1].macs == 2 * 32 * 4);

  CHECK_THROWS_AS(workload_of(DiscreteArch{{5, 0, 0, 0, 0, 0}}, s), InvalidArch);
  CHECK_THROWS_AS(workload_of(DiscreteArch{{0}}, s), InvalidArch);
}

TEST_CASE("deployed widths scale with the multiplier") {
  const auto s = arch::default_space();
  const auto w = workload_of(DiscreteArch{std::vector<std::size_t>(6, 0)}, s);
  CHECK(w[1].macs == 1024ull * 1024ull);
  CHECK(w[1].weight_bytes == 2097152);
  const auto lr = block_workload(s.catalog[1], s);
  CHECK(lr.macs == 2ull * 1024ull * 128ull);
}

TEST_CASE("layer_latency examples") {
  const auto b = large_budget();
  LayerWorkload empty;
  const auto overhead = layer_latency(empty, 0, b, true);
  CHECK(overhead.ms == doctest::Approx(64.0 / 200e6 * 1e3).epsilon(1e-12));
  CHECK(overhead.bound == Bound::compute);

  LayerWorkload compute;
  compute.macs = 200000;
  compute.in_bytes = 64;
  compute.out_bytes = 64;
  const auto c = layer_latency(compute, 1000, b, true);
  CHECK(c.ms == doctest::Approx(0.00132).epsilon(1e-12));
  CHECK(c.bound == Bound::compute);

  LayerWorkload stream;
  stream.macs = 10;
  stream.weight_bytes = 2097152;
  const auto m = layer_latency(stream, 1000, b, false);
  CHECK(m.bound == Bound::memory);
  CHECK(m.ms - 64.0 / 200e6 * 1e3 == doctest::Approx(0.16384).epsilon(1e-12));

  CHECK_THROWS_AS(layer_latency(compute, 0, b, true), InvalidConfig);
}

TEST_CASE("generic DSE picks the tile that divides every layer") {
  // Layers (out 48, in 32) and (32, 32): tile (16, 32) needs 3 + 2 compute
  // cycles, tile (32, 16) needs 4 + 2. With two 64-cycle overheads the
  // totals are 133 and 134 cycles.
  const LayerWorkload layers[] = {custom_layer(48, 32), custom_layer(32, 32)};
  const auto budget = roomy_budget(512);
  const TileConfig dividing{16, 32};
  const TileConfig ragged{32, 16};
  const auto a = evaluate_generic(layers, budget, dividing);
  const auto b = evaluate_generic(layers, budget, ragged);
  CHECK(a.total_ms == doctest::Approx(133.0 / 200e6 * 1e3).epsilon(1e-12));
  CHECK(b.total_ms == doctest::Approx(134.0 / 200e6 * 1e3).epsilon(1e-12));
  const TileConfig both[] = {ragged, dividing};
  const auto best = dse_generic(layers, budget, both);
  REQUIRE(best.tile.has_value());
  CHECK(*best.tile == dividing);
  CHECK_THROWS_AS(dse_generic(layers, budget, std::span<const TileConfig>{}), InvalidConfig);
}

TEST_CASE("tile candidates respect the DSP budget") {
  for (const auto& t : tile_candidates(1400)) {
    CHECK(t.tm * t.tn <= 1400);
    CHECK(t.tm <= 1024);
    CHECK(t.tn <= 1024);
    CHECK((t.tm & (t.tm - 1)) == 0);
    CHECK((t.tn & (t.tn - 1)) == 0);
  }
  CHECK(tile_candidates(1).size() == 1);
}

TEST_CASE("generic report structure") {
  const auto s = arch::default_space();
  const auto b = large_budget();
  const auto r = benchmark_generic(DiscreteArch{std::vector<std::size_t>(6, 3)}, s, b);
  CHECK(r.feasible);
  REQUIRE(r.per_layer_ms.size() == 8);
  double sum = r.io_ms;
  for (double v : r.per_layer_ms) sum += v;
  CHECK(r.total_ms == doctest::Approx(sum).epsilon(1e-14));
  const double overhead_ms = 64.0 / b.clock_hz * 1e3;
  for (std::size_t l = 1; l <= 6; ++l) CHECK(r.per_layer_ms[l] == doctest::Approx(overhead_ms).epsilon(1e-14));
  CHECK(r.io_ms == doctest::Approx((16.0 * 2 + 4.0 * 2) / 12.8e9 * 1e3).epsilon(1e-12));

  const auto j = nlohmann::json::parse(report_to_json(r));
  CHECK(j["feasible"] == true);
  CHECK(j["chosen_config"].contains("tm"));
  CHECK(j["layers"].size() == 8);
}

TEST_CASE("benchmarks are deterministic") {
  const auto s = arch::default_space();
  for (const auto& a : arch::sample_uniform(s, 20, 5)) {
    for (const auto& b : builtin_budgets()) {
      CHECK(report_to_json(benchmark_generic(a, s, b)) == report_to_json(benchmark_generic(a, s, b)));
      CHECK(report_to_json(benchmark_pipeline(a, s, b)) == report_to_json(benchmark_pipeline(a, s, b)));
    }
  }
}

TEST_CASE("monotonicity under costlier blocks") {
  const auto s = arch::default_space();
  std::mt19937_64 rng(3);
  for (const auto& base : arch::sample_uniform(s, 60, 17)) {
    const std::size_t l = rng() % 6;
    for (std::size_t op = 0; op < 5; ++op) {
      if (cost_rank(op) <= cost_rank(base.ops[l])) continue;
      auto costlier = base;
      costlier.ops[l] = op;
      for (const auto& b : builtin_budgets()) {
        CHECK(benchmark_generic(costlier, s, b).total_ms >= benchmark_generic(base, s, b).total_ms);
        const auto p0 = benchmark_pipeline(base, s, b);
        const auto p1 = benchmark_pipeline(costlier, s, b);
        if (p0.feasible && p1.feasible) CHECK(p1.total_ms >= p0.total_ms);
        if (!p0.feasible) CHECK_FALSE(p1.feasible);
      }
    }
  }
}

TEST_CASE("more DSPs never slow the generic paradigm") {
  const auto s = arch::default_space();
  auto bigger = large_budget();
  bigger.dsp_count = 9600;
  for (const auto& a : arch::sample_uniform(s, 40, 8)) {
    CHECK(benchmark_generic(a, s, bigger).total_ms <= benchmark_generic(a, s, large_budget()).total_ms);
    CHECK(benchmark_generic(a, s, medium_budget()).total_ms <= benchmark_generic(a, s, small_budget()).total_ms);
  }
}

TEST_CASE("pipeline feasibility") {
  const auto s = arch::default_space();
  const DiscreteArch dense{std::vector<std::size_t>(6, 0)};
  const DiscreteArch identity{std::vector<std::size_t>(6, 3)};
  const auto over = benchmark_pipeline(dense, s, small_budget());
  CHECK_FALSE(over.feasible);
  CHECK(nlohmann::json::parse(report_to_json(over))["total_ms"].is_null());
  const auto fits = benchmark_pipeline(identity, s, small_budget());
  CHECK(fits.feasible);
  double sum = 0.0, slowest = 0.0;
  for (double v : fits.per_layer_ms) {
    sum += v;
    slowest = std::max(slowest, v);
  }
  CHECK(fits.total_ms == doctest::Approx(sum).epsilon(1e-14));
  CHECK(fits.initiation_interval_ms == slowest);
  const double overhead_ms = 64.0 / 200e6 * 1e3;
  for (std::size_t l = 1; l <= 6; ++l) CHECK(fits.per_layer_ms[l] == doctest::Approx(overhead_ms).epsilon(1e-14));
  CHECK(fits.dsp_alloc[1] == 0);

  // Feasibility is monotone in on-chip capacity.
  for (const auto& a : arch::sample_uniform(s, 40, 2)) {
    bool was_feasible = false;
    for (double mbits : {10.0, 46.0, 70.0, 100.0, 141.0, 400.0}) {
      auto b = small_budget();
      b.on_chip_bits = mbits * kBitsPerMbit;
      const bool ok = benchmark_pipeline(a, s, b).feasible;
      if (was_feasible) CHECK(ok);
      was_feasible = ok;
    }
  }
}

TEST_CASE("dse_pipeline_alloc examples") {
  const std::uint64_t a[] = {100, 300};
  CHECK(dse_pipeline_alloc(a, 400) == std::vector<std::uint64_t>{100, 300});
  const std::uint64_t b[] = {0, 500};
  CHECK(dse_pipeline_alloc(b, 8) == std::vector<std::uint64_t>{0, 8});
  const std::uint64_t c[] = {1, 1};
  CHECK_THROWS_AS(dse_pipeline_alloc(c, 1), InfeasibleAllocation);

  // Two stages of 100 and 300 MACs: one compute cycle each.
  const auto budget = roomy_budget(400);
  LayerWorkload s1, s2;
  s1.macs = 100;
  s2.macs = 300;
  const auto alloc = dse_pipeline_alloc(a, 400);
  CHECK(layer_latency(s1, alloc[0], budget, true).ms == doctest::Approx(65.0 / 200e6 * 1e3).epsilon(1e-12));
  CHECK(layer_latency(s2, alloc[1], budget, true).ms == doctest::Approx(65.0 / 200e6 * 1e3).epsilon(1e-12));
}

TEST_CASE("dse_pipeline_alloc properties") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 8;
    std::vector<std::uint64_t> macs(n);
    std::size_t nonzero = 0;
    for (auto& m : macs) {
      m = rng() % 4 == 0 ? 0 : 1 + rng() % 2000000;
      nonzero += m > 0;
    }
    const std::uint64_t dsps = nonzero + rng() % 5000;
    const auto alloc = dse_pipeline_alloc(macs, dsps);
    std::uint64_t used = 0;
    for (std::size_t i = 0; i < n; ++i) {
      used += alloc[i];
      if (macs[i] == 0) CHECK(alloc[i] == 0);
      else CHECK(alloc[i] >= 1);
    }
    CHECK(used <= dsps);
    if (nonzero > 0) CHECK(used == dsps);
  }
}

TEST_CASE("LUT construction and evaluation") {
  const auto s = arch::default_space();
  const auto b = large_budget();
  const auto lut = build_lut(s, b);
  CHECK(lut.num_candidates() == 5);
  CHECK(lut.num_layers() == 6);
  const double overhead_ms = 64.0 / b.clock_hz * 1e3;
  for (std::size_t l = 0; l < 6; ++l) {
    CHECK(lut.entries(3, l) == doctest::Approx(overhead_ms).epsilon(1e-14));
    CHECK(lut.entries(0, l) > lut.entries(1, l));
    for (std::size_t k = 0; k < 5; ++k) {
      CHECK(lut.entries(k, l) >= 0.0);
      CHECK(lut.entries(k, l) == lut.entries(k, 0));
    }
  }

  Lut toy{arch::RealMatrix(3, 2, {1.0, 1.0, 2.0, 2.0, 3.0, 3.0}), b, Paradigm::generic};
  arch::ArchMatrix pick(arch::RealMatrix(3, 2, {1.0, 0.0, 0.0, 0.0, 0.0, 1.0}));
  CHECK(lut_latency(toy, pick) == 4.0);
  Lut toy3{arch::RealMatrix(3, 3, {1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0}), b, Paradigm::generic};
  CHECK(lut_latency(toy3, arch::ArchMatrix(arch::RealMatrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}))) == 6.0);
  Lut half{arch::RealMatrix(2, 1, {2.0, 4.0}), b, Paradigm::generic};
  CHECK(lut_latency(half, arch::ArchMatrix(arch::RealMatrix(2, 1, {0.5, 0.5}))) == 3.0);
  Lut zero{arch::RealMatrix(5, 6), b, Paradigm::generic};
  CHECK(lut_latency(zero, arch::relax(arch::RealMatrix(5, 6, 0.3))) == 0.0);
  CHECK_THROWS_AS(lut_latency(toy, arch::ArchMatrix(2, 2)), ShapeMismatch);

  // Linearity.
  const auto m1 = arch::relax(arch::RealMatrix(5, 6, {1, 2, 3, 4, 5, 6, 1, 0, 1, 0, 1, 0, 2, 2, 2,
                                                      0, 0, 0, 3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8}));
  const auto m2 = arch::one_hot(DiscreteArch{{0, 1, 2, 3, 4, 0}}, s);
  const double alpha = 0.3;
  arch::RealMatrix mixed(5, 6);
  for (std::size_t i = 0; i < 30; ++i) {
    mixed.values()[i] = alpha * m1.weights().values()[i] + (1 - alpha) * m2.weights().values()[i];
  }
  CHECK(lut_latency(lut, arch::ArchMatrix(mixed)) ==
        doctest::Approx(alpha * lut_latency(lut, m1) + (1 - alpha) * lut_latency(lut, m2)).epsilon(1e-13));

  const auto back = lut_from_json(lut_to_json(lut));
  CHECK(back.entries == lut.entries);
  CHECK(back.budget.dsp_count == lut.budget.dsp_count);
}

TEST_CASE("non-additivity witness") {
  const auto s = arch::default_space();
  const auto b = large_budget();
  const auto lut = build_lut(s, b);
  bool witnessed = false;
  for (const auto& a : arch::sample_uniform(s, 50, 1)) {
    const double additive = lut_latency(lut, arch::one_hot(a, s));
    const double real = benchmark_generic(a, s, b).total_ms;
    if (std::abs(additive - real) / real > 0.05) witnessed = true;
  }
  CHECK(witnessed);
}

TEST_CASE("gen_dataset counts and determinism") {
  const auto s = arch::default_space();
  const auto d = gen_dataset(s, large_budget(), Paradigm::generic, 20000, 4000, 4000, 1);
  CHECK(d.train.size() == 20000);
  CHECK(d.val.size() == 4000);
  CHECK(d.test.size() == 4000);
  CHECK(d.rejected == 0);

  const auto write = [](const LatencyDataset& ds) {
    std::ostringstream out;
    write_dataset(ds, out);
    return out.str();
  };
  const auto a = gen_dataset(s, large_budget(), Paradigm::pipeline, 300, 50, 50, 9, 1);
  const auto b = gen_dataset(s, large_budget(), Paradigm::pipeline, 300, 50, 50, 9, 3);
  CHECK(write(a.train) == write(b.train));
  CHECK(write(a.test) == write(b.test));
  for (const auto& r : a.train.records) CHECK(r.latency_ms > 0.0);

  const auto tight = gen_dataset(s, small_budget(), Paradigm::pipeline, 300, 50, 50, 9);
  CHECK(tight.rejected > 0);
  CHECK(tight.train.size() + tight.val.size() + tight.test.size() + tight.rejected == 400);

  auto tiny = small_budget();
  tiny.on_chip_bits = 1000.0;
  CHECK_THROWS_AS(gen_dataset(s, tiny, Paradigm::pipeline, 10, 5, 5, 1), EmptyDataset);
  CHECK_THROWS_AS(gen_dataset(s, large_budget(), Paradigm::generic, 0, 5, 5, 1), InvalidConfig);
}

TEST_CASE("dataset round trip and ingestion errors") {
  const auto s = arch::default_space();
  const auto d = gen_dataset(s, large_budget(), Paradigm::generic, 20, 5, 5, 2);
  std::stringstream buffer;
  write_dataset(d.train, buffer);
  const auto back = read_dataset(buffer);
  REQUIRE(back.size() == 20);
  CHECK(back.num_candidates == 5);
  CHECK(back.num_layers == 6);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(back.records[i].arch == d.train.records[i].arch);
    CHECK(back.records[i].latency_ms == d.train.records[i].latency_ms);
  }

  const std::string header = R"({"format":"ehdnas-latds-v1","K":3,"L":2,"paradigm":"ingested","budget":"x"})";
  const auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return read_dataset(in);
  };
  const auto ok = parse(header + "\n" + R"({"ops":[0,1],"latency_ms":1.5})" + "\n" +
                        R"({"ops":[2,2],"latency_ms":0.5})" + "\n" + R"({"ops":[1,0],"latency_ms":3})" + "\n");
  CHECK(ok.size() == 3);
  CHECK_THROWS_AS(parse(header + "\n" + R"({"ops":[0,1],"latency_ms":-1})" + "\n"), ValidationError);
  CHECK_THROWS_AS(parse(header + "\n" + R"({"ops":[0,3],"latency_ms":1})" + "\n"), ValidationError);
  try {
    parse(header + "\n" + R"({"ops":[0,1],"latency_ms":1})" + "\n" + R"({"ops":[0,1,2],"latency_ms":1})" + "\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  try {
    parse(header + "\n" + "{not json\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_AS(parse(R"({"format":"ehdnas-latds-v9","K":3,"L":2,"paradigm":"GP"})"), VersionMismatch);

  const auto path = std::filesystem::temp_directory_path() / "ehdnas_ingest_test.jsonl";
  {
    std::ofstream out(path);
    out << header << "\n" << R"({"ops":[0,1],"latency_ms":1.5})" << "\n";
  }
  const auto ingested = ingest_dataset(path);
  CHECK(ingested.source == Source::ingested);
  CHECK(ingested.size() == 1);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(ingest_dataset("/nonexistent/file.jsonl"), ValidationError);
}
