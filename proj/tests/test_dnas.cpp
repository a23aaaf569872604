#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>

#include "ehdnas/dnas.hpp"
#include "ehdnas/errors.hpp"

using namespace ehdnas;
using namespace ehdnas::dnas;

namespace {

arch::SearchSpaceSpec two_block_space(arch::BlockKind a, arch::BlockKind b, std::size_t layers = 1) {
  const arch::BlockDesc blocks[] = {{a, 0}, {b, 0}};
  return arch::make_space(layers, 32, 16, 4, 1, blocks);
}

// Counts every call into the wrapped LUT cost.
class CountingCost final : public HwCost {
 public:
  explicit CountingCost(perf::Lut lut) : inner_(std::move(lut)) {}
  std::size_t num_candidates() const override { return inner_.num_candidates(); }
  std::size_t num_layers() const override { return inner_.num_layers(); }
  double latency_ms(const arch::ArchMatrix& m) const override {
    ++calls;
    return inner_.latency_ms(m);
  }
  arch::RealMatrix gradient(const arch::ArchMatrix& m) const override {
    ++calls;
    return inner_.gradient(m);
  }
  double scale_ms() const override { return inner_.scale_ms(); }
  mutable std::atomic<int> calls{0};

 private:
  LutHwCost inner_;
};

SearchConfig quick_search(std::uint64_t seed) {
  SearchConfig cfg;
  cfg.epochs = 4;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("task data is seeded, balanced and split") {
  const auto a = gen_task_data(3, 103, 16, 4, 0.3);
  const auto b = gen_task_data(3, 103, 16, 4, 0.3);
  CHECK(a.train.features == b.train.features);
  CHECK(a.test.labels == b.test.labels);
  CHECK_FALSE(gen_task_data(4, 103, 16, 4, 0.3).train.features == a.train.features);
  CHECK(a.val.size() == 20);
  CHECK(a.test.size() == 20);
  CHECK(a.train.size() == 63);
  CHECK(a.train.features.cols() == 16);

  std::size_t hist[4] = {};
  for (const auto* split : {&a.train, &a.val, &a.test})
    for (double v : split->labels.values()) ++hist[static_cast<std::size_t>(v)];
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(hist[c] >= 25);
    CHECK(hist[c] <= 26);
  }

  const auto clean = gen_task_data(1, 40, 8, 3, 0.0);
  for (std::size_t r = 0; r < clean.train.size(); ++r) {
    const auto label = static_cast<std::size_t>(clean.train.labels[r]);
    for (std::size_t j = 0; j < 8; ++j)
      CHECK(clean.train.features.at(r, j) == (j == label ? 1.0 / std::sqrt(2.0) : 0.0));
  }

  CHECK_THROWS_AS(gen_task_data(1, 4, 16, 4, 0.3), InvalidConfig);
  CHECK_THROWS_AS(gen_task_data(1, 100, 3, 4, 0.3), InvalidConfig);
  CHECK_THROWS_AS(gen_task_data(1, 100, 16, 1, 0.3), InvalidConfig);
  CHECK_THROWS_AS(gen_task_data(1, 100, 16, 4, -1.0), InvalidConfig);
}

TEST_CASE("supernet at a one-hot point equals the discrete network") {
  const auto space = arch::default_space();
  const auto task = gen_task_data(2, 60, 16, 4, 0.3);
  for (const auto& a : arch::sample_uniform(space, 8, 5)) {
    Supernet net = build_supernet(space, 7);
    DiscreteNet discrete = build_discrete(space, a, 7);
    const auto s = supernet_forward(net, task.test.features, arch::one_hot(a, space));
    const auto d = discrete_forward(discrete, task.test.features);
    REQUIRE(s.size() == d.size());
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(s[i] == doctest::Approx(d[i]).epsilon(1e-12));
  }
}

TEST_CASE("zero op annihilates the signal") {
  const auto space = arch::default_space();
  Supernet net = build_supernet(space, 1);
  auto& bias = net.graph.parameter_value("head.bias");
  for (std::size_t c = 0; c < bias.size(); ++c) bias[c] = 0.25 * static_cast<double>(c);
  const auto task = gen_task_data(2, 30, 16, 4, 0.3);
  const arch::DiscreteArch zeros{std::vector<std::size_t>(6, 4)};
  const auto scores = supernet_forward(net, task.train.features, arch::one_hot(zeros, space));
  for (std::size_t r = 0; r < scores.rows(); ++r)
    for (std::size_t c = 0; c < 4; ++c) CHECK(scores.at(r, c) == bias[c]);
}

TEST_CASE("half identity, half zero gives half the identity path") {
  const auto space = two_block_space(arch::BlockKind::identity, arch::BlockKind::zero);
  Supernet net = build_supernet(space, 3);
  const auto task = gen_task_data(2, 30, 16, 4, 0.3);
  const auto full = supernet_forward(net, task.train.features, arch::one_hot(arch::DiscreteArch{{0}}, space));
  arch::ArchMatrix half(2, 1);
  half(0, 0) = half(1, 0) = 0.5;
  const auto mixed = supernet_forward(net, task.train.features, half);
  for (std::size_t i = 0; i < full.size(); ++i) CHECK(mixed[i] == doctest::Approx(0.5 * full[i]).epsilon(1e-14));
  CHECK_THROWS_AS(supernet_forward(net, task.train.features, arch::ArchMatrix(3, 1)), ShapeMismatch);
}

TEST_CASE("frozen head starts at zero") {
  Supernet net = build_supernet(arch::default_space(), 1, true);
  CHECK(net.head_frozen);
  for (double v : net.graph.parameter_value("head.weight").values()) CHECK(v == 0.0);
}

TEST_CASE("beta zero never consults the hardware cost") {
  const auto space = arch::default_space();
  const auto task = gen_task_data(0, 200, 16, 4, 0.3);
  CountingCost cost(perf::build_lut(space, perf::large_budget()));
  auto cfg = quick_search(0);
  cfg.hw_loss_kind = HwLossKind::lut;
  const auto r = search(space, task, &cost, cfg);
  CHECK(cost.calls == 0);
  REQUIRE(r.history.size() == 4);
  for (const auto& e : r.history) CHECK_FALSE(e.hw_term_ms.has_value());
  CHECK(to_json(r).find("hw_term_ms") == std::string::npos);

  cfg.beta = 0.1;
  const auto with_hw = search(space, task, &cost, cfg);
  CHECK(cost.calls > 0);
  for (const auto& e : with_hw.history) CHECK(e.hw_term_ms.has_value());

  cfg.hw_loss_kind = HwLossKind::none;
  const auto plain = search(space, task, nullptr, cfg);
  CHECK(plain.arch == r.arch);
  CHECK(to_json(plain).find("\"hw_loss_kind\": \"none\"") != std::string::npos);
}

TEST_CASE("search is deterministic and reports latencies") {
  const auto space = arch::default_space();
  const auto task = gen_task_data(0, 200, 16, 4, 0.3);
  const LutHwCost cost(perf::build_lut(space, perf::large_budget()));
  auto cfg = quick_search(3);
  cfg.beta = 0.01;
  cfg.hw_loss_kind = HwLossKind::lut;
  cfg.final_epochs = 3;
  const auto a = search(space, task, &cost, cfg);
  const auto b = search(space, task, &cost, cfg);
  CHECK(to_json(a) == to_json(b));
  REQUIRE(a.searched_latency_ms.size() == 3);
  CHECK(a.searched_latency_ms[0].first == "small");
  CHECK(a.searched_latency_ms[2].first == "large");
  CHECK(a.searched_latency_ms[2].second ==
        perf::benchmark_generic(a.arch, space, perf::large_budget()).total_ms);
  REQUIRE(a.final_accuracy.has_value());
  CHECK(*a.final_accuracy >= 0.0);
  CHECK(*a.final_accuracy <= 1.0);
  CHECK(a.best_epoch < 4);
  CHECK(arch::discretize(a.relaxed_final) == a.arch);
  CHECK_FALSE(arch::validate(a.relaxed_final).has_value());
}

TEST_CASE("search rejects mismatched inputs") {
  const auto space = arch::default_space();
  const auto task = gen_task_data(0, 100, 16, 4, 0.3);
  auto cfg = quick_search(0);
  cfg.hw_loss_kind = HwLossKind::deep;
  cfg.beta = 0.1;
  CHECK_THROWS_AS(search(space, task, nullptr, cfg), InvalidConfig);

  const auto other = two_block_space(arch::BlockKind::dense, arch::BlockKind::identity, 2);
  const LutHwCost wrong(perf::build_lut(other, perf::large_budget()));
  CHECK_THROWS_AS(search(space, task, &wrong, cfg), MismatchedSpace);

  const auto narrow = gen_task_data(0, 100, 8, 4, 0.3);
  cfg.hw_loss_kind = HwLossKind::none;
  CHECK_THROWS_AS(search(space, narrow, nullptr, cfg), MismatchedSpace);

  cfg.epochs = 0;
  CHECK_THROWS_AS(search(space, task, nullptr, cfg), InvalidConfig);
  CHECK_THROWS_AS(parse_hw_loss_kind("fast"), InvalidConfig);
  CHECK(parse_hw_loss_kind("deep") == HwLossKind::deep);
}

TEST_CASE("constant task loss makes the search find the latency argmin") {
  const arch::BlockDesc blocks[] = {{arch::BlockKind::dense, 0}, {arch::BlockKind::low_rank, 8}};
  const auto space = arch::make_space(2, 32, 16, 4, 32, blocks);
  const auto oracle = brute_force_best(space, perf::large_budget(), perf::Paradigm::generic);
  REQUIRE(oracle.has_value());
  CHECK(oracle->arch.ops == std::vector<std::size_t>{1, 1});

  auto task = gen_task_data(0, 300, 16, 4, 0.3);
  for (auto* split : {&task.train, &task.val, &task.test})
    for (double& v : split->labels.values()) v = 0.0;

  const auto sets = perf::gen_dataset(space, perf::large_budget(), perf::Paradigm::generic, 200, 50, 50, 1);
  hw::TrainConfig tc;
  tc.batch_size = 64;
  tc.seed = 1;
  const DeepHwCost deep(hw::train(sets.train, sets.val, tc));
  const LutHwCost lut(perf::build_lut(space, perf::large_budget()));
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    SearchConfig cfg;
    cfg.seed = seed;
    cfg.beta = 0.01;
    cfg.freeze_head = true;
    cfg.hw_loss_kind = HwLossKind::deep;
    CHECK(search(space, task, &deep, cfg).arch == oracle->arch);
    cfg.hw_loss_kind = HwLossKind::lut;
    CHECK(search(space, task, &lut, cfg).arch == oracle->arch);
  }
}

TEST_CASE("final training orders architectures by expressivity") {
  const auto space = arch::default_space();
  const arch::DiscreteArch dense{std::vector<std::size_t>(6, 0)};
  const arch::DiscreteArch zeros{std::vector<std::size_t>(6, 4)};
  FinalTrainConfig cfg;
  cfg.epochs = 30;

  const auto clean = gen_task_data(1, 400, 16, 4, 0.0);
  CHECK(train_final(space, dense, clean, 0, cfg) == 1.0);

  const auto noisy = gen_task_data(1, 1500, 16, 4, 0.3);
  const double acc_dense = train_final(space, dense, noisy, 0, cfg);
  const double acc_zero = train_final(space, zeros, noisy, 0, cfg);
  CHECK(acc_zero == doctest::Approx(0.25).epsilon(0.4));
  CHECK(acc_dense >= acc_zero);
  CHECK(acc_dense > 0.75);  // Bayes rate at noise 0.3 is about 0.87
  CHECK(train_final(space, dense, noisy, 0, cfg) == acc_dense);

  cfg.epochs = 0;
  CHECK_THROWS_AS(train_final(space, dense, noisy, 0, cfg), InvalidConfig);
}

TEST_CASE("accuracy uses the lowest index on ties") {
  const diff::Tensor scores = diff::Tensor::matrix(3, 2, {0.0, 0.0, 1.0, 2.0, 3.0, -1.0});
  CHECK(accuracy(scores, diff::Tensor({3}, {0, 1, 1})) == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(accuracy(scores, diff::Tensor({2}, {0, 1})), ShapeMismatch);
}

TEST_CASE("beta sweep layout and csv") {
  const auto space = arch::default_space();
  const auto task = gen_task_data(0, 200, 16, 4, 0.3);
  const LutHwCost cost(perf::build_lut(space, perf::large_budget()));
  auto base = quick_search(0);
  base.epochs = 2;
  base.hw_loss_kind = HwLossKind::lut;
  const double grid[] = {0.0, 0.0001, 0.0003, 0.001, 0.003, 0.1};
  const std::uint64_t seeds[] = {0, 1};
  FinalTrainConfig final_cfg;
  final_cfg.epochs = 2;
  const auto rows = sweep_beta(space, task, &cost, base, grid, seeds, final_cfg, 2);
  REQUIRE(rows.size() == 12);
  CHECK(rows[0].beta == 0.0);
  CHECK(rows[1].seed == 1);
  CHECK(rows[11].beta == 0.1);

  auto plain = base;
  plain.hw_loss_kind = HwLossKind::none;
  const auto r = search(space, task, nullptr, plain);
  CHECK(rows[0].arch == r.arch);
  CHECK(rows[0].latency_large_ms == r.searched_latency_ms[2].second);
  CHECK(rows[0].accuracy == train_final(space, r.arch, task, 0, final_cfg));

  const auto serial = sweep_beta(space, task, &cost, base, grid, seeds, final_cfg, 1);
  CHECK(sweep_csv(serial) == sweep_csv(rows));
  const auto csv = sweep_csv(rows);
  CHECK(csv.rfind("beta,seed,latency_small_ms,latency_medium_ms,latency_large_ms,accuracy\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);

  CHECK_THROWS_AS(sweep_beta(space, task, &cost, base, std::span<const double>{}, seeds, final_cfg), InvalidConfig);
}

TEST_CASE("brute force oracle") {
  const auto space = arch::default_space();
  const auto best = brute_force_best(space, perf::large_budget(), perf::Paradigm::generic);
  REQUIRE(best.has_value());
  CHECK(best->arch.ops == std::vector<std::size_t>(6, 3));
  CHECK(best->latency_ms == perf::benchmark_generic(best->arch, space, perf::large_budget()).total_ms);

  const arch::BlockDesc dense_block[] = {{arch::BlockKind::dense, 0}};
  const auto only_dense = arch::make_space(2, 32, 16, 4, 32, dense_block);
  auto tiny = perf::small_budget();
  tiny.dsp_count = 1;
  tiny.on_chip_bits = 1.0;
  CHECK_FALSE(brute_force_best(only_dense, tiny, perf::Paradigm::pipeline).has_value());

  const auto single = brute_force_best(only_dense, perf::large_budget(), perf::Paradigm::generic);
  REQUIRE(single.has_value());
  CHECK(single->arch.ops == std::vector<std::size_t>{0, 0});

  const auto ties = brute_force_min(space, [](const arch::DiscreteArch&) { return std::optional<double>(1.0); });
  REQUIRE(ties.has_value());
  CHECK(ties->arch.ops == std::vector<std::size_t>(6, 0));

  const std::vector<arch::BlockDesc> many(5, {arch::BlockKind::identity, 0});
  const auto huge = arch::make_space(9, 32, 16, 4, 1, many);
  CHECK_THROWS_AS(brute_force_best(huge, perf::large_budget(), perf::Paradigm::generic), SpaceTooLarge);
}

TEST_CASE("dot export") {
  const arch::BlockDesc blocks[] = {{arch::BlockKind::dense, 0}, {arch::BlockKind::low_rank, 4}};
  const auto space = arch::make_space(2, 32, 16, 4, 1, blocks);
  const arch::DiscreteArch a{{1, 0}};
  const auto text = export_dot(a, space);
  CHECK(text ==
        "digraph arch {\n"
        "  rankdir=LR;\n"
        "  stem [label=\"stem\"];\n"
        "  l0 [label=\"low-rank-4\"];\n"
        "  l1 [label=\"full-dense\"];\n"
        "  head [label=\"head\"];\n"
        "  stem -> l0 -> l1 -> head;\n"
        "}\n");
  CHECK(export_dot(a, space) == text);
  CHECK_THROWS_AS(export_dot(arch::DiscreteArch{{2, 0}}, space), InvalidArch);
}
