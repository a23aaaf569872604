#include "ehdnas/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "ehdnas/dnas.hpp"
#include "ehdnas/errors.hpp"
#include "ehdnas/hwloss.hpp"
#include "ehdnas/log.hpp"
#include "ehdnas/parallel.hpp"
#include "ehdnas/perfmodel.hpp"

namespace ehdnas::cli {

namespace fs = std::filesystem;
using nlohmann::json;

arch::SearchSpaceSpec parse_space_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("space file: ") + e.what());
  }
  try {
    std::vector<arch::BlockDesc> blocks;
    for (const auto& b : doc.at("blocks")) {
      const auto name = b.get<std::string>();
      if (name == "full-dense") {
        blocks.push_back({arch::BlockKind::dense, 0});
      } else if (name == "identity") {
        blocks.push_back({arch::BlockKind::identity, 0});
      } else if (name == "zero") {
        blocks.push_back({arch::BlockKind::zero, 0});
      } else if (name.rfind("low-rank-", 0) == 0) {
        const auto rank = std::stoul(name.substr(9));
        if (rank == 0) throw ValidationError("low-rank block needs a positive rank");
        blocks.push_back({arch::BlockKind::low_rank, rank});
      } else {
        throw ValidationError("unknown block '" + name + "'");
      }
    }
    return arch::make_space(doc.at("layers").get<std::size_t>(), doc.at("hidden_width").get<std::size_t>(),
                            doc.at("input_dim").get<std::size_t>(), doc.at("num_classes").get<std::size_t>(),
                            doc.value("deploy_multiplier", std::size_t{1}), blocks);
  } catch (const json::exception& e) {
    throw ParseError(std::string("space file: ") + e.what());
  } catch (const std::logic_error& e) {
    throw ParseError(std::string("space file: bad low-rank block name: ") + e.what());
  }
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
}

json eval_json(const hw::EvalReport& r) {
  return {{"mean_rel_err", r.mean_rel_err}, {"decile_errors", r.decile_errors}, {"n_samples", r.n_samples}};
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string token;
  while (std::getline(ss, token, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(token, &used));
      if (used != token.size()) throw std::invalid_argument(token);
    } catch (const std::logic_error&) {
      throw ValidationError("bad number '" + token + "' in list '" + text + "'");
    }
  }
  if (out.empty()) throw ValidationError("empty list");
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> out;
  for (double v : parse_doubles(text)) {
    if (v < 0.0 || v != static_cast<double>(static_cast<std::uint64_t>(v))) {
      throw ValidationError("seeds must be non-negative integers");
    }
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

struct TaskOptions {
  std::uint64_t seed = 0;
  std::size_t n = 1500;
  double noise = 0.3;

  void add(CLI::App* app) {
    app->add_option("--task-seed", seed, "Seed of the synthetic classification task")->capture_default_str();
    app->add_option("--task-n", n, "Number of task samples (split 60/20/20)")->capture_default_str();
    app->add_option("--noise", noise, "Cluster noise standard deviation")->capture_default_str();
  }
  dnas::TaskData make(const arch::SearchSpaceSpec& space) const {
    return dnas::gen_task_data(seed, n, space.input_dim, space.num_classes, noise);
  }
};

struct HwOptions {
  std::string kind = "none";
  std::string model;
  std::string lut;

  void add(CLI::App* app) {
    app->add_option("--hw", kind, "Hardware loss: deep, lut or none")->capture_default_str();
    app->add_option("--model", model, "Learned hardware loss model (for --hw deep)");
    app->add_option("--lut", lut, "Latency lookup table (for --hw lut)");
  }
  std::unique_ptr<dnas::HwCost> load() const {
    switch (dnas::parse_hw_loss_kind(kind)) {
      case dnas::HwLossKind::deep:
        if (model.empty()) throw ValidationError("--hw deep needs --model");
        return std::make_unique<dnas::DeepHwCost>(hw::load(model));
      case dnas::HwLossKind::lut:
        if (lut.empty()) throw ValidationError("--hw lut needs --lut");
        return std::make_unique<dnas::LutHwCost>(perf::lut_from_json(read_file(lut)));
      case dnas::HwLossKind::none:
        break;
    }
    return nullptr;
  }
};

struct Options {
  std::string space_file;
  std::uint64_t seed = 0;
  std::string budget = "large";
  std::string paradigm = "GP";
  std::string arch_text;
  std::string out;
  std::string in;

  // gen-dataset
  std::size_t n_train = 20000, n_val = 4000, n_test = 4000;

  // hwloss
  std::string train_path, val_path, test_path;
  hw::TrainConfig train_cfg;
  bool compare_lut = false;
  std::size_t samples = 100;
  double eps = 1e-5;

  // search / sweep
  dnas::SearchConfig search_cfg;
  HwOptions hw_opts;
  TaskOptions task_opts;
  std::string grid = "0.1,0.01,0.005,0.001,0.0005,0.0001";
  std::string seeds = "0,1,2,3,4";
  std::size_t final_epochs = 100;

  arch::SearchSpaceSpec space() const {
    return space_file.empty() ? arch::default_space() : load_space(space_file);
  }
};

void add_space(CLI::App* app, Options& o) {
  app->add_option("--space", o.space_file, "Search space JSON file (default: built-in 6-layer space)");
}

void add_budget(CLI::App* app, Options& o) {
  app->add_option("--budget", o.budget, "Budget: small, medium, large or a budget JSON file")->capture_default_str();
}

void add_paradigm(CLI::App* app, Options& o) {
  app->add_option("--paradigm", o.paradigm, "Accelerator paradigm: GP or PP")->capture_default_str();
}

void add_seed(CLI::App* app, Options& o) {
  app->add_option("--seed", o.seed, "Random seed")->capture_default_str();
}

int cmd_gen_dataset(const Options& o, std::ostream& out) {
  const auto space = o.space();
  const auto budget = perf::resolve_budget(o.budget);
  const auto sets = perf::gen_dataset(space, budget, perf::parse_paradigm(o.paradigm), o.n_train, o.n_val, o.n_test,
                                      o.seed, default_worker_count());
  const fs::path dir(o.out);
  fs::create_directories(dir);
  perf::write_dataset(sets.train, dir / "train.jsonl");
  perf::write_dataset(sets.val, dir / "val.jsonl");
  perf::write_dataset(sets.test, dir / "test.jsonl");
  out << json{{"train", sets.train.size()},
              {"val", sets.val.size()},
              {"test", sets.test.size()},
              {"rejected", sets.rejected},
              {"out_dir", dir.string()}}
             .dump(2)
      << '\n';
  return 0;
}

int cmd_ingest(const Options& o, std::ostream& out) {
  const auto ds = perf::ingest_dataset(o.in);
  out << json{{"records", ds.size()}, {"K", ds.num_candidates}, {"L", ds.num_layers}, {"paradigm", ds.paradigm}}
             .dump(2)
      << '\n';
  return 0;
}

int cmd_bench(const Options& o, std::ostream& out) {
  const auto space = o.space();
  const auto a = arch::parse_arch(o.arch_text);
  arch::check_arch(a, space);
  const auto report = perf::benchmark(a, space, perf::resolve_budget(o.budget), perf::parse_paradigm(o.paradigm));
  out << report_to_json(report) << '\n';
  return 0;
}

int cmd_build_lut(const Options& o, std::ostream& out) {
  const auto lut = perf::build_lut(o.space(), perf::resolve_budget(o.budget));
  const auto text = perf::lut_to_json(lut);
  if (!o.out.empty()) write_file(o.out, text + "\n");
  out << text << '\n';
  return 0;
}

int cmd_train_hwloss(const Options& o, std::ostream& out) {
  const auto train_set = perf::ingest_dataset(o.train_path);
  const auto val_set = perf::ingest_dataset(o.val_path);
  hw::TrainConfig cfg = o.train_cfg;
  cfg.seed = o.seed;
  hw::TrainHistory history;
  const auto model = hw::train(train_set, val_set, cfg, &history);
  hw::save(model, o.out);
  out << json{{"model", o.out},
              {"best_epoch", history.best_epoch},
              {"best_val_mae", history.val_mae.at(history.best_epoch)},
              {"mean_ms", model.mean_ms},
              {"std_ms", model.std_ms}}
             .dump(2)
      << '\n';
  return 0;
}

int cmd_eval_hwloss(const Options& o, std::ostream& out) {
  const auto model = hw::load(o.in);
  const auto test_set = perf::ingest_dataset(o.test_path);
  json doc{{"deep", eval_json(hw::evaluate(model, test_set))}};
  if (o.compare_lut) {
    const auto space = o.space();
    if (space.num_candidates() != model.num_candidates || space.num_layers != model.num_layers) {
      throw MismatchedSpace("--space does not match the model's (K, L)");
    }
    doc["lut"] = eval_json(hw::evaluate_lut(perf::build_lut(space, perf::resolve_budget(o.budget)), test_set));
  }
  out << doc.dump(2) << '\n';
  return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  hw::HwLossModel model;
  if (!o.in.empty()) {
    model = hw::load(o.in);
  } else {
    const auto space = o.space();
    hw::TrainConfig cfg = o.train_cfg;
    cfg.seed = o.seed;
    model = hw::init_model(space.num_candidates(), space.num_layers, cfg);
  }
  if (o.samples == 0) throw ValidationError("--samples must be positive");
  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  double arch_err = 0.0;
  std::size_t compared = 0, skipped = 0;
  for (std::size_t s = 0; s < o.samples; ++s) {
    arch::RealMatrix logits(model.num_candidates, model.num_layers);
    for (double& v : logits.values()) v = gauss(rng);
    const auto report = hw::gradcheck(model, arch::relax(logits), o.eps);
    arch_err = std::max(arch_err, report.max_rel_error);
    compared += report.compared;
    skipped += report.skipped;
  }
  // Parameter gradients of the training loss on one random batch.
  const std::size_t batch = 8;
  std::vector<arch::DiscreteArch> archs;
  arch::SearchSpaceSpec shape_only;
  shape_only.num_layers = model.num_layers;
  shape_only.catalog.resize(model.num_candidates);
  archs = arch::sample_uniform(shape_only, batch, o.seed);
  auto p = hw::build_graph(model);
  diff::Bindings b;
  b.emplace("arch", hw::encode(archs, model.num_candidates));
  diff::Tensor target({batch, 1});
  for (double& v : target.values()) v = gauss(rng);
  b.emplace("target", target);
  b.emplace("seed", diff::Tensor::scalar(0.0));
  const auto param_report = diff::finite_diff_check(p.graph, p.loss, b, o.eps);
  out << json{{"grad_arch_max_rel_err", arch_err},
              {"grad_arch_compared", compared},
              {"grad_arch_skipped", skipped},
              {"samples", o.samples},
              {"parameter_max_rel_err", param_report.max_rel_error},
              {"parameter_compared", param_report.compared},
              {"parameter_skipped", param_report.skipped}}
             .dump(2)
      << '\n';
  return 0;
}

int cmd_search(const Options& o, std::ostream& out) {
  const auto space = o.space();
  const auto task = o.task_opts.make(space);
  auto cfg = o.search_cfg;
  cfg.seed = o.seed;
  cfg.hw_loss_kind = dnas::parse_hw_loss_kind(o.hw_opts.kind);
  const auto hw_cost = o.hw_opts.load();
  const auto result = dnas::search(space, task, hw_cost.get(), cfg);
  const auto text = dnas::to_json(result);
  if (!o.out.empty()) write_file(o.out, text + "\n");
  out << text << '\n';
  return 0;
}

int cmd_sweep(const Options& o, std::ostream& out) {
  const auto space = o.space();
  const auto task = o.task_opts.make(space);
  auto cfg = o.search_cfg;
  cfg.hw_loss_kind = dnas::parse_hw_loss_kind(o.hw_opts.kind);
  const auto hw_cost = o.hw_opts.load();
  const auto grid = parse_doubles(o.grid);
  const auto seeds = parse_seeds(o.seeds);
  dnas::FinalTrainConfig final_cfg;
  final_cfg.epochs = o.final_epochs;
  final_cfg.learning_rate = cfg.lr_weights;
  final_cfg.momentum = cfg.momentum;
  final_cfg.batch_size = cfg.batch_size;
  const auto rows = dnas::sweep_beta(space, task, hw_cost.get(), cfg, grid, seeds, final_cfg, default_worker_count());
  const auto csv = dnas::sweep_csv(rows);
  if (!o.out.empty()) write_file(o.out, csv);
  out << csv;
  return 0;
}

int cmd_oracle(const Options& o, std::ostream& out) {
  const auto space = o.space();
  const auto budget = perf::resolve_budget(o.budget);
  const auto paradigm = perf::parse_paradigm(o.paradigm);
  const auto best = dnas::brute_force_best(space, budget, paradigm);
  json doc{{"budget", budget.name}, {"paradigm", perf::to_string(paradigm)}, {"feasible", best.has_value()}};
  doc["arch"] = best ? json(arch::to_string(best->arch)) : json(nullptr);
  doc["latency_ms"] = best ? json(best->latency_ms) : json(nullptr);
  out << doc.dump(2) << '\n';
  return 0;
}

int cmd_export_dot(const Options& o, std::ostream& out) {
  const auto space = o.space();
  const auto text = dnas::export_dot(arch::parse_arch(o.arch_text), space);
  if (!o.out.empty()) write_file(o.out, text);
  out << text;
  return 0;
}

}  // namespace

arch::SearchSpaceSpec load_space(const std::string& path) { return parse_space_json(read_file(path)); }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hardware-aware differentiable architecture search toolkit", "ehdnas"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("gen-dataset", "Benchmark uniformly sampled architectures into JSONL splits");
  add_space(gen, o);
  add_budget(gen, o);
  add_paradigm(gen, o);
  add_seed(gen, o);
  gen->add_option("--n-train", o.n_train, "Training records")->capture_default_str();
  gen->add_option("--n-val", o.n_val, "Validation records")->capture_default_str();
  gen->add_option("--n-test", o.n_test, "Test records")->capture_default_str();
  gen->add_option("--out-dir", o.out, "Directory receiving train/val/test.jsonl")->required();

  auto* ingest = app.add_subcommand("ingest", "Validate an externally measured latency dataset");
  ingest->add_option("--in", o.in, "Dataset JSONL file")->required();

  auto* bench = app.add_subcommand("bench", "Benchmark one architecture and print its latency report");
  add_space(bench, o);
  add_budget(bench, o);
  add_paradigm(bench, o);
  bench->add_option("--arch", o.arch_text, "Architecture, e.g. 0,3,1,1,4,2")->required();

  auto* lut = app.add_subcommand("build-lut", "Build the additive per-block latency table (GP)");
  add_space(lut, o);
  add_budget(lut, o);
  lut->add_option("--out", o.out, "Output LUT JSON file");

  auto* train = app.add_subcommand("train-hwloss", "Train the learned latency model");
  add_seed(train, o);
  train->add_option("--train", o.train_path, "Training dataset JSONL")->required();
  train->add_option("--val", o.val_path, "Validation dataset JSONL")->required();
  train->add_option("--out", o.out, "Output model JSON")->required();
  train->add_option("--epochs", o.train_cfg.epochs, "Training epochs")->capture_default_str();
  train->add_option("--lr", o.train_cfg.learning_rate, "Adam learning rate")->capture_default_str();
  train->add_option("--batch-size", o.train_cfg.batch_size, "Mini-batch size")->capture_default_str();
  train->add_option("--dropout", o.train_cfg.dropout_p, "Dropout probability")->capture_default_str();
  train->add_option("--embedding", o.train_cfg.embedding_size, "Per-layer embedding size")->capture_default_str();
  train->add_option("--h1", o.train_cfg.h1, "First hidden width")->capture_default_str();
  train->add_option("--h2", o.train_cfg.h2, "Second hidden width")->capture_default_str();

  auto* eval = app.add_subcommand("eval-hwloss", "Relative error of a latency model on a test split");
  add_space(eval, o);
  add_budget(eval, o);
  eval->add_option("--model", o.in, "Model JSON")->required();
  eval->add_option("--test", o.test_path, "Test dataset JSONL")->required();
  eval->add_flag("--compare-lut", o.compare_lut, "Also evaluate the LUT built for --space/--budget");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of the model's gradients");
  add_space(grad, o);
  add_seed(grad, o);
  grad->add_option("--model", o.in, "Model JSON (default: a freshly initialized model)");
  grad->add_option("--samples", o.samples, "Random architecture matrices to check")->capture_default_str();
  grad->add_option("--eps", o.eps, "Central-difference step")->capture_default_str();

  auto add_search_options = [&](CLI::App* sub) {
    add_space(sub, o);
    o.hw_opts.add(sub);
    o.task_opts.add(sub);
    sub->add_option("--epochs", o.search_cfg.epochs, "Search epochs")->capture_default_str();
    sub->add_option("--lr-weights", o.search_cfg.lr_weights, "Weight learning rate")->capture_default_str();
    sub->add_option("--lr-arch", o.search_cfg.lr_arch, "Architecture learning rate")->capture_default_str();
    sub->add_option("--batch-size", o.search_cfg.batch_size, "Mini-batch size")->capture_default_str();
    sub->add_flag("--freeze-head", o.search_cfg.freeze_head, "Zero and freeze the head (constant task loss)");
  };

  auto* srch = app.add_subcommand("search", "Run one differentiable architecture search");
  add_search_options(srch);
  add_seed(srch, o);
  srch->add_option("--beta", o.search_cfg.beta, "Weight of the hardware term")->capture_default_str();
  srch->add_option("--final-epochs", o.search_cfg.final_epochs, "Retrain the result for this many epochs (0: skip)")
      ->capture_default_str();
  srch->add_option("--out", o.out, "Also write the result JSON here");

  auto* sweep = app.add_subcommand("sweep", "Search and retrain over a beta grid and seeds; prints CSV");
  add_search_options(sweep);
  sweep->add_option("--grid", o.grid, "Comma-separated beta values")->capture_default_str();
  sweep->add_option("--seeds", o.seeds, "Comma-separated seeds")->capture_default_str();
  sweep->add_option("--final-epochs", o.final_epochs, "Retraining epochs per cell")->capture_default_str();
  sweep->add_option("--out", o.out, "Also write the CSV here");

  auto* oracle = app.add_subcommand("oracle", "Exhaustive latency minimum over the space");
  add_space(oracle, o);
  add_budget(oracle, o);
  add_paradigm(oracle, o);

  auto* dot = app.add_subcommand("export-dot", "Render an architecture as a DOT graph");
  add_space(dot, o);
  dot->add_option("--arch", o.arch_text, "Architecture, e.g. 0,3,1,1,4,2")->required();
  dot->add_option("--out", o.out, "Also write the DOT text here");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = &app;
    for (const auto* sub : app.get_subcommands()) target = sub;
    out << target->help();
    return 0;
  } catch (const CLI::ParseError& e) {
    const CLI::App* target = &app;
    for (const auto* sub : app.get_subcommands()) target = sub;
    err << "error: " << e.what() << "\n\n" << target->help();
    return 1;
  }

  try {
    if (gen->parsed()) return cmd_gen_dataset(o, out);
    if (ingest->parsed()) return cmd_ingest(o, out);
    if (bench->parsed()) return cmd_bench(o, out);
    if (lut->parsed()) return cmd_build_lut(o, out);
    if (train->parsed()) return cmd_train_hwloss(o, out);
    if (eval->parsed()) return cmd_eval_hwloss(o, out);
    if (grad->parsed()) return cmd_gradcheck(o, out);
    if (srch->parsed()) return cmd_search(o, out);
    if (sweep->parsed()) return cmd_sweep(o, out);
    if (oracle->parsed()) return cmd_oracle(o, out);
    if (dot->parsed()) return cmd_export_dot(o, out);
  } catch (const Error& e) {
    err << (e.is_validation() ? "error: " : "internal error: ") << e.what() << '\n';
    return e.is_validation() ? 1 : 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 2;
  }
  err << app.help();
  return 1;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace ehdnas::cli
