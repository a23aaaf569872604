#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ehdnas/errors.hpp"
#include "ehdnas/parallel.hpp"
#include "ehdnas/perfmodel.hpp"

namespace ehdnas::perf {

using nlohmann::json;

namespace {

constexpr const char* kDatasetFormat = "ehdnas-latds-v1";

LatencyDataset empty_split(const arch::SearchSpaceSpec& space, const HardwareBudget& budget, Paradigm paradigm,
                           Split split) {
  LatencyDataset ds;
  ds.num_candidates = space.num_candidates();
  ds.num_layers = space.num_layers;
  ds.paradigm = std::string(to_string(paradigm));
  ds.budget = budget.name;
  ds.split = split;
  ds.source = Source::generated;
  return ds;
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train:
      return "train";
    case Split::val:
      return "val";
    case Split::test:
      return "test";
  }
  return "train";
}

GeneratedDatasets gen_dataset(const arch::SearchSpaceSpec& space, const HardwareBudget& budget, Paradigm paradigm,
                              std::size_t n_train, std::size_t n_val, std::size_t n_test, std::uint64_t seed,
                              std::size_t threads) {
  if (n_train == 0 || n_val == 0 || n_test == 0) throw InvalidConfig("dataset split sizes must be >= 1");
  check_budget(budget);
  const std::size_t total = n_train + n_val + n_test;
  const auto archs = arch::sample_uniform(space, total, seed);

  std::vector<std::optional<double>> latency(total);
  parallel_for(total, threads, [&](std::size_t i) {
    const auto report = benchmark(archs[i], space, budget, paradigm);
    if (report.feasible) latency[i] = report.total_ms;
  });

  GeneratedDatasets out{empty_split(space, budget, paradigm, Split::train),
                        empty_split(space, budget, paradigm, Split::val),
                        empty_split(space, budget, paradigm, Split::test), 0};
  for (std::size_t i = 0; i < total; ++i) {
    if (!latency[i]) {
      ++out.rejected;
      continue;
    }
    auto& target = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    target.records.push_back({archs[i], *latency[i]});
  }
  if (out.rejected == total) {
    throw EmptyDataset("every sampled architecture exceeds budget '" + budget.name + "' under " +
                       std::string(to_string(paradigm)));
  }
  return out;
}

void write_dataset(const LatencyDataset& ds, std::ostream& out) {
  json header{{"format", kDatasetFormat},
              {"K", ds.num_candidates},
              {"L", ds.num_layers},
              {"paradigm", ds.paradigm},
              {"budget", ds.budget},
              {"split", to_string(ds.split)}};
  out << header.dump() << '\n';
  for (const auto& r : ds.records) {
    json row{{"ops", r.arch.ops}, {"latency_ms", r.latency_ms}};
    out << row.dump() << '\n';
  }
}

void write_dataset(const LatencyDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write dataset file " + path.string());
  write_dataset(ds, out);
}

LatencyDataset read_dataset(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  LatencyDataset ds;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
    if (!have_header) {
      try {
        if (row.at("format") != kDatasetFormat) {
          throw VersionMismatch("unsupported dataset format " + row.at("format").dump());
        }
        ds.num_candidates = row.at("K").get<std::size_t>();
        ds.num_layers = row.at("L").get<std::size_t>();
        ds.paradigm = row.at("paradigm").get<std::string>();
        ds.budget = row.value("budget", std::string());
        const auto split = row.value("split", std::string("train"));
        ds.split = split == "val" ? Split::val : (split == "test" ? Split::test : Split::train);
      } catch (const json::exception& e) {
        throw ParseError(std::string("bad header: ") + e.what(), line_no);
      }
      if (ds.num_candidates == 0 || ds.num_layers == 0) throw ParseError("header needs K >= 1 and L >= 1", line_no);
      if (ds.paradigm != "GP" && ds.paradigm != "PP" && ds.paradigm != "ingested") {
        throw ParseError("header paradigm must be GP, PP or ingested", line_no);
      }
      ds.source = ds.paradigm == "ingested" ? Source::ingested : Source::generated;
      have_header = true;
      continue;
    }
    LatencyRecord record;
    try {
      const auto& ops = row.at("ops");
      if (!ops.is_array()) throw ParseError("'ops' must be an array", line_no);
      for (const auto& op : ops) {
        if (!op.is_number_integer() || op.get<long long>() < 0) {
          throw ParseError("op indices must be non-negative integers", line_no);
        }
        record.arch.ops.push_back(op.get<std::size_t>());
      }
      const auto& lat = row.at("latency_ms");
      if (!lat.is_number()) throw ParseError("'latency_ms' must be a number", line_no);
      record.latency_ms = lat.get<double>();
    } catch (const json::exception& e) {
      throw ParseError(std::string("bad record: ") + e.what(), line_no);
    }
    if (record.arch.ops.size() != ds.num_layers) {
      throw ParseError("record has " + std::to_string(record.arch.ops.size()) + " ops, header says L=" +
                           std::to_string(ds.num_layers),
                       line_no);
    }
    for (auto op : record.arch.ops) {
      if (op >= ds.num_candidates) {
        throw ValidationError("line " + std::to_string(line_no) + ": op index " + std::to_string(op) +
                              " exceeds K=" + std::to_string(ds.num_candidates));
      }
    }
    if (!std::isfinite(record.latency_ms) || record.latency_ms <= 0.0) {
      throw ValidationError("line " + std::to_string(line_no) + ": latency must be positive");
    }
    ds.records.push_back(std::move(record));
  }
  if (!have_header) throw ParseError("dataset has no header line");
  return ds;
}

LatencyDataset ingest_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read dataset file " + path.string());
  auto ds = read_dataset(in);
  ds.source = Source::ingested;
  return ds;
}

}  // namespace ehdnas::perf
