#include "ehdnas/archspace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "ehdnas/errors.hpp"

namespace ehdnas::arch {

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::dense:
      return "full-dense";
    case BlockKind::low_rank:
      return "low-rank";
    case BlockKind::identity:
      return "identity";
    case BlockKind::zero:
      return "zero";
  }
  return "unknown";
}

std::string CandidateBlock::name() const {
  if (kind == BlockKind::low_rank) return "low-rank-" + std::to_string(rank.value_or(0));
  return std::string(to_string(kind));
}

double SearchSpaceSpec::cardinality() const {
  return std::pow(static_cast<double>(num_candidates()), static_cast<double>(num_layers));
}

namespace {

CandidateBlock make_block(std::size_t id, const BlockDesc& desc, std::size_t width, std::size_t multiplier) {
  CandidateBlock block;
  block.id = id;
  block.kind = desc.kind;
  const auto w = static_cast<std::uint64_t>(width);
  switch (desc.kind) {
    case BlockKind::dense:
      block.macs_per_sample = w * w;
      block.weight_bytes = w * w * kBytesPerValue;
      block.activation_bytes = w * kBytesPerValue;
      break;
    case BlockKind::low_rank: {
      if (desc.rank == 0) throw InvalidConfig("low-rank block needs a positive rank");
      block.rank = desc.rank;
      const auto r = static_cast<std::uint64_t>(desc.rank * multiplier);
      block.macs_per_sample = 2 * w * r;
      block.weight_bytes = 2 * w * r * kBytesPerValue;
      block.activation_bytes = w * kBytesPerValue;
      break;
    }
    case BlockKind::identity:
    case BlockKind::zero:
      break;
  }
  return block;
}

}  // namespace

SearchSpaceSpec make_space(std::size_t num_layers, std::size_t hidden_width, std::size_t input_dim,
                           std::size_t num_classes, std::size_t deploy_multiplier,
                           std::span<const BlockDesc> blocks) {
  if (num_layers == 0 || hidden_width == 0 || input_dim == 0 || num_classes == 0 || deploy_multiplier == 0) {
    throw InvalidConfig("search space dimensions must be positive");
  }
  if (blocks.empty()) throw InvalidConfig("search space catalog is empty");
  SearchSpaceSpec space;
  space.num_layers = num_layers;
  space.hidden_width = hidden_width;
  space.input_dim = input_dim;
  space.num_classes = num_classes;
  space.deploy_multiplier = deploy_multiplier;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    if (blocks[k].kind == BlockKind::low_rank && blocks[k].rank >= hidden_width) {
      throw InvalidConfig("low-rank rank must be below the hidden width");
    }
    space.catalog.push_back(make_block(k, blocks[k], space.deploy_width(), deploy_multiplier));
  }
  return space;
}

SearchSpaceSpec default_space() {
  static const BlockDesc blocks[] = {
      {BlockKind::dense, 0}, {BlockKind::low_rank, 4}, {BlockKind::low_rank, 8},
      {BlockKind::identity, 0}, {BlockKind::zero, 0},
  };
  return make_space(6, 32, 16, 4, 32, blocks);
}

std::string to_string(const DiscreteArch& arch) {
  std::string out;
  for (std::size_t i = 0; i < arch.ops.size(); ++i) {
    if (i > 0) out += ',';
    out += std::to_string(arch.ops[i]);
  }
  return out;
}

DiscreteArch parse_arch(std::string_view text) {
  DiscreteArch arch;
  if (text.empty()) throw ParseError("empty architecture string");
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find(',', start), text.size());
    const std::string_view token = text.substr(start, end - start);
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
    if (token.empty() || ec != std::errc() || ptr != token.data() + token.size()) {
      throw ParseError("bad op index '" + std::string(token) + "' in architecture '" + std::string(text) + "'");
    }
    arch.ops.push_back(value);
    start = end + 1;
  }
  return arch;
}

void check_arch(const DiscreteArch& arch, const SearchSpaceSpec& space) {
  if (arch.ops.size() != space.num_layers) {
    throw InvalidArch("architecture has " + std::to_string(arch.ops.size()) + " layers, space has " +
                      std::to_string(space.num_layers));
  }
  for (std::size_t l = 0; l < arch.ops.size(); ++l) {
    if (arch.ops[l] >= space.num_candidates()) {
      throw InvalidArch("op index " + std::to_string(arch.ops[l]) + " at layer " + std::to_string(l) +
                        " is out of range for K=" + std::to_string(space.num_candidates()));
    }
  }
}

RealMatrix::RealMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

RealMatrix::RealMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) throw ShapeMismatch("matrix value count does not match its shape");
}

RealMatrix RealMatrix::transposed() const {
  RealMatrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  }
  return out;
}

ArchMatrix one_hot(const DiscreteArch& arch, std::size_t num_candidates) {
  ArchMatrix m(num_candidates, arch.ops.size());
  for (std::size_t l = 0; l < arch.ops.size(); ++l) {
    if (arch.ops[l] >= num_candidates) {
      throw InvalidArch("op index " + std::to_string(arch.ops[l]) + " out of range for K=" +
                        std::to_string(num_candidates));
    }
    m(arch.ops[l], l) = 1.0;
  }
  return m;
}

ArchMatrix one_hot(const DiscreteArch& arch, const SearchSpaceSpec& space) {
  check_arch(arch, space);
  return one_hot(arch, space.num_candidates());
}

ArchMatrix relax(const RealMatrix& logits) {
  for (double v : logits.values()) {
    if (!std::isfinite(v)) throw NumericalError("relax: non-finite logit");
  }
  ArchMatrix m(logits.rows(), logits.cols());
  for (std::size_t l = 0; l < logits.cols(); ++l) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < logits.rows(); ++k) peak = std::max(peak, logits(k, l));
    double total = 0.0;
    for (std::size_t k = 0; k < logits.rows(); ++k) {
      m(k, l) = std::exp(logits(k, l) - peak);
      total += m(k, l);
    }
    for (std::size_t k = 0; k < logits.rows(); ++k) m(k, l) /= total;
  }
  return m;
}

DiscreteArch discretize(const ArchMatrix& m) {
  DiscreteArch arch{std::vector<std::size_t>(m.num_layers(), 0)};
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < m.num_candidates(); ++k) {
      if (m(k, l) > m(best, l)) best = k;
    }
    arch.ops[l] = best;
  }
  return arch;
}

std::vector<DiscreteArch> sample_uniform(const SearchSpaceSpec& space, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidConfig("sample_uniform needs n >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, space.num_candidates() - 1);
  std::vector<DiscreteArch> out(n);
  for (auto& arch : out) {
    arch.ops.resize(space.num_layers);
    for (auto& op : arch.ops) op = pick(rng);
  }
  return out;
}

std::optional<std::string> validate(const ArchMatrix& m) {
  constexpr double kSumTolerance = 1e-9;
  for (std::size_t l = 0; l < m.num_layers(); ++l) {
    double total = 0.0;
    for (std::size_t k = 0; k < m.num_candidates(); ++k) {
      const double v = m(k, l);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
        std::ostringstream msg;
        msg << "range: entry (" << k << ", " << l << ") = " << v << " is outside [0, 1]";
        return msg.str();
      }
      total += v;
    }
    if (std::abs(total - 1.0) > kSumTolerance) {
      std::ostringstream msg;
      msg << "column sum: layer " << l << " sums to " << total;
      return msg.str();
    }
  }
  return std::nullopt;
}

}  // namespace ehdnas::arch
