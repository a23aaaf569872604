#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ehdnas::arch {

// Parameters are stored as 16-bit fixed-point values on the accelerator.
inline constexpr std::uint64_t kBytesPerValue = 2;

enum class BlockKind { dense, low_rank, identity, zero };

std::string_view to_string(BlockKind kind);

// One selectable operation of a mixed layer. Cost fields describe the block
// at deployment width (see SearchSpaceSpec::deploy_width).
struct CandidateBlock {
  std::size_t id = 0;
  BlockKind kind = BlockKind::identity;
  std::optional<std::size_t> rank;  // search-width rank, low_rank only
  std::uint64_t macs_per_sample = 0;
  std::uint64_t weight_bytes = 0;
  std::uint64_t activation_bytes = 0;  // output activation of the block

  bool has_weights() const noexcept { return kind == BlockKind::dense || kind == BlockKind::low_rank; }
  std::string name() const;
};

// Declarative catalog entry used to build a space.
struct BlockDesc {
  BlockKind kind;
  std::size_t rank = 0;
};

// A layered chain search space: stem (d -> H), L mixed layers sharing one
// catalog of K blocks (H -> H), head (H -> C).
//
// The supernet is trained at `hidden_width`. Hardware costs are computed for
// the deployed network, whose widths and low-rank ranks are scaled by
// `deploy_multiplier` (multiplier 1 benchmarks the search-width network).
struct SearchSpaceSpec {
  std::size_t num_layers = 0;
  std::size_t hidden_width = 0;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::size_t deploy_multiplier = 1;
  std::vector<CandidateBlock> catalog;

  std::size_t num_candidates() const noexcept { return catalog.size(); }
  std::size_t deploy_width() const noexcept { return hidden_width * deploy_multiplier; }
  // K^L as a double; exact for every space that is enumerable.
  double cardinality() const;
};

SearchSpaceSpec make_space(std::size_t num_layers, std::size_t hidden_width, std::size_t input_dim,
                           std::size_t num_classes, std::size_t deploy_multiplier,
                           std::span<const BlockDesc> blocks);

// L=6, K=5 {full-dense, low-rank-4, low-rank-8, identity, zero}, H=32, d=16,
// C=4, deployed at 32x width.
SearchSpaceSpec default_space();

struct DiscreteArch {
  std::vector<std::size_t> ops;

  bool operator==(const DiscreteArch&) const = default;
  auto operator<=>(const DiscreteArch&) const = default;
};

// "0,3,1,1,4,2"
std::string to_string(const DiscreteArch& arch);
DiscreteArch parse_arch(std::string_view text);

// Throws InvalidArch when the arch does not fit the space.
void check_arch(const DiscreteArch& arch, const SearchSpaceSpec& space);

// Dense row-major real matrix.
class RealMatrix {
 public:
  RealMatrix() = default;
  RealMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  RealMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  RealMatrix transposed() const;
  bool operator==(const RealMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Relaxed architecture a: entry (k, l) is the weight of block k in layer l.
// Construction does not validate; see validate().
class ArchMatrix {
 public:
  ArchMatrix() = default;
  ArchMatrix(std::size_t num_candidates, std::size_t num_layers) : weights_(num_candidates, num_layers) {}
  explicit ArchMatrix(RealMatrix weights) : weights_(std::move(weights)) {}

  std::size_t num_candidates() const noexcept { return weights_.rows(); }
  std::size_t num_layers() const noexcept { return weights_.cols(); }
  double& operator()(std::size_t k, std::size_t l) { return weights_(k, l); }
  double operator()(std::size_t k, std::size_t l) const { return weights_(k, l); }
  const RealMatrix& weights() const noexcept { return weights_; }

  bool operator==(const ArchMatrix&) const = default;

 private:
  RealMatrix weights_;
};

ArchMatrix one_hot(const DiscreteArch& arch, const SearchSpaceSpec& space);
ArchMatrix one_hot(const DiscreteArch& arch, std::size_t num_candidates);

// Column-wise softmax of a K x L logit matrix.
ArchMatrix relax(const RealMatrix& logits);

// Column argmax, lowest index on ties.
DiscreteArch discretize(const ArchMatrix& m);

std::vector<DiscreteArch> sample_uniform(const SearchSpaceSpec& space, std::size_t n, std::uint64_t seed);

// First violated invariant ("range: ..." or "column sum: ..."), or nullopt.
std::optional<std::string> validate(const ArchMatrix& m);

// Calls `visit` on every architecture of the space in lexicographic order.
template <typename Visit>
void for_each_arch(const SearchSpaceSpec& space, Visit&& visit) {
  const std::size_t k = space.num_candidates();
  DiscreteArch arch{std::vector<std::size_t>(space.num_layers, 0)};
  while (true) {
    visit(static_cast<const DiscreteArch&>(arch));
    std::size_t pos = space.num_layers;
    while (pos > 0) {
      --pos;
      if (++arch.ops[pos] < k) break;
      arch.ops[pos] = 0;
      if (pos == 0) return;
    }
    if (space.num_layers == 0) return;
  }
}

}  // namespace ehdnas::arch
