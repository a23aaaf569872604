#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ehdnas/archspace.hpp"

namespace ehdnas::cli {

// Runs one subcommand. args excludes the program name. Returns 0 on success,
// 1 on validation errors and usage mistakes, 2 on internal failures.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

// Search space file:
// {"layers","hidden_width","input_dim","num_classes","deploy_multiplier",
//  "blocks":["full-dense","low-rank-4","identity","zero",...]}
arch::SearchSpaceSpec parse_space_json(std::string_view text);
arch::SearchSpaceSpec load_space(const std::string& path);

}  // namespace ehdnas::cli
