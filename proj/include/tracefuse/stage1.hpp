// Primary matching: positional ("direct") when a rank's MPI structure is the
// same in every execution, otherwise by equal-frequency (before, after)
// patterns.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "tracefuse/burst.hpp"
#include "tracefuse/match_set.hpp"

namespace tracefuse {

struct MatchOptions {
  unsigned threads{1};
};

struct Stage1Result {
  std::vector<MatchGroup> groups;
  std::map<std::string, std::vector<BurstRef>> unmatched;  // sorted by (rank, seq)
};

/// Throws std::invalid_argument for fewer than two executions, an empty
/// execution, or executions whose rank sets differ.
Stage1Result stage1_match(const std::vector<ExecutionDataset>& executions,
                          const MatchOptions& options = {});

/// Shared precondition check used by both matching stages.
void check_comparable(const std::vector<ExecutionDataset>& executions);

}  // namespace tracefuse
