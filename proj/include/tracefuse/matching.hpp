// Two-stage matching pipeline and its statistics.
#pragma once

#include <string>
#include <vector>

#include "tracefuse/burst.hpp"
#include "tracefuse/match_set.hpp"
#include "tracefuse/stage1.hpp"
#include "tracefuse/stage2.hpp"

namespace tracefuse {

struct MatchConfig {
  SimilarityWeights weights;
  MatchOptions options;
  bool run_stage2{true};
};

/// Stage 1, collective regions, structure grouping and stage 2. Groups are
/// ordered by rank, stage-1 groups first. `statistics` carries per-stage
/// matched fractions and the unmatched-pattern residuals.
MatchSet match_executions(const std::vector<ExecutionDataset>& executions, const MatchConfig& config = {});

struct RecoveryStats {
  std::size_t truth_groups{0};
  std::size_t recovered{0};         // truth groups reproduced exactly
  std::size_t recovered_stage1{0};  // ... by a direct or pattern group
  std::size_t recovered_stage2{0};  // ... by a structural group
  std::size_t spurious{0};          // emitted groups absent from the truth

  double rate() const { return truth_groups ? double(recovered) / double(truth_groups) : 1.0; }
  double stage1_rate() const { return truth_groups ? double(recovered_stage1) / double(truth_groups) : 1.0; }
};

RecoveryStats recovery_against(const MatchSet& matches, const std::vector<MatchGroup>& truth);

}  // namespace tracefuse
