// Structural matching of the bursts stage 1 left behind: collective regions,
// (pattern, region) grouping and weighted-similarity greedy assignment.
#pragma once

#include <compare>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tracefuse/burst.hpp"
#include "tracefuse/match_set.hpp"
#include "tracefuse/stage1.hpp"

namespace tracefuse {

struct SimilarityWeights {
  double temporal{0.6};
  double size{0.2};
  double partner{0.2};
  double threshold{0.3};

  /// Throws std::invalid_argument unless all values lie in [0,1] and the
  /// three weights sum to 1.
  void validate() const;
};

struct StructureKey {
  Pattern pattern;
  int region_id{0};

  std::string label() const;
  auto operator<=>(const StructureKey&) const = default;
  bool operator==(const StructureKey&) const = default;
};

using RegionMap = std::map<Rank, std::vector<CollectiveRegion>>;

struct RegionedExecution {
  ExecutionDataset dataset;  // region_id set on every burst
  RegionMap regions;
};

/// Region boundaries are the exits of collective calls, i.e. the begin times
/// of bursts whose preceding call is collective. A burst's region is the
/// number of boundaries at or before its begin time.
RegionedExecution define_regions(const ExecutionDataset& dataset);

/// Per execution, the bursts sharing one structure key (sorted by begin time).
using StructureGroup = std::map<std::string, std::vector<BurstRef>>;
using StructureGroups = std::map<Rank, std::map<StructureKey, StructureGroup>>;

StructureGroups group_unmatched(const std::vector<RegionedExecution>& executions,
                                const std::map<std::string, std::vector<BurstRef>>& unmatched);

double temporal_distance(const Burst& ref, const Burst& cand, const CollectiveRegion& ref_region,
                         const CollectiveRegion& cand_region);
double size_distance(const Burst& ref, const Burst& cand);
double partner_distance(const Burst& ref, const Burst& cand);

struct Distances {
  double temporal{0};
  double size{0};
  double partner{0};
};

double combine(const Distances& d, const SimilarityWeights& w);
double similarity_score(const Burst& ref, const Burst& cand, const CollectiveRegion& ref_region,
                        const CollectiveRegion& cand_region, const SimilarityWeights& weights);

/// References in order each take the unused candidate with minimal score
/// (earliest on ties), accepted only when the score is below `threshold`.
std::vector<std::optional<std::size_t>> greedy_assign(
    std::size_t refs, std::size_t cands, const std::function<double(std::size_t, std::size_t)>& score,
    double threshold);

struct Stage2Result {
  std::vector<MatchGroup> groups;
  std::map<std::string, std::vector<BurstRef>> unmatched;
};

Stage2Result stage2_match(const std::vector<RegionedExecution>& executions, const StructureGroups& groups,
                          const std::map<std::string, std::vector<BurstRef>>& unmatched,
                          const SimilarityWeights& weights, const MatchOptions& options = {});

}  // namespace tracefuse
