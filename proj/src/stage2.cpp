#include "tracefuse/stage2.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "tracefuse/parallel.hpp"

namespace tracefuse {

void SimilarityWeights::validate() const {
  for (double v : {temporal, size, partner, threshold})
    if (!(v >= 0.0 && v <= 1.0))
      throw std::invalid_argument(fmt::format("similarity parameter {} outside [0,1]", v));
  if (std::abs(temporal + size + partner - 1.0) > 1e-9)
    throw std::invalid_argument(
        fmt::format("similarity weights {},{},{} do not sum to 1", temporal, size, partner));
}

std::string StructureKey::label() const { return fmt::format("{}@{}", pattern.label(), region_id); }

RegionedExecution define_regions(const ExecutionDataset& dataset) {
  RegionedExecution out{dataset, {}};
  for (auto& [rank, bursts] : out.dataset.ranks) {
    auto& regions = out.regions[rank];
    if (bursts.empty()) continue;
    std::vector<TimeNs> bounds;
    for (const auto& b : bursts)
      if (b.before.call.cls == CallClass::Collective) bounds.push_back(b.begin_time);
    TimeNs start = bursts.front().begin_time;
    const TimeNs end = bursts.back().end_time;
    for (std::size_t i = 0; i <= bounds.size(); ++i) {
      const TimeNs stop = i < bounds.size() ? bounds[i] : end;
      regions.push_back({start, stop, static_cast<int>(i)});
      start = stop;
    }
    for (auto& b : bursts) {
      const auto n = std::upper_bound(bounds.begin(), bounds.end(), b.begin_time) - bounds.begin();
      b.region_id = static_cast<int>(n);
    }
  }
  return out;
}

StructureGroups group_unmatched(const std::vector<RegionedExecution>& executions,
                                const std::map<std::string, std::vector<BurstRef>>& unmatched) {
  StructureGroups groups;
  for (const auto& ex : executions) {
    auto it = unmatched.find(ex.dataset.exec_id);
    if (it == unmatched.end()) continue;
    for (const auto& ref : it->second) {
      const auto& b = ex.dataset.at(ref.rank, ref.seq_index);
      if (!b.region_id) throw std::invalid_argument("group_unmatched needs region-annotated bursts");
      groups[ref.rank][StructureKey{Pattern::of(b), *b.region_id}][ex.dataset.exec_id].push_back(ref);
    }
  }
  for (auto& [rank, keyed] : groups) {
    std::erase_if(keyed, [](const auto& kv) { return kv.second.size() < 2; });
    for (auto& [key, per_exec] : keyed) {
      for (auto& [exec, refs] : per_exec) {
        const auto& ds = std::find_if(executions.begin(), executions.end(), [&](const auto& e) {
                           return e.dataset.exec_id == exec;
                         })->dataset;
        std::stable_sort(refs.begin(), refs.end(), [&](const BurstRef& a, const BurstRef& b) {
          return ds.at(a.rank, a.seq_index).begin_time < ds.at(b.rank, b.seq_index).begin_time;
        });
      }
    }
  }
  std::erase_if(groups, [](const auto& kv) { return kv.second.empty(); });
  return groups;
}

namespace {

double relative_position(const Burst& b, const CollectiveRegion& region) {
  const auto span = region.t_end - region.t_start;
  if (span <= 0) return 0.0;
  const double mid = 0.5 * (static_cast<double>(b.begin_time) + static_cast<double>(b.end_time));
  const double pos = (mid - static_cast<double>(region.t_start)) / static_cast<double>(span);
  return std::clamp(pos, 0.0, 1.0);
}

std::optional<double> size_component(const std::optional<std::int64_t>& a,
                                     const std::optional<std::int64_t>& b) {
  if (!a || !b) return std::nullopt;
  const double denom = static_cast<double>(std::max<std::int64_t>({*a, *b, 1}));
  return std::abs(static_cast<double>(*a) - static_cast<double>(*b)) / denom;
}

double partner_component(const std::optional<Rank>& a, const std::optional<Rank>& b) {
  return a && b && *a != *b ? 1.0 : 0.0;
}

}  // namespace

double temporal_distance(const Burst& ref, const Burst& cand, const CollectiveRegion& ref_region,
                         const CollectiveRegion& cand_region) {
  return std::abs(relative_position(ref, ref_region) - relative_position(cand, cand_region));
}

double size_distance(const Burst& ref, const Burst& cand) {
  double sum = 0.0;
  int defined = 0;
  for (const auto& c : {size_component(ref.before.size, cand.before.size),
                        size_component(ref.after.size, cand.after.size)}) {
    if (c) {
      sum += *c;
      ++defined;
    }
  }
  return defined ? sum / defined : 0.0;
}

double partner_distance(const Burst& ref, const Burst& cand) {
  return 0.5 * (partner_component(ref.before.partner, cand.before.partner) +
                partner_component(ref.after.partner, cand.after.partner));
}

double combine(const Distances& d, const SimilarityWeights& w) {
  return w.temporal * d.temporal + w.size * d.size + w.partner * d.partner;
}

double similarity_score(const Burst& ref, const Burst& cand, const CollectiveRegion& ref_region,
                        const CollectiveRegion& cand_region, const SimilarityWeights& weights) {
  return combine({temporal_distance(ref, cand, ref_region, cand_region), size_distance(ref, cand),
                  partner_distance(ref, cand)},
                 weights);
}

std::vector<std::optional<std::size_t>> greedy_assign(
    std::size_t refs, std::size_t cands, const std::function<double(std::size_t, std::size_t)>& score,
    double threshold) {
  std::vector<std::optional<std::size_t>> out(refs);
  std::vector<bool> used(cands, false);
  for (std::size_t r = 0; r < refs; ++r) {
    std::optional<std::size_t> best;
    double best_s = 0.0;
    for (std::size_t c = 0; c < cands; ++c) {
      if (used[c]) continue;
      const double s = score(r, c);
      if (!best || s < best_s) {
        best = c;
        best_s = s;
      }
    }
    if (best && best_s < threshold) {
      used[*best] = true;
      out[r] = best;
    }
  }
  return out;
}

namespace {

struct RankOutcome {
  std::vector<MatchGroup> groups;
  std::set<std::pair<std::string, BurstRef>> matched;
};

const CollectiveRegion& region_of(const RegionedExecution& ex, const Burst& b) {
  const auto& list = ex.regions.at(b.task_id);
  return list.at(static_cast<std::size_t>(*b.region_id));
}

RankOutcome match_rank(const std::vector<RegionedExecution>& executions,
                       const std::map<StructureKey, StructureGroup>& keyed, Rank rank,
                       const SimilarityWeights& weights) {
  std::map<std::string, const RegionedExecution*> by_id;
  for (const auto& ex : executions) by_id.emplace(ex.dataset.exec_id, &ex);

  RankOutcome out;
  for (const auto& [key, per_exec] : keyed) {
    // Reference: most members, then the smallest exec_id (map order).
    const std::string* ref_exec = nullptr;
    for (const auto& [exec, refs] : per_exec)
      if (!ref_exec || refs.size() > per_exec.at(*ref_exec).size()) ref_exec = &exec;
    const auto& ref_ex = *by_id.at(*ref_exec);
    const auto& ref_list = per_exec.at(*ref_exec);

    std::vector<MatchGroup> tuples(ref_list.size());
    std::vector<double> worst(ref_list.size(), 0.0);
    for (std::size_t i = 0; i < ref_list.size(); ++i)
      tuples[i].members.emplace(*ref_exec, ref_list[i]);

    for (const auto& ex : executions) {
      const auto& exec = ex.dataset.exec_id;
      if (exec == *ref_exec) continue;
      auto it = per_exec.find(exec);
      if (it == per_exec.end()) continue;
      const auto& cand_list = it->second;
      auto score = [&](std::size_t r, std::size_t c) {
        const auto& rb = ref_ex.dataset.at(ref_list[r].rank, ref_list[r].seq_index);
        const auto& cb = ex.dataset.at(cand_list[c].rank, cand_list[c].seq_index);
        return similarity_score(rb, cb, region_of(ref_ex, rb), region_of(ex, cb), weights);
      };
      const auto pick = greedy_assign(ref_list.size(), cand_list.size(), score, weights.threshold);
      for (std::size_t r = 0; r < pick.size(); ++r) {
        if (!pick[r]) continue;
        tuples[r].members.emplace(exec, cand_list[*pick[r]]);
        worst[r] = std::max(worst[r], score(r, *pick[r]));
      }
    }

    int j = 0;
    for (std::size_t r = 0; r < tuples.size(); ++r) {
      auto& g = tuples[r];
      if (g.members.size() < 2) continue;
      g.burst_id = fmt::format("r{}_s_{}_{}", rank, key.label(), ++j);
      g.rank = rank;
      g.stage = MatchStage::Structural;
      g.score = worst[r];
      for (const auto& [exec, ref] : g.members) out.matched.emplace(exec, ref);
      out.groups.push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace

Stage2Result stage2_match(const std::vector<RegionedExecution>& executions, const StructureGroups& groups,
                          const std::map<std::string, std::vector<BurstRef>>& unmatched,
                          const SimilarityWeights& weights, const MatchOptions& options) {
  weights.validate();
  std::vector<Rank> ranks;
  for (const auto& [rank, keyed] : groups) ranks.push_back(rank);
  std::vector<RankOutcome> outcomes(ranks.size());
  parallel_for(ranks.size(), options.threads, [&](std::size_t i) {
    outcomes[i] = match_rank(executions, groups.at(ranks[i]), ranks[i], weights);
  });

  Stage2Result result;
  std::set<std::pair<std::string, BurstRef>> matched;
  for (auto& o : outcomes) {
    for (auto& g : o.groups) result.groups.push_back(std::move(g));
    matched.merge(o.matched);
  }
  for (const auto& [exec, refs] : unmatched) {
    auto& dst = result.unmatched[exec];
    for (const auto& r : refs)
      if (!matched.contains({exec, r})) dst.push_back(r);
  }
  return result;
}

}  // namespace tracefuse
