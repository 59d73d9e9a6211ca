#include "tracefuse/matching.hpp"

#include <algorithm>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace tracefuse {

namespace {

std::size_t member_count(const std::vector<MatchGroup>& groups) {
  std::size_t n = 0;
  for (const auto& g : groups) n += g.members.size();
  return n;
}

double fraction(std::size_t part, std::size_t whole) {
  return whole ? static_cast<double>(part) / static_cast<double>(whole) : 0.0;
}

nlohmann::ordered_json region_mismatches(const std::vector<RegionedExecution>& regioned) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& [rank, regions] : regioned.front().regions) {
    bool differs = false;
    for (const auto& ex : regioned) differs |= ex.regions.at(rank).size() != regions.size();
    if (!differs) continue;
    nlohmann::ordered_json counts;
    std::string text;
    for (const auto& ex : regioned) {
      counts[ex.dataset.exec_id] = ex.regions.at(rank).size();
      text += fmt::format(" {}={}", ex.dataset.exec_id, ex.regions.at(rank).size());
    }
    spdlog::warn("rank {}: executions disagree on collective region count:{}", rank, text);
    out.push_back({{"rank", rank}, {"region_counts", counts}});
  }
  return out;
}

}  // namespace

MatchSet match_executions(const std::vector<ExecutionDataset>& executions, const MatchConfig& config) {
  config.weights.validate();
  auto s1 = stage1_match(executions, config.options);

  MatchSet set;
  for (const auto& e : executions) set.executions.push_back(e.exec_id);
  set.groups = std::move(s1.groups);
  const auto stage1_members = member_count(set.groups);
  std::size_t direct = 0;
  for (const auto& g : set.groups) direct += g.stage == MatchStage::Direct;
  const auto stage1_groups = set.groups.size();

  nlohmann::ordered_json mismatches = nlohmann::ordered_json::array();
  std::size_t stage2_members = 0;
  std::size_t stage2_groups = 0;
  if (config.run_stage2) {
    std::vector<RegionedExecution> regioned;
    regioned.reserve(executions.size());
    for (const auto& e : executions) regioned.push_back(define_regions(e));
    mismatches = region_mismatches(regioned);
    const auto grouped = group_unmatched(regioned, s1.unmatched);
    auto s2 = stage2_match(regioned, grouped, s1.unmatched, config.weights, config.options);
    stage2_members = member_count(s2.groups);
    stage2_groups = s2.groups.size();
    for (auto& g : s2.groups) set.groups.push_back(std::move(g));
    set.unmatched = std::move(s2.unmatched);
  } else {
    set.unmatched = std::move(s1.unmatched);
  }
  std::stable_sort(set.groups.begin(), set.groups.end(),
                   [](const MatchGroup& a, const MatchGroup& b) { return a.rank < b.rank; });

  std::size_t total = 0;
  nlohmann::ordered_json totals, unmatched_rate;
  for (const auto& e : executions) {
    total += e.burst_count();
    totals[e.exec_id] = e.burst_count();
    unmatched_rate[e.exec_id] = fraction(set.unmatched_count(e.exec_id), e.burst_count());
  }
  std::map<std::string, std::size_t> residual;
  for (const auto& e : executions)
    for (const auto& ref : set.unmatched[e.exec_id])
      ++residual[Pattern::of(e.at(ref.rank, ref.seq_index)).label()];
  std::vector<std::pair<std::string, std::size_t>> ranked(residual.begin(), residual.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  auto patterns = nlohmann::ordered_json::array();
  for (const auto& [label, count] : ranked) patterns.push_back({{"pattern", label}, {"count", count}});

  auto& st = set.statistics;
  st["total_bursts"] = totals;
  st["stage1"] = {{"direct_groups", direct},
                  {"pattern_groups", stage1_groups - direct},
                  {"matched_bursts", stage1_members},
                  {"matched_fraction", fraction(stage1_members, total)}};
  st["stage2"] = {{"groups", stage2_groups},
                  {"matched_bursts", stage2_members},
                  {"matched_fraction", fraction(stage2_members, total)}};
  st["matched_fraction"] = fraction(stage1_members + stage2_members, total);
  st["unmatched_rate"] = unmatched_rate;
  st["unmatched_patterns"] = patterns;
  st["region_count_mismatches"] = mismatches;
  return set;
}

RecoveryStats recovery_against(const MatchSet& matches, const std::vector<MatchGroup>& truth) {
  RecoveryStats st;
  std::map<std::map<std::string, BurstRef>, MatchStage> emitted;
  for (const auto& g : matches.groups) emitted.emplace(g.members, g.stage);
  std::set<std::map<std::string, BurstRef>> expected;
  for (const auto& t : truth) {
    if (t.members.size() < 2) continue;
    ++st.truth_groups;
    expected.insert(t.members);
    auto it = emitted.find(t.members);
    if (it == emitted.end()) continue;
    ++st.recovered;
    if (it->second == MatchStage::Structural) ++st.recovered_stage2;
    else ++st.recovered_stage1;
  }
  for (const auto& [members, stage] : emitted) st.spurious += !expected.contains(members);
  return st;
}

}  // namespace tracefuse
