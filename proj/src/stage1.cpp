#include "tracefuse/stage1.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "tracefuse/parallel.hpp"

namespace tracefuse {

void check_comparable(const std::vector<ExecutionDataset>& executions) {
  if (executions.size() < 2) throw std::invalid_argument("matching needs at least two executions");
  std::set<std::string> ids;
  for (const auto& e : executions) {
    if (!ids.insert(e.exec_id).second)
      throw std::invalid_argument(fmt::format("duplicate exec_id '{}'", e.exec_id));
    if (e.burst_count() == 0) throw std::invalid_argument(fmt::format("execution '{}' is empty", e.exec_id));
  }
  const auto& ref = executions.front();
  for (const auto& e : executions) {
    bool same = e.ranks.size() == ref.ranks.size();
    for (auto a = e.ranks.begin(), b = ref.ranks.begin(); same && a != e.ranks.end(); ++a, ++b)
      same = a->first == b->first;
    if (!same)
      throw std::invalid_argument(fmt::format("rank count mismatch: '{}' has {} ranks, '{}' has {}",
                                              e.exec_id, e.ranks.size(), ref.exec_id, ref.ranks.size()));
  }
}

namespace {

struct RankOutcome {
  std::vector<MatchGroup> groups;
  std::vector<std::vector<BurstRef>> unmatched;  // per execution
};

RankOutcome match_rank(const std::vector<ExecutionDataset>& executions, Rank rank) {
  const auto n = executions.size();
  RankOutcome out;
  out.unmatched.resize(n);

  std::vector<const std::vector<Burst>*> seqs;
  std::vector<std::vector<std::string>> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    seqs.push_back(&executions[i].ranks.at(rank));
    for (const auto& b : *seqs.back()) labels[i].push_back(Pattern::of(b).label());
  }

  const bool direct = std::all_of(labels.begin(), labels.end(),
                                  [&](const auto& l) { return l == labels.front(); });
  if (direct) {
    for (std::size_t j = 0; j < labels.front().size(); ++j) {
      MatchGroup g;
      g.burst_id = fmt::format("r{}_d_{}", rank, j + 1);
      g.rank = rank;
      g.stage = MatchStage::Direct;
      for (std::size_t i = 0; i < n; ++i)
        g.members.emplace(executions[i].exec_id, BurstRef{rank, (*seqs[i])[j].seq_index});
      out.groups.push_back(std::move(g));
    }
    return out;
  }

  // Occurrence positions of every pattern, per execution, in temporal order.
  std::map<std::string, std::vector<std::vector<std::size_t>>> occurrences;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < labels[i].size(); ++k) {
      auto& per_exec = occurrences[labels[i][k]];
      per_exec.resize(n);
      per_exec[i].push_back(k);
    }

  std::vector<std::vector<bool>> matched(n);
  for (std::size_t i = 0; i < n; ++i) matched[i].assign(labels[i].size(), false);

  for (const auto& [label, per_exec] : occurrences) {
    const auto freq = per_exec.front().size();
    const bool kept = freq > 0 && std::all_of(per_exec.begin(), per_exec.end(),
                                              [&](const auto& v) { return v.size() == freq; });
    if (!kept) continue;
    for (std::size_t j = 0; j < freq; ++j) {
      MatchGroup g;
      g.burst_id = fmt::format("r{}_p_{}_{}", rank, label, j + 1);
      g.rank = rank;
      g.stage = MatchStage::Pattern;
      for (std::size_t i = 0; i < n; ++i) {
        const auto k = per_exec[i][j];
        matched[i][k] = true;
        g.members.emplace(executions[i].exec_id, BurstRef{rank, (*seqs[i])[k].seq_index});
      }
      out.groups.push_back(std::move(g));
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < matched[i].size(); ++k)
      if (!matched[i][k]) out.unmatched[i].push_back({rank, (*seqs[i])[k].seq_index});
  return out;
}

}  // namespace

Stage1Result stage1_match(const std::vector<ExecutionDataset>& executions, const MatchOptions& options) {
  check_comparable(executions);
  std::vector<Rank> ranks;
  for (const auto& [rank, bursts] : executions.front().ranks) ranks.push_back(rank);

  std::vector<RankOutcome> outcomes(ranks.size());
  parallel_for(ranks.size(), options.threads,
               [&](std::size_t i) { outcomes[i] = match_rank(executions, ranks[i]); });

  Stage1Result result;
  for (const auto& e : executions) result.unmatched[e.exec_id];
  for (auto& o : outcomes) {
    for (auto& g : o.groups) result.groups.push_back(std::move(g));
    for (std::size_t i = 0; i < executions.size(); ++i) {
      auto& dst = result.unmatched[executions[i].exec_id];
      dst.insert(dst.end(), o.unmatched[i].begin(), o.unmatched[i].end());
    }
  }
  return result;
}

}  // namespace tracefuse
