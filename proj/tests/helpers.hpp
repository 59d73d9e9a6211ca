// Small builders shared by the unit and acceptance tests.
#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tracefuse/burst.hpp"

namespace tftest {

using namespace tracefuse;

inline CommContext ctx(const std::string& call, std::optional<Rank> partner = std::nullopt,
                       std::optional<std::int64_t> size = std::nullopt) {
  static const CallClassifier classifier;
  return {classifier.make(call), partner, size};
}

inline Burst burst(Rank rank, TimeNs begin, TimeNs end, const std::string& before, const std::string& after,
                   std::map<std::string, std::int64_t> counters = {}) {
  Burst b;
  b.task_id = rank;
  b.begin_time = begin;
  b.end_time = end;
  b.duration = end - begin;
  b.before = ctx(before);
  b.after = ctx(after);
  b.counters = std::move(counters);
  return b;
}

/// Consecutive bursts of one rank from a call sequence: the first burst
/// follows NONE, the last precedes NONE, each lasts `len` with `gap`
/// between them.
inline std::vector<Burst> chain(Rank rank, const std::vector<std::string>& calls, TimeNs len = 100,
                                TimeNs gap = 10, TimeNs start = 0) {
  std::vector<Burst> out;
  TimeNs t = start;
  for (std::size_t i = 0; i <= calls.size(); ++i) {
    const std::string before = i == 0 ? "NONE" : calls[i - 1];
    const std::string after = i == calls.size() ? "NONE" : calls[i];
    out.push_back(burst(rank, t, t + len, before, after));
    t += len + gap;
  }
  return out;
}

inline ExecutionDataset dataset(const std::string& id, std::map<Rank, std::vector<Burst>> ranks,
                                std::vector<std::string> counters = {}, const std::string& set = "SET") {
  ExecutionDataset ds;
  ds.exec_id = id;
  ds.counter_set_name = set;
  ds.ranks = std::move(ranks);
  ds.counter_names = std::move(counters);
  return compute_derived_features(ds);
}

}  // namespace tftest
