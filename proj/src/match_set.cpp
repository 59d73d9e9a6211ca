#include "tracefuse/match_set.hpp"

#include <stdexcept>

#include <fmt/format.h>

namespace tracefuse {

std::string_view to_string(MatchStage s) {
  switch (s) {
    case MatchStage::Direct: return "direct";
    case MatchStage::Pattern: return "pattern";
    case MatchStage::Structural: return "structural";
  }
  return "direct";
}

MatchStage match_stage_from(std::string_view s) {
  if (s == "direct") return MatchStage::Direct;
  if (s == "pattern") return MatchStage::Pattern;
  if (s == "structural") return MatchStage::Structural;
  throw std::invalid_argument(fmt::format("unknown match stage '{}'", s));
}

std::string Pattern::label() const { return upper(before) + "→" + upper(after); }

std::size_t MatchSet::unmatched_count(const std::string& exec_id) const {
  auto it = unmatched.find(exec_id);
  return it == unmatched.end() ? 0 : it->second.size();
}

nlohmann::ordered_json to_json(const MatchSet& set) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["executions"] = set.executions;
  auto groups = ordered_json::array();
  for (const auto& g : set.groups) {
    ordered_json jg;
    jg["burst_id"] = g.burst_id;
    jg["stage"] = to_string(g.stage);
    if (g.score) jg["score"] = *g.score;
    ordered_json members = ordered_json::object();
    for (const auto& exec : set.executions) {
      auto it = g.members.find(exec);
      if (it == g.members.end()) continue;
      members[exec] = {{"rank", it->second.rank}, {"seq_index", it->second.seq_index}};
    }
    jg["members"] = std::move(members);
    groups.push_back(std::move(jg));
  }
  doc["groups"] = std::move(groups);
  ordered_json unmatched = ordered_json::object();
  for (const auto& exec : set.executions) {
    auto list = ordered_json::array();
    if (auto it = set.unmatched.find(exec); it != set.unmatched.end())
      for (const auto& r : it->second) list.push_back({{"rank", r.rank}, {"seq_index", r.seq_index}});
    unmatched[exec] = std::move(list);
  }
  doc["unmatched"] = std::move(unmatched);
  if (!set.statistics.is_null()) doc["statistics"] = set.statistics;
  return doc;
}

MatchSet match_set_from_json(const nlohmann::ordered_json& doc) {
  MatchSet set;
  set.executions = doc.at("executions").get<std::vector<std::string>>();
  for (const auto& jg : doc.at("groups")) {
    MatchGroup g;
    g.burst_id = jg.at("burst_id").get<std::string>();
    g.stage = match_stage_from(jg.at("stage").get<std::string>());
    if (jg.contains("score")) g.score = jg.at("score").get<double>();
    bool first = true;
    for (const auto& [exec, m] : jg.at("members").items()) {
      BurstRef ref{m.at("rank").get<Rank>(), m.at("seq_index").get<int>()};
      if (first) g.rank = ref.rank;
      else if (ref.rank != g.rank)
        throw std::invalid_argument(fmt::format("group {} spans several ranks", g.burst_id));
      first = false;
      g.members.emplace(exec, ref);
    }
    if (g.members.size() < 2)
      throw std::invalid_argument(fmt::format("group {} has fewer than two members", g.burst_id));
    set.groups.push_back(std::move(g));
  }
  if (doc.contains("unmatched"))
    for (const auto& [exec, list] : doc.at("unmatched").items()) {
      auto& refs = set.unmatched[exec];
      for (const auto& m : list) refs.push_back({m.at("rank").get<Rank>(), m.at("seq_index").get<int>()});
    }
  if (doc.contains("statistics")) set.statistics = doc.at("statistics");
  return set;
}

std::string dump_match_set(const MatchSet& set) { return to_json(set).dump(1) + "\n"; }

}  // namespace tracefuse
