#include <doctest.h>

#include "helpers.hpp"
#include "tracefuse/matching.hpp"

using namespace tftest;

namespace {

std::vector<ExecutionDataset> two_runs_one_extra() {
  // run2 has one extra MPI_Send burst; stage 1 cannot match rank 0 directly.
  auto r0a = chain(0, {"MPI_Send", "MPI_Allreduce", "MPI_Send"});
  auto r0b = chain(0, {"MPI_Send", "MPI_Send", "MPI_Allreduce", "MPI_Send"});
  auto r1 = chain(1, {"MPI_Recv", "MPI_Allreduce"});
  return {dataset("run1", {{0, r0a}, {1, r1}}), dataset("run2", {{0, r0b}, {1, r1}})};
}

}  // namespace

TEST_CASE("the pipeline keeps stage 1 groups first within a rank") {
  const auto set = match_executions(two_runs_one_extra());
  REQUIRE_FALSE(set.groups.empty());
  for (std::size_t i = 1; i < set.groups.size(); ++i) {
    const auto& a = set.groups[i - 1];
    const auto& b = set.groups[i];
    CHECK(a.rank <= b.rank);
    if (a.rank == b.rank && a.stage == MatchStage::Structural) CHECK(b.stage == MatchStage::Structural);
  }
  CHECK(set.executions == std::vector<std::string>{"run1", "run2"});
}

TEST_CASE("every burst is matched at most once and the rest is listed unmatched") {
  const auto execs = two_runs_one_extra();
  const auto set = match_executions(execs);
  for (const auto& e : execs) {
    std::set<BurstRef> seen;
    for (const auto& g : set.groups)
      if (auto it = g.members.find(e.exec_id); it != g.members.end()) CHECK(seen.insert(it->second).second);
    for (const auto& r : set.unmatched.at(e.exec_id)) CHECK(seen.insert(r).second);
    CHECK(seen.size() == e.burst_count());
  }
}

TEST_CASE("statistics report per-stage fractions and residual patterns") {
  const auto execs = two_runs_one_extra();
  const auto set = match_executions(execs);
  const auto& st = set.statistics;
  CHECK(st["total_bursts"]["run1"] == 7);
  CHECK(st["total_bursts"]["run2"] == 8);
  const auto s1 = st["stage1"]["matched_bursts"].get<std::size_t>();
  const auto s2 = st["stage2"]["matched_bursts"].get<std::size_t>();
  CHECK(st["matched_fraction"].get<double>() == doctest::Approx(double(s1 + s2) / 15.0));
  // Rank 1 is identical, so at least its three bursts match in both runs.
  CHECK(s1 >= 6);
  CHECK(s1 + s2 < 15);  // run2 rank 0 has one burst with no counterpart
  std::size_t residual = 0;
  for (const auto& p : st["unmatched_patterns"]) residual += p["count"].get<std::size_t>();
  CHECK(residual == 15 - s1 - s2);
  CHECK(st["region_count_mismatches"].empty());
}

TEST_CASE("stage 2 can be switched off") {
  MatchConfig cfg;
  cfg.run_stage2 = false;
  const auto set = match_executions(two_runs_one_extra(), cfg);
  for (const auto& g : set.groups) CHECK(g.stage != MatchStage::Structural);
  CHECK(set.statistics["stage2"]["groups"] == 0);
}

TEST_CASE("region count disagreements are reported") {
  auto a = chain(0, {"MPI_Allreduce", "MPI_Send"});
  auto b = chain(0, {"MPI_Allreduce", "MPI_Barrier", "MPI_Send"});
  const auto set = match_executions({dataset("run1", {{0, a}}), dataset("run2", {{0, b}})});
  const auto& mm = set.statistics["region_count_mismatches"];
  REQUIRE(mm.size() == 1);
  CHECK(mm[0]["rank"] == 0);
  CHECK(mm[0]["region_counts"]["run1"].get<int>() != mm[0]["region_counts"]["run2"].get<int>());
}

TEST_CASE("recovery compares member maps exactly") {
  MatchSet set;
  set.executions = {"a", "b"};
  auto g = [](Rank r, MatchStage s, int ia, int ib) {
    MatchGroup m;
    m.rank = r;
    m.stage = s;
    m.members = {{"a", {r, ia}}, {"b", {r, ib}}};
    return m;
  };
  set.groups = {g(0, MatchStage::Direct, 0, 0), g(0, MatchStage::Structural, 1, 2), g(0, MatchStage::Pattern, 2, 1)};
  const std::vector<MatchGroup> truth{g(0, MatchStage::Direct, 0, 0), g(0, MatchStage::Direct, 1, 2),
                                      g(0, MatchStage::Direct, 2, 3)};
  const auto st = recovery_against(set, truth);
  CHECK(st.truth_groups == 3);
  CHECK(st.recovered == 2);
  CHECK(st.recovered_stage1 == 1);
  CHECK(st.recovered_stage2 == 1);
  CHECK(st.spurious == 1);
  CHECK(st.rate() == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("an empty truth counts as fully recovered") {
  const auto st = recovery_against(MatchSet{}, {});
  CHECK(st.truth_groups == 0);
  CHECK(st.rate() == 1.0);
}

TEST_CASE("match sets survive a JSON round trip") {
  auto set = match_executions(two_runs_one_extra());
  const auto text = dump_match_set(set);
  const auto back = match_set_from_json(nlohmann::ordered_json::parse(text));
  CHECK(back.executions == set.executions);
  CHECK(back.groups == set.groups);
  CHECK(back.unmatched == set.unmatched);
  CHECK(dump_match_set(back) == text);
}
