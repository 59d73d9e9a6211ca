#include <doctest.h>

#include <set>

#include "helpers.hpp"
#include "tracefuse/stage1.hpp"

using namespace tracefuse;
using namespace tftest;

namespace {

// Every burst of every execution sits in exactly one group or once in unmatched.
void check_partition(const std::vector<ExecutionDataset>& execs, const Stage1Result& r) {
  for (const auto& e : execs) {
    std::multiset<BurstRef> seen;
    for (const auto& g : r.groups)
      if (auto it = g.members.find(e.exec_id); it != g.members.end()) seen.insert(it->second);
    if (auto it = r.unmatched.find(e.exec_id); it != r.unmatched.end()) seen.insert(it->second.begin(), it->second.end());
    std::multiset<BurstRef> all;
    for (const auto& [rank, bursts] : e.ranks)
      for (const auto& b : bursts) all.insert({rank, b.seq_index});
    CHECK(seen == all);
  }
}

std::vector<std::string> repeat_calls(const std::vector<std::string>& unit, int times) {
  std::vector<std::string> out;
  for (int i = 0; i < times; ++i) out.insert(out.end(), unit.begin(), unit.end());
  return out;
}

}  // namespace

TEST_CASE("identical structures match directly") {
  const std::vector<std::string> calls{"MPI_Send", "MPI_Recv"};
  const std::vector<ExecutionDataset> execs{dataset("run1", {{0, chain(0, calls)}}),
                                            dataset("run2", {{0, chain(0, calls, 70, 30)}})};
  const auto r = stage1_match(execs);
  REQUIRE(r.groups.size() == 3);
  for (int j = 0; j < 3; ++j) {
    CHECK(r.groups[j].burst_id == "r0_d_" + std::to_string(j + 1));
    CHECK(r.groups[j].stage == MatchStage::Direct);
    CHECK(r.groups[j].members.at("run1") == BurstRef{0, j});
    CHECK(r.groups[j].members.at("run2") == BurstRef{0, j});
  }
  check_partition(execs, r);
}

TEST_CASE("a pattern with equal frequency everywhere matches in temporal order") {
  // 15 ALLREDUCE->BCAST bursts in both runs; run2 has extra sends in between.
  auto calls1 = repeat_calls({"MPI_Allreduce", "MPI_Bcast"}, 15);
  std::vector<std::string> calls2;
  for (int i = 0; i < 15; ++i) {
    calls2.insert(calls2.end(), {"MPI_Allreduce", "MPI_Bcast"});
    if (i % 4 == 0) calls2.push_back("MPI_Send");
  }
  const std::vector<ExecutionDataset> execs{dataset("run1", {{0, chain(0, calls1)}}),
                                            dataset("run2", {{0, chain(0, calls2)}})};
  const auto r = stage1_match(execs);
  std::vector<const MatchGroup*> ab;
  for (const auto& g : r.groups)
    if (g.burst_id.starts_with("r0_p_MPI_ALLREDUCE→MPI_BCAST_")) ab.push_back(&g);
  REQUIRE(ab.size() == 15);
  TimeNs last1 = -1;
  TimeNs last2 = -1;
  for (std::size_t j = 0; j < ab.size(); ++j) {
    CHECK(ab[j]->burst_id == "r0_p_MPI_ALLREDUCE→MPI_BCAST_" + std::to_string(j + 1));
    CHECK(ab[j]->stage == MatchStage::Pattern);
    const auto& b1 = execs[0].at(0, ab[j]->members.at("run1").seq_index);
    const auto& b2 = execs[1].at(0, ab[j]->members.at("run2").seq_index);
    CHECK(Pattern::of(b1) == Pattern::of(b2));
    CHECK(b1.begin_time > last1);
    CHECK(b2.begin_time > last2);
    last1 = b1.begin_time;
    last2 = b2.begin_time;
  }
  check_partition(execs, r);
}

TEST_CASE("unequal frequencies leave every occurrence unmatched") {
  // SEND->RECV occurs 3 times in run1 and 4 times in run2.
  const std::vector<ExecutionDataset> execs{
      dataset("run1", {{0, chain(0, {"MPI_Send", "MPI_Recv", "MPI_Send", "MPI_Recv", "MPI_Send", "MPI_Recv"})}}),
      dataset("run2", {{0, chain(0, {"MPI_Send", "MPI_Recv", "MPI_Send", "MPI_Recv", "MPI_Send", "MPI_Recv",
                                     "MPI_Send", "MPI_Recv"})}})};
  const auto r = stage1_match(execs);
  std::size_t unmatched_sr = 0;
  for (const auto& [exec, refs] : r.unmatched)
    for (const auto& ref : refs) {
      const auto& ds = exec == "run1" ? execs[0] : execs[1];
      if (Pattern::of(ds.at(ref.rank, ref.seq_index)).label() == "MPI_SEND→MPI_RECV") ++unmatched_sr;
    }
  CHECK(unmatched_sr == 7);
  for (const auto& g : r.groups) CHECK(g.burst_id.find("MPI_SEND→MPI_RECV") == std::string::npos);
  check_partition(execs, r);
}

TEST_CASE("three identical copies match fully and directly") {
  const auto d = dataset("run1", {{0, chain(0, {"MPI_Send", "MPI_Bcast"})}, {1, chain(1, {"MPI_Recv", "MPI_Bcast"})}});
  auto d2 = d;
  d2.exec_id = "run2";
  auto d3 = d;
  d3.exec_id = "run3";
  const auto r = stage1_match({d, d2, d3});
  CHECK(r.groups.size() == 6);
  for (const auto& g : r.groups) {
    CHECK(g.stage == MatchStage::Direct);
    CHECK(g.members.size() == 3);
  }
  for (const auto& [e, refs] : r.unmatched) CHECK(refs.empty());
}

TEST_CASE("modes are chosen per rank") {
  const std::vector<ExecutionDataset> execs{
      dataset("run1", {{0, chain(0, {"MPI_Send"})}, {1, chain(1, {"MPI_Send", "MPI_Recv"})}}),
      dataset("run2", {{0, chain(0, {"MPI_Send"})}, {1, chain(1, {"MPI_Recv", "MPI_Send"})}})};
  const auto r = stage1_match(execs);
  std::set<std::string> ids;
  for (const auto& g : r.groups) ids.insert(g.burst_id);
  CHECK(ids.contains("r0_d_1"));
  CHECK(ids.contains("r0_d_2"));
  for (const auto& id : ids) CHECK((id.starts_with("r0_d_") || id.starts_with("r1_p_")));
}

TEST_CASE("stage 1 preconditions") {
  const auto a = dataset("run1", {{0, chain(0, {"MPI_Send"})}});
  const auto b = dataset("run2", {{0, chain(0, {"MPI_Send"})}, {1, chain(1, {"MPI_Send"})}});
  CHECK_THROWS_AS(stage1_match({a}), std::invalid_argument);
  CHECK_THROWS_AS(stage1_match({a, b}), std::invalid_argument);
  ExecutionDataset empty;
  empty.exec_id = "run3";
  CHECK_THROWS_AS(stage1_match({a, empty}), std::invalid_argument);
  CHECK_THROWS_AS(stage1_match({a, a}), std::invalid_argument);
}

TEST_CASE("parallel ranks give the sequential answer") {
  std::map<Rank, std::vector<Burst>> r1;
  std::map<Rank, std::vector<Burst>> r2;
  for (Rank r = 0; r < 12; ++r) {
    std::vector<std::string> calls1;
    std::vector<std::string> calls2;
    for (int i = 0; i < 40; ++i) {
      const std::string c = (i * (r + 3)) % 5 == 0 ? "MPI_Allreduce" : (i % 2 ? "MPI_Send" : "MPI_Recv");
      calls1.push_back(c);
      calls2.push_back(c);
      if ((i + r) % 11 == 0) calls2.push_back("MPI_Wait");
    }
    r1[r] = chain(r, calls1);
    r2[r] = chain(r, calls2);
  }
  const std::vector<ExecutionDataset> execs{dataset("run1", r1), dataset("run2", r2)};
  const auto seq = stage1_match(execs, {1});
  const auto par = stage1_match(execs, {8});
  CHECK(seq.groups == par.groups);
  CHECK(seq.unmatched == par.unmatched);
  check_partition(execs, seq);
}
