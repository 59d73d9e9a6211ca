#include <doctest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"
#include "tracefuse/burst_csv.hpp"
#include "tracefuse/fusion.hpp"
#include "tracefuse/matching.hpp"
#include "tracefuse/stage1.hpp"
#include "tracefuse/synthgen.hpp"

using namespace tftest;

namespace {

SynthConfig small(std::uint64_t seed = 1, int ranks = 4, int iterations = 30) {
  SynthConfig c;
  c.ranks = ranks;
  c.iterations = iterations;
  c.seed = seed;
  c.pattern_library = default_pattern_library();
  c.executions = {"INS_MIX", "OPS_SET", "OPS_CYC"};
  return c;
}

std::string fingerprint(const SynthSuite& s) {
  std::string out;
  for (const auto& e : s.executions) out += write_burst_csv(e);
  MatchSet truth = truth_match_set(s);
  return out + dump_match_set(truth);
}

double recovery(const SynthSuite& s) {
  return recovery_against(match_executions(s.executions), s.ground_truth).rate();
}

}  // namespace

TEST_CASE("default library shape") {
  const auto lib = default_pattern_library();
  std::size_t per_iteration = 0;
  for (const auto& p : lib) per_iteration += p.calls.size() * static_cast<std::size_t>(p.repeat);
  CHECK(per_iteration == 10);
  const auto suite = generate_suite(small(1, 2, 5));
  for (const auto& e : suite.executions)
    for (const auto& [rank, bursts] : e.ranks) CHECK(bursts.size() == 51);
}

TEST_CASE("without perturbation every execution is structurally identical") {
  const auto suite = generate_suite(small());
  REQUIRE(suite.executions.size() == 3);
  const auto& a = suite.executions[0];
  for (const auto& e : suite.executions) {
    CHECK(e.burst_count() == a.burst_count());
    for (const auto& [rank, bursts] : e.ranks)
      for (std::size_t i = 0; i < bursts.size(); ++i) {
        CHECK(bursts[i].before == a.ranks.at(rank)[i].before);
        CHECK(bursts[i].after == a.ranks.at(rank)[i].after);
      }
  }
  const auto s1 = stage1_match(suite.executions);
  for (const auto& g : s1.groups) CHECK(g.stage == MatchStage::Direct);
  const auto rec = recovery_against(match_executions(suite.executions), suite.ground_truth);
  CHECK(rec.truth_groups == a.burst_count());
  CHECK(rec.recovered == rec.truth_groups);
  CHECK(rec.recovered_stage1 == rec.truth_groups);
  CHECK(rec.spurious == 0);
}

TEST_CASE("each execution carries only its counter set") {
  const auto suite = generate_suite(small());
  for (std::size_t i = 0; i < suite.executions.size(); ++i) {
    const auto& e = suite.executions[i];
    const auto& preset = counter_set_presets().at(small().executions[i]);
    CHECK(std::set<std::string>(e.counter_names.begin(), e.counter_names.end()) ==
          std::set<std::string>(preset.begin(), preset.end()));
    CHECK(e.counter_set_name == small().executions[i]);
    for (const auto& [rank, bursts] : e.ranks)
      for (const auto& b : bursts) CHECK(b.counters.size() == preset.size());
  }
  CHECK(suite.executions[1].exec_id == "run2");
}

TEST_CASE("counter noise is centred on the logical value") {
  auto cfg = small(4, 4, 100);
  cfg.executions = {"INS_MIX", "INS_MIX"};
  const auto suite = generate_suite(cfg);
  double log_sum = 0, log_sq = 0;
  std::size_t n = 0;
  for (const auto& [rank, bursts] : suite.executions[0].ranks)
    for (std::size_t i = 0; i < bursts.size(); ++i) {
      const double x = double(bursts[i].counters.at("PAPI_L1_DCM"));
      const double y = double(suite.executions[1].ranks.at(rank)[i].counters.at("PAPI_L1_DCM"));
      const double d = std::log(y / x);
      log_sum += d;
      log_sq += d * d;
      ++n;
    }
  // Difference of two draws with sigma 0.05: standard deviation 0.05 * sqrt(2).
  CHECK(std::abs(log_sum / double(n)) < 0.01);
  CHECK(std::sqrt(log_sq / double(n)) == doctest::Approx(0.05 * std::sqrt(2.0)).epsilon(0.1));
}

TEST_CASE("the same seed gives the same suite") {
  auto cfg = small(9);
  cfg.perturbations = {0.05, 0.1, 0.1, 0.2};
  CHECK(fingerprint(generate_suite(cfg)) == fingerprint(generate_suite(cfg)));
  auto other = cfg;
  other.seed = 10;
  CHECK(fingerprint(generate_suite(cfg)) != fingerprint(generate_suite(other)));
}

TEST_CASE("ground truth is a valid match set") {
  auto cfg = small(2);
  cfg.perturbations = {0.02, 0.2, 0.2, 0.0};
  const auto suite = generate_suite(cfg);
  const auto truth = truth_match_set(suite);
  for (const auto& e : suite.executions) {
    std::set<BurstRef> seen;
    for (const auto& g : truth.groups) {
      CHECK(g.members.size() >= 2);
      if (auto it = g.members.find(e.exec_id); it != g.members.end()) {
        CHECK(it->second.rank == g.rank);
        CHECK(seen.insert(it->second).second);
      }
    }
    for (const auto& r : truth.unmatched.at(e.exec_id)) CHECK(seen.insert(r).second);
    CHECK(seen.size() == e.burst_count());
  }
  std::set<std::string> ids;
  for (const auto& g : truth.groups) CHECK(ids.insert(g.burst_id).second);
}

TEST_CASE("extra bursts break the one-to-one layout") {
  auto cfg = small(3);
  cfg.perturbations.extra_burst_rate = 0.5;
  const auto suite = generate_suite(cfg);
  std::set<std::size_t> sizes;
  for (const auto& e : suite.executions) sizes.insert(e.burst_count());
  CHECK(sizes.size() > 1);
  const auto rec = recovery_against(match_executions(suite.executions), suite.ground_truth);
  CHECK(rec.stage1_rate() < 1.0);
}

TEST_CASE("dropped bursts leave truth groups with fewer members") {
  auto cfg = small(3);
  cfg.perturbations.drop_burst_rate = 0.3;
  cfg.pattern_library[0].repeat = 4;
  const auto suite = generate_suite(cfg);
  std::size_t partial = 0;
  for (const auto& g : suite.ground_truth) partial += g.members.size() < suite.executions.size();
  CHECK(partial > 0);
}

TEST_CASE("recovery does not rise with the extra burst rate") {
  std::vector<double> mean;
  for (double rate : {0.0, 0.01, 0.05, 0.2}) {
    double sum = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      auto cfg = small(seed, 4, 30);
      cfg.perturbations.time_jitter = 0.02;
      cfg.perturbations.extra_burst_rate = rate;
      sum += recovery(generate_suite(cfg));
    }
    mean.push_back(sum / 10.0);
  }
  CAPTURE(mean[0]);
  CAPTURE(mean[1]);
  CAPTURE(mean[2]);
  CAPTURE(mean[3]);
  for (std::size_t i = 1; i < mean.size(); ++i) CHECK(mean[i] <= mean[i - 1]);
}

TEST_CASE("one percent extra bursts are recovered by the two stages") {
  auto cfg = small(11, 8, 125);
  cfg.perturbations.time_jitter = 0.02;
  cfg.perturbations.extra_burst_rate = 0.01;
  const auto suite = generate_suite(cfg);
  CHECK(suite.executions[0].burst_count() >= 10000);
  const auto rec = recovery_against(match_executions(suite.executions), suite.ground_truth);
  CHECK(rec.rate() >= 0.99);
  CHECK(rec.recovered_stage2 > 0);
}

TEST_CASE("pattern drift defeats stage 1 but not stage 2") {
  auto cfg = small(23, 4, 60);
  cfg.executions = {"INS_MIX", "INS_MIX"};
  cfg.pattern_library = {{"exchange",
                          {{"MPI_Isend", 1, 16384}, {"MPI_Irecv", -1, 16384}, {"MPI_Test", {}, {}}},
                          4},
                         {"complete", {{"MPI_Waitall", {}, {}}}, 1},
                         {"reduce", {{"MPI_Allreduce", {}, {}}}, 1}};
  cfg.perturbations = {0.05, 0.0, 0.0, 0.5};
  const auto suite = generate_suite(cfg);
  const auto rec = recovery_against(match_executions(suite.executions), suite.ground_truth);
  CHECK(rec.stage1_rate() < 0.5);
  CHECK(rec.rate() > rec.stage1_rate());
}

TEST_CASE("configuration errors") {
  auto cfg = small();
  cfg.executions = {"INS_MIX", "NO_SUCH_SET"};
  CHECK_THROWS_AS(generate_suite(cfg), ConfigError);
  cfg = small();
  cfg.perturbations.extra_burst_rate = 1.5;
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg = small();
  cfg.counter_sets["MINE"] = {"PAPI_TOT_INS", "MY_COUNTER"};
  cfg.executions = {"MINE", "MINE"};
  CHECK_THROWS_AS(validate_config(cfg), ConfigError);
  cfg.counter_models.push_back({"MY_COUNTER", 100.0, 0.01});
  CHECK_NOTHROW(validate_config(cfg));

  CHECK_THROWS_AS(synth_config_from_json(nlohmann::json::parse(R"({"seed": "seven"})")), ConfigError);
  CHECK_THROWS_AS(synth_config_from_json(nlohmann::json::parse(R"({"seed": -1})")), ConfigError);
  CHECK_THROWS_AS(synth_config_from_json(nlohmann::json::parse(R"({"ranks": "x"})")), ConfigError);
  CHECK_THROWS_AS(synth_config_from_json(nlohmann::json::parse("[]")), ConfigError);
}

TEST_CASE("JSON configuration round trip") {
  auto cfg = small(5);
  cfg.perturbations = {0.01, 0.02, 0.03, 0.04};
  cfg.counter_sets["MINE"] = {"PAPI_TOT_INS"};
  const auto back = synth_config_from_json(nlohmann::json::parse(to_json(cfg).dump()));
  CHECK(to_json(back) == to_json(cfg));
  CHECK(fingerprint(generate_suite(back)) == fingerprint(generate_suite(cfg)));
  const auto defaults = synth_config_from_json(nlohmann::json::object());
  CHECK(defaults.executions == std::vector<std::string>{"INS_MIX", "OPS_SET", "OPS_CYC"});
  CHECK(defaults.pattern_library.size() == default_pattern_library().size());
}

TEST_CASE("papi event types") {
  CHECK(papi_event_type("PAPI_TOT_INS") == 42000050);
  CHECK(papi_event_type("PAPI_L1_DCM") == 42000000);
  CHECK(papi_event_type("PAPI_VEC_DP") == 42000106);
  CHECK_FALSE(papi_event_type("MY_COUNTER").has_value());
}

TEST_CASE("expected relative difference") {
  CHECK(expected_relative_difference(0.0) == 0.0);
  // Small sigma: about 2 sigma / sqrt(pi).
  CHECK(expected_relative_difference(0.01) == doctest::Approx(0.02 / std::sqrt(M_PI)).epsilon(1e-3));
}

namespace {

ExecutionDataset reextract(const EmittedTrace& t, const ExecutionDataset& like) {
  ExtractConfig ec;
  ec.exec_id = like.exec_id;
  ec.counter_set_name = like.counter_set_name;
  return extract_bursts(parse_prv(t.prv), parse_pcf(t.pcf), ec);
}

std::map<Rank, std::map<std::string, std::int64_t>> sums(const ExecutionDataset& d) {
  std::map<Rank, std::map<std::string, std::int64_t>> out;
  for (const auto& [rank, bursts] : d.ranks)
    for (const auto& b : bursts)
      for (const auto& [n, v] : b.counters) out[rank][n] += v;
  return out;
}

}  // namespace

TEST_CASE("emitted traces extract back to the same bursts") {
  auto cfg = small(8, 2, 5);  // 2 ranks x 51 bursts
  cfg.perturbations = {0.05, 0.2, 0.0, 0.0};
  const auto suite = generate_suite(cfg);
  for (const auto& e : suite.executions) {
    const auto back = reextract(emit_as_prv(e), e);
    CHECK(back.counter_names == e.counter_names);
    CHECK(write_burst_csv(back) == write_burst_csv(e));
    CHECK(back == e);
    CHECK(sums(back) == sums(e));
  }
}

TEST_CASE("emitted traces match like the originals") {
  auto cfg = small(6, 3, 10);
  cfg.perturbations = {0.02, 0.1, 0.0, 0.0};
  const auto suite = generate_suite(cfg);
  std::vector<ExecutionDataset> back;
  for (const auto& e : suite.executions) back.push_back(reextract(emit_as_prv(e), e));
  CHECK(dump_match_set(match_executions(back)) == dump_match_set(match_executions(suite.executions)));
}

TEST_CASE("a fused trace with the base MPI events extracts back into the base bursts") {
  auto cfg = small(12, 2, 5);
  cfg.perturbations = {0.0, 0.0, 0.0, 0.0};
  const auto suite = generate_suite(cfg);
  const auto& base = suite.executions[0];
  const auto fused = fuse(suite.executions, truth_match_set(suite), base.exec_id);
  const auto base_trace = emit_as_prv(base);
  const auto parsed = parse_prv(base_trace.prv);
  EmitOptions opts;
  opts.pass_through = &parsed;
  const auto out = emit_prv(fused, parsed.header, parse_pcf(base_trace.pcf), opts);
  const auto back = reextract(out, base);

  // Extraction only reads PAPI-labelled types, so prefixed columns come back
  // through the emitted-counter reader instead.
  std::set<std::string> fused_counters, plain;
  for (const auto& c : fused.columns)
    if (c.is_counter) {
      fused_counters.insert(c.name);
      if (c.name.rfind("PAPI_", 0) == 0) plain.insert(c.name);
    }
  CHECK(fused_counters.size() > plain.size());
  CHECK(std::set<std::string>(back.counter_names.begin(), back.counter_names.end()) == plain);
  const auto merged = read_emitted_counters(parse_prv(out.prv), parse_pcf(out.pcf));
  REQUIRE(back.burst_count() == base.burst_count());
  REQUIRE(fused.row_count() == base.burst_count());
  for (const auto& [rank, bursts] : base.ranks)
    for (std::size_t i = 0; i < bursts.size(); ++i) {
      const auto& b = back.ranks.at(rank)[i];
      CHECK(b.end_time == bursts[i].end_time);
      CHECK(b.before == bursts[i].before);
      CHECK(b.after == bursts[i].after);
      CHECK(b.counters.size() == plain.size());
      for (const auto& [name, value] : bursts[i].counters) CHECK(b.counters.at(name) == value);
      CHECK(merged.at({rank, b.end_time}).size() == fused_counters.size());
    }
}

TEST_CASE("an empty dataset emits header-only files") {
  ExecutionDataset empty;
  empty.exec_id = "run1";
  const auto t = emit_as_prv(empty);
  CHECK(std::count(t.prv.begin(), t.prv.end(), '\n') == 1);
  CHECK(t.prv.rfind("#Paraver", 0) == 0);
  CHECK(t.pcf.find("EVENT_TYPE") == std::string::npos);
  auto cfg = small();
  cfg.iterations = 0;
  cfg.ranks = 1;
  const auto suite = generate_suite(cfg);
  for (const auto& e : suite.executions) CHECK(e.burst_count() == 1);
}
