#include <doctest.h>

#include "helpers.hpp"
#include "tracefuse/burst_csv.hpp"
#include "tracefuse/prv.hpp"
#include "tracefuse/synthgen.hpp"

using namespace tracefuse;
using namespace tftest;

namespace {

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::vector<std::string> split_cells(const std::string& row) {
  std::vector<std::string> cells{""};
  for (char c : row) {
    if (c == ',')
      cells.emplace_back();
    else
      cells.back() += c;
  }
  return cells;
}

std::string header_line() {
  std::string h;
  for (std::size_t i = 0; i < kBurstColumns.size(); ++i) h += (i ? "," : "") + std::string(kBurstColumns[i]);
  return h;
}

}  // namespace

TEST_CASE("one burst gives header plus one row") {
  const auto ds = dataset("run1", {{0, {burst(0, 0, 10, "NONE", "NONE")}}});
  const auto csv = write_burst_csv(ds);
  CHECK(count_lines(csv) == 2);
  CHECK(csv.substr(0, csv.find('\n')) == header_line());
}

TEST_CASE("absent values are empty cells and zero stays zero") {
  ExecutionDataset ds;
  ds.exec_id = "run1";
  ds.counter_set_name = "INS";
  ds.counter_names = {"PAPI_TOT_INS", "PAPI_TOT_CYC"};
  ds.ranks[0] = {burst(0, 0, 10, "NONE", "MPI_Send", {{"PAPI_TOT_INS", 0}}),
                 burst(0, 20, 30, "MPI_Send", "NONE", {{"PAPI_TOT_INS", 4}, {"PAPI_TOT_CYC", 2}})};
  ds = compute_derived_features(ds);
  const auto csv = write_burst_csv(ds);
  const auto first_nl = csv.find('\n');
  const auto row1 = csv.substr(first_nl + 1, csv.find('\n', first_nl + 1) - first_nl - 1);
  // ipc column (index 8) is empty, PAPI_TOT_INS is "0", PAPI_TOT_CYC is empty.
  const auto cells = split_cells(row1);
  REQUIRE(cells.size() == 21);
  CHECK(cells[8].empty());
  CHECK(cells[19] == "0");
  CHECK(cells[20].empty());

  const auto back = read_burst_csv(csv);
  CHECK(back == ds);
  CHECK(back.ranks.at(0)[0].counters.at("PAPI_TOT_INS") == 0);
  CHECK_FALSE(back.ranks.at(0)[0].counters.contains("PAPI_TOT_CYC"));
}

TEST_CASE("write read write is byte identical") {
  SynthConfig cfg;
  cfg.ranks = 3;
  cfg.iterations = 6;
  cfg.seed = 99;
  cfg.pattern_library = default_pattern_library();
  cfg.executions = {"INS_MIX"};
  cfg.perturbations.time_jitter = 0.1;
  auto ds = generate_suite(cfg).executions.at(0);
  // Region ids and burst ids must survive too.
  ds.ranks.at(1)[2].region_id = 4;
  ds.ranks.at(1)[2].burst_id = "r1_d_3";
  const auto first = write_burst_csv(ds);
  const auto back = read_burst_csv(first);
  CHECK(back == ds);
  CHECK(write_burst_csv(back) == first);
}

TEST_CASE("columns are found by name and extra columns become counters") {
  const auto ds = dataset("run1", {{0, chain(0, {"MPI_Send"})}}, {"PAPI_TOT_INS"});
  auto csv = write_burst_csv(ds);
  const auto back = read_burst_csv(csv);
  CHECK(back.counter_names == std::vector<std::string>{"PAPI_TOT_INS"});
}

TEST_CASE("missing mandatory column is named") {
  const auto ds = dataset("run1", {{0, chain(0, {"MPI_Send"})}});
  auto csv = write_burst_csv(ds);
  auto pos = csv.find("ipc,");
  csv.replace(pos, 4, "ipx,");
  try {
    read_burst_csv(csv);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("'ipc'") != std::string::npos);
  }
}

TEST_CASE("duplicate task and sequence is rejected") {
  const auto ds = dataset("run1", {{0, {burst(0, 0, 10, "NONE", "NONE")}}});
  auto csv = write_burst_csv(ds);
  const auto row = csv.substr(csv.find('\n') + 1);
  CHECK_THROWS_AS(read_burst_csv(csv + row), ParseError);
}

TEST_CASE("cells that would break the format are refused on write") {
  auto ds = dataset("run,1", {{0, {burst(0, 0, 10, "NONE", "NONE")}}});
  CHECK_THROWS_AS(write_burst_csv(ds), std::invalid_argument);
}

TEST_CASE("shortest round-trip doubles") {
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(2.0) == "2");
  const double x = 0.1 + 0.2;
  CHECK(std::stod(format_double(x)) == x);
}
