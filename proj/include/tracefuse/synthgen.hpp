// Synthetic execution families with known burst correspondences.
//
// One logical execution is sampled per rank: a sequence of MPI calls laid out
// from the pattern library, with a compute burst before the first call, after
// every call, and the counter values each burst "really" produced. Every
// observed execution is a perturbed copy of it restricted to one counter set,
// so the logical burst index is the ground-truth identity across executions.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tracefuse/burst.hpp"
#include "tracefuse/match_set.hpp"
#include "tracefuse/prv.hpp"

namespace tracefuse {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct CallTemplate {
  std::string name;
  std::optional<int> partner_offset;  // partner = (rank + offset) mod ranks
  std::optional<std::int64_t> size;   // bytes, only with a partner
};

/// A run of `repeat` repetitions of the same ordered calls.
struct Phase {
  std::string name;
  std::vector<CallTemplate> calls;
  int repeat{1};
};

struct CounterModel {
  std::string name;
  double base{0};   // mean value of a burst of average work
  double noise{0};  // sigma of the multiplicative run-to-run variation
};

/// Rates are probabilities in [0,1].
///
/// extra_burst_rate applies to every collective call: an MPI_Iprobe is
/// inserted right before it, adding one burst between the probe and the
/// collective. drop_burst_rate applies once per instance of a phase without
/// collectives repeated at least 3 times and removes its second-to-last
/// repetition. pattern_drift applies per repetition of a phase containing
/// non-blocking calls and shuffles the call order inside that repetition.
/// time_jitter is the sigma of the multiplicative variation of every duration.
struct Perturbations {
  double time_jitter{0};
  double extra_burst_rate{0};
  double drop_burst_rate{0};
  double pattern_drift{0};
};

struct Timing {
  TimeNs mean_burst_ns{20000};
  TimeNs mean_call_ns{1000};
  double work_sigma{0.3};  // burst-to-burst variation of the logical work
};

struct SynthConfig {
  int ranks{8};
  int iterations{125};
  std::vector<Phase> pattern_library;        // one iteration, in order
  std::vector<CounterModel> counter_models;  // overrides of the built-in models
  Perturbations perturbations;
  Timing timing;
  std::uint64_t seed{1};
  std::vector<std::string> executions;  // counter-set names, one per execution
  std::map<std::string, std::vector<std::string>> counter_sets;  // besides the presets
};

/// Halo exchange with non-blocking sends, a completion and a reduction.
std::vector<Phase> default_pattern_library();

/// INS_MIX, OPS_SET and OPS_CYC.
const std::map<std::string, std::vector<std::string>>& counter_set_presets();
std::vector<CounterModel> default_counter_models();

/// PAPI preset event type as written by Extrae (42000000 + preset index);
/// nullopt for names outside the table.
std::optional<EventType> papi_event_type(std::string_view counter);

/// Checks ranges and names. Throws ConfigError.
void validate_config(const SynthConfig& config);

SynthConfig synth_config_from_json(const nlohmann::json& doc);
nlohmann::ordered_json to_json(const SynthConfig& config);

struct SynthSuite {
  std::vector<ExecutionDataset> executions;  // exec ids run1..runN
  std::vector<MatchGroup> ground_truth;      // logical bursts surviving in >= 2 executions
};

SynthSuite generate_suite(const SynthConfig& config);

/// Ground truth as a match set: truth groups plus every other burst unmatched.
MatchSet truth_match_set(const SynthSuite& suite);

/// Writes a dataset as a trace whose extraction gives the dataset back:
/// application markers at the rank start and end, MPI entry events carrying
/// the counters of the burst before them, and one communication record per
/// call with a partner. Throws std::invalid_argument for datasets this layout
/// cannot express.
EmittedTrace emit_as_prv(const ExecutionDataset& dataset);

/// Expected mean |1 - b'/b| between two independent draws with noise sigma.
double expected_relative_difference(double sigma);

}  // namespace tracefuse
