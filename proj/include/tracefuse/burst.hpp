// Core burst model shared by every pipeline stage.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace tracefuse {

using Rank = int;
using TimeNs = std::int64_t;

enum class CallClass { PointToPoint, Collective, Other, None };

std::string_view to_string(CallClass c);

/// Label used for the synthetic boundary markers at trace start and end.
inline constexpr std::string_view kBoundaryCall = "NONE";

struct MpiCall {
  std::string name{kBoundaryCall};
  CallClass cls{CallClass::None};

  bool operator==(const MpiCall&) const = default;
};

/// Decides the class of an MPI call from its label.
///
/// A call is collective when its upper-cased name, with the "MPI_" prefix
/// stripped, contains one of the configured collective cores (so
/// MPI_Allgatherv and MPI_Ibarrier follow MPI_GATHER and MPI_BARRIER).
/// Point-to-point calls are recognised by a fixed list of send/receive/
/// completion names. Everything else is `Other`; the boundary label is `None`.
class CallClassifier {
 public:
  CallClassifier();
  explicit CallClassifier(const std::vector<std::string>& collectives);

  CallClass classify(std::string_view name) const;
  MpiCall make(std::string_view name) const;
  bool is_collective(std::string_view name) const;

  const std::vector<std::string>& collectives() const { return collectives_; }

  static std::vector<std::string> default_collectives();

 private:
  std::vector<std::string> collectives_;  // as configured
  std::vector<std::string> cores_;        // upper-cased, prefix stripped
};

std::string upper(std::string_view s);

struct CommContext {
  MpiCall call;
  std::optional<Rank> partner;
  std::optional<std::int64_t> size;

  bool operator==(const CommContext&) const = default;
};

struct Burst {
  Rank task_id{0};
  TimeNs begin_time{0};
  TimeNs end_time{0};
  TimeNs duration{0};
  std::map<std::string, std::int64_t> counters;
  CommContext before;
  CommContext after;
  int seq_index{0};
  double rel_position{0.0};
  std::optional<double> ipc;
  std::optional<double> frequency;
  std::optional<double> concurrency;
  std::optional<int> region_id;
  std::optional<std::string> burst_id;

  bool operator==(const Burst&) const = default;
};

struct ExecutionDataset {
  std::string exec_id;
  std::string counter_set_name;
  std::map<Rank, std::vector<Burst>> ranks;
  std::vector<std::string> counter_names;

  std::size_t burst_count() const;
  const Burst& at(Rank rank, int seq_index) const;

  bool operator==(const ExecutionDataset&) const = default;
};

/// Checks the structural invariants (ordering, durations, counter keys).
/// Throws std::invalid_argument describing the first violation.
void validate_dataset(const ExecutionDataset& dataset);

struct CollectiveRegion {
  TimeNs t_start{0};
  TimeNs t_end{0};
  int region_id{0};

  bool operator==(const CollectiveRegion&) const = default;
};

struct DerivedConfig {
  std::string instructions_counter{"PAPI_TOT_INS"};
  std::string cycles_counter{"PAPI_TOT_CYC"};
  /// Optional rank -> node assignment; without it all ranks share one node.
  std::optional<std::map<Rank, int>> node_map;
};

/// Recomputes seq_index, rel_position, ipc, frequency and concurrency for
/// every burst. Pure and idempotent.
ExecutionDataset compute_derived_features(const ExecutionDataset& dataset,
                                          const DerivedConfig& config = {});

/// Time-weighted number of ranks in a compute burst over
/// [burst.begin_time, burst.end_time), counting the burst's own rank.
double concurrency_of(const Burst& burst, const ExecutionDataset& all_ranks,
                      const std::optional<std::map<Rank, int>>& node_map = std::nullopt);

}  // namespace tracefuse
