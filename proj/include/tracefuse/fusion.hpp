// Fusion of matched bursts into one table, and its synthetic .prv form.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tracefuse/burst.hpp"
#include "tracefuse/match_set.hpp"
#include "tracefuse/prv.hpp"

namespace tracefuse {

using Cell = std::variant<std::monostate, std::int64_t, double, std::string>;

/// Integers exactly, floats within 1e-9 relative, strings exactly; absent
/// equals only absent.
bool equivalent(const Cell& a, const Cell& b);
std::string format_cell(const Cell& c);

enum class MergeRule { Temporal, Identical, DivergentBase, Divergent, Unique };
std::string_view to_string(MergeRule r);

struct ColumnSource {
  std::string exec_id;
  std::string column;
  MergeRule rule{MergeRule::Temporal};
};

struct FusedColumn {
  std::string name;
  ColumnSource source;
  bool is_counter{false};
  std::vector<Cell> values;
};

struct FusedDataset {
  std::string base_exec;
  std::vector<std::string> executions;
  std::vector<FusedColumn> columns;       // every column carries its manifest entry
  std::vector<MatchGroup> partial_groups;  // groups not spanning every execution

  std::size_t row_count() const { return columns.empty() ? 0 : columns.front().values.size(); }
  const FusedColumn* column(std::string_view name) const;
};

/// Execution with the lowest unmatched-burst rate; ties go to the smallest
/// exec_id.
std::string select_base(const std::vector<ExecutionDataset>& executions, const MatchSet& matches);

/// Ordered feature cells of one burst (derived, context and counter columns).
/// `counter_names` selects the counter columns.
std::vector<std::pair<std::string, Cell>> burst_features(const Burst& b,
                                                         const std::vector<std::string>& counter_names);

/// Column name for an execution-specific copy; "{exec}" in `scheme` is
/// replaced by the execution id ("{exec}_" gives "run2_PAPI_L1_DCM").
std::string prefixed_name(std::string_view scheme, std::string_view exec_id, std::string_view column);

/// Builds the fused table from the groups spanning every execution.
/// Throws std::runtime_error naming the group if a member burst is missing.
FusedDataset fuse(const std::vector<ExecutionDataset>& executions, const MatchSet& matches,
                  const std::string& base, const std::string& prefix_scheme = "{exec}_");

std::string write_fused_csv(const FusedDataset& fused);
nlohmann::ordered_json fused_manifest(const FusedDataset& fused);
nlohmann::ordered_json partial_report(const FusedDataset& fused);

struct EmitOptions {
  EventType new_type_base{42100000};
  // Base trace whose MPI and application events, and communication records,
  // are copied into the output.
  // Counters then ride on the record sharing their task and time, so the
  // emitted trace extracts back into the base bursts. Null emits counters only.
  const PrvTrace* pass_through{nullptr};
  MpiEventTypes mpi_types;
};

/// One event per fused row at the base burst's end time carrying every
/// counter column. Columns unknown to `base_pcf` get fresh event types from
/// `options.new_type_base`; a fresh id already used by the base trace throws
/// std::runtime_error listing the collisions.
EmittedTrace emit_prv(const FusedDataset& fused, const PrvHeader& base_header, const PcfDictionary& base_pcf,
                      const EmitOptions& options = {});

/// Reads counter events back from an emitted trace: (task, time) -> column -> value.
std::map<std::pair<Rank, TimeNs>, std::map<std::string, std::int64_t>> read_emitted_counters(
    const PrvTrace& trace, const PcfDictionary& pcf, const MpiEventTypes& mpi = {});

}  // namespace tracefuse
