// Burst-table CSV: one row per compute burst, empty cell = absent value.
#pragma once

#include <array>
#include <string>
#include <string_view>

#include "tracefuse/burst.hpp"

namespace tracefuse {

/// Fixed leading columns, in order. Counter columns follow.
inline constexpr std::array<std::string_view, 19> kBurstColumns = {
    "exec_id",        "counter_set",    "task_id",        "seq_index",     "begin_time_ns",
    "end_time_ns",    "duration_ns",    "rel_position",   "ipc",           "frequency",
    "concurrency",    "mpi_call_before", "mpi_call_after", "partner_before", "partner_after",
    "size_before",    "size_after",     "region_id",      "burst_id"};

std::string write_burst_csv(const ExecutionDataset& dataset);

/// Classifies call names with `classifier`. The exec_id / counter_set of the
/// first row name the dataset.
ExecutionDataset read_burst_csv(std::string_view text, const CallClassifier& classifier = {});

/// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace tracefuse
