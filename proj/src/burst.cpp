#include "tracefuse/burst.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include <fmt/format.h>

namespace tracefuse {

namespace {

constexpr std::string_view kPointToPoint[] = {
    "SEND",     "RECV",      "ISEND",    "IRECV",    "BSEND",   "SSEND",   "RSEND",
    "IBSEND",   "ISSEND",    "IRSEND",   "SENDRECV", "SENDRECV_REPLACE",   "PROBE",
    "IPROBE",   "MPROBE",    "IMPROBE",  "MRECV",    "IMRECV",  "WAIT",    "WAITALL",
    "WAITANY",  "WAITSOME",  "TEST",     "TESTALL",  "TESTANY", "TESTSOME"};

std::string strip_mpi_prefix(std::string s) {
  if (s.rfind("MPI_", 0) == 0) s.erase(0, 4);
  return s;
}

}  // namespace

std::string_view to_string(CallClass c) {
  switch (c) {
    case CallClass::PointToPoint: return "point-to-point";
    case CallClass::Collective: return "collective";
    case CallClass::Other: return "other";
    case CallClass::None: return "none";
  }
  return "none";
}

std::string upper(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return out;
}

std::vector<std::string> CallClassifier::default_collectives() {
  return {"MPI_BARRIER", "MPI_BCAST", "MPI_ALLREDUCE", "MPI_GATHER", "MPI_SCATTER"};
}

CallClassifier::CallClassifier() : CallClassifier(default_collectives()) {}

CallClassifier::CallClassifier(const std::vector<std::string>& collectives)
    : collectives_(collectives) {
  for (const auto& c : collectives_) {
    auto core = strip_mpi_prefix(upper(c));
    if (!core.empty()) cores_.push_back(std::move(core));
  }
}

bool CallClassifier::is_collective(std::string_view name) const {
  const auto core = strip_mpi_prefix(upper(name));
  return std::any_of(cores_.begin(), cores_.end(), [&](const std::string& c) {
    return core.find(c) != std::string::npos;
  });
}

CallClass CallClassifier::classify(std::string_view name) const {
  if (name == kBoundaryCall || name.empty()) return CallClass::None;
  if (is_collective(name)) return CallClass::Collective;
  const auto core = strip_mpi_prefix(upper(name));
  for (auto p : kPointToPoint)
    if (core == p) return CallClass::PointToPoint;
  return CallClass::Other;
}

MpiCall CallClassifier::make(std::string_view name) const {
  if (name.empty()) return MpiCall{};
  return MpiCall{std::string(name), classify(name)};
}

std::size_t ExecutionDataset::burst_count() const {
  std::size_t n = 0;
  for (const auto& [rank, bursts] : ranks) n += bursts.size();
  return n;
}

const Burst& ExecutionDataset::at(Rank rank, int seq_index) const {
  auto it = ranks.find(rank);
  if (it == ranks.end() || seq_index < 0 ||
      static_cast<std::size_t>(seq_index) >= it->second.size())
    throw std::out_of_range(
        fmt::format("{}: no burst (rank {}, seq {})", exec_id, rank, seq_index));
  const auto& b = it->second[static_cast<std::size_t>(seq_index)];
  if (b.seq_index != seq_index)
    throw std::out_of_range(fmt::format("{}: rank {} is not densely indexed", exec_id, rank));
  return b;
}

void validate_dataset(const ExecutionDataset& dataset) {
  const std::set<std::string> names(dataset.counter_names.begin(), dataset.counter_names.end());
  for (const auto& [rank, bursts] : dataset.ranks) {
    for (std::size_t i = 0; i < bursts.size(); ++i) {
      const auto& b = bursts[i];
      if (b.task_id != rank)
        throw std::invalid_argument(fmt::format("burst of rank {} filed under rank {}", b.task_id, rank));
      if (b.end_time < b.begin_time || b.duration != b.end_time - b.begin_time)
        throw std::invalid_argument(
            fmt::format("rank {} burst {}: inconsistent begin/end/duration", rank, b.seq_index));
      if (i > 0 && (bursts[i - 1].begin_time > b.begin_time || bursts[i - 1].seq_index >= b.seq_index))
        throw std::invalid_argument(fmt::format("rank {}: bursts out of order at {}", rank, i));
      for (const auto& [name, value] : b.counters) {
        if (!names.contains(name))
          throw std::invalid_argument(fmt::format("rank {}: undeclared counter {}", rank, name));
        if (value < 0)
          throw std::invalid_argument(fmt::format("rank {}: negative counter {}", rank, name));
      }
      if (b.before.partner && b.before.call.cls != CallClass::PointToPoint)
        throw std::invalid_argument(fmt::format("rank {} burst {}: partner on non point-to-point call",
                                                rank, b.seq_index));
      if (b.after.partner && b.after.call.cls != CallClass::PointToPoint)
        throw std::invalid_argument(fmt::format("rank {} burst {}: partner on non point-to-point call",
                                                rank, b.seq_index));
    }
  }
}

namespace {

// Total overlap of [lo, hi) with the compute bursts of one rank.
TimeNs overlap_with(const std::vector<Burst>& bursts, TimeNs lo, TimeNs hi) {
  auto it = std::lower_bound(bursts.begin(), bursts.end(), lo,
                             [](const Burst& b, TimeNs t) { return b.end_time <= t; });
  TimeNs total = 0;
  for (; it != bursts.end() && it->begin_time < hi; ++it) {
    const auto a = std::max(lo, it->begin_time);
    const auto z = std::min(hi, it->end_time);
    if (z > a) total += z - a;
  }
  return total;
}

}  // namespace

double concurrency_of(const Burst& burst, const ExecutionDataset& all_ranks,
                      const std::optional<std::map<Rank, int>>& node_map) {
  if (burst.end_time <= burst.begin_time) return 1.0;
  const auto node_of = [&](Rank r) -> int {
    if (!node_map) return 0;
    auto it = node_map->find(r);
    return it == node_map->end() ? -1 - r : it->second;
  };
  const int own_node = node_of(burst.task_id);
  TimeNs covered = 0;
  for (const auto& [rank, bursts] : all_ranks.ranks) {
    if (rank == burst.task_id || node_of(rank) != own_node) continue;
    covered += overlap_with(bursts, burst.begin_time, burst.end_time);
  }
  return 1.0 + static_cast<double>(covered) / static_cast<double>(burst.end_time - burst.begin_time);
}

ExecutionDataset compute_derived_features(const ExecutionDataset& dataset,
                                          const DerivedConfig& config) {
  ExecutionDataset out = dataset;
  for (auto& [rank, bursts] : out.ranks) {
    const auto count = bursts.size();
    std::optional<double> freq;
    if (count > 0) {
      const auto span = bursts.back().end_time - bursts.front().begin_time;
      if (span > 0) freq = static_cast<double>(count) / (static_cast<double>(span) * 1e-9);
    }
    for (std::size_t i = 0; i < count; ++i) {
      auto& b = bursts[i];
      b.seq_index = static_cast<int>(i);
      b.rel_position = static_cast<double>(i + 1) / static_cast<double>(count);
      b.frequency = freq;
      b.ipc.reset();
      auto ins = b.counters.find(config.instructions_counter);
      auto cyc = b.counters.find(config.cycles_counter);
      if (ins != b.counters.end() && cyc != b.counters.end() && cyc->second > 0)
        b.ipc = static_cast<double>(ins->second) / static_cast<double>(cyc->second);
    }
  }
  // Concurrency only reads temporal fields, which the loop above leaves alone.
  for (auto& [rank, bursts] : out.ranks)
    for (auto& b : bursts) b.concurrency = concurrency_of(b, dataset, config.node_map);
  return out;
}

}  // namespace tracefuse
