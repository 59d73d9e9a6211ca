// Paraver trace subset: .pcf dictionaries, .prv records and compute-burst
// extraction.
#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tracefuse/burst.hpp"

namespace tracefuse {

using EventType = std::int64_t;
using EventValue = std::int64_t;

/// Raised for malformed input; carries the 1-based line number (0 if none).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Raised for traces outside the supported scope (thread != 1).
class UnsupportedTrace : public ParseError {
 public:
  using ParseError::ParseError;
};

struct MpiEventTypes {
  EventType point_to_point{50000001};
  EventType collective{50000002};
  EventType other{50000003};

  bool contains(EventType t) const {
    return t == point_to_point || t == collective || t == other;
  }
  bool operator==(const MpiEventTypes&) const = default;
};

/// Extrae's begin/end-of-application marker.
inline constexpr EventType kApplicationEventType = 40000001;

struct PcfDictionary {
  std::map<EventType, std::string> event_labels;
  std::map<std::pair<EventType, EventValue>, std::string> value_labels;

  /// Counter name (first token of a label beginning "PAPI_") per event type.
  std::map<EventType, std::string> counter_types() const;
  std::optional<EventType> counter_type(std::string_view counter) const;

  bool operator==(const PcfDictionary&) const = default;
};

/// Value 0 of every configured MPI event type is normalised to "End".
PcfDictionary parse_pcf(std::string_view text, const MpiEventTypes& mpi = {});
std::string write_pcf(const PcfDictionary& pcf);

struct RawEvent {
  Rank task{0};
  TimeNs time{0};
  std::vector<std::pair<EventType, EventValue>> entries;
  std::size_t line{0};
};

struct CommRecord {
  Rank sender_task{0};
  Rank receiver_task{0};
  TimeNs send_time{0};
  TimeNs recv_time{0};
  std::int64_t size{0};
  std::int64_t tag{0};

  bool operator==(const CommRecord&) const = default;
};

struct PrvHeader {
  TimeNs total_time{0};
  int rank_count{0};
  bool parsed{false};  // false when taken from the records
};

struct PrvTrace {
  PrvHeader header;
  std::vector<std::vector<RawEvent>> events;  // indexed by rank
  std::vector<CommRecord> comms;
  std::size_t warnings{0};
};

PrvTrace parse_prv(std::istream& in);
PrvTrace parse_prv(std::string_view text);

struct EmittedTrace {
  std::string prv;
  std::string pcf;
};

/// Header line for emitted traces (single node, one application).
std::string prv_header_line(const PrvHeader& header);
/// A type-3 record; logical and physical times are both taken from the record.
std::string comm_record_line(const CommRecord& c);

struct ExtractConfig {
  MpiEventTypes mpi_types;
  CallClassifier classifier;
  DerivedConfig derived;
  std::string exec_id{"run1"};
  std::string counter_set_name;
};

struct ExtractStats {
  std::size_t truncated_calls{0};
  std::size_t dropped_counter_events{0};
  std::size_t dropped_zero_gaps{0};
  std::size_t warnings{0};
};

ExecutionDataset extract_bursts(const PrvTrace& trace, const PcfDictionary& pcf,
                                const ExtractConfig& config, ExtractStats* stats = nullptr);

}  // namespace tracefuse
