#include "tracefuse/prv.hpp"

#include <algorithm>
#include <charconv>
#include <limits>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace tracefuse {

ParseError::ParseError(const std::string& what, std::size_t line)
    : std::runtime_error(line ? fmt::format("line {}: {}", line, what) : what), line_(line) {}

namespace {

std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

template <typename Int>
std::optional<Int> to_int(std::string_view s) {
  Int v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

// Splits off the first whitespace-delimited token.
std::pair<std::string_view, std::string_view> next_token(std::string_view s) {
  s = trim(s);
  const auto e = s.find_first_of(" \t");
  if (e == std::string_view::npos) return {s, {}};
  return {s.substr(0, e), trim(s.substr(e))};
}

bool is_section_keyword(std::string_view line) {
  if (line.empty()) return false;
  return std::all_of(line.begin(), line.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || c == '_';
  });
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto p = s.find(sep, start);
    out.push_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

}  // namespace

std::map<EventType, std::string> PcfDictionary::counter_types() const {
  std::map<EventType, std::string> out;
  for (const auto& [type, label] : event_labels) {
    if (label.rfind("PAPI_", 0) != 0) continue;
    const auto e = label.find_first_of(" \t(");
    out.emplace(type, label.substr(0, e));
  }
  return out;
}

std::optional<EventType> PcfDictionary::counter_type(std::string_view counter) const {
  for (const auto& [type, name] : counter_types())
    if (name == counter) return type;
  return std::nullopt;
}

PcfDictionary parse_pcf(std::string_view text, const MpiEventTypes& mpi) {
  enum class Section { None, EventType, Values, Unknown };
  PcfDictionary pcf;
  Section section = Section::None;
  std::vector<EventType> block;  // types of the current EVENT_TYPE block
  std::size_t lineno = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++lineno;
    const auto line = trim(raw);
    if (line.empty()) {
      section = Section::None;
      continue;
    }
    if (is_section_keyword(line)) {
      if (line == "EVENT_TYPE") {
        section = Section::EventType;
        block.clear();
      } else if (line == "VALUES" && section == Section::EventType) {
        section = Section::Values;
      } else {
        section = Section::Unknown;
      }
      continue;
    }
    switch (section) {
      case Section::EventType: {
        auto [gradient, rest] = next_token(line);
        auto [type_tok, label] = next_token(rest);
        auto type = to_int<EventType>(type_tok);
        if (!to_int<int>(gradient) || !type)
          throw ParseError(fmt::format("malformed EVENT_TYPE line '{}'", line), lineno);
        pcf.event_labels[*type] = std::string(label);
        block.push_back(*type);
        break;
      }
      case Section::Values: {
        auto [value_tok, label] = next_token(line);
        auto value = to_int<EventValue>(value_tok);
        if (!value) throw ParseError(fmt::format("malformed VALUES line '{}'", line), lineno);
        for (auto t : block) pcf.value_labels[{t, *value}] = std::string(label);
        break;
      }
      case Section::None:
      case Section::Unknown:
        break;
    }
  }
  for (const auto& [type, label] : pcf.event_labels)
    if (mpi.contains(type)) pcf.value_labels[{type, 0}] = "End";
  return pcf;
}

std::string write_pcf(const PcfDictionary& pcf) {
  std::string out = "DEFAULT_OPTIONS\n\nLEVEL               THREAD\nUNITS               NANOSEC\n\n";
  for (const auto& [type, label] : pcf.event_labels) {
    out += fmt::format("EVENT_TYPE\n0    {}    {}\n", type, label);
    auto it = pcf.value_labels.lower_bound({type, std::numeric_limits<EventValue>::min()});
    bool header = false;
    for (; it != pcf.value_labels.end() && it->first.first == type; ++it) {
      if (!header) {
        out += "VALUES\n";
        header = true;
      }
      out += fmt::format("{}      {}\n", it->first.second, it->second);
    }
    out += "\n";
  }
  return out;
}

namespace {

PrvHeader parse_header(std::string_view line) {
  PrvHeader h;
  const auto close = line.find(')');
  if (close == std::string_view::npos || close + 1 >= line.size() || line[close + 1] != ':') return h;
  const auto body = line.substr(close + 2);
  std::vector<std::string_view> fields;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < body.size(); ++i) {
    if (body[i] == '(') ++depth;
    if (body[i] == ')') --depth;
    if (body[i] == ':' && depth == 0) {
      fields.push_back(body.substr(start, i - start));
      start = i + 1;
    }
  }
  fields.push_back(body.substr(start));
  if (fields.size() < 4) return h;
  auto time_tok = fields[0];
  if (const auto u = time_tok.find('_'); u != std::string_view::npos) time_tok = time_tok.substr(0, u);
  auto tasks_tok = fields[3].substr(0, fields[3].find('('));
  auto total = to_int<TimeNs>(time_tok);
  auto tasks = to_int<int>(tasks_tok);
  if (!total || !tasks || *tasks < 0) return h;
  h.total_time = *total;
  h.rank_count = *tasks;
  h.parsed = true;
  return h;
}

std::vector<std::int64_t> int_fields(std::string_view line, std::size_t lineno) {
  std::vector<std::int64_t> out;
  for (auto f : split(line, ':')) {
    auto v = to_int<std::int64_t>(trim(f));
    if (!v) throw ParseError(fmt::format("non-integer field '{}'", f), lineno);
    out.push_back(*v);
  }
  return out;
}

Rank rank_from_task(std::int64_t task, std::size_t lineno) {
  if (task < 1) throw ParseError(fmt::format("task id {} out of range", task), lineno);
  return static_cast<Rank>(task - 1);
}

void check_thread(std::int64_t thread, std::size_t lineno) {
  if (thread != 1) throw UnsupportedTrace("hybrid traces unsupported (thread field != 1)", lineno);
}

}  // namespace

PrvTrace parse_prv(std::istream& in) {
  PrvTrace trace;
  std::string raw;
  std::size_t lineno = 0;
  bool seen_header = false;
  TimeNs max_time = 0;
  int max_rank = -1;
  std::vector<TimeNs> last_time;
  std::size_t skipped = 0;

  auto events_of = [&](Rank r) -> std::vector<RawEvent>& {
    if (static_cast<std::size_t>(r) >= trace.events.size()) {
      trace.events.resize(static_cast<std::size_t>(r) + 1);
      last_time.resize(static_cast<std::size_t>(r) + 1, std::numeric_limits<TimeNs>::min());
    }
    return trace.events[static_cast<std::size_t>(r)];
  };

  while (std::getline(in, raw)) {
    ++lineno;
    const auto line = trim(raw);
    if (line.empty()) continue;
    if (!seen_header) {
      if (line.rfind("#Paraver", 0) != 0) throw ParseError("missing #Paraver header", lineno);
      trace.header = parse_header(line);
      seen_header = true;
      continue;
    }
    if (line.front() == '#' || line.front() == 'c') {
      ++skipped;
      continue;
    }
    const auto f = int_fields(line, lineno);
    switch (f[0]) {
      case 1: {
        if (f.size() < 8) throw ParseError("short state record", lineno);
        check_thread(f[4], lineno);
        max_rank = std::max(max_rank, rank_from_task(f[3], lineno));
        max_time = std::max(max_time, f[6]);
        break;
      }
      case 2: {
        if (f.size() < 8 || (f.size() - 6) % 2 != 0) throw ParseError("malformed event record", lineno);
        check_thread(f[4], lineno);
        RawEvent ev;
        ev.task = rank_from_task(f[3], lineno);
        ev.time = f[5];
        ev.line = lineno;
        for (std::size_t i = 6; i + 1 < f.size(); i += 2) ev.entries.emplace_back(f[i], f[i + 1]);
        auto& list = events_of(ev.task);
        auto& last = last_time[static_cast<std::size_t>(ev.task)];
        if (ev.time < last)
          throw ParseError(fmt::format("non-monotonic time on rank {} ({} after {})", ev.task, ev.time, last),
                           lineno);
        last = ev.time;
        max_rank = std::max(max_rank, ev.task);
        max_time = std::max(max_time, ev.time);
        list.push_back(std::move(ev));
        break;
      }
      case 3: {
        if (f.size() != 15) throw ParseError("malformed communication record", lineno);
        check_thread(f[4], lineno);
        check_thread(f[10], lineno);
        CommRecord c;
        c.sender_task = rank_from_task(f[3], lineno);
        c.send_time = f[5];
        c.receiver_task = rank_from_task(f[9], lineno);
        c.recv_time = f[11];
        c.size = f[13];
        c.tag = f[14];
        if (c.size < 0) throw ParseError("negative message size", lineno);
        max_rank = std::max({max_rank, c.sender_task, c.receiver_task});
        max_time = std::max({max_time, c.send_time, c.recv_time, f[6], f[12]});
        trace.comms.push_back(c);
        break;
      }
      default:
        ++skipped;
        break;
    }
  }
  if (!seen_header) throw ParseError("missing #Paraver header", 0);
  if (skipped) spdlog::warn("skipped {} unsupported .prv record(s)", skipped);
  trace.warnings += skipped;
  if (!trace.header.parsed) {
    trace.header.total_time = max_time;
    trace.header.rank_count = max_rank + 1;
  }
  const auto ranks = static_cast<std::size_t>(std::max(trace.header.rank_count, max_rank + 1));
  trace.events.resize(ranks);
  trace.header.rank_count = static_cast<int>(ranks);
  return trace;
}

PrvTrace parse_prv(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_prv(in);
}

std::string prv_header_line(const PrvHeader& header) {
  std::string tasks;
  for (int i = 0; i < header.rank_count; ++i) tasks += (i ? ",1:1" : "1:1");
  return fmt::format("#Paraver (01/01/1970 at 00:00):{}_ns:1({}):1:{}({})", header.total_time,
                     std::max(header.rank_count, 1), header.rank_count, tasks);
}

std::string comm_record_line(const CommRecord& c) {
  return fmt::format("3:{0}:1:{0}:1:{1}:{1}:{2}:1:{2}:1:{3}:{3}:{4}:{5}", c.sender_task + 1, c.send_time,
                     c.receiver_task + 1, c.recv_time, c.size, c.tag);
}

// ---------------------------------------------------------------------------
// Burst extraction

namespace {

struct MpiInterval {
  std::string name;
  TimeNs entry{0};
  TimeNs exit{0};
  std::map<std::string, std::int64_t> entry_counters;
};

struct Endpoint {
  TimeNs time;
  Rank partner;
  std::int64_t size;
};

// One rank's merged records: consecutive events at the same timestamp.
struct Record {
  TimeNs time;
  std::vector<std::pair<EventType, EventValue>> entries;
};

std::vector<Record> merge_same_time(const std::vector<RawEvent>& events) {
  std::vector<Record> out;
  for (const auto& ev : events) {
    if (!out.empty() && out.back().time == ev.time) {
      out.back().entries.insert(out.back().entries.end(), ev.entries.begin(), ev.entries.end());
    } else {
      out.push_back({ev.time, ev.entries});
    }
  }
  return out;
}

std::string call_label(const PcfDictionary& pcf, EventType type, EventValue value) {
  auto it = pcf.value_labels.find({type, value});
  if (it != pcf.value_labels.end()) return it->second;
  return fmt::format("MPI_{}_{}", type, value);
}

CommContext context_of(const MpiInterval* iv, const std::vector<Endpoint>& endpoints,
                       const CallClassifier& classifier) {
  CommContext ctx;
  if (!iv) return ctx;
  ctx.call = classifier.make(iv->name);
  if (ctx.call.cls != CallClass::PointToPoint) return ctx;
  auto it = std::lower_bound(endpoints.begin(), endpoints.end(), iv->entry,
                             [](const Endpoint& e, TimeNs t) { return e.time < t; });
  // Endpoints are ordered by (time, partner): the first one inside the call is
  // the nearest to its entry, ties going to the lower partner rank.
  if (it != endpoints.end() && it->time <= iv->exit) {
    ctx.partner = it->partner;
    ctx.size = it->size;
  }
  return ctx;
}

}  // namespace

ExecutionDataset extract_bursts(const PrvTrace& trace, const PcfDictionary& pcf,
                                const ExtractConfig& config, ExtractStats* stats) {
  ExtractStats local;
  const auto counters = pcf.counter_types();
  ExecutionDataset ds;
  ds.exec_id = config.exec_id;
  ds.counter_set_name = config.counter_set_name;
  for (const auto& [type, name] : counters)
    if (std::find(ds.counter_names.begin(), ds.counter_names.end(), name) == ds.counter_names.end())
      ds.counter_names.push_back(name);

  std::vector<std::vector<Endpoint>> endpoints(trace.events.size());
  for (const auto& c : trace.comms) {
    if (static_cast<std::size_t>(c.sender_task) < endpoints.size())
      endpoints[static_cast<std::size_t>(c.sender_task)].push_back({c.send_time, c.receiver_task, c.size});
    if (static_cast<std::size_t>(c.receiver_task) < endpoints.size())
      endpoints[static_cast<std::size_t>(c.receiver_task)].push_back({c.recv_time, c.sender_task, c.size});
  }
  for (auto& e : endpoints)
    std::stable_sort(e.begin(), e.end(), [](const Endpoint& a, const Endpoint& b) {
      return a.time != b.time ? a.time < b.time : a.partner < b.partner;
    });

  const TimeNs trace_end = trace.header.total_time;
  for (std::size_t r = 0; r < trace.events.size(); ++r) {
    const Rank rank = static_cast<Rank>(r);
    const auto records = merge_same_time(trace.events[r]);

    std::vector<MpiInterval> intervals;
    std::optional<MpiInterval> open;
    TimeNs start = 0;
    TimeNs end = trace_end;
    std::map<std::string, std::int64_t> trailing_counters;

    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& rec = records[i];
      std::map<std::string, std::int64_t> rec_counters;
      bool has_entry = false;
      bool has_mpi = false;
      for (const auto& [type, value] : rec.entries) {
        if (config.mpi_types.contains(type)) {
          has_mpi = true;
          if (value > 0) {
            has_entry = true;
            if (open) {
              spdlog::warn("rank {}: nested MPI entry at {} ignored", rank, rec.time);
              ++local.warnings;
              continue;
            }
            open = MpiInterval{call_label(pcf, type, value), rec.time, rec.time, {}};
          } else {
            if (!open) {
              spdlog::warn("rank {}: MPI exit without entry at {}", rank, rec.time);
              ++local.warnings;
              continue;
            }
            open->exit = rec.time;
            intervals.push_back(std::move(*open));
            open.reset();
          }
        } else if (auto c = counters.find(type); c != counters.end()) {
          rec_counters[c->second] += value;
        }
      }
      if (has_entry) {
        // Counters on the MPI entry close the preceding compute burst.
        auto& target = open ? open->entry_counters : intervals.back().entry_counters;
        for (const auto& [k, v] : rec_counters) target[k] += v;
        continue;
      }
      if (has_mpi) continue;  // exit-only: communication-burst context
      // A leading non-MPI record marks the rank's start, a trailing one its
      // end; the end marker's counters belong to the final compute burst.
      const bool first = i == 0;
      const bool last = i + 1 == records.size();
      if (last && !open) {
        end = rec.time;
        trailing_counters = std::move(rec_counters);
      } else if (first && rec_counters.empty()) {
        start = rec.time;
      } else if (!rec_counters.empty()) {
        if (first) start = rec.time;
        spdlog::warn("rank {}: counter event at {} outside any attribution point dropped", rank, rec.time);
        ++local.dropped_counter_events;
        ++local.warnings;
      }
    }
    if (open) {
      spdlog::warn("rank {}: {} entered at {} never exits; truncated at trace end", rank, open->name,
                   open->entry);
      open->exit = std::max(trace_end, open->entry);
      intervals.push_back(std::move(*open));
      ++local.truncated_calls;
      ++local.warnings;
      if (!trailing_counters.empty()) {
        ++local.dropped_counter_events;
        ++local.warnings;
      }
      trailing_counters.clear();
      end = intervals.back().exit;
    }
    if (!intervals.empty()) end = std::max(end, intervals.back().exit);

    auto& bursts = ds.ranks[rank];
    const auto& eps = endpoints[r];
    std::optional<CommContext> prev_ctx;
    for (std::size_t k = 0; k <= intervals.size(); ++k) {
      const MpiInterval* before = k > 0 ? &intervals[k - 1] : nullptr;
      const MpiInterval* after = k < intervals.size() ? &intervals[k] : nullptr;
      const TimeNs b = before ? before->exit : start;
      const TimeNs e = after ? after->entry : end;
      const auto& cnt = after ? after->entry_counters : trailing_counters;
      if (e <= b) {
        ++local.dropped_zero_gaps;
        if (std::any_of(cnt.begin(), cnt.end(), [](const auto& kv) { return kv.second != 0; })) {
          spdlog::warn("rank {}: counters on a zero-length gap at {} dropped", rank, b);
          ++local.dropped_counter_events;
          ++local.warnings;
        }
        continue;
      }
      Burst burst;
      burst.task_id = rank;
      burst.begin_time = b;
      burst.end_time = e;
      burst.duration = e - b;
      burst.counters = cnt;
      burst.before = context_of(before, eps, config.classifier);
      burst.after = context_of(after, eps, config.classifier);
      burst.seq_index = static_cast<int>(bursts.size());
      bursts.push_back(std::move(burst));
    }
  }
  if (stats) *stats = local;
  return compute_derived_features(ds, config.derived);
}

}  // namespace tracefuse
