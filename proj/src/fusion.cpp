#include "tracefuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "tracefuse/burst_csv.hpp"

namespace tracefuse {

bool equivalent(const Cell& a, const Cell& b) {
  if (a.index() != b.index()) return false;
  if (const auto* x = std::get_if<double>(&a)) {
    const double y = std::get<double>(b);
    if (*x == y) return true;
    return std::abs(*x - y) <= 1e-9 * std::max(std::abs(*x), std::abs(y));
  }
  return a == b;
}

std::string format_cell(const Cell& c) {
  return std::visit(
      [](const auto& v) -> std::string {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) return {};
        else if constexpr (std::is_same_v<T, double>) return format_double(v);
        else if constexpr (std::is_same_v<T, std::string>) return v;
        else return fmt::format("{}", v);
      },
      c);
}

std::string_view to_string(MergeRule r) {
  switch (r) {
    case MergeRule::Temporal: return "temporal";
    case MergeRule::Identical: return "identical";
    case MergeRule::DivergentBase: return "divergent-base";
    case MergeRule::Divergent: return "divergent";
    case MergeRule::Unique: return "unique";
  }
  return "temporal";
}

const FusedColumn* FusedDataset::column(std::string_view name) const {
  for (const auto& c : columns)
    if (c.name == name) return &c;
  return nullptr;
}

std::string select_base(const std::vector<ExecutionDataset>& executions, const MatchSet& matches) {
  if (executions.empty()) throw std::invalid_argument("select_base: no executions");
  const ExecutionDataset* best = nullptr;
  for (const auto& e : executions) {
    if (!best) {
      best = &e;
      continue;
    }
    // Compare unmatched/total by cross-multiplying; exact while counts stay below 2^32.
    const auto lhs = static_cast<long double>(matches.unmatched_count(e.exec_id)) * best->burst_count();
    const auto rhs = static_cast<long double>(matches.unmatched_count(best->exec_id)) * e.burst_count();
    if (lhs < rhs || (lhs == rhs && e.exec_id < best->exec_id)) best = &e;
  }
  return best->exec_id;
}

namespace {

template <typename T>
Cell opt_cell(const std::optional<T>& v) {
  if (!v) return std::monostate{};
  if constexpr (std::is_floating_point_v<T>) return static_cast<double>(*v);
  else return static_cast<std::int64_t>(*v);
}

}  // namespace

std::vector<std::pair<std::string, Cell>> burst_features(const Burst& b,
                                                         const std::vector<std::string>& counter_names) {
  std::vector<std::pair<std::string, Cell>> f = {
      {"rel_position", b.rel_position},
      {"ipc", opt_cell(b.ipc)},
      {"frequency", opt_cell(b.frequency)},
      {"concurrency", opt_cell(b.concurrency)},
      {"mpi_call_before", b.before.call.name},
      {"mpi_call_after", b.after.call.name},
      {"partner_before", opt_cell(b.before.partner)},
      {"partner_after", opt_cell(b.after.partner)},
      {"size_before", opt_cell(b.before.size)},
      {"size_after", opt_cell(b.after.size)},
      {"region_id", opt_cell(b.region_id)},
  };
  for (const auto& name : counter_names) {
    auto it = b.counters.find(name);
    f.emplace_back(name, it == b.counters.end() ? Cell{} : Cell{it->second});
  }
  return f;
}

std::string prefixed_name(std::string_view scheme, std::string_view exec_id, std::string_view column) {
  std::string prefix(scheme);
  for (auto pos = prefix.find("{exec}"); pos != std::string::npos; pos = prefix.find("{exec}", pos + exec_id.size()))
    prefix.replace(pos, 6, exec_id);
  return prefix + std::string(column);
}

FusedDataset fuse(const std::vector<ExecutionDataset>& executions, const MatchSet& matches,
                  const std::string& base, const std::string& prefix_scheme) {
  // Base first, then the remaining executions in their given order.
  std::vector<const ExecutionDataset*> order;
  for (const auto& e : executions)
    if (e.exec_id == base) order.push_back(&e);
  if (order.empty()) throw std::invalid_argument(fmt::format("base execution '{}' not found", base));
  for (const auto& e : executions)
    if (e.exec_id != base) order.push_back(&e);

  FusedDataset out;
  out.base_exec = base;
  for (const auto& e : executions) out.executions.push_back(e.exec_id);

  struct Row {
    const MatchGroup* group;
    std::vector<const Burst*> bursts;  // parallel to `order`
  };
  std::vector<Row> rows;
  for (const auto& g : matches.groups) {
    if (g.members.size() != executions.size()) {
      out.partial_groups.push_back(g);
      continue;
    }
    Row row{&g, {}};
    for (const auto* e : order) {
      auto it = g.members.find(e->exec_id);
      if (it == g.members.end()) {
        out.partial_groups.push_back(g);
        row.bursts.clear();
        break;
      }
      try {
        row.bursts.push_back(&e->at(it->second.rank, it->second.seq_index));
      } catch (const std::out_of_range&) {
        throw std::runtime_error(fmt::format("match group {} references a missing burst in {}", g.burst_id,
                                             e->exec_id));
      }
    }
    if (!row.bursts.empty()) rows.push_back(std::move(row));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    const auto& x = *a.bursts.front();
    const auto& y = *b.bursts.front();
    return x.task_id != y.task_id ? x.task_id < y.task_id : x.begin_time < y.begin_time;
  });
  if (rows.empty()) spdlog::warn("no match group spans every execution; fused table is empty");

  auto temporal = [&](std::string name, auto get) {
    FusedColumn c{std::move(name), {base, {}, MergeRule::Temporal}, false, {}};
    c.source.column = c.name;
    for (const auto& r : rows) c.values.push_back(get(r));
    out.columns.push_back(std::move(c));
  };
  temporal("task_id", [](const Row& r) { return Cell{std::int64_t{r.bursts[0]->task_id}}; });
  temporal("seq_index", [](const Row& r) { return Cell{std::int64_t{r.bursts[0]->seq_index}}; });
  temporal("begin_time_ns", [](const Row& r) { return Cell{r.bursts[0]->begin_time}; });
  temporal("end_time_ns", [](const Row& r) { return Cell{r.bursts[0]->end_time}; });
  temporal("duration_ns", [](const Row& r) { return Cell{r.bursts[0]->duration}; });
  temporal("burst_id", [](const Row& r) { return Cell{r.group->burst_id}; });

  // Feature matrix: per execution, per feature name, the column of values.
  std::vector<std::string> feature_order;
  std::set<std::string> counter_columns;
  std::vector<std::map<std::string, std::vector<Cell>>> values(order.size());
  std::vector<std::set<std::string>> present(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& names = order[i]->counter_names;
    counter_columns.insert(names.begin(), names.end());
    for (const auto& r : rows) {
      for (auto& [name, cell] : burst_features(*r.bursts[i], names)) {
        if (std::find(feature_order.begin(), feature_order.end(), name) == feature_order.end())
          feature_order.push_back(name);
        if (!std::holds_alternative<std::monostate>(cell)) present[i].insert(name);
        values[i][name].push_back(std::move(cell));
      }
    }
    // Declared counters count as present even when every row lacks them.
    present[i].insert(names.begin(), names.end());
    if (rows.empty())
      for (auto& [name, cell] : burst_features(Burst{}, names))
        if (std::find(feature_order.begin(), feature_order.end(), name) == feature_order.end())
          feature_order.push_back(name);
  }

  auto same = [](const std::vector<Cell>& a, const std::vector<Cell>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k)
      if (!equivalent(a[k], b[k])) return false;
    return true;
  };
  auto column_of = [&](std::size_t i, const std::string& name) {
    auto it = values[i].find(name);
    return it == values[i].end() ? std::vector<Cell>(rows.size()) : it->second;
  };

  for (const auto& name : feature_order) {
    std::vector<std::size_t> holders;
    for (std::size_t i = 0; i < order.size(); ++i)
      if (present[i].contains(name)) holders.push_back(i);
    if (holders.empty()) continue;
    const bool counter = counter_columns.contains(name);
    const auto anchor = holders.front();
    const auto& anchor_id = order[anchor]->exec_id;
    const auto anchor_values = column_of(anchor, name);

    if (holders.size() == 1) {
      const auto col_name = anchor == 0 ? name : prefixed_name(prefix_scheme, anchor_id, name);
      out.columns.push_back({col_name, {anchor_id, name, MergeRule::Unique}, counter, anchor_values});
      continue;
    }
    std::vector<std::size_t> divergent;
    for (std::size_t k = 1; k < holders.size(); ++k)
      if (!same(anchor_values, column_of(holders[k], name))) divergent.push_back(holders[k]);
    const auto rule = divergent.empty() ? MergeRule::Identical : MergeRule::DivergentBase;
    out.columns.push_back({name, {anchor_id, name, rule}, counter, anchor_values});
    for (auto i : divergent) {
      const auto& id = order[i]->exec_id;
      out.columns.push_back(
          {prefixed_name(prefix_scheme, id, name), {id, name, MergeRule::Divergent}, counter, column_of(i, name)});
    }
  }

  std::set<std::string> names;
  for (const auto& c : out.columns)
    if (!names.insert(c.name).second)
      throw std::runtime_error(fmt::format("fused column name clash on '{}'", c.name));
  return out;
}

std::string write_fused_csv(const FusedDataset& fused) {
  std::string out;
  for (std::size_t i = 0; i < fused.columns.size(); ++i) {
    if (i) out += ',';
    out += fused.columns[i].name;
  }
  out += '\n';
  for (std::size_t r = 0; r < fused.row_count(); ++r) {
    for (std::size_t i = 0; i < fused.columns.size(); ++i) {
      if (i) out += ',';
      out += format_cell(fused.columns[i].values[r]);
    }
    out += '\n';
  }
  return out;
}

nlohmann::ordered_json fused_manifest(const FusedDataset& fused) {
  nlohmann::ordered_json doc;
  doc["base_exec"] = fused.base_exec;
  doc["executions"] = fused.executions;
  doc["rows"] = fused.row_count();
  auto cols = nlohmann::ordered_json::array();
  for (const auto& c : fused.columns)
    cols.push_back({{"column", c.name},
                    {"source_exec", c.source.exec_id},
                    {"source_column", c.source.column},
                    {"rule", to_string(c.source.rule)},
                    {"counter", c.is_counter}});
  doc["columns"] = std::move(cols);
  return doc;
}

nlohmann::ordered_json partial_report(const FusedDataset& fused) {
  MatchSet partial;
  partial.executions = fused.executions;
  partial.groups = fused.partial_groups;
  auto doc = to_json(partial);
  doc.erase("unmatched");
  return doc;
}

EmittedTrace emit_prv(const FusedDataset& fused, const PrvHeader& base_header, const PcfDictionary& base_pcf,
                      const EmitOptions& options) {
  std::vector<const FusedColumn*> counters;
  for (const auto& c : fused.columns)
    if (c.is_counter) counters.push_back(&c);

  PcfDictionary pcf = base_pcf;
  std::vector<EventType> types;
  std::vector<EventType> collisions;
  EventType next = options.new_type_base;
  for (const auto* c : counters) {
    if (auto t = base_pcf.counter_type(c->name)) {
      types.push_back(*t);
      continue;
    }
    const EventType t = next++;
    if (base_pcf.event_labels.contains(t)) collisions.push_back(t);
    pcf.event_labels[t] = fmt::format("{} (merged from {})", c->name, c->source.exec_id);
    types.push_back(t);
  }
  if (!collisions.empty()) {
    std::string list;
    for (auto t : collisions) list += fmt::format("{}{}", list.empty() ? "" : ", ", t);
    throw std::runtime_error(fmt::format("new event types collide with the base trace: {}", list));
  }

  const auto* task = fused.column("task_id");
  const auto* end = fused.column("end_time_ns");
  struct Line {
    TimeNs time;
    Rank task;
    std::string text;
  };
  std::map<std::pair<Rank, TimeNs>, std::string> row_counters;
  PrvHeader header = base_header;
  for (std::size_t r = 0; r < fused.row_count(); ++r) {
    const auto rank = static_cast<Rank>(std::get<std::int64_t>(task->values[r]));
    const auto time = std::get<std::int64_t>(end->values[r]);
    std::string text;
    for (std::size_t k = 0; k < counters.size(); ++k) {
      const auto& v = counters[k]->values[r];
      if (const auto* x = std::get_if<std::int64_t>(&v)) text += fmt::format(":{}:{}", types[k], *x);
    }
    header.total_time = std::max(header.total_time, time);
    header.rank_count = std::max(header.rank_count, rank + 1);
    if (!text.empty()) row_counters[{rank, time}] += text;
  }

  const auto record = [](Rank rank, TimeNs time) { return fmt::format("2:{}:1:{}:1:{}", rank + 1, rank + 1, time); };
  std::vector<Line> lines;
  if (options.pass_through) {
    for (const auto& events : options.pass_through->events)
      for (const auto& ev : events) {
        std::string text;
        for (const auto& [type, value] : ev.entries)
          if (options.mpi_types.contains(type) || type == kApplicationEventType)
            text += fmt::format(":{}:{}", type, value);
        if (auto it = row_counters.find({ev.task, ev.time}); it != row_counters.end()) {
          text += it->second;
          row_counters.erase(it);
        }
        if (text.empty()) continue;
        header.total_time = std::max(header.total_time, ev.time);
        header.rank_count = std::max(header.rank_count, ev.task + 1);
        lines.push_back({ev.time, ev.task, record(ev.task, ev.time) + text});
      }
    for (const auto& c : options.pass_through->comms)
      lines.push_back({std::min(c.send_time, c.recv_time), std::min(c.sender_task, c.receiver_task), comm_record_line(c)});
  }
  for (const auto& [key, text] : row_counters) lines.push_back({key.second, key.first, record(key.first, key.second) + text});
  std::stable_sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
    return a.time != b.time ? a.time < b.time : a.task < b.task;
  });
  EmittedTrace out;
  out.prv = prv_header_line(header) + "\n";
  for (const auto& l : lines) out.prv += l.text + "\n";
  out.pcf = write_pcf(pcf);
  return out;
}

std::map<std::pair<Rank, TimeNs>, std::map<std::string, std::int64_t>> read_emitted_counters(
    const PrvTrace& trace, const PcfDictionary& pcf, const MpiEventTypes& mpi) {
  std::map<std::pair<Rank, TimeNs>, std::map<std::string, std::int64_t>> out;
  for (const auto& events : trace.events)
    for (const auto& ev : events)
      for (const auto& [type, value] : ev.entries) {
        if (mpi.contains(type) || type == kApplicationEventType) continue;
        auto it = pcf.event_labels.find(type);
        if (it == pcf.event_labels.end()) continue;
        const auto name = it->second.substr(0, it->second.find_first_of(" \t("));
        out[{ev.task, ev.time}][name] = value;
      }
  return out;
}

}  // namespace tracefuse
