#include "tracefuse/burst_csv.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

#include "tracefuse/prv.hpp"

namespace tracefuse {

std::string format_double(double v) { return fmt::format("{}", v); }

namespace {

template <typename T>
std::string cell(const std::optional<T>& v) {
  if (!v) return {};
  if constexpr (std::is_floating_point_v<T>) return format_double(*v);
  else return fmt::format("{}", *v);
}

void check_cell(const std::string& s) {
  if (s.find_first_of(",\n\r") != std::string::npos)
    throw std::invalid_argument(fmt::format("value '{}' cannot be stored in a CSV cell", s));
}

std::vector<std::string_view> split_row(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto p = line.find(',', start);
    out.push_back(line.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

template <typename T>
T parse_num(std::string_view s, std::string_view column, std::size_t lineno) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ParseError(fmt::format("bad value '{}' in column {}", s, column), lineno);
  return v;
}

template <typename T>
std::optional<T> parse_opt(std::string_view s, std::string_view column, std::size_t lineno) {
  if (s.empty()) return std::nullopt;
  return parse_num<T>(s, column, lineno);
}

}  // namespace

std::string write_burst_csv(const ExecutionDataset& dataset) {
  validate_dataset(dataset);
  std::string out;
  for (std::size_t i = 0; i < kBurstColumns.size(); ++i) {
    if (i) out += ',';
    out += kBurstColumns[i];
  }
  for (const auto& c : dataset.counter_names) {
    check_cell(c);
    out += ',';
    out += c;
  }
  out += '\n';
  check_cell(dataset.exec_id);
  check_cell(dataset.counter_set_name);
  for (const auto& [rank, bursts] : dataset.ranks) {
    for (const auto& b : bursts) {
      std::vector<std::string> row = {
          dataset.exec_id,
          dataset.counter_set_name,
          fmt::format("{}", b.task_id),
          fmt::format("{}", b.seq_index),
          fmt::format("{}", b.begin_time),
          fmt::format("{}", b.end_time),
          fmt::format("{}", b.duration),
          format_double(b.rel_position),
          cell(b.ipc),
          cell(b.frequency),
          cell(b.concurrency),
          b.before.call.name,
          b.after.call.name,
          cell(b.before.partner),
          cell(b.after.partner),
          cell(b.before.size),
          cell(b.after.size),
          cell(b.region_id),
          b.burst_id.value_or("")};
      for (const auto& c : dataset.counter_names) {
        auto it = b.counters.find(c);
        row.push_back(it == b.counters.end() ? std::string{} : fmt::format("{}", it->second));
      }
      for (std::size_t i = 0; i < row.size(); ++i) {
        check_cell(row[i]);
        if (i) out += ',';
        out += row[i];
      }
      out += '\n';
    }
  }
  return out;
}

ExecutionDataset read_burst_csv(std::string_view text, const CallClassifier& classifier) {
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, raw)) {
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (raw.empty()) continue;
    for (auto f : split_row(raw)) header.emplace_back(f);
    break;
  }
  if (header.empty()) throw ParseError("missing CSV header row", lineno);

  std::map<std::string_view, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) index.emplace(header[i], i);
  std::array<std::size_t, kBurstColumns.size()> col{};
  for (std::size_t i = 0; i < kBurstColumns.size(); ++i) {
    auto it = index.find(kBurstColumns[i]);
    if (it == index.end())
      throw ParseError(fmt::format("missing mandatory column '{}'", kBurstColumns[i]), lineno);
    col[i] = it->second;
  }
  const std::set<std::string_view> fixed(kBurstColumns.begin(), kBurstColumns.end());
  std::vector<std::pair<std::string, std::size_t>> counter_cols;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (!fixed.contains(header[i])) counter_cols.emplace_back(header[i], i);

  ExecutionDataset ds;
  for (const auto& [name, i] : counter_cols) ds.counter_names.push_back(name);
  std::set<std::pair<Rank, int>> seen;
  bool first = true;
  while (std::getline(in, raw)) {
    ++lineno;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    if (raw.empty()) continue;
    const auto f = split_row(raw);
    if (f.size() != header.size())
      throw ParseError(fmt::format("expected {} cells, found {}", header.size(), f.size()), lineno);
    auto get = [&](std::size_t k) { return f[col[k]]; };
    if (first) {
      ds.exec_id = std::string(get(0));
      ds.counter_set_name = std::string(get(1));
      first = false;
    }
    Burst b;
    b.task_id = parse_num<Rank>(get(2), kBurstColumns[2], lineno);
    b.seq_index = parse_num<int>(get(3), kBurstColumns[3], lineno);
    b.begin_time = parse_num<TimeNs>(get(4), kBurstColumns[4], lineno);
    b.end_time = parse_num<TimeNs>(get(5), kBurstColumns[5], lineno);
    b.duration = parse_num<TimeNs>(get(6), kBurstColumns[6], lineno);
    b.rel_position = parse_num<double>(get(7), kBurstColumns[7], lineno);
    b.ipc = parse_opt<double>(get(8), kBurstColumns[8], lineno);
    b.frequency = parse_opt<double>(get(9), kBurstColumns[9], lineno);
    b.concurrency = parse_opt<double>(get(10), kBurstColumns[10], lineno);
    b.before.call = classifier.make(get(11));
    b.after.call = classifier.make(get(12));
    b.before.partner = parse_opt<Rank>(get(13), kBurstColumns[13], lineno);
    b.after.partner = parse_opt<Rank>(get(14), kBurstColumns[14], lineno);
    b.before.size = parse_opt<std::int64_t>(get(15), kBurstColumns[15], lineno);
    b.after.size = parse_opt<std::int64_t>(get(16), kBurstColumns[16], lineno);
    b.region_id = parse_opt<int>(get(17), kBurstColumns[17], lineno);
    if (!get(18).empty()) b.burst_id = std::string(get(18));
    for (const auto& [name, i] : counter_cols)
      if (!f[i].empty()) b.counters[name] = parse_num<std::int64_t>(f[i], name, lineno);
    if (b.task_id < 0) throw ParseError("negative task_id", lineno);
    if (!seen.emplace(b.task_id, b.seq_index).second)
      throw ParseError(fmt::format("duplicate burst (task {}, seq {})", b.task_id, b.seq_index), lineno);
    ds.ranks[b.task_id].push_back(std::move(b));
  }
  for (auto& [rank, bursts] : ds.ranks)
    std::stable_sort(bursts.begin(), bursts.end(), [](const Burst& a, const Burst& b) {
      return a.begin_time != b.begin_time ? a.begin_time < b.begin_time : a.seq_index < b.seq_index;
    });
  try {
    validate_dataset(ds);
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), 0);
  }
  return ds;
}

}  // namespace tracefuse
