#include "tracefuse/validation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include <fmt/format.h>

#include "tracefuse/burst_csv.hpp"
#include "tracefuse/fusion.hpp"

namespace tracefuse {

namespace {

void require_same_length(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument(fmt::format("vector length mismatch ({} vs {})", a.size(), b.size()));
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  require_same_length(x, y);
  if (x.size() < 2) throw std::invalid_argument("pearson needs at least two samples");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<std::optional<double>> relative_differences(std::span<const double> base,
                                                        std::span<const double> mean) {
  require_same_length(base, mean);
  std::vector<std::optional<double>> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i)
    if (base[i] > 0.0) out[i] = std::abs(base[i] - mean[i]) / base[i];
  return out;
}

std::optional<double> relative_difference(std::span<const double> base, std::span<const double> mean) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : relative_differences(base, mean))
    if (r) {
      sum += *r;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

double mean_absolute_error(std::span<const double> base, std::span<const double> mean) {
  require_same_length(base, mean);
  if (base.empty()) throw std::invalid_argument("mean_absolute_error of empty vectors");
  double sum = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) sum += std::abs(base[i] - mean[i]);
  return sum / static_cast<double>(base.size());
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] - values[lo]);
}

Fence outlier_fence(std::span<const double> scores) {
  if (scores.empty()) throw std::invalid_argument("outlier_fence of empty scores");
  const std::vector<double> v(scores.begin(), scores.end());
  const double q05 = quantile(v, 0.05);
  const double q95 = quantile(v, 0.95);
  Fence f;
  f.upper = q95 + 1.5 * (q95 - q05);
  f.kept.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    f.kept[i] = scores[i] <= f.upper;
    f.kept_count += f.kept[i];
  }
  return f;
}

std::optional<double> acceptance_rate(std::span<const double> rel_diffs, double cutoff) {
  if (rel_diffs.empty()) return std::nullopt;
  const auto below = std::count_if(rel_diffs.begin(), rel_diffs.end(), [&](double d) { return d < cutoff; });
  return 100.0 * static_cast<double>(below) / static_cast<double>(rel_diffs.size());
}

namespace {

std::optional<double> numeric(const Cell& c) {
  if (const auto* i = std::get_if<std::int64_t>(&c)) return static_cast<double>(*i);
  if (const auto* d = std::get_if<double>(&c)) return *d;
  return std::nullopt;
}

// Numeric features compared during validation, in report order.
std::vector<std::pair<std::string, Cell>> numeric_features(const Burst& b,
                                                           const std::vector<std::string>& counters) {
  std::vector<std::pair<std::string, Cell>> out;
  out.emplace_back("duration_ns", Cell{b.duration});
  for (auto& [name, cell] : burst_features(b, counters)) {
    if (std::holds_alternative<std::string>(cell) || name == "region_id") continue;
    out.emplace_back(std::move(name), std::move(cell));
  }
  return out;
}

MetricSummary summarise(std::span<const double> scores, bool fence_on) {
  MetricSummary m;
  if (scores.empty()) return m;
  std::vector<bool> kept(scores.size(), true);
  if (fence_on) {
    auto f = outlier_fence(scores);
    m.fence_upper = f.upper;
    kept = std::move(f.kept);
  } else {
    m.fence_upper = *std::max_element(scores.begin(), scores.end());
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (kept[i]) {
      sum += scores[i];
      ++m.kept;
    }
  m.dropped = scores.size() - m.kept;
  if (m.kept) m.value = sum / static_cast<double>(m.kept);
  return m;
}

}  // namespace

ValidationReport validate(const std::vector<ExecutionDataset>& executions, const MatchSet& matches,
                          const ValidationOptions& options) {
  if (executions.size() < 2) throw std::invalid_argument("validation needs at least two executions");
  const auto& first = executions.front();
  const std::set<std::string> names(first.counter_names.begin(), first.counter_names.end());
  for (const auto& e : executions) {
    const std::set<std::string> other(e.counter_names.begin(), e.counter_names.end());
    if (e.counter_set_name != first.counter_set_name || other != names)
      throw std::invalid_argument(fmt::format("counter sets differ: '{}' ({}) vs '{}' ({})", first.exec_id,
                                              first.counter_set_name, e.exec_id, e.counter_set_name));
  }

  ValidationReport report;
  report.base_exec = select_base(executions, matches);
  report.counter_set = first.counter_set_name;
  report.fence = options.fence;
  const ExecutionDataset* base = nullptr;
  std::vector<const ExecutionDataset*> others;
  for (const auto& e : executions) {
    report.executions.push_back(e.exec_id);
    if (e.exec_id == report.base_exec) base = &e;
    else others.push_back(&e);
  }

  struct Row {
    const MatchGroup* group;
    const Burst* base;
    std::vector<const Burst*> others;
  };
  std::vector<Row> rows;
  for (const auto& g : matches.groups) {
    if (g.members.size() != executions.size()) continue;
    Row r{&g, nullptr, {}};
    const auto& bref = g.members.at(base->exec_id);
    r.base = &base->at(bref.rank, bref.seq_index);
    for (const auto* o : others) {
      const auto& ref = g.members.at(o->exec_id);
      r.others.push_back(&o->at(ref.rank, ref.seq_index));
    }
    rows.push_back(std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.base->task_id != b.base->task_id ? a.base->task_id < b.base->task_id
                                              : a.base->begin_time < b.base->begin_time;
  });
  report.matched_rows = rows.size();

  std::vector<std::string> order;
  for (const auto& [name, cell] : numeric_features(Burst{}, first.counter_names)) order.push_back(name);

  // values[row][k] = (base, others...) value of feature k.
  auto extract = [&](const Burst& b) {
    std::vector<std::optional<double>> v;
    for (const auto& [name, cell] : numeric_features(b, first.counter_names)) v.push_back(numeric(cell));
    return v;
  };
  std::vector<std::vector<std::vector<std::optional<double>>>> table;
  table.reserve(rows.size());
  for (const auto& r : rows) {
    std::vector<std::vector<std::optional<double>>> per;
    per.push_back(extract(*r.base));
    for (const auto* b : r.others) per.push_back(extract(*b));
    table.push_back(std::move(per));
  }

  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& feature = order[k];
    FeatureComparison cmp;
    cmp.feature = feature;
    for (const auto* o : others) cmp.per_trace[o->exec_id];
    for (std::size_t ri = 0; ri < rows.size(); ++ri) {
      const auto& per = table[ri];
      if (!std::all_of(per.begin(), per.end(), [&](const auto& v) { return v[k].has_value(); })) continue;
      cmp.base.push_back(*per[0][k]);
      double s = 0.0;
      for (std::size_t j = 0; j < others.size(); ++j) {
        const double v = *per[j + 1][k];
        cmp.per_trace[others[j]->exec_id].push_back(v);
        s += v;
      }
      cmp.matched_mean.push_back(s / static_cast<double>(others.size()));
      cmp.burst_ids.push_back(rows[ri].group->burst_id);
      cmp.tasks.push_back(rows[ri].base->task_id);
    }

    FeatureReport fr;
    fr.feature = feature;
    fr.samples = cmp.base.size();
    for (std::size_t i = 0; i < fr.samples; ++i) fr.abs_scores.push_back(std::abs(cmp.base[i] - cmp.matched_mean[i]));
    if (fr.samples > 0) fr.rel_scores = relative_differences(cmp.base, cmp.matched_mean);
    std::vector<double> rel;
    for (const auto& r : fr.rel_scores)
      if (r) rel.push_back(*r);

    fr.mae = summarise(fr.abs_scores, options.fence);
    fr.rel_diff = summarise(rel, options.fence);
    fr.acceptance = acceptance_rate(rel, options.acceptance_cutoff);

    fr.kept.assign(fr.samples, true);
    if (options.fence && fr.samples > 0) fr.kept = outlier_fence(fr.abs_scores).kept;
    std::vector<double> kb;
    for (std::size_t i = 0; i < fr.samples; ++i)
      if (fr.kept[i]) kb.push_back(cmp.base[i]);
    double csum = 0.0;
    int cdefined = 0;
    for (const auto* o : others) {
      std::optional<double> c;
      if (kb.size() >= 2) {
        std::vector<double> kt;
        const auto& t = cmp.per_trace[o->exec_id];
        for (std::size_t i = 0; i < fr.samples; ++i)
          if (fr.kept[i]) kt.push_back(t[i]);
        c = pearson(kb, kt);
      }
      fr.correlation_per_trace[o->exec_id] = c;
      if (c) {
        csum += *c;
        ++cdefined;
      }
    }
    if (cdefined) fr.correlation = csum / cdefined;
    report.features.push_back(std::move(fr));
    report.comparisons.push_back(std::move(cmp));
  }
  return report;
}

namespace {

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  if (!v) return "n/a";
  return *v;
}

nlohmann::ordered_json metric_json(const MetricSummary& m) {
  return {{"value", opt_json(m.value)},
          {"fence_upper", m.fence_upper},
          {"samples_kept", m.kept},
          {"samples_dropped", m.dropped}};
}

std::string opt_text(const std::optional<double>& v, std::string_view spec) {
  return v ? fmt::format(fmt::runtime(spec), *v) : "n/a";
}

}  // namespace

nlohmann::ordered_json to_json(const ValidationReport& report) {
  nlohmann::ordered_json doc;
  doc["base_exec"] = report.base_exec;
  doc["executions"] = report.executions;
  doc["counter_set"] = report.counter_set;
  doc["matched_rows"] = report.matched_rows;
  doc["fence"] = report.fence;
  auto features = nlohmann::ordered_json::array();
  for (const auto& f : report.features) {
    nlohmann::ordered_json per_trace;
    for (const auto& [exec, c] : f.correlation_per_trace) per_trace[exec] = opt_json(c);
    features.push_back({{"feature", f.feature},
                        {"samples", f.samples},
                        {"correlation", opt_json(f.correlation)},
                        {"correlation_per_trace", per_trace},
                        {"rel_diff", metric_json(f.rel_diff)},
                        {"mae", metric_json(f.mae)},
                        {"acceptance_pct", opt_json(f.acceptance)}});
  }
  doc["features"] = std::move(features);
  return doc;
}

std::string render_table(const ValidationReport& report) {
  std::size_t width = 7;
  for (const auto& f : report.features) width = std::max(width, f.feature.size());
  std::string out = fmt::format("base {} vs {} matched rows ({} executions, counter set {})\n",
                                report.base_exec, report.matched_rows, report.executions.size(),
                                report.counter_set);
  out += fmt::format("{:<{}}  {:>11}  {:>14}  {:>9}  {:>10}\n", "Counter", width, "Correlation", "MAE",
                     "RelDiff", "<30% Diff");
  for (const auto& f : report.features) {
    out += fmt::format("{:<{}}  {:>11}  {:>14}  {:>9}  {:>10}\n", f.feature, width,
                       opt_text(f.correlation, "{:.3f}"), opt_text(f.mae.value, "{:.3f}"),
                       opt_text(f.rel_diff.value, "{:.4f}"), opt_text(f.acceptance, "{:.1f}%"));
  }
  return out;
}

std::string scores_csv(const ValidationReport& report, const FeatureReport& feature) {
  const FeatureComparison* cmp = nullptr;
  for (const auto& c : report.comparisons)
    if (c.feature == feature.feature) cmp = &c;
  std::string out = "row,task_id,burst_id,base,matched_mean,abs_diff,rel_diff,kept\n";
  if (!cmp) return out;
  for (std::size_t i = 0; i < feature.samples; ++i) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", i, cmp->tasks[i], cmp->burst_ids[i],
                       format_double(cmp->base[i]), format_double(cmp->matched_mean[i]),
                       format_double(feature.abs_scores[i]),
                       feature.rel_scores[i] ? format_double(*feature.rel_scores[i]) : std::string{},
                       feature.kept[i] ? 1 : 0);
  }
  return out;
}

}  // namespace tracefuse
