// Matching-quality metrics over executions recorded with the same counter set.
#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tracefuse/burst.hpp"
#include "tracefuse/match_set.hpp"

namespace tracefuse {

/// Sample Pearson coefficient; nullopt when either vector is constant.
/// Throws std::invalid_argument on length mismatch or fewer than 2 samples.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

/// Per-row |b - mu| / b over rows with b > 0 (nullopt elsewhere).
std::vector<std::optional<double>> relative_differences(std::span<const double> base,
                                                        std::span<const double> mean);

/// Mean of |b - mu| / b over b > 0; nullopt when no row has b > 0.
std::optional<double> relative_difference(std::span<const double> base, std::span<const double> mean);

/// Mean |b - mu| over all rows. Throws on empty or mismatched input.
double mean_absolute_error(std::span<const double> base, std::span<const double> mean);

/// Linear interpolation between order statistics (h = (n-1)p).
double quantile(std::vector<double> values, double p);

struct Fence {
  double upper{0};
  std::vector<bool> kept;  // parallel to the input scores
  std::size_t kept_count{0};
};

/// One-sided fence U = q95 + 1.5 (q95 - q05); scores <= U are kept.
Fence outlier_fence(std::span<const double> scores);

/// Percentage of differences strictly below `cutoff`; nullopt when empty.
std::optional<double> acceptance_rate(std::span<const double> rel_diffs, double cutoff = 0.30);

struct FeatureComparison {
  std::string feature;
  std::vector<double> base;
  std::vector<double> matched_mean;
  std::map<std::string, std::vector<double>> per_trace;
  std::vector<std::string> burst_ids;
  std::vector<Rank> tasks;
};

struct MetricSummary {
  std::optional<double> value;
  double fence_upper{0};
  std::size_t kept{0};
  std::size_t dropped{0};
};

struct FeatureReport {
  std::string feature;
  std::size_t samples{0};
  std::optional<double> correlation;                           // mean over traces
  std::map<std::string, std::optional<double>> correlation_per_trace;
  MetricSummary rel_diff;
  MetricSummary mae;
  std::optional<double> acceptance;  // percent
  // Per-burst dumps.
  std::vector<double> abs_scores;
  std::vector<std::optional<double>> rel_scores;
  std::vector<bool> kept;
};

struct ValidationReport {
  std::string base_exec;
  std::vector<std::string> executions;
  std::string counter_set;
  std::size_t matched_rows{0};
  bool fence{true};
  std::vector<FeatureReport> features;
  std::vector<FeatureComparison> comparisons;
};

struct ValidationOptions {
  bool fence{true};
  double acceptance_cutoff{0.30};
};

/// Compares every common numeric feature across the groups spanning all
/// executions. Throws std::invalid_argument if counter sets differ.
ValidationReport validate(const std::vector<ExecutionDataset>& executions, const MatchSet& matches,
                          const ValidationOptions& options = {});

nlohmann::ordered_json to_json(const ValidationReport& report);
/// Plain-text table: Counter / Correlation / MAE / RelDiff / <30 % Diff.
std::string render_table(const ValidationReport& report);
/// Per-burst scores of one feature, for plotting.
std::string scores_csv(const ValidationReport& report, const FeatureReport& feature);

}  // namespace tracefuse
