// Cross-execution burst correspondences and their JSON form.
#pragma once

#include <compare>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "tracefuse/burst.hpp"

namespace tracefuse {

struct BurstRef {
  Rank rank{0};
  int seq_index{0};

  auto operator<=>(const BurstRef&) const = default;
};

enum class MatchStage { Direct, Pattern, Structural };

std::string_view to_string(MatchStage s);
MatchStage match_stage_from(std::string_view s);

/// The (call before, call after) pair around a compute burst.
struct Pattern {
  std::string before;
  std::string after;

  static Pattern of(const Burst& b) { return {b.before.call.name, b.after.call.name}; }
  /// Canonical "BEFORE→AFTER" form with upper-cased call names.
  std::string label() const;

  bool operator==(const Pattern& o) const { return label() == o.label(); }
  std::strong_ordering operator<=>(const Pattern& o) const { return label() <=> o.label(); }
};

struct MatchGroup {
  std::string burst_id;
  Rank rank{0};
  MatchStage stage{MatchStage::Direct};
  std::optional<double> score;
  std::map<std::string, BurstRef> members;  // exec_id -> burst

  bool operator==(const MatchGroup&) const = default;
};

struct MatchSet {
  std::vector<std::string> executions;
  std::vector<MatchGroup> groups;
  std::map<std::string, std::vector<BurstRef>> unmatched;
  /// Free-form statistics; written under "statistics" when non-null.
  nlohmann::ordered_json statistics;

  std::size_t unmatched_count(const std::string& exec_id) const;
};

nlohmann::ordered_json to_json(const MatchSet& set);
MatchSet match_set_from_json(const nlohmann::ordered_json& doc);

/// Serialises with a fixed indentation; identical sets give identical text.
std::string dump_match_set(const MatchSet& set);

}  // namespace tracefuse
