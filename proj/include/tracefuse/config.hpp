// Pipeline settings shared by every command, stored as JSON.
#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tracefuse/burst.hpp"
#include "tracefuse/prv.hpp"
#include "tracefuse/stage2.hpp"
#include "tracefuse/synthgen.hpp"

namespace tracefuse {

struct PipelineConfig {
  MpiEventTypes mpi_types;
  std::vector<std::string> collectives{CallClassifier::default_collectives()};
  SimilarityWeights weights;
  bool fence{true};
  std::string prefix_scheme{"{exec}_"};
  EventType new_type_base{42100000};
  std::string log_level{"info"};
  unsigned threads{0};  // 0: one per hardware thread

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  CallClassifier classifier() const { return CallClassifier(collectives); }
  unsigned worker_count() const;
};

/// Keys missing from `doc` keep their defaults; unknown keys are rejected.
PipelineConfig pipeline_config_from_json(const nlohmann::json& doc);
nlohmann::ordered_json to_json(const PipelineConfig& config);

/// Flag parsers; each throws ConfigError on malformed text.
SimilarityWeights parse_weights(const std::string& text, const SimilarityWeights& keep);
std::vector<std::string> parse_name_list(const std::string& text);
MpiEventTypes parse_mpi_types(const std::string& text);
bool parse_switch(const std::string& text);

}  // namespace tracefuse
