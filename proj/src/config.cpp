#include "tracefuse/config.hpp"

#include <algorithm>
#include <charconv>
#include <set>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace tracefuse {

namespace {

const std::set<std::string> kKeys{"mpi_event_types", "collectives",   "weights",   "threshold", "fence",
                                  "prefix_scheme",   "new_type_base", "log_level", "threads"};

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    std::string item = text.substr(start, pos == std::string::npos ? std::string::npos : pos - start);
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string{} : item.substr(b, e - b + 1));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
T parse_number(const std::string& s, const char* what) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || s.empty())
    throw ConfigError(fmt::format("{}: '{}' is not a number", what, s));
  return v;
}

}  // namespace

void PipelineConfig::validate() const {
  try {
    weights.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const std::set<EventType> ids{mpi_types.point_to_point, mpi_types.collective, mpi_types.other};
  if (ids.size() != 3) throw ConfigError("the three MPI event type ids must differ");
  if (collectives.empty()) throw ConfigError("at least one collective name is required");
  for (const auto& c : collectives)
    if (c.empty()) throw ConfigError("empty collective name");
  if (prefix_scheme.find("{exec}") == std::string::npos)
    throw ConfigError("prefix_scheme must contain {exec}");
  if (new_type_base <= 0) throw ConfigError("new_type_base must be positive");
  if (spdlog::level::from_str(log_level) == spdlog::level::off && log_level != "off")
    throw ConfigError(fmt::format("unknown log level '{}'", log_level));
}

unsigned PipelineConfig::worker_count() const {
  return threads ? threads : std::max(1u, std::thread::hardware_concurrency());
}

PipelineConfig pipeline_config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [k, v] : doc.items())
    if (!kKeys.contains(k)) throw ConfigError(fmt::format("unknown config key '{}'", k));
  PipelineConfig c;
  try {
    if (doc.contains("mpi_event_types")) {
      const auto& m = doc.at("mpi_event_types");
      c.mpi_types.point_to_point = m.value("point_to_point", c.mpi_types.point_to_point);
      c.mpi_types.collective = m.value("collective", c.mpi_types.collective);
      c.mpi_types.other = m.value("other", c.mpi_types.other);
    }
    c.collectives = doc.value("collectives", c.collectives);
    if (doc.contains("weights")) {
      const auto& w = doc.at("weights");
      c.weights.temporal = w.value("temporal", c.weights.temporal);
      c.weights.size = w.value("size", c.weights.size);
      c.weights.partner = w.value("partner", c.weights.partner);
    }
    c.weights.threshold = doc.value("threshold", c.weights.threshold);
    c.fence = doc.value("fence", c.fence);
    c.prefix_scheme = doc.value("prefix_scheme", c.prefix_scheme);
    c.new_type_base = doc.value("new_type_base", c.new_type_base);
    c.log_level = doc.value("log_level", c.log_level);
    c.threads = doc.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("invalid config: {}", e.what()));
  }
  c.validate();
  return c;
}

nlohmann::ordered_json to_json(const PipelineConfig& c) {
  nlohmann::ordered_json j;
  j["mpi_event_types"] = {{"point_to_point", c.mpi_types.point_to_point},
                          {"collective", c.mpi_types.collective},
                          {"other", c.mpi_types.other}};
  j["collectives"] = c.collectives;
  j["weights"] = {{"temporal", c.weights.temporal}, {"size", c.weights.size}, {"partner", c.weights.partner}};
  j["threshold"] = c.weights.threshold;
  j["fence"] = c.fence;
  j["prefix_scheme"] = c.prefix_scheme;
  j["new_type_base"] = c.new_type_base;
  j["log_level"] = c.log_level;
  j["threads"] = c.threads;
  return j;
}

SimilarityWeights parse_weights(const std::string& text, const SimilarityWeights& keep) {
  const auto parts = split(text, ',');
  if (parts.size() != 3) throw ConfigError(fmt::format("--weights expects t,s,p; got '{}'", text));
  SimilarityWeights w = keep;
  w.temporal = parse_number<double>(parts[0], "--weights");
  w.size = parse_number<double>(parts[1], "--weights");
  w.partner = parse_number<double>(parts[2], "--weights");
  return w;
}

std::vector<std::string> parse_name_list(const std::string& text) {
  auto names = split(text, ',');
  if (std::any_of(names.begin(), names.end(), [](const auto& n) { return n.empty(); }))
    throw ConfigError(fmt::format("empty name in list '{}'", text));
  return names;
}

MpiEventTypes parse_mpi_types(const std::string& text) {
  const auto parts = split(text, ',');
  if (parts.size() != 3) throw ConfigError(fmt::format("--mpi-types expects three ids; got '{}'", text));
  return {parse_number<EventType>(parts[0], "--mpi-types"), parse_number<EventType>(parts[1], "--mpi-types"),
          parse_number<EventType>(parts[2], "--mpi-types")};
}

bool parse_switch(const std::string& text) {
  if (text == "on") return true;
  if (text == "off") return false;
  throw ConfigError(fmt::format("expected on or off, got '{}'", text));
}

}  // namespace tracefuse
