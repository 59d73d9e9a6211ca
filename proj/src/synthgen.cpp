#include "tracefuse/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "tracefuse/parallel.hpp"

namespace tracefuse {

namespace {

// Extrae numbers PAPI presets as 42000000 + their index in PAPI's preset table.
constexpr std::array<std::pair<std::string_view, int>, 15> kPapiPresets{{
    {"PAPI_L1_DCM", 0},
    {"PAPI_L2_DCM", 2},
    {"PAPI_L3_TCM", 8},
    {"PAPI_TOT_INS", 50},
    {"PAPI_FP_INS", 52},
    {"PAPI_LD_INS", 53},
    {"PAPI_SR_INS", 54},
    {"PAPI_BR_INS", 55},
    {"PAPI_VEC_INS", 56},
    {"PAPI_TOT_CYC", 59},
    {"PAPI_FP_OPS", 102},
    {"PAPI_SP_OPS", 103},
    {"PAPI_DP_OPS", 104},
    {"PAPI_VEC_SP", 105},
    {"PAPI_VEC_DP", 106},
}};

bool is_cache_counter(std::string_view name) {
  return name.ends_with("_DCM") || name.ends_with("_TCM") || name.ends_with("_ICM");
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

enum Stream : std::uint64_t { kLogical = 1, kDecision, kShuffle, kBurstNoise, kCallNoise, kExtra };

std::uint64_t stream_seed(std::uint64_t seed, Rank rank, std::size_t exec, Stream s) {
  std::uint64_t h = splitmix(seed);
  h = splitmix(h ^ static_cast<std::uint64_t>(rank));
  h = splitmix(h ^ static_cast<std::uint64_t>(exec));
  return splitmix(h ^ static_cast<std::uint64_t>(s));
}

// Uniform and normal draws are derived from raw engine output by hand so the
// same seed gives the same numbers with every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  std::size_t below(std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(uniform() * n)); }

 private:
  std::mt19937_64 engine_;
};

struct LogicalBurst {
  double duration{0};
  std::vector<double> counters;  // per counter model
};

struct LogicalCall {
  int phase{0};
  int call{0};
  double duration{0};
};

struct LogicalRank {
  std::vector<LogicalBurst> bursts;  // bursts[k + 1] follows calls[k]
  std::vector<LogicalCall> calls;
  std::vector<std::vector<double>> slot_time;                  // [phase][call]
  std::vector<std::vector<std::vector<double>>> slot_counter;  // [phase][call][model]
};

// Call inserted before a collective by extra_burst_rate.
constexpr std::string_view kExtraCall = "MPI_Iprobe";

struct ObservedItem {
  int phase{0};
  int call{0};
  std::optional<std::size_t> logical_call;   // nullopt for an inserted probe
  std::optional<std::size_t> logical_burst;  // burst following the call
};

struct Resolved {
  std::vector<CounterModel> models;
  std::vector<std::vector<std::string>> exec_counters;  // ordered by event type
  std::vector<bool> eligible;                           // per phase: drop allowed
  std::vector<bool> async;                              // per phase: drift allowed
  std::vector<std::vector<bool>> collective;            // per phase and call
};

std::vector<std::string> ordered_counters(std::vector<std::string> names) {
  std::stable_sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
    const auto ta = papi_event_type(a);
    const auto tb = papi_event_type(b);
    if (ta && tb) return *ta < *tb;
    if (ta || tb) return ta.has_value();
    return a < b;
  });
  return names;
}

Resolved resolve(const SynthConfig& config) {
  Resolved r;
  r.models = default_counter_models();
  for (const auto& m : config.counter_models) {
    auto it = std::find_if(r.models.begin(), r.models.end(), [&](const auto& x) { return x.name == m.name; });
    if (it != r.models.end())
      *it = m;
    else
      r.models.push_back(m);
  }
  for (const auto& set_name : config.executions) {
    const std::vector<std::string>* names = nullptr;
    if (auto it = config.counter_sets.find(set_name); it != config.counter_sets.end())
      names = &it->second;
    else if (auto p = counter_set_presets().find(set_name); p != counter_set_presets().end())
      names = &p->second;
    if (!names) throw ConfigError(fmt::format("unknown counter set '{}'", set_name));
    for (const auto& n : *names)
      if (std::none_of(r.models.begin(), r.models.end(), [&](const auto& m) { return m.name == n; }))
        throw ConfigError(fmt::format("counter '{}' of set '{}' has no counter model", n, set_name));
    r.exec_counters.push_back(ordered_counters(*names));
  }
  const CallClassifier classifier;
  for (const auto& phase : config.pattern_library) {
    bool collective = false;
    bool nonblocking = false;
    r.collective.emplace_back();
    for (const auto& c : phase.calls) {
      const auto cls = classifier.classify(c.name);
      r.collective.back().push_back(cls == CallClass::Collective);
      collective = collective || cls == CallClass::Collective;
      std::string core = upper(c.name);
      if (core.starts_with("MPI_")) core.erase(0, 4);
      nonblocking = nonblocking || (cls == CallClass::PointToPoint &&
                                    (core.starts_with("I") || core.starts_with("TEST")));
    }
    r.eligible.push_back(!collective && phase.repeat >= 2);
    r.async.push_back(nonblocking && phase.calls.size() >= 2);
  }
  return r;
}

LogicalRank sample_logical(const SynthConfig& config, const Resolved& res, Rank rank) {
  Rng rng(stream_seed(config.seed, rank, 0, kLogical));
  LogicalRank lr;
  const std::size_t models = res.models.size();
  const auto& lib = config.pattern_library;
  // slot_*[p][c] shapes the bursts following call c of phase p; the leading
  // burst has its own entry at p == lib.size().
  for (std::size_t p = 0; p <= lib.size(); ++p) {
    const std::size_t calls = p < lib.size() ? lib[p].calls.size() : 1;
    lr.slot_time.emplace_back();
    lr.slot_counter.emplace_back();
    for (std::size_t c = 0; c < calls; ++c) {
      lr.slot_time.back().push_back(0.5 + rng.uniform());
      std::vector<double> f(models);
      for (auto& x : f) x = 0.5 + rng.uniform();
      lr.slot_counter.back().push_back(std::move(f));
    }
  }
  auto make_burst = [&](std::size_t p, std::size_t c) {
    const double work = std::exp(config.timing.work_sigma * rng.normal());
    LogicalBurst b;
    b.duration = static_cast<double>(config.timing.mean_burst_ns) * lr.slot_time[p][c] * work;
    b.counters.resize(models);
    for (std::size_t m = 0; m < models; ++m) b.counters[m] = res.models[m].base * lr.slot_counter[p][c][m] * work;
    return b;
  };
  lr.bursts.push_back(make_burst(lib.size(), 0));
  for (int it = 0; it < config.iterations; ++it)
    for (std::size_t p = 0; p < lib.size(); ++p)
      for (int rep = 0; rep < lib[p].repeat; ++rep)
        for (std::size_t c = 0; c < lib[p].calls.size(); ++c) {
          const double d = static_cast<double>(config.timing.mean_call_ns) * (0.5 + rng.uniform());
          lr.calls.push_back({static_cast<int>(p), static_cast<int>(c), d});
          lr.bursts.push_back(make_burst(p, c));
        }
  return lr;
}

std::vector<ObservedItem> observe_structure(const SynthConfig& config, const Resolved& res, Rank rank,
                                            std::size_t exec) {
  Rng decide(stream_seed(config.seed, rank, exec + 1, kDecision));
  Rng shuffle(stream_seed(config.seed, rank, exec + 1, kShuffle));
  const auto& lib = config.pattern_library;
  const auto& pert = config.perturbations;
  std::vector<ObservedItem> items;
  std::size_t k = 0;  // logical call index
  for (int it = 0; it < config.iterations; ++it)
    for (std::size_t p = 0; p < lib.size(); ++p) {
      const int repeat = lib[p].repeat;
      const auto calls = static_cast<int>(lib[p].calls.size());
      // Every instance draws the same number of decisions, so raising one
      // rate never reshuffles the others.
      const double u_drop = decide.uniform();
      const bool drop = res.eligible[p] && repeat >= 3 && u_drop < pert.drop_burst_rate;
      for (int rep = 0; rep < repeat; ++rep) {
        const double u_drift = decide.uniform();
        std::vector<double> u_extra(static_cast<std::size_t>(calls));
        for (auto& u : u_extra) u = decide.uniform();
        std::vector<int> order(static_cast<std::size_t>(calls));
        for (int c = 0; c < calls; ++c) order[static_cast<std::size_t>(c)] = c;
        if (res.async[p] && u_drift < pert.pattern_drift)
          for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);
        const std::size_t rep_base = k;
        k += static_cast<std::size_t>(calls);
        if (drop && rep == repeat - 2) continue;
        for (int pos = 0; pos < calls; ++pos) {
          const auto c = static_cast<std::size_t>(order[static_cast<std::size_t>(pos)]);
          if (res.collective[p][c] && u_extra[c] < pert.extra_burst_rate)
            items.push_back({static_cast<int>(p), static_cast<int>(c), std::nullopt, std::nullopt});
          // The call moves, the burst keeps its place in the repetition.
          items.push_back({static_cast<int>(p), static_cast<int>(c), rep_base + c,
                           rep_base + static_cast<std::size_t>(pos) + 1});
        }
      }
    }
  return items;
}

struct ObservedRank {
  std::vector<Burst> bursts;
  std::vector<std::optional<std::size_t>> logical;  // per observed burst
};

ObservedRank observe_rank(const SynthConfig& config, const Resolved& res, const LogicalRank& lr, Rank rank,
                          std::size_t exec) {
  const auto items = observe_structure(config, res, rank, exec);
  const auto& lib = config.pattern_library;
  const double jitter = config.perturbations.time_jitter;
  const auto& names = res.exec_counters[exec];
  std::vector<std::size_t> model_of;
  for (const auto& n : names)
    model_of.push_back(static_cast<std::size_t>(
        std::find_if(res.models.begin(), res.models.end(), [&](const auto& m) { return m.name == n; }) -
        res.models.begin()));

  // Noise of logical burst k and call k is the k-th draw of its stream, so it
  // does not depend on which bursts were dropped or added.
  Rng burst_noise(stream_seed(config.seed, rank, exec + 1, kBurstNoise));
  Rng call_noise(stream_seed(config.seed, rank, exec + 1, kCallNoise));
  Rng extra_rng(stream_seed(config.seed, rank, exec + 1, kExtra));
  const std::size_t models = res.models.size();
  std::vector<std::pair<TimeNs, std::vector<double>>> burst_obs(lr.bursts.size());
  for (std::size_t k = 0; k < lr.bursts.size(); ++k) {
    const double t = std::exp(jitter * burst_noise.normal());
    burst_obs[k].first = std::max<TimeNs>(1, std::llround(lr.bursts[k].duration * t));
    burst_obs[k].second.resize(models);
    for (std::size_t m = 0; m < models; ++m)
      burst_obs[k].second[m] = lr.bursts[k].counters[m] * std::exp(res.models[m].noise * burst_noise.normal());
  }
  std::vector<TimeNs> call_obs(lr.calls.size());
  for (std::size_t k = 0; k < lr.calls.size(); ++k)
    call_obs[k] = std::max<TimeNs>(1, std::llround(lr.calls[k].duration * std::exp(jitter * call_noise.normal())));

  const CallClassifier classifier;
  const int ranks = config.ranks;
  auto context = [&](const ObservedItem& item) {
    if (!item.logical_call) return CommContext{classifier.make(std::string(kExtraCall)), std::nullopt, std::nullopt};
    const auto p = item.phase;
    const auto c = item.call;
    const auto& tpl = lib[static_cast<std::size_t>(p)].calls[static_cast<std::size_t>(c)];
    CommContext ctx;
    ctx.call = classifier.make(tpl.name);
    if (tpl.partner_offset && ranks > 1) {
      const int partner = ((rank + *tpl.partner_offset) % ranks + ranks) % ranks;
      if (partner != rank) {
        ctx.partner = partner;
        ctx.size = tpl.size.value_or(0);
      }
    }
    return ctx;
  };

  ObservedRank out;
  TimeNs now = 0;
  auto push_burst = [&](TimeNs duration, const std::vector<double>& values, std::optional<std::size_t> logical) {
    Burst b;
    b.task_id = rank;
    b.begin_time = now;
    b.duration = duration;
    b.end_time = now + duration;
    for (std::size_t i = 0; i < names.size(); ++i) b.counters[names[i]] = std::llround(values[model_of[i]]);
    now = b.end_time;
    out.bursts.push_back(std::move(b));
    out.logical.push_back(logical);
  };
  push_burst(burst_obs[0].first, burst_obs[0].second, 0);
  for (const auto& item : items) {
    const auto ctx = context(item);
    out.bursts.back().after = ctx;
    TimeNs call_duration = 0;
    TimeNs duration = 0;
    std::vector<double> values(models);
    if (item.logical_burst) {
      call_duration = call_obs[*item.logical_call];
      duration = burst_obs[*item.logical_burst].first;
      values = burst_obs[*item.logical_burst].second;
    } else {
      // A probe before a collective: fresh work in the slot of that collective.
      const auto p = static_cast<std::size_t>(item.phase);
      const auto c = static_cast<std::size_t>(item.call);
      call_duration = std::max<TimeNs>(
          1, std::llround(static_cast<double>(config.timing.mean_call_ns) * (0.5 + extra_rng.uniform()) *
                          std::exp(jitter * extra_rng.normal())));
      const double work = std::exp(config.timing.work_sigma * extra_rng.normal());
      duration = std::max<TimeNs>(
          1, std::llround(static_cast<double>(config.timing.mean_burst_ns) * lr.slot_time[p][c] * work *
                          std::exp(jitter * extra_rng.normal())));
      for (std::size_t m = 0; m < models; ++m)
        values[m] = res.models[m].base * lr.slot_counter[p][c][m] * work *
                    std::exp(res.models[m].noise * extra_rng.normal());
    }
    now += call_duration;
    push_burst(duration, values, item.logical_burst);
    out.bursts.back().before = ctx;
  }
  return out;
}

}  // namespace

std::vector<Phase> default_pattern_library() {
  return {
      {"halo", {{"MPI_Isend", 1, 8192}, {"MPI_Irecv", -1, 8192}}, 4},
      {"complete", {{"MPI_Waitall", std::nullopt, std::nullopt}}, 1},
      {"reduce", {{"MPI_Allreduce", std::nullopt, std::nullopt}}, 1},
  };
}

const std::map<std::string, std::vector<std::string>>& counter_set_presets() {
  static const std::map<std::string, std::vector<std::string>> presets{
      {"INS_MIX",
       {"PAPI_TOT_INS", "PAPI_TOT_CYC", "PAPI_LD_INS", "PAPI_SR_INS", "PAPI_BR_INS", "PAPI_L3_TCM",
        "PAPI_L1_DCM", "PAPI_L2_DCM"}},
      {"OPS_SET",
       {"PAPI_TOT_INS", "PAPI_VEC_INS", "PAPI_FP_INS", "PAPI_FP_OPS", "PAPI_DP_OPS", "PAPI_SP_OPS",
        "PAPI_VEC_SP", "PAPI_VEC_DP"}},
      {"OPS_CYC", {"PAPI_TOT_INS", "PAPI_TOT_CYC", "PAPI_VEC_DP", "PAPI_VEC_SP", "PAPI_DP_OPS"}},
  };
  return presets;
}

std::vector<CounterModel> default_counter_models() {
  const std::vector<std::pair<std::string, double>> bases{
      {"PAPI_TOT_INS", 2.0e6}, {"PAPI_TOT_CYC", 1.6e6}, {"PAPI_LD_INS", 6.0e5}, {"PAPI_SR_INS", 3.0e5},
      {"PAPI_BR_INS", 2.0e5},  {"PAPI_L1_DCM", 4.0e4},  {"PAPI_L2_DCM", 1.2e4}, {"PAPI_L3_TCM", 3.0e3},
      {"PAPI_VEC_INS", 3.0e5}, {"PAPI_FP_INS", 4.0e5},  {"PAPI_FP_OPS", 8.0e5}, {"PAPI_DP_OPS", 7.0e5},
      {"PAPI_SP_OPS", 1.0e5},  {"PAPI_VEC_SP", 5.0e4},  {"PAPI_VEC_DP", 2.5e5},
  };
  std::vector<CounterModel> out;
  for (const auto& [name, base] : bases) out.push_back({name, base, is_cache_counter(name) ? 0.05 : 0.01});
  return out;
}

std::optional<EventType> papi_event_type(std::string_view counter) {
  for (const auto& [name, index] : kPapiPresets)
    if (name == counter) return 42000000 + index;
  return std::nullopt;
}

void validate_config(const SynthConfig& config) {
  if (config.ranks < 1) throw ConfigError("ranks must be at least 1");
  if (config.iterations < 0) throw ConfigError("iterations must not be negative");
  const auto& p = config.perturbations;
  for (const auto& [name, v] : {std::pair<const char*, double>{"time_jitter", p.time_jitter},
                                {"extra_burst_rate", p.extra_burst_rate},
                                {"drop_burst_rate", p.drop_burst_rate},
                                {"pattern_drift", p.pattern_drift}})
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(fmt::format("{} must lie in [0,1], got {}", name, v));
  if (config.timing.mean_burst_ns < 3) throw ConfigError("mean_burst_ns must be at least 3");
  if (config.timing.mean_call_ns < 1) throw ConfigError("mean_call_ns must be positive");
  if (!(config.timing.work_sigma >= 0.0)) throw ConfigError("work_sigma must not be negative");
  for (const auto& ph : config.pattern_library) {
    if (ph.calls.empty()) throw ConfigError(fmt::format("phase '{}' has no calls", ph.name));
    if (ph.repeat < 1) throw ConfigError(fmt::format("phase '{}' must repeat at least once", ph.name));
    for (const auto& c : ph.calls) {
      if (c.name.empty() || upper(c.name) == kBoundaryCall)
        throw ConfigError(fmt::format("phase '{}' has an unnamed call", ph.name));
      if (c.size && *c.size < 0) throw ConfigError(fmt::format("call {} has a negative size", c.name));
    }
  }
  for (const auto& m : config.counter_models)
    if (!(m.base >= 0.0) || !(m.noise >= 0.0))
      throw ConfigError(fmt::format("counter model {} needs non-negative base and noise", m.name));
  (void)resolve(config);
}

SynthConfig synth_config_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.is_object()) throw ConfigError("synth config must be a JSON object");
    SynthConfig c;
    c.ranks = doc.value("ranks", c.ranks);
    c.iterations = doc.value("iterations", c.iterations);
    if (doc.contains("seed")) {
      const auto& s = doc.at("seed");
      if (!s.is_number_unsigned()) throw ConfigError("seed must be a non-negative integer");
      c.seed = s.get<std::uint64_t>();
    }
    if (doc.contains("pattern_library")) {
      for (const auto& ph : doc.at("pattern_library")) {
        Phase phase;
        phase.name = ph.value("name", std::string{});
        phase.repeat = ph.value("repeat", 1);
        for (const auto& cj : ph.at("calls")) {
          CallTemplate t;
          t.name = cj.at("name").get<std::string>();
          if (cj.contains("partner_offset") && !cj.at("partner_offset").is_null())
            t.partner_offset = cj.at("partner_offset").get<int>();
          if (cj.contains("size") && !cj.at("size").is_null()) t.size = cj.at("size").get<std::int64_t>();
          phase.calls.push_back(std::move(t));
        }
        c.pattern_library.push_back(std::move(phase));
      }
    } else {
      c.pattern_library = default_pattern_library();
    }
    if (doc.contains("counter_models"))
      for (const auto& m : doc.at("counter_models"))
        c.counter_models.push_back({m.at("name").get<std::string>(), m.at("base").get<double>(),
                                    m.value("noise", is_cache_counter(m.at("name").get<std::string>()) ? 0.05 : 0.01)});
    if (doc.contains("perturbations")) {
      const auto& p = doc.at("perturbations");
      c.perturbations.time_jitter = p.value("time_jitter", 0.0);
      c.perturbations.extra_burst_rate = p.value("extra_burst_rate", 0.0);
      c.perturbations.drop_burst_rate = p.value("drop_burst_rate", 0.0);
      c.perturbations.pattern_drift = p.value("pattern_drift", 0.0);
    }
    if (doc.contains("timing")) {
      const auto& t = doc.at("timing");
      c.timing.mean_burst_ns = t.value("mean_burst_ns", c.timing.mean_burst_ns);
      c.timing.mean_call_ns = t.value("mean_call_ns", c.timing.mean_call_ns);
      c.timing.work_sigma = t.value("work_sigma", c.timing.work_sigma);
    }
    c.executions = doc.value("executions", std::vector<std::string>{"INS_MIX", "OPS_SET", "OPS_CYC"});
    if (doc.contains("counter_sets"))
      c.counter_sets = doc.at("counter_sets").get<std::map<std::string, std::vector<std::string>>>();
    validate_config(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("invalid synth config: {}", e.what()));
  }
}

nlohmann::ordered_json to_json(const SynthConfig& c) {
  nlohmann::ordered_json j;
  j["ranks"] = c.ranks;
  j["iterations"] = c.iterations;
  j["seed"] = c.seed;
  j["executions"] = c.executions;
  auto lib = nlohmann::ordered_json::array();
  for (const auto& ph : c.pattern_library) {
    nlohmann::ordered_json pj;
    pj["name"] = ph.name;
    pj["repeat"] = ph.repeat;
    pj["calls"] = nlohmann::ordered_json::array();
    for (const auto& t : ph.calls) {
      nlohmann::ordered_json tj;
      tj["name"] = t.name;
      if (t.partner_offset) tj["partner_offset"] = *t.partner_offset;
      if (t.size) tj["size"] = *t.size;
      pj["calls"].push_back(std::move(tj));
    }
    lib.push_back(std::move(pj));
  }
  j["pattern_library"] = std::move(lib);
  j["counter_models"] = nlohmann::ordered_json::array();
  for (const auto& m : c.counter_models)
    j["counter_models"].push_back({{"name", m.name}, {"base", m.base}, {"noise", m.noise}});
  j["perturbations"] = {{"time_jitter", c.perturbations.time_jitter},
                        {"extra_burst_rate", c.perturbations.extra_burst_rate},
                        {"drop_burst_rate", c.perturbations.drop_burst_rate},
                        {"pattern_drift", c.perturbations.pattern_drift}};
  j["timing"] = {{"mean_burst_ns", c.timing.mean_burst_ns},
                 {"mean_call_ns", c.timing.mean_call_ns},
                 {"work_sigma", c.timing.work_sigma}};
  if (!c.counter_sets.empty()) j["counter_sets"] = c.counter_sets;
  return j;
}

SynthSuite generate_suite(const SynthConfig& config) {
  validate_config(config);
  const Resolved res = resolve(config);
  const std::size_t n_exec = config.executions.size();
  const auto n_ranks = static_cast<std::size_t>(config.ranks);

  std::vector<std::vector<ObservedRank>> observed(n_ranks);
  parallel_for(n_ranks, std::thread::hardware_concurrency(), [&](std::size_t r) {
    const auto rank = static_cast<Rank>(r);
    const LogicalRank lr = sample_logical(config, res, rank);
    for (std::size_t e = 0; e < n_exec; ++e) observed[r].push_back(observe_rank(config, res, lr, rank, e));
  });

  SynthSuite suite;
  for (std::size_t e = 0; e < n_exec; ++e) {
    ExecutionDataset ds;
    ds.exec_id = fmt::format("run{}", e + 1);
    ds.counter_set_name = config.executions[e];
    ds.counter_names = res.exec_counters[e];
    for (std::size_t r = 0; r < n_ranks; ++r) ds.ranks[static_cast<Rank>(r)] = std::move(observed[r][e].bursts);
    suite.executions.push_back(compute_derived_features(ds));
  }
  for (std::size_t r = 0; r < n_ranks; ++r) {
    std::map<std::size_t, std::map<std::string, BurstRef>> by_logical;
    for (std::size_t e = 0; e < n_exec; ++e) {
      const auto& logical = observed[r][e].logical;
      for (std::size_t i = 0; i < logical.size(); ++i)
        if (logical[i])
          by_logical[*logical[i]][suite.executions[e].exec_id] = {static_cast<Rank>(r), static_cast<int>(i)};
    }
    for (auto& [k, members] : by_logical) {
      if (members.size() < 2) continue;
      MatchGroup g;
      g.burst_id = fmt::format("truth_r{}_{}", r, k);
      g.rank = static_cast<Rank>(r);
      g.members = std::move(members);
      suite.ground_truth.push_back(std::move(g));
    }
  }
  return suite;
}

MatchSet truth_match_set(const SynthSuite& suite) {
  MatchSet set;
  std::map<std::string, std::set<BurstRef>> grouped;
  for (const auto& ds : suite.executions) set.executions.push_back(ds.exec_id);
  set.groups = suite.ground_truth;
  for (const auto& g : set.groups)
    for (const auto& [exec, ref] : g.members) grouped[exec].insert(ref);
  for (const auto& ds : suite.executions) {
    auto& un = set.unmatched[ds.exec_id];
    for (const auto& [rank, bursts] : ds.ranks)
      for (const auto& b : bursts)
        if (!grouped[ds.exec_id].contains(BurstRef{rank, b.seq_index})) un.push_back({rank, b.seq_index});
  }
  return set;
}

EmittedTrace emit_as_prv(const ExecutionDataset& dataset) {
  validate_dataset(dataset);
  const MpiEventTypes mpi;
  auto type_of = [&](CallClass c) {
    switch (c) {
      case CallClass::Collective:
        return mpi.collective;
      case CallClass::PointToPoint:
        return mpi.point_to_point;
      default:
        return mpi.other;
    }
  };

  PcfDictionary pcf;
  std::map<std::string, EventType> counter_type;
  EventType next_free = 42100000;
  for (const auto& name : dataset.counter_names) {
    if (!name.starts_with("PAPI_"))
      throw std::invalid_argument(fmt::format("counter '{}' cannot be declared as a PAPI counter", name));
    const auto known = papi_event_type(name);
    const EventType t = known ? *known : next_free++;
    counter_type[name] = t;
    pcf.event_labels[t] = name;
  }

  // Call names get values 1..n per event type in name order.
  std::map<EventType, std::set<std::string>> calls;
  for (const auto& [rank, bursts] : dataset.ranks)
    for (const auto& b : bursts)
      for (const auto* ctx : {&b.before, &b.after})
        if (ctx->call.cls != CallClass::None) calls[type_of(ctx->call.cls)].insert(ctx->call.name);
  std::map<std::pair<EventType, std::string>, EventValue> call_value;
  for (const auto& [type, names] : calls) {
    pcf.event_labels[type] = type == mpi.collective      ? "MPI Collective Comm"
                             : type == mpi.point_to_point ? "MPI Point-to-point"
                                                          : "MPI Other";
    pcf.value_labels[{type, 0}] = "End";
    EventValue v = 1;
    for (const auto& n : names) {
      call_value[{type, n}] = v;
      pcf.value_labels[{type, v++}] = n;
    }
  }
  if (dataset.burst_count() > 0) {
    pcf.event_labels[kApplicationEventType] = "Application";
    pcf.value_labels[{kApplicationEventType, 0}] = "End";
    pcf.value_labels[{kApplicationEventType, 1}] = "Begin";
  }

  struct Line {
    TimeNs time;
    Rank rank;
    std::size_t order;
    std::string text;
  };
  std::vector<Line> lines;
  auto counters_of = [&](const Burst& b) {
    std::string s;
    for (const auto& name : dataset.counter_names)
      if (auto it = b.counters.find(name); it != b.counters.end())
        s += fmt::format(":{}:{}", counter_type[name], it->second);
    return s;
  };
  auto event = [&](Rank rank, TimeNs t, const std::string& body) {
    lines.push_back({t, rank, lines.size(), fmt::format("2:{0}:1:{0}:1:{1}{2}", rank + 1, t, body)});
  };

  // Where a partner's endpoint can sit without landing inside one of its calls.
  std::map<Rank, TimeNs> quiet_time;
  for (const auto& [rank, bursts] : dataset.ranks) {
    const Burst* longest = nullptr;
    for (const auto& b : bursts)
      if (!longest || b.duration > longest->duration) longest = &b;
    if (longest && longest->duration >= 3) quiet_time[rank] = longest->begin_time + longest->duration / 2;
  }

  TimeNs total = 0;
  int rank_count = 0;
  for (const auto& [rank, bursts] : dataset.ranks) {
    rank_count = std::max(rank_count, rank + 1);
    if (bursts.empty()) continue;
    if (bursts.front().before.call.cls != CallClass::None || bursts.back().after.call.cls != CallClass::None)
      throw std::invalid_argument(fmt::format("rank {} does not start and end with a compute burst", rank));
    event(rank, bursts.front().begin_time, fmt::format(":{}:1", kApplicationEventType));
    for (std::size_t i = 0; i < bursts.size(); ++i) {
      const Burst& b = bursts[i];
      if (i + 1 == bursts.size()) {
        event(rank, b.end_time, fmt::format(":{}:0{}", kApplicationEventType, counters_of(b)));
        total = std::max(total, b.end_time);
        break;
      }
      const Burst& next = bursts[i + 1];
      if (b.after != next.before)
        throw std::invalid_argument(fmt::format("rank {} burst {}: call context differs across the call", rank, i));
      if (b.after.call.cls == CallClass::None)
        throw std::invalid_argument(fmt::format("rank {} burst {}: boundary marker inside the rank", rank, i));
      const EventType type = type_of(b.after.call.cls);
      event(rank, b.end_time,
            fmt::format(":{}:{}{}", type, call_value.at({type, b.after.call.name}), counters_of(b)));
      event(rank, next.begin_time, fmt::format(":{}:0", type));
      if (b.after.partner.has_value() != b.after.size.has_value() ||
          (b.after.partner && b.after.call.cls != CallClass::PointToPoint))
        throw std::invalid_argument(fmt::format("rank {} burst {}: partner and size must come together on "
                                                "point-to-point calls",
                                                rank, i));
      if (!b.after.partner) continue;
      const Rank partner = *b.after.partner;
      auto q = quiet_time.find(partner);
      if (q == quiet_time.end())
        throw std::invalid_argument(fmt::format("partner rank {} has no burst to host its endpoint", partner));
      // The subject endpoint sits at the call entry; receives name this rank
      // as the receiver.
      const bool recv = upper(b.after.call.name).find("RECV") != std::string::npos;
      const Rank s = recv ? partner : rank;
      const Rank r = recv ? rank : partner;
      const TimeNs ts = recv ? q->second : b.end_time;
      const TimeNs tr = recv ? b.end_time : q->second;
      lines.push_back({std::min(ts, tr), rank, lines.size(),
                       comm_record_line(CommRecord{s, r, ts, tr, *b.after.size, 0})});
    }
  }
  std::stable_sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
    if (a.time != b.time) return a.time < b.time;
    if (a.rank != b.rank) return a.rank < b.rank;
    return a.order < b.order;
  });
  EmittedTrace out;
  out.prv = prv_header_line(PrvHeader{total, rank_count, true}) + "\n";
  for (const auto& l : lines) {
    out.prv += l.text;
    out.prv += '\n';
  }
  out.pcf = write_pcf(pcf);
  return out;
}

double expected_relative_difference(double sigma) {
  // |1 - exp(s Z)| with s = sigma * sqrt(2) has mean exp(s^2/2) erf(s/sqrt 2).
  return std::exp(sigma * sigma) * std::erf(sigma);
}

}  // namespace tracefuse
