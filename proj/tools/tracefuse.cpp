// tracefuse: extract, match, fuse, validate and synthesise burst datasets.
//
// Exit status: 0 success, 1 data or configuration error, 2 usage error or
// missing file, 3 unsupported (hybrid) trace. Logs go to stderr, summaries
// to stdout.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "tracefuse/burst_csv.hpp"
#include "tracefuse/config.hpp"
#include "tracefuse/fusion.hpp"
#include "tracefuse/matching.hpp"
#include "tracefuse/prv.hpp"
#include "tracefuse/synthgen.hpp"
#include "tracefuse/validation.hpp"

namespace fs = std::filesystem;
using namespace tracefuse;

namespace {

struct MissingFile : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingFile(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  out << text;
  if (!out) throw std::runtime_error(fmt::format("write to {} failed", path.string()));
}

fs::path sibling(const fs::path& path, const std::string& suffix) {
  auto p = path;
  p.replace_extension();
  return fs::path(p.string() + suffix);
}

// Flags shared by every subcommand; file values are applied first.
struct Flags {
  std::string config_file;
  bool dump_config{false};
  std::optional<double> threshold;
  std::string weights;
  std::string collectives;
  std::string mpi_types;
  std::string fence;
  std::string log_level;
  std::optional<unsigned> threads;
};

PipelineConfig effective_config(const Flags& f) {
  PipelineConfig c;
  if (!f.config_file.empty()) {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(read_file(f.config_file));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("{}: {}", f.config_file, e.what()));
    }
    c = pipeline_config_from_json(doc);
  }
  if (f.threshold) c.weights.threshold = *f.threshold;
  if (!f.weights.empty()) c.weights = parse_weights(f.weights, c.weights);
  if (!f.collectives.empty()) c.collectives = parse_name_list(f.collectives);
  if (!f.mpi_types.empty()) c.mpi_types = parse_mpi_types(f.mpi_types);
  if (!f.fence.empty()) c.fence = parse_switch(f.fence);
  if (!f.log_level.empty()) c.log_level = f.log_level;
  if (f.threads) c.threads = *f.threads;
  c.validate();
  return c;
}

std::vector<ExecutionDataset> read_datasets(const std::vector<std::string>& paths, const PipelineConfig& cfg) {
  std::vector<ExecutionDataset> out;
  const auto classifier = cfg.classifier();
  for (const auto& p : paths) {
    auto ds = read_burst_csv(read_file(p), classifier);
    if (ds.exec_id.empty()) ds.exec_id = fs::path(p).stem().string();
    out.push_back(std::move(ds));
  }
  return out;
}

MatchSet read_matches(const std::string& path) {
  try {
    return match_set_from_json(nlohmann::ordered_json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(fmt::format("{}: {}", path, e.what()));
  }
}

// ---------------------------------------------------------------------------

struct ExtractArgs {
  std::string prv;
  std::string pcf;
  std::string out;
  std::string exec_id;
  std::string counter_set;
};

int cmd_extract(const ExtractArgs& a, const PipelineConfig& cfg) {
  const auto prv_text = read_file(a.prv);
  fs::path pcf_path = a.pcf.empty() ? sibling(a.prv, ".pcf") : fs::path(a.pcf);
  PcfDictionary pcf;
  if (!a.pcf.empty() || fs::exists(pcf_path))
    pcf = parse_pcf(read_file(pcf_path), cfg.mpi_types);
  else
    spdlog::warn("no .pcf found next to {}; counters and call names are unknown", a.prv);

  const auto trace = parse_prv(prv_text);
  ExtractConfig ec;
  ec.mpi_types = cfg.mpi_types;
  ec.classifier = cfg.classifier();
  ec.exec_id = a.exec_id.empty() ? fs::path(a.prv).stem().string() : a.exec_id;
  ec.counter_set_name = a.counter_set.empty() ? ec.exec_id : a.counter_set;
  ExtractStats stats;
  const auto ds = extract_bursts(trace, pcf, ec, &stats);
  write_file(a.out, write_burst_csv(ds));

  nlohmann::ordered_json summary;
  summary["exec_id"] = ds.exec_id;
  summary["ranks"] = ds.ranks.size();
  summary["bursts"] = ds.burst_count();
  summary["counters"] = ds.counter_names;
  summary["warnings"] = trace.warnings + stats.warnings;
  summary["truncated_calls"] = stats.truncated_calls;
  std::cout << summary.dump() << '\n';
  return 0;
}

struct MatchArgs {
  std::vector<std::string> inputs;
  std::string out;
  std::string truth;
  bool stage1_only{false};
};

int cmd_match(const MatchArgs& a, const PipelineConfig& cfg) {
  if (a.inputs.size() < 2) throw UsageError("match needs at least two burst tables");
  const auto data = read_datasets(a.inputs, cfg);
  MatchConfig mc;
  mc.weights = cfg.weights;
  mc.options.threads = cfg.worker_count();
  mc.run_stage2 = !a.stage1_only;
  auto matches = match_executions(data, mc);
  if (!a.truth.empty()) {
    const auto truth = read_matches(a.truth);
    const auto rec = recovery_against(matches, truth.groups);
    matches.statistics["truth"] = {{"groups", rec.truth_groups},
                                   {"recovered", rec.recovered},
                                   {"recovered_stage1", rec.recovered_stage1},
                                   {"recovered_stage2", rec.recovered_stage2},
                                   {"spurious", rec.spurious},
                                   {"recovery_rate", rec.rate()}};
  }
  write_file(a.out, dump_match_set(matches));
  std::cout << matches.statistics.dump() << '\n';
  return 0;
}

struct FuseArgs {
  std::vector<std::string> inputs;
  std::string matches;
  std::string out;
  std::string base;
  std::string emit_prv;
  std::string base_prv;
  std::string base_pcf;
  bool pass_through{false};
};

int cmd_fuse(const FuseArgs& a, const PipelineConfig& cfg) {
  if (a.inputs.size() < 2) throw UsageError("fuse needs at least two burst tables");
  if (a.pass_through && (a.emit_prv.empty() || a.base_prv.empty()))
    throw UsageError("--pass-through needs --emit-prv and --base-prv");
  const auto data = read_datasets(a.inputs, cfg);
  const auto matches = read_matches(a.matches);
  const auto base = a.base.empty() ? select_base(data, matches) : a.base;
  const auto fused = fuse(data, matches, base, cfg.prefix_scheme);

  write_file(a.out, write_fused_csv(fused));
  write_file(sibling(a.out, ".columns.json"), fused_manifest(fused).dump(1) + "\n");
  write_file(sibling(a.out, ".partial.json"), partial_report(fused).dump(1) + "\n");

  if (!a.emit_prv.empty()) {
    const ExecutionDataset* base_ds = nullptr;
    for (const auto& d : data)
      if (d.exec_id == base) base_ds = &d;
    PrvHeader header;
    PcfDictionary pcf;
    PrvTrace base_trace;
    if (!a.base_prv.empty()) {
      base_trace = parse_prv(read_file(a.base_prv));
      header = base_trace.header;
      const fs::path pcf_path = a.base_pcf.empty() ? sibling(a.base_prv, ".pcf") : fs::path(a.base_pcf);
      pcf = parse_pcf(read_file(pcf_path), cfg.mpi_types);
    } else {
      // Without the base trace, rebuild its header and counter dictionary.
      for (const auto& [rank, bursts] : base_ds->ranks) {
        header.rank_count = std::max(header.rank_count, rank + 1);
        if (!bursts.empty()) header.total_time = std::max(header.total_time, bursts.back().end_time);
      }
      header.parsed = true;
      for (const auto& n : base_ds->counter_names)
        if (auto t = papi_event_type(n)) pcf.event_labels[*t] = n;
    }
    EmitOptions eo;
    eo.new_type_base = cfg.new_type_base;
    eo.mpi_types = cfg.mpi_types;
    if (a.pass_through) eo.pass_through = &base_trace;
    const auto emitted = emit_prv(fused, header, pcf, eo);
    write_file(a.emit_prv, emitted.prv);
    write_file(sibling(a.emit_prv, ".pcf"), emitted.pcf);
  }

  std::size_t counters = 0;
  for (const auto& c : fused.columns) counters += c.is_counter ? 1 : 0;
  nlohmann::ordered_json summary;
  summary["base"] = base;
  summary["rows"] = fused.row_count();
  summary["columns"] = fused.columns.size();
  summary["counter_columns"] = counters;
  summary["partial_groups"] = fused.partial_groups.size();
  std::cout << summary.dump() << '\n';
  return 0;
}

struct ValidateArgs {
  std::vector<std::string> inputs;
  std::string matches;
  std::string out;
  std::string scores_dir;
};

int cmd_validate(const ValidateArgs& a, const PipelineConfig& cfg) {
  if (a.inputs.size() < 2) throw UsageError("validate needs at least two burst tables");
  const auto data = read_datasets(a.inputs, cfg);
  const auto matches = read_matches(a.matches);
  ValidationOptions vo;
  vo.fence = cfg.fence;
  const auto report = validate(data, matches, vo);
  write_file(a.out, to_json(report).dump(1) + "\n");
  if (!a.scores_dir.empty())
    for (const auto& f : report.features)
      write_file(fs::path(a.scores_dir) / (f.feature + ".csv"), scores_csv(report, f));
  std::cout << render_table(report);
  return 0;
}

struct SynthArgs {
  std::string config;
  std::string outdir;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(a.config));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("{}: {}", a.config, e.what()));
  }
  auto config = synth_config_from_json(doc);
  if (a.seed) config.seed = *a.seed;
  const auto suite = generate_suite(config);
  const fs::path dir(a.outdir);
  nlohmann::ordered_json summary;
  summary["seed"] = config.seed;
  summary["executions"] = nlohmann::ordered_json::array();
  for (const auto& ds : suite.executions) {
    const auto emitted = emit_as_prv(ds);
    write_file(dir / (ds.exec_id + ".prv"), emitted.prv);
    write_file(dir / (ds.exec_id + ".pcf"), emitted.pcf);
    write_file(dir / (ds.exec_id + ".csv"), write_burst_csv(ds));
    summary["executions"].push_back(
        {{"exec_id", ds.exec_id}, {"counter_set", ds.counter_set_name}, {"bursts", ds.burst_count()}});
  }
  write_file(dir / "truth.json", dump_match_set(truth_match_set(suite)));
  summary["truth_groups"] = suite.ground_truth.size();
  std::cout << summary.dump() << '\n';
  return 0;
}

void add_common(CLI::App& app, Flags& f) {
  app.add_option("--config", f.config_file, "JSON pipeline configuration");
  app.add_option("--threshold", f.threshold, "stage-2 acceptance threshold");
  app.add_option("--weights", f.weights, "stage-2 weights t,s,p");
  app.add_option("--collectives", f.collectives, "collective call names, comma separated");
  app.add_option("--mpi-types", f.mpi_types, "MPI event type ids: point-to-point,collective,other");
  app.add_option("--fence", f.fence, "outlier fence on|off");
  app.add_option("--log-level", f.log_level, "trace, debug, info, warn, error or off");
  app.add_option("--threads", f.threads, "worker threads (0: all cores)");
}

}  // namespace

int main(int argc, char** argv) {
  auto logger = spdlog::stderr_color_mt("tracefuse");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);

  CLI::App app{"Burst-level fusion of MPI traces recorded with different counter sets"};
  app.require_subcommand(0, 1);
  Flags flags;
  add_common(app, flags);
  app.add_flag("--dump-config", flags.dump_config, "print the effective configuration and exit");
  app.fallthrough();

  ExtractArgs ex;
  auto* extract = app.add_subcommand("extract", "trace (.prv + .pcf) to burst table");
  extract->add_option("prv", ex.prv, "Paraver trace")->required();
  extract->add_option("--pcf", ex.pcf, "event dictionary (default: next to the trace)");
  extract->add_option("-o,--out", ex.out, "burst CSV")->required();
  extract->add_option("--exec-id", ex.exec_id, "execution id (default: trace file stem)");
  extract->add_option("--counter-set", ex.counter_set, "counter-set name (default: execution id)");

  MatchArgs ma;
  auto* match = app.add_subcommand("match", "match bursts across executions");
  match->add_option("inputs", ma.inputs, "burst CSVs")->required();
  match->add_option("-o,--out", ma.out, "match-set JSON")->required();
  match->add_option("--truth", ma.truth, "ground-truth match set for recovery statistics");
  match->add_flag("--stage1-only", ma.stage1_only, "skip structural matching");

  FuseArgs fa;
  auto* fusecmd = app.add_subcommand("fuse", "merge matched bursts into one table");
  fusecmd->add_option("inputs", fa.inputs, "burst CSVs")->required();
  fusecmd->add_option("-m,--matches", fa.matches, "match-set JSON")->required();
  fusecmd->add_option("-o,--out", fa.out, "fused CSV")->required();
  fusecmd->add_option("--base", fa.base, "base execution (default: fewest unmatched bursts)");
  fusecmd->add_option("--emit-prv", fa.emit_prv, "also write a synthetic trace (.prv, .pcf alongside)");
  fusecmd->add_option("--base-prv", fa.base_prv, "base execution's trace, for header and event types");
  fusecmd->add_option("--base-pcf", fa.base_pcf, "base execution's .pcf (default: next to --base-prv)");
  fusecmd->add_flag("--pass-through", fa.pass_through, "copy the base trace's MPI events into the emitted trace");

  ValidateArgs va;
  auto* validatecmd = app.add_subcommand("validate", "score matches between executions with one counter set");
  validatecmd->add_option("inputs", va.inputs, "burst CSVs")->required();
  validatecmd->add_option("-m,--matches", va.matches, "match-set JSON")->required();
  validatecmd->add_option("-o,--out", va.out, "report JSON")->required();
  validatecmd->add_option("--scores-dir", va.scores_dir, "per-burst score CSVs, one per feature");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic execution family");
  synth->add_option("config", sa.config, "synthetic suite JSON")->required();
  synth->add_option("-o,--out", sa.outdir, "output directory")->required();
  synth->add_option("--seed", sa.seed, "override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const auto cfg = effective_config(flags);
    spdlog::set_level(spdlog::level::from_str(cfg.log_level));
    if (flags.dump_config) {
      std::cout << to_json(cfg).dump(2) << '\n';
      return 0;
    }
    if (extract->parsed()) return cmd_extract(ex, cfg);
    if (match->parsed()) return cmd_match(ma, cfg);
    if (fusecmd->parsed()) return cmd_fuse(fa, cfg);
    if (validatecmd->parsed()) return cmd_validate(va, cfg);
    if (synth->parsed()) return cmd_synth(sa);
    std::cerr << app.help();
    return 2;
  } catch (const MissingFile& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const UnsupportedTrace& e) {
    spdlog::error("line {}: {}", e.line(), e.what());
    return 3;
  } catch (const ParseError& e) {
    spdlog::error("line {}: {}", e.line(), e.what());
    return 1;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
}
