// Copyright 2026 The kdisagg Authors
// SPDX-License-Identifier: Apache-2.0

// kdisagg: analyze traces, plan placements, simulate and serve.
//
// Exit codes:
//   0  success
//   1  internal error
//   2  usage error (bad flags or arguments)
//   3  input error (missing, malformed or unsupported file)
//   4  planning error
//   5  simulation error
//
// Every command computes all of its outputs before writing any of them, so
// a failing command leaves no outputs behind.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "kdisagg/ddg.hpp"
#include "kdisagg/instrument.hpp"
#include "kdisagg/io.hpp"
#include "kdisagg/milp.hpp"
#include "kdisagg/monitor.hpp"
#include "kdisagg/reduce.hpp"
#include "kdisagg/sim.hpp"
#include "kdisagg/solve.hpp"

namespace fs = std::filesystem;
using namespace kdisagg;

namespace {

constexpr const char* kManifestFormat = "kdisagg.manifest";
constexpr int kManifestVersion = 1;

enum Exit { kOk = 0, kInternal = 1, kUsage = 2, kInput = 3, kPlanning = 4, kSimulation = 5 };

/// Files produced by one command, written only once everything succeeded.
class Outputs {
 public:
  /// The manifest is written as `<name>.manifest.json`.
  Outputs(std::string command, std::string name) : command_(std::move(command)), name_(std::move(name)) {}

  void add(const std::string& name, const std::string& format, int version, std::string text) {
    files_[name] = {format, version, std::move(text)};
  }

  void note(const std::string& key, json value) { info_[key] = std::move(value); }

  void write(const fs::path& dir) const {
    json m;
    m["format"] = kManifestFormat;
    m["version"] = kManifestVersion;
    m["command"] = command_;
    m["info"] = info_;
    m["files"] = json::array();
    for (const auto& [name, f] : files_)
      m["files"].push_back({{"name", name}, {"format", f.format}, {"version", f.version}});
    for (const auto& [name, f] : files_) write_text_file(dir / name, f.text);
    write_text_file(dir / (name_ + ".manifest.json"), dump_json(m));
  }

 private:
  struct File {
    std::string format;
    int version;
    std::string text;
  };
  std::string command_, name_;
  std::map<std::string, File> files_;
  json info_ = json::object();
};

struct Common {
  std::uint64_t seed = 0;
  std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed (unsigned 64-bit)");
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
}

json load(const fs::path& path, const std::string& format, int version) {
  return read_versioned(path, format, version);
}

// ---- analyze -----------------------------------------------------------------

json access_report(const AnalysisResult& a) {
  json j;
  j["format"] = "kdisagg.access";
  j["version"] = 1;
  j["pattern"] = a.graph.pattern;
  j["dispatch_key"] = a.dispatch_key;
  auto spans = [](const std::vector<Span>& v) {
    json arr = json::array();
    for (const auto& s : v) arr.push_back({{"buffer", s.buffer}, {"offset", s.offset}, {"bytes", s.len}});
    return arr;
  };
  j["launches"] = json::array();
  for (const auto& s : a.summaries) {
    json l = {{"iteration", s.iteration}, {"seq", s.seq},   {"kernel", s.kernel},
              {"kind", to_string(s.kind)}, {"reads", spans(s.reads)}, {"writes", spans(s.writes)},
              {"indirect", s.indirect},   {"notes", s.notes}};
    l["pin"] = s.pin ? json{{"reason", to_string(s.pin->reason)},
                            {"gpu", s.pin->gpu ? json(*s.pin->gpu) : json(nullptr)}}
                     : json(nullptr);
    j["launches"].push_back(l);
  }
  j["cross_iteration"] = json::array();
  for (const auto& c : a.cross_iteration) j["cross_iteration"].push_back(c.buffer);
  j["pinned"] = json::array();
  for (const auto& p : a.graph.pinned)
    j["pinned"].push_back({{"node", p.node}, {"kernel", a.graph.nodes[p.node].kernel},
                           {"reason", to_string(p.reason)}});
  return j;
}

int cmd_analyze(const std::string& trace_path, const Common& c) {
  const auto trace = read_trace(trace_path);
  const auto a = analyze_trace(trace);
  const std::string stem = a.graph.pattern;
  Outputs out("analyze", stem);
  out.add(stem + ".ddg.json", kDdgFormat, kDdgVersion, dump_json(ddg_to_json(a.graph)));
  out.add(stem + ".edges.txt", kDdgFormat, kDdgVersion, ddg_edge_list(a.graph));
  out.add(stem + ".access.json", "kdisagg.access", 1, dump_json(access_report(a)));
  out.note("pattern", stem);
  out.write(c.out);
  std::cerr << "analyze: pattern " << stem << ", " << a.graph.nodes.size() << " nodes, "
            << a.graph.edges.size() << " edges, " << a.graph.pinned.size() << " pinned";
  for (const auto& p : a.graph.pinned) std::cerr << "\n  pinned node " << p.node << " (" << to_string(p.reason) << ")";
  for (const auto& w : a.graph.warnings) std::cerr << "\n  warning: " << w;
  std::cerr << "\n";
  return kOk;
}

// ---- plan --------------------------------------------------------------------

struct PlanArgs {
  std::string ddg, gpus, links, profile, problem, pattern;
  std::string objective = "throughput", solver = "exact";
  bool reduce = false;
  int default_pin_gpu = 0;
  std::uint64_t max_evals = 2'000'000;
};

int cmd_plan(const PlanArgs& a, const Common& c) {
  PlacementProblem p;
  std::string pattern = a.pattern;
  if (!a.problem.empty()) {
    p = problem_from_json(load(a.problem, kProblemFormat, kPlannerFileVersion), a.problem);
    if (pattern.empty()) {
      pattern = fs::path(a.problem).filename().string();
      pattern = pattern.substr(0, pattern.find('.'));
    }
  } else {
    if (a.ddg.empty() || a.gpus.empty() || a.links.empty() || a.profile.empty())
      throw CLI::ValidationError("plan", "needs --problem, or all of --ddg --gpus --links --profile");
    const auto g = read_ddg(a.ddg);
    auto gpus = gpus_from_json(load(a.gpus, kGpusFormat, kPlannerFileVersion), a.gpus);
    auto links = links_from_json(load(a.links, kLinksFormat, kPlannerFileVersion), gpus, a.links);
    auto t = latencies_from_json(load(a.profile, kProfileFormat, kPlannerFileVersion), g, gpus, a.profile);
    ProblemOptions opt;
    opt.default_pin_gpu = a.default_pin_gpu;
    p = make_problem(g, std::move(gpus), std::move(links), std::move(t), opt);
    if (pattern.empty()) pattern = g.pattern;
  }
  p.objective = objective_from(a.objective);
  const std::string stem = pattern + "." + to_string(p.objective);
  Outputs out("plan", stem);
  out.note("pattern", pattern);
  out.note("objective", to_string(p.objective));
  out.note("solver", a.solver);
  out.note("seed", c.seed);

  if (a.solver == "lp-export") {
    out.add(stem + ".lp", "lp", 1, to_lp(build_milp(p), "kdisagg " + pattern + " " + to_string(p.objective)));
    out.write(c.out);
    std::cerr << "plan: wrote " << stem << ".lp\n";
    return kOk;
  }

  std::function<Placement(const PlacementProblem&)> solver;
  if (a.solver == "exact") {
    solver = [](const PlacementProblem& q) { return solve_exact(q); };
  } else {
    HeuristicOptions ho;
    ho.seed = c.seed;
    ho.max_evaluations = a.max_evals;
    ho.budget_seconds = std::numeric_limits<double>::infinity();
    solver = [ho](const PlacementProblem& q) { return solve_heuristic(q, ho); };
  }
  Placement pl;
  if (a.reduce) {
    const auto r = reduce_repeated_layers(p);
    pl = r.identity() ? solver(p) : solve_reduced(p, r, solver);
    out.note("reduction", {{"start", r.start}, {"length", r.length}, {"repeats", r.repeats}});
  } else {
    pl = solver(p);
  }
  if (!respects_pins(p, pl.assign)) throw PlanningError("solver returned a placement that breaks a pin");
  const auto audit = evaluate(p, pl.assign);
  const auto cap = capacity_report(p, pl.assign);
  json pj = placement_to_json(p, pl, pattern);
  pj["capacity_warnings"] = cap.warnings;
  out.add(pattern + ".problem.json", kProblemFormat, kPlannerFileVersion, dump_json(problem_to_json(p)));
  out.add(stem + ".placement.json", kPlacementFormat, kPlannerFileVersion, dump_json(pj));
  out.write(c.out);
  std::cerr << "plan: " << pattern << " " << to_string(p.objective) << " = "
            << format_fixed(audit.objective_value * 1e3, 6) << " ms (" << pl.solver
            << (pl.optimal ? ", optimal" : "") << "), " << audit.cut.size() << " cut edges\n";
  for (const auto& w : cap.warnings) std::cerr << "  warning: " << w << "\n";
  return kOk;
}

// ---- simulate / serve / sweep --------------------------------------------------

json load_workload(const std::string& path, std::uint64_t seed) {
  json j = load(path, kWorkloadFormat, kSimFileVersion);
  if (j.contains("segments") && !j.contains("seed")) j["seed"] = seed;
  return j;
}

std::vector<SimPattern> load_patterns(const std::vector<std::string>& problems,
                                      const std::vector<std::string>& placements) {
  if (problems.size() != placements.size())
    throw CLI::ValidationError("--problem and --placement must be given in pairs");
  std::vector<SimPattern> out;
  for (std::size_t i = 0; i < problems.size(); ++i) out.push_back(load_pattern(problems[i], placements[i]));
  return out;
}

std::string ablation_csv(const Ablation& a) {
  std::string s = "mode,throughput_rps,mean_request_s,speedup\n";
  const double base = a.no_pipeline.throughput;
  auto row = [&](const char* name, const SimReport& r) {
    s += std::string(name) + "," + format_fixed(r.throughput, 6) + "," +
         format_fixed(r.mean_request_latency, 9) + "," +
         format_fixed(base > 0 ? r.throughput / base : 0, 4) + "\n";
  };
  row("no-pipeline", a.no_pipeline);
  row("naive", a.naive);
  row("priority", a.priority);
  return s;
}

struct SimArgs {
  std::vector<std::string> problems, placements;
  std::string workload, priority = "fifo-priority";
  double overhead = 0.001;
  bool ablate = false, events = false;
};

int cmd_simulate(const SimArgs& a, const Common& c) {
  SimConfig cfg;
  cfg.patterns = load_patterns(a.problems, a.placements);
  apply_workload(load_workload(a.workload, c.seed), cfg, a.workload);
  cfg.priority = priority_from(a.priority);
  cfg.overhead = a.overhead;
  cfg.record_events = a.events;
  cfg.validate();
  Outputs out("simulate", "simulate");
  out.note("seed", c.seed);
  const SimReport r = simulate(cfg);
  out.add("simreport.json", kSimReportFormat, kSimFileVersion, dump_json(report_to_json(cfg, r)));
  out.add("requests.csv", "kdisagg.requests", 1, requests_csv(r));
  if (a.events) out.add("events.csv", "kdisagg.events", 1, events_csv(r.events));
  if (a.ablate) {
    const auto ab = ablate_pipeline(cfg);
    out.add("ablation.csv", "kdisagg.ablation", 1, ablation_csv(ab));
    std::cerr << "ablation: no-pipeline " << format_fixed(ab.no_pipeline.throughput, 3)
              << " req/s, naive " << format_fixed(ab.naive.throughput, 3) << ", priority "
              << format_fixed(ab.priority.throughput, 3) << "\n";
  }
  out.write(c.out);
  std::cerr << "simulate: " << r.completed_in_window << " requests in window, "
            << format_fixed(r.throughput, 3) << " req/s, mean latency "
            << format_fixed(r.mean_request_latency * 1e3, 3) << " ms\n";
  return kOk;
}

struct ServeArgs {
  std::vector<std::string> problems, latency, throughput;
  std::string workload, monitor;
  std::optional<double> window, beta, beta_down, stall;
  std::vector<double> windows{0.03, 0.3}, betas{1.1, 1.5};
  bool events = false;
};

struct Serving {
  SimConfig cfg;
  PolicyPlacements placements;
  MonitorConfig mc;
};

Serving load_serving(const ServeArgs& a, const Common& c) {
  if (a.problems.size() != a.latency.size() || a.problems.size() != a.throughput.size())
    throw CLI::ValidationError("--problem, --latency and --throughput must be given together");
  Serving s;
  for (std::size_t i = 0; i < a.problems.size(); ++i) {
    auto lat = load_pattern(a.problems[i], a.latency[i]);
    auto thr = load_pattern(a.problems[i], a.throughput[i]);
    if (lat.id != thr.id)
      throw FormatError(a.throughput[i] + ": pattern '" + thr.id + "' does not match '" + lat.id + "'");
    s.placements.latency.push_back(lat.assign);
    s.placements.throughput.push_back(thr.assign);
    s.cfg.patterns.push_back(std::move(lat));
  }
  apply_workload(load_workload(a.workload, c.seed), s.cfg, a.workload);
  if (!a.monitor.empty()) s.mc = monitor_from_json(load(a.monitor, kMonitorFormat, kMonitorFileVersion), a.monitor);
  if (a.window) s.mc.window = *a.window;
  if (a.beta) s.mc.beta = *a.beta;
  if (a.beta_down) s.mc.beta_down = *a.beta_down;
  if (a.stall) s.mc.stall = *a.stall;
  s.mc.validate();
  return s;
}

std::string switches_csv(const std::vector<SwitchRecord>& sw) {
  std::string s = "window,to,requested_s,drained_s,resumed_s\n";
  for (const auto& r : sw)
    s += std::to_string(r.window) + "," + to_string(r.to) + "," + format_fixed(to_seconds(r.requested), 9) +
         "," + format_fixed(to_seconds(r.drained), 9) + "," + format_fixed(to_seconds(r.resumed), 9) + "\n";
  return s;
}

int cmd_serve(const ServeArgs& a, const Common& c) {
  const auto s = load_serving(a, c);
  const auto run = run_monitored(s.cfg, s.placements, s.mc);
  const auto audit = audit_stalls(run.report.events, s.mc.stall);
  Outputs out("serve", "serve");
  out.note("seed", c.seed);
  out.note("monitor", monitor_to_json(s.mc));
  out.note("stall_audit", {{"switches", audit.switches},
                           {"stalled_s", to_seconds(audit.stalled)},
                           {"expected_s", to_seconds(audit.expected)},
                           {"drain_s", to_seconds(audit.drain)},
                           {"balanced", audit.balanced()}});
  SimConfig shown = s.cfg;
  out.add("simreport.json", kSimReportFormat, kSimFileVersion, dump_json(report_to_json(shown, run.report)));
  out.add("requests.csv", "kdisagg.requests", 1, requests_csv(run.report));
  out.add("windows.csv", "kdisagg.windows", 1, windows_csv(run.windows));
  out.add("switches.csv", "kdisagg.switches", 1, switches_csv(run.switches));
  if (a.events) out.add("events.csv", "kdisagg.events", 1, events_csv(run.report.events));
  out.write(c.out);
  std::cerr << "serve: " << run.report.requests.size() << " requests, " << run.windows.size()
            << " windows, " << run.switches.size() << " switches, stall audit "
            << (audit.balanced() ? "balanced" : "UNBALANCED") << "\n";
  return kOk;
}

int cmd_sweep(const ServeArgs& a, const Common& c) {
  const auto s = load_serving(a, c);
  const auto rows = sweep_sensitivity(s.cfg, s.placements, a.windows, a.betas, s.mc);
  Outputs out("sweep", "sweep");
  out.note("seed", c.seed);
  out.add("sweep.csv", "kdisagg.sweep", 1, sweep_csv(rows));
  out.write(c.out);
  for (const auto& r : rows)
    std::cerr << "sweep: W=" << format_double(r.window * 1e3) << " ms beta=" << format_double(r.beta)
              << " switches=" << r.switches << " normalized latency "
              << format_fixed(r.mean_normalized_latency, 3) << "\n";
  return kOk;
}

// ---- report ------------------------------------------------------------------

int cmd_report(const std::string& problem, const std::vector<std::string>& placements, const Common& c) {
  const auto p = problem_from_json(load(problem, kProblemFormat, kPlannerFileVersion), problem);
  json j;
  j["format"] = "kdisagg.report";
  j["version"] = 1;
  j["placements"] = json::array();
  std::string md = "# kdisagg placement report\n\n"
                   "| placement | objective | value (ms) | cut edges | GPUs used | price | perf/$ |\n"
                   "|---|---|---|---|---|---|---|\n";
  for (const auto& path : placements) {
    const json pj = load(path, kPlacementFormat, kPlannerFileVersion);
    const auto assign = assignment_from_json(pj, p.gpus, path);
    if (assign.size() != p.node_count()) throw FormatError(path + ": placement does not match the problem's nodes");
    auto q = p;
    q.objective = objective_from(pj.at("objective").get<std::string>());
    const auto pl = evaluate(q, assign);
    std::vector<bool> used(p.gpu_count(), false);
    for (int g : assign) used[static_cast<std::size_t>(g)] = true;
    double price = 0;
    std::size_t n_used = 0;
    for (std::size_t g = 0; g < used.size(); ++g)
      if (used[g]) {
        ++n_used;
        price += g < p.gpus.size() ? p.gpus[g].price : 1.0;
      }
    const double perf = pl.objective_value > 0 ? 1.0 / pl.objective_value : 0;
    const double per_dollar = price > 0 ? perf / price : 0;
    const std::string name = fs::path(path).filename().string();
    const double stated = pj.value("objective_value", pl.objective_value);
    j["placements"].push_back({{"file", name},
                               {"objective", to_string(q.objective)},
                               {"objective_value", pl.objective_value},
                               {"stated_value", stated},
                               {"audit_matches", std::abs(stated - pl.objective_value) <= 1e-9 * std::max(1.0, stated)},
                               {"cut_edges", pl.cut.size()},
                               {"gpus_used", n_used},
                               {"price", price},
                               {"perf_per_dollar", per_dollar}});
    md += "| " + name + " | " + to_string(q.objective) + " | " + format_fixed(pl.objective_value * 1e3, 6) + " | " +
          std::to_string(pl.cut.size()) + " | " + std::to_string(n_used) + " | " + format_double(price) +
          " | " + format_fixed(per_dollar, 3) + " |\n";
  }
  Outputs out("report", "report");
  out.add("report.json", "kdisagg.report", 1, dump_json(j));
  out.add("report.md", "kdisagg.report.md", 1, md);
  out.write(c.out);
  std::cerr << md;
  return kOk;
}

// ---- instrument ----------------------------------------------------------------

int cmd_instrument(const std::vector<std::string>& kirs, const Common& c) {
  Outputs out("instrument", "instrument");
  for (const auto& path : kirs) {
    const auto k = parse_kernel(read_text_file(path));
    const auto plan = plan_instrumentation(k);
    std::string name = fs::path(path).stem().string() + ".inst.kir";
    out.add(name, "kir", 1, emit_instrumented(k, plan));
    std::cerr << "instrument: " << k.name << ", " << plan.slots.size() << " slots\n";
  }
  out.write(c.out);
  return kOk;
}

int run(int argc, char** argv) {
  CLI::App app{"kdisagg: kernel-level disaggregation planner and simulator"};
  app.require_subcommand(1);
  Common common;

  std::string trace;
  auto* analyze = app.add_subcommand("analyze", "Build the dependency graph and access report of a trace");
  analyze->add_option("trace", trace, "Trace file (.jsonl)")->required();
  add_common(analyze, common);

  PlanArgs pa;
  auto* plan = app.add_subcommand("plan", "Solve a placement for one dependency graph");
  plan->add_option("--ddg", pa.ddg, "Dependency graph from analyze");
  plan->add_option("--gpus", pa.gpus, "GPU spec file");
  plan->add_option("--links", pa.links, "Link matrix file");
  plan->add_option("--profile", pa.profile, "Per-kernel latency profile");
  plan->add_option("--problem", pa.problem, "Self-contained problem file instead of the four above");
  plan->add_option("--pattern", pa.pattern, "Pattern name for output files");
  plan->add_option("--objective", pa.objective)->check(CLI::IsMember({"throughput", "latency"}))->capture_default_str();
  plan->add_option("--solver", pa.solver)->check(CLI::IsMember({"exact", "heuristic", "lp-export"}))->capture_default_str();
  plan->add_flag("--reduce", pa.reduce, "Collapse repeated layers before solving");
  plan->add_option("--default-pin-gpu", pa.default_pin_gpu, "GPU for pins that name none")->capture_default_str();
  plan->add_option("--max-evals", pa.max_evals, "Heuristic evaluation budget")->capture_default_str();
  add_common(plan, common);

  SimArgs sa;
  auto* simulate_cmd = app.add_subcommand("simulate", "Simulate a workload under fixed placements");
  simulate_cmd->add_option("--problem", sa.problems, "Problem file (repeat per pattern)")->required();
  simulate_cmd->add_option("--placement", sa.placements, "Placement file (repeat per pattern)")->required();
  simulate_cmd->add_option("--workload", sa.workload, "Workload file")->required();
  simulate_cmd->add_option("--priority", sa.priority)->check(CLI::IsMember({"fifo-priority", "fifo", "equal"}))->capture_default_str();
  simulate_cmd->add_option("--overhead", sa.overhead, "Scheduling overhead fraction")->capture_default_str();
  simulate_cmd->add_flag("--ablate", sa.ablate, "Also compare no-pipeline, naive and priority pipelining");
  simulate_cmd->add_flag("--events", sa.events, "Write the event log");
  add_common(simulate_cmd, common);

  ServeArgs va;
  auto serving_options = [&](CLI::App* cmd) {
    cmd->add_option("--problem", va.problems, "Problem file (repeat per pattern)")->required();
    cmd->add_option("--latency", va.latency, "Latency placement (repeat per pattern)")->required();
    cmd->add_option("--throughput", va.throughput, "Throughput placement (repeat per pattern)")->required();
    cmd->add_option("--workload", va.workload, "Open-loop workload file")->required();
    cmd->add_option("--monitor", va.monitor, "Monitor config file");
    cmd->add_option("--stall", va.stall, "Switch stall in seconds");
    cmd->add_option("--beta-down", va.beta_down, "Lower threshold (dual-threshold mode)");
    add_common(cmd, common);
  };
  auto* serve = app.add_subcommand("serve", "Serve an open-loop trace under the online monitor");
  serving_options(serve);
  serve->add_option("--window", va.window, "Monitor window in seconds");
  serve->add_option("--beta", va.beta, "Queueing threshold");
  serve->add_flag("--events", va.events, "Write the event log");
  auto* sweep = app.add_subcommand("sweep", "Sweep monitor window and threshold");
  serving_options(sweep);
  sweep->add_option("--windows", va.windows, "Windows in seconds")->delimiter(',')->capture_default_str();
  sweep->add_option("--betas", va.betas, "Thresholds")->delimiter(',')->capture_default_str();

  std::string rproblem;
  std::vector<std::string> rplacements;
  auto* report = app.add_subcommand("report", "Audit placements and report cost efficiency");
  report->add_option("--problem", rproblem, "Problem file")->required();
  report->add_option("--placement", rplacements, "Placement file (repeatable)")->required();
  add_common(report, common);

  std::vector<std::string> kirs;
  auto* instrument = app.add_subcommand("instrument", "Emit instrumented kernel IR");
  instrument->add_option("kir", kirs, "Kernel IR files")->required();
  add_common(instrument, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*analyze) return cmd_analyze(trace, common);
    if (*plan) return cmd_plan(pa, common);
    if (*simulate_cmd) return cmd_simulate(sa, common);
    if (*serve) return cmd_serve(va, common);
    if (*sweep) return cmd_sweep(va, common);
    if (*report) return cmd_report(rproblem, rplacements, common);
    if (*instrument) return cmd_instrument(kirs, common);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "kdisagg: " << e.what() << "\n";
    return kUsage;
  } catch (const PlanningError& e) {
    std::cerr << "kdisagg: planning error: " << e.what() << "\n";
    return kPlanning;
  } catch (const SimulationError& e) {
    std::cerr << "kdisagg: simulation error: " << e.what() << "\n";
    return kSimulation;
  } catch (const Error& e) {
    std::cerr << "kdisagg: " << e.what() << "\n";
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "kdisagg: internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kUsage;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
