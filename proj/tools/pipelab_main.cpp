// pipelab: generate, simulate and analyze pipeline-parallel schedules for
// long-context transformer training.
//
// Subcommands:
//   simulate         run one scenario file, emit metrics CSV + timeline JSON
//   sweep            run a cartesian grid of scenarios into one CSV
//   analyze          closed-form memory/bubble models only
//   verify           formula / balance / kernel / fixture suites
//   export-schedule  dump the generated schedule as JSON
//
// Exit codes: 0 ok, 2 invalid config, 3 schedule validation failure,
// 4 verification failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "nlohmann/json.hpp"

#include "pipelab/analytics.hpp"
#include "pipelab/gantt.hpp"
#include "pipelab/scenario.hpp"
#include "pipelab/schedule.hpp"
#include "pipelab/simulator.hpp"
#include "pipelab/verify.hpp"

namespace fs = std::filesystem;
using namespace pipelab;

namespace {

bool log_enabled() {
  const char* v = std::getenv("PIPELAB_LOG");
  return v != nullptr && std::string(v) != "" && std::string(v) != "0";
}

void logmsg(const std::string& msg) {
  if (log_enabled()) std::cerr << "[pipelab] " << msg << "\n";
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

struct RunOutput {
  Schedule schedule;
  SimResult result;
  Scenario scenario;
};

RunOutput run_scenario(const Scenario& sc) {
  sc.validate();
  GenConfig gc;
  gc.p = static_cast<std::int32_t>(sc.parallelism.pp);
  gc.v = static_cast<std::int32_t>(sc.parallelism.stages_per_device);
  gc.m = static_cast<std::int32_t>(sc.run.microbatches);
  gc.n = static_cast<std::int32_t>(sc.run.slices);
  gc.cost = sc.cost;
  gc.seq_len = sc.run.seq_len;
  Schedule sched = generate(sc.scheme, gc);

  SimInputs in;
  in.cost = sc.cost;
  in.memory = activation_bytes(sc.model, sc.parallelism, sc.run, sc.coeffs);
  in.comm = sc.comm;
  in.seq_len = sc.run.seq_len;
  in.exchange = sc.exchange;
  if (sc.cost.vocab_gemm > 0.0 || sc.run.vocab_parallel)
    sched = place_vocab(sched, sc.run.vocab_parallel, in);

  Diagnostics diag = validate_schedule(sched);
  if (!diag.ok()) {
    const Violation* v = diag.first();
    throw std::runtime_error("schedule validation failed: " + v->rule + ": " +
                             v->message);
  }
  RunOutput out{std::move(sched), {}, sc};
  out.result = simulate(out.schedule, in);
  return out;
}

const char* kMetricsHeader =
    "scheme,p,v,m,n,seq_len,exchange,vocab_parallel,makespan,makespan_seconds,"
    "bubble_fraction,peak_activation_bytes,peak_logits_bytes,p2p_bytes,"
    "exchange_bytes,peak_activation_units_dev1,analytic_memory_multiplier,"
    "analytic_bubble_bound\n";

std::string metrics_row(const RunOutput& ro, double time_scale) {
  const Scenario& sc = ro.scenario;
  const Metrics& mt = ro.result.metrics;
  Rat peak_act(0), peak_logits(0), p2p(0);
  std::int64_t units_dev1 = 0;
  for (std::size_t d = 0; d < ro.result.memory.per_device.size(); ++d) {
    const DeviceMemory& dm = ro.result.memory.per_device[d];
    if (dm.peak_activation_bytes > peak_act) peak_act = dm.peak_activation_bytes;
    if (dm.peak_logits_bytes > peak_logits) peak_logits = dm.peak_logits_bytes;
    if (d == 0) units_dev1 = dm.peak_activation_units;
  }
  for (const Rat& r : mt.p2p_bytes_sent) p2p += r;
  Rat exch = mt.exchange_bytes.empty() ? Rat(0) : mt.exchange_bytes[0];

  BubbleBound bb = bubble_bounds(sc.scheme, sc.parallelism.pp,
                                 sc.run.microbatches, sc.run.slices,
                                 sc.parallelism.stages_per_device);
  double bound = bb.exact ? bb.exact->to_double() : bb.interval->second.to_double();
  Rat mult = memory_multiplier(sc.scheme, sc.parallelism.pp, sc.run.microbatches,
                               sc.run.slices, sc.parallelism.stages_per_device);

  std::ostringstream os;
  os << to_string(sc.scheme) << ',' << sc.parallelism.pp << ','
     << sc.parallelism.stages_per_device << ',' << sc.run.microbatches << ','
     << sc.run.slices << ',' << sc.run.seq_len << ',' << to_string(sc.exchange)
     << ',' << (sc.run.vocab_parallel ? 1 : 0) << ',' << fmt(mt.makespan) << ','
     << fmt(mt.makespan * time_scale) << ',' << fmt(mt.bubble_fraction) << ','
     << peak_act.ceil_int() << ',' << peak_logits.ceil_int() << ','
     << p2p.ceil_int() << ',' << exch.ceil_int() << ',' << units_dev1 << ','
     << fmt(mult.to_double()) << ',' << fmt(bound) << '\n';
  return os.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir,
                 const std::string& gantt_mode, double time_scale,
                 const std::vector<std::pair<std::string, std::string>>& overrides) {
  Scenario sc = load_scenario_file(scenario_path);
  for (auto& [key, val] : overrides) {
    if (key == "scheme") sc.scheme = scheme_from_string(val);
    else if (key == "p") sc.parallelism.pp = std::stoll(val);
    else if (key == "v") sc.parallelism.stages_per_device = std::stoll(val);
    else if (key == "m") sc.run.microbatches = std::stoll(val);
    else if (key == "n") sc.run.slices = std::stoll(val);
    else if (key == "seq-len") sc.run.seq_len = std::stoll(val);
    else if (key == "exchange") sc.exchange = exchange_mode_from_string(val);
    else if (key == "vocab-parallel") sc.run.vocab_parallel = val == "1";
  }
  logmsg("simulating " + scenario_path);
  RunOutput ro = run_scenario(sc);

  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "metrics.csv",
             std::string(kMetricsHeader) + metrics_row(ro, time_scale));
  write_file(fs::path(out_dir) / "timeline.json",
             gantt_json(ro.schedule, ro.result.timeline));
  if (gantt_mode == "svg")
    write_file(fs::path(out_dir) / "gantt.svg",
               gantt_svg(ro.schedule, ro.result.timeline));
  logmsg("makespan " + fmt(ro.result.metrics.makespan) + ", bubble " +
         fmt(ro.result.metrics.bubble_fraction));
  return 0;
}

int cmd_sweep(const std::string& grid_path, const std::string& out_dir,
              double time_scale) {
  std::ifstream f(grid_path);
  if (!f) throw std::invalid_argument("cannot open grid file: " + grid_path);
  std::stringstream ss;
  ss << f.rdbuf();
  nlohmann::ordered_json j = nlohmann::ordered_json::parse(ss.str());
  if (!j.contains("base"))
    throw std::invalid_argument("grid file needs a \"base\" scenario");
  Scenario base = scenario_from_json(j["base"].dump());

  auto list_of = [&](const char* key, std::vector<std::string> fallback) {
    std::vector<std::string> out;
    if (j.contains("grid") && j["grid"].contains(key)) {
      for (auto& e : j["grid"][key])
        out.push_back(e.is_string() ? e.get<std::string>()
                                    : nlohmann::ordered_json(e).dump());
    } else {
      out = std::move(fallback);
    }
    return out;
  };
  std::int64_t base_tps = base.run.seq_len / base.run.slices;
  auto schemes = list_of("scheme", {to_string(base.scheme)});
  auto ps = list_of("p", {std::to_string(base.parallelism.pp)});
  auto vs = list_of("v", {std::to_string(base.parallelism.stages_per_device)});
  auto ms = list_of("m", {std::to_string(base.run.microbatches)});
  auto nops = list_of("n_over_p", {});
  auto tps = list_of("tokens_per_slice", {std::to_string(base_tps)});

  std::vector<Scenario> points;
  for (auto& sname : schemes)
    for (auto& pstr : ps)
      for (auto& vstr : vs)
        for (auto& mstr : ms)
          for (auto& tstr : tps) {
            std::vector<std::string> ns;
            if (nops.empty()) {
              ns.push_back(std::to_string(base.run.slices));
            } else {
              for (auto& nop : nops)
                ns.push_back(std::to_string(std::stoll(nop) * std::stoll(pstr)));
            }
            for (auto& nstr : ns) {
              Scenario sc = base;
              sc.scheme = scheme_from_string(sname);
              sc.parallelism.pp = std::stoll(pstr);
              sc.parallelism.stages_per_device = std::stoll(vstr);
              sc.run.microbatches = std::stoll(mstr);
              std::int64_t n = std::stoll(nstr);
              if (sc.scheme == Scheme::GPipe || sc.scheme == Scheme::OneFOneB ||
                  sc.scheme == Scheme::Interleaved1F1B ||
                  sc.scheme == Scheme::ZBV || sc.scheme == Scheme::VHalf)
                n = 1;
              if (sc.scheme != Scheme::Interleaved1F1B &&
                  sc.scheme != Scheme::ZBV && sc.scheme != Scheme::VHalf)
                sc.parallelism.stages_per_device = 1;
              sc.run.slices = n;
              sc.run.seq_len = std::stoll(tstr) * n;
              points.push_back(sc);
            }
          }

  // Scenarios run concurrently; row order follows the grid order.
  std::vector<std::future<std::string>> futs;
  futs.reserve(points.size());
  for (const Scenario& sc : points)
    futs.push_back(std::async(std::launch::async, [sc, time_scale] {
      if (!scheme_accepts(sc.scheme, sc.parallelism.pp, sc.run.microbatches,
                          sc.run.slices, sc.parallelism.stages_per_device))
        return std::string();  // infeasible point, skipped
      RunOutput ro = run_scenario(sc);
      return metrics_row(ro, time_scale);
    }));
  std::string csv = kMetricsHeader;
  for (auto& fut : futs) csv += fut.get();

  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "sweep.csv", csv);
  logmsg("wrote " + (fs::path(out_dir) / "sweep.csv").string());
  return 0;
}

int cmd_analyze(const std::string& scheme_s, std::int64_t p, std::int64_t v,
                std::int64_t m, std::int64_t n) {
  Scheme scheme = scheme_from_string(scheme_s);
  if (!scheme_accepts(scheme, p, m, n, v))
    throw std::invalid_argument("configuration not accepted by this scheme");
  Rat mult = memory_multiplier(scheme, p, m, n, v);
  BubbleBound bb = bubble_bounds(scheme, p, m, n, v);
  std::cout << "scheme,p,v,m,n,memory_multiplier,bubble_lo,bubble_hi\n";
  double lo, hi;
  if (bb.exact) lo = hi = bb.exact->to_double();
  else { lo = bb.interval->first.to_double(); hi = bb.interval->second.to_double(); }
  std::cout << scheme_s << ',' << p << ',' << v << ',' << m << ',' << n << ','
            << fmt(mult.to_double()) << ',' << fmt(lo) << ',' << fmt(hi) << "\n";
  return 0;
}

int cmd_export_schedule(const std::string& scenario_path,
                        const std::string& out_file) {
  Scenario sc = load_scenario_file(scenario_path);
  RunOutput ro = run_scenario(sc);
  std::string text = schedule_to_json(ro.schedule);
  if (out_file.empty()) std::cout << text << "\n";
  else write_file(out_file, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pipeline-parallelism scheduling laboratory"};
  app.require_subcommand(1);

  std::string scenario_path, out_dir = "out", gantt_mode = "none";
  std::string grid_path, suite = "all", out_file;
  std::string scheme_s = "slimpipe";
  std::int64_t p = 4, v = 1, m = 4, n = 8;
  double time_scale = 1.0;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::string ov_scheme, ov_exchange;
  std::int64_t ov_p = -1, ov_v = -1, ov_m = -1, ov_n = -1, ov_seq = -1;
  bool ov_vocab = false;

  CLI::App* sim = app.add_subcommand("simulate", "simulate one scenario file");
  sim->add_option("scenario", scenario_path, "scenario JSON file")->required();
  sim->add_option("--out", out_dir, "output directory");
  sim->add_option("--gantt", gantt_mode, "svg|json|none")
      ->check(CLI::IsMember({"svg", "json", "none"}));
  sim->add_option("--time-scale", time_scale, "seconds per work unit");
  sim->add_option("--scheme", ov_scheme, "override scheme");
  sim->add_option("--p", ov_p, "override pipeline size");
  sim->add_option("--v", ov_v, "override stages per device");
  sim->add_option("--m", ov_m, "override microbatches");
  sim->add_option("--n", ov_n, "override slices");
  sim->add_option("--seq-len", ov_seq, "override sequence length");
  sim->add_option("--exchange", ov_exchange, "off|on|early");
  sim->add_flag("--vocab-parallel", ov_vocab, "distribute the vocabulary");

  CLI::App* swp = app.add_subcommand("sweep", "run a scenario grid");
  swp->add_option("grid", grid_path, "grid JSON file")->required();
  swp->add_option("--out", out_dir, "output directory");
  swp->add_option("--time-scale", time_scale, "seconds per work unit");

  CLI::App* ver = app.add_subcommand("verify", "run verification suites");
  ver->add_option("--suite", suite, "formulas|balance|kernel|fixtures|all");

  CLI::App* ana = app.add_subcommand("analyze", "closed-form models only");
  ana->add_option("--scheme", scheme_s, "pipeline scheme")->required();
  ana->add_option("--p", p, "pipeline size")->required();
  ana->add_option("--v", v, "stages per device");
  ana->add_option("--m", m, "microbatches")->required();
  ana->add_option("--n", n, "slices per microbatch");

  CLI::App* exp = app.add_subcommand("export-schedule", "dump schedule JSON");
  exp->add_option("scenario", scenario_path, "scenario JSON file")->required();
  exp->add_option("--out", out_file, "output file (stdout when omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      if (!ov_scheme.empty()) overrides.push_back({"scheme", ov_scheme});
      if (ov_p > 0) overrides.push_back({"p", std::to_string(ov_p)});
      if (ov_v > 0) overrides.push_back({"v", std::to_string(ov_v)});
      if (ov_m > 0) overrides.push_back({"m", std::to_string(ov_m)});
      if (ov_n > 0) overrides.push_back({"n", std::to_string(ov_n)});
      if (ov_seq > 0) overrides.push_back({"seq-len", std::to_string(ov_seq)});
      if (!ov_exchange.empty()) overrides.push_back({"exchange", ov_exchange});
      if (ov_vocab) overrides.push_back({"vocab-parallel", "1"});
      return cmd_simulate(scenario_path, out_dir, gantt_mode, time_scale,
                          overrides);
    }
    if (swp->parsed()) return cmd_sweep(grid_path, out_dir, time_scale);
    if (ver->parsed()) {
      int failures = run_verify_suite(suite, std::cout);
      if (failures < 0) return 2;
      return failures == 0 ? 0 : 4;
    }
    if (ana->parsed()) return cmd_analyze(scheme_s, p, v, m, n);
    if (exp->parsed()) return cmd_export_schedule(scenario_path, out_file);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
