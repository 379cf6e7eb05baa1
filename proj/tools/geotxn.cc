// geotxn: run, sweep and check geo-distributed transaction experiments.

#include <charconv>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "geotxn/checkers.h"
#include "geotxn/config.h"
#include "geotxn/harness.h"

namespace fs = std::filesystem;
using namespace geotxn;

namespace {

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& s) {
  const auto dots = s.find("..");
  auto num = [&](std::string_view v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
      throw CLI::ValidationError("--seeds", "expected a..b, got '" + s + "'");
    }
    return out;
  };
  if (dots == std::string::npos) {
    const auto v = num(s);
    return {v, v};
  }
  const auto lo = num(std::string_view(s).substr(0, dots));
  const auto hi = num(std::string_view(s).substr(dots + 2));
  if (hi < lo) throw CLI::ValidationError("--seeds", "empty range '" + s + "'");
  return {lo, hi};
}

bool report_checks(const RunResult& r, const std::string& label) {
  if (r.checks_ok()) return true;
  std::cerr << label << ": ";
  if (!r.quiesced) std::cerr << "did not quiesce before max_time; ";
  if (!r.atomicity.ok) {
    std::cerr << r.atomicity.violations.size() << " atomicity violation(s), first: "
              << r.atomicity.violations.front() << "; ";
  }
  if (!r.serializability.ok) {
    std::cerr << "conflict cycle through";
    for (TxnId t : r.serializability.cycle) std::cerr << ' ' << t;
  }
  std::cerr << '\n';
  return false;
}

int cmd_run(const std::string& config, std::optional<std::uint64_t> seed, const fs::path& out) {
  ExperimentConfig cfg = load_experiment(config);
  if (seed) cfg.seed = *seed;
  const RunResult r = run_experiment(cfg);
  emit_report(r, out);
  const auto& m = r.report;
  std::cout << m.name << " seed=" << m.seed << " committed=" << m.committed
            << " aborted=" << m.aborted << " tps=" << m.throughput_tps
            << " mean_ms=" << m.latency.mean_ms << " p99_ms=" << m.latency.p99_ms << '\n';
  return report_checks(r, m.name) ? 0 : 2;
}

int cmd_sweep(const std::string& config, const std::string& seeds, const fs::path& out) {
  const auto cells = load_sweep(config);
  const auto [lo, hi] = parse_seed_range(seeds);
  fs::create_directories(out);
  std::ofstream summary(out / "summary.csv");
  if (!summary) throw std::runtime_error("cannot write " + (out / "summary.csv").string());
  write_summary_header(summary);
  bool ok = true;
  for (const auto& base : cells) {
    for (std::uint64_t s = lo; s <= hi; ++s) {
      ExperimentConfig cfg = base;
      cfg.seed = s;
      const RunResult r = run_experiment(cfg);
      write_summary_row(summary, r.report);
      const fs::path cell = out / (cfg.name + "_s" + std::to_string(s));
      fs::create_directories(cell);
      std::ofstream cdf(cell / "latency_cdf.csv");
      write_latency_cdf(cdf, r.report);
      std::ofstream hist(cell / "lcs_hist.csv");
      write_lcs_hist(hist, r.report);
      std::cout << cfg.name << " seed=" << s << " committed=" << r.report.committed
                << " tps=" << r.report.throughput_tps << " p99_ms=" << r.report.latency.p99_ms
                << '\n';
      ok = report_checks(r, cfg.name + " seed " + std::to_string(s)) && ok;
    }
  }
  return ok ? 0 : 2;
}

int cmd_check(const fs::path& trace_file) {
  std::ifstream in(trace_file);
  if (!in) throw std::runtime_error("cannot open " + trace_file.string());
  const auto events = Trace::read_csv(in);
  const auto atom = check_atomicity(events);
  const auto ser = check_serializability(events);
  std::cout << "transactions: " << atom.classification.size()
            << " committed=" << atom.count(TxnClass::kCommitted)
            << " aborted=" << atom.count(TxnClass::kAborted)
            << " not_started=" << atom.count(TxnClass::kNotStarted) << '\n';
  std::cout << "atomicity: " << (atom.ok ? "ok" : "VIOLATED") << '\n';
  for (const auto& v : atom.violations) std::cout << "  " << v << '\n';
  std::cout << "serializability: " << (ser.ok ? "ok" : "VIOLATED") << " (" << ser.committed
            << " committed, " << ser.edges << " edges)\n";
  if (!ser.ok) {
    std::cout << "  cycle:";
    for (TxnId t : ser.cycle) std::cout << ' ' << t;
    std::cout << '\n';
  }
  return atom.ok && ser.ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geo-distributed transaction simulator"};
  app.require_subcommand(1);

  std::string config, seeds = "1..3", trace;
  std::optional<std::uint64_t> seed;
  fs::path out = "out";

  auto* run = app.add_subcommand("run", "Run one experiment and write CSV reports");
  run->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out, "Output directory")->capture_default_str();

  auto* sweep = app.add_subcommand("sweep", "Run every variant over a seed range");
  sweep->add_option("--config", config, "Experiment JSON")->required()->check(CLI::ExistingFile);
  sweep->add_option("--seeds", seeds, "Seed range a..b")->capture_default_str();
  sweep->add_option("--out", out, "Output directory")->capture_default_str();

  auto* check = app.add_subcommand("check", "Check a trace for atomicity and serializability");
  check->add_option("--trace", trace, "trace.csv")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, seed, out);
    if (*sweep) return cmd_sweep(config, seeds, out);
    return cmd_check(trace);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
