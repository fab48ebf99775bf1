#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "fraft/scenario.hpp"

using namespace fraft;

namespace {

// FORENSIC_RAFT_SEED overrides --seed so CI can fuzz without touching flags.
std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("FORENSIC_RAFT_SEED");
  if (!s || !*s) return std::nullopt;
  return std::strtoull(s, nullptr, 10);
}

int cmd_simulate(const ScenarioOptions& opts, const std::string& out_dir) {
  ScenarioResult result = run_scenario(opts);
  write_run(out_dir, opts, result);
  Json report = run_report(opts, result);
  std::cout << report.dump(2) << std::endl;
  std::cerr << "simulate: " << opts.txs << " txs over " << opts.nodes << " nodes";
  if (opts.attack != "none") std::cerr << ", attack " << opts.attack;
  std::cerr << "; safety violation: " << (result.transcript.safety_violation ? "YES" : "no")
            << "; snapshots in " << out_dir << std::endl;
  return 0;
}

int cmd_audit(const AuditOptions& opts) {
  AuditRun audit = run_audit(opts);
  std::cout << audit.report.dump(2) << std::endl;
  std::ofstream out(opts.in / "audit.json");
  out << audit.report.dump(2) << '\n';
  if (audit.exit_code == 0) {
    std::cerr << "audit: consistent, no culprits" << std::endl;
  } else {
    std::cerr << "audit: culprits " << audit.report.at("culprits").dump() << std::endl;
  }
  return audit.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forensic-raft: accountable Raft simulator and offline auditor"};
  app.require_subcommand(1);

  ScenarioOptions opts;
  std::string out_dir = "run_out";
  CLI::App* sim = app.add_subcommand("simulate", "run a deterministic cluster simulation");
  sim->add_option("--nodes", opts.nodes, "cluster size (odd, >= 3)")->capture_default_str();
  sim->add_option("--txs", opts.txs, "number of client transactions")->capture_default_str();
  sim->add_option("--seed", opts.seed, "rng seed")->capture_default_str();
  sim->add_option("--attack", opts.attack,
                  "none|fork|badvote|receipt-fraud|silent-leader|pingpong")
      ->capture_default_str();
  sim->add_option("--attack-at", opts.attack_at, "attack position as a workload fraction")
      ->capture_default_str();
  std::int64_t byz_flag = -1;
  sim->add_option("--byzantine", byz_flag, "byzantine node id (attack-specific default)");
  sim->add_option("--chunk-size", opts.chunk_size, "entries per chunk file, 0 = unlimited")
      ->capture_default_str();
  sim->add_flag("--live", opts.live, "liveness variant: round-robin elections and prevotes");
  sim->add_option("--gst", opts.gst, "global stabilization time (simulated ms)")
      ->capture_default_str();
  sim->add_option("--delta", opts.delta, "post-GST delay bound (simulated ms)")
      ->capture_default_str();
  sim->add_option("--receipt-case", opts.receipt_case, "receipt-fraud term relation: eq|gt|lt")
      ->capture_default_str();
  sim->add_option("--snapshot-mode", opts.snapshot_mode,
                  "byzantine audit submission: honest|truncated|fabricated")
      ->capture_default_str();
  std::int64_t horizon_flag = -1;
  sim->add_option("--horizon", horizon_flag, "simulated time limit (ms)");
  sim->add_option("--out", out_dir, "output directory")->capture_default_str();

  AuditOptions audit_opts;
  std::string receipt_path;
  CLI::App* audit = app.add_subcommand("audit", "audit the node stores written by simulate");
  audit->add_option("--in", audit_opts.in, "directory written by simulate")->required();
  audit->add_option("--mode", audit_opts.mode, "early|full")->capture_default_str();
  audit->add_option("--receipt", receipt_path, "client receipt to audit against the stores");

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      if (byz_flag >= 0) opts.byzantine = static_cast<NodeId>(byz_flag);
      if (horizon_flag >= 0) opts.horizon = horizon_flag;
      if (auto seed = env_seed()) opts.seed = *seed;
      return cmd_simulate(opts, out_dir);
    }
    if (audit->parsed()) {
      if (audit_opts.mode != "early" && audit_opts.mode != "full") {
        std::cerr << "error: --mode must be early or full" << std::endl;
        return 64;
      }
      if (!receipt_path.empty()) audit_opts.receipt = receipt_path;
      return cmd_audit(audit_opts);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << std::endl;
    return 64;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 64;
}
