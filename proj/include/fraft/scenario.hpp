#pragma once

#include <filesystem>

#include "fraft/adversary.hpp"
#include "fraft/auditor.hpp"

namespace fraft {

// High-level run description, mirroring the CLI flags.
struct ScenarioOptions {
  std::uint64_t nodes = 5;
  std::size_t txs = 20;
  std::uint64_t seed = 1;
  std::string attack = "none";  // none|fork|badvote|receipt-fraud|silent-leader|pingpong
  double attack_at = 0.5;
  std::optional<NodeId> byzantine;
  std::uint64_t chunk_size = 0;  // 0 = unlimited
  bool live = false;
  SimTime gst = 0;
  SimTime delta = 10;
  std::string receipt_case = "eq";       // eq|gt|lt
  std::string snapshot_mode = "honest";  // honest|truncated|fabricated
  std::optional<SimTime> horizon;
  std::optional<SimTime> tx_interval;
  std::vector<CrashWindow> crashes;
  bool record_transcript = true;
  bool paranoid = false;

  Json to_json() const;
};

struct ScenarioResult {
  SimConfig config;
  AttackPlan plan;
  Transcript transcript;
  std::optional<ClientReceipt> fraud_receipt;
};

// Validates options (throws std::invalid_argument on bad combinations),
// wires the attack, runs the simulation.
ScenarioResult run_scenario(const ScenarioOptions& opts);

// RunReport: config echo, per-node commit heights, safety flag, liveness
// metrics. Regenerating with the same options is byte-identical.
Json run_report(const ScenarioOptions& opts, const ScenarioResult& result);

// Persists every node's audit data plus report and any fraud receipt under
// `out`, in the chunked store layout.
void write_run(const std::filesystem::path& out, const ScenarioOptions& opts,
               const ScenarioResult& result);

struct AuditOptions {
  std::filesystem::path in;
  std::string mode = "early";  // early|full
  std::optional<std::filesystem::path> receipt;
};

struct AuditRun {
  Json report;
  int exit_code = 0;  // 0 consistent, 1 bad store, 2 culprits found
};

AuditRun run_audit(const AuditOptions& opts);

}  // namespace fraft
