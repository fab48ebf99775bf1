#include "fraft/scenario.hpp"

#include <algorithm>
#include <fstream>

namespace fraft {

namespace {

AttackPlan::Kind parse_attack(const std::string& s) {
  if (s == "none") return AttackPlan::Kind::None;
  if (s == "fork") return AttackPlan::Kind::Fork;
  if (s == "badvote") return AttackPlan::Kind::BadVote;
  if (s == "receipt-fraud") return AttackPlan::Kind::ReceiptFraud;
  if (s == "silent-leader") return AttackPlan::Kind::SilentLeader;
  if (s == "pingpong") return AttackPlan::Kind::PingPong;
  throw std::invalid_argument("unknown attack: " + s);
}

AttackPlan::ReceiptCase parse_receipt_case(const std::string& s) {
  if (s == "eq") return AttackPlan::ReceiptCase::Eq;
  if (s == "gt") return AttackPlan::ReceiptCase::Gt;
  if (s == "lt") return AttackPlan::ReceiptCase::Lt;
  throw std::invalid_argument("unknown receipt case: " + s);
}

AttackPlan::SnapshotMode parse_snapshot_mode(const std::string& s) {
  if (s == "honest") return AttackPlan::SnapshotMode::Honest;
  if (s == "truncated") return AttackPlan::SnapshotMode::Truncated;
  if (s == "fabricated") return AttackPlan::SnapshotMode::Fabricated;
  throw std::invalid_argument("unknown snapshot mode: " + s);
}

struct Layout {
  SimTime start = 0;     // first injection
  SimTime interval = 0;  // spacing between injections
  SimTime window = 30;   // how long an orchestrated attack step is given
};

Workload spaced_workload(std::size_t txs, const Layout& lay, std::size_t pause_after,
                         SimTime pause) {
  Workload w = Workload::generate(txs, lay.start, lay.interval);
  for (std::size_t k = pause_after + 1; k < w.requests.size(); ++k) {
    w.requests[k].time += pause;
  }
  return w;
}

}  // namespace

Json ScenarioOptions::to_json() const {
  Json j;
  j["nodes"] = nodes;
  j["txs"] = txs;
  j["seed"] = seed;
  j["attack"] = attack;
  j["attack_at"] = attack_at;
  j["byzantine"] = byzantine ? Json(*byzantine) : Json(nullptr);
  j["chunk_size"] = chunk_size;
  j["live"] = live;
  j["gst"] = gst;
  j["delta"] = delta;
  j["receipt_case"] = receipt_case;
  j["snapshot_mode"] = snapshot_mode;
  return j;
}

ScenarioResult run_scenario(const ScenarioOptions& opts) {
  if (opts.nodes < 3 || opts.nodes % 2 == 0) {
    throw std::invalid_argument("--nodes must be odd and >= 3");
  }
  if (opts.txs == 0) throw std::invalid_argument("--txs must be positive");
  if (opts.attack_at < 0.0 || opts.attack_at > 1.0) {
    throw std::invalid_argument("--attack-at must be in [0, 1]");
  }

  AttackPlan plan;
  plan.kind = parse_attack(opts.attack);
  plan.trigger_at = opts.attack_at;
  plan.receipt_case = parse_receipt_case(opts.receipt_case);
  plan.snapshot_mode = parse_snapshot_mode(opts.snapshot_mode);

  const std::uint64_t n = opts.nodes;
  const std::uint64_t f = (n - 1) / 2;
  const bool live = opts.live || plan.kind == AttackPlan::Kind::PingPong;

  SimConfig cfg;
  cfg.n = n;
  cfg.seed = opts.seed;
  cfg.gst = opts.gst;
  cfg.delta = opts.delta;
  cfg.link_delay = std::min<SimTime>(2, opts.delta);
  cfg.client_delay = cfg.link_delay;
  cfg.live = live;
  cfg.node.live_timers = LiveTimers::minimal(opts.delta);
  cfg.record_transcript = opts.record_transcript;
  cfg.paranoid_checks = opts.paranoid;
  cfg.crashes = opts.crashes;
  cfg.pre_gst_chaos = opts.gst > 0;

  Layout lay;
  lay.start = live ? 8 * opts.delta + 40 : 40;
  lay.interval = opts.tx_interval.value_or(live ? std::max<SimTime>(2 * opts.delta, 12)
                                                : std::max<SimTime>(6 * cfg.link_delay, 12));
  SimTime attack_pause = lay.window + 80;

  std::size_t max_trigger = opts.txs > 2 ? opts.txs - 2 : opts.txs - 1;
  plan.trigger_index = std::clamp<std::size_t>(
      static_cast<std::size_t>(plan.trigger_at * static_cast<double>(opts.txs)), 1, max_trigger);

  // Pick the Byzantine node and the orchestration each attack needs.
  NodeId byz = 0;
  ElectionScript script;
  switch (plan.kind) {
    case AttackPlan::Kind::None:
      break;
    case AttackPlan::Kind::Fork:
      byz = opts.byzantine.value_or(0);
      script.entries = {{byz, 5}};
      break;
    case AttackPlan::Kind::BadVote:
      byz = opts.byzantine.value_or(n - 1);
      if (byz == 0) {
        throw std::invalid_argument("badvote requires a Byzantine follower, not the initial leader");
      }
      if (byz <= f) {
        throw std::invalid_argument("badvote requires the Byzantine node to hold the victim entry");
      }
      script.entries = {{0, 5}};
      break;
    case AttackPlan::Kind::ReceiptFraud:
      if (plan.receipt_case == AttackPlan::ReceiptCase::Gt) {
        byz = opts.byzantine.value_or(1);
        if (byz == 0 || byz > f) {
          throw std::invalid_argument(
              "receipt-fraud gt requires a Byzantine follower among the entry holders");
        }
        script.entries = {{0, 5}};
      } else {
        byz = opts.byzantine.value_or(0);
        if (byz != 0) {
          throw std::invalid_argument("receipt-fraud eq/lt requires the initial leader (node 0)");
        }
        script.entries = {{0, 5}};
      }
      break;
    case AttackPlan::Kind::SilentLeader:
      if (live) {
        byz = opts.byzantine.value_or(1 % n);
        if (byz != 1 % n) {
          throw std::invalid_argument(
              "live silent-leader requires the first round-robin candidate (node 1)");
        }
      } else {
        byz = opts.byzantine.value_or(0);
        script.entries = {{byz, 5}};
      }
      break;
    case AttackPlan::Kind::PingPong:
      break;  // fixed pair below
  }
  if (plan.kind == AttackPlan::Kind::PingPong) {
    plan.byzantine = {1, (1 + f) % n == 0 ? 3 : 1 + f};
  } else if (plan.kind != AttackPlan::Kind::None) {
    plan.byzantine = {byz};
  }
  cfg.byzantine = plan.byzantine;

  // Workload: an orchestrated attack gets a quiet window after its trigger.
  Workload workload;
  SimTime t_trigger = lay.start + static_cast<SimTime>(plan.trigger_index) * lay.interval;
  bool needs_pause = plan.kind == AttackPlan::Kind::BadVote ||
                     plan.kind == AttackPlan::Kind::ReceiptFraud;
  if (needs_pause) {
    workload = spaced_workload(opts.txs, lay, plan.trigger_index, attack_pause);
  } else {
    workload = Workload::generate(opts.txs, lay.start, lay.interval);
  }

  DeliveryFilter filter;
  switch (plan.kind) {
    case AttackPlan::Kind::BadVote: {
      // starve the future candidate and its co-voter of the victim entry,
      // then retire the leader and let the starved candidate run
      SimTime w_end = t_trigger + lay.window;
      cfg.crashes.push_back({0, w_end, 0});
      script.entries.push_back({1, w_end + 10});
      filter = [t_trigger, w_end, f](SimTime now, NodeId from, NodeId to,
                                     const Message& m) -> DeliveryDecision {
        if (now >= t_trigger - 1 && now < w_end && from == 0 && to >= 1 && to <= f &&
            (std::holds_alternative<MsgAppendEntries>(m) || std::holds_alternative<MsgCommit>(m))) {
          return {true, std::nullopt};
        }
        return {};
      };
      break;
    }
    case AttackPlan::Kind::ReceiptFraud: {
      SimTime w_end = t_trigger + lay.window;
      if (plan.receipt_case == AttackPlan::ReceiptCase::Gt) {
        // keep the victim entry away from the last f nodes, then retire the
        // leader and let the Byzantine node claim a stale candidacy
        cfg.crashes.push_back({0, w_end, 0});
        script.entries.push_back({byz, w_end + 10});
        filter = [t_trigger, w_end, n, f](SimTime now, NodeId from, NodeId to,
                                          const Message& m) -> DeliveryDecision {
          if (now >= t_trigger - 1 && now < w_end && from == 0 && to >= n - f &&
              (std::holds_alternative<MsgAppendEntries>(m) ||
               std::holds_alternative<MsgCommit>(m))) {
            return {true, std::nullopt};
          }
          return {};
        };
      } else if (plan.receipt_case == AttackPlan::ReceiptCase::Lt) {
        // the silenced leader falls to a candidate that never saw the entry
        script.entries.push_back({static_cast<NodeId>(f + 1), w_end + 10});
      }
      break;
    }
    default:
      break;
  }

  SimTime default_horizon = workload.requests.back().time + 4000;
  if (plan.kind == AttackPlan::Kind::PingPong) default_horizon = 4000;
  cfg.horizon = opts.horizon.value_or(default_horizon);
  cfg.finalize();  // derive node.n/f before adversaries copy the node config

  static std::map<std::uint64_t, KeyRegistry> registry_cache;
  auto reg_it = registry_cache.find(n);
  if (reg_it == registry_cache.end()) {
    reg_it = registry_cache.emplace(n, KeyRegistry::create(n)).first;
  }
  const KeyRegistry* registry = &reg_it->second;

  Sim sim(cfg, registry);
  if (!script.entries.empty() && !live) sim.set_timer_override(script.as_override());
  if (filter) sim.set_delivery_filter(filter);

  const std::vector<std::uint8_t>& trigger_payload = workload.requests[plan.trigger_index].payload;
  ReceiptFraudAdversary* fraud = nullptr;
  switch (plan.kind) {
    case AttackPlan::Kind::Fork:
      sim.install_adversary(byz, std::make_unique<ForkLeaderAdversary>(byz, cfg.node, registry,
                                                                       plan, trigger_payload));
      break;
    case AttackPlan::Kind::BadVote:
      sim.install_adversary(byz, std::make_unique<BadVoteAdversary>(byz, cfg.node, registry, plan,
                                                                    trigger_payload));
      break;
    case AttackPlan::Kind::ReceiptFraud: {
      std::vector<std::uint8_t> fraud_payload;
      if (plan.receipt_case == AttackPlan::ReceiptCase::Gt) {
        fraud_payload = workload.requests[plan.trigger_index + 1].payload;
      } else {
        fraud_payload = trigger_payload;
        fraud_payload.push_back(0xfe);
      }
      auto adv = std::make_unique<ReceiptFraudAdversary>(byz, cfg.node, registry, plan,
                                                         trigger_payload, fraud_payload);
      fraud = adv.get();
      sim.install_adversary(byz, std::move(adv));
      break;
    }
    case AttackPlan::Kind::SilentLeader:
      sim.install_adversary(byz,
                            std::make_unique<SilentLeaderAdversary>(byz, cfg.node, registry, plan));
      break;
    case AttackPlan::Kind::PingPong: {
      auto ids = std::vector<NodeId>(plan.byzantine.begin(), plan.byzantine.end());
      NodeId a = ids[0], b = ids[1];
      // holder sets keep every honest candidate between the pair stale
      std::set<NodeId> holders_a = {a, b};
      for (NodeId v = b + 1; v < n && holders_a.size() < f + 1; ++v) holders_a.insert(v);
      std::set<NodeId> holders_b = {a, b};
      for (NodeId v = 2; holders_b.size() < f + 1 && v < n; ++v) {
        if (v != b) holders_b.insert(v);
      }
      sim.install_adversary(a, std::make_unique<PingPongAdversary>(a, cfg.node, registry, plan,
                                                                   holders_a));
      sim.install_adversary(b, std::make_unique<PingPongAdversary>(b, cfg.node, registry, plan,
                                                                   holders_b));
      break;
    }
    case AttackPlan::Kind::None:
      break;
  }

  sim.add_workload(workload);
  ScenarioResult result;
  result.config = sim.config();
  result.plan = plan;
  result.transcript = sim.run();
  if (fraud) result.fraud_receipt = fraud->fraud_receipt();
  return result;
}

Json run_report(const ScenarioOptions& opts, const ScenarioResult& result) {
  Json report;
  report["options"] = opts.to_json();
  report["config"] = result.config.to_json();
  Json nodes = Json::array();
  for (const auto& snap : result.transcript.snapshots) {
    nodes.push_back(Json{{"id", snap.node},
                         {"byzantine", result.plan.byzantine.count(snap.node) > 0},
                         {"commit_index", snap.cc.index},
                         {"commit_term", snap.cc.term},
                         {"log_entries", snap.log.size()}});
  }
  report["nodes"] = nodes;
  report["summary"] = result.transcript.summary_json();
  report["fraud_receipt"] =
      result.fraud_receipt ? to_json(*result.fraud_receipt) : Json(nullptr);
  if (opts.record_transcript) {
    Json lines = Json::array();
    for (const auto& line : result.transcript.lines) lines.push_back(line);
    report["transcript"] = lines;
  }
  report["audit"] = nullptr;  // filled by the audit command
  return report;
}

void write_run(const std::filesystem::path& out, const ScenarioOptions& opts,
               const ScenarioResult& result) {
  Json extra;
  extra["options"] = opts.to_json();
  extra["n"] = result.config.n;
  extra["f"] = result.config.f();
  extra["seed"] = result.config.seed;
  extra["live"] = result.config.live;
  ChunkStore::write(out, result.transcript.snapshots, opts.chunk_size, extra);
  if (result.fraud_receipt) {
    std::ofstream rf(out / "receipt.json");
    rf << to_json(*result.fraud_receipt).dump(2) << '\n';
  }
  std::ofstream rep(out / "report.json");
  rep << run_report(opts, result).dump(2) << '\n';
}

AuditRun run_audit(const AuditOptions& opts) {
  AuditRun out;
  ChunkStore store = [&] {
    try {
      return ChunkStore::open(opts.in);
    } catch (const std::exception& e) {
      throw std::runtime_error(e.what());
    }
  }();

  const Json& extra = store.manifest().extra;
  std::uint64_t n = extra.value("n", store.manifest().n);
  std::uint64_t f = extra.value("f", (n - 1) / 2);
  KeyRegistry registry = KeyRegistry::create(n);

  std::vector<std::unique_ptr<SnapshotView>> owned;
  std::vector<SnapshotView*> views;
  for (NodeId id : store.node_ids()) {
    owned.push_back(store.view(id));
    views.push_back(owned.back().get());
  }

  GlobalAudit audit = (opts.mode == "full")
                          ? audit_all_full(views, registry, f)
                          : audit_all_early(views, registry, f);

  Json report;
  report["mode"] = opts.mode;
  Json integrity = Json::array();
  for (const auto& [node, reason] : audit.integrity) {
    integrity.push_back(Json{{"node", node}, {"reason", to_string(reason)}});
  }
  report["integrity"] = integrity;
  report["verdict"] = to_json(audit.verdict);
  report["stats"] = Json{{"integrity", audit.integrity_counters.to_json()},
                         {"consistency", audit.consistency_counters.to_json()}};

  std::set<NodeId> culprits = audit.verdict.culprits;

  if (opts.receipt) {
    std::ifstream rf(*opts.receipt);
    if (!rf) throw std::runtime_error("cannot open receipt file");
    Json rj;
    rf >> rj;
    ClientReceipt receipt = receipt_from_json(rj);
    Json receipt_report;
    if (!verify_receipt(receipt, registry, f)) {
      receipt_report["status"] = "invalid";
    } else {
      // pool every certificate any node can produce, used or not
      std::map<Term, LeaderCert> pool;
      std::vector<IntegrityResult> results(views.size());
      for (std::size_t i = 0; i < views.size(); ++i) {
        results[i] = check_integrity(*views[i], registry, f);
        if (!results[i].ok) continue;
        for (const auto& [t, lc] : results[i].elections) pool.emplace(t, lc);
        for (const auto& [t, lc] : results[i].unused_elections) pool.emplace(t, lc);
      }
      receipt_report["status"] = "verified";
      Json verdicts = Json::array();
      for (std::size_t i = 0; i < views.size(); ++i) {
        if (!results[i].ok) continue;
        AuditVerdict v = audit_receipt(receipt, *views[i], results[i], registry, f, pool);
        if (!v.consistent()) {
          culprits.insert(v.culprits.begin(), v.culprits.end());
          Json vj = to_json(v);
          vj["against_node"] = views[i]->node();
          verdicts.push_back(vj);
        }
      }
      receipt_report["verdicts"] = verdicts;
    }
    report["receipt_audit"] = receipt_report;
  }

  Json all = Json::array();
  for (NodeId id : culprits) all.push_back(id);
  report["culprits"] = all;
  report["consistent"] = culprits.empty();
  out.report = std::move(report);
  out.exit_code = culprits.empty() ? 0 : 2;
  return out;
}

}  // namespace fraft
