#pragma once

#include <deque>
#include <map>
#include <optional>
#include <set>

#include "fraft/message.hpp"
#include "fraft/types.hpp"

namespace fraft {

// Timeouts of the liveness variant. All durations are simulated milliseconds;
// delta is the post-GST delay bound they are validated against.
struct LiveTimers {
  SimTime heart = 10;
  SimTime cand = 20;
  SimTime voter = 40;
  SimTime client = 40;
  SimTime req = 20;

  // Throws std::invalid_argument unless heart >= delta, cand >= 2*delta,
  // voter >= cand + 2*delta, client >= 4*delta, req >= 2*delta.
  void validate(SimTime delta) const;
  static LiveTimers minimal(SimTime delta);
};

struct NodeConfig {
  std::uint64_t n = 3;
  std::uint64_t f = 1;
  bool live = false;
  // base-mode timeouts (vanilla style)
  SimTime tau_lo = 150;
  SimTime tau_hi = 300;
  SimTime tau_heart = 50;
  // live-mode timeouts
  SimTime delta = 10;
  LiveTimers live_timers;
  std::uint32_t prevote_threshold = 2;
};

// Conditions that let a node prevote for the next term in live mode.
enum class PrevoteCondition {
  A1_HeartbeatTimeout,
  A2_RpcTimeout,
  A3_InvalidLeaderData,
  A4_RequestUncommitted,
  B1_VoterTimeout,
  B2_InvalidCandidateData,
  C_CandidateFailure,
};

// One replicated-log node. Handlers are pure with respect to the outside
// world: each takes a message or timer event and returns the messages, timer
// commands and receipts to emit. The simulator owns delivery, timers and
// randomness; nodes never sample or block.
class Node {
 public:
  Node(NodeId id, const NodeConfig& cfg, const KeyRegistry* registry);

  NodeOutput start(SimTime now);
  NodeOutput on_message(NodeId sender, const Message& msg, SimTime now);
  NodeOutput on_timer(TimerKind kind, const Digest& key, SimTime now);
  NodeOutput on_recover(SimTime now);

  const NodeState& state() const { return st_; }
  NodeState& state_mut() { return st_; }
  const NodeConfig& config() const { return cfg_; }
  const KeyRegistry& registry() const { return *registry_; }
  NodeId id() const { return st_.id; }
  std::optional<NodeId> admitted_leader() const { return leader_; }

  // Audit quadruple (L, E, C, S): committed prefix, election list, latest CC,
  // per-term signatures over the committed prefix.
  struct AuditData {
    NodeId node = 0;
    std::vector<LogEntry> log;
    std::map<Term, LeaderCert> elections;
    CommitCert cc;
    std::map<Term, Signature> sigs;
  };
  AuditData audit_data() const;

  // Number of prevotes this node has emitted, per term (test hook).
  const std::set<Term>& prevotes_sent() const { return prevotes_sent_; }

 private:
  // message handlers
  NodeOutput on_client_tx(NodeId sender, const MsgClientTx& m, SimTime now);
  NodeOutput on_append_entries(NodeId sender, const MsgAppendEntries& m, SimTime now);
  NodeOutput on_ack(NodeId sender, const MsgAck& m, SimTime now);
  NodeOutput on_log_sync_req(NodeId sender, const MsgLogSyncReq& m, SimTime now);
  NodeOutput on_commit(NodeId sender, const MsgCommit& m, SimTime now);
  NodeOutput on_vote_request(NodeId sender, const MsgVoteRequest& m, SimTime now);
  NodeOutput on_vote(NodeId sender, const MsgVote& m, SimTime now);
  NodeOutput on_leader_cert(NodeId sender, const MsgLeaderCert& m, SimTime now);
  NodeOutput on_heartbeat(NodeId sender, const MsgHeartbeat& m, SimTime now);
  NodeOutput on_reject(NodeId sender, SimTime now);
  NodeOutput on_prevote(NodeId sender, const MsgPrevote& m, SimTime now);

  // shared machinery
  void become_follower(Term term, std::optional<NodeId> leader, NodeOutput& out);
  NodeOutput become_candidate(SimTime now);  // base mode
  void become_leader(NodeOutput& out);
  void start_replication(std::vector<std::uint8_t> payload, NodeOutput& out);
  void append_entry(const LogEntry& entry);
  void splice_entries(const MsgAppendEntries& m, NodeOutput& out);
  void mark_committed(const CommitCert& cc, NodeOutput& out);
  void check_request_watches();
  bool verify_term_tail_sig(const Signature& sig, const Digest& h, const LeaderCert& lc) const;
  MsgLogSyncReq sync_request() const;
  void arm_follower_timer(NodeOutput& out);
  Signature sign(const Digest& d) const { return registry_->sign(st_.id, d); }

  // live mode
  NodeOutput prevote_for(Term target, PrevoteCondition why, SimTime now);
  void maybe_enter_election(NodeOutput& out, SimTime now);
  void enter_election(Term term, NodeOutput& out, SimTime now);
  NodeOutput on_vote_request_live(NodeId sender, const MsgVoteRequest& m, SimTime now);
  void admit_leader(const LeaderCert& lc, NodeOutput& out);
  bool store_prevote(const Prevote& pv);

  NodeConfig cfg_;
  const KeyRegistry* registry_;
  NodeState st_;

  // volatile state
  std::optional<NodeId> leader_;
  struct OpenReplication {
    Digest pointer;
    Term term = 0;
    LogIndex index = 0;
    std::vector<Signature> acks;
  };
  std::optional<OpenReplication> open_;
  std::deque<std::vector<std::uint8_t>> tx_queue_;

  std::optional<VoteRequest> cand_req_;
  std::vector<Signature> votes_;
  std::set<NodeId> rejections_;

  // bookkeeping that keeps snapshots self-consistent: the creator signature
  // over each acknowledged batch tail in the uncommitted region, and where
  // each payload sits in the log
  std::map<LogIndex, Signature> sig_at_;
  std::map<Digest, LogIndex> payload_index_;

  // live mode
  std::map<Term, std::vector<Prevote>> prevote_store_;
  std::set<Term> prevotes_sent_;
  std::optional<Term> election_term_;
  std::map<Term, VoteRequest> pending_vote_reqs_;
  std::map<Digest, std::vector<std::uint8_t>> request_watch_;  // payload digest -> payload
};

}  // namespace fraft
