#pragma once

#include <memory>

#include "fraft/sim.hpp"

namespace fraft {

struct AttackPlan {
  enum class Kind { None, Fork, BadVote, ReceiptFraud, SilentLeader, PingPong };
  enum class ReceiptCase { Eq, Gt, Lt };
  enum class SnapshotMode { Honest, Truncated, Fabricated };

  Kind kind = Kind::None;
  double trigger_at = 0.5;  // fraction of the workload
  std::set<NodeId> byzantine;
  ReceiptCase receipt_case = ReceiptCase::Eq;
  SnapshotMode snapshot_mode = SnapshotMode::Honest;

  std::size_t trigger_index = 0;  // derived: which request carries the attack
};

// Scripted election winners: at each FollowerTimeout arming, the next
// scheduled winner gets a timer that lands on fire_at and everyone else is
// pushed out of the way. This is how scenarios hand leadership to the node an
// attack needs without touching the protocol.
struct ElectionScript {
  struct Entry {
    NodeId winner = 0;
    SimTime fire_at = 0;
  };
  std::vector<Entry> entries;

  TimerOverride as_override() const;
};

// Base adversary: behaves exactly like an honest node until a subclass
// intercepts something. Keeps snapshot history so tampered audit submissions
// stay internally consistent.
class DelegatingAdversary : public Adversary {
 public:
  DelegatingAdversary(NodeId id, const NodeConfig& cfg, const KeyRegistry* reg, AttackPlan plan);

  NodeOutput start(SimTime now) override;
  NodeOutput on_message(NodeId sender, const Message& msg, SimTime now) override;
  NodeOutput on_timer(TimerKind kind, const Digest& key, SimTime now) override;
  Node::AuditData audit_data() const override;

  Node& inner() { return inner_; }

 protected:
  NodeOutput delegate_message(NodeId sender, const Message& msg, SimTime now);
  void record_history();
  Signature sign(const Digest& d) const { return registry_->sign(inner_.id(), d); }
  MsgAppendEntries single_entry_batch(const LogEntry& e, const Digest& h, const LeaderCert& lc) const;

  Node inner_;
  AttackPlan plan_;
  const KeyRegistry* registry_;
  std::vector<Node::AuditData> history_;
  LogIndex last_history_cc_ = 0;
};

// Forking leader: after the trigger transaction, runs two diverged replicas
// of itself and commits a distinct branch with each half of the followers.
class ForkLeaderAdversary final : public DelegatingAdversary {
 public:
  ForkLeaderAdversary(NodeId id, const NodeConfig& cfg, const KeyRegistry* reg, AttackPlan plan,
                      std::vector<std::uint8_t> trigger_payload);
  NodeOutput on_message(NodeId sender, const Message& msg, SimTime now) override;
  NodeOutput on_timer(TimerKind kind, const Digest& key, SimTime now) override;

 private:
  NodeOutput route_to_branch(bool branch_b, NodeId sender, const Message& msg, SimTime now);
  NodeOutput filter(NodeOutput out, bool branch_b);

  std::vector<std::uint8_t> trigger_payload_;
  std::vector<NodeId> part_a_, part_b_;
  std::unique_ptr<Node> branch_b_;
};

// Byzantine follower of the bad-vote example: acknowledges the victim entry
// without storing it, then votes for (and follows) the staler candidate as if
// it had never seen the entry.
class BadVoteAdversary final : public DelegatingAdversary {
 public:
  BadVoteAdversary(NodeId id, const NodeConfig& cfg, const KeyRegistry* reg, AttackPlan plan,
                   std::vector<std::uint8_t> trigger_payload);
  NodeOutput on_message(NodeId sender, const Message& msg, SimTime now) override;

 private:
  std::vector<std::uint8_t> trigger_payload_;
  bool acked_victim_ = false;
  Digest victim_ptr_;
  LogIndex victim_index_ = 0;
};

// Commitment-fraud leader covering the three dispute shapes: the receipt's
// term equal to, above, or below the term of the entry the honest nodes end
// up committing at the same height.
class ReceiptFraudAdversary final : public DelegatingAdversary {
 public:
  ReceiptFraudAdversary(NodeId id, const NodeConfig& cfg, const KeyRegistry* reg, AttackPlan plan,
                        std::vector<std::uint8_t> victim_payload,
                        std::vector<std::uint8_t> fraud_payload);
  NodeOutput on_message(NodeId sender, const Message& msg, SimTime now) override;
  NodeOutput on_timer(TimerKind kind, const Digest& key, SimTime now) override;

  const std::optional<ClientReceipt>& fraud_receipt() const { return receipt_; }

 private:
  enum class Phase { Follow, AwaitAcks, Electing, AwaitFakeAcks, Done };
  NodeOutput craft_and_send_entry(const LogEntry& e, const Digest& base, const LeaderCert& lc,
                                  std::span<const NodeId> targets);
  NodeOutput finish_certificate(SimTime now);

  std::vector<std::uint8_t> victim_payload_;
  std::vector<std::uint8_t> fraud_payload_;
  Phase phase_ = Phase::Follow;
  std::vector<NodeId> ack_targets_;
  LogEntry eps_;
  Digest eps_ptr_;
  Digest eps_base_;
  std::vector<Signature> eps_acks_;
  std::optional<ClientReceipt> receipt_;
  // gt variant
  VoteRequest fake_req_;
  std::vector<Signature> fake_votes_;
  LeaderCert fake_lc_;
  bool silenced_ = false;
};

// Live-mode censor: wins its round-robin slot honestly, heartbeats, and drops
// every client request on the floor.
class SilentLeaderAdversary final : public DelegatingAdversary {
 public:
  using DelegatingAdversary::DelegatingAdversary;
  NodeOutput on_message(NodeId sender, const Message& msg, SimTime now) override;
};

// One half of the two-node liveness loop: censors as leader, keeps its
// replication private to the holder set, never commits.
class PingPongAdversary final : public DelegatingAdversary {
 public:
  PingPongAdversary(NodeId id, const NodeConfig& cfg, const KeyRegistry* reg, AttackPlan plan,
                    std::set<NodeId> holders);
  NodeOutput on_message(NodeId sender, const Message& msg, SimTime now) override;
  NodeOutput on_timer(TimerKind kind, const Digest& key, SimTime now) override;

 private:
  NodeOutput filter(NodeOutput out, SimTime now);
  std::set<NodeId> holders_;
  std::uint64_t secret_counter_ = 0;
};

}  // namespace fraft
