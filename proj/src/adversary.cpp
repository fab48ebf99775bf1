#include "fraft/adversary.hpp"

#include <algorithm>

namespace fraft {

namespace {

const std::vector<std::uint8_t>* client_payload(const Message& m) {
  const auto* tx = std::get_if<MsgClientTx>(&m);
  return tx ? &tx->payload : nullptr;
}

std::vector<std::uint8_t> variant_payload(std::vector<std::uint8_t> payload) {
  payload.push_back(0xff);  // a distinct transaction at the same height
  return payload;
}

}  // namespace

TimerOverride ElectionScript::as_override() const {
  std::vector<Entry> plan = entries;
  return [plan](SimTime now, NodeId node, TimerKind kind, SimTime) -> std::optional<SimTime> {
    if (kind != TimerKind::FollowerTimeout) return std::nullopt;
    for (const Entry& e : plan) {
      if (e.fire_at > now) {
        if (node == e.winner) return std::max<SimTime>(1, e.fire_at - now);
        return e.fire_at - now + 1000000;  // out of the running for this round
      }
    }
    return SimTime{1000000};
  };
}

// ---------------------------------------------------------------------------

DelegatingAdversary::DelegatingAdversary(NodeId id, const NodeConfig& cfg, const KeyRegistry* reg,
                                         AttackPlan plan)
    : inner_(id, cfg, reg), plan_(plan), registry_(reg) {}

NodeOutput DelegatingAdversary::start(SimTime now) { return inner_.start(now); }

NodeOutput DelegatingAdversary::on_message(NodeId sender, const Message& msg, SimTime now) {
  return delegate_message(sender, msg, now);
}

NodeOutput DelegatingAdversary::delegate_message(NodeId sender, const Message& msg, SimTime now) {
  NodeOutput out = inner_.on_message(sender, msg, now);
  record_history();
  return out;
}

NodeOutput DelegatingAdversary::on_timer(TimerKind kind, const Digest& key, SimTime now) {
  return inner_.on_timer(kind, key, now);
}

void DelegatingAdversary::record_history() {
  if (plan_.snapshot_mode != AttackPlan::SnapshotMode::Truncated) return;
  const CommitCert& cc = inner_.state().latest_cc;
  if (cc.index == last_history_cc_) return;
  last_history_cc_ = cc.index;
  // geometric thinning keeps a spread of restore points without O(H^2) space
  if (history_.size() >= 24) {
    std::vector<Node::AuditData> thinned;
    for (std::size_t i = 0; i < history_.size(); i += 2) thinned.push_back(std::move(history_[i]));
    history_ = std::move(thinned);
  }
  history_.push_back(inner_.audit_data());
}

Node::AuditData DelegatingAdversary::audit_data() const {
  switch (plan_.snapshot_mode) {
    case AttackPlan::SnapshotMode::Honest:
      return inner_.audit_data();
    case AttackPlan::SnapshotMode::Truncated: {
      if (history_.empty()) return inner_.audit_data();
      return history_[history_.size() / 2];  // an earlier committed prefix
    }
    case AttackPlan::SnapshotMode::Fabricated: {
      Node::AuditData d = inner_.audit_data();
      if (d.log.size() > 1) {
        LogEntry& e = d.log[d.log.size() / 2 == 0 ? 1 : d.log.size() / 2];
        e.payload.push_back(0x5a);  // breaks the hash chain
      } else {
        d.cc.pointer.bytes[0] ^= 0x5a;
      }
      return d;
    }
  }
  return inner_.audit_data();
}

MsgAppendEntries DelegatingAdversary::single_entry_batch(const LogEntry& e, const Digest& h,
                                                         const LeaderCert& lc) const {
  MsgAppendEntries ae;
  ae.entries.push_back(e);
  ae.sigs[e.term] = registry_->sign(inner_.id(), h);
  ae.lcs[e.term] = lc;
  return ae;
}

// ---------------------------------------------------------------------------
// Fork

ForkLeaderAdversary::ForkLeaderAdversary(NodeId id, const NodeConfig& cfg, const KeyRegistry* reg,
                                         AttackPlan plan, std::vector<std::uint8_t> trigger_payload)
    : DelegatingAdversary(id, cfg, reg, plan), trigger_payload_(std::move(trigger_payload)) {
  std::vector<NodeId> followers;
  for (NodeId v = 0; v < cfg.n; ++v) {
    if (v != id) followers.push_back(v);
  }
  part_a_.assign(followers.begin(), followers.begin() + static_cast<std::ptrdiff_t>(cfg.f));
  part_b_.assign(followers.begin() + static_cast<std::ptrdiff_t>(cfg.f), followers.end());
}

NodeOutput ForkLeaderAdversary::filter(NodeOutput out, bool branch_b) {
  const std::vector<NodeId>& part = branch_b ? part_b_ : part_a_;
  NodeOutput kept;
  for (Envelope& env : out.msgs) {
    if (env.broadcast && !std::holds_alternative<MsgHeartbeat>(env.msg)) {
      for (NodeId to : part) kept.msgs.push_back({to, false, env.msg});
    } else if (env.broadcast && branch_b) {
      continue;  // heartbeats come from branch A only
    } else {
      kept.msgs.push_back(std::move(env));
    }
  }
  if (!branch_b) {
    kept.timers = std::move(out.timers);
    kept.receipts = std::move(out.receipts);
  }
  kept.notes = std::move(out.notes);
  return kept;
}

NodeOutput ForkLeaderAdversary::route_to_branch(bool branch_b, NodeId sender, const Message& msg,
                                                SimTime now) {
  Node& target = branch_b ? *branch_b_ : inner_;
  return filter(target.on_message(sender, msg, now), branch_b);
}

NodeOutput ForkLeaderAdversary::on_timer(TimerKind kind, const Digest& key, SimTime now) {
  NodeOutput out = inner_.on_timer(kind, key, now);
  return branch_b_ ? filter(std::move(out), false) : out;
}

NodeOutput ForkLeaderAdversary::on_message(NodeId sender, const Message& msg, SimTime now) {
  if (const auto* payload = client_payload(msg)) {
    if (!branch_b_ && *payload == trigger_payload_ && inner_.state().role == Role::Leader) {
      branch_b_ = std::make_unique<Node>(inner_);  // diverge from here on
    }
    if (!branch_b_) return delegate_message(sender, msg, now);
    NodeOutput out = route_to_branch(false, sender, msg, now);
    MsgClientTx alt{variant_payload(*payload), false};
    out.merge(route_to_branch(true, kClientId, Message{alt}, now));
    record_history();
    return out;
  }
  if (!branch_b_) return delegate_message(sender, msg, now);
  bool from_b = std::find(part_b_.begin(), part_b_.end(), sender) != part_b_.end();
  NodeOutput out = route_to_branch(from_b, sender, msg, now);
  record_history();
  return out;
}

// ---------------------------------------------------------------------------
// Bad vote

BadVoteAdversary::BadVoteAdversary(NodeId id, const NodeConfig& cfg, const KeyRegistry* reg,
                                   AttackPlan plan, std::vector<std::uint8_t> trigger_payload)
    : DelegatingAdversary(id, cfg, reg, plan), trigger_payload_(std::move(trigger_payload)) {}

NodeOutput BadVoteAdversary::on_message(NodeId sender, const Message& msg, SimTime now) {
  if (const auto* ae = std::get_if<MsgAppendEntries>(&msg); ae && !acked_victim_) {
    bool has_victim = std::any_of(ae->entries.begin(), ae->entries.end(), [&](const LogEntry& e) {
      return e.payload == trigger_payload_;
    });
    if (has_victim && !ae->entries.empty() &&
        ae->entries.front().index == inner_.state().tip_index() + 1) {
      // sign the replication without storing it
      Digest h = inner_.state().tip_pointer;
      for (const LogEntry& e : ae->entries) h = hash_step(h, e);
      acked_victim_ = true;
      victim_ptr_ = h;
      victim_index_ = ae->entries.back().index;
      NodeOutput out;
      out.send(sender, MsgAck{h, sign(h)});
      return out;
    }
  }
  if (const auto* commit = std::get_if<MsgCommit>(&msg);
      commit && acked_victim_ && commit->cc.index == victim_index_ &&
      commit->cc.pointer == victim_ptr_) {
    return {};  // pretend the commitment never happened
  }
  return delegate_message(sender, msg, now);
}

// ---------------------------------------------------------------------------
// Receipt fraud

ReceiptFraudAdversary::ReceiptFraudAdversary(NodeId id, const NodeConfig& cfg,
                                             const KeyRegistry* reg, AttackPlan plan,
                                             std::vector<std::uint8_t> victim_payload,
                                             std::vector<std::uint8_t> fraud_payload)
    : DelegatingAdversary(id, cfg, reg, plan),
      victim_payload_(std::move(victim_payload)),
      fraud_payload_(std::move(fraud_payload)) {}

NodeOutput ReceiptFraudAdversary::craft_and_send_entry(const LogEntry& e, const Digest& base,
                                                       const LeaderCert& lc,
                                                       std::span<const NodeId> targets) {
  eps_ = e;
  eps_base_ = base;
  eps_ptr_ = hash_step(base, e);
  eps_acks_.clear();
  ack_targets_.assign(targets.begin(), targets.end());
  NodeOutput out;
  for (NodeId to : targets) out.send(to, single_entry_batch(e, eps_ptr_, lc));
  return out;
}

NodeOutput ReceiptFraudAdversary::finish_certificate(SimTime now) {
  const std::uint64_t f = inner_.config().f;
  std::vector<Signature> quorum(eps_acks_.begin(), eps_acks_.begin() + f);
  CommitCert cc =
      assemble_commit_cert(eps_.term, eps_.index, eps_ptr_, quorum, sign(eps_ptr_), *registry_, f);
  ClientReceipt receipt{{eps_}, eps_base_, cc};
  receipt_ = receipt;
  NodeOutput out;
  out.receipts.push_back(receipt);  // the certificate goes to the client and nobody else

  if (plan_.receipt_case == AttackPlan::ReceiptCase::Eq) {
    // bury the certified entry under a conflicting one on the real branch
    phase_ = Phase::Done;
    out.merge(inner_.on_message(kClientId, MsgClientTx{fraud_payload_, false}, now));
  } else if (plan_.receipt_case == AttackPlan::ReceiptCase::Lt) {
    phase_ = Phase::Done;
    silenced_ = true;  // stop heartbeating; the next election buries the entry
  } else {
    phase_ = Phase::Done;
  }
  return out;
}

NodeOutput ReceiptFraudAdversary::on_timer(TimerKind kind, const Digest& key, SimTime now) {
  if (silenced_ && kind == TimerKind::LeaderHeartbeat) return {};
  if (kind == TimerKind::FollowerTimeout && plan_.receipt_case == AttackPlan::ReceiptCase::Gt &&
      phase_ == Phase::Follow) {
    // claim candidacy with a freshness one entry short of the committed tip
    const NodeState& st = inner_.state();
    LogIndex base_index = st.latest_cc.index - 1;
    fake_req_ = VoteRequest{inner_.id(), st.current_term + 1,
                            {st.log[base_index].term, base_index}, st.pointer_cache[base_index]};
    fake_votes_.clear();
    phase_ = Phase::Electing;
    NodeOutput out;
    out.broadcast(MsgVoteRequest{fake_req_});
    return out;
  }
  return DelegatingAdversary::on_timer(kind, key, now);
}

NodeOutput ReceiptFraudAdversary::on_message(NodeId sender, const Message& msg, SimTime now) {
  const std::uint64_t f = inner_.config().f;
  const std::uint64_t n = inner_.config().n;

  if (const auto* payload = client_payload(msg)) {
    if (phase_ == Phase::Follow && *payload == victim_payload_ &&
        inner_.state().role == Role::Leader &&
        plan_.receipt_case != AttackPlan::ReceiptCase::Gt) {
      // replicate the certified entry to the first f followers only
      const NodeState& st = inner_.state();
      LogEntry e{st.current_term, st.tip_index() + 1, victim_payload_};
      std::vector<NodeId> targets;
      for (NodeId v = 0; v < n && targets.size() < f; ++v) {
        if (v != inner_.id()) targets.push_back(v);
      }
      phase_ = Phase::AwaitAcks;
      return craft_and_send_entry(e, st.tip_pointer, st.election_list.at(st.current_term), targets);
    }
    if (phase_ != Phase::Follow || silenced_) return {};  // censoring
    return delegate_message(sender, msg, now);
  }

  if (const auto* ack = std::get_if<MsgAck>(&msg);
      ack && (phase_ == Phase::AwaitAcks || phase_ == Phase::AwaitFakeAcks) &&
      ack->pointer == eps_ptr_) {
    if (ack->sig.signer == sender && registry_->verify(sender, eps_ptr_, ack->sig) &&
        std::none_of(eps_acks_.begin(), eps_acks_.end(),
                     [&](const Signature& s) { return s.signer == sender; })) {
      eps_acks_.push_back(ack->sig);
      if (eps_acks_.size() >= f) return finish_certificate(now);
    }
    return {};
  }

  if (const auto* vote = std::get_if<MsgVote>(&msg); vote && phase_ == Phase::Electing) {
    if (vote->sig.signer == sender && registry_->verify(sender, fake_req_.digest(), vote->sig) &&
        std::none_of(fake_votes_.begin(), fake_votes_.end(),
                     [&](const Signature& s) { return s.signer == sender; })) {
      fake_votes_.push_back(vote->sig);
      if (fake_votes_.size() >= f) {
        fake_lc_.request = fake_req_;
        fake_lc_.voters = {inner_.id()};
        fake_lc_.signatures = {sign(fake_req_.digest())};
        for (const Signature& v : fake_votes_) {
          fake_lc_.voters.push_back(v.signer);
          fake_lc_.signatures.push_back(v);
        }
        NodeOutput out;
        out.broadcast(MsgLeaderCert{fake_lc_});
        // certify a conflicting entry at the committed height, on the stale base
        LogEntry e{fake_req_.term, fake_req_.freshness.index + 1, fraud_payload_};
        std::vector<NodeId> targets(fake_lc_.voters.begin() + 1, fake_lc_.voters.end());
        phase_ = Phase::AwaitFakeAcks;
        out.merge(craft_and_send_entry(e, fake_req_.pointer, fake_lc_, targets));
        return out;
      }
    }
    return {};
  }

  if (phase_ == Phase::Electing || phase_ == Phase::AwaitFakeAcks) {
    if (std::holds_alternative<MsgReject>(msg)) return {};
  }
  return delegate_message(sender, msg, now);
}

// ---------------------------------------------------------------------------
// Silent leader

NodeOutput SilentLeaderAdversary::on_message(NodeId sender, const Message& msg, SimTime now) {
  if (client_payload(msg)) return {};  // censor every request, keep heartbeating
  return delegate_message(sender, msg, now);
}

// ---------------------------------------------------------------------------
// Two-node leadership loop

PingPongAdversary::PingPongAdversary(NodeId id, const NodeConfig& cfg, const KeyRegistry* reg,
                                     AttackPlan plan, std::set<NodeId> holders)
    : DelegatingAdversary(id, cfg, reg, plan), holders_(std::move(holders)) {}

NodeOutput PingPongAdversary::filter(NodeOutput out, SimTime now) {
  NodeOutput kept;
  bool became_leader = false;
  for (const Note& n : out.notes) {
    if (n.kind == Note::Kind::BecameLeader) became_leader = true;
  }
  for (Envelope& env : out.msgs) {
    if (env.broadcast && std::holds_alternative<MsgAppendEntries>(env.msg)) {
      for (NodeId to : holders_) {
        if (to != inner_.id()) kept.msgs.push_back({to, false, env.msg});
      }
    } else if (env.broadcast && std::holds_alternative<MsgCommit>(env.msg)) {
      continue;  // never commit
    } else {
      kept.msgs.push_back(std::move(env));
    }
  }
  kept.timers = std::move(out.timers);
  kept.notes = std::move(out.notes);
  // receipts dropped: nothing commits under this leadership
  if (became_leader) {
    std::string s = "secret-" + std::to_string(inner_.id()) + "-" +
                    std::to_string(secret_counter_++);
    NodeOutput fed =
        inner_.on_message(kClientId, MsgClientTx{{s.begin(), s.end()}, false}, now);
    kept.merge(filter(std::move(fed), now));
  }
  return kept;
}

NodeOutput PingPongAdversary::on_message(NodeId sender, const Message& msg, SimTime now) {
  if (client_payload(msg)) return {};                       // censor
  if (std::holds_alternative<MsgAck>(msg)) return {};       // keep the branch uncommitted
  return filter(inner_.on_message(sender, msg, now), now);
}

NodeOutput PingPongAdversary::on_timer(TimerKind kind, const Digest& key, SimTime now) {
  return filter(inner_.on_timer(kind, key, now), now);
}

}  // namespace fraft
