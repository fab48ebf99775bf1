#include "fraft/node.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace fraft {

void NodeOutput::merge(NodeOutput&& other) {
  for (auto& e : other.msgs) msgs.push_back(std::move(e));
  for (auto& t : other.timers) timers.push_back(t);
  for (auto& r : other.receipts) receipts.push_back(std::move(r));
  for (auto& n : other.notes) notes.push_back(n);
}

Digest prevote_digest(Term term) {
  std::vector<std::uint8_t> buf = {'P', 'R', 'E', 'V', 'O', 'T', 'E'};
  append_be64(buf, term);
  return sha256(buf);
}

const char* message_name(const Message& m) {
  static constexpr const char* kNames[] = {
      "client_tx", "append_entries", "ack",  "log_sync_req", "commit",  "committed",
      "reject",    "vote_request",   "vote", "leader_cert",  "heartbeat", "prevote"};
  return kNames[m.index()];
}

void LiveTimers::validate(SimTime delta) const {
  if (heart < delta || cand < 2 * delta || voter < cand + 2 * delta || client < 4 * delta ||
      req < 2 * delta) {
    throw std::invalid_argument("live timer configuration violates timeout constraints");
  }
}

LiveTimers LiveTimers::minimal(SimTime delta) {
  LiveTimers t;
  t.heart = delta;
  t.cand = 2 * delta;
  t.voter = t.cand + 2 * delta;
  t.client = 4 * delta;
  t.req = 2 * delta;
  return t;
}

Node::Node(NodeId id, const NodeConfig& cfg, const KeyRegistry* registry)
    : cfg_(cfg), registry_(registry) {
  if (cfg.live) cfg_.live_timers.validate(cfg.delta);
  st_.id = id;
  st_.log.push_back(LogEntry::init());
  st_.pointer_cache.push_back(Digest::zero());
  st_.tip_pointer = Digest::zero();
  st_.committed_pointer = Digest::zero();
  st_.latest_cc = genesis_commit_cert(*registry);
}

NodeOutput Node::start(SimTime) {
  NodeOutput out;
  arm_follower_timer(out);
  return out;
}

NodeOutput Node::on_recover(SimTime) {
  // Persistent state survives; role and leadership knowledge do not.
  st_.role = Role::Follower;
  leader_.reset();
  open_.reset();
  tx_queue_.clear();
  cand_req_.reset();
  votes_.clear();
  rejections_.clear();
  election_term_.reset();
  prevote_store_.clear();
  pending_vote_reqs_.clear();
  request_watch_.clear();
  NodeOutput out;
  arm_follower_timer(out);
  return out;
}

void Node::arm_follower_timer(NodeOutput& out) {
  if (cfg_.live) {
    out.timers.push_back({TimerKind::HeartbeatWatch, false, cfg_.live_timers.heart + 2 * cfg_.delta});
  } else {
    out.timers.push_back({TimerKind::FollowerTimeout, false, 0, true});
  }
}

MsgLogSyncReq Node::sync_request() const {
  return {st_.latest_cc.term, st_.latest_cc.index, st_.committed_pointer};
}

NodeOutput Node::on_message(NodeId sender, const Message& msg, SimTime now) {
  return std::visit(
      [&](const auto& m) -> NodeOutput {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, MsgClientTx>) return on_client_tx(sender, m, now);
        else if constexpr (std::is_same_v<T, MsgAppendEntries>) return on_append_entries(sender, m, now);
        else if constexpr (std::is_same_v<T, MsgAck>) return on_ack(sender, m, now);
        else if constexpr (std::is_same_v<T, MsgLogSyncReq>) return on_log_sync_req(sender, m, now);
        else if constexpr (std::is_same_v<T, MsgCommit>) return on_commit(sender, m, now);
        else if constexpr (std::is_same_v<T, MsgCommitted>) return {};
        else if constexpr (std::is_same_v<T, MsgReject>) return on_reject(sender, now);
        else if constexpr (std::is_same_v<T, MsgVoteRequest>) return on_vote_request(sender, m, now);
        else if constexpr (std::is_same_v<T, MsgVote>) return on_vote(sender, m, now);
        else if constexpr (std::is_same_v<T, MsgLeaderCert>) return on_leader_cert(sender, m, now);
        else if constexpr (std::is_same_v<T, MsgHeartbeat>) return on_heartbeat(sender, m, now);
        else return on_prevote(sender, m, now);
      },
      msg);
}

NodeOutput Node::on_timer(TimerKind kind, const Digest& key, SimTime now) {
  NodeOutput out;
  switch (kind) {
    case TimerKind::FollowerTimeout:
      if (st_.role != Role::Leader) return become_candidate(now);
      break;
    case TimerKind::LeaderHeartbeat:
      if (st_.role == Role::Leader) {
        out.broadcast(MsgHeartbeat{st_.current_term});
        out.timers.push_back({TimerKind::LeaderHeartbeat, false, cfg_.live ? cfg_.live_timers.heart
                                                                           : cfg_.tau_heart});
      }
      break;
    case TimerKind::HeartbeatWatch:
      if (st_.role == Role::Follower && !election_term_.has_value()) {
        return prevote_for(st_.current_term + 1, PrevoteCondition::A1_HeartbeatTimeout, now);
      }
      break;
    case TimerKind::RequestWatch:
      if (request_watch_.count(key)) {
        return prevote_for(st_.current_term + 1, PrevoteCondition::A4_RequestUncommitted, now);
      }
      break;
    case TimerKind::CandidateWindow:
      if (st_.role == Role::Candidate && election_term_ == st_.current_term) {
        return prevote_for(st_.current_term + 1, PrevoteCondition::C_CandidateFailure, now);
      }
      break;
    case TimerKind::VoterWindow:
      if (election_term_ == st_.current_term && st_.role != Role::Leader && !leader_.has_value()) {
        return prevote_for(st_.current_term + 1, PrevoteCondition::B1_VoterTimeout, now);
      }
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Role transitions

void Node::become_follower(Term term, std::optional<NodeId> leader, NodeOutput& out) {
  st_.role = Role::Follower;
  st_.current_term = term;
  leader_ = leader;
  open_.reset();
  tx_queue_.clear();
  cand_req_.reset();
  votes_.clear();
  rejections_.clear();
  election_term_.reset();
  arm_follower_timer(out);
}

NodeOutput Node::become_candidate(SimTime) {
  NodeOutput out;
  st_.role = Role::Candidate;
  leader_.reset();
  st_.current_term += 1;
  cand_req_ = VoteRequest{st_.id, st_.current_term, st_.tail_freshness(), st_.tip_pointer};
  votes_.clear();
  rejections_.clear();
  out.broadcast(MsgVoteRequest{*cand_req_});
  // retry with a fresh randomized timeout if the election does not resolve
  out.timers.push_back({TimerKind::FollowerTimeout, false, 0, true});
  out.notes.push_back({Note::Kind::BecameCandidate, st_.current_term});
  return out;
}

void Node::become_leader(NodeOutput& out) {
  LeaderCert lc;
  lc.request = *cand_req_;
  lc.voters.push_back(st_.id);
  lc.signatures.push_back(sign(cand_req_->digest()));
  for (const Signature& v : votes_) {
    if (lc.voters.size() >= cfg_.f + 1) break;
    lc.voters.push_back(v.signer);
    lc.signatures.push_back(v);
  }
  st_.role = Role::Leader;
  leader_ = st_.id;
  st_.election_list[st_.current_term] = lc;
  election_term_.reset();
  out.broadcast(MsgLeaderCert{lc});
  out.timers.push_back({TimerKind::LeaderHeartbeat, false,
                        cfg_.live ? cfg_.live_timers.heart : cfg_.tau_heart});
  out.timers.push_back({TimerKind::FollowerTimeout, true});
  out.timers.push_back({TimerKind::HeartbeatWatch, true});
  out.timers.push_back({TimerKind::CandidateWindow, true});
  out.timers.push_back({TimerKind::VoterWindow, true});
  out.notes.push_back({Note::Kind::BecameLeader, st_.current_term});
}

// ---------------------------------------------------------------------------
// Elections (base mode; live-mode election lives in node_live.cpp)

NodeOutput Node::on_vote_request(NodeId sender, const MsgVoteRequest& m, SimTime now) {
  if (cfg_.live) return on_vote_request_live(sender, m, now);
  const VoteRequest& req = m.req;
  NodeOutput out;
  if (req.term <= st_.current_term) return out;  // discard low-term requests
  become_follower(req.term, std::nullopt, out);
  if (staler_than(req.freshness, st_.tail_freshness())) {
    out.send(sender, MsgReject{});
    return out;
  }
  st_.voted_for = {req.leader, req.term};
  out.send(sender, MsgVote{sign(req.digest())});
  out.notes.push_back({Note::Kind::VoteGranted, req.term, req.leader});
  return out;
}

NodeOutput Node::on_vote(NodeId sender, const MsgVote& m, SimTime) {
  NodeOutput out;
  if (st_.role != Role::Candidate || !cand_req_) return out;
  if (m.sig.signer != sender || sender == st_.id) return out;
  if (!registry_->verify(sender, cand_req_->digest(), m.sig)) return out;  // forged or stale
  for (const Signature& v : votes_) {
    if (v.signer == sender) return out;  // duplicate votes count once
  }
  votes_.push_back(m.sig);
  if (votes_.size() >= cfg_.f) become_leader(out);
  return out;
}

NodeOutput Node::on_leader_cert(NodeId sender, const MsgLeaderCert& m, SimTime) {
  NodeOutput out;
  const LeaderCert& lc = m.lc;
  if (lc.request.term < st_.current_term) return out;
  if (lc.request.leader != sender) return out;
  if (!verify_quorum_cert(lc, *registry_, cfg_.f)) {
    if (cfg_.live && election_term_ == lc.request.term) {
      return prevote_for(st_.current_term + 1, PrevoteCondition::B2_InvalidCandidateData, 0);
    }
    return out;
  }
  if (cfg_.live) {
    admit_leader(lc, out);
    return out;
  }
  become_follower(lc.request.term, lc.request.leader, out);
  st_.election_list[lc.request.term] = lc;
  out.notes.push_back({Note::Kind::AdmittedLeader, lc.request.term, lc.request.leader});
  return out;
}

NodeOutput Node::on_heartbeat(NodeId sender, const MsgHeartbeat& m, SimTime) {
  NodeOutput out;
  if (st_.role == Role::Follower && leader_ == sender && m.term == st_.current_term) {
    arm_follower_timer(out);
  }
  return out;
}

NodeOutput Node::on_reject(NodeId sender, SimTime now) {
  NodeOutput out;
  // Rejections matter only to a live-mode candidate: f+1 of them end the bid.
  if (cfg_.live && st_.role == Role::Candidate && election_term_ == st_.current_term) {
    rejections_.insert(sender);
    if (rejections_.size() >= cfg_.f + 1) {
      return prevote_for(st_.current_term + 1, PrevoteCondition::C_CandidateFailure, now);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Log replication

NodeOutput Node::on_client_tx(NodeId sender, const MsgClientTx& m, SimTime) {
  NodeOutput out;
  Digest pd = sha256(std::span<const std::uint8_t>(m.payload.data(), m.payload.size()));
  if (st_.role != Role::Leader) {
    if (leader_ && *leader_ != st_.id) {
      out.send(*leader_, MsgClientTx{m.payload, m.second_trial});
      if (cfg_.live && m.second_trial && sender == kClientId && !request_watch_.count(pd)) {
        request_watch_[pd] = m.payload;
        out.timers.push_back({TimerKind::RequestWatch, false, cfg_.live_timers.req, false, pd});
      }
    }
    return out;
  }
  auto it = payload_index_.find(pd);
  if (it != payload_index_.end()) {
    if (it->second <= st_.latest_cc.index) {
      out.receipts.push_back(make_receipt(st_, it->second, st_.latest_cc));
    }
    return out;  // already replicated or in flight
  }
  if (open_) {
    tx_queue_.push_back(m.payload);
    return out;
  }
  start_replication(m.payload, out);
  return out;
}

void Node::append_entry(const LogEntry& entry) {
  Digest h = hash_step(st_.pointer_cache.back(), entry);
  st_.log.push_back(entry);
  st_.pointer_cache.push_back(h);
  st_.tip_pointer = h;
  payload_index_[sha256(std::span<const std::uint8_t>(entry.payload.data(), entry.payload.size()))] =
      entry.index;
}

void Node::start_replication(std::vector<std::uint8_t> payload, NodeOutput& out) {
  LogEntry entry{st_.current_term, st_.tip_index() + 1, std::move(payload)};
  append_entry(entry);
  Signature sig = sign(st_.tip_pointer);
  st_.leader_sigs[st_.current_term] = sig;
  sig_at_[entry.index] = sig;
  MsgAppendEntries ae;
  ae.entries.push_back(st_.log.back());
  ae.sigs[st_.current_term] = sig;
  ae.lcs[st_.current_term] = st_.election_list.at(st_.current_term);
  out.broadcast(std::move(ae));
  out.timers.push_back({TimerKind::LeaderHeartbeat, false,
                        cfg_.live ? cfg_.live_timers.heart : cfg_.tau_heart});
  open_ = OpenReplication{st_.tip_pointer, st_.current_term, entry.index, {}};
}

NodeOutput Node::on_ack(NodeId sender, const MsgAck& m, SimTime) {
  NodeOutput out;
  if (st_.role != Role::Leader || !open_) return out;
  if (m.pointer != open_->pointer) return out;  // ack on a stale pointer
  if (m.sig.signer != sender || sender == st_.id) return out;
  if (!registry_->verify(sender, m.pointer, m.sig)) return out;
  for (const Signature& a : open_->acks) {
    if (a.signer == sender) return out;
  }
  open_->acks.push_back(m.sig);
  if (open_->acks.size() < cfg_.f) return out;

  std::vector<Signature> quorum(open_->acks.begin(), open_->acks.begin() + cfg_.f);
  CommitCert cc = assemble_commit_cert(open_->term, open_->index, open_->pointer, quorum,
                                       sig_at_.at(open_->index), *registry_, cfg_.f);
  LogIndex start = open_->index;
  open_.reset();
  mark_committed(cc, out);
  out.broadcast(MsgCommit{cc});
  out.timers.push_back({TimerKind::LeaderHeartbeat, false,
                        cfg_.live ? cfg_.live_timers.heart : cfg_.tau_heart});
  out.receipts.push_back(make_receipt(st_, start, cc));
  if (!tx_queue_.empty()) {
    std::vector<std::uint8_t> next = std::move(tx_queue_.front());
    tx_queue_.pop_front();
    start_replication(std::move(next), out);
  }
  return out;
}

NodeOutput Node::on_log_sync_req(NodeId sender, const MsgLogSyncReq& m, SimTime) {
  NodeOutput out;
  if (st_.role != Role::Leader) return out;
  if (m.term > st_.current_term || m.index > st_.tip_index() ||
      st_.log[m.index].term != m.term) {
    // conflicts with the requester's committed prefix: drop
    out.send(sender, MsgReject{});
    return out;
  }
  if (m.index == st_.tip_index()) {
    out.send(sender, MsgReject{});
    return out;
  }
  MsgAppendEntries ae;
  ae.entries.assign(st_.log.begin() + static_cast<std::ptrdiff_t>(m.index) + 1, st_.log.end());
  for (const LogEntry& e : ae.entries) {
    if (!ae.sigs.count(e.term)) {
      ae.sigs[e.term] = st_.leader_sigs.at(e.term);
      ae.lcs[e.term] = st_.election_list.at(e.term);
    }
  }
  if (m.term < ae.entries.front().term && st_.leader_sigs.count(m.term)) {
    ae.sigs[m.term] = st_.leader_sigs.at(m.term);  // lets the requester verify its base
  }
  out.send(sender, std::move(ae));
  return out;
}

bool Node::verify_term_tail_sig(const Signature& sig, const Digest& h, const LeaderCert& lc) const {
  return sig.signer == lc.request.leader && registry_->verify(sig.signer, h, sig);
}

NodeOutput Node::on_append_entries(NodeId sender, const MsgAppendEntries& m, SimTime) {
  NodeOutput out;
  if (st_.role != Role::Follower || leader_ != sender) return out;
  if (m.entries.empty()) return out;
  arm_follower_timer(out);

  const LogEntry& head = m.entries.front();
  const LogEntry& tail = m.entries.back();
  if (!fresher_than({tail.term, tail.index}, st_.tail_freshness())) {
    out.send(sender, MsgReject{});
    return out;
  }
  if (head.index <= st_.latest_cc.index || head.term < st_.latest_cc.term) {
    out.send(sender, MsgReject{});
    return out;
  }
  if (head.index > st_.tip_index() + 1) {
    out.send(sender, sync_request());
    return out;
  }

  // Predecessor gate: a batch that opens a newer term must prove the local
  // predecessor was its term's final entry, via the creator's signature from
  // the message or the locally stored one.
  LogIndex i = head.index - 1;
  Term t = st_.log[i].term;
  Digest h = st_.pointer_cache[i];
  bool verified = false;
  if (t < head.term && i > 0) {  // the init entry needs no creator signature
    auto lc_it = st_.election_list.find(t);
    if (lc_it != st_.election_list.end()) {
      auto sig_it = m.sigs.find(t);
      if (sig_it != m.sigs.end() && verify_term_tail_sig(sig_it->second, h, lc_it->second)) {
        verified = true;
      } else {
        auto local = st_.leader_sigs.find(t);
        if (local != st_.leader_sigs.end() &&
            verify_term_tail_sig(local->second, h, lc_it->second)) {
          verified = true;
        }
      }
    }
    if (!verified) {
      out.send(sender, sync_request());
      return out;
    }
  }

  // Validate the batch: contiguous indices, non-decreasing terms, per-term
  // creator signatures over the recomputed pointers, per-term LCs that agree
  // with anything stored and chain onto the previous term's tip.
  Digest h_prev_term = h;
  for (std::size_t k = 0; k < m.entries.size(); ++k) {
    const LogEntry& e = m.entries[k];
    if (e.index != i + 1 || t > e.term) {
      out.send(sender, MsgReject{});
      return out;
    }
    i = e.index;
    t = e.term;
    h = hash_step(h, e);
    bool term_tail = (k + 1 == m.entries.size()) || (t < m.entries[k + 1].term);
    if (!term_tail) continue;

    auto sig_it = m.sigs.find(t);
    auto lc_it = m.lcs.find(t);
    if (sig_it == m.sigs.end() || lc_it == m.lcs.end()) {
      out.send(sender, MsgReject{});
      return out;
    }
    if (verify_term_tail_sig(sig_it->second, h, lc_it->second)) {
      verified = true;
    } else if (verified) {
      out.send(sender, MsgReject{});
      return out;
    } else {
      out.send(sender, sync_request());
      return out;
    }
    if (!verify_quorum_cert(lc_it->second, *registry_, cfg_.f)) {
      out.send(sender, MsgReject{});
      return out;
    }
    auto stored = st_.election_list.find(t);
    if (stored != st_.election_list.end()) {
      if (!(stored->second == lc_it->second)) {
        out.send(sender, MsgReject{});
        return out;
      }
    } else if (lc_it->second.request.pointer != h_prev_term) {
      out.send(sender, MsgReject{});
      return out;
    }
    h_prev_term = h;
  }

  splice_entries(m, out);
  out.send(sender, MsgAck{st_.tip_pointer, sign(st_.tip_pointer)});
  return out;
}

void Node::splice_entries(const MsgAppendEntries& m, NodeOutput& out) {
  LogIndex head = m.entries.front().index;
  // replace the uncommitted suffix from `head` on
  while (st_.log.size() > head) {
    const LogEntry& victim = st_.log.back();
    payload_index_.erase(
        sha256(std::span<const std::uint8_t>(victim.payload.data(), victim.payload.size())));
    sig_at_.erase(victim.index);
    st_.log.pop_back();
    st_.pointer_cache.pop_back();
  }
  for (const LogEntry& e : m.entries) append_entry(e);

  for (const auto& [term, sig] : m.sigs) {
    auto lc = m.lcs.find(term);
    if (lc == m.lcs.end()) continue;
    st_.leader_sigs[term] = sig;
    if (!st_.election_list.count(term)) st_.election_list[term] = lc->second;
  }
  // remember the creator signature for each batch term tail
  for (std::size_t k = 0; k < m.entries.size(); ++k) {
    bool term_tail = (k + 1 == m.entries.size()) || (m.entries[k].term < m.entries[k + 1].term);
    if (!term_tail) continue;
    auto sig_it = m.sigs.find(m.entries[k].term);
    if (sig_it != m.sigs.end()) sig_at_[m.entries[k].index] = sig_it->second;
  }
  if (cfg_.live) check_request_watches();
  (void)out;
}

NodeOutput Node::on_commit(NodeId sender, const MsgCommit& m, SimTime) {
  NodeOutput out;
  if (st_.role != Role::Follower || leader_ != sender) return out;
  const CommitCert& cc = m.cc;
  if (cc.index <= st_.latest_cc.index || cc.term < st_.latest_cc.term) {
    out.send(sender, MsgReject{});
    return out;
  }
  if (cc.index > st_.tip_index() || cc.term > st_.log[cc.index].term) {
    out.send(sender, sync_request());
    return out;
  }
  if (cc.term < st_.log[cc.index].term) {
    out.send(sender, MsgReject{});
    return out;
  }
  if (cc.pointer != st_.pointer_cache[cc.index] || !verify_quorum_cert(cc, *registry_, cfg_.f)) {
    out.send(sender, MsgReject{});
    return out;
  }
  mark_committed(cc, out);
  out.send(sender, MsgCommitted{});
  return out;
}

void Node::mark_committed(const CommitCert& cc, NodeOutput& out) {
  LogIndex prev = st_.latest_cc.index;
  st_.latest_cc = cc;
  st_.committed_pointer = st_.pointer_cache[cc.index];
  for (LogIndex k = prev + 1; k <= cc.index; ++k) {
    Term t = st_.log[k].term;
    bool term_final_in_log = (k == st_.tip_index()) || (st_.log[k + 1].term > t);
    if (term_final_in_log) {
      st_.committed_sigs[t] = st_.leader_sigs.at(t);
    } else if (k == cc.index) {
      auto it = sig_at_.find(k);
      st_.committed_sigs[t] = (it != sig_at_.end()) ? it->second : st_.leader_sigs.at(t);
    }
  }
  while (!sig_at_.empty() && sig_at_.begin()->first <= cc.index) sig_at_.erase(sig_at_.begin());
  if (cfg_.live) check_request_watches();
  out.notes.push_back({Note::Kind::Committed, cc.term, st_.id, cc.index});
}

void Node::check_request_watches() {
  for (auto it = request_watch_.begin(); it != request_watch_.end();) {
    auto pos = payload_index_.find(it->first);
    if (pos != payload_index_.end() && pos->second <= st_.latest_cc.index) {
      it = request_watch_.erase(it);  // replicated and covered by a CC
    } else {
      ++it;
    }
  }
}

Node::AuditData Node::audit_data() const {
  AuditData d;
  d.node = st_.id;
  d.log.assign(st_.log.begin(), st_.log.begin() + static_cast<std::ptrdiff_t>(st_.latest_cc.index) + 1);
  d.elections = st_.election_list;
  d.cc = st_.latest_cc;
  d.sigs = st_.committed_sigs;
  return d;
}

}  // namespace fraft
