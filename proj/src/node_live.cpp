#include <stdexcept>

#include "fraft/live.hpp"
#include "fraft/node.hpp"

namespace fraft {

Ratio expected_election_rounds(std::uint64_t n) {
  if (n < 3 || n % 2 == 0) throw std::invalid_argument("n must be odd and >= 3");
  std::uint64_t f = (n - 1) / 2;
  return {n + 1, f + 2};
}

std::uint64_t rounds_until_electable(std::span<const std::uint32_t> permutation, std::uint64_t f) {
  for (std::size_t pos = 0; pos < permutation.size(); ++pos) {
    if (permutation[pos] <= f + 1) return pos + 1;
  }
  return permutation.size() + 1;
}

// ---------------------------------------------------------------------------
// Prevote

bool Node::store_prevote(const Prevote& pv) {
  if (pv.term <= st_.current_term) return false;
  if (!registry_->verify(pv.sig.signer, prevote_digest(pv.term), pv.sig)) return false;
  auto& bucket = prevote_store_[pv.term];
  for (const Prevote& held : bucket) {
    if (held.sig.signer == pv.sig.signer) return false;
  }
  bucket.push_back(pv);
  return true;
}

NodeOutput Node::prevote_for(Term target, PrevoteCondition, SimTime now) {
  NodeOutput out;
  if (prevotes_sent_.count(target)) return out;  // one prevote per term
  prevotes_sent_.insert(target);
  Prevote pv{target, sign(prevote_digest(target))};
  store_prevote(pv);
  out.broadcast(MsgPrevote{prevote_store_[target]});
  out.notes.push_back({Note::Kind::PrevoteSent, target});
  maybe_enter_election(out, now);
  return out;
}

NodeOutput Node::on_prevote(NodeId, const MsgPrevote& m, SimTime now) {
  NodeOutput out;
  if (!cfg_.live) return out;
  for (const Prevote& pv : m.prevotes) store_prevote(pv);
  maybe_enter_election(out, now);
  return out;
}

void Node::maybe_enter_election(NodeOutput& out, SimTime now) {
  // Enter the highest term whose prevote bundle reached the threshold; a
  // bundle for a later term supersedes the wait on an earlier one.
  Term best = 0;
  for (const auto& [term, bucket] : prevote_store_) {
    if (term > st_.current_term && bucket.size() >= cfg_.prevote_threshold) best = term;
  }
  if (best != 0) enter_election(best, out, now);
}

void Node::enter_election(Term term, NodeOutput& out, SimTime) {
  out.broadcast(MsgPrevote{prevote_store_[term]});
  st_.current_term = term;
  leader_.reset();
  open_.reset();
  tx_queue_.clear();
  votes_.clear();
  rejections_.clear();
  request_watch_.clear();  // the grievance was against the deposed leader
  election_term_ = term;
  prevote_store_.erase(prevote_store_.begin(), prevote_store_.upper_bound(term));
  out.timers.push_back({TimerKind::HeartbeatWatch, true});
  out.notes.push_back({Note::Kind::ElectionEntered, term});

  if (round_robin_candidate(term, cfg_.n) == st_.id) {
    st_.role = Role::Candidate;
    cand_req_ = VoteRequest{st_.id, term, st_.tail_freshness(), st_.tip_pointer};
    out.broadcast(MsgVoteRequest{*cand_req_});
    out.timers.push_back({TimerKind::CandidateWindow, false, cfg_.live_timers.cand});
    out.notes.push_back({Note::Kind::BecameCandidate, term});
  } else {
    st_.role = Role::Follower;
    out.timers.push_back({TimerKind::VoterWindow, false, cfg_.live_timers.voter});
    auto pending = pending_vote_reqs_.find(term);
    if (pending != pending_vote_reqs_.end()) {
      VoteRequest req = pending->second;
      pending_vote_reqs_.erase(pending);
      NodeOutput reply = on_vote_request_live(req.leader, MsgVoteRequest{req}, 0);
      out.merge(std::move(reply));
    }
  }
  pending_vote_reqs_.erase(pending_vote_reqs_.begin(), pending_vote_reqs_.upper_bound(term));
}

NodeOutput Node::on_vote_request_live(NodeId sender, const MsgVoteRequest& m, SimTime) {
  NodeOutput out;
  const VoteRequest& req = m.req;
  if (req.leader != sender || req.leader != round_robin_candidate(req.term, cfg_.n)) return out;
  if (req.term < st_.current_term) return out;
  if (req.term > st_.current_term || election_term_ != req.term) {
    // not inside that election yet: hold the request until the prevote
    // bundle arrives
    if (req.term > st_.current_term) pending_vote_reqs_[req.term] = req;
    return out;
  }
  if (st_.voted_for && st_.voted_for->second >= req.term) return out;
  if (staler_than(req.freshness, st_.tail_freshness())) {
    out.send(sender, MsgReject{});
    return out;
  }
  st_.voted_for = {req.leader, req.term};
  out.send(sender, MsgVote{sign(req.digest())});
  out.notes.push_back({Note::Kind::VoteGranted, req.term, req.leader});
  return out;
}

void Node::admit_leader(const LeaderCert& lc, NodeOutput& out) {
  if (lc.request.leader != round_robin_candidate(lc.request.term, cfg_.n)) return;
  bool new_leadership = leader_ != lc.request.leader || st_.current_term != lc.request.term;
  st_.role = Role::Follower;
  st_.current_term = lc.request.term;
  leader_ = lc.request.leader;
  st_.election_list[lc.request.term] = lc;
  election_term_.reset();
  open_.reset();
  tx_queue_.clear();
  if (new_leadership) request_watch_.clear();  // fresh timeout budget per leader
  out.timers.push_back({TimerKind::VoterWindow, true});
  out.timers.push_back({TimerKind::CandidateWindow, true});
  arm_follower_timer(out);
  out.notes.push_back({Note::Kind::AdmittedLeader, lc.request.term, lc.request.leader});
}

}  // namespace fraft
