#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "fraft/types.hpp"

namespace fraft {

using SimTime = std::int64_t;

// Pseudo node id used as an envelope address for the client actor.
constexpr NodeId kClientId = static_cast<NodeId>(-1);

struct MsgClientTx {
  std::vector<std::uint8_t> payload;
  bool second_trial = false;
};

struct MsgAppendEntries {
  std::vector<LogEntry> entries;
  std::map<Term, Signature> sigs;   // leader signature over each term's last entry
  std::map<Term, LeaderCert> lcs;   // leader certificate per term
};

struct MsgAck {
  Digest pointer;
  Signature sig;
};

struct MsgLogSyncReq {
  Term term = 0;
  LogIndex index = 0;
  Digest pointer;
};

struct MsgCommit {
  CommitCert cc;
};

struct MsgCommitted {};
struct MsgReject {};

struct MsgVoteRequest {
  VoteRequest req;
};

struct MsgVote {
  Signature sig;
};

struct MsgLeaderCert {
  LeaderCert lc;
};

struct MsgHeartbeat {
  Term term = 0;
};

struct Prevote {
  Term term = 0;  // the term being advanced to
  Signature sig;  // over H("PREVOTE" || term)

  bool operator==(const Prevote&) const = default;
};

Digest prevote_digest(Term term);

struct MsgPrevote {
  std::vector<Prevote> prevotes;
};

using Message = std::variant<MsgClientTx, MsgAppendEntries, MsgAck, MsgLogSyncReq, MsgCommit,
                             MsgCommitted, MsgReject, MsgVoteRequest, MsgVote, MsgLeaderCert,
                             MsgHeartbeat, MsgPrevote>;

const char* message_name(const Message& m);

struct Envelope {
  NodeId to = 0;
  bool broadcast = false;  // to all other server nodes; `to` ignored
  Message msg;
};

enum class TimerKind {
  FollowerTimeout,  // base mode: randomized [tau_lo, tau_hi]
  LeaderHeartbeat,
  HeartbeatWatch,  // live A1/A2: leader went quiet
  RequestWatch,    // live A4: forwarded second trial awaiting replication + CC
  CandidateWindow, // live C: candidate timeout tau_cand
  VoterWindow,     // live B1: voter timeout tau_voter
};

struct TimerCmd {
  TimerKind kind;
  bool cancel = false;
  SimTime duration = 0;      // ignored when randomized
  bool randomized = false;   // duration sampled by the simulator from [lo, hi]
  Digest key;                // RequestWatch: payload digest
};

// Transcript-level notes emitted by handlers; the simulator folds them into
// run summaries and monitors.
struct Note {
  enum class Kind {
    BecameCandidate,
    BecameLeader,
    AdmittedLeader,
    VoteGranted,
    Committed,
    PrevoteSent,
    ElectionEntered,
  };
  Kind kind;
  Term term = 0;
  NodeId peer = 0;
  LogIndex index = 0;
};

struct NodeOutput {
  std::vector<Envelope> msgs;
  std::vector<TimerCmd> timers;
  std::vector<ClientReceipt> receipts;
  std::vector<Note> notes;

  void send(NodeId to, Message m) { msgs.push_back({to, false, std::move(m)}); }
  void broadcast(Message m) { msgs.push_back({0, true, std::move(m)}); }
  void merge(NodeOutput&& other);
};

}  // namespace fraft
