#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "fraft/crypto.hpp"

namespace fraft {

using Term = std::uint64_t;
using LogIndex = std::uint64_t;
using Json = nlohmann::ordered_json;

// Index 0 is reserved for the dummy init entry {term 0, index 0, empty
// payload}; its hash pointer is the all-zero digest and it is never hashed
// itself.
struct LogEntry {
  Term term = 0;
  LogIndex index = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const LogEntry&) const = default;
  static LogEntry init() { return {}; }
};

struct Freshness {
  Term term = 0;
  LogIndex index = 0;

  bool operator==(const Freshness&) const = default;
  auto operator<=>(const Freshness&) const = default;
};

enum class Ordering { Staler, Equal, Fresher };

Ordering compare_freshness(const Freshness& a, const Freshness& b);
inline bool fresher_than(const Freshness& a, const Freshness& b) {
  return compare_freshness(a, b) == Ordering::Fresher;
}
inline bool staler_than(const Freshness& a, const Freshness& b) {
  return compare_freshness(a, b) == Ordering::Staler;
}

// h_i = H(h_{i-1} || term_i || index_i || payload_i), h_0 = zero.
Digest hash_step(const Digest& prev, const LogEntry& entry);

// Left fold of hash_step over a contiguous run of entries. Throws
// std::invalid_argument on an index gap.
Digest chain_pointer(std::span<const LogEntry> entries, const Digest& base);

struct CommitCert {
  Term term = 0;
  LogIndex index = 0;
  Digest pointer;
  std::vector<NodeId> voters;
  std::vector<Signature> signatures;

  bool operator==(const CommitCert&) const = default;
  Freshness freshness() const { return {term, index}; }
};

struct VoteRequest {
  NodeId leader = 0;
  Term term = 0;
  Freshness freshness;
  Digest pointer;

  bool operator==(const VoteRequest&) const = default;
  Digest digest() const;
};

struct LeaderCert {
  VoteRequest request;
  std::vector<NodeId> voters;
  std::vector<Signature> signatures;

  bool operator==(const LeaderCert&) const = default;
};

struct ClientReceipt {
  std::vector<LogEntry> entries;
  Digest pointer;  // hash pointer of the first entry's predecessor
  CommitCert certificate;

  bool operator==(const ClientReceipt&) const = default;
};

// Quorum check shared by CCs and LCs: |voters| == |signatures| >= f+1,
// voters distinct, every signature valid over the cert's signed digest.
bool verify_quorum_cert(const CommitCert& cert, const KeyRegistry& registry, std::uint64_t f);
bool verify_quorum_cert(const LeaderCert& cert, const KeyRegistry& registry, std::uint64_t f);

bool verify_sig_by_id(const Signature& sig, const Digest& digest, const KeyRegistry& registry);

// Builds the CC out of the leader's own signature plus at least f follower
// acknowledgements, all over `pointer`. Throws on duplicate voters, bad
// signatures or a short quorum.
CommitCert assemble_commit_cert(Term term, LogIndex index, const Digest& pointer,
                                std::span<const Signature> acks, const Signature& own,
                                const KeyRegistry& registry, std::uint64_t f);

// The genesis certificate over the init entry: nodes 0..f sign the zero
// digest. Gives every fresh node a latest CC so audits treat an empty log
// uniformly.
CommitCert genesis_commit_cert(const KeyRegistry& registry);

enum class Role { Follower, Candidate, Leader };

// Persistent protocol state. tip/committed pointers are the two cached hash
// pointers; pointer_cache keeps the full h_0..h_tip column so commit handlers
// can address h_i at any index. leader_sigs holds the creator signature over
// the latest acknowledged entry per term, committed_sigs the one over the
// latest *committed* entry per term (what a snapshot exports).
struct NodeState {
  NodeId id = 0;
  Term current_term = 0;
  std::optional<std::pair<NodeId, Term>> voted_for;
  Role role = Role::Follower;
  std::vector<LogEntry> log;
  std::vector<Digest> pointer_cache;  // pointer_cache[i] = h_i
  Digest tip_pointer;
  Digest committed_pointer;
  std::map<Term, Signature> leader_sigs;
  std::map<Term, Signature> committed_sigs;
  CommitCert latest_cc;
  std::map<Term, LeaderCert> election_list;

  Freshness tail_freshness() const {
    const LogEntry& tail = log.back();
    return {tail.term, tail.index};
  }
  LogIndex tip_index() const { return log.back().index; }
};

// make_receipt covers log[start_index .. cc.index]; the pointer anchors the
// sub-chain at the predecessor of start_index.
ClientReceipt make_receipt(const NodeState& state, LogIndex start_index, const CommitCert& cc);

bool verify_receipt(const ClientReceipt& receipt, const KeyRegistry& registry, std::uint64_t f);

// ---------------------------------------------------------------------------
// Audit verdicts

struct EvidenceDoubleVote {
  Term term = 0;
  LeaderCert lc_a;
  LeaderCert lc_b;
};

struct EvidenceForkedTerm {
  Term term = 0;
  NodeId leader = 0;
  Digest digest_a;
  Signature sig_a;
  Digest digest_b;
  Signature sig_b;
  LogIndex conflict_index = 0;
  LogEntry entry_a;
  LogEntry entry_b;
};

struct EvidenceIllegalVotePair {
  CommitCert cc;
  LeaderCert lc;
};

struct EvidenceIllegitimateData {
  NodeId node = 0;
  std::string reason;
};

using Evidence = std::variant<EvidenceDoubleVote, EvidenceForkedTerm, EvidenceIllegalVotePair,
                              EvidenceIllegitimateData>;

std::string evidence_type(const Evidence& e);

struct AuditVerdict {
  std::set<NodeId> culprits;
  std::vector<Evidence> evidence;

  bool consistent() const { return culprits.empty(); }
  static AuditVerdict clean() { return {}; }
};

// Re-checks a verdict's evidence from the evidence object plus the registry
// alone: signatures verify and the certificates conflict as claimed.
bool evidence_verifies(const Evidence& e, const KeyRegistry& registry, std::uint64_t f);

// ---------------------------------------------------------------------------
// Canonical JSON (digests and signatures as lowercase hex)

Json to_json(const LogEntry& e);
Json to_json(const CommitCert& c);
Json to_json(const VoteRequest& r);
Json to_json(const LeaderCert& c);
Json to_json(const ClientReceipt& r);
Json to_json(const Evidence& e);
Json to_json(const AuditVerdict& v);

LogEntry log_entry_from_json(const Json& j);
CommitCert commit_cert_from_json(const Json& j);
VoteRequest vote_request_from_json(const Json& j);
LeaderCert leader_cert_from_json(const Json& j);
ClientReceipt receipt_from_json(const Json& j);

}  // namespace fraft
